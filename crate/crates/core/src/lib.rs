//! Glass-box additive models for understanding missing values.
//!
//! `missinglens` trains bagged, cyclically boosted additive models whose
//! per-feature shape functions are piecewise constant over bins, and uses
//! those shapes to test whether values are missing completely at random, to
//! predict missingness, to audit imputations for harmful spikes, and to edit
//! models where missing data misled them.

pub mod edit;
pub mod error;
pub mod gam;
pub mod impute;
pub mod missingness;
pub mod seed;
pub mod synth;
pub mod table;
pub mod trees;

pub use error::{Error, Result};

// The guide's code blocks run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/shapes.md")]
    mod shapes {}
    #[doc = include_str!("../../../book/src/mcar.md")]
    mod mcar {}
    #[doc = include_str!("../../../book/src/predicting.md")]
    mod predicting {}
    #[doc = include_str!("../../../book/src/imputation.md")]
    mod imputation {}
    #[doc = include_str!("../../../book/src/editing.md")]
    mod editing {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
