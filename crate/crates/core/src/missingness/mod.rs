//! Diagnostics of the missing-value mechanism: a test of whether a feature's
//! missing bin matters to the outcome, Little's test, models that predict
//! missingness, and shapes that separate observed from imputed cells.

mod irls;
mod little;
mod metrics;
mod predict;
mod separated;
mod wald;

pub use irls::{fit_logistic_irls, fit_logistic_irls_penalized, IrlsFit, IrlsOptions, SparseDesign};
pub use little::{littles_test, LittleReport};
pub use metrics::{accuracy, auc};
pub use predict::{
    fit_missingness_model, indicator_name, missingness_table, stratified_split, MissingnessConfig,
    MissingnessReport,
};
pub use separated::{
    offset_encode, separated_shape, separation_offset, split_shape, OffsetEncoding, SeparatedCurves,
    SeparatedShape, ShapeSegment,
};
pub use wald::{wald_mcar_test, wald_report, WaldReport};
