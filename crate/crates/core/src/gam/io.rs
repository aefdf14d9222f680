use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::GamModel;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "missinglens-gam";

#[derive(Serialize)]
struct FileOut<'a> {
    format: &'a str,
    version: u32,
    model: &'a GamModel,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

#[derive(Deserialize)]
struct FileIn {
    model: GamModel,
}

pub fn model_to_json(model: &GamModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&FileOut {
        format: FORMAT_NAME,
        version: MODEL_FORMAT_VERSION,
        model,
    })?)
}

pub fn model_from_json(text: &str) -> Result<GamModel> {
    let header: Header =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(format!("corrupt model file: {e}")))?;
    if header.format.as_deref() != Some(FORMAT_NAME) {
        return Err(Error::ModelFile("not a missinglens model file".into()));
    }
    match header.version {
        Some(MODEL_FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::ModelFile(format!(
                "unsupported schema version {v} (expected {MODEL_FORMAT_VERSION})"
            )))
        }
        None => return Err(Error::ModelFile("missing schema version".into())),
    }
    let file: FileIn =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(format!("corrupt model file: {e}")))?;
    Ok(file.model)
}

pub fn save_model(model: &GamModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GamModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}
