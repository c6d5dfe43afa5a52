//! Trained-model files: one JSON document carrying a format tag, the layout
//! version, and the model (spec, schema, parameters, training metadata).

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use seqmia_core::classifiers::{TrainedModel, MODEL_FORMAT_VERSION};

use crate::error::{Result, ToolError};
use crate::files::{read_json, write_json};

pub const MODEL_FORMAT: &str = "seqmia-model";

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    model: Value,
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    write_json(
        path,
        &ModelFileRef {
            format: MODEL_FORMAT,
            version: MODEL_FORMAT_VERSION,
            model,
        },
    )
}

/// Fails on anything but a complete model of the current layout version.
pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let file: ModelFile = read_json(path)?;
    if file.format != MODEL_FORMAT {
        return Err(ToolError::corrupt(
            path,
            format!("not a model file (format {:?})", file.format),
        ));
    }
    if file.version != MODEL_FORMAT_VERSION {
        return Err(ToolError::corrupt(
            path,
            format!(
                "model layout version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                file.version
            ),
        ));
    }
    serde_json::from_value(file.model).map_err(|e| ToolError::corrupt(path, e.to_string()))
}
