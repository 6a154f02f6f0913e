// SPDX-License-Identifier: MIT OR Apache-2.0

//! Persistence: NPY arrays, activation records and experiment manifests.

pub mod manifest;
pub mod npy;
pub mod record;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use manifest::{validate_token_budget, ConditionEntry, DocEntry, ExperimentManifest, TokenCheck};
pub use npy::{read_npy, write_npy, DType, NpyArray};
pub use record::{activation_file, read_array, write_array, ActivationRecord, PoolingTag};

/// Parse JSON text, reporting the field path of the first mismatch.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Error::Json {
            path: path.to_path_buf(),
            message: if at == "." {
                e.inner().to_string()
            } else {
                format!("at {at}: {}", e.inner())
            },
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
