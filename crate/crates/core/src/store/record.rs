// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::path::{Path, PathBuf};

use half::f16;
use serde::{Deserialize, Serialize};

use super::npy::{self, DType, NpyArray};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// How the token dimension of a record was collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingTag {
    Raw,
    Mean,
    Last,
}

impl fmt::Display for PoolingTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingTag::Raw => "raw",
            PoolingTag::Mean => "mean",
            PoolingTag::Last => "last",
        })
    }
}

/// Hidden states of one document at one layer, per-token (T×D) or pooled (1×D).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub doc_id: String,
    pub condition: String,
    pub layer: usize,
    pub pooling: PoolingTag,
    /// Tokens in the source document (for pooled records, before pooling).
    pub token_count: usize,
    dtype: DType,
    data: Matrix,
}

impl ActivationRecord {
    /// Build and validate a record. For `DType::F16` the values are rounded to
    /// the nearest f16 so that what is held in memory is exactly what a
    /// save/load cycle produces.
    pub fn new(
        doc_id: impl Into<String>,
        condition: impl Into<String>,
        layer: usize,
        pooling: PoolingTag,
        token_count: usize,
        dtype: DType,
        mut data: Matrix,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::Validation(format!(
                "record '{doc_id}' has empty shape {:?}",
                data.shape()
            )));
        }
        if token_count == 0 {
            return Err(Error::Validation(format!("record '{doc_id}' has token_count 0")));
        }
        if pooling != PoolingTag::Raw && data.rows() != 1 {
            return Err(Error::Validation(format!(
                "pooled record '{doc_id}' must be 1xD, got {:?}",
                data.shape()
            )));
        }
        if dtype == DType::F16 {
            for v in data.as_mut_slice() {
                *v = f16::from_f32(*v).to_f32();
            }
        }
        if !data.all_finite() {
            return Err(Error::Validation(format!(
                "record '{doc_id}' layer {layer} contains non-finite values"
            )));
        }
        Ok(Self {
            doc_id,
            condition: condition.into(),
            layer,
            pooling,
            token_count,
            dtype,
            data,
        })
    }

    /// Convenience constructor for a pooled f32 vector.
    pub fn pooled(
        doc_id: impl Into<String>,
        condition: impl Into<String>,
        layer: usize,
        pooling: PoolingTag,
        token_count: usize,
        vector: &[f64],
    ) -> Result<Self> {
        let row: Vec<f32> = vector.iter().map(|&v| v as f32).collect();
        let m = Matrix::from_vec(1, row.len(), row)?;
        Self::new(doc_id, condition, layer, pooling, token_count, DType::F32, m)
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    /// The pooled vector widened to f64. Only meaningful for 1×D records.
    pub fn vector(&self) -> Vec<f64> {
        self.data.row(0).iter().map(|&v| f64::from(v)).collect()
    }

    fn to_npy(&self) -> NpyArray {
        // pooled vectors are stored 1-D, matching np.save of a pooled vector
        let shape = if self.pooling == PoolingTag::Raw {
            vec![self.data.rows(), self.data.cols()]
        } else {
            vec![self.data.cols()]
        };
        NpyArray {
            shape,
            dtype: self.dtype,
            data: self.data.as_slice().to_vec(),
        }
    }
}

/// Write a record as NPY v1.0, creating parent directories.
pub fn write_array(record: &ActivationRecord, path: &Path) -> Result<()> {
    if !record.data.all_finite() {
        return Err(Error::Validation(format!(
            "refusing to write non-finite values for '{}'",
            record.doc_id
        )));
    }
    npy::write_npy(path, &record.to_npy())
}

/// Read an NPY file into a record. Metadata is recovered from the
/// `<doc_id>/layer_<L>.<key>.npy` naming convention when present; otherwise the
/// file stem becomes the doc id and the layer is 0.
pub fn read_array(path: &Path) -> Result<ActivationRecord> {
    let arr = npy::read_npy(path)?;
    let name = FileName::parse(path);
    let (rows, cols, pooling) = match arr.shape.as_slice() {
        [d] => (1, *d, name.pooling.unwrap_or(PoolingTag::Mean)),
        [t, d] => {
            let tag = name.pooling.unwrap_or(PoolingTag::Raw);
            let tag = if tag != PoolingTag::Raw && *t != 1 {
                PoolingTag::Raw
            } else {
                tag
            };
            (*t, *d, tag)
        }
        _ => unreachable!("decoder only yields rank 1 or 2"),
    };
    let matrix = Matrix::from_vec(rows, cols, arr.data)?;
    let token_count = if pooling == PoolingTag::Raw { rows } else { 1 };
    ActivationRecord::new(
        name.doc_id,
        String::new(),
        name.layer,
        pooling,
        token_count,
        arr.dtype,
        matrix,
    )
}

/// File name for a document/layer/pooling key inside a document directory.
pub fn activation_file(doc_dir: &Path, layer: usize, key: &str) -> PathBuf {
    doc_dir.join(format!("layer_{layer}.{key}.npy"))
}

struct FileName {
    doc_id: String,
    layer: usize,
    pooling: Option<PoolingTag>,
}

impl FileName {
    fn parse(path: &Path) -> Self {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let parsed = stem.strip_prefix("layer_").and_then(|rest| {
            let (layer, key) = rest.split_once('.')?;
            let layer = layer.parse().ok()?;
            let strategy = key.split('-').next()?;
            let pooling = match strategy {
                "raw" => PoolingTag::Raw,
                "mean" => PoolingTag::Mean,
                "last" => PoolingTag::Last,
                _ => return None,
            };
            Some((layer, pooling))
        });
        match parsed {
            Some((layer, pooling)) => FileName {
                doc_id: path
                    .parent()
                    .and_then(|p| p.file_name())
                    .and_then(|s| s.to_str())
                    .unwrap_or(&stem)
                    .to_string(),
                layer,
                pooling: Some(pooling),
            },
            None => FileName {
                doc_id: stem,
                layer: 0,
                pooling: None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let m = Matrix::from_vec(1, 2, vec![1.0, f32::NAN]).unwrap();
        assert!(matches!(
            ActivationRecord::new("d", "A", 0, PoolingTag::Mean, 1, DType::F32, m),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn f16_overflow_is_non_finite() {
        let m = Matrix::from_vec(1, 1, vec![1.0e6]).unwrap();
        assert!(ActivationRecord::new("d", "A", 0, PoolingTag::Mean, 1, DType::F16, m).is_err());
    }

    #[test]
    fn pooled_must_be_single_row() {
        let m = Matrix::zeros(2, 3);
        assert!(ActivationRecord::new("d", "A", 0, PoolingTag::Last, 2, DType::F32, m).is_err());
    }

    #[test]
    fn naming_convention_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let doc_dir = dir.path().join("B3");
        let path = activation_file(&doc_dir, 16, "last-t512");
        let rec = ActivationRecord::pooled("B3", "B", 16, PoolingTag::Last, 900, &[0.5, -1.0]).unwrap();
        write_array(&rec, &path).unwrap();
        let back = read_array(&path).unwrap();
        assert_eq!(back.doc_id, "B3");
        assert_eq!(back.layer, 16);
        assert_eq!(back.pooling, PoolingTag::Last);
        assert_eq!(back.data(), rec.data());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_array(Path::new("/nonexistent/x.npy")),
            Err(Error::Io { .. })
        ));
    }
}
