// SPDX-License-Identifier: MIT OR Apache-2.0

//! Collapse per-token hidden states into one vector per document.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::store::PoolingTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingStrategy {
    Mean,
    Last,
}

/// Pooling strategy plus optional truncation to the first `K` tokens.
///
/// Serialized as `{"strategy": "mean", "truncate_to": 512}`; a missing,
/// `null` or `"full"` truncation means the whole document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolingSpec {
    pub strategy: PoolingStrategy,
    #[serde(
        default,
        serialize_with = "ser_truncate",
        deserialize_with = "de_truncate"
    )]
    pub truncate_to: Option<usize>,
}

fn ser_truncate<S: Serializer>(v: &Option<usize>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(k) => s.serialize_u64(*k as u64),
        None => s.serialize_str("full"),
    }
}

fn de_truncate<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Count(usize),
        Word(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Word(w)) if w == "full" => Ok(None),
        Some(Raw::Word(w)) => Err(serde::de::Error::custom(format!(
            "truncate_to must be a positive integer or \"full\", got \"{w}\""
        ))),
        Some(Raw::Count(0)) => Err(serde::de::Error::custom("truncate_to must be >= 1")),
        Some(Raw::Count(k)) => Ok(Some(k)),
    }
}

impl PoolingSpec {
    pub const MEAN_FULL: PoolingSpec = PoolingSpec {
        strategy: PoolingStrategy::Mean,
        truncate_to: None,
    };

    pub fn new(strategy: PoolingStrategy, truncate_to: Option<usize>) -> Result<Self> {
        if truncate_to == Some(0) {
            return Err(Error::Config("truncate_to must be >= 1".into()));
        }
        Ok(Self {
            strategy,
            truncate_to,
        })
    }

    /// File key used for pre-pooled activations, e.g. `mean` or `last-t512`.
    pub fn key(&self) -> String {
        let base = match self.strategy {
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::Last => "last",
        };
        match self.truncate_to {
            Some(k) => format!("{base}-t{k}"),
            None => base.to_string(),
        }
    }

    pub fn tag(&self) -> PoolingTag {
        match self.strategy {
            PoolingStrategy::Mean => PoolingTag::Mean,
            PoolingStrategy::Last => PoolingTag::Last,
        }
    }

    /// Truncate (if requested) and pool.
    pub fn apply(&self, hidden: &Matrix) -> Result<Vec<f64>> {
        let truncated;
        let input = match self.truncate_to {
            Some(k) => {
                truncated = truncate_tokens(hidden, k)?;
                &truncated
            }
            None => hidden,
        };
        match self.strategy {
            PoolingStrategy::Mean => mean_pool(input),
            PoolingStrategy::Last => last_token_pool(input),
        }
    }
}

impl fmt::Display for PoolingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.strategy {
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::Last => "last",
        };
        match self.truncate_to {
            Some(k) => write!(f, "{s}/{k}"),
            None => write!(f, "{s}/full"),
        }
    }
}

/// Parses the CLI form `NAME[:K]`, e.g. `mean`, `last:512`, `mean:full`.
impl FromStr for PoolingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, k) = match s.split_once(':') {
            Some((n, k)) => (n, Some(k)),
            None => (s, None),
        };
        let strategy = match name.trim() {
            "mean" => PoolingStrategy::Mean,
            "last" => PoolingStrategy::Last,
            other => return Err(Error::Config(format!("unknown pooling strategy '{other}'"))),
        };
        let truncate_to = match k.map(str::trim) {
            None | Some("full") => None,
            Some(k) => Some(
                k.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad truncation '{k}'")))?,
            ),
        };
        PoolingSpec::new(strategy, truncate_to)
    }
}

fn check_nonempty(hidden: &Matrix) -> Result<()> {
    if hidden.rows() == 0 || hidden.cols() == 0 {
        return Err(Error::Domain(format!(
            "cannot pool an empty matrix of shape {:?}",
            hidden.shape()
        )));
    }
    Ok(())
}

/// Column means, accumulated in f64.
pub fn mean_pool(hidden: &Matrix) -> Result<Vec<f64>> {
    check_nonempty(hidden)?;
    let mut acc = vec![0.0f64; hidden.cols()];
    for row in hidden.iter_rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += f64::from(v);
        }
    }
    let t = hidden.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= t);
    Ok(acc)
}

/// The final row, unchanged.
pub fn last_token_pool(hidden: &Matrix) -> Result<Vec<f64>> {
    check_nonempty(hidden)?;
    Ok(hidden
        .row(hidden.rows() - 1)
        .iter()
        .map(|&v| f64::from(v))
        .collect())
}

/// The first `min(T, k)` rows in order.
pub fn truncate_tokens(hidden: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::Domain("truncation length must be >= 1".into()));
    }
    Ok(hidden.head_rows(k))
}
