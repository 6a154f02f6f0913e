// SPDX-License-Identifier: MIT OR Apache-2.0

//! # attrlab
//!
//! Representation-geometry laboratory for condition-labeled documents.
//!
//! The crate takes per-token hidden states (from a real model via NPY files,
//! or from the built-in deterministic desk transformer), pools them into
//! document vectors, and measures how tightly each condition group clusters:
//!
//! - [`store`]: NPY v1.0 persistence, activation records, experiment manifests
//! - [`pooling`]: mean / last-token pooling and token truncation
//! - [`geometry`]: cosine distances, pair samples, centroids, probe metrics
//! - [`stats`]: Welch t, Cohen's d, Mann-Whitney U, permutation and bootstrap
//! - [`projection`]: exact t-SNE with a cosine input metric
//! - [`steering`]: centroid-difference steering vectors and keyword scoring
//! - [`synth`]: desk transformer, synthetic clusters, byte perturbation
//! - [`pipeline`]: configuration, layer reports, trajectories, JSON/Markdown/SVG output
//!
//! All randomness flows through [`prng::PrngSpec`], so every result is a pure
//! function of its inputs and seed.

pub mod error;
pub mod geometry;
pub mod matrix;
pub mod pipeline;
pub mod pooling;
pub mod prng;
pub mod projection;
pub mod stats;
pub mod steering;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use prng::PrngSpec;
