// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic data sources: the desk transformer, cluster generators and
//! byte-level perturbations, plus the desk corpus writer.

pub mod clusters;
pub mod corpus;
pub mod desk_model;
pub mod perturb;

pub use clusters::{synth_clusters, ClusterSpec, SyntheticClusters};
pub use corpus::{extract_desk, write_clusters, DeskCorpus, DeskCorpusSpec, DeskDoc, ExtractOptions};
pub use desk_model::{desk_forward, DeskModel, DeskModelConfig};
pub use perturb::{paraphrase_perturb, random_bytes};
