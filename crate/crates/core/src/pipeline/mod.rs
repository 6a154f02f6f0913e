// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end analysis: configuration, vector loading, the test battery,
//! replay mode, trajectories and report output.

pub mod analysis;
pub mod config;
pub mod loader;
pub mod output;
pub mod replay;
pub mod report;
pub mod svg;
pub mod trajectory;

pub use analysis::{analyze_samples, run_analysis, AnalysisOutput, GroupStats, LayerReport, TestSettings};
pub use config::{Comparison, ExperimentConfig, Overrides};
pub use loader::VectorTable;
pub use output::{write_analysis, write_document, MARKDOWN_FILE, RESULTS_FILE};
pub use replay::{run_replay, synthesize_sample, ReplayFixture, SampleSource};
pub use report::{emit_results_json, render_markdown, validate_results, validate_results_file, ResultsDocument};
pub use trajectory::{classify_sequence, pair_trajectories, TrajectoryReport};
