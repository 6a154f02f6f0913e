// SPDX-License-Identifier: MIT OR Apache-2.0

//! `attrlab` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attrlab::pipeline::config::{Comparison, ProjectionJob, SteeringSpec, TrajectorySpec};
use attrlab::pipeline::output::write_text;
use attrlab::pipeline::{
    render_markdown, run_analysis, run_replay, validate_results_file, write_analysis, write_document,
    ExperimentConfig, Overrides, ReplayFixture, VectorTable,
};
use attrlab::pooling::PoolingSpec;
use attrlab::projection::tsne;
use attrlab::steering::{
    apply_steering, compute_steering_vector, score_sweep, summarize_sweep_result, RecordedResponse,
    ScoringRubric,
};
use attrlab::store::{read_array, read_json, write_array, write_json, ActivationRecord, ExperimentManifest};
use attrlab::synth::{
    extract_desk, synth_clusters, write_clusters, ClusterSpec, DeskCorpus, DeskCorpusSpec, DeskModelConfig,
    ExtractOptions,
};
use attrlab::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "attrlab", version, about = "Representation-geometry analysis of condition-labeled documents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides ATTRLAB_OUT and the config.
    #[arg(long, env = "ATTRLAB_OUT")]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated layer list, e.g. 8,16,24.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Pooling override, NAME[:K], e.g. mean or last:512.
    #[arg(long)]
    pooling: Option<PoolingSpec>,
    /// Replay fixture used instead of activations.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic unit-vector clusters as pooled activations.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 0.30)]
        spread: f64,
        #[arg(long, default_value_t = 0.26)]
        separation: f64,
    },
    /// Run the desk transformer over a generated corpus and write activations.
    ExtractDesk {
        #[command(flatten)]
        common: Common,
        /// Shared signal only in the first 256 bytes, followed by unrelated tails.
        #[arg(long)]
        early_signal: bool,
        /// Also write per-token hidden states.
        #[arg(long)]
        store_raw: bool,
    },
    /// Run the statistical analysis and write results, Markdown and figures.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// t-SNE projection of the configured condition groups.
    Project {
        #[command(flatten)]
        common: Common,
    },
    /// Compute the steering vector; optionally inject it into a raw activation file.
    Steer {
        #[command(flatten)]
        common: Common,
        /// Per-token activation file to steer at every alpha of the config grid.
        #[arg(long)]
        apply: Option<PathBuf>,
    },
    /// Keyword-score recorded responses and summarise the alpha sweep.
    Score {
        #[command(flatten)]
        common: Common,
        /// JSON list of recorded responses.
        #[arg(long)]
        responses: PathBuf,
        /// Rubric JSON; the built-in rubric when omitted.
        #[arg(long)]
        rubric: Option<PathBuf>,
        #[arg(long, default_value = "baseline")]
        baseline: String,
        #[arg(long, default_value = "steered")]
        steered: String,
        #[arg(long, default_value = "full_doc")]
        full: String,
    },
    /// Validate a results file and re-render Markdown and figures from it.
    Report {
        #[command(flatten)]
        common: Common,
        /// results.json to validate; defaults to <out>/results.json.
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

/// Config for `extract-desk`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DeskRunConfig {
    corpus: DeskCorpusSpec,
    model: DeskModelConfig,
    extract: ExtractOptions,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        seed: c.seed,
        layers: c.layers.clone(),
        pooling: c.pooling,
        replay: c.replay.clone(),
        output_dir: c.out.clone(),
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if c.replay.is_some() => ExperimentConfig {
            replay: c.replay.clone(),
            ..Default::default()
        },
        None => return Err(Error::Config("--config is required".into())),
    };
    cfg.apply(&overrides(c))?;
    Ok(cfg)
}

/// `--out` / ATTRLAB_OUT win; otherwise the config's directory, resolved
/// against the config file.
fn out_dir(c: &Common, cfg: Option<&ExperimentConfig>, fallback: &str) -> PathBuf {
    if let Some(o) = &c.out {
        return o.clone();
    }
    match cfg {
        Some(cfg) => cfg.resolve(&cfg.output_dir),
        None => PathBuf::from(fallback),
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { common, k, n, dim, spread, separation } => {
            let mut spec = match &common.config {
                Some(p) => read_json::<ClusterSpec>(p)?,
                None => ClusterSpec {
                    k,
                    n_per_cluster: n,
                    dim,
                    within_spread: spread,
                    between_separation: separation,
                    seed: 42,
                },
            };
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            let out = out_dir(&common, None, "synth");
            let clusters = synth_clusters(&spec)?;
            write_clusters(&clusters, spec.seed, &out)?;
            #[derive(Serialize)]
            struct Expectations<'a> {
                spec: &'a ClusterSpec,
                expected_within: f64,
                expected_between: &'a [f64],
            }
            write_json(
                &out.join("expectations.json"),
                &Expectations {
                    spec: &spec,
                    expected_within: clusters.expected_within,
                    expected_between: &clusters.expected_between,
                },
            )?;
            let comparisons = (1..spec.k)
                .map(|i| Comparison::WithinVsBetween {
                    name: format!("cluster_0_vs_{i}"),
                    within: vec!["cluster_0".into()],
                    between: format!("cluster_{i}"),
                })
                .collect();
            let cfg = ExperimentConfig {
                manifest: Some("manifest.json".into()),
                comparisons,
                prng: attrlab::PrngSpec::new(spec.seed),
                output_dir: "results".into(),
                ..Default::default()
            };
            write_json(&out.join("analysis.json"), &cfg)?;
            println!(
                "wrote {} clusters to {} (expected within {:.5})",
                spec.k,
                out.display(),
                clusters.expected_within
            );
            Ok(())
        }
        Command::ExtractDesk { common, early_signal, store_raw } => {
            let mut run_cfg = match &common.config {
                Some(p) => read_json::<DeskRunConfig>(p)?,
                None => DeskRunConfig::default(),
            };
            if early_signal && common.config.is_none() {
                run_cfg.corpus = DeskCorpusSpec::early_signal(run_cfg.corpus.seed);
                run_cfg.extract.store_raw = true;
            }
            if let Some(s) = common.seed {
                run_cfg.corpus.seed = s;
                run_cfg.model.seed = s;
            }
            if let Some(l) = &common.layers {
                run_cfg.extract.layers = l.clone();
            }
            if let Some(p) = &common.pooling {
                run_cfg.extract.pooling = vec![*p];
            }
            run_cfg.extract.store_raw |= store_raw;
            let out = out_dir(&common, None, "desk");
            let corpus = DeskCorpus::build(&run_cfg.corpus)?;
            let manifest = extract_desk(&corpus, &run_cfg.model, &run_cfg.extract, &out)?;
            let cfg = ExperimentConfig {
                manifest: Some("manifest.json".into()),
                pooling: run_cfg.extract.pooling.clone(),
                comparisons: vec![Comparison::WithinVsBetween {
                    name: "paraphrase_vs_unrelated".into(),
                    within: vec!["A".into(), "B".into()],
                    between: "C".into(),
                }],
                trajectories: if manifest.layers.len() >= 2 {
                    vec![TrajectorySpec {
                        name: "B-only".into(),
                        labels: vec!["B".into()],
                    }]
                } else {
                    Vec::new()
                },
                steering: Some(SteeringSpec {
                    positive: vec!["A".into(), "B".into()],
                    negative: vec!["C".into()],
                    layer: *manifest.layers.last().expect("non-empty"),
                    pooling: run_cfg.extract.pooling.first().cloned().unwrap_or(PoolingSpec::MEAN_FULL),
                }),
                alpha_grid: vec![5.0, 10.0, 15.0, 20.0],
                projection: Some(ProjectionJob {
                    labels: vec!["A".into(), "B".into(), "C".into()],
                    layer: manifest.layers[0],
                    pooling: run_cfg.extract.pooling.first().cloned().unwrap_or(PoolingSpec::MEAN_FULL),
                    spec: Default::default(),
                }),
                prng: attrlab::PrngSpec::new(run_cfg.corpus.seed),
                output_dir: "results".into(),
                ..Default::default()
            };
            write_json(&out.join("analysis.json"), &cfg)?;
            println!(
                "extracted {} documents × {} layers into {}",
                corpus.docs.len(),
                manifest.layers.len(),
                out.display()
            );
            Ok(())
        }
        Command::Analyze { common } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, Some(&cfg), "out");
            let written = if let Some(replay) = cfg.replay_path() {
                let fixture = ReplayFixture::load(&replay)?;
                let doc = run_replay(&fixture, &cfg)?;
                write_document(&doc, &out)?
            } else {
                let output = run_analysis(&cfg)?;
                write_analysis(&output, &cfg.pooling[0], &out)?
            };
            print_paths(&written);
            Ok(())
        }
        Command::Project { common } => {
            let cfg = load_config(&common)?;
            let mut job = cfg
                .projection
                .clone()
                .ok_or_else(|| Error::Config("config has no 'projection' section".into()))?;
            if let Some(l) = common.layers.as_ref().and_then(|l| l.first()) {
                job.layer = *l;
            }
            if let Some(p) = &common.pooling {
                job.pooling = *p;
            }
            if let Some(s) = common.seed {
                job.spec.seed = s;
            }
            let (manifest, table) = load_vectors(&cfg, job.layer, &job.pooling)?;
            let sets = job
                .labels
                .iter()
                .map(|l| table.condition_set(&manifest, std::slice::from_ref(l), job.layer, &job.pooling))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<_> = sets.iter().collect();
            let emb = tsne(&refs, &job.spec)?;
            let out = out_dir(&common, Some(&cfg), "out");
            let json = out.join("projection.json");
            write_json(&json, &emb)?;
            let svg = out.join(format!("projection_layer{}.svg", job.layer));
            write_text(
                &svg,
                &attrlab::pipeline::svg::render_scatter(&emb, &format!("t-SNE, layer {} ({})", job.layer, job.pooling)),
            )?;
            print_paths(&[json, svg]);
            Ok(())
        }
        Command::Steer { common, apply } => {
            let cfg = load_config(&common)?;
            let mut spec = cfg
                .steering
                .clone()
                .ok_or_else(|| Error::Config("config has no 'steering' section".into()))?;
            if let Some(l) = common.layers.as_ref().and_then(|l| l.first()) {
                spec.layer = *l;
            }
            if let Some(p) = &common.pooling {
                spec.pooling = *p;
            }
            let (manifest, table) = load_vectors(&cfg, spec.layer, &spec.pooling)?;
            let pos = table.condition_set(&manifest, &spec.positive, spec.layer, &spec.pooling)?;
            let neg = table.condition_set(&manifest, &spec.negative, spec.layer, &spec.pooling)?;
            let v = compute_steering_vector(&pos, &neg)?;
            let out = out_dir(&common, Some(&cfg), "out");
            let (npy, sidecar) = v.save(&out.join(format!("steering_layer{}", spec.layer)))?;
            let mut written = vec![npy, sidecar];
            if let Some(path) = apply {
                let rec = read_array(&path)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("activation");
                for &alpha in &cfg.alpha_grid {
                    let steered = apply_steering(rec.data(), &v, alpha)?;
                    let out_rec = ActivationRecord::new(
                        rec.doc_id.clone(),
                        rec.condition.clone(),
                        rec.layer,
                        rec.pooling,
                        rec.token_count,
                        rec.dtype(),
                        steered,
                    )?;
                    let p = out.join("steered").join(format!("{stem}.alpha{alpha}.npy"));
                    write_array(&out_rec, &p)?;
                    written.push(p);
                }
            }
            match v.centroid_distance {
                Some(d) => println!("centroid cosine distance {d:.6}"),
                None => println!("centroid cosine distance undefined (zero centroid)"),
            }
            print_paths(&written);
            Ok(())
        }
        Command::Score { common, responses, rubric, baseline, steered, full } => {
            let rubric = match rubric {
                Some(p) => read_json::<ScoringRubric>(&p)?,
                None => ScoringRubric::default(),
            };
            let recorded: Vec<RecordedResponse> = read_json(&responses)?;
            let sweep = score_sweep(&recorded, &rubric)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let path = out.join("sweep.json");
            write_json(&path, &sweep)?;
            let has_steered = sweep.rows.iter().any(|r| r.condition == steered && r.alpha.is_some());
            if has_steered {
                let summary = summarize_sweep_result(&sweep, &baseline, &steered, &full)?;
                let spath = out.join("sweep_summary.json");
                write_json(&spath, &summary)?;
                println!(
                    "best alpha {} (score {:.2}){}",
                    summary.best_alpha,
                    summary.best_score,
                    summary
                        .gap_fraction
                        .map(|g| format!(", gap closed {:.1}%", 100.0 * g))
                        .unwrap_or_default()
                );
                print_paths(&[path, spath]);
            } else {
                print_paths(&[path]);
            }
            Ok(())
        }
        Command::Report { common, results } => {
            let cfg = match &common.config {
                Some(_) => Some(load_config(&common)?),
                None => None,
            };
            let out = out_dir(&common, cfg.as_ref(), "out");
            let path = results.unwrap_or_else(|| out.join(attrlab::pipeline::RESULTS_FILE));
            let doc = validate_results_file(&path)?;
            let md = out.join(attrlab::pipeline::MARKDOWN_FILE);
            write_text(&md, &render_markdown(&doc))?;
            let mut written = vec![md];
            for c in &doc.comparisons {
                let p = out.join(format!("convergence_{}.svg", sanitize(&format!("{}_{}", c.name, c.pooling))));
                write_text(&p, &attrlab::pipeline::svg::render_convergence(c))?;
                written.push(p);
            }
            println!("{} is valid", path.display());
            print_paths(&written);
            Ok(())
        }
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn load_vectors(cfg: &ExperimentConfig, layer: usize, pooling: &PoolingSpec) -> Result<(ExperimentManifest, VectorTable)> {
    let path: PathBuf = cfg
        .manifest_path()
        .ok_or_else(|| Error::Config("config has no manifest".into()))?;
    let manifest = ExperimentManifest::load(Path::new(&path))?;
    if !manifest.layers.contains(&layer) {
        return Err(Error::Config(format!("layer {layer} is not in the manifest")));
    }
    let table = VectorTable::load(&manifest, &[layer], std::slice::from_ref(pooling))?;
    Ok((manifest, table))
}
