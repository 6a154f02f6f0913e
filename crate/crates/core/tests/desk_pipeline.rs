// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use attrlab::pipeline::{
    run_analysis, validate_results_file, write_analysis, Comparison, ExperimentConfig, RESULTS_FILE,
};
use attrlab::pooling::PoolingSpec;
use attrlab::synth::{extract_desk, DeskCorpus, DeskCorpusSpec, DeskModelConfig, ExtractOptions};
use attrlab::Error;

fn desk_config(dir: &Path) -> ExperimentConfig {
    let corpus = DeskCorpus::build(&DeskCorpusSpec {
        doc_len: 64,
        ..Default::default()
    })
    .unwrap();
    let model = DeskModelConfig {
        d_model: 32,
        n_layers: 4,
        ..Default::default()
    };
    let opts = ExtractOptions {
        layers: vec![1, 2, 4],
        pooling: vec![PoolingSpec::MEAN_FULL],
        store_raw: true,
        ..Default::default()
    };
    extract_desk(&corpus, &model, &opts, dir).unwrap();
    ExperimentConfig {
        manifest: Some(dir.join("manifest.json")),
        pooling: vec![PoolingSpec::MEAN_FULL, "last".parse().unwrap()],
        comparisons: vec![Comparison::WithinVsBetween {
            name: "h1".into(),
            within: vec!["A".into(), "B".into()],
            between: "C".into(),
        }],
        probes: vec![attrlab::pipeline::config::ProbeSpec {
            name: "c1".into(),
            doc: "C1".into(),
            target: vec!["A".into(), "B".into()],
        }],
        trajectories: vec![attrlab::pipeline::config::TrajectorySpec {
            name: "B-only".into(),
            labels: vec!["B".into()],
        }],
        n_permutations: 2000,
        n_bootstrap: 1000,
        ..Default::default()
    }
}

#[test]
fn desk_analysis_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let out = run_analysis(&cfg).unwrap();
    let doc = &out.document;
    assert_eq!(doc.comparisons.len(), 2);
    let mean = &doc.comparisons[0];
    assert_eq!(mean.pooling, "mean/full");
    for l in &mean.layers {
        assert_eq!(l.within.n, 28);
        assert_eq!(l.between.n, 56);
        assert!(l.within.mean < l.between.mean);
        assert!(l.significant, "layer {} not significant", l.layer);
    }
    let traj = &doc.trajectories.as_ref().unwrap()[0];
    assert_eq!(traj.pairs.len(), 21);
    assert_eq!(traj.pattern_counts.values().sum::<usize>(), 21);
    assert_eq!(doc.token_budget.as_ref().unwrap().len(), 15);

    let written = write_analysis(&out, &PoolingSpec::MEAN_FULL, &dir.path().join("out")).unwrap();
    assert!(written.iter().any(|p| p.ends_with("heatmap_layer2.svg")));
    let back = validate_results_file(&dir.path().join("out").join(RESULTS_FILE)).unwrap();
    assert_eq!(back.without_timestamp(), doc.without_timestamp());
}

#[test]
fn missing_activation_names_doc_and_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let doc_dir = dir.path().join("activations/B3");
    std::fs::remove_file(doc_dir.join("layer_2.mean.npy")).unwrap();
    std::fs::remove_file(doc_dir.join("layer_2.raw.npy")).unwrap();
    match run_analysis(&cfg) {
        Err(Error::MissingActivation { doc_id, layer, .. }) => {
            assert_eq!(doc_id, "B3");
            assert_eq!(layer, 2);
        }
        other => panic!("expected MissingActivation, got {other:?}"),
    }
}

#[test]
fn raw_fallback_matches_prepooled() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path());
    cfg.pooling = vec![PoolingSpec::MEAN_FULL];
    let a = run_analysis(&cfg).unwrap();
    for entry in walk(&dir.path().join("activations")) {
        if entry.to_string_lossy().ends_with(".mean.npy") {
            std::fs::remove_file(entry).unwrap();
        }
    }
    let b = run_analysis(&cfg).unwrap();
    // f32 storage of the pooled file vs f64 pooling from raw
    for (x, y) in a.document.comparisons[0].layers.iter().zip(&b.document.comparisons[0].layers) {
        assert!((x.within.mean - y.within.mean).abs() < 1e-6);
        assert_eq!(x.significant, y.significant);
    }
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn unknown_label_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path());
    cfg.comparisons.push(Comparison::WithinVsBetween {
        name: "bad".into(),
        within: vec!["Z".into()],
        between: "C".into(),
    });
    let err = run_analysis(&cfg).unwrap_err();
    assert!(err.is_config(), "{err}");
}

/// The A+B block of the layer heatmap is lighter than the A+B × C block.
#[test]
fn heatmap_shows_paraphrase_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let out = run_analysis(&cfg).unwrap();
    let target = dir.path().join("out");
    write_analysis(&out, &PoolingSpec::MEAN_FULL, &target).unwrap();
    let text = std::fs::read_to_string(target.join("heatmap_layer4.svg")).unwrap();
    let svg = roxmltree::Document::parse(&text).unwrap();
    let (mut within, mut cross) = (Vec::new(), Vec::new());
    for cell in svg.descendants().filter(|n| n.has_attribute("data-row")) {
        let i: usize = cell.attribute("data-row").unwrap().parse().unwrap();
        let j: usize = cell.attribute("data-col").unwrap().parse().unwrap();
        let red = u8::from_str_radix(&cell.attribute("fill").unwrap()[1..3], 16).unwrap();
        let value: f64 = cell.attribute("data-value").unwrap().parse().unwrap();
        if i == j {
            assert_eq!(value, 0.0);
            assert_eq!(red, 255);
        } else if i < 8 && j < 8 {
            within.push((value, red));
        } else if (i < 8) != (j < 8) {
            cross.push((value, red));
        }
    }
    assert_eq!(within.len(), 56);
    assert_eq!(cross.len(), 112);
    let max_within = within.iter().map(|c| c.0).fold(0.0, f64::max);
    let min_cross = cross.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    assert!(max_within < min_cross, "{max_within} >= {min_cross}");
    let lightest_cross = cross.iter().map(|c| c.1).max().unwrap();
    assert!(within.iter().all(|c| c.1 >= lightest_cross));
}
