// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use attrlab::geometry::{distance_matrix, ConditionSet};
use attrlab::matrix::Matrix;
use attrlab::pipeline::{run_analysis, run_replay, Comparison, ExperimentConfig, ReplayFixture, ResultsDocument};
use attrlab::pooling::PoolingSpec;
use attrlab::projection::{joint_probabilities, tsne, Embedding2D, ProjectionSpec};
use attrlab::stats::special::{normal_cdf, t_cdf};
use attrlab::stats::{
    bootstrap_ci, cohens_d_from_summary, mann_whitney_u, permutation_test, welch_t, Summary, Tail,
};
use attrlab::steering::{apply_steering, compute_steering_vector};
use attrlab::store::npy::{decode, encode};
use attrlab::store::{read_npy, write_npy, DType, NpyArray};
use attrlab::synth::{extract_desk, DeskCorpus, DeskCorpusSpec, DeskModelConfig, ExtractOptions};
use attrlab::PrngSpec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
        .install(f)
}

// ---------------------------------------------------------------- replay

fn replay() -> Check {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let llama = run_replay(&ReplayFixture::load(&fixture("replay_llama.json")).map_err(|e| e.to_string())?, &cfg)
        .map_err(|e| e.to_string())?;
    let gemma = run_replay(&ReplayFixture::load(&fixture("replay_gemma.json")).map_err(|e| e.to_string())?, &cfg)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let last_cov = |d: &ResultsDocument| {
        d.coverage
            .as_ref()
            .and_then(|c| c.iter().max_by_key(|r| r.layer).map(|r| r.fraction))
    };
    let cl = last_cov(&llama).ok_or("no llama coverage")?;
    let cg = last_cov(&gemma).ok_or("no gemma coverage")?;
    ensure!(round3(cl) == 0.653, "llama coverage {cl:.6} != 0.653");
    ensure!(round3(cg) == 0.742, "gemma coverage {cg:.6} != 0.742");

    let gap = llama
        .sweep
        .as_ref()
        .and_then(|s| s.gap_fraction)
        .ok_or("no sweep gap fraction")?;
    ensure!(round3(gap) == 0.667, "gap fraction {gap:.6} != 0.667");

    let beats = &llama.beats_random.as_ref().ok_or("no beats-random row")?[0];
    ensure!(beats.fraction == 1.0, "beats-random {}", beats.fraction);

    for (name, d) in [("llama", &llama), ("gemma", &gemma)] {
        let h = d.hierarchy.as_ref().ok_or(format!("{name}: no hierarchy"))?;
        ensure!(
            h.holds && h.rows.len() == d.layers.len() && h.rows.iter().all(|r| r.holds),
            "{name}: hierarchy fails"
        );
    }
    let traj = &llama.trajectories.as_ref().ok_or("no trajectory")?[0];
    ensure!(traj.mean.pattern == "↑↓", "trajectory pattern {}", traj.mean.pattern);
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "coverage {:.3}/{:.3}, gap {:.3}, beats-random {:.0}%, pattern {}, {:?}",
        cl,
        cg,
        gap,
        100.0 * beats.fraction,
        traj.mean.pattern,
        elapsed
    ))
}

// ----------------------------------------------------- statistical oracles

fn subsets(n: usize, k: usize) -> impl Iterator<Item = u32> {
    (0u32..(1 << n)).filter(move |m| m.count_ones() as usize == k)
}

fn split(pooled: &[f64], mask: u32) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, &v) in pooled.iter().enumerate() {
        if mask >> i & 1 == 1 {
            a.push(v)
        } else {
            b.push(v)
        }
    }
    (a, b)
}

fn avg(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn brute_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0
            } else if x == y {
                u += 0.5
            }
        }
    }
    u
}

fn permutation_grid() -> std::result::Result<usize, String> {
    let mut rng = PrngSpec::new(1001).rng();
    let mut checked = 0;
    for n in 2..=10usize {
        for n1 in 1..n {
            let pooled: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 + rng.random::<f64>()).collect();
            let a = &pooled[..n1];
            let b = &pooled[n1..];
            let obs = avg(b) - avg(a);
            let all: Vec<u32> = subsets(n, n1).collect();
            let hits = all
                .iter()
                .filter(|&&m| {
                    let (x, y) = split(&pooled, m);
                    avg(&y) - avg(&x) >= obs - 1e-12
                })
                .count();
            let exact = hits as f64 / all.len() as f64;
            let r = permutation_test(a, b, 20_000, &PrngSpec::new(42)).map_err(|e| e.to_string())?;
            ensure!(
                (r.p_value - exact).abs() <= 0.02,
                "permutation ({n1},{}) p {} vs exact {exact}",
                n - n1,
                r.p_value
            );
            checked += 1;
        }
    }
    Ok(checked)
}

fn mann_whitney_grid() -> std::result::Result<usize, String> {
    let mut rng = PrngSpec::new(1002).rng();
    let mut checked = 0;
    for n in 2..=10usize {
        for n1 in 1..n {
            // coarse grid so that ties occur
            let pooled: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 6.0).floor()).collect();
            let a = &pooled[..n1];
            let b = &pooled[n1..];
            let u_obs = brute_u(a, b);
            let us: Vec<f64> = subsets(n, n1)
                .map(|m| {
                    let (x, y) = split(&pooled, m);
                    brute_u(&x, &y)
                })
                .collect();
            let total = us.len() as f64;
            let mu = (n1 * (n - n1)) as f64 / 2.0;
            for tail in [Tail::Less, Tail::Greater, Tail::TwoSided] {
                let exact = us
                    .iter()
                    .filter(|&&u| match tail {
                        Tail::Less => u <= u_obs,
                        Tail::Greater => u >= u_obs,
                        Tail::TwoSided => (u - mu).abs() >= (u_obs - mu).abs(),
                    })
                    .count() as f64
                    / total;
                let mw = mann_whitney_u(a, b, tail).map_err(|e| e.to_string())?;
                ensure!(mw.u_a == u_obs, "U ({n1},{}) {} vs {u_obs}", n - n1, mw.u_a);
                let p = mw.p_exact.ok_or("exact p missing")?;
                ensure!(
                    (p - exact).abs() <= 1e-12,
                    "MW p ({n1},{}) {tail:?} {p} vs {exact}",
                    n - n1
                );
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// Student-t density integrated from 0 to |t| by composite Simpson.
fn t_upper_tail_by_quadrature(t: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let f = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let hi = t.abs();
    let n = 20_000;
    let h = hi / n as f64;
    let mut s = f(0.0) + f(hi);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let mass = s * h / 3.0;
    if t >= 0.0 {
        0.5 - mass
    } else {
        0.5 + mass
    }
}

fn welch_oracle() -> std::result::Result<f64, String> {
    let mut rng = PrngSpec::new(1003).rng();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let na = rng.random_range(3..25);
        let nb = rng.random_range(3..25);
        let shift = rng.random_range(-1.5..1.5);
        let sb = rng.random_range(0.5..3.0);
        let a: Vec<f64> = (0..na).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..nb)
            .map(|_| shift + sb * { let z: f64 = StandardNormal.sample(&mut rng); z })
            .collect();
        let var = |v: &[f64]| {
            let m = avg(v);
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        let (qa, qb) = (var(&a) / na as f64, var(&b) / nb as f64);
        let t = (avg(&b) - avg(&a)) / (qa + qb).sqrt();
        let df = (qa + qb).powi(2) / (qa * qa / (na - 1) as f64 + qb * qb / (nb - 1) as f64);
        let oracle = t_upper_tail_by_quadrature(t, df);
        let r = welch_t(&a, &b, Tail::Less).map_err(|e| e.to_string())?;
        let err = (r.p_value - oracle).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-6, "welch p {} vs quadrature {oracle} (t {t}, df {df})", r.p_value);
    }
    Ok(worst)
}

fn t_cdf_limits() -> std::result::Result<f64, String> {
    ensure!(t_cdf(1.0, 1.0) == 0.75, "t_cdf(1,1) = {:.17}", t_cdf(1.0, 1.0));
    let mut worst = 0.0f64;
    for i in -100..=100 {
        let x = i as f64 * 0.05;
        worst = worst.max((t_cdf(x, 1e6) - normal_cdf(x)).abs());
    }
    ensure!(worst <= 1e-4, "df=1e6 deviates from the normal by {worst}");
    Ok(worst)
}

fn bootstrap_coverage() -> std::result::Result<usize, String> {
    let mut covered = 0;
    for rep in 0..200u64 {
        let mut rng = PrngSpec::new(5000 + rep).rng();
        let sample: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ci = bootstrap_ci(&sample, 2000, 0.95, &PrngSpec::new(rep)).map_err(|e| e.to_string())?;
        if ci.lo <= 0.0 && 0.0 <= ci.hi {
            covered += 1;
        }
    }
    ensure!(
        (182..=198).contains(&covered),
        "bootstrap covered the true mean in {covered}/200"
    );
    Ok(covered)
}

fn statistical_oracles() -> Check {
    let start = Instant::now();
    let perm = permutation_grid()?;
    let mw = mann_whitney_grid()?;
    let welch = welch_oracle()?;
    let tl = t_cdf_limits()?;
    let cov = bootstrap_coverage()?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "{perm} permutation grids, {mw} MW cases, Welch max err {welch:.1e}, normal-limit err {tl:.1e}, bootstrap {:.1}%, {elapsed:?}",
        cov as f64 / 2.0
    ))
}

// -------------------------------------------------------------- desk data

struct Desk {
    _dir: tempfile::TempDir,
    cfg: ExperimentConfig,
}

fn desk(corpus: DeskCorpusSpec, pooling: Vec<PoolingSpec>) -> std::result::Result<Desk, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let built = DeskCorpus::build(&corpus).map_err(|e| e.to_string())?;
    let opts = ExtractOptions {
        layers: vec![2, 4, 6],
        pooling: pooling.clone(),
        store_raw: false,
        ..Default::default()
    };
    extract_desk(&built, &DeskModelConfig::default(), &opts, dir.path()).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        manifest: Some(dir.path().join("manifest.json")),
        pooling,
        comparisons: vec![Comparison::WithinVsBetween {
            name: "paraphrase_vs_unrelated".into(),
            within: vec!["A".into(), "B".into()],
            between: "C".into(),
        }],
        prng: PrngSpec::new(42),
        ..Default::default()
    };
    Ok(Desk { _dir: dir, cfg })
}

fn desk_end_to_end() -> Check {
    let start = Instant::now();
    let d = desk(DeskCorpusSpec::default(), vec![PoolingSpec::MEAN_FULL])?;
    let out = run_analysis(&d.cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let cmp = &out.document.comparisons[0];
    ensure!(cmp.layers.len() == 3, "{} layers", cmp.layers.len());
    let mut min_d = f64::INFINITY;
    for l in &cmp.layers {
        ensure!((l.threshold - 0.05 / 3.0).abs() < 1e-12, "threshold {}", l.threshold);
        ensure!(l.within.n == 28 && l.between.n == 56, "pair counts {}/{}", l.within.n, l.between.n);
        ensure!(l.within.mean < l.between.mean, "layer {}: within >= between", l.layer);
        let (w, p, m) = (l.welch.p_value, l.permutation.p_value, l.mann_whitney.result.p_value);
        ensure!(
            w < l.threshold && p < l.threshold && m < l.threshold && l.significant,
            "layer {}: p welch {w:.2e} perm {p:.2e} mw {m:.2e}",
            l.layer
        );
        ensure!(l.cohens_d > 0.8, "layer {}: d {}", l.layer, l.cohens_d);
        min_d = min_d.min(l.cohens_d);
    }
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("3 layers significant at 0.0167, min d {min_d:.2}, {elapsed:?}"))
}

fn pooling_ablation() -> Check {
    let mean256 = PoolingSpec::new(attrlab::pooling::PoolingStrategy::Mean, Some(256)).map_err(|e| e.to_string())?;
    let last = PoolingSpec::new(attrlab::pooling::PoolingStrategy::Last, None).map_err(|e| e.to_string())?;
    let d = desk(DeskCorpusSpec::early_signal(42), vec![mean256, last])?;
    let out = run_analysis(&d.cfg).map_err(|e| e.to_string())?;
    let by_pool = |key: &str| {
        out.document
            .comparisons
            .iter()
            .find(|c| c.pooling == key)
            .ok_or(format!("no comparison for {key}"))
    };
    let m = by_pool("mean/256")?;
    let l = by_pool("last/full")?;
    let mut parts = Vec::new();
    for (lm, ll) in m.layers.iter().zip(&l.layers) {
        ensure!(
            lm.cohens_d > ll.cohens_d,
            "layer {}: d mean/256 {} <= d last/full {}",
            lm.layer,
            lm.cohens_d,
            ll.cohens_d
        );
        ensure!(lm.significant, "layer {}: mean/256 not significant", lm.layer);
        ensure!(!ll.significant, "layer {}: last/full significant", ll.layer);
        parts.push(format!("L{} {:.2}>{:.2}", lm.layer, lm.cohens_d, ll.cohens_d));
    }
    Ok(format!("d(mean/256) > d(last/full): {}", parts.join(", ")))
}

// ------------------------------------------------------------- projection

fn planted(seed: u64) -> (ConditionSet, ConditionSet) {
    let mut rng = PrngSpec::new(seed).rng();
    let mut make = |label: &str, axis: usize| {
        let members = (0..8)
            .map(|i| {
                let mut v: Vec<f64> = (0..16).map(|_| 0.1 * { let z: f64 = StandardNormal.sample(&mut rng); z }).collect();
                v[axis] += 1.0;
                (format!("{label}{i}"), v)
            })
            .collect();
        ConditionSet::new(label, 0, members).expect("set")
    };
    let a = make("a", 0);
    let b = make("b", 1);
    (a, b)
}

fn silhouette(emb: &Embedding2D) -> f64 {
    let pts = &emb.points;
    let dist = |i: usize, j: usize| ((pts[i].x - pts[j].x).powi(2) + (pts[i].y - pts[j].y).powi(2)).sqrt();
    let mut total = 0.0;
    for i in 0..pts.len() {
        let (mut same, mut ns, mut other, mut no) = (0.0, 0, 0.0, 0);
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            if pts[i].label == pts[j].label {
                same += dist(i, j);
                ns += 1;
            } else {
                other += dist(i, j);
                no += 1;
            }
        }
        let (a, b) = (same / ns as f64, other / no as f64);
        total += (b - a) / a.max(b);
    }
    total / pts.len() as f64
}

fn tsne_check() -> Check {
    let (a, b) = planted(7);
    let spec = ProjectionSpec::default();
    let e1 = tsne(&[&a, &b], &spec).map_err(|e| e.to_string())?;
    let e2 = tsne(&[&a, &b], &spec).map_err(|e| e.to_string())?;
    ensure!(e1 == e2, "two seeded runs differ");
    let s = silhouette(&e1);
    ensure!(s > 0.0, "silhouette {s}");
    let vecs: Vec<&[f64]> = a.members().iter().chain(b.members()).map(|(_, v)| v.as_slice()).collect();
    let dist = distance_matrix(&vecs).map_err(|e| e.to_string())?;
    let p = joint_probabilities(&dist, spec.perplexity).map_err(|e| e.to_string())?;
    let sum: f64 = p.iter().sum();
    ensure!((sum - 1.0).abs() <= 1e-9, "P sums to {sum}");
    Ok(format!("silhouette {s:.3}, ΣP − 1 = {:.1e}", sum - 1.0))
}

// ------------------------------------------------------------ determinism

fn determinism() -> Check {
    let d = desk(
        DeskCorpusSpec {
            doc_len: 96,
            ..Default::default()
        },
        vec![PoolingSpec::MEAN_FULL],
    )?;
    let analyze = || run_analysis(&d.cfg).map(|o| o.document.without_timestamp().to_json());
    let r1 = with_threads(1, analyze).map_err(|e| e.to_string())?;
    let r4 = with_threads(4, analyze).map_err(|e| e.to_string())?;
    let r4b = with_threads(4, analyze).map_err(|e| e.to_string())?;
    ensure!(r1 == r4 && r4 == r4b, "analysis output depends on run or thread count");

    let (a, b) = planted(11);
    let spec = ProjectionSpec::default();
    let t1 = with_threads(1, || tsne(&[&a, &b], &spec)).map_err(|e| e.to_string())?;
    let t4 = with_threads(4, || tsne(&[&a, &b], &spec)).map_err(|e| e.to_string())?;
    ensure!(t1 == t4, "t-SNE depends on thread count");

    let mut rng = PrngSpec::new(3).rng();
    let x: Vec<f64> = (0..40).map(|_| rng.random()).collect();
    let y: Vec<f64> = (0..50).map(|_| rng.random::<f64>() + 0.05).collect();
    let prng = PrngSpec::new(42);
    let p1 = with_threads(1, || permutation_test(&x, &y, 10_000, &prng)).map_err(|e| e.to_string())?;
    let p4 = with_threads(4, || permutation_test(&x, &y, 10_000, &prng)).map_err(|e| e.to_string())?;
    ensure!(p1 == p4, "permutation test depends on thread count");
    let b1 = with_threads(1, || bootstrap_ci(&x, 10_000, 0.95, &prng)).map_err(|e| e.to_string())?;
    let b4 = with_threads(4, || bootstrap_ci(&x, 10_000, 0.95, &prng)).map_err(|e| e.to_string())?;
    let b4b = with_threads(4, || bootstrap_ci(&x, 10_000, 0.95, &prng)).map_err(|e| e.to_string())?;
    ensure!(b1 == b4 && b4 == b4b, "bootstrap depends on run or thread count");
    Ok("analyze, tsne, permutation_test, bootstrap_ci identical across runs and 1/4 threads".into())
}

// ----------------------------------------------------------------- format

fn random_array(rng: &mut impl Rng) -> NpyArray {
    let shape = if rng.random_bool(0.5) {
        vec![rng.random_range(1..200)]
    } else {
        vec![rng.random_range(1..20), rng.random_range(1..40)]
    };
    let n: usize = shape.iter().product();
    let f16 = rng.random_bool(0.5);
    let data: Vec<f32> = (0..n)
        .map(|_| {
            if f16 {
                let h = loop {
                    let h = half::f16::from_bits(rng.random());
                    if !h.is_nan() {
                        break h;
                    }
                };
                h.to_f32()
            } else {
                loop {
                    let v = f32::from_bits(rng.random());
                    if !v.is_nan() {
                        break v;
                    }
                }
            }
        })
        .collect();
    NpyArray::new(shape, if f16 { DType::F16 } else { DType::F32 }, data).expect("array")
}

fn format_checks() -> Check {
    let mut rng = PrngSpec::new(77).rng();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for i in 0..1000 {
        let arr = random_array(&mut rng);
        let back = if i % 10 == 0 {
            let p = dir.path().join(format!("a{i}.npy"));
            write_npy(&p, &arr).map_err(|e| e.to_string())?;
            read_npy(&p).map_err(|e| e.to_string())?
        } else {
            decode(&encode(&arr), Path::new("mem")).map_err(|e| e.to_string())?
        };
        ensure!(back.shape == arr.shape && back.dtype == arr.dtype, "array {i}: header changed");
        ensure!(
            back.data.iter().zip(&arr.data).all(|(x, y)| x.to_bits() == y.to_bits()),
            "array {i}: data not bit-exact"
        );
    }

    let mut worst_norm = 0.0f64;
    let mut worst_inverse = 0.0f64;
    for s in 0..100u64 {
        let mut r = PrngSpec::new(9000 + s).rng();
        let dim = r.random_range(2..64);
        let mut set = |label: &str, off: f64| {
            let m = (0..5)
                .map(|i| {
                    let v: Vec<f64> = (0..dim).map(|_| off + { let z: f64 = StandardNormal.sample(&mut r); z }).collect();
                    (format!("{label}{i}"), v)
                })
                .collect();
            ConditionSet::new(label, 1, m).expect("set")
        };
        let pos = set("p", 0.3);
        let neg = set("n", -0.3);
        let v = compute_steering_vector(&pos, &neg).map_err(|e| e.to_string())?;
        let norm = v.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst_norm = worst_norm.max((norm - 1.0).abs());
        let rows = r.random_range(1..30);
        let hidden: Vec<f32> = (0..rows * dim).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let h = Matrix::from_vec(rows, dim, hidden).map_err(|e| e.to_string())?;
        for alpha in [0.5, 1.0, 2.0, 5.0] {
            let back = apply_steering(&apply_steering(&h, &v, alpha).map_err(|e| e.to_string())?, &v, -alpha)
                .map_err(|e| e.to_string())?;
            for (x, y) in back.as_slice().iter().zip(h.as_slice()) {
                worst_inverse = worst_inverse.max(f64::from((x - y).abs()));
            }
        }
    }
    ensure!(worst_norm <= 1e-6, "steering norm off by {worst_norm}");
    ensure!(worst_inverse <= 1e-6, "steering inverse error {worst_inverse}");
    Ok(format!(
        "1000 arrays bit-exact, |‖v‖−1| ≤ {worst_norm:.1e}, inverse err ≤ {worst_inverse:.1e}"
    ))
}

// ---------------------------------------------------------- effect size

fn effect_size_discrepancy() -> Check {
    let fx = ReplayFixture::load(&fixture("replay_llama.json")).map_err(|e| e.to_string())?;
    let d = cohens_d_from_summary(
        &Summary { mean: 0.0106, sd: 0.0032, n: 28 },
        &Summary { mean: 0.026, sd: 0.0036, n: 56 },
    )
    .map_err(|e| e.to_string())?;
    ensure!((d - 4.43).abs() <= 0.05, "recomputed d {d}");
    let doc = run_replay(&fx, &ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let layer8 = doc.comparisons[0]
        .layers
        .iter()
        .find(|l| l.layer == 8)
        .ok_or("no layer 8")?;
    ensure!((layer8.cohens_d - 4.43).abs() <= 0.05, "report d {}", layer8.cohens_d);
    ensure!(
        doc.notes.iter().any(|n| n.contains("layer 8") && n.contains("Cohen's d") && n.contains("1.912")),
        "no effect-size mismatch note: {:?}",
        doc.notes
    );
    Ok(format!("recomputed d {d:.3} vs reported 1.912, note emitted"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("replay fixtures", replay),
        ("statistical oracles", statistical_oracles),
        ("determinism", determinism),
        ("desk end-to-end", desk_end_to_end),
        ("pooling ablation", pooling_ablation),
        ("t-SNE", tsne_check),
        ("format", format_checks),
        ("effect-size discrepancy", effect_size_discrepancy),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
