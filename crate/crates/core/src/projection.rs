// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact t-SNE over cosine distances, for the scatter figures.
//!
//! Affinities use `exp(−β·d)` on the raw cosine distance (the distance is
//! treated as a squared dissimilarity, as scikit-learn does for non-Euclidean
//! metrics). Optimisation follows the usual schedule: early exaggeration,
//! momentum switch, per-coordinate adaptive gains, and mean-centering after
//! every step. Only for visualisation; no statistic depends on it.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cosine_distance, ConditionSet};
use crate::prng::PrngSpec;

const ENTROPY_TOL: f64 = 1e-5;
const MAX_SEARCH_STEPS: usize = 64;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_: f64,
    pub switch_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionSpec {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub metric: Metric,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum: MomentumSchedule,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        Self {
            perplexity: 5.0,
            iterations: 1000,
            seed: 42,
            metric: Metric::Cosine,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum: MomentumSchedule {
                initial: 0.5,
                final_: 0.8,
                switch_iter: 250,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub doc_id: String,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub points: Vec<EmbeddedPoint>,
    pub final_kl: f64,
    /// KL divergence (against the un-exaggerated P) after every iteration.
    pub kl_trace: Vec<f64>,
    pub spec: ProjectionSpec,
}

/// Result of the per-point bandwidth search.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedRow {
    /// Precision `β = 1/(2σ²)`; zero for a constant row.
    pub beta: f64,
    /// Kernel bandwidth; infinite for a constant row.
    pub sigma: f64,
    /// Conditional probabilities over the row's neighbours.
    pub conditional: Vec<f64>,
    pub entropy_bits: f64,
}

fn row_distribution(dist_row: &[f64], d_min: f64, beta: f64) -> (Vec<f64>, f64) {
    let mut p: Vec<f64> = dist_row
        .iter()
        .map(|&d| (-(d - d_min) * beta).exp())
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    let h = -p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.log2())
        .sum::<f64>();
    (p, h)
}

/// Binary search for the bandwidth whose conditional distribution has
/// entropy `log₂(perplexity)` bits.
pub fn calibrate_sigma(dist_row: &[f64], perplexity: f64) -> Result<CalibratedRow> {
    calibrate_row(0, dist_row, perplexity)
}

fn calibrate_row(row: usize, dist_row: &[f64], perplexity: f64) -> Result<CalibratedRow> {
    if dist_row.is_empty() {
        return Err(Error::Calibration {
            row,
            detail: "row has no neighbours".into(),
        });
    }
    if !(perplexity >= 1.0 && perplexity < dist_row.len() as f64 + 1.0) {
        return Err(Error::Calibration {
            row,
            detail: format!(
                "perplexity {perplexity} infeasible for {} neighbours",
                dist_row.len()
            ),
        });
    }
    let d_min = dist_row.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = dist_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if d_max - d_min <= 1e-15 * d_max.abs().max(1.0) {
        let (conditional, entropy_bits) = row_distribution(dist_row, d_min, 0.0);
        return Ok(CalibratedRow {
            beta: 0.0,
            sigma: f64::INFINITY,
            conditional,
            entropy_bits,
        });
    }

    let target = perplexity.log2();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    for _ in 0..MAX_SEARCH_STEPS {
        let (conditional, h) = row_distribution(dist_row, d_min, beta);
        if (h - target).abs() <= ENTROPY_TOL {
            return Ok(CalibratedRow {
                beta,
                sigma: (0.5 / beta).sqrt(),
                conditional,
                entropy_bits: h,
            });
        }
        if h > target {
            lo = beta;
            beta = if hi.is_infinite() { beta * 2.0 } else { 0.5 * (beta + hi) };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    Err(Error::Calibration {
        row,
        detail: format!("entropy did not reach {target:.6} bits in {MAX_SEARCH_STEPS} steps"),
    })
}

/// Symmetrised joint affinities `P_ij = (P_j|i + P_i|j) / 2n`, row-major n×n.
pub fn joint_probabilities(distances: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = distances.len();
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| distances[i][j]).collect();
        let cal = calibrate_row(i, &row, perplexity)?;
        let mut k = 0;
        for j in 0..n {
            if j != i {
                cond[i * n + j] = cal.conditional[k];
                k += 1;
            }
        }
    }
    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    Ok(p)
}

/// Project the union of the given sets to 2-D.
pub fn tsne(sets: &[&ConditionSet], spec: &ProjectionSpec) -> Result<Embedding2D> {
    let mut ids = Vec::new();
    let mut vectors: Vec<&[f64]> = Vec::new();
    for set in sets {
        for (id, v) in set.members() {
            ids.push((id.clone(), set.label.clone()));
            vectors.push(v);
        }
    }
    let n = vectors.len();
    if n < 4 {
        return Err(Error::Projection(format!("t-SNE needs at least 4 points, got {n}")));
    }
    if spec.iterations == 0 {
        return Err(Error::Config("t-SNE needs at least one iteration".into()));
    }
    let mut dist = vec![vec![0.0; n]; n];
    let mut max_d = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(vectors[i], vectors[j]).map_err(|e| {
                Error::Projection(format!("distance between '{}' and '{}': {e}", ids[i].0, ids[j].0))
            })?;
            dist[i][j] = d;
            dist[j][i] = d;
            max_d = max_d.max(d);
        }
    }
    if max_d == 0.0 {
        return Err(Error::Projection("all points are identical".into()));
    }
    if !(spec.perplexity >= 1.0 && spec.perplexity < n as f64) {
        return Err(Error::Config(format!(
            "perplexity {} must satisfy 1 <= perplexity < {n}",
            spec.perplexity
        )));
    }

    let p = joint_probabilities(&dist, spec.perplexity)?;
    let (coords, kl_trace) = optimize(&p, n, spec);
    let points = ids
        .into_iter()
        .zip(coords.chunks_exact(2))
        .map(|((doc_id, label), xy)| EmbeddedPoint {
            doc_id,
            label,
            x: xy[0],
            y: xy[1],
        })
        .collect();
    Ok(Embedding2D {
        points,
        final_kl: *kl_trace.last().unwrap_or(&0.0),
        kl_trace,
        spec: spec.clone(),
    })
}

fn kl_divergence(p: &[f64], q_num: &[f64], q_sum: f64) -> f64 {
    p.iter()
        .zip(q_num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &num)| {
            let q = (num / q_sum).max(f64::MIN_POSITIVE);
            pij * (pij / q).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

fn optimize(p: &[f64], n: usize, spec: &ProjectionSpec) -> (Vec<f64>, Vec<f64>) {
    let mut rng = PrngSpec::new(spec.seed).rng();
    let mut y: Vec<f64> = (0..2 * n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            1e-4 * z
        })
        .collect();
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut grad = vec![0.0; 2 * n];
    let mut num = vec![0.0; n * n];
    let mut trace = Vec::with_capacity(spec.iterations);

    for iter in 0..spec.iterations {
        let exaggeration = if iter < spec.exaggeration_iters {
            spec.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < spec.momentum.switch_iter {
            spec.momentum.initial
        } else {
            spec.momentum.final_
        };

        // Student-t kernel numerators
        let mut q_sum = 0.0;
        for i in 0..n {
            num[i * n + i] = 0.0;
            for j in (i + 1)..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = w;
                num[j * n + i] = w;
                q_sum += 2.0 * w;
            }
        }

        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let coeff = (exaggeration * p[i * n + j] - w / q_sum) * w;
                gx += coeff * (y[2 * i] - y[2 * j]);
                gy += coeff * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
        }

        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(MIN_GAIN)
            };
            update[k] = momentum * update[k] - spec.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }

        let (mx, my) = (0..n).fold((0.0, 0.0), |(sx, sy), i| (sx + y[2 * i], sy + y[2 * i + 1]));
        let (mx, my) = (mx / n as f64, my / n as f64);
        for i in 0..n {
            y[2 * i] -= mx;
            y[2 * i + 1] -= my;
        }

        // KL of the updated layout
        let mut q_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = w;
                num[j * n + i] = w;
                q_sum += 2.0 * w;
            }
        }
        trace.push(kl_divergence(p, &num, q_sum));
    }
    (y, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidistant_pair_is_uniform() {
        let r = calibrate_sigma(&[0.3, 0.3], 2.0).unwrap();
        assert_eq!(r.conditional, vec![0.5, 0.5]);
    }

    #[test]
    fn constant_row_is_uniform_for_any_perplexity() {
        for perp in [1.0, 2.5, 4.0] {
            let r = calibrate_sigma(&[0.7; 6], perp).unwrap();
            assert!(r.conditional.iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-15));
            assert!(r.sigma.is_infinite());
        }
    }

    #[test]
    fn entropy_hits_target() {
        let row: Vec<f64> = (0..15).map(|i| 0.05 + 0.013 * i as f64 + 0.002 * ((i * 7) % 5) as f64).collect();
        let r = calibrate_sigma(&row, 5.0).unwrap();
        // recompute the entropy directly from the returned distribution
        let h: f64 = -r.conditional.iter().map(|p| p * p.log2()).sum::<f64>();
        assert!((h - 5f64.log2()).abs() <= 1e-5, "{h}");
        assert!((r.conditional.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let w: Vec<f64> = row.iter().map(|d| (-d / (2.0 * r.sigma * r.sigma)).exp()).collect();
        let z: f64 = w.iter().sum();
        for (a, b) in w.iter().zip(&r.conditional) {
            assert!((a / z - b).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_perplexity() {
        assert!(matches!(
            calibrate_sigma(&[0.1, 0.2], 5.0),
            Err(Error::Calibration { .. })
        ));
    }

    #[test]
    fn joint_p_is_symmetric_distribution() {
        let n = 9;
        let dist: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { 0.1 + ((i * 31 + j * 17) % 13) as f64 * 0.01 + (i as f64 - j as f64).abs() * 0.02 })
                    .collect()
            })
            .map(|r: Vec<f64>| r)
            .collect();
        // symmetrize the synthetic distance matrix
        let sym: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| 0.5 * (dist[i][j] + dist[j][i])).collect())
            .collect();
        let p = joint_probabilities(&sym, 3.0).unwrap();
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for i in 0..n {
            for j in 0..n {
                assert!(p[i * n + j] >= 0.0);
                assert_eq!(p[i * n + j], p[j * n + i]);
            }
        }
    }

    #[test]
    fn identical_points_rejected() {
        let s = ConditionSet::new("X", 0, (0..5).map(|i| (format!("d{i}"), vec![1.0, 2.0])).collect()).unwrap();
        assert!(matches!(tsne(&[&s], &ProjectionSpec::default()), Err(Error::Projection(_))));
    }

    #[test]
    fn too_few_points() {
        let s = ConditionSet::new("X", 0, (0..3).map(|i| (format!("d{i}"), vec![1.0, i as f64])).collect()).unwrap();
        assert!(tsne(&[&s], &ProjectionSpec::default()).is_err());
    }
}
