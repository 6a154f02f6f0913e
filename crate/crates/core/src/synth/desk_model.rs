// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic byte-level toy transformer used as a stand-in for a real
//! model. Inference only, f32, pre-norm blocks with causal multi-head
//! attention and a GELU MLP.
//!
//! Weights are drawn from N(0, 0.02²) in this fixed order: token embedding
//! (256 × d, row-major), then for each block Wq, Wk, Wv, Wo (d × d), W1
//! (d × 4d), W2 (4d × d). Biases are zero and layer norms have unit gain.
//! Positions use a sinusoidal code at the same 0.02 scale.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prng::PrngSpec;

pub const VOCAB: usize = 256;
pub const MAX_TOKENS: usize = 4096;
const INIT_SD: f64 = 0.02;
const LN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub seed: u64,
}

impl Default for DeskModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 8,
            n_heads: 2,
            seed: 42,
        }
    }
}

impl DeskModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return Err(Error::Config("desk model dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        format!(
            "desk-transformer-d{}-l{}-h{}-s{}",
            self.d_model, self.n_layers, self.n_heads, self.seed
        )
    }
}

struct Block {
    wq: Vec<f32>,
    wk: Vec<f32>,
    wv: Vec<f32>,
    wo: Vec<f32>,
    w1: Vec<f32>,
    w2: Vec<f32>,
}

pub struct DeskModel {
    cfg: DeskModelConfig,
    embed: Vec<f32>,
    blocks: Vec<Block>,
}

impl DeskModel {
    pub fn new(cfg: DeskModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let ff = 4 * d;
        let mut rng = PrngSpec::new(cfg.seed).rng();
        let normal = Normal::new(0.0, INIT_SD).expect("valid sd");
        let mut draw = |n: usize| -> Vec<f32> {
            (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
        };
        let embed = draw(VOCAB * d);
        let blocks = (0..cfg.n_layers)
            .map(|_| Block {
                wq: draw(d * d),
                wk: draw(d * d),
                wv: draw(d * d),
                wo: draw(d * d),
                w1: draw(d * ff),
                w2: draw(ff * d),
            })
            .collect();
        Ok(Self { cfg, embed, blocks })
    }

    pub fn config(&self) -> &DeskModelConfig {
        &self.cfg
    }

    /// Hidden states after every block; entry `l − 1` holds layer `l`.
    pub fn forward(&self, tokens: &[u8]) -> Result<Vec<Matrix>> {
        let t = tokens.len();
        if t == 0 {
            return Err(Error::Domain("desk_forward needs at least one token".into()));
        }
        if t > MAX_TOKENS {
            return Err(Error::Domain(format!(
                "desk_forward accepts at most {MAX_TOKENS} tokens, got {t}"
            )));
        }
        let d = self.cfg.d_model;
        let mut x = Matrix::zeros(t, d);
        for (pos, &tok) in tokens.iter().enumerate() {
            let emb = &self.embed[tok as usize * d..(tok as usize + 1) * d];
            for (j, (out, e)) in x.row_mut(pos).iter_mut().zip(emb).enumerate() {
                *out = e + positional(pos, j, d);
            }
        }
        let mut states = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            self.block_forward(block, &mut x);
            states.push(x.clone());
        }
        Ok(states)
    }

    fn block_forward(&self, b: &Block, x: &mut Matrix) {
        let (t, d) = x.shape();
        let heads = self.cfg.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();

        let h = layer_norm(x);
        let q = matmul(&h, &b.wq, d, d);
        let k = matmul(&h, &b.wk, d, d);
        let v = matmul(&h, &b.wv, d, d);
        let mut attn = Matrix::zeros(t, d);
        let mut scores = vec![0.0f32; t];
        for head in 0..heads {
            let off = head * dh;
            for i in 0..t {
                let qi = &q.row(i)[off..off + dh];
                let mut max = f32::NEG_INFINITY;
                for (j, s) in scores.iter_mut().enumerate().take(i + 1) {
                    let kj = &k.row(j)[off..off + dh];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                    max = max.max(*s);
                }
                let mut z = 0.0f32;
                for s in scores.iter_mut().take(i + 1) {
                    *s = (*s - max).exp();
                    z += *s;
                }
                let out = &mut attn.row_mut(i)[off..off + dh];
                for (j, s) in scores.iter().enumerate().take(i + 1) {
                    let w = s / z;
                    for (o, vv) in out.iter_mut().zip(&v.row(j)[off..off + dh]) {
                        *o += w * vv;
                    }
                }
            }
        }
        let proj = matmul(&attn, &b.wo, d, d);
        add_in_place(x, &proj);

        let h2 = layer_norm(x);
        let mut hidden = matmul(&h2, &b.w1, d, 4 * d);
        hidden.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
        let out = matmul(&hidden, &b.w2, 4 * d, d);
        add_in_place(x, &out);
    }
}

/// Convenience wrapper: build the model from `cfg` and run one sequence.
pub fn desk_forward(tokens: &[u8], cfg: &DeskModelConfig) -> Result<Vec<Matrix>> {
    DeskModel::new(cfg.clone())?.forward(tokens)
}

fn positional(pos: usize, j: usize, d: usize) -> f32 {
    let i = (j / 2) as f64;
    let angle = pos as f64 / 10_000f64.powf(2.0 * i / d as f64);
    let v = if j.is_multiple_of(2) { angle.sin() } else { angle.cos() };
    (INIT_SD * v) as f32
}

fn layer_norm(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    let d = x.cols() as f32;
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f32>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    out
}

/// `x (T×n) · w (n×m)`, `w` row-major.
fn matmul(x: &Matrix, w: &[f32], n: usize, m: usize) -> Matrix {
    debug_assert_eq!(x.cols(), n);
    let mut out = Matrix::zeros(x.rows(), m);
    for r in 0..x.rows() {
        let xr = x.row(r);
        let or = out.row_mut(r);
        for (i, &xv) in xr.iter().enumerate() {
            let wr = &w[i * m..(i + 1) * m];
            for (o, wv) in or.iter_mut().zip(wr) {
                *o += xv * wv;
            }
        }
    }
    out
}

fn add_in_place(x: &mut Matrix, y: &Matrix) {
    for (a, b) in x.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *a += b;
    }
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}
