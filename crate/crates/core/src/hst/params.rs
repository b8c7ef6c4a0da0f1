use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Mat;
use crate::math;
use crate::rng::{self, DetRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HstConfig {
    /// Model width; a multiple of `heads`.
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    /// Embedding rows (statuses plus the noise status).
    pub n_status: usize,
    /// Add sinusoidal position codes to the feature-level inputs.
    pub positional: bool,
}

impl HstConfig {
    /// Width `d` rounded up to a multiple of `heads`.
    pub fn padded_width(d: usize, heads: usize) -> usize {
        let h = heads.max(1);
        d.max(1).div_ceil(h) * h
    }

    pub fn new(feature_width: usize, heads: usize, blocks: usize, n_status: usize) -> Self {
        Self { d_model: Self::padded_width(feature_width, heads), heads, blocks, n_status, positional: false }
    }

    pub fn head_width(&self) -> usize {
        self.d_model / self.heads
    }
}

/// One self-attention block: combined `W^Q`, `W^K`, `W^V` (column block `k`
/// belongs to head `k`) and the output map `W^O`, all `d x d` in row-vector
/// convention (`Q = X W^Q`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
}

/// All learnable tensors. Column-vector maps (`W x`) are stored out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub embed: Mat,
    pub w_fu: Mat,
    pub w_a: Mat,
    /// Reduces `W^a tanh(...)` to a scalar logit.
    pub r_a: Mat,
    pub feature: Vec<Block>,
    pub segment: Vec<Block>,
    pub status: Vec<Block>,
    pub w_fg: Mat,
    pub w_g: Mat,
    pub w_gu: Mat,
    pub w_u: Mat,
    pub w_l: Mat,
    pub w_hz: Mat,
}

fn uniform(rng: &mut DetRng, rows: usize, cols: usize, fan_in: usize) -> Mat {
    let b = 1.0 / math::sqrt(fan_in.max(1) as f64);
    let mut m = Mat::zeros(rows, cols);
    for v in &mut m.data {
        *v = rng.gen_range(-b..b);
    }
    m
}

impl Params {
    pub fn init(cfg: &HstConfig, seed: u64) -> Self {
        let d = cfg.d_model;
        let mut r = rng::seeded(rng::derive_seed(seed, "hst-init"));
        let mut embed = Mat::zeros(cfg.n_status.max(1), d);
        for v in &mut embed.data {
            *v = 0.02 * rng::normal(&mut r);
        }
        let blocks = |r: &mut DetRng| {
            (0..cfg.blocks)
                .map(|_| Block {
                    wq: uniform(r, d, d, d),
                    wk: uniform(r, d, d, d),
                    wv: uniform(r, d, d, d),
                    wo: uniform(r, d, d, d),
                })
                .collect::<Vec<_>>()
        };
        let feature = blocks(&mut r);
        let segment = blocks(&mut r);
        let status = blocks(&mut r);
        Self {
            embed,
            w_fu: uniform(&mut r, d, 2 * d, 2 * d),
            w_a: uniform(&mut r, d, d, d),
            r_a: uniform(&mut r, 1, d, d),
            feature,
            segment,
            status,
            w_fg: uniform(&mut r, d, 2 * d, 2 * d),
            w_g: uniform(&mut r, d, d, d),
            w_gu: uniform(&mut r, d, 2 * d, 2 * d),
            w_u: uniform(&mut r, d, d, d),
            w_l: uniform(&mut r, 1, d, d),
            w_hz: uniform(&mut r, 1, d, d),
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, m| m.fill(0.0));
        z
    }

    /// Visit every tensor with a stable name, in a fixed order.
    pub fn visit(&self, mut f: impl FnMut(&str, &Mat)) {
        f("embed", &self.embed);
        f("w_fu", &self.w_fu);
        f("w_a", &self.w_a);
        f("r_a", &self.r_a);
        for (level, blocks) in [("feature", &self.feature), ("segment", &self.segment), ("status", &self.status)] {
            for (n, b) in blocks.iter().enumerate() {
                f(&format!("{level}.{n}.wq"), &b.wq);
                f(&format!("{level}.{n}.wk"), &b.wk);
                f(&format!("{level}.{n}.wv"), &b.wv);
                f(&format!("{level}.{n}.wo"), &b.wo);
            }
        }
        f("w_fg", &self.w_fg);
        f("w_g", &self.w_g);
        f("w_gu", &self.w_gu);
        f("w_u", &self.w_u);
        f("w_l", &self.w_l);
        f("w_hz", &self.w_hz);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Mat)) {
        f("embed", &mut self.embed);
        f("w_fu", &mut self.w_fu);
        f("w_a", &mut self.w_a);
        f("r_a", &mut self.r_a);
        for (level, blocks) in [("feature", &mut self.feature), ("segment", &mut self.segment), ("status", &mut self.status)]
        {
            for (n, b) in blocks.iter_mut().enumerate() {
                f(&format!("{level}.{n}.wq"), &mut b.wq);
                f(&format!("{level}.{n}.wk"), &mut b.wk);
                f(&format!("{level}.{n}.wv"), &mut b.wv);
                f(&format!("{level}.{n}.wo"), &mut b.wo);
            }
        }
        f("w_fg", &mut self.w_fg);
        f("w_g", &mut self.w_g);
        f("w_gu", &mut self.w_gu);
        f("w_u", &mut self.w_u);
        f("w_l", &mut self.w_l);
        f("w_hz", &mut self.w_hz);
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(|n, _| out.push(String::from(n)));
        out
    }

    /// Flattened copy of every tensor, in visiting order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(|_, m| out.extend_from_slice(&m.data));
        out
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.flat().iter().map(|v| v * v).sum())
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, m| ok &= m.is_finite());
        ok
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Params, s: f64) {
        let src = other.flat();
        let mut at = 0;
        self.visit_mut(|_, m| {
            for v in &mut m.data {
                *v += s * src[at];
                at += 1;
            }
        });
    }
}
