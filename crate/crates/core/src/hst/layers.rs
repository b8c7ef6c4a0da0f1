//! Forward passes with caches and their reverse-mode counterparts.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{Block, HstConfig, Params};
use super::tensor::{softmax, softmax_backward, softmax_rows, Mat};
use crate::math;

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() + b.len());
    c.extend_from_slice(a);
    c.extend_from_slice(b);
    c
}

/// Cache of the step-attention pooling inside one segment.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub hidden: Vec<Vec<f64>>,
    pub proj: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
}

/// `f^p = sum_i alpha_i f_i`, `alpha = softmax(r . W^a tanh(W^{fu} [f_i; u]))`.
pub fn pool_segment(p: &Params, rows: &[Vec<f64>], u: &[f64]) -> (Vec<f64>, PoolCache) {
    let d = u.len();
    let mut hidden = Vec::with_capacity(rows.len());
    let mut proj = Vec::with_capacity(rows.len());
    let mut logits = Vec::with_capacity(rows.len());
    for f in rows {
        let h: Vec<f64> = p.w_fu.matvec(&concat(f, u)).into_iter().map(math::tanh).collect();
        let v = p.w_a.matvec(&h);
        logits.push(math::dot(p.r_a.row(0), &v));
        hidden.push(h);
        proj.push(v);
    }
    softmax(&mut logits);
    let mut out = vec![0.0; d];
    for (a, f) in logits.iter().zip(rows) {
        for (o, x) in out.iter_mut().zip(f) {
            *o += a * x;
        }
    }
    (out, PoolCache { hidden, proj, alpha: logits })
}

/// Accumulates parameter gradients; returns the gradient for `u`.
pub fn pool_segment_backward(p: &Params, g: &mut Params, rows: &[Vec<f64>], u: &[f64], c: &PoolCache, gout: &[f64]) -> Vec<f64> {
    let d = u.len();
    let galpha: Vec<f64> = rows.iter().map(|f| math::dot(f, gout)).collect();
    let glogit = softmax_backward(&c.alpha, &galpha);
    let mut gu = vec![0.0; d];
    for (k, f) in rows.iter().enumerate() {
        let gl = glogit[k];
        if gl == 0.0 {
            continue;
        }
        g.r_a.add_outer(&[1.0], &c.proj[k], gl);
        let gv: Vec<f64> = p.r_a.row(0).iter().map(|r| r * gl).collect();
        g.w_a.add_outer(&gv, &c.hidden[k], 1.0);
        let gh = p.w_a.t_matvec(&gv);
        let gz: Vec<f64> = gh.iter().zip(&c.hidden[k]).map(|(a, h)| a * (1.0 - h * h)).collect();
        g.w_fu.add_outer(&gz, &concat(f, u), 1.0);
        let gin = p.w_fu.t_matvec(&gz);
        for (a, b) in gu.iter_mut().zip(&gin[d..]) {
            *a += b;
        }
    }
    gu
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    pub x: Mat,
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Attention matrix per head (`p x p`, rows sum to 1).
    pub attn: Vec<Mat>,
    pub hcat: Mat,
}

/// Multi-head self-attention, `Q = K = V = X`, scaling `1/sqrt(d)`.
pub fn attention_block(b: &Block, x: &Mat, heads: usize) -> (Mat, BlockCache) {
    let d = x.cols;
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(d as f64);
    let q = x.matmul(&b.wq);
    let k = x.matmul(&b.wk);
    let v = x.matmul(&b.wv);
    let mut hcat = Mat::zeros(x.rows, d);
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.cols_slice(h * dh, dh);
        let kh = k.cols_slice(h * dh, dh);
        let vh = v.cols_slice(h * dh, dh);
        let mut s = qh.matmul_t(&kh);
        s.data.iter_mut().for_each(|z| *z *= scale);
        softmax_rows(&mut s);
        hcat.set_cols(h * dh, &s.matmul(&vh));
        attn.push(s);
    }
    let y = hcat.matmul(&b.wo);
    (y, BlockCache { x: x.clone(), q, k, v, attn, hcat })
}

pub fn attention_block_backward(b: &Block, gb: &mut Block, c: &BlockCache, gy: &Mat, heads: usize) -> Mat {
    let d = c.x.cols;
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(d as f64);
    gb.wo.add_assign(&c.hcat.t_matmul(gy));
    let ghcat = gy.matmul_t(&b.wo);
    let mut gq = Mat::zeros(c.x.rows, d);
    let mut gk = Mat::zeros(c.x.rows, d);
    let mut gv = Mat::zeros(c.x.rows, d);
    for h in 0..heads {
        let a = &c.attn[h];
        let gh = ghcat.cols_slice(h * dh, dh);
        let qh = c.q.cols_slice(h * dh, dh);
        let kh = c.k.cols_slice(h * dh, dh);
        let vh = c.v.cols_slice(h * dh, dh);
        let ga = gh.matmul_t(&vh);
        gv.set_cols(h * dh, &a.t_matmul(&gh));
        let mut gs = Mat::zeros(a.rows, a.cols);
        for i in 0..a.rows {
            gs.row_mut(i).copy_from_slice(&softmax_backward(a.row(i), ga.row(i)));
        }
        gs.data.iter_mut().for_each(|z| *z *= scale);
        gq.set_cols(h * dh, &gs.matmul(&kh));
        gk.set_cols(h * dh, &gs.t_matmul(&qh));
    }
    gb.wq.add_assign(&c.x.t_matmul(&gq));
    gb.wk.add_assign(&c.x.t_matmul(&gk));
    gb.wv.add_assign(&c.x.t_matmul(&gv));
    let mut gx = gq.matmul_t(&b.wq);
    gx.add_assign(&gk.matmul_t(&b.wk));
    gx.add_assign(&gv.matmul_t(&b.wv));
    gx
}

pub fn encoder(blocks: &[Block], x: Mat, heads: usize) -> (Mat, Vec<BlockCache>) {
    let mut caches = Vec::with_capacity(blocks.len());
    let mut cur = x;
    for b in blocks {
        let (y, c) = attention_block(b, &cur, heads);
        caches.push(c);
        cur = y;
    }
    (cur, caches)
}

pub fn encoder_backward(blocks: &[Block], gblocks: &mut [Block], caches: &[BlockCache], gy: Mat, heads: usize) -> Mat {
    let mut g = gy;
    for n in (0..blocks.len()).rev() {
        g = attention_block_backward(&blocks[n], &mut gblocks[n], &caches[n], &g, heads);
    }
    g
}

/// `W_out tanh(W_in [a; b])`
pub fn bridge(w_in: &Mat, w_out: &Mat, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h: Vec<f64> = w_in.matvec(&concat(a, b)).into_iter().map(math::tanh).collect();
    (w_out.matvec(&h), h)
}

/// Returns gradients for `a` and `b`.
pub fn bridge_backward(
    w_in: &Mat,
    w_out: &Mat,
    gw_in: &mut Mat,
    gw_out: &mut Mat,
    a: &[f64],
    b: &[f64],
    h: &[f64],
    gout: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    gw_out.add_outer(gout, h, 1.0);
    let gh = w_out.t_matvec(gout);
    let gz: Vec<f64> = gh.iter().zip(h).map(|(g, h)| g * (1.0 - h * h)).collect();
    gw_in.add_outer(&gz, &concat(a, b), 1.0);
    let gin = w_in.t_matvec(&gz);
    let (ga, gb) = gin.split_at(a.len());
    (ga.to_vec(), gb.to_vec())
}

/// Sinusoidal position code for position `pos` (0-based).
pub fn position_code(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|k| {
            let rate = math::pow(10_000.0, -((2 * (k / 2)) as f64) / d as f64);
            let x = pos as f64 * rate;
            if k % 2 == 0 {
                math::sin(x)
            } else {
                math::cos(x)
            }
        })
        .collect()
}

/// Inputs of one segment in model width.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInput {
    pub rows: Vec<Vec<f64>>,
    pub vector: Vec<f64>,
    pub status: usize,
}

#[derive(Debug, Clone)]
pub struct PrefixCache {
    pub feature: Vec<BlockCache>,
    pub fhat: Mat,
    pub bridge_g: Vec<Vec<f64>>,
    pub segment: Vec<BlockCache>,
    pub ghat: Mat,
    pub bridge_u: Vec<Vec<f64>>,
    pub status: Vec<BlockCache>,
    pub uhat: Vec<f64>,
    pub logit: f64,
    pub hazard_logit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixOutput {
    pub y: f64,
    pub hazard: f64,
}

/// Forward over the first `p = pooled.len()` segments given their pooled
/// features, segment vectors and status embeddings.
pub fn forward_prefix(
    cfg: &HstConfig,
    p: &Params,
    pooled: &[Vec<f64>],
    vectors: &[Vec<f64>],
    embeds: &[Vec<f64>],
) -> (PrefixOutput, PrefixCache) {
    let n = pooled.len();
    let d = cfg.d_model;
    let mut x0 = Mat::from_rows(pooled);
    if cfg.positional {
        for i in 0..n {
            for (a, b) in x0.row_mut(i).iter_mut().zip(position_code(i, d)) {
                *a += b;
            }
        }
    }
    let (fhat, feature) = encoder(&p.feature, x0, cfg.heads);
    let mut gt = Mat::zeros(n, d);
    let mut bridge_g = Vec::with_capacity(n);
    for i in 0..n {
        let (o, h) = bridge(&p.w_fg, &p.w_g, &vectors[i], fhat.row(i));
        gt.row_mut(i).copy_from_slice(&o);
        bridge_g.push(h);
    }
    let (ghat, segment) = encoder(&p.segment, gt, cfg.heads);
    let mut ut = Mat::zeros(n, d);
    let mut bridge_u = Vec::with_capacity(n);
    for i in 0..n {
        let (o, h) = bridge(&p.w_gu, &p.w_u, &embeds[i], ghat.row(i));
        ut.row_mut(i).copy_from_slice(&o);
        bridge_u.push(h);
    }
    let (uout, status) = encoder(&p.status, ut, cfg.heads);
    let mut uhat = vec![0.0; d];
    for i in 0..n {
        for (a, b) in uhat.iter_mut().zip(uout.row(i)) {
            *a += b / n as f64;
        }
    }
    let logit = math::dot(p.w_l.row(0), &uhat);
    let hazard_logit = math::dot(p.w_hz.row(0), &uhat);
    let out = PrefixOutput { y: math::sigmoid(logit), hazard: math::softplus(hazard_logit) };
    (out, PrefixCache { feature, fhat, bridge_g, segment, ghat, bridge_u, status, uhat, logit, hazard_logit })
}

/// Backward of [`forward_prefix`] given `dL/dy` and `dL/dlambda`. Returns
/// gradients for the pooled features and the status embeddings.
#[allow(clippy::too_many_arguments)]
pub fn backward_prefix(
    cfg: &HstConfig,
    p: &Params,
    g: &mut Params,
    vectors: &[Vec<f64>],
    embeds: &[Vec<f64>],
    c: &PrefixCache,
    gy: f64,
    ghazard: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = vectors.len();
    let d = cfg.d_model;
    let y = math::sigmoid(c.logit);
    let gl = gy * y * (1.0 - y);
    let gz = ghazard * math::sigmoid(c.hazard_logit);
    g.w_l.add_outer(&[1.0], &c.uhat, gl);
    g.w_hz.add_outer(&[1.0], &c.uhat, gz);
    let guhat: Vec<f64> = p.w_l.row(0).iter().zip(p.w_hz.row(0)).map(|(a, b)| (gl * a + gz * b) / n as f64).collect();
    let mut guout = Mat::zeros(n, d);
    for i in 0..n {
        guout.row_mut(i).copy_from_slice(&guhat);
    }
    let gut = encoder_backward(&p.status, &mut g.status, &c.status, guout, cfg.heads);
    let mut gembeds = Vec::with_capacity(n);
    let mut gghat = Mat::zeros(n, d);
    for i in 0..n {
        let (ge, gg) =
            bridge_backward(&p.w_gu, &p.w_u, &mut g.w_gu, &mut g.w_u, &embeds[i], c.ghat.row(i), &c.bridge_u[i], gut.row(i));
        gembeds.push(ge);
        gghat.row_mut(i).copy_from_slice(&gg);
    }
    let ggt = encoder_backward(&p.segment, &mut g.segment, &c.segment, gghat, cfg.heads);
    let mut gfhat = Mat::zeros(n, d);
    for i in 0..n {
        let (_, gf) =
            bridge_backward(&p.w_fg, &p.w_g, &mut g.w_fg, &mut g.w_g, &vectors[i], c.fhat.row(i), &c.bridge_g[i], ggt.row(i));
        gfhat.row_mut(i).copy_from_slice(&gf);
    }
    let gx0 = encoder_backward(&p.feature, &mut g.feature, &c.feature, gfhat, cfg.heads);
    (gx0.to_rows(), gembeds)
}
