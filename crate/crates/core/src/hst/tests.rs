use alloc::vec;
use alloc::vec::Vec;

use super::layers::{attention_block, pool_segment};
use super::tensor::Mat;
use super::*;
use crate::rng;
use crate::spm::Segmentation;

fn model(d: usize, heads: usize, n_status: usize, seed: u64) -> Hst {
    let mut m = Hst::new(HstConfig::new(d, heads, 1, n_status), seed);
    // larger embeddings so the status path matters in small fixtures
    let mut r = rng::seeded(seed ^ 7);
    for v in &mut m.params.embed.data {
        *v = 0.5 * rng::normal(&mut r);
    }
    m
}

fn rows(seed: u64, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| (0..d).map(|_| shift + rng::normal(&mut r)).collect()).collect()
}

fn sample(m: &Hst, seed: u64, lens: &[usize], malicious: bool) -> Sample {
    let d = m.config.d_model;
    let shift = if malicious { 0.8 } else { -0.8 };
    let segments = lens
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let rs = rows(seed * 31 + j as u64, n, d, shift);
            let v = rows(seed * 97 + j as u64, 1, d, shift).remove(0);
            m.segment_input(&rs, &v, (seed as usize + j) % m.config.n_status).unwrap()
        })
        .collect();
    Sample { segments, malicious }
}

// Straight-line forward written with index loops in column-vector form.
fn oracle(p: &Params, heads: usize, segs: &[SegmentInput]) -> (f64, f64) {
    let d = p.w_a.rows;
    let mv = |w: &Mat, x: &[f64]| -> Vec<f64> {
        (0..w.rows).map(|i| (0..w.cols).map(|j| w.get(i, j) * x[j]).sum()).collect()
    };
    let cat = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().chain(b).copied().collect() };
    let enc = |blocks: &[params::Block], xs: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut xs = xs;
        for b in blocks {
            let n = xs.len();
            let proj = |w: &Mat, x: &[f64]| -> Vec<f64> { (0..d).map(|c| (0..d).map(|r| x[r] * w.get(r, c)).sum()).collect() };
            let q: Vec<Vec<f64>> = xs.iter().map(|x| proj(&b.wq, x)).collect();
            let k: Vec<Vec<f64>> = xs.iter().map(|x| proj(&b.wk, x)).collect();
            let v: Vec<Vec<f64>> = xs.iter().map(|x| proj(&b.wv, x)).collect();
            let dh = d / heads;
            let mut o = vec![vec![0.0; d]; n];
            for h in 0..heads {
                for i in 0..n {
                    let s: Vec<f64> = (0..n)
                        .map(|j| (h * dh..(h + 1) * dh).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt())
                        .collect();
                    let m = s.iter().cloned().fold(f64::MIN, f64::max);
                    let e: Vec<f64> = s.iter().map(|z| (z - m).exp()).collect();
                    let tot: f64 = e.iter().sum();
                    for j in 0..n {
                        for c in h * dh..(h + 1) * dh {
                            o[i][c] += e[j] / tot * v[j][c];
                        }
                    }
                }
            }
            xs = o.iter().map(|x| proj(&b.wo, x)).collect();
        }
        xs
    };
    let pooled: Vec<Vec<f64>> = segs
        .iter()
        .map(|s| {
            let u = p.embed.row(s.status);
            let logits: Vec<f64> = s
                .rows
                .iter()
                .map(|f| {
                    let h: Vec<f64> = mv(&p.w_fu, &cat(f, u)).iter().map(|z| z.tanh()).collect();
                    let v = mv(&p.w_a, &h);
                    (0..d).map(|i| p.r_a.get(0, i) * v[i]).sum()
                })
                .collect();
            let tot: f64 = logits.iter().map(|z| z.exp()).sum();
            let mut out = vec![0.0; d];
            for (z, f) in logits.iter().zip(&s.rows) {
                for c in 0..d {
                    out[c] += z.exp() / tot * f[c];
                }
            }
            out
        })
        .collect();
    let fhat = enc(&p.feature, pooled);
    let gt: Vec<Vec<f64>> = segs
        .iter()
        .zip(&fhat)
        .map(|(s, f)| {
            let h: Vec<f64> = mv(&p.w_fg, &cat(&s.vector, f)).iter().map(|z| z.tanh()).collect();
            mv(&p.w_g, &h)
        })
        .collect();
    let ghat = enc(&p.segment, gt);
    let ut: Vec<Vec<f64>> = segs
        .iter()
        .zip(&ghat)
        .map(|(s, g)| {
            let h: Vec<f64> = mv(&p.w_gu, &cat(p.embed.row(s.status), g)).iter().map(|z| z.tanh()).collect();
            mv(&p.w_u, &h)
        })
        .collect();
    let uo = enc(&p.status, ut);
    let uhat: Vec<f64> = (0..d).map(|c| uo.iter().map(|r| r[c]).sum::<f64>() / uo.len() as f64).collect();
    let l: f64 = (0..d).map(|c| p.w_l.get(0, c) * uhat[c]).sum();
    let z: f64 = (0..d).map(|c| p.w_hz.get(0, c) * uhat[c]).sum();
    (1.0 / (1.0 + (-l).exp()), (1.0 + z.exp()).ln())
}

#[test]
fn forward_matches_loop_oracle() {
    let m = model(4, 2, 3, 11);
    let s = sample(&m, 3, &[2, 3], true);
    let out = m.forward(&s.segments).unwrap();
    let (y, hz) = oracle(&m.params, 2, &s.segments);
    assert!((out.y - y).abs() < 1e-12, "{} vs {y}", out.y);
    assert!((out.hazard - hz).abs() < 1e-12);
}

#[test]
fn padded_width_is_multiple_of_heads() {
    assert_eq!(HstConfig::padded_width(10, 4), 12);
    assert_eq!(HstConfig::padded_width(12, 4), 12);
    assert_eq!(HstConfig::new(5, 2, 1, 3).d_model, 6);
}

#[test]
fn attention_rows_sum_to_one() {
    let m = model(4, 2, 2, 5);
    let x = Mat::from_rows(&rows(9, 5, 4, 0.0));
    let (_, c) = attention_block(&m.params.feature[0], &x, 2);
    for a in &c.attn {
        for i in 0..a.rows {
            assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn prefixes_ignore_later_segments() {
    let m = model(4, 2, 3, 2);
    let s = sample(&m, 4, &[2, 2, 3, 1], false);
    let trace = m.run(&s.segments, DEFAULT_S_MIN).unwrap();
    let mut changed = s.segments.clone();
    changed[3].rows[0][1] += 5.0;
    changed[2].vector[0] -= 3.0;
    let other = m.run(&changed, DEFAULT_S_MIN).unwrap();
    assert_eq!(trace.y[..2], other.y[..2]);
    for p in 1..=4 {
        assert_eq!(m.forward(&s.segments[..p]).unwrap().y, trace.y[p - 1]);
    }
}

#[test]
fn zero_output_weights_give_half() {
    let mut m = model(4, 2, 2, 3);
    m.params.w_l.fill(0.0);
    let s = sample(&m, 1, &[3], true);
    assert_eq!(m.forward(&s.segments).unwrap().y, 0.5);
}

#[test]
fn single_row_pools_to_itself() {
    let m = model(4, 2, 2, 8);
    let r = rows(1, 1, 4, 0.3);
    let (f, c) = pool_segment(&m.params, &r, m.params.embed.row(0));
    assert_eq!(f, r[0]);
    assert_eq!(c.alpha, vec![1.0]);
}

#[test]
fn crafted_pooling_weights() {
    let mut m = model(2, 1, 1, 0);
    m.params.embed.fill(0.0);
    m.params.w_fu = Mat::from_rows(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 0.0]]);
    m.params.w_a = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
    m.params.r_a = Mat::from_rows(&[vec![1.0, 0.0]]);
    let r = vec![vec![0.0, 1.0], vec![0.5, -1.0]];
    let (f, c) = pool_segment(&m.params, &r, &[0.0, 0.0]);
    let (e0, e1) = (0.0f64.tanh().exp(), 0.5f64.tanh().exp());
    let a1 = e1 / (e0 + e1);
    assert!((c.alpha[1] - a1).abs() < 1e-15);
    assert!((f[0] - 0.5 * a1).abs() < 1e-15);
    assert!((f[1] - (1.0 - 2.0 * a1)).abs() < 1e-15);
}

#[test]
fn unknown_status_is_rejected() {
    let m = model(4, 2, 2, 0);
    assert_eq!(m.embed_status(2).unwrap_err(), HstError::Status { id: 2, rows: 2 });
    assert!(matches!(m.pad(&[0.0; 5]), Err(HstError::Width { got: 5, max: 4 })));
}

#[test]
fn gradients_match_central_differences() {
    let m = model(4, 2, 3, 21);
    let samples = vec![sample(&m, 5, &[1, 2, 3], true), sample(&m, 6, &[2, 1, 2], false)];
    for mode in [EarlinessMode::Shrink, EarlinessMode::Literal] {
        let cfg = LossConfig { gamma1: 1.0, gamma2: 0.3, c_pos: 1.2, c_neg: 0.8, earliness: mode };
        for (name, rel) in gradient_check(&m, &samples, &cfg, 1e-5).unwrap() {
            assert!(rel <= 1e-4, "{name}: {rel}");
        }
    }
}

#[test]
fn unused_embeddings_get_no_gradient() {
    let m = model(4, 2, 4, 2);
    let mut s = sample(&m, 1, &[2, 2], true);
    for seg in &mut s.segments {
        seg.status = 1;
    }
    let mut g = m.params.zeros_like();
    m.loss_and_grad(&s, &LossConfig::default(), &mut g).unwrap();
    for id in [0, 2, 3] {
        assert!(g.embed.row(id).iter().all(|v| *v == 0.0));
    }
    assert!(g.embed.row(1).iter().any(|v| *v != 0.0));
}

fn toy(m: &Hst) -> Vec<Sample> {
    (0..12).map(|i| sample(m, 100 + i, &[2, 3, 2], i % 3 == 0)).collect()
}

#[test]
fn training_reduces_loss() {
    let mut m = model(4, 2, 3, 4);
    let data = toy(&m);
    let loss = LossConfig::default().balanced(4, 8);
    let before: f64 = data.iter().map(|s| m.loss(s, &loss).unwrap().prediction).sum();
    let cfg = OptimConfig { epochs: 40, batch_size: 4, lr: 1e-2, ..OptimConfig::default() };
    let hist = train(&mut m, &data, &loss, &cfg).unwrap();
    assert_eq!(hist.len(), 40 * 3);
    let after: f64 = data.iter().map(|s| m.loss(s, &loss).unwrap().prediction).sum();
    assert!(after < 0.5 * before, "{before} -> {after}");
}

#[test]
fn training_replays_and_zero_rate_is_inert() {
    let base = model(4, 2, 3, 9);
    let data = toy(&base);
    let loss = LossConfig::default();
    let cfg = OptimConfig { epochs: 3, batch_size: 5, seed: 17, ..OptimConfig::default() };
    let (mut a, mut b) = (base.clone(), base.clone());
    let ha = train(&mut a, &data, &loss, &cfg).unwrap();
    let hb = train(&mut b, &data, &loss, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let mut c = base.clone();
    train(&mut c, &data, &loss, &OptimConfig { lr: 0.0, ..cfg }).unwrap();
    assert_eq!(c, base);
}

#[test]
fn stream_agrees_with_splits_and_freezes() {
    let m = model(4, 2, 3, 13);
    let hourly = rows(77, 9, 4, 0.2);
    let seg = Segmentation { boundaries: vec![0, 3, 5, 9] };
    let describe = |j: usize, slice: &[Vec<f64>]| -> (Vec<f64>, usize) {
        let mean: Vec<f64> = (0..4).map(|c| slice.iter().map(|r| r[c]).sum::<f64>() / slice.len() as f64).collect();
        (mean, j % 3)
    };
    let out = m.predict_stream(&hourly, &seg, DEFAULT_S_MIN, describe).unwrap();
    assert_eq!(out.hourly.len(), 9);
    assert_eq!(out.statuses, vec![0, 1, 2]);
    let segments: Vec<SegmentInput> = seg
        .segments()
        .iter()
        .enumerate()
        .map(|(j, &(b, e))| {
            let (v, s) = describe(j, &hourly[b..e]);
            m.segment_input(&hourly[b..e], &v, s).unwrap()
        })
        .collect();
    let trace = m.run(&segments, DEFAULT_S_MIN).unwrap();
    for (j, &(_, e)) in seg.segments().iter().enumerate() {
        assert!((out.hourly[e - 1] - trace.combined[j]).abs() < 1e-12);
    }
    assert_eq!(out.splits.combined, trace.combined);

    // constant hazard ln 2 over one-hour segments: S(t) = 2^-(t+1)
    let mut halving = m.clone();
    halving.params.w_hz.fill(0.0);
    let long = rows(78, 12, 4, 0.0);
    let seg = Segmentation { boundaries: (0..=12).collect() };
    let out = halving.predict_stream(&long, &seg, DEFAULT_S_MIN, |j, s| (s[0].clone(), j % 3)).unwrap();
    assert_eq!(out.t_die, Some(9));
    for t in 10..12 {
        assert!((out.hourly[t] - out.hourly[t - 1]).abs() <= out.hourly_survival[t - 1]);
    }
}

#[test]
fn first_consistent_hour() {
    assert_eq!(first_consistent(&[0.2, 0.7, 0.4, 0.6, 0.9]), Some(3));
    assert_eq!(first_consistent(&[0.6, 0.7]), Some(0));
    assert_eq!(first_consistent(&[]), None);
}
