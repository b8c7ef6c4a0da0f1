use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::{backward_prefix, forward_prefix, pool_segment, pool_segment_backward, PrefixOutput, SegmentInput};
use super::params::{HstConfig, Params};
use super::survival::{self, LossConfig, LossParts, SurvivalTrace};
use super::HstError;
use crate::evalkit::decide;
use crate::spm::Segmentation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hst {
    pub config: HstConfig,
    pub params: Params,
}

/// One training address: its segments in order and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub segments: Vec<SegmentInput>,
    pub malicious: bool,
}

/// Hour-by-hour replay of one address.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamOutput {
    /// Combined prediction at every hour.
    pub hourly: Vec<f64>,
    pub hourly_survival: Vec<f64>,
    /// Trace over completed segments.
    pub splits: SurvivalTrace,
    /// Status of each completed segment.
    pub statuses: Vec<usize>,
    /// First hour with survival at or below the threshold.
    pub t_die: Option<usize>,
    /// First hour after which the hard decision never changes.
    pub t_fc: Option<usize>,
}

struct SampleRun {
    pool_caches: Vec<super::layers::PoolCache>,
    embeds: Vec<Vec<f64>>,
    prefixes: Vec<super::layers::PrefixCache>,
    trace: SurvivalTrace,
}

impl Hst {
    pub fn new(config: HstConfig, seed: u64) -> Self {
        let params = Params::init(&config, seed);
        Self { config, params }
    }

    pub fn pad(&self, v: &[f64]) -> Result<Vec<f64>, HstError> {
        let d = self.config.d_model;
        if v.len() > d {
            return Err(HstError::Width { got: v.len(), max: d });
        }
        let mut out = v.to_vec();
        out.resize(d, 0.0);
        Ok(out)
    }

    /// Pad a segment's rows and vector to model width.
    pub fn segment_input(&self, rows: &[Vec<f64>], vector: &[f64], status: usize) -> Result<SegmentInput, HstError> {
        if rows.is_empty() {
            return Err(HstError::EmptySegment);
        }
        self.embed_status(status)?;
        Ok(SegmentInput {
            rows: rows.iter().map(|r| self.pad(r)).collect::<Result<_, _>>()?,
            vector: self.pad(vector)?,
            status,
        })
    }

    pub fn embed_status(&self, id: usize) -> Result<&[f64], HstError> {
        if id >= self.params.embed.rows {
            return Err(HstError::Status { id, rows: self.params.embed.rows });
        }
        Ok(self.params.embed.row(id))
    }

    fn check(&self, segments: &[SegmentInput]) -> Result<(), HstError> {
        if segments.is_empty() {
            return Err(HstError::NoSegments);
        }
        for s in segments {
            self.embed_status(s.status)?;
            if s.rows.is_empty() {
                return Err(HstError::EmptySegment);
            }
        }
        Ok(())
    }

    /// Raw prediction and hazard at split `p = segments.len()`.
    pub fn forward(&self, segments: &[SegmentInput]) -> Result<PrefixOutput, HstError> {
        self.check(segments)?;
        let embeds: Vec<Vec<f64>> = segments.iter().map(|s| self.params.embed.row(s.status).to_vec()).collect();
        let pooled: Vec<Vec<f64>> = segments.iter().zip(&embeds).map(|(s, u)| pool_segment(&self.params, &s.rows, u).0).collect();
        let vectors: Vec<Vec<f64>> = segments.iter().map(|s| s.vector.clone()).collect();
        Ok(forward_prefix(&self.config, &self.params, &pooled, &vectors, &embeds).0)
    }

    fn run_cached(&self, segments: &[SegmentInput], s_min: f64) -> Result<SampleRun, HstError> {
        self.check(segments)?;
        let embeds: Vec<Vec<f64>> = segments.iter().map(|s| self.params.embed.row(s.status).to_vec()).collect();
        let mut pooled = Vec::with_capacity(segments.len());
        let mut pool_caches = Vec::with_capacity(segments.len());
        for (s, u) in segments.iter().zip(&embeds) {
            let (f, c) = pool_segment(&self.params, &s.rows, u);
            pooled.push(f);
            pool_caches.push(c);
        }
        let vectors: Vec<Vec<f64>> = segments.iter().map(|s| s.vector.clone()).collect();
        let mut prefixes = Vec::with_capacity(segments.len());
        let (mut y, mut hz) = (Vec::new(), Vec::new());
        for p in 1..=segments.len() {
            let (out, cache) = forward_prefix(&self.config, &self.params, &pooled[..p], &vectors[..p], &embeds[..p]);
            y.push(out.y);
            hz.push(out.hazard);
            prefixes.push(cache);
        }
        let trace = survival::survival_trace(&y, &hz, s_min);
        Ok(SampleRun { pool_caches, embeds, prefixes, trace })
    }

    /// Survival trace over every prefix of the segments.
    pub fn run(&self, segments: &[SegmentInput], s_min: f64) -> Result<SurvivalTrace, HstError> {
        Ok(self.run_cached(segments, s_min)?.trace)
    }

    pub fn loss(&self, sample: &Sample, cfg: &LossConfig) -> Result<LossParts, HstError> {
        let trace = self.run(&sample.segments, 0.0)?;
        Ok(survival::losses(&trace, sample.malicious, cfg).0)
    }

    /// Loss of one sample; parameter gradients are added to `grads`.
    pub fn loss_and_grad(&self, sample: &Sample, cfg: &LossConfig, grads: &mut Params) -> Result<LossParts, HstError> {
        self.loss_and_grad_gated(sample, cfg, grads, true)
    }

    /// As [`Hst::loss_and_grad`]; with `gated = false` every hazard is
    /// replaced by 0, so `S = 1`, `yhat = y` and the hazard head gets no
    /// gradient.
    pub fn loss_and_grad_gated(
        &self,
        sample: &Sample,
        cfg: &LossConfig,
        grads: &mut Params,
        gated: bool,
    ) -> Result<LossParts, HstError> {
        let mut run = self.run_cached(&sample.segments, 0.0)?;
        if !gated {
            run.trace = survival::survival_trace(&run.trace.y, &vec![0.0; run.trace.y.len()], 0.0);
        }
        let (parts, gy, mut gl) = survival::losses(&run.trace, sample.malicious, cfg);
        if !gated {
            gl.iter_mut().for_each(|g| *g = 0.0);
        }
        let n = sample.segments.len();
        let vectors: Vec<Vec<f64>> = sample.segments.iter().map(|s| s.vector.clone()).collect();
        let d = self.config.d_model;
        let mut gpooled = vec![vec![0.0; d]; n];
        let mut gembeds = vec![vec![0.0; d]; n];
        for p in (1..=n).rev() {
            if gy[p - 1] == 0.0 && gl[p - 1] == 0.0 {
                continue;
            }
            let (gf, ge) = backward_prefix(
                &self.config,
                &self.params,
                grads,
                &vectors[..p],
                &run.embeds[..p],
                &run.prefixes[p - 1],
                gy[p - 1],
                gl[p - 1],
            );
            for i in 0..p {
                for (a, b) in gpooled[i].iter_mut().zip(&gf[i]) {
                    *a += b;
                }
                for (a, b) in gembeds[i].iter_mut().zip(&ge[i]) {
                    *a += b;
                }
            }
        }
        for (i, s) in sample.segments.iter().enumerate() {
            let gu = pool_segment_backward(&self.params, grads, &s.rows, &run.embeds[i], &run.pool_caches[i], &gpooled[i]);
            let row = grads.embed.row_mut(s.status);
            for ((a, b), c) in row.iter_mut().zip(&gembeds[i]).zip(&gu) {
                *a += b + c;
            }
        }
        Ok(parts)
    }

    /// Replay an address hour by hour. `rows` are model-space feature rows
    /// (unpadded); `describe(j, slice)` returns the segment vector and status
    /// for segment `j` observed over `slice`. While a segment is still open
    /// its provisional prefix is used; at the segment's last hour the value
    /// equals the completed split's prediction.
    pub fn predict_stream<F>(
        &self,
        rows: &[Vec<f64>],
        segmentation: &Segmentation,
        s_min: f64,
        mut describe: F,
    ) -> Result<StreamOutput, HstError>
    where
        F: FnMut(usize, &[Vec<f64>]) -> (Vec<f64>, usize),
    {
        let horizon = segmentation.horizon().min(rows.len());
        let padded: Vec<Vec<f64>> = rows[..horizon].iter().map(|r| self.pad(r)).collect::<Result<_, _>>()?;
        let mut pooled: Vec<Vec<f64>> = Vec::new();
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        let mut embeds: Vec<Vec<f64>> = Vec::new();
        let mut statuses = Vec::new();
        let (mut ys, mut hz) = (Vec::new(), Vec::new());
        let (mut s_prev, mut yh_prev) = (1.0, survival::PRIOR);
        let mut hourly = Vec::with_capacity(horizon);
        let mut hourly_survival = Vec::with_capacity(horizon);
        let mut t_die = None;
        for t in 0..horizon {
            let j = segmentation.segment_of(t);
            let (b, e) = segmentation.segments()[j];
            let (vector, status) = describe(j, &rows[b..=t]);
            let u = self.embed_status(status)?.to_vec();
            let (f, _) = pool_segment(&self.params, &padded[b..=t], &u);
            let mut pp = pooled.clone();
            pp.push(f.clone());
            let mut vv = vectors.clone();
            vv.push(self.pad(&vector)?);
            let mut ee = embeds.clone();
            ee.push(u.clone());
            let (out, _) = forward_prefix(&self.config, &self.params, &pp, &vv, &ee);
            let (s, yh) = survival::survival_step(s_prev, yh_prev, out.y, out.hazard);
            hourly.push(yh);
            hourly_survival.push(s);
            if t_die.is_none() && s <= s_min {
                t_die = Some(t);
            }
            if t + 1 == e {
                pooled = pp;
                vectors = vv;
                embeds = ee;
                statuses.push(status);
                ys.push(out.y);
                hz.push(out.hazard);
                s_prev = s;
                yh_prev = yh;
            }
        }
        let splits = survival::survival_trace(&ys, &hz, s_min);
        let t_fc = first_consistent(&hourly);
        Ok(StreamOutput { hourly, hourly_survival, splits, statuses, t_die, t_fc })
    }
}

/// First index after which the hard decision never changes.
pub fn first_consistent(series: &[f64]) -> Option<usize> {
    let last = decide(*series.last()?);
    let mut t = series.len();
    while t > 0 && decide(series[t - 1]) == last {
        t -= 1;
    }
    Some(t)
}

/// Per-tensor relative error `|a - n| / (|a| + |n|)` between analytic and
/// central-difference gradients of the summed loss over `samples`.
pub fn gradient_check(model: &Hst, samples: &[Sample], cfg: &LossConfig, h: f64) -> Result<Vec<(String, f64)>, HstError> {
    let mut analytic = model.params.zeros_like();
    for s in samples {
        model.loss_and_grad(s, cfg, &mut analytic)?;
    }
    let total = |m: &Hst| -> Result<f64, HstError> {
        let mut t = 0.0;
        for s in samples {
            t += m.loss(s, cfg)?.total;
        }
        Ok(t)
    };
    let mut probe = model.clone();
    let mut names = Vec::new();
    let mut shapes = Vec::new();
    model.params.visit(|n, m| {
        names.push(String::from(n));
        shapes.push(m.data.len());
    });
    let grads = analytic.flat();
    let mut out = Vec::new();
    let mut offset = 0;
    for (ti, name) in names.iter().enumerate() {
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for k in 0..shapes[ti] {
            let at = offset + k;
            let base = model.params.flat()[at];
            set_flat(&mut probe.params, at, base + h);
            let up = total(&probe)?;
            set_flat(&mut probe.params, at, base - h);
            let down = total(&probe)?;
            set_flat(&mut probe.params, at, base);
            let num = (up - down) / (2.0 * h);
            let a = grads[at];
            diff += (a - num) * (a - num);
            na += a * a;
            nn += num * num;
        }
        let denom = crate::math::sqrt(na) + crate::math::sqrt(nn);
        let rel = if denom < 1e-12 { 0.0 } else { crate::math::sqrt(diff) / denom };
        out.push((name.clone(), rel));
        offset += shapes[ti];
    }
    Ok(out)
}

fn set_flat(p: &mut Params, index: usize, value: f64) {
    let mut at = 0;
    p.visit_mut(|_, m| {
        if index >= at && index < at + m.data.len() {
            m.data[index - at] = value;
        }
        at += m.data.len();
    });
}
