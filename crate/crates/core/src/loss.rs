//! Symmetric relative triplet loss.
//!
//! For a pair `(a, b)` with negatives `c_1..c_m` and `s(x, y) =
//! exp(cos(x, y) / tau)`:
//!
//! ```text
//! l = -1/2 [ ln s(a,b) / (s(a,b) + sum_c s(a,c))
//!          + ln s(b,a) / (s(b,a) + sum_c s(b,c)) ]
//! ```
//!
//! averaged over pairs. Evaluated with log-sum-exp; each log-probability is
//! floored at `ln(1e-12)`, where its gradient is zero.

use glam::DVec3;

use crate::error::{Error, Result};
use crate::field::TriplaneField;
use crate::kernels::{axpy, dot};
use crate::sampler::TripletBatch;

pub const PROB_FLOOR: f64 = 1e-12;
/// Feature norms below this make a cosine degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Either vector had near-zero norm; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Cosine {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu < DEGENERATE_NORM || nv < DEGENERATE_NORM {
        return Cosine {
            value: 0.0,
            degenerate: true,
        };
    }
    let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Cosine {
        value: (d / (nu * nv)).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// Features for the elements a batch touches, looked up by element id.
#[derive(Clone, Debug)]
pub struct ElementFeatures {
    pub dim: usize,
    /// Element ids, one per row.
    pub ids: Vec<u32>,
    pub rows: Vec<f64>,
    slot: Vec<u32>,
}

impl ElementFeatures {
    /// Rows for elements `0..rows.len() / dim`.
    pub fn dense(rows: Vec<f64>, dim: usize) -> ElementFeatures {
        let n = rows.len() / dim;
        ElementFeatures {
            dim,
            ids: (0..n as u32).collect(),
            rows,
            slot: (0..n as u32).collect(),
        }
    }

    /// Queries `field` at the positions of every element `batch` uses.
    pub fn gather(field: &TriplaneField, batch: &TripletBatch, positions: &[DVec3]) -> Result<ElementFeatures> {
        let ids = batch_elements(batch);
        if let Some(&max) = ids.last() {
            if max as usize >= positions.len() {
                return Err(Error::InvalidArgument(format!(
                    "element {max} out of range for {} positions",
                    positions.len()
                )));
            }
        }
        let pts: Vec<DVec3> = ids.iter().map(|&i| positions[i as usize]).collect();
        let rows = field.query_f64(&pts);
        let mut slot = vec![u32::MAX; ids.last().map_or(0, |&m| m as usize + 1)];
        for (r, &i) in ids.iter().enumerate() {
            slot[i as usize] = r as u32;
        }
        Ok(ElementFeatures {
            dim: field.channels,
            ids,
            rows,
            slot,
        })
    }

    pub fn row_of(&self, id: u32) -> usize {
        match self.slot.get(id as usize) {
            Some(&r) if r != u32::MAX => r as usize,
            _ => panic!("element {id} has no feature row"),
        }
    }

    pub fn positions(&self, positions: &[DVec3]) -> Vec<DVec3> {
        self.ids.iter().map(|&i| positions[i as usize]).collect()
    }
}

/// Sorted unique element ids used by a batch.
pub fn batch_elements(batch: &TripletBatch) -> Vec<u32> {
    let all = || {
        batch
            .pairs
            .iter()
            .flat_map(|p| [p.anchor, p.positive])
            .chain(batch.negatives.iter().copied())
    };
    let n = all().max().map_or(0, |m| m as usize + 1);
    let mut seen = vec![false; n];
    all().for_each(|i| seen[i as usize] = true);
    (0..n as u32).filter(|&i| seen[i as usize]).collect()
}

#[derive(Clone, Debug)]
pub struct FeatureLoss {
    pub loss: f64,
    /// Gradient with respect to each row of the input features.
    pub features: Vec<f64>,
    pub log_temperature: f64,
}

/// Loss (and optionally gradients) on explicit features.
pub fn loss_on_features(
    batch: &TripletBatch,
    feats: &ElementFeatures,
    log_temperature: f64,
    want_grad: bool,
) -> Result<FeatureLoss> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty triplet batch".into()));
    }
    if feats.rows.iter().any(|x| !x.is_finite()) || !log_temperature.is_finite() {
        return Err(Error::NonFinite("loss inputs".into()));
    }
    let dim = feats.dim;
    let tau = log_temperature.exp();
    let n_rows = feats.rows.len() / dim;
    let mut unit = feats.rows.clone();
    let mut norms = vec![0.0; n_rows];
    for (row, n) in unit.chunks_mut(dim).zip(norms.iter_mut()) {
        *n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s = if *n < DEGENERATE_NORM { 0.0 } else { 1.0 / *n };
        row.iter_mut().for_each(|x| *x *= s);
    }
    let u = |r: usize| &unit[r * dim..(r + 1) * dim];

    let pairs = batch.len() as f64;
    let ln_floor = PROB_FLOOR.ln();
    let w = 0.5 / pairs;
    let mut g_unit = if want_grad { vec![0.0; unit.len()] } else { Vec::new() };
    let mut g_theta = 0.0;
    let mut total = 0.0;
    let m = batch.counts.total();
    let mut za = vec![0.0; m];
    let mut zb = vec![0.0; m];
    let mut pa_buf = vec![0.0; m];
    let mut pb_buf = vec![0.0; m];
    let mut rows_c = vec![0usize; m];
    let mut ga = vec![0.0; dim];
    let mut gb = vec![0.0; dim];

    for (i, pair) in batch.pairs.iter().enumerate() {
        let ra = feats.row_of(pair.anchor);
        let rb = feats.row_of(pair.positive);
        let (ua, ub) = (u(ra), u(rb));
        let z_ab = dot(ua, ub) / tau;
        for (k, &c) in batch.negatives_of(i).iter().enumerate() {
            let rc = feats.row_of(c);
            rows_c[k] = rc;
            za[k] = dot(ua, u(rc)) / tau;
            zb[k] = dot(ub, u(rc)) / tau;
        }
        let (la, _) = side_log_prob(z_ab, &za, &mut pa_buf);
        let (lb, _) = side_log_prob(z_ab, &zb, &mut pb_buf);
        let (fa, fb) = (la < ln_floor, lb < ln_floor);
        total += -0.5 * (la.max(ln_floor) + lb.max(ln_floor));
        if !want_grad || (fa && fb) {
            continue;
        }
        // d(-logp)/dz is -(1 - p_pos) for the positive and p_c per negative.
        let mut g_pos = 0.0;
        if !fa {
            g_pos += -(1.0 - la.exp()) * w;
        }
        if !fb {
            g_pos += -(1.0 - lb.exp()) * w;
        }
        g_theta -= g_pos * z_ab;
        ga.iter_mut().zip(ub).for_each(|(g, x)| *g = g_pos / tau * x);
        gb.iter_mut().zip(ua).for_each(|(g, x)| *g = g_pos / tau * x);
        for k in 0..m {
            let pa = if fa { 0.0 } else { pa_buf[k] * w };
            let pb = if fb { 0.0 } else { pb_buf[k] * w };
            g_theta -= pa * za[k] + pb * zb[k];
            let rc = rows_c[k];
            let uc = &unit[rc * dim..(rc + 1) * dim];
            axpy(pa / tau, uc, &mut ga);
            axpy(pb / tau, uc, &mut gb);
            let gc = &mut g_unit[rc * dim..(rc + 1) * dim];
            axpy(pa / tau, ua, gc);
            axpy(pb / tau, ub, gc);
        }
        axpy(1.0, &ga, &mut g_unit[ra * dim..(ra + 1) * dim]);
        axpy(1.0, &gb, &mut g_unit[rb * dim..(rb + 1) * dim]);
    }

    let mut g_feat = Vec::new();
    if want_grad {
        g_feat = vec![0.0; unit.len()];
        for r in 0..n_rows {
            if norms[r] < DEGENERATE_NORM {
                continue;
            }
            let ur = &unit[r * dim..(r + 1) * dim];
            let gr = &g_unit[r * dim..(r + 1) * dim];
            let proj = dot(gr, ur);
            for k in 0..dim {
                g_feat[r * dim + k] = (gr[k] - proj * ur[k]) / norms[r];
            }
        }
    }
    Ok(FeatureLoss {
        loss: total / pairs,
        features: g_feat,
        log_temperature: g_theta,
    })
}

/// Log-probability of the positive logit `z_pos` against `z_neg` and the
/// log-sum-exp over all logits; writes the negatives' softmax probabilities
/// into `probs`.
fn side_log_prob(z_pos: f64, z_neg: &[f64], probs: &mut [f64]) -> (f64, f64) {
    let max = z_neg.iter().copied().fold(z_pos, f64::max);
    let mut sum = (z_pos - max).exp();
    for (p, &z) in probs.iter_mut().zip(z_neg) {
        *p = (z - max).exp();
        sum += *p;
    }
    let lse = max + sum.ln();
    let inv = 1.0 / sum;
    probs.iter_mut().for_each(|p| *p *= inv);
    (z_pos - lse, lse)
}

#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    pub planes: Vec<f64>,
    pub log_temperature: f64,
}

pub fn contrastive_loss(batch: &TripletBatch, field: &TriplaneField, positions: &[DVec3]) -> Result<f64> {
    let feats = ElementFeatures::gather(field, batch, positions)?;
    Ok(loss_on_features(batch, &feats, field.log_temperature as f64, false)?.loss)
}

pub fn loss_grad(batch: &TripletBatch, field: &TriplaneField, positions: &[DVec3]) -> Result<LossGrad> {
    let feats = ElementFeatures::gather(field, batch, positions)?;
    let fl = loss_on_features(batch, &feats, field.log_temperature as f64, true)?;
    let pts = feats.positions(positions);
    let planes = field.query_grad(&pts, &fl.features);
    Ok(LossGrad {
        loss: fl.loss,
        planes,
        log_temperature: fl.log_temperature,
    })
}
