use serde::{Deserialize, Serialize};

use crate::clustering::Segmentation;
use crate::error::{Error, Result};
use crate::field::FeatureSet;

pub const DEFAULT_LAMBDA: f64 = 1e-2;
const GRAD_TOL: f64 = 1e-6;
const MAX_STEPS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub element: u32,
    pub class: u32,
}

/// One-vs-rest logistic regression on unit-normalized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// Sorted class ids; predictions index into this list.
    pub classes: Vec<u32>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub lambda: f64,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Mean binary log-loss plus `lambda / 2 * |w|^2` (bias unpenalized), and
/// its gradient `(dw, db)`.
pub fn logreg_objective(x: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, lambda: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw: Vec<f64> = w.iter().map(|wi| lambda * wi).collect();
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let s = b + xi.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += softplus(s) - yi * s;
        let r = (sigmoid(s) - yi) / n;
        gb += r;
        gw.iter_mut().zip(xi).for_each(|(g, a)| *g += r * a);
    }
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    (loss / n + reg, gw, gb)
}

fn grad_norm(gw: &[f64], gb: f64) -> f64 {
    (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt()
}

/// Gradient descent with Armijo backtracking until the gradient norm drops
/// below 1e-6. Each coordinate is scaled by the inverse of a bound on its
/// Hessian diagonal, so a heavy penalty on the weights does not slow the
/// unpenalized bias.
fn fit_binary(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let n = x.len() as f64;
    let scale_w: Vec<f64> = (0..d)
        .map(|k| 1.0 / (lambda + 0.25 * x.iter().map(|xi| xi[k] * xi[k]).sum::<f64>() / n))
        .collect();
    let scale_b = 4.0;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut step = 1.0;
    let (mut f, mut gw, mut gb) = logreg_objective(x, y, &w, b, lambda);
    for _ in 0..MAX_STEPS {
        if grad_norm(&gw, gb) < GRAD_TOL {
            return (w, b);
        }
        let dw: Vec<f64> = gw.iter().zip(&scale_w).map(|(g, s)| g * s).collect();
        let db = gb * scale_b;
        let decrease = gw.iter().zip(&dw).map(|(g, v)| g * v).sum::<f64>() + gb * db;
        step *= 2.0;
        loop {
            let w2: Vec<f64> = w.iter().zip(&dw).map(|(a, v)| a - step * v).collect();
            let b2 = b - step * db;
            let (f2, gw2, gb2) = logreg_objective(x, y, &w2, b2, lambda);
            if f2 <= f - 0.5 * step * decrease || step < 1e-12 {
                w = w2;
                b = b2;
                f = f2;
                gw = gw2;
                gb = gb2;
                break;
            }
            step *= 0.5;
        }
    }
    log::warn!(
        "logistic regression stopped at gradient norm {:.3e}",
        grad_norm(&gw, gb)
    );
    (w, b)
}

pub fn fit_logreg(features: &FeatureSet, annotations: &[Annotation], lambda: f64) -> Result<LogRegModel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be positive")));
    }
    let mut ann = annotations.to_vec();
    ann.sort_by_key(|a| (a.element, a.class));
    ann.dedup();
    if let Some(w) = ann.windows(2).find(|w| w[0].element == w[1].element) {
        return Err(Error::InvalidArgument(format!(
            "element {} annotated with classes {} and {}",
            w[0].element, w[0].class, w[1].class
        )));
    }
    if let Some(a) = ann.iter().find(|a| a.element as usize >= features.len()) {
        return Err(Error::InvalidArgument(format!(
            "annotated element {} out of range",
            a.element
        )));
    }
    let mut classes: Vec<u32> = ann.iter().map(|a| a.class).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(
            "at least two annotated classes are required".into(),
        ));
    }
    let rows = features.normalized();
    let d = features.dim;
    let x: Vec<Vec<f64>> = ann
        .iter()
        .map(|a| rows[a.element as usize * d..(a.element as usize + 1) * d].to_vec())
        .collect();
    let mut weights = Vec::with_capacity(classes.len());
    let mut bias = Vec::with_capacity(classes.len());
    for &c in &classes {
        let y: Vec<f64> = ann.iter().map(|a| (a.class == c) as u8 as f64).collect();
        let (w, b) = fit_binary(&x, &y, lambda);
        weights.push(w);
        bias.push(b);
    }
    Ok(LogRegModel {
        classes,
        weights,
        bias,
        lambda,
    })
}

/// Index (into `model.classes`) of the highest-scoring class per element.
pub fn predict(model: &LogRegModel, features: &FeatureSet) -> Result<Segmentation> {
    let d = features.dim;
    if model.weights.first().is_some_and(|w| w.len() != d) {
        return Err(Error::ShapeMismatch(format!(
            "model of dim {}, features of dim {d}",
            model.weights[0].len()
        )));
    }
    let rows = features.normalized();
    let labels = rows
        .chunks(d)
        .map(|x| {
            let mut best = (f64::NEG_INFINITY, 0u32);
            for (c, (w, b)) in model.weights.iter().zip(&model.bias).enumerate() {
                let s = b + x.iter().zip(w).map(|(a, v)| a * v).sum::<f64>();
                if s > best.0 {
                    best = (s, c as u32);
                }
            }
            best.1
        })
        .collect();
    Ok(Segmentation {
        k: model.classes.len(),
        labels,
    })
}
