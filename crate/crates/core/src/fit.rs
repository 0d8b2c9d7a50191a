//! Per-shape fitting loop.

use std::ops::ControlFlow;
use std::time::Instant;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TriplaneField;
use crate::loss::loss_grad;
use crate::optim::{AdamConfig, FieldOptimizer};
use crate::proposals::PartProposal;
use crate::rng::derive;
use crate::sampler::{build_triplet_batch, ProposalPool, SamplerConfig, UnitFeatures};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub resolution: usize,
    pub channels: usize,
    pub init_scale: f64,
    /// First iteration at which feature-hard negatives are drawn.
    pub feature_hard_start: usize,
    /// Feature-hard negatives use features refreshed this often.
    pub feature_refresh: usize,
    pub snapshot_every: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 2000,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            resolution: 128,
            channels: 64,
            init_scale: 0.01,
            feature_hard_start: 500,
            feature_refresh: 1,
            snapshot_every: 100,
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("learning_rate {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} {b} outside [0, 1)")));
            }
        }
        if self.snapshot_every == 0 || self.feature_refresh == 0 {
            return Err(Error::InvalidArgument(
                "snapshot_every and feature_refresh must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSnapshot {
    pub iteration: usize,
    /// Mean batch loss since the previous snapshot.
    pub loss: f64,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub snapshots: Vec<LossSnapshot>,
    pub rejected_steps: usize,
    pub proposals_used: usize,
    pub final_temperature: f64,
    /// Only recorded when timing is requested, so reports stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// State handed to the observer after each snapshot.
pub struct FitProgress<'a> {
    pub iteration: usize,
    pub snapshot: &'a LossSnapshot,
    pub field: &'a TriplaneField,
}

pub fn fit_field(
    positions: &[DVec3],
    proposals: &[PartProposal],
    config: &FitConfig,
) -> Result<(TriplaneField, FitReport)> {
    fit_field_with(positions, proposals, config, |_| ControlFlow::Continue(()))
}

/// Fits a fresh field. `observe` runs at every snapshot and may stop the fit
/// early by returning `Break`.
pub fn fit_field_with(
    positions: &[DVec3],
    proposals: &[PartProposal],
    config: &FitConfig,
    observe: impl FnMut(FitProgress<'_>) -> ControlFlow<()>,
) -> Result<(TriplaneField, FitReport)> {
    config.validate()?;
    let field = TriplaneField::new_triplane(
        config.resolution,
        config.channels,
        config.init_scale,
        derive(config.seed, 0),
    )?;
    fit_existing(field, positions, proposals, config, observe)
}

/// Continues fitting `field` (its resolution and channels win over the
/// config's).
pub fn fit_existing(
    mut field: TriplaneField,
    positions: &[DVec3],
    proposals: &[PartProposal],
    config: &FitConfig,
    mut observe: impl FnMut(FitProgress<'_>) -> ControlFlow<()>,
) -> Result<(TriplaneField, FitReport)> {
    config.validate()?;
    if let Some(p) = proposals.iter().find(|p| p.element_count as usize != positions.len()) {
        return Err(Error::ShapeMismatch(format!(
            "proposal over {} elements, {} positions",
            p.element_count,
            positions.len()
        )));
    }
    let start = Instant::now();
    let mut report = FitReport {
        iterations: 0,
        initial_loss: None,
        final_loss: None,
        snapshots: Vec::new(),
        rejected_steps: 0,
        proposals_used: 0,
        final_temperature: field.temperature(),
        wall_clock_seconds: None,
    };
    if config.iterations == 0 {
        return Ok((field, report));
    }
    let pool = ProposalPool::new(proposals)?;
    report.proposals_used = pool.len();
    let mut opt = FieldOptimizer::new(&field, config.adam());
    let early = SamplerConfig {
        feature_hard_negatives: 0,
        ..config.sampler.clone()
    };
    let mut unit: Option<UnitFeatures> = None;
    let mut window = (0.0, 0usize);

    for it in 0..config.iterations {
        let hard_on = it >= config.feature_hard_start && config.sampler.feature_hard_negatives > 0;
        if hard_on && (unit.is_none() || (it - config.feature_hard_start).is_multiple_of(config.feature_refresh)) {
            let rows = field.query_f64(positions);
            unit = Some(UnitFeatures::from_rows(rows, field.channels));
        }
        let (cfg, feats) = if hard_on {
            (&config.sampler, unit.as_ref())
        } else {
            (&early, None)
        };
        let batch = build_triplet_batch(&pool, cfg, positions, feats, derive(config.seed, it as u64 + 1))?;
        let g = loss_grad(&batch, &field, positions)?;
        if !g.loss.is_finite() {
            return Err(Error::Divergence(it));
        }
        report.initial_loss.get_or_insert(g.loss);
        report.final_loss = Some(g.loss);
        window.0 += g.loss;
        window.1 += 1;
        if opt.step(&mut field, &g.planes, g.log_temperature).is_err() {
            report.rejected_steps += 1;
            log::warn!("iteration {it}: non-finite gradient, step rejected");
        }
        report.iterations = it + 1;
        let last = it + 1 == config.iterations;
        if (it + 1) % config.snapshot_every == 0 || last {
            let snap = LossSnapshot {
                iteration: it + 1,
                loss: window.0 / window.1 as f64,
                temperature: field.temperature(),
            };
            window = (0.0, 0);
            report.snapshots.push(snap);
            let flow = observe(FitProgress {
                iteration: it + 1,
                snapshot: report.snapshots.last().unwrap(),
                field: &field,
            });
            if flow.is_break() {
                break;
            }
        }
    }
    report.final_temperature = field.temperature();
    report.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    Ok((field, report))
}
