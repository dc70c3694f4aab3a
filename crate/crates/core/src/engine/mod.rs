//! One tracking step: prediction, new-object injection, iterative message passing,
//! beliefs, declaration/estimation and pruning.

mod kappa;
mod messages;
mod moments;
mod schedule;

use alloc::vec::Vec;

use rand::Rng;

pub use kappa::{kappa_eval, KappaContext};
pub use messages::{
    beta_update, compute_beliefs, inject_new_pos, predict, AlphaMessage, BetaMessage, KappaLogs,
    LogProducts,
};
pub use moments::{compute_moments, CellMoment, MomentTable};
pub use schedule::{auto_gate_radius, run_message_passing, MessagePassingOutput};

use crate::error::{ensure, Result};
use crate::models::{Models, PointSpread};
use crate::state::{KinematicState, Label, LabelCounter, MeasurementImage, PotentialObject};

/// Which cells an object exchanges messages with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// Every cell.
    Disabled,
    /// Cells whose center lies within this distance of the object's mean position.
    Radius(f64),
    /// Radius derived from the point-spread model's reach plus one cell diagonal;
    /// disabled if the model has no finite reach.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Message passing iterations per step.
    pub iterations: usize,
    pub particles_per_po: usize,
    /// Objects with existence strictly above this are declared.
    pub declare_threshold: f64,
    /// Objects with existence strictly below this are removed.
    pub prune_threshold: f64,
    pub gate: Gate,
    /// Keep at most this many objects (highest existence first).
    pub max_pos: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            particles_per_po: 3000,
            declare_threshold: 0.5,
            prune_threshold: 1e-3,
            gate: Gate::Auto,
            max_pos: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.iterations >= 1, "iterations", "must be at least 1")?;
        ensure(self.particles_per_po >= 1, "particles_per_po", "must be at least 1")?;
        ensure(
            self.prune_threshold > 0.0 && self.prune_threshold < self.declare_threshold,
            "prune_threshold",
            "must lie in (0, declare_threshold)",
        )?;
        ensure(self.declare_threshold <= 1.0, "declare_threshold", "must be at most 1")?;
        if let Gate::Radius(r) = self.gate {
            ensure(r > 0.0 && r.is_finite(), "gate_radius", "must be positive")?;
        }
        Ok(())
    }
}

/// A declared object with its minimum mean-square-error state estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub label: Label,
    pub existence: f64,
    pub state: KinematicState,
}

pub fn declare_and_estimate(objects: &[PotentialObject], config: &EngineConfig) -> Vec<Estimate> {
    objects
        .iter()
        .filter(|po| po.existence > config.declare_threshold)
        .map(|po| Estimate {
            label: po.label,
            existence: po.existence,
            state: po.mean_state(),
        })
        .collect()
}

/// Drop objects below the prune threshold, then enforce `max_pos`. Survivors keep their order.
pub fn prune(objects: Vec<PotentialObject>, config: &EngineConfig) -> Vec<PotentialObject> {
    let mut kept: Vec<PotentialObject> = objects
        .into_iter()
        .filter(|po| !(po.existence < config.prune_threshold))
        .collect();
    if let Some(max) = config.max_pos {
        if kept.len() > max {
            let mut order: Vec<usize> = (0..kept.len()).collect();
            order.sort_by(|&a, &b| kept[b].existence.total_cmp(&kept[a].existence).then(a.cmp(&b)));
            let mut keep = alloc::vec![false; kept.len()];
            for &i in &order[..max] {
                keep[i] = true;
            }
            let mut flags = keep.into_iter();
            kept.retain(|_| flags.next().unwrap_or(false));
        }
    }
    kept
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Objects carried to the next step.
    pub objects: Vec<PotentialObject>,
    pub estimates: Vec<Estimate>,
}

/// Process the measurement of time step `time`.
pub fn step<P, R, const D: usize>(
    previous: &[PotentialObject],
    image: &MeasurementImage,
    models: &Models<P>,
    config: &EngineConfig,
    labels: &mut LabelCounter,
    time: u32,
    rng: &mut R,
) -> Result<StepOutput>
where
    P: PointSpread<D>,
    R: Rng + ?Sized,
{
    config.validate()?;
    image.check_dim::<D>()?;
    let mut alphas = previous
        .iter()
        .map(|po| predict(po, &models.motion, rng))
        .collect::<Result<Vec<_>>>()?;
    alphas.extend(inject_new_pos(image, &models.birth, config, labels, time, rng)?);

    let messages = run_message_passing(&alphas, image, &models.psf, config)?;

    let beliefs = alphas
        .iter()
        .zip(&messages.kappas)
        .map(|(alpha, kappa)| compute_beliefs(alpha, kappa, config.particles_per_po, rng))
        .collect::<Result<Vec<_>>>()?;
    let estimates = declare_and_estimate(&beliefs, config);
    Ok(StepOutput {
        objects: prune(beliefs, config),
        estimates,
    })
}

/// Stateful wrapper around [`step`] that owns the objects, the label counter and the clock.
#[derive(Debug, Clone)]
pub struct Tracker<P> {
    models: Models<P>,
    config: EngineConfig,
    objects: Vec<PotentialObject>,
    labels: LabelCounter,
    time: u32,
}

impl<P> Tracker<P> {
    pub fn new(models: Models<P>, config: EngineConfig) -> Self {
        Self {
            models,
            config,
            objects: Vec::new(),
            labels: LabelCounter::new(),
            time: 0,
        }
    }

    pub fn objects(&self) -> &[PotentialObject] {
        &self.objects
    }

    /// Time index of the last processed measurement (0 before the first step).
    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn models(&self) -> &Models<P> {
        &self.models
    }

    pub fn step<R, const D: usize>(&mut self, image: &MeasurementImage, rng: &mut R) -> Result<Vec<Estimate>>
    where
        P: PointSpread<D>,
        R: Rng + ?Sized,
    {
        let time = self.time + 1;
        let out = step(&self.objects, image, &self.models, &self.config, &mut self.labels, time, rng)?;
        self.objects = out.objects;
        self.time = time;
        Ok(out.estimates)
    }
}
