//! Prediction, extrinsic and belief messages of one potential object.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::EngineConfig;
use crate::error::{Error, Result};
use crate::models::{birth_candidates, BirthModel, MotionModel};
use crate::particles::{log_odds_probability, logsumexp, ParticleSet};
use crate::state::{LabelCounter, Label, MeasurementImage, PotentialObject};

/// Prediction message of one object: existence mass plus the predicted state density
/// conditioned on existence. The non-existence mass is `1 - existence_mass`.
#[derive(Debug, Clone)]
pub struct AlphaMessage {
    pub label: Label,
    pub existence_mass: f64,
    pub spatial: ParticleSet,
    pub born_at: u32,
    pub origin_cell: Option<usize>,
}

/// Extrinsic message from an object to one cell. The particles are those of the
/// object's [`AlphaMessage`]; only the weights differ.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaMessage {
    pub existence_mass: f64,
    /// Normalized log-weights conditioned on existence.
    pub spatial_log_weights: Vec<f64>,
}

impl BetaMessage {
    /// The first-iteration message, identical to the prediction.
    pub fn from_alpha(alpha: &AlphaMessage) -> Self {
        Self {
            existence_mass: alpha.existence_mass,
            spatial_log_weights: alpha.spatial.log_weights().to_vec(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.existence_mass * libm::exp(logsumexp(&self.spatial_log_weights)) + (1.0 - self.existence_mass)
    }
}

/// Log values of the cell messages received by one object: per gated cell, one value
/// per particle for `r = 1` and one value for `r = 0`. Cells outside the gate carry
/// identical values for both hypotheses and are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaLogs {
    cells: Vec<usize>,
    particles: usize,
    present: Vec<f64>,
    absent: Vec<f64>,
}

/// Sums of [`KappaLogs`] over all gated cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProducts {
    pub present: Vec<f64>,
    pub absent: f64,
}

impl KappaLogs {
    /// All-ones messages (log value zero).
    pub fn uninformative(cells: Vec<usize>, particles: usize) -> Self {
        let n = cells.len();
        Self {
            cells,
            particles,
            present: vec![0.0; n * particles],
            absent: vec![0.0; n],
        }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn num_particles(&self) -> usize {
        self.particles
    }

    pub fn present(&self, slot: usize) -> &[f64] {
        &self.present[slot * self.particles..(slot + 1) * self.particles]
    }

    pub fn present_mut(&mut self, slot: usize) -> &mut [f64] {
        &mut self.present[slot * self.particles..(slot + 1) * self.particles]
    }

    pub fn absent(&self, slot: usize) -> f64 {
        self.absent[slot]
    }

    pub fn set_absent(&mut self, slot: usize, value: f64) {
        self.absent[slot] = value;
    }

    pub fn totals(&self) -> LogProducts {
        let mut present = vec![0.0; self.particles];
        for row in self.present.chunks_exact(self.particles.max(1)) {
            for (acc, v) in present.iter_mut().zip(row) {
                *acc += v;
            }
        }
        LogProducts {
            present,
            absent: self.absent.iter().sum(),
        }
    }
}

/// Predict a potential object one step ahead.
pub fn predict<R: Rng + ?Sized>(po: &PotentialObject, motion: &MotionModel, rng: &mut R) -> Result<AlphaMessage> {
    let resampled = po.spatial.resample(po.spatial.len(), rng)?;
    let (particles, log_weights) = resampled.into_parts();
    let propagated = particles.iter().map(|x| motion.sample(x, rng)).collect();
    Ok(AlphaMessage {
        label: po.label,
        existence_mass: motion.survival * po.existence,
        spatial: ParticleSet::new(propagated, log_weights)?,
        born_at: po.born_at,
        origin_cell: po.origin_cell,
    })
}

/// One new potential object per cell that passes the birth threshold.
pub fn inject_new_pos<R: Rng + ?Sized>(
    image: &MeasurementImage,
    birth: &BirthModel,
    config: &EngineConfig,
    labels: &mut LabelCounter,
    time: u32,
    rng: &mut R,
) -> Result<Vec<AlphaMessage>> {
    let geometry = image.geometry();
    birth_candidates(image, birth)
        .into_iter()
        .map(|j| {
            let particles = (0..config.particles_per_po)
                .map(|_| birth.sample(j, geometry, rng))
                .collect();
            Ok(AlphaMessage {
                label: labels.next_label(),
                existence_mass: birth.p_birth,
                spatial: ParticleSet::uniform(particles)?,
                born_at: time,
                origin_cell: Some(j),
            })
        })
        .collect()
}

fn ln_masses(existence: f64) -> (f64, f64) {
    (libm::log(existence), libm::log(1.0 - existence))
}

/// Extrinsic weights for the cell at `slot`, written as normalized linear weights into
/// `weights`, with the scratch log-weights left in `log_buf`. Returns the existence
/// mass and the log normalizer of the spatial part.
pub(crate) fn extrinsic_weights(
    alpha_existence: f64,
    alpha_log_weights: &[f64],
    totals: &LogProducts,
    kappa: &KappaLogs,
    slot: usize,
    log_buf: &mut [f64],
    weights: &mut [f64],
) -> Result<(f64, f64)> {
    let row = kappa.present(slot);
    let mut max = f64::NEG_INFINITY;
    for p in 0..row.len() {
        let v = alpha_log_weights[p] + (totals.present[p] - row[p]);
        log_buf[p] = v;
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::AllWeightsDegenerate);
    }
    let mut sum = 0.0;
    for (w, lw) in weights.iter_mut().zip(log_buf.iter()) {
        *w = libm::exp(lw - max);
        sum += *w;
    }
    let inv = 1.0 / sum;
    for w in weights.iter_mut() {
        *w *= inv;
    }
    let log_norm = max + libm::log(sum);
    let (ln_exist, ln_absent) = ln_masses(alpha_existence);
    let log_present = ln_exist + log_norm;
    let log_absent = ln_absent + (totals.absent - kappa.absent(slot));
    Ok((log_odds_probability(log_present, log_absent)?, log_norm))
}

/// Extrinsic message to the cell at `slot`: the prediction times every other cell's
/// message, normalized.
pub fn beta_update(alpha: &AlphaMessage, kappa: &KappaLogs, totals: &LogProducts, slot: usize) -> Result<BetaMessage> {
    let n = alpha.spatial.len();
    let mut log_buf = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let (existence, log_norm) = extrinsic_weights(
        alpha.existence_mass,
        alpha.spatial.log_weights(),
        totals,
        kappa,
        slot,
        &mut log_buf,
        &mut weights,
    )?;
    for lw in &mut log_buf {
        *lw -= log_norm;
    }
    Ok(BetaMessage {
        existence_mass: existence,
        spatial_log_weights: log_buf,
    })
}

/// Belief of one object: prediction times all cell messages, normalized, with the
/// spatial part resampled to `particles` equally weighted particles.
pub fn compute_beliefs<R: Rng + ?Sized>(
    alpha: &AlphaMessage,
    kappa: &KappaLogs,
    particles: usize,
    rng: &mut R,
) -> Result<PotentialObject> {
    let totals = kappa.totals();
    let log_weights: Vec<f64> = alpha
        .spatial
        .log_weights()
        .iter()
        .zip(&totals.present)
        .map(|(a, s)| a + s)
        .collect();
    let (ln_exist, ln_absent) = ln_masses(alpha.existence_mass);
    let log_present = ln_exist + logsumexp(&log_weights);
    let log_absent = ln_absent + totals.absent;
    let existence = log_odds_probability(log_present, log_absent)?;
    let posterior = ParticleSet::new(alpha.spatial.particles().to_vec(), log_weights)?;
    let spatial = posterior.resample(particles, rng)?;
    Ok(PotentialObject {
        label: alpha.label,
        existence,
        spatial,
        born_at: alpha.born_at,
        origin_cell: alpha.origin_cell,
    })
}
