use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Error, Result};
use crate::state::{GridGeometry, KinematicState, MeasurementImage, Vec2};

/// Per-cell birth model. New objects are proposed only for cells whose measurement
/// norm exceeds `detect_threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthModel {
    /// Birth probability `p_B` of each new potential object.
    pub p_birth: f64,
    /// Upper bound of the uniform intensity prior.
    pub gamma_max: f64,
    /// Per-axis variance of the zero-mean Gaussian velocity prior.
    pub velocity_var: f64,
    pub detect_threshold: f64,
}

impl BirthModel {
    pub fn new(p_birth: f64, gamma_max: f64, velocity_var: f64, detect_threshold: f64) -> Result<Self> {
        ensure(p_birth > 0.0 && p_birth < 1.0, "p_birth", "must lie in (0, 1)")?;
        ensure(gamma_max > 0.0 && gamma_max.is_finite(), "gamma_max", "must be positive")?;
        ensure(
            velocity_var > 0.0 && velocity_var.is_finite(),
            "velocity_var",
            "must be positive",
        )?;
        ensure(
            detect_threshold >= 0.0 && detect_threshold.is_finite(),
            "detect_threshold",
            "must be non-negative",
        )?;
        Ok(Self {
            p_birth,
            gamma_max,
            velocity_var,
            detect_threshold,
        })
    }

    /// Draw a state from the birth density of cell `j`: uniform position inside the
    /// cell, Gaussian velocity, uniform intensity on `[0, gamma_max]`.
    pub fn sample<R: Rng + ?Sized>(&self, j: usize, geometry: &GridGeometry, rng: &mut R) -> KinematicState {
        let (lo, hi) = geometry.cell_bounds(j);
        let position = Vec2::new(
            lo.x + rng.random::<f64>() * (hi.x - lo.x),
            lo.y + rng.random::<f64>() * (hi.y - lo.y),
        );
        let sd = libm::sqrt(self.velocity_var);
        let velocity = Vec2::new(
            sd * rng.sample::<f64, _>(StandardNormal),
            sd * rng.sample::<f64, _>(StandardNormal),
        );
        let intensity = rng.random::<f64>() * self.gamma_max;
        KinematicState::new(position, velocity, intensity)
    }
}

/// `1.5 * sqrt(gamma0 / (2 pi sigma_s^2) + sigma_eps^2)`: the measurement norm a cell
/// must exceed to spawn a new potential object.
pub fn detection_threshold(gamma0: f64, sigma_s_sq: f64, noise_var: f64) -> f64 {
    1.5 * libm::sqrt(gamma0 / (2.0 * PI * sigma_s_sq) + noise_var)
}

/// Cells with `|z_j| > detect_threshold`, ascending.
pub fn birth_candidates(image: &MeasurementImage, birth: &BirthModel) -> Vec<usize> {
    (0..image.num_cells())
        .filter(|&j| image.cell_norm(j) > birth.detect_threshold)
        .collect()
}

/// Birth probability of a cell from the expected number of new objects in it,
/// assuming at most one new object per cell.
pub fn birth_prob_from_rate(rate: f64) -> Result<f64> {
    if rate < 0.0 || rate.is_nan() {
        return Err(Error::NegativeRate(rate));
    }
    Ok(rate / (rate + 1.0))
}
