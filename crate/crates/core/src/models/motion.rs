use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};
use crate::state::KinematicState;

/// Nearly-constant-velocity motion with a random-walk intensity.
///
/// Per axis the position/velocity noise has covariance
/// `q_pv * [[dt^3/3, dt^2/2], [dt^2/2, dt]]`; the intensity receives
/// `N(0, q_gamma)` and is clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub q_pv: f64,
    pub q_gamma: f64,
    pub dt: f64,
    pub survival: f64,
}

impl MotionModel {
    pub fn new(q_pv: f64, q_gamma: f64, dt: f64, survival: f64) -> Result<Self> {
        ensure(q_pv >= 0.0 && q_pv.is_finite(), "q_pv", "must be non-negative")?;
        ensure(
            q_gamma >= 0.0 && q_gamma.is_finite(),
            "q_gamma",
            "must be non-negative",
        )?;
        ensure(dt > 0.0 && dt.is_finite(), "dt", "must be positive")?;
        ensure(
            survival > 0.0 && survival <= 1.0,
            "survival",
            "must lie in (0, 1]",
        )?;
        Ok(Self {
            q_pv,
            q_gamma,
            dt,
            survival,
        })
    }

    /// Lower Cholesky factor `[[l11, 0], [l21, l22]]` of the per-axis noise covariance.
    fn noise_factor(&self) -> (f64, f64, f64) {
        let dt = self.dt;
        let a = dt * dt * dt / 3.0;
        let b = dt * dt / 2.0;
        let sq = libm::sqrt(self.q_pv);
        let l11 = sq * libm::sqrt(a);
        let l21 = sq * b / libm::sqrt(a);
        let l22 = sq * libm::sqrt((dt - b * b / a).max(0.0));
        (l11, l21, l22)
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &KinematicState, rng: &mut R) -> KinematicState {
        let (l11, l21, l22) = self.noise_factor();
        let mut position = x.position + x.velocity * self.dt;
        let mut velocity = x.velocity;
        for axis in 0..2 {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            position[axis] += l11 * e1;
            velocity[axis] += l21 * e1 + l22 * e2;
        }
        let g: f64 = rng.sample(StandardNormal);
        let intensity = (x.intensity + libm::sqrt(self.q_gamma) * g).max(0.0);
        KinematicState::new(position, velocity, intensity)
    }

    /// Mean of the next state ignoring the intensity clamp.
    pub fn predicted_mean(&self, x: &KinematicState) -> KinematicState {
        KinematicState::new(x.position + x.velocity * self.dt, x.velocity, x.intensity)
    }

    /// Per-axis position variance of one transition.
    pub fn position_variance(&self) -> f64 {
        self.q_pv * self.dt * self.dt * self.dt / 3.0
    }
}

impl Default for MotionModel {
    fn default() -> Self {
        Self {
            q_pv: 1e-3,
            q_gamma: 1e-4,
            dt: 1.0,
            survival: 0.999,
        }
    }
}
