//! Statistical models: object dynamics, per-cell birth and the point-spread
//! measurement model.

mod birth;
mod motion;
mod psf;

pub use birth::{birth_candidates, birth_prob_from_rate, detection_threshold, BirthModel};
pub use motion::MotionModel;
pub use psf::{
    loglik_given_states, psf_cov, psf_mean, Contribution, GaussianPsf, KernelMeanPsf,
    PointSpread, Spread,
};

/// Everything the tracker needs to know about the world.
#[derive(Debug, Clone)]
pub struct Models<P> {
    pub motion: MotionModel,
    pub birth: BirthModel,
    pub psf: P,
}
