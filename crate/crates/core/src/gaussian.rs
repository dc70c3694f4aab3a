//! Small dense Gaussian helpers.

use core::f64::consts::PI;

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Diagonal jitter added before factorizing assembled covariances.
pub const COVARIANCE_JITTER: f64 = 1e-12;

/// `ln N(x; mean, cov)` via a Cholesky factorization of the symmetrized covariance.
pub fn log_density<const D: usize>(
    x: &SVector<f64, D>,
    mean: &SVector<f64, D>,
    cov: &SMatrix<f64, D, D>,
) -> Result<f64> {
    let sym = (cov + cov.transpose()) * 0.5 + SMatrix::<f64, D, D>::identity() * COVARIANCE_JITTER;
    let chol = sym.cholesky().ok_or(Error::SingularCovariance)?;
    let diff = x - mean;
    let solved = chol.l().solve_lower_triangular(&diff).ok_or(Error::SingularCovariance)?;
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * libm::log(*v)).sum();
    Ok(-0.5 * (D as f64 * libm::log(2.0 * PI) + log_det + solved.norm_squared()))
}

/// Lower Cholesky factor of `cov`, or `None` if it is not positive semidefinite.
/// Exactly-zero covariances factor to the zero matrix.
pub fn sqrt_factor<const D: usize>(cov: &SMatrix<f64, D, D>) -> Option<SMatrix<f64, D, D>> {
    if cov.iter().all(|v| *v == 0.0) {
        return Some(SMatrix::zeros());
    }
    let sym = (cov + cov.transpose()) * 0.5;
    sym.cholesky()
        .or_else(|| (sym + SMatrix::<f64, D, D>::identity() * COVARIANCE_JITTER).cholesky())
        .map(|c| c.l())
}

pub fn standard_normal_vector<const D: usize, R: Rng + ?Sized>(rng: &mut R) -> SVector<f64, D> {
    SVector::<f64, D>::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal))
}
