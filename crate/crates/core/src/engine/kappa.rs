//! Moment-matched measurement-to-object messages.
//!
//! For object `n` and cell `j` the message is the Gaussian density
//! `N(z_j; r * mu_j(x) + m_loo, r * C_j(x) + C_eps + S_loo)`, where `m_loo` and `S_loo`
//! are the summed means and spreads of every other object at that cell.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::gaussian::{self, COVARIANCE_JITTER};
use crate::models::{Contribution, Spread};

/// Reference evaluation of one message value. `own` is the contribution at the
/// evaluated particle for `r = 1`, or `None` for `r = 0`.
pub fn kappa_eval<const D: usize>(
    z_j: &SVector<f64, D>,
    own: Option<&Contribution<D>>,
    loo_mean: &SVector<f64, D>,
    loo_spread: &SMatrix<f64, D, D>,
    noise_cov: &SMatrix<f64, D, D>,
) -> Result<f64> {
    let mut mean = *loo_mean;
    let mut cov = noise_cov + loo_spread;
    if let Some(c) = own {
        mean += c.mean_vector();
        cov += c.spread.to_matrix();
    }
    gaussian::log_density(z_j, &mean, &cov)
}

/// Per-(object, cell) precomputation shared by every particle of the object.
///
/// The fixed part `C_eps + S_loo` is diagonalized once, so that a zero-mean isotropic
/// contribution `s * I` only costs `D` divisions and one logarithm per particle.
#[derive(Debug, Clone)]
pub struct KappaContext<const D: usize> {
    residual: SVector<f64, D>,
    base: SMatrix<f64, D, D>,
    eigenvalues: SVector<f64, D>,
    projected_sq: SVector<f64, D>,
    absent: f64,
}

impl<const D: usize> KappaContext<D> {
    pub fn new(
        z_j: &SVector<f64, D>,
        loo_mean: &SVector<f64, D>,
        loo_spread: &SMatrix<f64, D, D>,
        noise_cov: &SMatrix<f64, D, D>,
    ) -> Result<Self> {
        let raw = noise_cov + loo_spread;
        let base = (raw + raw.transpose()) * 0.5
            + SMatrix::<f64, D, D>::identity() * COVARIANCE_JITTER;
        // const-generic sizes lack the static eigen solver; the dynamic one is fine here
        let eigen = nalgebra::DMatrix::from_column_slice(D, D, base.as_slice()).symmetric_eigen();
        if eigen.eigenvalues.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::SingularCovariance);
        }
        let eigenvalues = SVector::<f64, D>::from_column_slice(eigen.eigenvalues.as_slice());
        let vectors = SMatrix::<f64, D, D>::from_column_slice(eigen.eigenvectors.as_slice());
        let residual = z_j - loo_mean;
        let projected = vectors.transpose() * residual;
        let projected_sq = projected.component_mul(&projected);
        let mut ctx = Self {
            residual,
            base,
            eigenvalues,
            projected_sq,
            absent: 0.0,
        };
        ctx.absent = ctx.present_isotropic(0.0);
        Ok(ctx)
    }

    /// Log message value for `r = 0`.
    pub fn absent(&self) -> f64 {
        self.absent
    }

    /// Log message value for `r = 1` and a zero-mean contribution `s * I`.
    #[inline]
    pub fn present_isotropic(&self, s: f64) -> f64 {
        let mut det = 1.0;
        let mut quad = 0.0;
        for i in 0..D {
            let l = self.eigenvalues[i] + s;
            det *= l;
            quad += self.projected_sq[i] / l;
        }
        -0.5 * (D as f64 * LN_2PI + libm::log(det) + quad)
    }

    /// Log message value for `r = 1` given the contribution at one particle.
    #[inline]
    pub fn present(&self, own: &Contribution<D>) -> Result<f64> {
        match (own.mean, own.spread) {
            (None, Spread::Isotropic(s)) => Ok(self.present_isotropic(s)),
            _ => {
                let cov = self.base + own.spread.to_matrix();
                let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
                let diff = self.residual - own.mean_vector();
                let solved = chol
                    .l()
                    .solve_lower_triangular(&diff)
                    .ok_or(Error::SingularCovariance)?;
                let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * libm::log(*v)).sum();
                Ok(-0.5 * (D as f64 * LN_2PI + log_det + solved.norm_squared()))
            }
        }
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;
