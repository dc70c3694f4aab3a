//! Point-spread models: how an object at a given state illuminates a cell.
//!
//! The contribution `h` of one object to cell `j` is Gaussian with mean `mu_j(x)` and
//! covariance `C_j(x)`; the cell value is the sum of all contributions plus Gaussian
//! noise with covariance `C_eps`.

use core::f64::consts::PI;

use nalgebra::{SMatrix, SVector};

use crate::error::{ensure, Result};
use crate::gaussian;
use crate::state::{GridGeometry, KinematicState, Vec2};

/// Covariance of one contribution, with a cheap representation for `s * I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spread<const D: usize> {
    Isotropic(f64),
    Full(SMatrix<f64, D, D>),
}

impl<const D: usize> Spread<D> {
    pub fn to_matrix(&self) -> SMatrix<f64, D, D> {
        match self {
            Spread::Isotropic(s) => SMatrix::<f64, D, D>::identity() * *s,
            Spread::Full(m) => *m,
        }
    }
}

/// Mean (`None` for the zero vector) and covariance of one object's contribution to one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution<const D: usize> {
    pub mean: Option<SVector<f64, D>>,
    pub spread: Spread<D>,
}

impl<const D: usize> Contribution<D> {
    pub fn mean_vector(&self) -> SVector<f64, D> {
        self.mean.unwrap_or_else(SVector::zeros)
    }

    /// `C + mu mu^T`
    pub fn raw_second_moment(&self) -> SMatrix<f64, D, D> {
        let c = self.spread.to_matrix();
        match self.mean {
            Some(m) => c + m * m.transpose(),
            None => c,
        }
    }
}

pub trait PointSpread<const D: usize> {
    /// Contribution of an object in state `x` to the cell centered at `cell_center`.
    fn contribution(&self, x: &KinematicState, cell_center: &Vec2) -> Contribution<D>;

    /// Additive noise covariance `C_eps`.
    fn noise_cov(&self) -> SMatrix<f64, D, D>;

    /// Distance beyond which an object's contribution is negligible, if the model has one.
    fn reach(&self) -> Option<f64> {
        None
    }
}

/// Mean contribution `mu_j(x)` of an object to cell `j`.
pub fn psf_mean<P: PointSpread<D>, const D: usize>(
    x: &KinematicState,
    j: usize,
    psf: &P,
    geometry: &GridGeometry,
) -> SVector<f64, D> {
    psf.contribution(x, &geometry.cell_center(j)).mean_vector()
}

/// Contribution covariance `C_j(x)` of an object to cell `j`.
pub fn psf_cov<P: PointSpread<D>, const D: usize>(
    x: &KinematicState,
    j: usize,
    psf: &P,
    geometry: &GridGeometry,
) -> SMatrix<f64, D, D> {
    psf.contribution(x, &geometry.cell_center(j)).spread.to_matrix()
}

/// Exact `ln f(z_j | states)` for a fixed set of existing objects.
pub fn loglik_given_states<P: PointSpread<D>, const D: usize>(
    z_j: &SVector<f64, D>,
    states: &[KinematicState],
    psf: &P,
    geometry: &GridGeometry,
    j: usize,
) -> Result<f64> {
    let center = geometry.cell_center(j);
    let mut mean = SVector::<f64, D>::zeros();
    let mut cov = psf.noise_cov();
    for x in states {
        let c = psf.contribution(x, &center);
        mean += c.mean_vector();
        cov += c.spread.to_matrix();
    }
    gaussian::log_density(z_j, &mean, &cov)
}

fn gaussian_kernel(sigma_s_sq: f64, x: &KinematicState, center: &Vec2) -> f64 {
    let d2 = (x.position - center).norm_squared();
    x.intensity / (2.0 * PI * sigma_s_sq) * libm::exp(-d2 / (2.0 * sigma_s_sq))
}

fn check_noise<const D: usize>(noise_cov: &SMatrix<f64, D, D>) -> Result<()> {
    ensure(
        (noise_cov - noise_cov.transpose()).amax() <= 1e-12,
        "noise_cov",
        "must be symmetric",
    )?;
    ensure(
        noise_cov.cholesky().is_some(),
        "noise_cov",
        "must be positive definite",
    )
}

/// Zero-mean contribution with covariance
/// `gamma / (2 pi sigma_s^2) * exp(-|p - p_j|^2 / (2 sigma_s^2)) * I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPsf<const D: usize> {
    pub sigma_s_sq: f64,
    pub noise_cov: SMatrix<f64, D, D>,
}

impl<const D: usize> GaussianPsf<D> {
    pub fn new(sigma_s_sq: f64, noise_cov: SMatrix<f64, D, D>) -> Result<Self> {
        ensure(
            sigma_s_sq > 0.0 && sigma_s_sq.is_finite(),
            "sigma_s_sq",
            "must be positive",
        )?;
        check_noise(&noise_cov)?;
        Ok(Self {
            sigma_s_sq,
            noise_cov,
        })
    }

    /// Noise covariance `noise_var * I`.
    pub fn isotropic(sigma_s_sq: f64, noise_var: f64) -> Result<Self> {
        ensure(noise_var > 0.0, "noise_var", "must be positive")?;
        Self::new(sigma_s_sq, SMatrix::<f64, D, D>::identity() * noise_var)
    }

    pub fn kernel(&self, x: &KinematicState, center: &Vec2) -> f64 {
        gaussian_kernel(self.sigma_s_sq, x, center)
    }
}

impl<const D: usize> PointSpread<D> for GaussianPsf<D> {
    #[inline]
    fn contribution(&self, x: &KinematicState, cell_center: &Vec2) -> Contribution<D> {
        Contribution {
            mean: None,
            spread: Spread::Isotropic(self.kernel(x, cell_center)),
        }
    }

    fn noise_cov(&self) -> SMatrix<f64, D, D> {
        self.noise_cov
    }

    fn reach(&self) -> Option<f64> {
        Some(4.0 * libm::sqrt(self.sigma_s_sq))
    }
}

/// A model whose mean follows the same Gaussian kernel as its covariance:
/// `mu_j(x) = k_j(x) * direction` and `C_j(x) = spread_factor * k_j(x) * I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMeanPsf<const D: usize> {
    pub sigma_s_sq: f64,
    pub direction: SVector<f64, D>,
    pub spread_factor: f64,
    pub noise_cov: SMatrix<f64, D, D>,
}

impl<const D: usize> KernelMeanPsf<D> {
    pub fn new(
        sigma_s_sq: f64,
        direction: SVector<f64, D>,
        spread_factor: f64,
        noise_cov: SMatrix<f64, D, D>,
    ) -> Result<Self> {
        ensure(sigma_s_sq > 0.0, "sigma_s_sq", "must be positive")?;
        ensure(spread_factor >= 0.0, "spread_factor", "must be non-negative")?;
        check_noise(&noise_cov)?;
        Ok(Self {
            sigma_s_sq,
            direction,
            spread_factor,
            noise_cov,
        })
    }
}

impl<const D: usize> PointSpread<D> for KernelMeanPsf<D> {
    fn contribution(&self, x: &KinematicState, cell_center: &Vec2) -> Contribution<D> {
        let k = gaussian_kernel(self.sigma_s_sq, x, cell_center);
        Contribution {
            mean: Some(self.direction * k),
            spread: Spread::Isotropic(self.spread_factor * k),
        }
    }

    fn noise_cov(&self) -> SMatrix<f64, D, D> {
        self.noise_cov
    }

    fn reach(&self) -> Option<f64> {
        Some(4.0 * libm::sqrt(self.sigma_s_sq))
    }
}
