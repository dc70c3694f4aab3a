use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};

use super::messages::BetaMessage;
use crate::models::{PointSpread, Spread};
use crate::state::{KinematicState, Vec2};

/// Moments of one object's contribution to one cell under its extrinsic message:
/// `mean = E[mu_j(x)]` and `second = E[C_j(x) + mu_j(x) mu_j(x)^T]`, both scaled by the
/// message's existence mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoment<const D: usize> {
    pub cell: usize,
    pub mean: SVector<f64, D>,
    pub second: SMatrix<f64, D, D>,
}

impl<const D: usize> CellMoment<D> {
    /// Covariance of the existence-gated contribution, `second - mean mean^T`.
    pub fn spread(&self) -> SMatrix<f64, D, D> {
        self.second - self.mean * self.mean.transpose()
    }
}

/// Per-object cell moments together with their per-cell sums, which turn every
/// "sum over all other objects" into a subtraction.
#[derive(Debug, Clone)]
pub struct MomentTable<const D: usize> {
    entries: Vec<Vec<CellMoment<D>>>,
    total_mean: Vec<SVector<f64, D>>,
    total_spread: Vec<SMatrix<f64, D, D>>,
}

impl<const D: usize> MomentTable<D> {
    /// `entries[n]` holds the moments of object `n` at its gated cells.
    pub fn new(num_cells: usize, entries: Vec<Vec<CellMoment<D>>>) -> Self {
        let mut total_mean = vec![SVector::<f64, D>::zeros(); num_cells];
        let mut total_spread = vec![SMatrix::<f64, D, D>::zeros(); num_cells];
        for m in entries.iter().flatten() {
            total_mean[m.cell] += m.mean;
            total_spread[m.cell] += m.spread();
        }
        Self {
            entries,
            total_mean,
            total_spread,
        }
    }

    pub fn num_objects(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self, n: usize) -> &[CellMoment<D>] {
        &self.entries[n]
    }

    pub fn total_mean(&self, j: usize) -> &SVector<f64, D> {
        &self.total_mean[j]
    }

    pub fn total_spread(&self, j: usize) -> &SMatrix<f64, D, D> {
        &self.total_spread[j]
    }

    /// Summed mean and spread of every object except `n` at the cell of `n`'s entry `slot`.
    pub fn leave_one_out(&self, n: usize, slot: usize) -> (SVector<f64, D>, SMatrix<f64, D, D>) {
        let own = &self.entries[n][slot];
        (
            self.total_mean[own.cell] - own.mean,
            self.total_spread[own.cell] - own.spread(),
        )
    }
}

/// Moments of an object's contribution to the cell centered at `center` under `beta`.
pub fn compute_moments<P: PointSpread<D>, const D: usize>(
    beta: &BetaMessage,
    particles: &[KinematicState],
    psf: &P,
    center: &Vec2,
) -> (SVector<f64, D>, SMatrix<f64, D, D>) {
    let weights: Vec<f64> = beta.spatial_log_weights.iter().map(|lw| libm::exp(*lw)).collect();
    accumulate(beta.existence_mass, &weights, particles, psf, center)
}

/// Same as [`compute_moments`] with linear, normalized particle weights.
pub(crate) fn accumulate<P: PointSpread<D>, const D: usize>(
    existence_mass: f64,
    weights: &[f64],
    particles: &[KinematicState],
    psf: &P,
    center: &Vec2,
) -> (SVector<f64, D>, SMatrix<f64, D, D>) {
    if existence_mass == 0.0 {
        return (SVector::zeros(), SMatrix::zeros());
    }
    let mut mean = SVector::<f64, D>::zeros();
    let mut second = SMatrix::<f64, D, D>::zeros();
    let mut iso = 0.0;
    for (x, w) in particles.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let c = psf.contribution(x, center);
        match c.spread {
            Spread::Isotropic(s) => iso += w * s,
            Spread::Full(m) => second += m * *w,
        }
        if let Some(mu) = c.mean {
            mean += mu * *w;
            second += (mu * mu.transpose()) * *w;
        }
    }
    second += SMatrix::<f64, D, D>::identity() * iso;
    (mean * existence_mass, second * existence_mass)
}
