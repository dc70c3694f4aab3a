//! The iterative loop between objects and measurement cells.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};

use super::kappa::KappaContext;
use super::messages::{extrinsic_weights, AlphaMessage, KappaLogs};
use super::moments::{CellMoment, MomentTable};
use super::{EngineConfig, Gate};
use crate::error::{Error, Result};
use crate::models::{Contribution, PointSpread, Spread};
use crate::state::{GridGeometry, MeasurementImage, Vec2};

/// Messages after the last iteration.
#[derive(Debug, Clone)]
pub struct MessagePassingOutput<const D: usize> {
    /// Cell messages received by each object, in input order.
    pub kappas: Vec<KappaLogs>,
    /// Moment table of the last iteration.
    pub table: MomentTable<D>,
}

/// Radius used by [`Gate::Auto`]: the model's reach plus one cell diagonal.
pub fn auto_gate_radius<P: PointSpread<D>, const D: usize>(psf: &P, geometry: &GridGeometry) -> Option<f64> {
    psf.reach().map(|r| r + geometry.cell_diagonal())
}

fn gated_cells<P: PointSpread<D>, const D: usize>(
    weights: &[f64],
    alpha: &AlphaMessage,
    psf: &P,
    geometry: &GridGeometry,
    gate: Gate,
) -> Vec<usize> {
    let radius = match gate {
        Gate::Disabled => None,
        Gate::Radius(r) => Some(r),
        Gate::Auto => auto_gate_radius(psf, geometry),
    };
    match radius {
        None => (0..geometry.num_cells()).collect(),
        Some(r) => {
            let center = alpha
                .spatial
                .particles()
                .iter()
                .zip(weights)
                .fold(Vec2::zeros(), |acc, (x, w)| acc + x.position * *w);
            geometry.cells_within(&center, r)
        }
    }
}

/// Contributions of one object's particles at its gated cells, slot-major. They do
/// not change between iterations, so they are evaluated once per step.
enum ContributionCache<const D: usize> {
    /// All contributions are zero-mean and isotropic; only the scale is kept.
    Isotropic(Vec<f64>),
    General(Vec<Contribution<D>>),
}

impl<const D: usize> ContributionCache<D> {
    fn build<P: PointSpread<D>>(psf: &P, alpha: &AlphaMessage, cells: &[usize], centers: &[Vec2]) -> Self {
        let particles = alpha.spatial.particles();
        let mut scales = Vec::with_capacity(cells.len() * particles.len());
        for &j in cells {
            for x in particles {
                match psf.contribution(x, &centers[j]) {
                    Contribution {
                        mean: None,
                        spread: Spread::Isotropic(s),
                    } => scales.push(s),
                    _ => {
                        let all = cells
                            .iter()
                            .flat_map(|&j| particles.iter().map(move |x| psf.contribution(x, &centers[j])))
                            .collect();
                        return Self::General(all);
                    }
                }
            }
        }
        Self::Isotropic(scales)
    }

    /// Existence-scaled moments at `slot` under linear, normalized `weights`.
    fn moments(&self, slot: usize, existence: f64, weights: &[f64]) -> (SVector<f64, D>, SMatrix<f64, D, D>) {
        if existence == 0.0 {
            return (SVector::zeros(), SMatrix::zeros());
        }
        let n = weights.len();
        match self {
            Self::Isotropic(scales) => {
                let row = &scales[slot * n..(slot + 1) * n];
                let iso: f64 = row.iter().zip(weights).map(|(s, w)| s * w).sum();
                (SVector::zeros(), SMatrix::identity() * (iso * existence))
            }
            Self::General(all) => {
                let mut mean = SVector::<f64, D>::zeros();
                let mut second = SMatrix::<f64, D, D>::zeros();
                for (c, w) in all[slot * n..(slot + 1) * n].iter().zip(weights) {
                    if *w == 0.0 {
                        continue;
                    }
                    mean += c.mean_vector() * *w;
                    second += c.raw_second_moment() * *w;
                }
                (mean * existence, second * existence)
            }
        }
    }

    fn fill_kappa(&self, slot: usize, ctx: &KappaContext<D>, out: &mut [f64]) -> Result<()> {
        let n = out.len();
        match self {
            Self::Isotropic(scales) => {
                for (value, s) in out.iter_mut().zip(&scales[slot * n..(slot + 1) * n]) {
                    *value = ctx.present_isotropic(*s);
                }
            }
            Self::General(all) => {
                for (value, c) in out.iter_mut().zip(&all[slot * n..(slot + 1) * n]) {
                    *value = ctx.present(c)?;
                }
            }
        }
        Ok(())
    }
}

/// Run `config.iterations` rounds of message passing for the given predictions.
///
/// Each round computes, for every object and gated cell, the moments of the object's
/// contribution under its extrinsic message, sums them per cell, and evaluates the
/// moment-matched cell messages using "total minus own" sums. Work is linear in the
/// number of objects, gated cells and particles.
pub fn run_message_passing<P: PointSpread<D>, const D: usize>(
    alphas: &[AlphaMessage],
    image: &MeasurementImage,
    psf: &P,
    config: &EngineConfig,
) -> Result<MessagePassingOutput<D>> {
    image.check_dim::<D>()?;
    let geometry = image.geometry();
    let num_cells = geometry.num_cells();
    let noise = psf.noise_cov();
    let z: Vec<SVector<f64, D>> = (0..num_cells).map(|j| image.cell_vector::<D>(j)).collect();
    let centers: Vec<Vec2> = (0..num_cells).map(|j| geometry.cell_center(j)).collect();

    let mut alpha_weights = Vec::with_capacity(alphas.len());
    for a in alphas {
        let w = a.spatial.weights()?;
        if !a.spatial.is_normalized(1e-9) {
            return Err(Error::InvalidParameter {
                field: "alpha.spatial",
                reason: "must be normalized",
            });
        }
        alpha_weights.push(w);
    }
    let mut kappas: Vec<KappaLogs> = alphas
        .iter()
        .zip(&alpha_weights)
        .map(|(a, w)| KappaLogs::uninformative(gated_cells(w, a, psf, geometry, config.gate), a.spatial.len()))
        .collect();

    let caches: Vec<ContributionCache<D>> = alphas
        .iter()
        .zip(&kappas)
        .map(|(a, k)| ContributionCache::build(psf, a, k.cells(), &centers))
        .collect();

    let max_particles = alphas.iter().map(|a| a.spatial.len()).max().unwrap_or(0);
    let mut log_buf = vec![0.0; max_particles];
    let mut weight_buf = vec![0.0; max_particles];
    let mut table = MomentTable::new(num_cells, Vec::new());

    for iteration in 1..=config.iterations {
        let mut entries = Vec::with_capacity(alphas.len());
        for (n, alpha) in alphas.iter().enumerate() {
            let count = alpha.spatial.len();
            let kappa = &kappas[n];
            let cache = &caches[n];
            let mut own = Vec::with_capacity(kappa.cells().len());
            if iteration == 1 {
                for (slot, &j) in kappa.cells().iter().enumerate() {
                    let (mean, second) = cache.moments(slot, alpha.existence_mass, &alpha_weights[n]);
                    own.push(CellMoment { cell: j, mean, second });
                }
            } else {
                let totals = kappa.totals();
                for (slot, &j) in kappa.cells().iter().enumerate() {
                    let (existence, _) = extrinsic_weights(
                        alpha.existence_mass,
                        alpha.spatial.log_weights(),
                        &totals,
                        kappa,
                        slot,
                        &mut log_buf[..count],
                        &mut weight_buf[..count],
                    )?;
                    let (mean, second) = cache.moments(slot, existence, &weight_buf[..count]);
                    own.push(CellMoment { cell: j, mean, second });
                }
            }
            entries.push(own);
        }
        table = MomentTable::new(num_cells, entries);

        for (n, kappa) in kappas.iter_mut().enumerate() {
            for slot in 0..kappa.cells().len() {
                let j = kappa.cells()[slot];
                let (loo_mean, loo_spread) = table.leave_one_out(n, slot);
                let ctx = KappaContext::new(&z[j], &loo_mean, &loo_spread, &noise)?;
                kappa.set_absent(slot, ctx.absent());
                caches[n].fill_kappa(slot, &ctx, kappa.present_mut(slot))?;
            }
        }
    }

    Ok(MessagePassingOutput { kappas, table })
}
