//! Weighted particle sets with log-domain weights.

use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::state::KinematicState;

/// `ln(sum(exp(xs)))`, stable for large magnitudes. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| libm::exp(x - max)).sum();
    max + libm::log(sum)
}

/// `ln(exp(a) + exp(b))`.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + libm::log1p(libm::exp(lo - hi))
}

/// Probability of the first of two hypotheses given their log masses.
pub fn log_odds_probability(log_first: f64, log_second: f64) -> Result<f64> {
    if log_first == f64::NEG_INFINITY && log_second == f64::NEG_INFINITY {
        return Err(Error::AllWeightsDegenerate);
    }
    if log_second == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    if log_first == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let diff = log_second - log_first;
    Ok(if diff > 0.0 {
        let e = libm::exp(-diff);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + libm::exp(diff))
    })
}

/// Particles and their log-weights. A normalized set has `logsumexp(log_weights) == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    particles: Vec<KinematicState>,
    log_weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(particles: Vec<KinematicState>, log_weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptyParticleSet);
        }
        if particles.len() != log_weights.len() {
            return Err(Error::WeightCountMismatch {
                particles: particles.len(),
                weights: log_weights.len(),
            });
        }
        Ok(Self {
            particles,
            log_weights,
        })
    }

    /// Equal weights `-ln(n)`.
    pub fn uniform(particles: Vec<KinematicState>) -> Result<Self> {
        let lw = -libm::log(particles.len() as f64);
        let n = particles.len();
        Self::new(particles, alloc::vec![lw; n])
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[KinematicState] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn into_parts(self) -> (Vec<KinematicState>, Vec<f64>) {
        (self.particles, self.log_weights)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        libm::fabs(logsumexp(&self.log_weights)) <= tol
    }

    pub fn normalize(&self) -> Result<Self> {
        let mut out = self.clone();
        out.normalize_in_place()?;
        Ok(out)
    }

    pub fn normalize_in_place(&mut self) -> Result<()> {
        let total = logsumexp(&self.log_weights);
        if !total.is_finite() {
            return Err(Error::AllWeightsDegenerate);
        }
        for lw in &mut self.log_weights {
            *lw -= total;
        }
        Ok(())
    }

    /// Linear weights of the normalized set.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let total = logsumexp(&self.log_weights);
        if !total.is_finite() {
            return Err(Error::AllWeightsDegenerate);
        }
        Ok(self
            .log_weights
            .iter()
            .map(|lw| libm::exp(lw - total))
            .collect())
    }

    /// Systematic resampling to `count` equally weighted particles.
    pub fn resample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Self> {
        let weights = self.weights()?;
        let indices = systematic_indices(&weights, count, rng);
        let particles = indices.into_iter().map(|i| self.particles[i]).collect();
        Self::uniform(particles)
    }

    /// Weighted mean and second moment of `f` over the normalized set.
    pub fn weighted_moments<const M: usize, F>(
        &self,
        f: F,
    ) -> Result<(SVector<f64, M>, SMatrix<f64, M, M>)>
    where
        F: Fn(&KinematicState) -> SVector<f64, M>,
    {
        let weights = self.weights()?;
        let mut mean = SVector::<f64, M>::zeros();
        let mut second = SMatrix::<f64, M, M>::zeros();
        for (x, w) in self.particles.iter().zip(&weights) {
            let v = f(x);
            mean += v * *w;
            second += (v * v.transpose()) * *w;
        }
        Ok((mean, second))
    }

    /// Weighted mean state. Falls back to the plain average if the weights degenerate.
    pub fn mean_state(&self) -> KinematicState {
        match self.weighted_moments(|x| x.to_vector()) {
            Ok((mean, _)) => KinematicState::from_vector(&mean),
            Err(_) => {
                let n = self.particles.len() as f64;
                let sum = self
                    .particles
                    .iter()
                    .fold(SVector::<f64, 5>::zeros(), |acc, x| acc + x.to_vector());
                KinematicState::from_vector(&(sum / n))
            }
        }
    }
}

/// Indices drawn by systematic resampling from linear `weights` (need not sum to one).
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / count as f64;
    let mut u = rng.random::<f64>() * step;
    let mut indices = Vec::with_capacity(count);
    let mut cumulative = weights[0];
    let mut i = 0;
    for _ in 0..count {
        while u > cumulative && i + 1 < weights.len() {
            i += 1;
            cumulative += weights[i];
        }
        // skip zero-weight particles that sit exactly on a boundary
        while weights[i] == 0.0 && i + 1 < weights.len() {
            i += 1;
            cumulative += weights[i];
        }
        indices.push(i);
        u += step;
    }
    indices
}
