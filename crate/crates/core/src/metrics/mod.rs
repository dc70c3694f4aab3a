//! Generalized optimal sub-pattern assignment (GOSPA) metric with `alpha = 2`.

mod assignment;

use alloc::vec::Vec;

pub use assignment::min_cost_assignment;

use crate::engine::Estimate;
use crate::error::{ensure, Error, Result};
use crate::simulator::GroundTruth;
use crate::state::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GospaConfig {
    pub cutoff: f64,
    pub order: f64,
}

impl Default for GospaConfig {
    fn default() -> Self {
        Self { cutoff: 1.0, order: 2.0 }
    }
}

impl GospaConfig {
    pub fn new(cutoff: f64, order: f64) -> Result<Self> {
        ensure(cutoff > 0.0 && cutoff.is_finite(), "cutoff", "must be positive")?;
        ensure(order >= 1.0 && order.is_finite(), "order", "must be at least 1")?;
        Ok(Self { cutoff, order })
    }

    fn cutoff_pow(&self) -> f64 {
        libm::pow(self.cutoff, self.order)
    }
}

/// The cost terms are kept before the order-`p` root; `total` is the rooted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GospaResult {
    pub total: f64,
    /// Sum of `d^p` over matched pairs.
    pub localization: f64,
    /// `c^p / 2` per unmatched truth point.
    pub missed_cost: f64,
    /// `c^p / 2` per unmatched estimate.
    pub false_cost: f64,
    /// Matched `(truth, estimate)` index pairs, sorted by truth index.
    pub assignment: Vec<(usize, usize)>,
}

impl GospaResult {
    fn from_pairs(truth: &[Vec2], estimates: &[Vec2], pairs: Vec<(usize, usize)>, cfg: &GospaConfig) -> Self {
        let half = cfg.cutoff_pow() / 2.0;
        let localization: f64 = pairs
            .iter()
            .map(|&(i, j)| libm::pow((truth[i] - estimates[j]).norm(), cfg.order))
            .sum();
        let missed_cost = half * (truth.len() - pairs.len()) as f64;
        let false_cost = half * (estimates.len() - pairs.len()) as f64;
        Self {
            total: libm::pow(localization + missed_cost + false_cost, 1.0 / cfg.order),
            localization,
            missed_cost,
            false_cost,
            assignment: pairs,
        }
    }

    pub fn missed(&self, cfg: &GospaConfig) -> usize {
        libm::round(2.0 * self.missed_cost / cfg.cutoff_pow()) as usize
    }

    pub fn false_tracks(&self, cfg: &GospaConfig) -> usize {
        libm::round(2.0 * self.false_cost / cfg.cutoff_pow()) as usize
    }
}

/// GOSPA between two position sets. Pairs at distance `>= cutoff` are left unmatched.
pub fn gospa(truth: &[Vec2], estimates: &[Vec2], cfg: &GospaConfig) -> GospaResult {
    let cp = cfg.cutoff_pow();
    let cols = estimates.len();
    let mut cost = Vec::with_capacity(truth.len() * cols);
    for x in truth {
        for y in estimates {
            // matching a pair saves c^p - d^p over leaving both unmatched
            cost.push((libm::pow((x - y).norm(), cfg.order) - cp).min(0.0));
        }
    }
    let pairs: Vec<(usize, usize)> = min_cost_assignment(&cost, truth.len(), cols)
        .into_iter()
        .filter(|&(i, j)| (truth[i] - estimates[j]).norm() < cfg.cutoff)
        .collect();
    GospaResult::from_pairs(truth, estimates, pairs, cfg)
}

/// Largest `|truth| + |estimates|` accepted by [`gospa_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 14;

/// Same contract as [`gospa`], by enumerating every partial assignment.
pub fn gospa_bruteforce(truth: &[Vec2], estimates: &[Vec2], cfg: &GospaConfig) -> Result<GospaResult> {
    let size = truth.len() + estimates.len();
    if size > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge(size));
    }
    struct Search<'a> {
        truth: &'a [Vec2],
        estimates: &'a [Vec2],
        cfg: &'a GospaConfig,
        used: Vec<bool>,
        current: Vec<(usize, usize)>,
        best: f64,
        best_pairs: Vec<(usize, usize)>,
    }
    impl Search<'_> {
        fn go(&mut self, i: usize, acc: f64) {
            if i == self.truth.len() {
                if acc < self.best {
                    self.best = acc;
                    self.best_pairs = self.current.clone();
                }
                return;
            }
            let cp = self.cfg.cutoff_pow();
            self.go(i + 1, acc - cp);
            for j in 0..self.estimates.len() {
                let d = (self.truth[i] - self.estimates[j]).norm();
                if self.used[j] || d >= self.cfg.cutoff {
                    continue;
                }
                self.used[j] = true;
                self.current.push((i, j));
                self.go(i + 1, acc + libm::pow(d, self.cfg.order) - 2.0 * cp);
                self.current.pop();
                self.used[j] = false;
            }
        }
    }
    // each truth point adds -c^p when unmatched or d^p - 2 c^p when matched, relative
    // to a baseline that counts every point as unmatched
    let mut search = Search {
        truth,
        estimates,
        cfg,
        used: alloc::vec![false; estimates.len()],
        current: Vec::new(),
        best: f64::INFINITY,
        best_pairs: Vec::new(),
    };
    search.go(0, 0.0);
    Ok(GospaResult::from_pairs(truth, estimates, search.best_pairs, cfg))
}

/// Position-only GOSPA at every time step.
pub fn evaluate_run(truth: &GroundTruth, estimates: &[Vec<Estimate>], cfg: &GospaConfig) -> Result<Vec<GospaResult>> {
    if truth.num_steps() != estimates.len() {
        return Err(Error::LengthMismatch {
            expected: truth.num_steps(),
            found: estimates.len(),
        });
    }
    Ok(truth
        .steps()
        .iter()
        .zip(estimates)
        .map(|(objects, est)| {
            let x: Vec<Vec2> = objects.iter().map(|o| o.state.position).collect();
            let y: Vec<Vec2> = est.iter().map(|e| e.state.position).collect();
            gospa(&x, &y, cfg)
        })
        .collect())
}
