//! Ground-truth scenarios and raw measurement images.

use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};
use rand::rand_core::{impls, RngCore};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{ensure, Result};
use crate::gaussian::{sqrt_factor, standard_normal_vector};
use crate::models::{MotionModel, PointSpread, Spread};
use crate::state::{GridGeometry, KinematicState, MeasurementImage, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub geometry: GridGeometry,
    /// Number of time steps; steps are numbered `1..=steps`.
    pub steps: u32,
    /// Appearance step of each object.
    pub birth_steps: Vec<u32>,
    /// Disappearance step of each object, `None` for never.
    pub death_steps: Vec<Option<u32>>,
    /// Box in which objects appear (lower, upper corner).
    pub spawn_box: (Vec2, Vec2),
    /// Initial intensity of every object.
    pub gamma0: f64,
    pub initial_velocity_var: f64,
    pub motion: MotionModel,
    /// When set, initial positions and velocities come from this seed instead of the
    /// per-run generator, so every run shares one set of starting states.
    pub fixed_spawn_seed: Option<u64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: GridGeometry::square(32, 1.0),
            steps: 50,
            birth_steps: alloc::vec![1, 5, 10, 15, 20],
            death_steps: alloc::vec![Some(31), Some(36), Some(41), Some(46), None],
            spawn_box: (Vec2::new(8.0, 8.0), Vec2::new(24.0, 24.0)),
            gamma0: 60.0,
            initial_velocity_var: 1e-2,
            motion: MotionModel::default(),
            fixed_spawn_seed: None,
        }
    }
}

impl ScenarioConfig {
    pub fn object_count(&self) -> usize {
        self.birth_steps.len()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.birth_steps.len() == self.death_steps.len(),
            "death_steps",
            "must have one entry per birth step",
        )?;
        ensure(
            self.birth_steps
                .iter()
                .zip(&self.death_steps)
                .all(|(b, d)| *b >= 1 && d.map_or(true, |d| *b < d)),
            "birth_steps",
            "each birth must be at least 1 and precede its death",
        )?;
        let (lo, hi) = self.spawn_box;
        ensure(lo.x <= hi.x && lo.y <= hi.y, "spawn_box", "lower corner must not exceed upper corner")?;
        ensure(
            self.geometry.contains(&lo) && self.geometry.contains(&hi),
            "spawn_box",
            "must lie inside the region of interest",
        )?;
        ensure(self.gamma0 >= 0.0, "gamma0", "must be non-negative")?;
        ensure(
            self.initial_velocity_var >= 0.0,
            "initial_velocity_var",
            "must be non-negative",
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthObject {
    pub id: u32,
    pub state: KinematicState,
}

/// Objects alive at each time step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    steps: Vec<Vec<TruthObject>>,
}

impl GroundTruth {
    pub fn new(steps: Vec<Vec<TruthObject>>) -> Self {
        Self { steps }
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Objects alive at step `k` (1-based).
    pub fn at(&self, k: usize) -> &[TruthObject] {
        &self.steps[k - 1]
    }

    pub fn steps(&self) -> &[Vec<TruthObject>] {
        &self.steps
    }
}

fn spawn<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> KinematicState {
    let (lo, hi) = cfg.spawn_box;
    let position = Vec2::new(
        lo.x + rng.random::<f64>() * (hi.x - lo.x),
        lo.y + rng.random::<f64>() * (hi.y - lo.y),
    );
    let sd = libm::sqrt(cfg.initial_velocity_var);
    let velocity = Vec2::new(
        sd * rng.sample::<f64, _>(StandardNormal),
        sd * rng.sample::<f64, _>(StandardNormal),
    );
    KinematicState::new(position, velocity, cfg.gamma0)
}

/// Simulate object trajectories. An object appears at its birth step and is removed
/// at its death step or as soon as its position leaves the region of interest.
pub fn generate_truth<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut spawn_rng = cfg.fixed_spawn_seed.map(SplitMix::seed_from_u64);
    let mut states: Vec<Option<KinematicState>> = alloc::vec![None; cfg.object_count()];
    let mut gone = alloc::vec![false; cfg.object_count()];
    let mut steps = Vec::with_capacity(cfg.steps as usize);
    for k in 1..=cfg.steps {
        let mut alive = Vec::new();
        for i in 0..cfg.object_count() {
            if gone[i] {
                continue;
            }
            let next = if k == cfg.birth_steps[i] {
                Some(match spawn_rng.as_mut() {
                    Some(r) => spawn(cfg, r),
                    None => spawn(cfg, rng),
                })
            } else {
                states[i].map(|x| cfg.motion.sample(&x, rng))
            };
            let Some(x) = next else { continue };
            if cfg.death_steps[i].is_some_and(|d| k >= d) || !cfg.geometry.contains(&x.position) {
                gone[i] = true;
                states[i] = None;
                continue;
            }
            states[i] = Some(x);
            alive.push(TruthObject { id: i as u32, state: x });
        }
        steps.push(alive);
    }
    Ok(GroundTruth { steps })
}

/// Render one image: every cell receives an independent Gaussian contribution from
/// each object plus independent Gaussian noise.
pub fn render_measurement<P, R, const D: usize>(
    objects: &[KinematicState],
    psf: &P,
    geometry: &GridGeometry,
    rng: &mut R,
) -> MeasurementImage
where
    P: PointSpread<D>,
    R: Rng + ?Sized,
{
    let noise_factor = sqrt_factor(&psf.noise_cov()).unwrap_or_else(SMatrix::zeros);
    let mut image = MeasurementImage::zeros(*geometry, D);
    for j in 0..geometry.num_cells() {
        let center = geometry.cell_center(j);
        let mut z = SVector::<f64, D>::zeros();
        for x in objects {
            let c = psf.contribution(x, &center);
            let xi = standard_normal_vector::<D, R>(rng);
            z += c.mean_vector();
            match c.spread {
                Spread::Isotropic(s) => z += xi * libm::sqrt(s.max(0.0)),
                Spread::Full(m) => z += sqrt_factor(&m).unwrap_or_else(SMatrix::zeros) * xi,
            }
        }
        z += noise_factor * standard_normal_vector::<D, R>(rng);
        image.cell_mut(j).copy_from_slice(z.as_slice());
    }
    image
}

/// Small seedable generator for the fixed-spawn option.
struct SplitMix(u64);

impl RngCore for SplitMix {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        splitmix64_mix(self.0)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }
}

impl SeedableRng for SplitMix {
    type Seed = [u8; 8];

    fn from_seed(seed: Self::Seed) -> Self {
        Self(u64::from_le_bytes(seed))
    }

    fn seed_from_u64(state: u64) -> Self {
        Self(state)
    }
}

/// The splitmix64 output function.
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo run `index`: `base XOR splitmix64(index)`.
pub fn run_seed(base: u64, index: u64) -> u64 {
    base ^ splitmix64_mix(index.wrapping_add(0x9E37_79B9_7F4A_7C15))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{loglik_given_states, GaussianPsf};
    use alloc::vec;
    use nalgebra::{Matrix2, Vector2};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn run_seeds_are_distinct() {
        // reference output of splitmix64 seeded with 0
        assert_eq!(run_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        let seeds: alloc::collections::BTreeSet<u64> = (0..1000).map(|i| run_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn no_objects_gives_empty_truth() {
        let cfg = ScenarioConfig {
            birth_steps: vec![],
            death_steps: vec![],
            ..ScenarioConfig::default()
        };
        let t = generate_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.num_steps(), 50);
        assert!(t.steps().iter().all(|s| s.is_empty()));
    }

    #[test]
    fn default_schedule_has_five_alive_at_25() {
        let cfg = ScenarioConfig::default();
        let mut exits = 0;
        for seed in 0..20 {
            let t = generate_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let n = t.at(25).len();
            assert!(n <= 5);
            exits += 5 - n;
            assert!(t.at(1).len() == 1);
            assert!(t.at(50).len() <= 1);
            for k in 31..=50 {
                assert!(t.at(k).iter().all(|o| o.id != 0));
            }
        }
        // starting 8 m from the border with ~0.1 m/step, nobody leaves by step 25
        assert_eq!(exits, 0);
    }

    #[test]
    fn lifetimes_respected() {
        let cfg = ScenarioConfig::default();
        let t = generate_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for k in 1..=50usize {
            for o in t.at(k) {
                let i = o.id as usize;
                assert!(k as u32 >= cfg.birth_steps[i]);
                assert!(cfg.death_steps[i].map_or(true, |d| (k as u32) < d));
                assert!(cfg.geometry.contains(&o.state.position));
            }
        }
    }

    #[test]
    fn static_object_without_noise_stays_put() {
        let cfg = ScenarioConfig {
            birth_steps: vec![3],
            death_steps: vec![None],
            initial_velocity_var: 0.0,
            motion: MotionModel::new(0.0, 0.0, 1.0, 0.999).unwrap(),
            ..ScenarioConfig::default()
        };
        let t = generate_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let p0 = t.at(3)[0].state.position;
        for k in 3..=50 {
            assert_eq!(t.at(k)[0].state.position, p0);
            assert_eq!(t.at(k)[0].state.intensity, 60.0);
        }
        assert!(t.at(2).is_empty());
    }

    #[test]
    fn deterministic_for_equal_seeds() {
        let cfg = ScenarioConfig::default();
        let a = generate_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = generate_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
        let psf = GaussianPsf::<2>::isotropic(0.5, 1.0).unwrap();
        let states: Vec<_> = a.at(22).iter().map(|o| o.state).collect();
        let za = render_measurement(&states, &psf, &cfg.geometry, &mut ChaCha8Rng::seed_from_u64(5));
        let zb = render_measurement(&states, &psf, &cfg.geometry, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(za.values(), zb.values());
    }

    #[test]
    fn fixed_spawn_seed_shares_initial_states() {
        let cfg = ScenarioConfig {
            fixed_spawn_seed: Some(3),
            ..ScenarioConfig::default()
        };
        let a = generate_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = generate_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a.at(1)[0].state, b.at(1)[0].state);
        assert_ne!(a.at(2)[0].state, b.at(2)[0].state);
    }

    fn one_cell() -> GridGeometry {
        GridGeometry::square(1, 1.0)
    }

    #[test]
    fn pure_noise_moments() {
        let psf = GaussianPsf::<2>::new(0.5, Matrix2::new(1.0, 0.3, 0.3, 2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let mut sum = Vector2::zeros();
        let mut second = Matrix2::zeros();
        for _ in 0..n {
            let z = render_measurement(&[], &psf, &one_cell(), &mut rng).cell_vector::<2>(0);
            sum += z;
            second += z * z.transpose();
        }
        let mean = sum / n as f64;
        let cov = second / n as f64 - mean * mean.transpose();
        let c = psf.noise_cov;
        for i in 0..2 {
            assert!(mean[i].abs() < 3.0 * (c[(i, i)] / n as f64).sqrt());
            for k in 0..2 {
                // var of a sample covariance entry: c_ii c_kk + c_ik^2
                let se = ((c[(i, i)] * c[(k, k)] + c[(i, k)] * c[(i, k)]) / n as f64).sqrt();
                assert!((cov[(i, k)] - c[(i, k)]).abs() < 3.0 * se, "entry {i},{k}");
            }
        }
    }

    #[test]
    fn object_at_center_variance() {
        let psf = GaussianPsf::<2>::isotropic(0.5, 1.0).unwrap();
        let g = one_cell();
        let x = KinematicState::new(g.cell_center(0), Vec2::zeros(), 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let mut sq = Vector2::zeros();
        for _ in 0..n {
            let z = render_measurement(&[x], &psf, &g, &mut rng).cell_vector::<2>(0);
            sq += z.component_mul(&z);
        }
        let expected = 60.0 / core::f64::consts::PI + 1.0;
        for i in 0..2 {
            let v = sq[i] / n as f64;
            assert!((v / expected - 1.0).abs() < 0.02, "axis {i}: {v}");
        }
    }

    /// Chi-squared goodness of fit of rendered cells against the likelihood: the
    /// Mahalanobis radius of a 2-D Gaussian is exponential, so its CDF gives
    /// equiprobable bins.
    #[test]
    fn rendered_cells_follow_likelihood() {
        let psf = GaussianPsf::<2>::isotropic(0.8, 1.0).unwrap();
        let g = GridGeometry::square(3, 1.0);
        let objects = [
            KinematicState::new(Vec2::new(1.2, 1.4), Vec2::zeros(), 40.0),
            KinematicState::new(Vec2::new(2.1, 1.9), Vec2::zeros(), 25.0),
        ];
        let j = 4;
        // the likelihood is isotropic N(0, v I); recover v from the log density at 0
        let l0 = loglik_given_states(&Vector2::zeros(), &objects, &psf, &g, j).unwrap();
        let var = (-l0 - libm::log(2.0 * core::f64::consts::PI)).exp();
        let bins = 20;
        let mut counts = vec![0usize; bins];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 20_000;
        for _ in 0..n {
            let z = render_measurement(&objects, &psf, &g, &mut rng).cell_vector::<2>(j);
            let lz = loglik_given_states(&z, &objects, &psf, &g, j).unwrap();
            // CDF of the squared radius: 1 - exp(-r2 / 2), r2 = 2 (l0 - lz)
            let u = 1.0 - libm::exp(-(l0 - lz));
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
        }
        assert!(var > 1.0);
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of chi-squared with 19 degrees of freedom
        assert!(chi2 < 36.19, "chi2 = {chi2}");
    }

    #[test]
    fn average_loglik_matches_negative_entropy() {
        let psf = GaussianPsf::<2>::isotropic(0.5, 1.0).unwrap();
        let g = GridGeometry::square(2, 1.0);
        let x = KinematicState::new(Vec2::new(0.7, 0.9), Vec2::zeros(), 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z = render_measurement(&[x], &psf, &g, &mut rng).cell_vector::<2>(0);
            acc += loglik_given_states(&z, &[x], &psf, &g, 0).unwrap();
        }
        let avg = acc / n as f64;
        let var = psf.kernel(&x, &g.cell_center(0)) + 1.0;
        // differential entropy of N(0, var I_2)
        let entropy = 1.0 + libm::log(2.0 * core::f64::consts::PI * var);
        assert!((avg + entropy).abs() < 0.05 * entropy);
    }
}
