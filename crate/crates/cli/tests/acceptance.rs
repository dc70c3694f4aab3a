//! Acceptance checks. Prints one line per criterion and exits non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test -p tbd-bp --test acceptance -- 1 3 4`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tbd_bp::io::{read_csv, MetricRow};
use tbd_bp::runner::{cmd_sweep, Layout};
use tbd_bp::{Axis, RunConfig};
use tbd_core::engine::{
    beta_update, compute_moments, run_message_passing, step, AlphaMessage, BetaMessage, CellMoment, EngineConfig, Gate,
    MomentTable, Tracker,
};
use tbd_core::metrics::{gospa, gospa_bruteforce, GospaConfig};
use tbd_core::models::{detection_threshold, BirthModel, GaussianPsf, KernelMeanPsf, Models, MotionModel, PointSpread};
use tbd_core::particles::ParticleSet;
use tbd_core::simulator::render_measurement;
use tbd_core::state::{GridGeometry, KinematicState, Label, LabelCounter, MeasurementImage, PotentialObject, Vec2};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn normal2(rng: &mut ChaCha8Rng) -> Vector2<f64> {
    Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn cloud(rng: &mut ChaCha8Rng, center: Vec2, sd: f64, intensity: f64, n: usize) -> Vec<KinematicState> {
    (0..n)
        .map(|_| KinematicState::new(center + normal2(rng) * sd, Vec2::zeros(), intensity))
        .collect()
}

fn alpha(label: u64, existence: f64, particles: Vec<KinematicState>) -> AlphaMessage {
    AlphaMessage {
        label: Label(label),
        existence_mass: existence,
        spatial: ParticleSet::uniform(particles).unwrap(),
        born_at: 0,
        origin_cell: None,
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Moment matching on one cell shared by three objects, against 10^6 draws from the
/// superpositional model.
fn moment_matching() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let geometry = GridGeometry::square(1, 1.0);
    let center = geometry.cell_center(0);
    let psf = KernelMeanPsf::new(0.5, Vector2::new(2.0, -1.0), 3.0, Matrix2::new(1.0, 0.3, 0.3, 1.5)).unwrap();
    let clouds = [
        (0.95, cloud(&mut rng, Vec2::new(0.45, 0.5), 0.3, 40.0, 500)),
        (0.7, cloud(&mut rng, Vec2::new(0.6, 0.4), 0.35, 60.0, 500)),
        (0.4, cloud(&mut rng, Vec2::new(0.5, 0.7), 0.25, 25.0, 500)),
    ];
    let entries = clouds
        .iter()
        .map(|(e, c)| {
            let beta = BetaMessage::from_alpha(&alpha(0, *e, c.clone()));
            let (mean, second) = compute_moments(&beta, c, &psf, &center);
            vec![CellMoment { cell: 0, mean, second }]
        })
        .collect();
    let table = MomentTable::<2>::new(1, entries);
    let mean = *table.total_mean(0);
    let cov = table.total_spread(0) + psf.noise_cov();

    let draws = 1_000_000;
    let noise = psf.noise_cov().cholesky().unwrap().l();
    let mut sum = Vector2::zeros();
    let mut second = Matrix2::zeros();
    for _ in 0..draws {
        let mut z = noise * normal2(&mut rng);
        for (e, c) in &clouds {
            if rng.random::<f64>() < *e {
                let x = &c[rng.random_range(0..c.len())];
                let contribution = psf.contribution(x, &center);
                let l = contribution.spread.to_matrix().cholesky().unwrap().l();
                z += contribution.mean_vector() + l * normal2(&mut rng);
            }
        }
        sum += z;
        second += z * z.transpose();
    }
    let emp_mean = sum / draws as f64;
    let emp_cov = second / draws as f64 - emp_mean * emp_mean.transpose();
    let mean_err = (emp_mean - mean).norm() / mean.norm();
    let cov_err = (emp_cov - cov).norm() / cov.norm();
    Outcome::new(
        mean_err < 0.02 && cov_err < 0.02,
        format!("relative error mean {:.4}, covariance {:.4} (limit 0.02)", mean_err, cov_err),
    )
}

/// Exact posterior existence of one object on a small grid by quadrature over position.
fn grid_existence(prior: f64, center: Vec2, sd: f64, intensity: f64, psf: &GaussianPsf<2>, image: &MeasurementImage) -> f64 {
    let geometry = image.geometry();
    let log_n = |z: Vector2<f64>, var: f64| -(2.0 * std::f64::consts::PI * var).ln() - z.norm_squared() / (2.0 * var);
    let absent: f64 = (0..geometry.num_cells()).map(|j| log_n(image.cell_vector::<2>(j), 1.0)).sum();
    let steps = 800;
    let half = 6.0 * sd;
    let h = 2.0 * half / steps as f64;
    let mut logs = Vec::with_capacity(steps * steps);
    for a in 0..steps {
        for b in 0..steps {
            let d = Vec2::new(-half + (a as f64 + 0.5) * h, -half + (b as f64 + 0.5) * h);
            let x = KinematicState::new(center + d, Vec2::zeros(), intensity);
            let prior_density = -(2.0 * std::f64::consts::PI * sd * sd).ln() - d.norm_squared() / (2.0 * sd * sd);
            let lik: f64 = (0..geometry.num_cells())
                .map(|j| log_n(image.cell_vector::<2>(j), psf.kernel(&x, &geometry.cell_center(j)) + 1.0))
                .sum();
            logs.push(prior_density + (h * h).ln() + lik);
        }
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let present = max + logs.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let log_odds = prior.ln() + present - (1.0 - prior).ln() - absent;
    1.0 / (1.0 + (-log_odds).exp())
}

/// One object on a 2x2 grid: a full tracking step against the quadrature filter.
fn single_object_exactness() -> Outcome {
    let geometry = GridGeometry::square(2, 1.0);
    let psf = GaussianPsf::<2>::isotropic(0.5, 1.0).unwrap();
    let (center, sd, intensity, prior) = (Vec2::new(0.9, 1.1), 0.3, 5.0, 0.4);
    let truth = [KinematicState::new(Vec2::new(1.1, 0.8), Vec2::zeros(), intensity)];
    let image = render_measurement(&truth, &psf, &geometry, &mut ChaCha8Rng::seed_from_u64(7));
    let motion = MotionModel::new(0.0, 0.0, 1.0, 0.999).unwrap();
    let expected = grid_existence(prior * motion.survival, center, sd, intensity, &psf, &image);
    let models = Models {
        motion,
        birth: BirthModel::new(1e-5, 10.0, 1e-2, f64::MAX).unwrap(),
        psf,
    };
    let config = EngineConfig {
        gate: Gate::Disabled,
        prune_threshold: 1e-12,
        ..EngineConfig::default()
    };
    let values: Vec<f64> = (0..50u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
            let po = PotentialObject {
                label: Label(0),
                existence: prior,
                spatial: ParticleSet::uniform(cloud(&mut rng, center, sd, intensity, 3000)).unwrap(),
                born_at: 0,
                origin_cell: None,
            };
            let out = step(&[po], &image, &models, &config, &mut LabelCounter::new(), 1, &mut rng).unwrap();
            assert_eq!(out.objects.len(), 1);
            out.objects[0].existence
        })
        .collect();
    let (mean, se) = mean_and_se(&values);
    Outcome::new(
        (mean - expected).abs() <= 3.0 * se,
        format!("existence {mean:.6} +- {se:.2e} vs quadrature {expected:.6} (limit 3 SE)"),
    )
}

fn random_points(rng: &mut ChaCha8Rng, max: usize) -> Vec<Vec2> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| Vec2::new(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0))).collect()
}

fn gospa_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cfg = GospaConfig::default();
    let mut max_dev: f64 = 0.0;
    for _ in 0..1000 {
        let x = random_points(&mut rng, 6);
        let y = random_points(&mut rng, 6);
        let a = gospa(&x, &y, &cfg).total;
        let b = gospa_bruteforce(&x, &y, &cfg).unwrap().total;
        max_dev = max_dev.max((a - b).abs());
    }
    let mut max_asym: f64 = 0.0;
    let mut max_self: f64 = 0.0;
    for _ in 0..500 {
        let x = random_points(&mut rng, 6);
        let y = random_points(&mut rng, 6);
        max_asym = max_asym.max((gospa(&x, &y, &cfg).total - gospa(&y, &x, &cfg).total).abs());
        let mut shuffled = x.clone();
        shuffled.reverse();
        max_self = max_self.max(gospa(&x, &shuffled, &cfg).total);
    }
    Outcome::new(
        max_dev < 1e-9 && max_asym < 1e-12 && max_self < 1e-12,
        format!("solver vs brute force {max_dev:.1e}, asymmetry {max_asym:.1e}, self distance {max_self:.1e}"),
    )
}

fn leave_one_out() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let geometry = GridGeometry::square(8, 1.0);
    let psf = GaussianPsf::<2>::isotropic(0.5, 1.0).unwrap();
    let config = EngineConfig {
        gate: Gate::Disabled,
        ..EngineConfig::default()
    };
    let (mut table_dev, mut beta_dev): (f64, f64) = (0.0, 0.0);
    for _ in 0..5 {
        let alphas: Vec<_> = (0..5)
            .map(|n| {
                let c = Vec2::new(rng.random_range(2.0..6.0), rng.random_range(2.0..6.0));
                let existence = rng.random_range(0.05..1.0);
                let intensity = rng.random_range(20.0..80.0);
                alpha(n, existence, cloud(&mut rng, c, 0.6, intensity, 300))
            })
            .collect();
        let truth: Vec<_> = alphas.iter().take(3).map(|a| a.spatial.particles()[0]).collect();
        let image = render_measurement(&truth, &psf, &geometry, &mut rng);
        let out = run_message_passing(&alphas, &image, &psf, &config).unwrap();
        let table = &out.table;
        for n in 0..alphas.len() {
            for (slot, own) in table.entries(n).iter().enumerate() {
                let (loo_mean, loo_spread) = table.leave_one_out(n, slot);
                let mut mean = Vector2::zeros();
                let mut spread = Matrix2::zeros();
                for m in (0..alphas.len()).filter(|&m| m != n) {
                    if let Some(e) = table.entries(m).iter().find(|e| e.cell == own.cell) {
                        mean += e.mean;
                        spread += e.spread();
                    }
                }
                table_dev = table_dev.max((loo_mean - mean).amax()).max((loo_spread - spread).amax());
            }
        }
        for (a, kappa) in alphas.iter().zip(&out.kappas) {
            let totals = kappa.totals();
            for slot in 0..kappa.cells().len() {
                let beta = beta_update(a, kappa, &totals, slot).unwrap();
                let direct: Vec<f64> = (0..a.spatial.len())
                    .map(|p| {
                        a.spatial.log_weights()[p]
                            + (0..kappa.cells().len()).filter(|&s| s != slot).map(|s| kappa.present(s)[p]).sum::<f64>()
                    })
                    .collect();
                let max = direct.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let norm = max + direct.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                for (got, want) in beta.spatial_log_weights.iter().zip(&direct) {
                    beta_dev = beta_dev.max((got - (want - norm)).abs());
                }
            }
        }
    }
    Outcome::new(
        table_dev < 1e-9 && beta_dev < 1e-9,
        format!("moment table {table_dev:.1e}, extrinsic log weights {beta_dev:.1e} (limit 1e-9)"),
    )
}

/// Time-averaged GOSPA of every run in a metrics file.
fn run_averages(metrics: &Path) -> Vec<f64> {
    let rows: Vec<MetricRow> = read_csv(metrics).unwrap();
    let runs = rows.iter().map(|r| r.run).max().map_or(0, |m| m + 1);
    let mut sums = vec![(0.0, 0usize); runs];
    for r in rows {
        sums[r.run].0 += r.gospa;
        sums[r.run].1 += 1;
    }
    sums.into_iter().map(|(s, n)| s / n as f64).collect()
}

struct Sweeps {
    sigma: Vec<(f64, (f64, f64))>,
    gamma: Vec<(f64, (f64, f64))>,
    iterations: Vec<(f64, (f64, f64))>,
}

/// Runs the experiments behind criteria 5 to 7 with 50 runs each. The reference
/// configuration (gamma0 60, sigma_s_sq 0.5, L 2) is shared by all three.
fn run_sweeps(root: &Path) -> Sweeps {
    let mut base = RunConfig::default();
    base.runs = 50;
    base.base_seed = 2024;
    assert_eq!(Axis::Gamma0.apply(&base, 60.0).unwrap(), Axis::SigmaSSq.apply(&base, 0.5).unwrap());
    assert_eq!(Axis::Iterations.apply(&base, 2.0).unwrap(), Axis::SigmaSSq.apply(&base, 0.5).unwrap());
    let layout = Layout::new(root);
    let stats = |dir: &str| mean_and_se(&run_averages(&root.join(dir).join("metrics.csv")));
    let started = Instant::now();
    cmd_sweep(&base, &layout, Axis::SigmaSSq, &[0.5, 1.0, 1.5]).unwrap();
    cmd_sweep(&base, &layout, Axis::Gamma0, &[40.0, 80.0]).unwrap();
    cmd_sweep(&base, &layout, Axis::Iterations, &[1.0]).unwrap();
    println!("    sweeps finished in {:.0} s", started.elapsed().as_secs_f64());
    let reference = stats("sigma_s_sq_0.5");
    Sweeps {
        sigma: vec![(0.5, reference), (1.0, stats("sigma_s_sq_1")), (1.5, stats("sigma_s_sq_1.5"))],
        gamma: vec![(40.0, stats("gamma0_40")), (60.0, reference), (80.0, stats("gamma0_80"))],
        iterations: vec![(1.0, stats("L_1")), (2.0, reference)],
    }
}

fn pooled(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1 * a.1 + b.1 * b.1).sqrt()
}

fn describe(series: &[(f64, (f64, f64))]) -> String {
    series
        .iter()
        .map(|(v, (m, se))| format!("{v}: {m:.4}+-{se:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `increasing`: every consecutive difference exceeds minus one pooled standard error.
fn monotone(series: &[(f64, (f64, f64))], increasing: bool) -> bool {
    series.windows(2).all(|w| {
        let diff = w[1].1 .0 - w[0].1 .0;
        let diff = if increasing { diff } else { -diff };
        diff > -pooled(w[0].1, w[1].1)
    })
}

fn static_object_tracker() -> Tracker<GaussianPsf<2>> {
    let models = Models {
        motion: MotionModel::default(),
        birth: BirthModel::new(1e-5, 120.0, 1e-2, detection_threshold(60.0, 0.5, 1.0)).unwrap(),
        psf: GaussianPsf::isotropic(0.5, 1.0).unwrap(),
    };
    Tracker::new(models, EngineConfig::default())
}

fn detection_latency() -> Outcome {
    let geometry = GridGeometry::square(32, 1.0);
    let object = KinematicState::new(geometry.cell_center(16 * 32 + 16), Vec2::zeros(), 60.0);
    let mut detected = 0;
    for seed in 0..100u64 {
        let (mut sim, mut rng) = tbd_bp::runner::run_rngs(77, seed as usize);
        let mut tracker = static_object_tracker();
        for _ in 0..3 {
            let z = render_measurement(&[object], &tracker.models().psf, &geometry, &mut sim);
            let est = tracker.step::<_, 2>(&z, &mut rng).unwrap();
            if est.iter().any(|e| (e.state.position - object.position).norm() < 1.0) {
                detected += 1;
                break;
            }
        }
    }
    let (seeds, steps) = (20u64, 50);
    let mut false_tracks = 0usize;
    for seed in 0..seeds {
        let (mut sim, mut rng) = tbd_bp::runner::run_rngs(78, seed as usize);
        let mut tracker = static_object_tracker();
        for _ in 0..steps {
            let z = render_measurement(&[], &tracker.models().psf, &geometry, &mut sim);
            false_tracks += tracker.step::<_, 2>(&z, &mut rng).unwrap().len();
        }
    }
    let rate = false_tracks as f64 / (seeds as usize * steps) as f64;
    Outcome::new(
        detected >= 90 && rate < 0.1,
        format!("declared within 3 steps in {detected}/100 seeds (need 90); false tracks per step {rate:.3} (limit 0.1)"),
    )
}

/// Minimum over repetitions of the message-passing time for objects at `positions`.
fn message_loop_time(geometry: GridGeometry, positions: &[Vec2]) -> Duration {
    let psf = GaussianPsf::<2>::isotropic(0.5, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let truth: Vec<_> = positions.iter().map(|p| KinematicState::new(*p, Vec2::zeros(), 60.0)).collect();
    let image = render_measurement(&truth, &psf, &geometry, &mut rng);
    let alphas: Vec<_> = positions
        .iter()
        .enumerate()
        .map(|(n, p)| alpha(n as u64, 0.9, cloud(&mut rng, *p, 0.3, 60.0, 3000)))
        .collect();
    let config = EngineConfig::default();
    (0..5)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(run_message_passing(&alphas, &image, &psf, &config).unwrap());
            t.elapsed()
        })
        .min()
        .unwrap()
}

fn complexity_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let positions: Vec<Vec2> = (0..10)
        .map(|_| Vec2::new(rng.random_range(8.0..24.0), rng.random_range(8.0..24.0)))
        .collect();
    let square = GridGeometry::square(32, 1.0);
    let wide = GridGeometry::new(32, 64, Vec2::new(1.0, 1.0), Vec2::zeros()).unwrap();
    let base = message_loop_time(square, &positions[..5]);
    let doubled_objects = message_loop_time(square, &positions);
    let doubled_cells = message_loop_time(wide, &positions[..5]);
    let r_objects = doubled_objects.as_secs_f64() / base.as_secs_f64();
    let r_cells = doubled_cells.as_secs_f64() / base.as_secs_f64();
    Outcome::new(
        r_objects < 2.5 && r_cells < 2.5,
        format!(
            "base {:.1} ms; 2x objects {r_objects:.2}x, 2x cells {r_cells:.2}x (limit 2.5x)",
            base.as_secs_f64() * 1e3
        ),
    )
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_tbd-bp"))
            .args(["all", "--runs", "3", "--seed", "31", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(out.join("metrics.csv")).unwrap(),
            std::fs::read(out.join("aggregate.csv")).unwrap(),
        )
    };
    let a = run("first");
    let b = run("second");
    Outcome::new(
        a == b && !a.0.is_empty(),
        format!("metrics {} bytes, aggregate {} bytes, identical: {}", a.0.len(), a.1.len(), a == b),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut check = |n: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {n:>2} {name}: {} ({}; {:.1} s)",
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.detail,
            t.elapsed().as_secs_f64()
        );
        results.push((n, name, outcome));
    };

    check(1, "moment matching", &moment_matching);
    check(2, "single-object exactness", &single_object_exactness);
    check(3, "GOSPA solver", &gospa_solver);
    check(4, "leave-one-out identities", &leave_one_out);
    if wanted(5) || wanted(6) || wanted(7) {
        let dir = tempfile::tempdir().unwrap();
        let sweeps = catch_unwind(AssertUnwindSafe(|| run_sweeps(dir.path())));
        match &sweeps {
            Ok(s) => {
                check(5, "GOSPA grows with spread", &|| {
                    Outcome::new(monotone(&s.sigma, true), describe(&s.sigma))
                });
                check(6, "GOSPA falls with intensity", &|| {
                    Outcome::new(monotone(&s.gamma, false), describe(&s.gamma))
                });
                check(7, "second iteration helps", &|| {
                    let (one, two) = (s.iterations[0].1, s.iterations[1].1);
                    Outcome::new(two.0 <= one.0 + pooled(one, two), describe(&s.iterations))
                });
            }
            Err(_) => {
                for (n, name) in [(5, "GOSPA grows with spread"), (6, "GOSPA falls with intensity"), (7, "second iteration helps")] {
                    check(n, name, &|| Outcome::new(false, "sweep failed"));
                }
            }
        }
    }
    check(8, "detection latency and false tracks", &detection_latency);
    check(9, "linear scaling", &complexity_scaling);
    check(10, "end-to-end determinism", &end_to_end_determinism);

    let failed: Vec<_> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
