//! Monte Carlo experiment commands.
//!
//! Run `i` draws its randomness from `ChaCha8Rng` seeded with
//! `base_seed XOR splitmix64(i)`; stream 0 simulates the scenario and stream 1 drives
//! the tracker. Runs are independent and execute on the rayon pool; outputs are
//! written per run and merged in run order, so results do not depend on scheduling.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tbd_core::engine::{Estimate, Tracker};
use tbd_core::metrics::{evaluate_run, GospaResult};
use tbd_core::simulator::{generate_truth, render_measurement, run_seed, GroundTruth};
use tbd_core::state::{Label, MeasurementImage};

use crate::config::{Axis, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{
    list_run_files, read_csv, read_measurements, run_file_name, truth_from_rows, truth_rows, write_csv,
    write_measurements, AggregateRow, EstimateRow, MetricRow, TruthRow,
};

/// Where each command reads and writes inside an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn truth_dir(&self) -> PathBuf {
        self.root.join("truth")
    }

    pub fn measurement_dir(&self) -> PathBuf {
        self.root.join("measurements")
    }

    pub fn estimates(&self) -> PathBuf {
        self.root.join("estimates.csv")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn aggregate(&self) -> PathBuf {
        self.root.join("aggregate.csv")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
}

pub fn run_rngs(base_seed: u64, run: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let seed = run_seed(base_seed, run as u64);
    let mut sim = ChaCha8Rng::seed_from_u64(seed);
    sim.set_stream(0);
    let mut track = ChaCha8Rng::seed_from_u64(seed);
    track.set_stream(1);
    (sim, track)
}

/// Ground truth and measurement images of one run.
pub fn simulate_run(cfg: &RunConfig, run: usize) -> Result<(GroundTruth, Vec<MeasurementImage>)> {
    let (mut rng, _) = run_rngs(cfg.base_seed, run);
    let scenario = cfg.scenario_config();
    let truth = generate_truth(&scenario, &mut rng)?;
    let psf = cfg.psf()?;
    let images = truth
        .steps()
        .iter()
        .map(|objects| {
            let states: Vec<_> = objects.iter().map(|o| o.state).collect();
            render_measurement(&states, &psf, &scenario.geometry, &mut rng)
        })
        .collect();
    Ok((truth, images))
}

/// Track one run. Every potential object surviving a step yields a row.
pub fn track_run(cfg: &RunConfig, run: usize, images: &[MeasurementImage]) -> Result<Vec<EstimateRow>> {
    let (_, mut rng) = run_rngs(cfg.base_seed, run);
    let engine = cfg.engine_config();
    let mut tracker = Tracker::new(cfg.models()?, engine);
    let mut rows = Vec::new();
    for (i, image) in images.iter().enumerate() {
        tracker.step::<_, 2>(image, &mut rng)?;
        for po in tracker.objects() {
            let s = po.mean_state();
            rows.push(EstimateRow {
                run,
                k: i as u32 + 1,
                label: po.label.0,
                existence: po.existence,
                px: s.position.x,
                py: s.position.y,
                vx: s.velocity.x,
                vy: s.velocity.y,
                gamma: s.intensity,
                declared: u8::from(po.existence > engine.declare_threshold),
            });
        }
    }
    Ok(rows)
}

/// Declared estimates of one run grouped by step.
pub fn declared_by_step(rows: &[EstimateRow], steps: u32) -> Result<Vec<Vec<Estimate>>> {
    let mut out = vec![Vec::new(); steps as usize];
    for r in rows.iter().filter(|r| r.declared != 0) {
        if r.k == 0 || r.k > steps {
            return Err(CliError::Core(tbd_core::Error::LengthMismatch {
                expected: steps as usize,
                found: r.k as usize,
            }));
        }
        out[r.k as usize - 1].push(Estimate {
            label: Label(r.label),
            existence: r.existence,
            state: r.state(),
        });
    }
    Ok(out)
}

pub fn metric_rows(run: usize, results: &[GospaResult]) -> Vec<MetricRow> {
    results
        .iter()
        .enumerate()
        .map(|(i, g)| MetricRow {
            run,
            k: i as u32 + 1,
            gospa: g.total,
            localization: g.localization,
            missed: g.missed_cost,
            false_tracks: g.false_cost,
        })
        .collect()
}

/// Per-step mean and standard error of GOSPA across runs.
pub fn aggregate(rows: &[MetricRow], steps: u32) -> Vec<AggregateRow> {
    let mut per_k = vec![Vec::new(); steps as usize];
    for r in rows {
        if r.k >= 1 && r.k <= steps {
            per_k[r.k as usize - 1].push(r.gospa);
        }
    }
    per_k
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let n = v.len() as f64;
            let mean = if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / n };
            let stderr = if v.len() < 2 {
                0.0
            } else {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            };
            AggregateRow {
                k: i as u32 + 1,
                mean_gospa: mean,
                stderr,
            }
        })
        .collect()
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Layout) -> Result<()> {
    (0..cfg.runs).into_par_iter().try_for_each(|run| {
        let (truth, images) = simulate_run(cfg, run)?;
        write_csv(&out.truth_dir().join(run_file_name(run, "csv")), &truth_rows(run, &truth))?;
        write_measurements(&out.measurement_dir().join(run_file_name(run, "tbdz")), &images)
    })
}

/// Track the given measurement files, or every run file of the layout when `files` is
/// empty. The run index comes from a `run_NNNN` file name, else from list position.
pub fn cmd_track(cfg: &RunConfig, out: &Layout, files: &[PathBuf]) -> Result<()> {
    let inputs: Vec<(usize, PathBuf)> = if files.is_empty() {
        list_run_files(&out.measurement_dir(), "tbdz")?
    } else {
        files
            .iter()
            .enumerate()
            .map(|(i, p)| (crate::io::run_index_from_path(p).unwrap_or(i), p.clone()))
            .collect()
    };
    let geometry = cfg.geometry();
    let per_run: Vec<Vec<EstimateRow>> = inputs
        .par_iter()
        .map(|(run, path)| {
            let images = read_measurements(path)?;
            if images[0].geometry() != &geometry {
                return Err(CliError::format(path, "grid geometry disagrees with the configuration"));
            }
            if images[0].dim() != 2 {
                return Err(CliError::format(path, format!("expected 2 components per cell, found {}", images[0].dim())));
            }
            track_run(cfg, *run, &images)
        })
        .collect::<Result<_>>()?;
    write_csv(&out.estimates(), &per_run.concat())
}

/// Score an estimates file against truth files and write the per-step metrics and
/// their aggregate.
pub fn cmd_evaluate(cfg: &RunConfig, out: &Layout, truth_files: &[PathBuf], estimates: &Path) -> Result<()> {
    let truth_inputs: Vec<(usize, PathBuf)> = if truth_files.is_empty() {
        list_run_files(&out.truth_dir(), "csv")?
    } else {
        truth_files
            .iter()
            .enumerate()
            .map(|(i, p)| (crate::io::run_index_from_path(p).unwrap_or(i), p.clone()))
            .collect()
    };
    let steps = cfg.scenario.steps;
    let gospa = cfg.gospa_config()?;
    let rows: Vec<EstimateRow> = read_csv(estimates)?;
    if let Some(r) = rows.iter().find(|r| !truth_inputs.iter().any(|(run, _)| *run == r.run)) {
        return Err(CliError::format(estimates, format!("run {} has no ground truth", r.run)));
    }
    let per_run: Vec<Vec<MetricRow>> = truth_inputs
        .par_iter()
        .map(|(run, path)| {
            let truth_rows: Vec<TruthRow> = read_csv(path)?;
            if let Some(r) = truth_rows.iter().find(|r| r.run != *run) {
                return Err(CliError::format(path, format!("row for run {} in the file of run {run}", r.run)));
            }
            let truth = truth_from_rows(&truth_rows, steps, path)?;
            let own: Vec<EstimateRow> = rows.iter().filter(|r| r.run == *run).copied().collect();
            let est = declared_by_step(&own, steps)?;
            Ok(metric_rows(*run, &evaluate_run(&truth, &est, &gospa)?))
        })
        .collect::<Result<_>>()?;
    let metrics = per_run.concat();
    write_csv(&out.metrics(), &metrics)?;
    write_csv(&out.aggregate(), &aggregate(&metrics, steps))
}

fn write_config(cfg: &RunConfig, out: &Layout) -> Result<()> {
    std::fs::create_dir_all(&out.root).map_err(|e| CliError::io(&out.root, e))?;
    std::fs::write(out.config(), cfg.to_toml()).map_err(|e| CliError::io(out.config(), e))
}

/// Simulate, track and evaluate into one output directory.
pub fn cmd_all(cfg: &RunConfig, out: &Layout) -> Result<()> {
    write_config(cfg, out)?;
    cmd_simulate(cfg, out)?;
    cmd_track(cfg, out, &[])?;
    cmd_evaluate(cfg, out, &[], &out.estimates())
}

/// Run the full experiment once per value into `<out>/<axis>_<value>/` and copy each
/// aggregate to `<out>/aggregate_<axis>_<value>.csv`. Returns the aggregate paths.
pub fn cmd_sweep(cfg: &RunConfig, out: &Layout, axis: Axis, values: &[f64]) -> Result<Vec<PathBuf>> {
    if values.is_empty() {
        return Err(CliError::Config("values: at least one sweep value is required".into()));
    }
    let configs = values.iter().map(|v| axis.apply(cfg, *v)).collect::<Result<Vec<_>>>()?;
    let mut written = Vec::with_capacity(values.len());
    for (value, c) in values.iter().zip(&configs) {
        let tag = format!("{axis}_{value}");
        let sub = Layout::new(out.root.join(&tag));
        cmd_all(c, &sub)?;
        let target = out.root.join(format!("aggregate_{tag}.csv"));
        std::fs::copy(sub.aggregate(), &target).map_err(|e| CliError::io(&target, e))?;
        written.push(target);
    }
    Ok(written)
}
