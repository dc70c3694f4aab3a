//! Experiment configuration.
//!
//! Configurations are TOML documents. Every key has a default, so an empty file is the
//! reference experiment; unknown keys are rejected. Keys can be written in sections or
//! dotted form (`scenario.gamma0 = 40`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tbd_core::engine::{EngineConfig, Gate};
use tbd_core::metrics::GospaConfig;
use tbd_core::models::{detection_threshold, BirthModel, GaussianPsf, Models, MotionModel};
use tbd_core::simulator::ScenarioConfig;
use tbd_core::state::{GridGeometry, Vec2};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Number of Monte Carlo runs.
    pub runs: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub scenario: ScenarioSection,
    pub psf: PsfSection,
    pub motion: MotionSection,
    pub birth: BirthSection,
    pub engine: EngineSection,
    pub metrics: MetricsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            runs: 400,
            base_seed: 0,
            output_dir: PathBuf::from("out"),
            scenario: ScenarioSection::default(),
            psf: PsfSection::default(),
            motion: MotionSection::default(),
            birth: BirthSection::default(),
            engine: EngineSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// Side length of the square region of interest in meters.
    pub roi_size: f64,
    /// Cells per side.
    pub grid_cells: usize,
    pub steps: u32,
    pub gamma0: f64,
    pub spawn_min: f64,
    pub spawn_max: f64,
    pub initial_velocity_var: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_spawn_seed: Option<u64>,
    pub objects: Vec<ObjectLifetime>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            roi_size: 32.0,
            grid_cells: 32,
            steps: s.steps,
            gamma0: s.gamma0,
            spawn_min: s.spawn_box.0.x,
            spawn_max: s.spawn_box.1.x,
            initial_velocity_var: s.initial_velocity_var,
            fixed_spawn_seed: None,
            objects: s
                .birth_steps
                .iter()
                .zip(&s.death_steps)
                .map(|(&birth, &death)| ObjectLifetime { birth, death })
                .collect(),
        }
    }
}

/// Appearance and disappearance steps of one simulated object. A missing `death`
/// keeps the object until the end of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectLifetime {
    pub birth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfSection {
    pub sigma_s_sq: f64,
    pub noise_var: f64,
}

impl Default for PsfSection {
    fn default() -> Self {
        Self {
            sigma_s_sq: 0.5,
            noise_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSection {
    pub q_pv: f64,
    pub q_gamma: f64,
    pub dt: f64,
    pub survival: f64,
}

impl Default for MotionSection {
    fn default() -> Self {
        let m = MotionModel::default();
        Self {
            q_pv: m.q_pv,
            q_gamma: m.q_gamma,
            dt: m.dt,
            survival: m.survival,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BirthSection {
    pub p_birth: f64,
    /// Upper bound of the uniform intensity prior; twice `scenario.gamma0` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<f64>,
    pub velocity_var: f64,
    /// Threshold on the cell norm; derived from `scenario.gamma0` and the point-spread
    /// parameters when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detect_threshold: Option<f64>,
}

impl Default for BirthSection {
    fn default() -> Self {
        Self {
            p_birth: 1e-5,
            gamma_max: None,
            velocity_var: 1e-2,
            detect_threshold: None,
        }
    }
}

/// `"auto"`, `"none"` or a radius in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateRadius {
    Auto,
    Disabled,
    Meters(f64),
}

impl Serialize for GateRadius {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Disabled => s.serialize_str("none"),
            Self::Meters(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for GateRadius {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = GateRadius;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"auto\", \"none\" or a radius in meters")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<GateRadius, E> {
                match v {
                    "auto" => Ok(GateRadius::Auto),
                    "none" => Ok(GateRadius::Disabled),
                    _ => Err(E::invalid_value(serde::de::Unexpected::Str(v), &self)),
                }
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<GateRadius, E> {
                Ok(GateRadius::Meters(v))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<GateRadius, E> {
                Ok(GateRadius::Meters(v as f64))
            }
        }
        d.deserialize_any(Visitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub iterations: usize,
    pub particles_per_po: usize,
    pub declare_threshold: f64,
    pub prune_threshold: f64,
    pub gate_radius: GateRadius,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_pos: Option<usize>,
}

impl Default for EngineSection {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            iterations: e.iterations,
            particles_per_po: e.particles_per_po,
            declare_threshold: e.declare_threshold,
            prune_threshold: e.prune_threshold,
            gate_radius: GateRadius::Auto,
            max_pos: e.max_pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub cutoff: f64,
    pub order: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let g = GospaConfig::default();
        Self {
            cutoff: g.cutoff,
            order: g.order,
        }
    }
}

fn in_section<T>(section: &str, r: tbd_core::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        tbd_core::Error::InvalidParameter { field, reason } => CliError::Config(format!("{section}.{field}: {reason}")),
        other => CliError::Config(format!("{section}: {other}")),
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parse and validate a configuration document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(CliError::Config("runs: must be at least 1".into()));
        }
        let s = &self.scenario;
        if !(s.roi_size > 0.0 && s.roi_size.is_finite()) || s.grid_cells == 0 {
            return Err(CliError::Config("scenario: roi_size and grid_cells must be positive".into()));
        }
        if s.steps == 0 {
            return Err(CliError::Config("scenario.steps: must be at least 1".into()));
        }
        if !(s.spawn_min.is_finite() && s.spawn_max.is_finite()) {
            return Err(CliError::Config("scenario.spawn_min: spawn box must be finite".into()));
        }
        in_section("scenario", self.scenario_config().validate())?;
        self.models()?;
        in_section("engine", self.engine_config().validate())?;
        self.gospa_config()?;
        Ok(())
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::square(self.scenario.grid_cells, self.scenario.roi_size / self.scenario.grid_cells as f64)
    }

    pub fn motion(&self) -> Result<MotionModel> {
        let m = &self.motion;
        in_section("motion", MotionModel::new(m.q_pv, m.q_gamma, m.dt, m.survival))
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            geometry: self.geometry(),
            steps: s.steps,
            birth_steps: s.objects.iter().map(|o| o.birth).collect(),
            death_steps: s.objects.iter().map(|o| o.death).collect(),
            spawn_box: (Vec2::new(s.spawn_min, s.spawn_min), Vec2::new(s.spawn_max, s.spawn_max)),
            gamma0: s.gamma0,
            initial_velocity_var: s.initial_velocity_var,
            motion: self.motion().unwrap_or_default(),
            fixed_spawn_seed: s.fixed_spawn_seed,
        }
    }

    pub fn psf(&self) -> Result<GaussianPsf<2>> {
        in_section("psf", GaussianPsf::isotropic(self.psf.sigma_s_sq, self.psf.noise_var))
    }

    /// Birth threshold in effect, explicit or derived.
    pub fn detect_threshold(&self) -> f64 {
        self.birth
            .detect_threshold
            .unwrap_or_else(|| detection_threshold(self.scenario.gamma0, self.psf.sigma_s_sq, self.psf.noise_var))
    }

    pub fn birth(&self) -> Result<BirthModel> {
        let b = &self.birth;
        let gamma_max = b.gamma_max.unwrap_or(2.0 * self.scenario.gamma0);
        in_section(
            "birth",
            BirthModel::new(b.p_birth, gamma_max, b.velocity_var, self.detect_threshold()),
        )
    }

    pub fn models(&self) -> Result<Models<GaussianPsf<2>>> {
        let psf = self.psf()?;
        Ok(Models {
            motion: self.motion()?,
            birth: self.birth()?,
            psf,
        })
    }

    pub fn engine_config(&self) -> EngineConfig {
        let e = &self.engine;
        EngineConfig {
            iterations: e.iterations,
            particles_per_po: e.particles_per_po,
            declare_threshold: e.declare_threshold,
            prune_threshold: e.prune_threshold,
            gate: match e.gate_radius {
                GateRadius::Auto => Gate::Auto,
                GateRadius::Disabled => Gate::Disabled,
                GateRadius::Meters(r) => Gate::Radius(r),
            },
            max_pos: e.max_pos,
        }
    }

    pub fn gospa_config(&self) -> Result<GospaConfig> {
        in_section("metrics", GospaConfig::new(self.metrics.cutoff, self.metrics.order))
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Gamma0,
    SigmaSSq,
    Iterations,
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma0" => Ok(Self::Gamma0),
            "sigma_s_sq" => Ok(Self::SigmaSSq),
            "L" | "iterations" => Ok(Self::Iterations),
            other => Err(CliError::UnknownAxis(other.to_string())),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gamma0 => "gamma0",
            Self::SigmaSSq => "sigma_s_sq",
            Self::Iterations => "L",
        })
    }
}

impl Axis {
    /// Copy of `cfg` with the axis set to `value`. Derived quantities (birth threshold,
    /// intensity prior bound) follow unless they were set explicitly.
    pub fn apply(&self, cfg: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut out = cfg.clone();
        match self {
            Self::Gamma0 => out.scenario.gamma0 = value,
            Self::SigmaSSq => out.psf.sigma_s_sq = value,
            Self::Iterations => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(CliError::Config(format!("L: sweep value {value} is not a positive integer")));
                }
                out.engine.iterations = value as usize;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

/// Parse a comma-separated list of sweep values.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    let values = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("values: `{s}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(CliError::Config("values: at least one sweep value is required".into()));
    }
    Ok(values)
}
