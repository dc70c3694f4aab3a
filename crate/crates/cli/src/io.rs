//! File formats: measurement binaries, truth/estimate/metric CSVs.
//!
//! Measurement files are little-endian: the magic `TBDZ`, then `u32` version, rows,
//! cols, component count and step count, then `f64` origin (x, y) and cell extent
//! (x, y), then every value in (step, row, col, component) order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use tbd_core::simulator::{GroundTruth, TruthObject};
use tbd_core::state::{GridGeometry, KinematicState, MeasurementImage, Vec2};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"TBDZ";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 5 * 4 + 4 * 8;

/// Serialize a sequence of images sharing one geometry.
pub fn encode_measurements(images: &[MeasurementImage]) -> std::result::Result<Vec<u8>, String> {
    let (geometry, dim) = match images.first() {
        Some(z) => (*z.geometry(), z.dim()),
        None => return Err("no images to write".into()),
    };
    if images.iter().any(|z| z.geometry() != &geometry || z.dim() != dim) {
        return Err("images disagree on geometry".into());
    }
    let count = |v: usize, what: &str| u32::try_from(v).map_err(|_| format!("{what} does not fit in u32"));
    let mut out = Vec::with_capacity(HEADER_LEN + images.len() * geometry.num_cells() * dim * 8);
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        count(geometry.rows, "rows")?,
        count(geometry.cols, "cols")?,
        count(dim, "dimension")?,
        count(images.len(), "step count")?,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [geometry.origin.x, geometry.origin.y, geometry.cell_extent.x, geometry.cell_extent.y] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for z in images {
        for v in z.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_measurements(bytes: &[u8]) -> std::result::Result<Vec<MeasurementImage>, String> {
    if bytes.len() < HEADER_LEN {
        return Err("file shorter than the header".into());
    }
    if &bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let version = u32_at(0);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let (rows, cols, dim, steps) = (u32_at(1) as usize, u32_at(2) as usize, u32_at(3) as usize, u32_at(4) as usize);
    let origin = Vec2::new(f64_at(24), f64_at(32));
    let extent = Vec2::new(f64_at(40), f64_at(48));
    let geometry = GridGeometry::new(rows, cols, extent, origin).map_err(|e| format!("invalid geometry: {e}"))?;
    if dim == 0 {
        return Err("zero components per cell".into());
    }
    let per_image = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dim))
        .ok_or("image size overflows")?;
    let expected = per_image
        .checked_mul(steps)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or("file size overflows")?;
    if bytes.len() != expected {
        return Err(format!("expected {expected} bytes, found {}", bytes.len()));
    }
    bytes[HEADER_LEN..]
        .chunks_exact(per_image * 8)
        .map(|chunk| {
            let values = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            MeasurementImage::new(geometry, dim, values).map_err(|e| e.to_string())
        })
        .collect()
}

pub fn write_measurements(path: &Path, images: &[MeasurementImage]) -> Result<()> {
    let bytes = encode_measurements(images).map_err(|r| CliError::format(path, r))?;
    write_bytes(path, &bytes)
}

pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementImage>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    decode_measurements(&bytes).map_err(|r| CliError::format(path, r))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub run: usize,
    pub k: u32,
    pub id: u32,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub gamma: f64,
}

/// One potential object after a tracking step; `declared` is 1 for objects above the
/// declaration threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub run: usize,
    pub k: u32,
    pub label: u64,
    pub existence: f64,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub gamma: f64,
    pub declared: u8,
}

impl EstimateRow {
    pub fn state(&self) -> KinematicState {
        KinematicState::new(Vec2::new(self.px, self.py), Vec2::new(self.vx, self.vy), self.gamma)
    }
}

/// GOSPA at one step of one run. `localization`, `missed` and `false` are the cost
/// terms before the order root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run: usize,
    pub k: u32,
    pub gospa: f64,
    pub localization: f64,
    pub missed: f64,
    #[serde(rename = "false")]
    pub false_tracks: f64,
}

/// Mean GOSPA across runs with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: u32,
    pub mean_gospa: f64,
    pub stderr: f64,
}

/// Row types with a fixed header, written even when a file has no rows.
pub trait CsvRecord: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

impl CsvRecord for TruthRow {
    const HEADER: &'static [&'static str] = &["run", "k", "id", "px", "py", "vx", "vy", "gamma"];
}

impl CsvRecord for EstimateRow {
    const HEADER: &'static [&'static str] =
        &["run", "k", "label", "existence", "px", "py", "vx", "vy", "gamma", "declared"];
}

impl CsvRecord for MetricRow {
    const HEADER: &'static [&'static str] = &["run", "k", "gospa", "localization", "missed", "false"];
}

impl CsvRecord for AggregateRow {
    const HEADER: &'static [&'static str] = &["k", "mean_gospa", "stderr"];
}

pub fn write_csv<T: CsvRecord>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(T::HEADER).map_err(|e| CliError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::csv(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
    write_bytes(path, &bytes)
}

pub fn read_csv<T: CsvRecord>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let header = r.headers().map_err(|e| CliError::csv(path, e))?;
    if let Some(missing) = T::HEADER.iter().find(|h| !header.iter().any(|c| c == **h)) {
        return Err(CliError::format(path, format!("missing column `{missing}`")));
    }
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(|e| CliError::csv(path, e))
}

pub fn truth_rows(run: usize, truth: &GroundTruth) -> Vec<TruthRow> {
    truth
        .steps()
        .iter()
        .enumerate()
        .flat_map(|(i, objects)| {
            objects.iter().map(move |o| TruthRow {
                run,
                k: i as u32 + 1,
                id: o.id,
                px: o.state.position.x,
                py: o.state.position.y,
                vx: o.state.velocity.x,
                vy: o.state.velocity.y,
                gamma: o.state.intensity,
            })
        })
        .collect()
}

/// Rebuild a run's ground truth over `steps` time steps from its rows.
pub fn truth_from_rows(rows: &[TruthRow], steps: u32, path: &Path) -> Result<GroundTruth> {
    let mut out = vec![Vec::new(); steps as usize];
    for r in rows {
        if r.k == 0 || r.k > steps {
            return Err(CliError::Core(tbd_core::Error::LengthMismatch {
                expected: steps as usize,
                found: r.k as usize,
            }));
        }
        let state = KinematicState::new(Vec2::new(r.px, r.py), Vec2::new(r.vx, r.vy), r.gamma);
        if !state.is_valid() {
            return Err(CliError::format(path, format!("invalid state at k = {}", r.k)));
        }
        out[r.k as usize - 1].push(TruthObject { id: r.id, state });
    }
    Ok(GroundTruth::new(out))
}

/// Run index encoded in a file name such as `run_0007.csv`.
pub fn run_index_from_path(path: &Path) -> Option<usize> {
    path.file_stem()?.to_str()?.strip_prefix("run_")?.parse().ok()
}

pub fn run_file_name(run: usize, extension: &str) -> PathBuf {
    PathBuf::from(format!("run_{run:04}.{extension}"))
}

/// Files in `dir` named `run_NNNN.<extension>`, ordered by run index.
pub fn list_run_files(dir: &Path, extension: &str) -> Result<Vec<(usize, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(extension) {
            continue;
        }
        if let Some(run) = run_index_from_path(&path) {
            files.push((run, path));
        }
    }
    files.sort();
    Ok(files)
}
