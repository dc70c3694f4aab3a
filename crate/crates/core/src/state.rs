//! Domain types shared by the models, the engine and the simulator.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{SMatrix, SVector, Vector2};

use crate::error::{ensure, Error, Result};
use crate::particles::ParticleSet;

pub type Vec2 = Vector2<f64>;

/// Position, velocity and intensity of one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    /// Position in meters.
    pub position: Vec2,
    /// Velocity in meters per time step.
    pub velocity: Vec2,
    /// Non-negative object intensity.
    pub intensity: f64,
}

impl KinematicState {
    pub fn new(position: Vec2, velocity: Vec2, intensity: f64) -> Self {
        Self {
            position,
            velocity,
            intensity,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.intensity >= 0.0
            && self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.intensity.is_finite()
    }

    /// `[px, py, vx, vy, intensity]`
    pub fn to_vector(&self) -> SVector<f64, 5> {
        SVector::<f64, 5>::new(
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
            self.intensity,
        )
    }

    pub fn from_vector(v: &SVector<f64, 5>) -> Self {
        Self::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]), v[4])
    }
}

/// Track identifier. Labels are handed out by a [`LabelCounter`] and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u64);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LabelCounter {
    next: u64,
}

impl LabelCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_label(&mut self) -> Label {
        let label = Label(self.next);
        self.next += 1;
        label
    }

    pub fn issued(&self) -> u64 {
        self.next
    }
}

/// A hypothesized object: existence probability plus a particle representation of the
/// state density conditioned on existence. The non-existence branch carries no
/// particles, only the mass `1 - existence`.
#[derive(Debug, Clone)]
pub struct PotentialObject {
    pub label: Label,
    pub existence: f64,
    pub spatial: ParticleSet,
    /// Time step at which the object was introduced.
    pub born_at: u32,
    /// Cell that spawned the object, if it was created from a measurement cell.
    pub origin_cell: Option<usize>,
}

impl PotentialObject {
    pub fn mean_state(&self) -> KinematicState {
        self.spatial.mean_state()
    }
}

/// Regular grid of measurement cells. Cell `j` lives at `row = j / cols`,
/// `col = j % cols`; rows run along `y`, columns along `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Physical size of one cell in meters (`x`, `y`).
    pub cell_extent: Vec2,
    /// Lower-left corner of the region of interest.
    pub origin: Vec2,
}

impl GridGeometry {
    pub fn new(rows: usize, cols: usize, cell_extent: Vec2, origin: Vec2) -> Result<Self> {
        ensure(rows > 0, "rows", "must be positive")?;
        ensure(cols > 0, "cols", "must be positive")?;
        ensure(
            cell_extent.iter().all(|e| *e > 0.0 && e.is_finite()),
            "cell_extent",
            "must be positive and finite",
        )?;
        ensure(
            origin.iter().all(|o| o.is_finite()),
            "origin",
            "must be finite",
        )?;
        Ok(Self {
            rows,
            cols,
            cell_extent,
            origin,
        })
    }

    /// `n x n` grid of square cells with side `extent`, anchored at the origin.
    pub fn square(n: usize, extent: f64) -> Self {
        Self {
            rows: n,
            cols: n,
            cell_extent: Vec2::new(extent, extent),
            origin: Vec2::zeros(),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_center(&self, j: usize) -> Vec2 {
        let (row, col) = (j / self.cols, j % self.cols);
        Vec2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_extent.x,
            self.origin.y + (row as f64 + 0.5) * self.cell_extent.y,
        )
    }

    /// Lower and upper corner of cell `j`.
    pub fn cell_bounds(&self, j: usize) -> (Vec2, Vec2) {
        let (row, col) = (j / self.cols, j % self.cols);
        let lo = Vec2::new(
            self.origin.x + col as f64 * self.cell_extent.x,
            self.origin.y + row as f64 * self.cell_extent.y,
        );
        (lo, lo + self.cell_extent)
    }

    pub fn upper_corner(&self) -> Vec2 {
        self.origin
            + Vec2::new(
                self.cols as f64 * self.cell_extent.x,
                self.rows as f64 * self.cell_extent.y,
            )
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        let hi = self.upper_corner();
        p.x >= self.origin.x && p.y >= self.origin.y && p.x <= hi.x && p.y <= hi.y
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell_extent.norm()
    }

    /// Cells whose centers lie within `radius` of `p`.
    pub fn cells_within(&self, p: &Vec2, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let col_lo = libm::floor((p.x - radius - self.origin.x) / self.cell_extent.x).max(0.0);
        let row_lo = libm::floor((p.y - radius - self.origin.y) / self.cell_extent.y).max(0.0);
        let col_hi = libm::ceil((p.x + radius - self.origin.x) / self.cell_extent.x);
        let row_hi = libm::ceil((p.y + radius - self.origin.y) / self.cell_extent.y);
        if !(col_hi >= 0.0 && row_hi >= 0.0) {
            return Vec::new();
        }
        let col_hi = (col_hi as usize).min(self.cols);
        let row_hi = (row_hi as usize).min(self.rows);
        let mut cells = Vec::new();
        for row in (row_lo as usize)..row_hi {
            for col in (col_lo as usize)..col_hi {
                let j = row * self.cols + col;
                if (self.cell_center(j) - p).norm_squared() <= r2 {
                    cells.push(j);
                }
            }
        }
        cells
    }
}

/// One raw intensity image: `d` values per cell, stored row-major by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementImage {
    geometry: GridGeometry,
    dim: usize,
    values: Vec<f64>,
}

impl MeasurementImage {
    pub fn new(geometry: GridGeometry, dim: usize, values: Vec<f64>) -> Result<Self> {
        ensure(dim > 0, "dim", "must be positive")?;
        if values.len() != geometry.num_cells() * dim {
            return Err(Error::LengthMismatch {
                expected: geometry.num_cells() * dim,
                found: values.len(),
            });
        }
        ensure(
            values.iter().all(|v| v.is_finite()),
            "values",
            "must be finite",
        )?;
        Ok(Self {
            geometry,
            dim,
            values,
        })
    }

    pub fn zeros(geometry: GridGeometry, dim: usize) -> Self {
        Self {
            geometry,
            dim,
            values: vec![0.0; geometry.num_cells() * dim],
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.geometry.num_cells()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn cell_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn cell_norm(&self, j: usize) -> f64 {
        libm::sqrt(self.cell(j).iter().map(|v| v * v).sum::<f64>())
    }

    /// Cell `j` as a fixed-size vector. Panics if `D != self.dim()`.
    pub fn cell_vector<const D: usize>(&self, j: usize) -> SVector<f64, D> {
        assert_eq!(D, self.dim, "cell dimension mismatch");
        SVector::<f64, D>::from_column_slice(self.cell(j))
    }

    pub fn check_dim<const D: usize>(&self) -> Result<()> {
        if self.dim == D {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: D,
                found: self.dim,
            })
        }
    }
}

/// Mean and covariance of a `D`-dimensional Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments<const D: usize> {
    pub mean: SVector<f64, D>,
    pub cov: SMatrix<f64, D, D>,
}

impl<const D: usize> GaussianMoments<D> {
    pub fn new(mean: SVector<f64, D>, cov: SMatrix<f64, D, D>) -> Self {
        Self { mean, cov }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.cov - self.cov.transpose()).amax() <= tol
    }
}
