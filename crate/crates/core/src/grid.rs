//! Uniform rectangular grids and scalar fields sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::sensor_models::Point2;

pub const MIN_NODES: usize = 16;

/// Axis-aligned rectangle in the physical plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Bounds {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Signed distance to the boundary, positive inside.
    pub fn margin(&self, p: Point2) -> f64 {
        (p.x - self.x_min)
            .min(self.x_max - p.x)
            .min(p.y - self.y_min)
            .min(self.y_max - p.y)
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(self.y_max - self.y_min)
    }

    pub fn unbounded() -> Self {
        Bounds::new(
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
        )
    }
}

/// Uniform node lattice over `[x_min, x_max] x [y_min, y_max]`, including
/// both end points on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let g = GridSpec {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid `[-half, half]^2` with `n` nodes per side.
    pub fn square(half: f64, n: usize) -> Result<Self> {
        GridSpec::new(-half, half, -half, half, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(GeomError::InvalidInput(format!(
                "grid bounds [{}, {}] x [{}, {}] are not a proper rectangle",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.nx < MIN_NODES || self.ny < MIN_NODES {
            return Err(GeomError::InvalidInput(format!(
                "grid needs at least {MIN_NODES} nodes per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    /// Same bounds, different resolution.
    pub fn with_resolution(&self, nx: usize, ny: usize) -> Result<Self> {
        GridSpec::new(self.x_min, self.x_max, self.y_min, self.y_max, nx, ny)
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.x_min, self.x_max, self.y_min, self.y_max)
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    // Written as a weighted mean so grids symmetric about zero have exactly
    // mirrored node coordinates.
    pub fn x(&self, i: usize) -> f64 {
        let n = (self.nx - 1) as f64;
        ((n - i as f64) * self.x_min + i as f64 * self.x_max) / n
    }

    pub fn y(&self, j: usize) -> f64 {
        let n = (self.ny - 1) as f64;
        ((n - j as f64) * self.y_min + j as f64 * self.y_max) / n
    }

    pub fn node(&self, i: usize, j: usize) -> Point2 {
        Point2::new(self.x(i), self.y(j))
    }

    /// Row-major with `y` as the outer index.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Nearest node to `p`, clamped into the grid.
    pub fn nearest(&self, p: Point2) -> (usize, usize) {
        let fi = ((p.x - self.x_min) / self.hx()).round();
        let fj = ((p.y - self.y_min) / self.hy()).round();
        (
            fi.clamp(0.0, (self.nx - 1) as f64) as usize,
            fj.clamp(0.0, (self.ny - 1) as f64) as usize,
        )
    }

    /// Cell containing `p` and the local offsets in `[0, 1]`.
    pub fn locate(&self, p: Point2) -> Option<(usize, usize, f64, f64)> {
        if !self.contains(p) {
            return None;
        }
        let fx = (p.x - self.x_min) / self.hx();
        let fy = (p.y - self.y_min) / self.hy();
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        Some((i, j, fx - i as f64, fy - j as f64))
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, Point2)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j, self.node(i, j))))
    }
}

/// Scalar samples on a [`GridSpec`]; masked nodes hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(GeomError::InvalidInput(format!(
                "field has {} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(GridField { grid, values })
    }

    pub fn filled(grid: GridSpec, value: f64) -> Self {
        GridField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Evaluate `f` at every node; `None` masks the node.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(Point2) -> Option<f64>,
    {
        let values = grid
            .nodes()
            .map(|(_, _, p)| f(p).unwrap_or(f64::NAN))
            .collect();
        GridField { grid, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_nan()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }

    pub fn valid_count(&self) -> usize {
        self.valid_values().count()
    }

    pub fn max(&self) -> Option<f64> {
        self.valid_values().reduce(f64::max)
    }

    pub fn min(&self) -> Option<f64> {
        self.valid_values().reduce(f64::min)
    }

    pub fn median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.valid_values().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }

    /// Node of the largest unmasked value; the first such node in storage
    /// order wins ties.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &v) in self.values.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        best.map(|(k, _)| self.grid.coords(k))
    }

    /// Bilinear interpolation; `None` outside the grid or next to masked nodes.
    pub fn bilinear(&self, p: Point2) -> Option<f64> {
        let (i, j, tx, ty) = self.grid.locate(p)?;
        let v00 = self.get(i, j);
        let v10 = self.get(i + 1, j);
        let v01 = self.get(i, j + 1);
        let v11 = self.get(i + 1, j + 1);
        let v = (1.0 - tx) * (1.0 - ty) * v00
            + tx * (1.0 - ty) * v10
            + (1.0 - tx) * ty * v01
            + tx * ty * v11;
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> GridField {
        GridField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|&v| if v.is_nan() { v } else { f(v) })
                .collect(),
        }
    }
}
