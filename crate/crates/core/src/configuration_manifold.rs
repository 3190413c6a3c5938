//! The metric `G` on sensor configurations, its determinant landscape over
//! one moving sensor, D-optimal placement, and geodesics of the pullback of
//! `G` to the moving sensor's coordinates.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::fisher_field::{MetricField, MetricTensor2};
use crate::grid::{Bounds, GridField, GridSpec};
use crate::quadrature::simpson_weights;
use crate::riemannian_geometry::{
    fan_directions, shoot_fan, shoot_geodesic, GeodesicOptions, GeodesicPath, MetricSource,
    Parameterization, PathSample, Termination, SINGULAR_DET,
};
use crate::sensor_models::{Point2, Vector2};

/// Radius of the disks around sensors left out of the quadrature.
pub const EXCLUSION_RADIUS: f64 = 0.5;
pub const MIN_QUADRATURE_NODES: usize = 101;
/// Sensors may sit this far outside the quadrature domain.
pub const DOMAIN_SLACK: f64 = 2.0;
/// Largest fraction of included quadrature nodes allowed to carry a
/// singular Fisher metric before the integral is rejected.
pub const MAX_SINGULAR_FRACTION: f64 = 0.01;

/// The configuration coordinates `z^i` that vary; every other sensor
/// coordinate keeps its value in the configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigCoordinates {
    free: Vec<(usize, usize)>,
}

impl ConfigCoordinates {
    /// `free` lists `(sensor index, axis)` pairs, axis 0 for x and 1 for y.
    pub fn new(free: Vec<(usize, usize)>, sensor_count: usize) -> Result<Self> {
        if free.is_empty() {
            return Err(GeomError::InvalidInput("no free coordinates".into()));
        }
        for (k, &(s, a)) in free.iter().enumerate() {
            if s >= sensor_count || a > 1 {
                return Err(GeomError::InvalidInput(format!(
                    "coordinate ({s}, {a}) does not exist for {sensor_count} sensors"
                )));
            }
            if free[..k].contains(&(s, a)) {
                return Err(GeomError::InvalidInput(format!("coordinate ({s}, {a}) listed twice")));
            }
        }
        Ok(ConfigCoordinates { free })
    }

    /// Both coordinates of one sensor.
    pub fn moving(index: usize, sensor_count: usize) -> Result<Self> {
        Self::new(vec![(index, 0), (index, 1)], sensor_count)
    }

    pub fn free(&self) -> &[(usize, usize)] {
        &self.free
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDescriptor {
    pub nx: usize,
    pub ny: usize,
    pub bounds: Bounds,
    pub exclusion_radius: f64,
    /// Nodes inside exclusion disks.
    pub excluded_nodes: usize,
    /// Included nodes dropped because `det g` vanished there.
    pub singular_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigMetric {
    pub components: DMatrix<f64>,
    pub at: MetricField,
    pub coords: ConfigCoordinates,
    pub quadrature: QuadratureDescriptor,
}

impl ConfigMetric {
    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.components[(i, j)]
    }

    pub fn det(&self) -> f64 {
        self.components.determinant()
    }

    pub fn trace(&self) -> f64 {
        self.components.trace()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self
            .components
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Whether every eigenvalue is at least `-tol * trace`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let floor = -tol * self.trace().abs();
        self.eigenvalues().iter().all(|&e| e >= floor)
    }

    /// The 2x2 case as a tensor.
    pub fn as_tensor2(&self) -> Option<MetricTensor2> {
        (self.dim() == 2).then(|| MetricTensor2::new(self.get(0, 0), self.get(0, 1), self.get(1, 1)))
    }
}

/// `dg/dz` at `theta` for the sensor coordinate `coord = (sensor, axis)`.
pub fn metric_tangent(field: &MetricField, coord: (usize, usize), theta: Point2) -> Result<MetricTensor2> {
    field.sensor_derivative(coord.0, coord.1, theta)
}

fn check_domain(field: &MetricField, domain: &GridSpec) -> Result<()> {
    domain.validate()?;
    if domain.nx < MIN_QUADRATURE_NODES || domain.ny < MIN_QUADRATURE_NODES {
        return Err(GeomError::InvalidInput(format!(
            "quadrature grid {}x{} is below the minimum {MIN_QUADRATURE_NODES}",
            domain.nx, domain.ny
        )));
    }
    if domain.nx % 2 == 0 || domain.ny % 2 == 0 {
        return Err(GeomError::InvalidInput(format!(
            "composite Simpson needs odd node counts, got {}x{}",
            domain.nx, domain.ny
        )));
    }
    let b = domain.bounds();
    let slack = Bounds::new(
        b.x_min - DOMAIN_SLACK,
        b.x_max + DOMAIN_SLACK,
        b.y_min - DOMAIN_SLACK,
        b.y_max + DOMAIN_SLACK,
    );
    for s in field.config().sensors() {
        if !slack.contains(*s) {
            return Err(GeomError::InvalidInput(format!(
                "sensor ({}, {}) lies more than {DOMAIN_SLACK} outside the domain",
                s.x, s.y
            )));
        }
    }
    Ok(())
}

/// Quadrature weights and node positions, reusable across configurations.
struct Quadrature {
    grid: GridSpec,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

impl Quadrature {
    fn new(grid: &GridSpec) -> Self {
        Quadrature {
            grid: *grid,
            wx: simpson_weights(grid.nx, grid.hx()),
            wy: simpson_weights(grid.ny, grid.hy()),
        }
    }

    /// Integrate the upper triangle of `tr(g^-1 h_i g^-1 h_j) sqrt(det g)`.
    /// Each row is summed in mirror pairs `(i, nx-1-i)` so that reflecting
    /// the configuration in the domain's vertical midline reproduces the
    /// result bit for bit.
    fn integrate<T>(&self, field: &MetricField, d: usize, tangent: T) -> Result<(DMatrix<f64>, QuadratureDescriptor)>
    where
        T: Fn(&MetricField, usize, Point2) -> Result<MetricTensor2>,
    {
        // G is linear in the prefactor, so integrate at prefactor 1 and
        // scale once at the end.
        let scale = field.prefactor();
        let field = &field.with_unit_prefactor();
        let tangent = |k: usize, p: Point2| tangent(field, k, p);
        let grid = &self.grid;
        let sensors = field.config().sensors();
        let mut total = vec![0.0; d * d];
        let mut row = vec![0.0; d * d];
        let mut left = vec![0.0; d * d];
        let mut right = vec![0.0; d * d];
        let mut p_mats: Vec<[f64; 4]> = vec![[0.0; 4]; d];
        let mut excluded = 0usize;
        let mut singular = 0usize;
        let mut first_singular: Option<(Point2, f64)> = None;

        let mut node = |p: Point2, w: f64, out: &mut [f64], p_mats: &mut [[f64; 4]]| -> Result<()> {
            out.iter_mut().for_each(|v| *v = 0.0);
            if sensors.iter().any(|s| p.distance(*s) < EXCLUSION_RADIUS) {
                excluded += 1;
                return Ok(());
            }
            let g = field.metric_at(p)?;
            let det = field.metric_det_at(p)?;
            // Relative to the trace so the test does not depend on the prefactor.
            if !(det > SINGULAR_DET * g.trace() * g.trace()) {
                singular += 1;
                first_singular.get_or_insert((p, det));
                return Ok(());
            }
            let inv = MetricTensor2::new(g.g22 / det, -g.g12 / det, g.g11 / det);
            let vol = det.sqrt();
            for (k, pm) in p_mats.iter_mut().enumerate() {
                let h = tangent(k, p)?;
                *pm = [
                    inv.g11 * h.g11 + inv.g12 * h.g12,
                    inv.g11 * h.g12 + inv.g12 * h.g22,
                    inv.g12 * h.g11 + inv.g22 * h.g12,
                    inv.g12 * h.g12 + inv.g22 * h.g22,
                ];
            }
            let s = w * vol;
            for a in 0..d {
                let pa = &p_mats[a];
                for b in a..d {
                    let pb = &p_mats[b];
                    let tr = pa[0] * pb[0] + pa[1] * pb[2] + pa[2] * pb[1] + pa[3] * pb[3];
                    out[a * d + b] = s * tr;
                }
            }
            Ok(())
        };

        let nx = grid.nx;
        for j in 0..grid.ny {
            row.iter_mut().for_each(|v| *v = 0.0);
            let y = grid.y(j);
            for i in 0..nx.div_ceil(2) {
                let m = nx - 1 - i;
                node(Point2::new(grid.x(i), y), self.wx[i] * self.wy[j], &mut left, &mut p_mats)?;
                if m != i {
                    node(Point2::new(grid.x(m), y), self.wx[m] * self.wy[j], &mut right, &mut p_mats)?;
                    for k in 0..d * d {
                        row[k] += left[k] + right[k];
                    }
                } else {
                    for k in 0..d * d {
                        row[k] += left[k];
                    }
                }
            }
            for k in 0..d * d {
                total[k] += row[k];
            }
        }

        let included = grid.len() - excluded;
        if singular as f64 > MAX_SINGULAR_FRACTION * included as f64 {
            let (point, det) = first_singular.expect("singular count is nonzero");
            return Err(GeomError::NonPositiveDefinite {
                point,
                det: det * scale * scale,
            });
        }
        let mut m = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in a..d {
                m[(a, b)] = scale * total[a * d + b];
                m[(b, a)] = scale * total[a * d + b];
            }
        }
        let desc = QuadratureDescriptor {
            nx: grid.nx,
            ny: grid.ny,
            bounds: grid.bounds(),
            exclusion_radius: EXCLUSION_RADIUS,
            excluded_nodes: excluded,
            singular_nodes: singular,
        };
        Ok((m, desc))
    }
}

/// `G_ij = ∫ tr(g^-1 h_i g^-1 h_j) sqrt(det g) dA` over `domain` by tensor
/// composite Simpson, with disks of radius [`EXCLUSION_RADIUS`] around the
/// sensors removed. Nodes where `g` is singular are dropped and counted.
pub fn config_metric(field: &MetricField, coords: &ConfigCoordinates, domain: &GridSpec) -> Result<ConfigMetric> {
    check_domain(field, domain)?;
    let n = field.config().len();
    if coords.free().iter().any(|&(s, a)| s >= n || a > 1) {
        return Err(GeomError::InvalidInput("coordinates do not match the configuration".into()));
    }
    let quad = Quadrature::new(domain);
    let free = coords.free();
    let (components, quadrature) =
        quad.integrate(field, coords.dim(), |f, k, p| metric_tangent(f, free[k], p))?;
    Ok(ConfigMetric {
        components,
        at: field.clone(),
        coords: coords.clone(),
        quadrature,
    })
}

/// `log((2 pi e)^n det G^-1)` for an `n`-dimensional metric.
pub fn max_entropy_divergence(det: f64, n: usize) -> f64 {
    n as f64 * (2.0 * PI * E).ln() - det.ln()
}

/// The configuration metric of one moving sensor sampled over an
/// evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigLandscape {
    pub moving: usize,
    pub template: MetricField,
    /// `det G` per node; masked inside the exclusion disks of frozen sensors
    /// and where the quadrature failed.
    pub det: GridField,
    pub g11: GridField,
    pub g12: GridField,
    pub g22: GridField,
    /// Descriptor of the quadrature grid; `singular_nodes` is the largest
    /// count over all evaluation nodes.
    pub quadrature: QuadratureDescriptor,
    /// `log((2 pi e)^2 / det G)` at the landscape maximum. Reported only.
    pub max_entropy_divergence: f64,
}

impl ConfigLandscape {
    pub fn eval_grid(&self) -> &GridSpec {
        &self.det.grid
    }

    pub fn frozen_sensors(&self) -> Vec<Point2> {
        let s = self.template.config().sensors();
        (0..s.len()).filter(|&k| k != self.moving).map(|k| s[k]).collect()
    }

    /// Grid node with the largest `det G`.
    pub fn argmax(&self) -> Option<Point2> {
        self.det.argmax().map(|(i, j)| self.det.grid.node(i, j))
    }
}

fn check_moving(template: &MetricField, moving: usize) -> Result<()> {
    if moving >= template.config().len() {
        return Err(GeomError::InvalidInput(format!(
            "moving sensor {moving} out of range for {} sensors",
            template.config().len()
        )));
    }
    Ok(())
}

/// `G` for the moving sensor placed at every node of `eval`.
pub fn config_landscape(
    template: &MetricField,
    moving: usize,
    domain: &GridSpec,
    eval: &GridSpec,
) -> Result<ConfigLandscape> {
    check_moving(template, moving)?;
    check_domain(template, domain)?;
    eval.validate()?;
    let n = template.config().len();
    let coords = ConfigCoordinates::moving(moving, n)?;
    let frozen: Vec<Point2> = (0..n)
        .filter(|&k| k != moving)
        .map(|k| template.config().sensors()[k])
        .collect();
    let quad = Quadrature::new(domain);

    let results: Vec<Option<(MetricTensor2, QuadratureDescriptor)>> = (0..eval.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = eval.coords(k);
            let p = eval.node(i, j);
            if frozen.iter().any(|s| p.distance(*s) < EXCLUSION_RADIUS) {
                return None;
            }
            let field = template.with_sensor(moving, p).ok()?;
            let free = coords.free();
            let (m, desc) = quad
                .integrate(&field, 2, |f, c, q| metric_tangent(f, free[c], q))
                .ok()?;
            Some((MetricTensor2::new(m[(0, 0)], m[(0, 1)], m[(1, 1)]), desc))
        })
        .collect();

    let pick = |f: fn(&MetricTensor2) -> f64| -> Vec<f64> {
        results
            .iter()
            .map(|r| r.as_ref().map_or(f64::NAN, |(g, _)| f(g)))
            .collect()
    };
    let det = GridField::new(*eval, pick(|g| g.det()))?;
    let g11 = GridField::new(*eval, pick(|g| g.g11))?;
    let g12 = GridField::new(*eval, pick(|g| g.g12))?;
    let g22 = GridField::new(*eval, pick(|g| g.g22))?;

    let mut quadrature = QuadratureDescriptor {
        nx: domain.nx,
        ny: domain.ny,
        bounds: domain.bounds(),
        exclusion_radius: EXCLUSION_RADIUS,
        excluded_nodes: 0,
        singular_nodes: 0,
    };
    for (_, d) in results.iter().flatten() {
        quadrature.singular_nodes = quadrature.singular_nodes.max(d.singular_nodes);
        quadrature.excluded_nodes = quadrature.excluded_nodes.max(d.excluded_nodes);
    }
    let max_det = det.max().unwrap_or(f64::NAN);
    Ok(ConfigLandscape {
        moving,
        template: template.clone(),
        det,
        g11,
        g12,
        g22,
        quadrature,
        max_entropy_divergence: max_entropy_divergence(max_det, 2),
    })
}

/// `det G` for the moving sensor placed at every node of `eval`.
pub fn det_g_landscape(
    template: &MetricField,
    moving: usize,
    domain: &GridSpec,
    eval: &GridSpec,
) -> Result<GridField> {
    Ok(config_landscape(template, moving, domain, eval)?.det)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DOptimum {
    pub point: Point2,
    pub det: f64,
    /// Best evaluation-grid node before polishing.
    pub grid_point: Point2,
    pub grid_det: f64,
    pub polish_iterations: usize,
}

/// Nelder–Mead minimization in the plane from a given initial simplex.
/// Returns the best vertex, its value and the iteration count.
fn nelder_mead<F: FnMut(Point2) -> f64>(
    mut f: F,
    simplex: [Point2; 3],
    tol: f64,
    max_iter: usize,
) -> (Point2, f64, usize) {
    let mut v: Vec<(Point2, f64)> = simplex.iter().map(|&p| (p, f(p))).collect();
    let mut iter = 0;
    while iter < max_iter {
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = v[1].0.distance(v[0].0).max(v[2].0.distance(v[0].0));
        if size < tol {
            break;
        }
        iter += 1;
        let c = Point2::new(0.5 * (v[0].0.x + v[1].0.x), 0.5 * (v[0].0.y + v[1].0.y));
        let w = v[2];
        let at = |s: f64| c + s * (c - w.0);
        let r = at(1.0);
        let fr = f(r);
        if fr < v[0].1 {
            let e = at(2.0);
            let fe = f(e);
            v[2] = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < v[1].1 {
            v[2] = (r, fr);
        } else {
            let (k, fk) = if fr < w.1 { (at(0.5), 0.0) } else { (at(-0.5), 0.0) };
            let _ = fk;
            let fk = f(k);
            if fk < w.1.min(fr) {
                v[2] = (k, fk);
            } else {
                let b = v[0].0;
                for vert in v.iter_mut().skip(1) {
                    let p = Point2::new(0.5 * (b.x + vert.0.x), 0.5 * (b.y + vert.0.y));
                    *vert = (p, f(p));
                }
            }
        }
    }
    v.sort_by(|a, b| a.1.total_cmp(&b.1));
    (v[0].0, v[0].1, iter)
}

/// Placement of the moving sensor maximizing `det G`: the best node of the
/// landscape, polished by Nelder–Mead to tolerance `1e-3`.
pub fn d_optimal_from_landscape(landscape: &ConfigLandscape, domain: &GridSpec) -> Result<DOptimum> {
    let det = &landscape.det;
    let (max, median) = match (det.max(), det.median()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(GeomError::FlatLandscape {
                max: f64::NAN,
                median: f64::NAN,
            })
        }
    };
    if !(max - median >= 1e-12 * max.abs()) || !(max > 0.0) {
        return Err(GeomError::FlatLandscape { max, median });
    }
    let start = landscape.argmax().expect("landscape has valid nodes");
    let eval = landscape.eval_grid();
    let bounds = eval.bounds();
    let frozen = landscape.frozen_sensors();
    let coords = ConfigCoordinates::moving(landscape.moving, landscape.template.config().len())?;
    let quad = Quadrature::new(domain);
    let objective = |p: Point2| -> f64 {
        if !bounds.contains(p) || frozen.iter().any(|s| p.distance(*s) < EXCLUSION_RADIUS) {
            return f64::INFINITY;
        }
        let Ok(field) = landscape.template.with_sensor(landscape.moving, p) else {
            return f64::INFINITY;
        };
        let free = coords.free();
        match quad.integrate(&field, 2, |f, c, q| metric_tangent(f, free[c], q)) {
            Ok((m, _)) => -(m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]),
            Err(_) => f64::INFINITY,
        }
    };
    // Symmetric under reflection in x about the start, so that mirrored
    // scenarios polish to mirrored optima.
    let a = 0.5 * eval.hx().min(eval.hy());
    let simplex = [
        Point2::new(start.x, start.y + a),
        Point2::new(start.x + 0.866 * a, start.y - 0.5 * a),
        Point2::new(start.x - 0.866 * a, start.y - 0.5 * a),
    ];
    let grid_det = max;
    let (point, fbest, iterations) = nelder_mead(objective, simplex, 1e-3, 500);
    let (point, value) = if -fbest >= grid_det {
        (point, -fbest)
    } else {
        (start, grid_det)
    };
    Ok(DOptimum {
        point,
        det: value,
        grid_point: start,
        grid_det,
        polish_iterations: iterations,
    })
}

/// D-optimal placement of sensor `moving` with the others frozen.
pub fn d_optimal(template: &MetricField, moving: usize, domain: &GridSpec, eval: &GridSpec) -> Result<DOptimum> {
    let landscape = config_landscape(template, moving, domain, eval)?;
    d_optimal_from_landscape(&landscape, domain)
}

/// Catmull-Rom weights and their derivatives at `t` for nodes -1, 0, 1, 2.
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t + 2.0 * t2 - t3),
            0.5 * (2.0 - 5.0 * t2 + 3.0 * t3),
            0.5 * (t + 4.0 * t2 - 3.0 * t3),
            0.5 * (-t2 + t3),
        ],
        [
            0.5 * (-1.0 + 4.0 * t - 3.0 * t2),
            0.5 * (-10.0 * t + 9.0 * t2),
            0.5 * (1.0 + 8.0 * t - 9.0 * t2),
            0.5 * (-2.0 * t + 3.0 * t2),
        ],
    )
}

/// The configuration metric of one moving sensor as a metric on the plane,
/// interpolated between evaluation-grid nodes with C1 bicubic Catmull-Rom
/// splines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackMetric {
    grid: GridSpec,
    g: [Vec<f64>; 3],
    frozen: Vec<Point2>,
}

impl PullbackMetric {
    pub fn from_landscape(l: &ConfigLandscape) -> Self {
        PullbackMetric {
            grid: *l.eval_grid(),
            g: [l.g11.values.clone(), l.g12.values.clone(), l.g22.values.clone()],
            frozen: l.frozen_sensors(),
        }
    }

    /// A metric sampled from `f` at every node of `grid`.
    pub fn from_fn<F: Fn(Point2) -> MetricTensor2>(grid: &GridSpec, frozen: Vec<Point2>, f: F) -> Self {
        let mut g = [Vec::new(), Vec::new(), Vec::new()];
        for (_, _, p) in grid.nodes() {
            let m = f(p);
            g[0].push(m.g11);
            g[1].push(m.g12);
            g[2].push(m.g22);
        }
        PullbackMetric {
            grid: *grid,
            g,
            frozen,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Distance from frozen sensors at which shooting should stop so the
    /// interpolation stencil stays clear of masked nodes.
    pub fn stop_radius(&self) -> f64 {
        EXCLUSION_RADIUS + 3.0 * self.grid.hx().max(self.grid.hy())
    }

    /// Node value with quadratic extrapolation one node past each edge.
    fn node(&self, c: usize, i: i64, j: i64) -> f64 {
        let nx = self.grid.nx as i64;
        let ny = self.grid.ny as i64;
        if i < 0 {
            return 3.0 * self.node(c, 0, j) - 3.0 * self.node(c, 1, j) + self.node(c, 2, j);
        }
        if i >= nx {
            return 3.0 * self.node(c, nx - 1, j) - 3.0 * self.node(c, nx - 2, j) + self.node(c, nx - 3, j);
        }
        if j < 0 {
            return 3.0 * self.node(c, i, 0) - 3.0 * self.node(c, i, 1) + self.node(c, i, 2);
        }
        if j >= ny {
            return 3.0 * self.node(c, i, ny - 1) - 3.0 * self.node(c, i, ny - 2) + self.node(c, i, ny - 3);
        }
        self.g[c][self.grid.index(i as usize, j as usize)]
    }

    /// Metric and its `[d/dx, d/dy]` at `p`.
    fn interpolate(&self, p: Point2) -> Result<(MetricTensor2, [MetricTensor2; 2])> {
        let grid = &self.grid;
        let (hx, hy) = (grid.hx(), grid.hy());
        let fx = (p.x - grid.x_min) / hx;
        let fy = (p.y - grid.y_min) / hy;
        if !(fx > -1.0 && fy > -1.0 && fx < grid.nx as f64 && fy < grid.ny as f64) {
            return Err(GeomError::InvalidInput(format!(
                "({}, {}) is outside the pullback grid",
                p.x, p.y
            )));
        }
        let i = (fx.floor() as i64).clamp(0, grid.nx as i64 - 2);
        let j = (fy.floor() as i64).clamp(0, grid.ny as i64 - 2);
        let (wx, dwx) = catmull_rom(fx - i as f64);
        let (wy, dwy) = catmull_rom(fy - j as f64);
        let mut out = [[0.0; 3]; 3];
        for c in 0..3 {
            for b in 0..4 {
                for a in 0..4 {
                    let v = self.node(c, i - 1 + a as i64, j - 1 + b as i64);
                    out[0][c] += wx[a] * wy[b] * v;
                    out[1][c] += dwx[a] * wy[b] * v;
                    out[2][c] += wx[a] * dwy[b] * v;
                }
            }
        }
        let t = |r: [f64; 3], s: f64| MetricTensor2::new(r[0] * s, r[1] * s, r[2] * s);
        let g = t(out[0], 1.0);
        if !g.is_finite() {
            let (sensor, _) = self
                .frozen
                .iter()
                .enumerate()
                .map(|(k, s)| (k, p.distance(*s)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap_or((0, 0.0));
            return Err(GeomError::DegenerateGeometry {
                point: p,
                sensor,
                radius: EXCLUSION_RADIUS,
            });
        }
        Ok((g, [t(out[1], 1.0 / hx), t(out[2], 1.0 / hy)]))
    }
}

impl MetricSource for PullbackMetric {
    fn metric(&self, p: Point2) -> Result<MetricTensor2> {
        Ok(self.interpolate(p)?.0)
    }
    fn metric_gradient(&self, p: Point2) -> Option<Result<[MetricTensor2; 2]>> {
        Some(self.interpolate(p).map(|r| r.1))
    }
    fn singular_points(&self) -> Vec<Point2> {
        self.frozen.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigGeodesicOptions {
    pub t_max: f64,
    pub tol: f64,
    /// Shooting succeeds once the path passes this close to the end point.
    pub hit_radius: f64,
    pub max_iterations: usize,
    /// Launch angles tried around the chord direction to bracket the target.
    pub scan: usize,
}

impl Default for ConfigGeodesicOptions {
    fn default() -> Self {
        ConfigGeodesicOptions {
            t_max: 60.0,
            tol: 1e-8,
            hit_radius: 0.1,
            max_iterations: 60,
            scan: 72,
        }
    }
}

fn pullback_options(pullback: &PullbackMetric, t_max: f64, tol: f64) -> GeodesicOptions {
    GeodesicOptions {
        t_max,
        tol,
        bounds: pullback.grid.bounds(),
        stop_radius: pullback.stop_radius(),
        ..Default::default()
    }
}

/// Closest approach of a path to `target`: signed miss distance (positive
/// when the target is to the left of the path), and the time of approach.
fn closest_approach(path: &GeodesicPath, target: Point2) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for w in path.samples.windows(2) {
        let (a, b) = (w[0].point, w[1].point);
        let ab = b - a;
        let len2 = ab.dot(ab);
        let s = if len2 > 0.0 {
            ((target - a).dot(ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let c = a + s * ab;
        let d = c.distance(target);
        if d < best.0 {
            let side = ab.cross(target - c).signum();
            best = (d, side * d, w[0].t + s * (w[1].t - w[0].t));
        }
    }
    if path.samples.len() == 1 {
        let d = path.start().distance(target);
        return (d, 0.0);
    }
    (best.1, best.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigGeodesic {
    pub path: GeodesicPath,
    /// `sqrt(G(γ', γ'))` at each sample.
    pub speed: Vec<f64>,
    pub iterations: usize,
    pub miss: f64,
}

/// Geodesic of the pullback metric from `start` to `end`, by bisection on
/// the launch angle until the path passes within `hit_radius` of `end`. The
/// path is cut at its closest approach.
pub fn config_geodesic(
    pullback: &PullbackMetric,
    start: Point2,
    end: Point2,
    opts: &ConfigGeodesicOptions,
) -> Result<ConfigGeodesic> {
    for p in [start, end] {
        if pullback.frozen.iter().any(|s| p.distance(*s) < pullback.stop_radius()) {
            return Err(GeomError::InvalidInput(format!(
                "({}, {}) is too close to a frozen sensor",
                p.x, p.y
            )));
        }
        if !pullback.grid.contains(p) {
            return Err(GeomError::InvalidInput(format!("({}, {}) is outside the domain", p.x, p.y)));
        }
    }
    if start.distance(end) < 1e-12 {
        let g = pullback.metric(start)?;
        let _ = g;
        let path = GeodesicPath {
            samples: vec![PathSample {
                t: 0.0,
                point: start,
                velocity: Vector2::new(0.0, 0.0),
                speed: 0.0,
            }],
            parameterization: Parameterization::Affine,
            termination: Termination::Trivial,
        };
        return Ok(ConfigGeodesic {
            speed: vec![0.0],
            path,
            iterations: 0,
            miss: 0.0,
        });
    }

    let gopts = pullback_options(pullback, opts.t_max, opts.tol);
    let chord = (end - start).angle();
    let shoot = |phi: f64| -> Result<(f64, f64)> {
        let path = shoot_geodesic(pullback, start, Vector2::from_angle(phi), &gopts)?;
        Ok(closest_approach(&path, end))
    };
    let finish = |phi: f64, t: f64, iterations: usize| -> Result<ConfigGeodesic> {
        let o = GeodesicOptions {
            t_max: t.max(1e-9),
            ..gopts
        };
        let path = shoot_geodesic(pullback, start, Vector2::from_angle(phi), &o)?;
        let miss = path.end().distance(end);
        Ok(ConfigGeodesic {
            speed: path.samples.iter().map(|s| s.speed).collect(),
            path,
            iterations,
            miss,
        })
    };

    let mut iterations = 1;
    let (m0, t0) = shoot(chord)?;
    if m0 == 0.0 {
        return finish(chord, t0, iterations);
    }
    // Bracket a sign change of the signed miss, nearest the chord first.
    let step = 2.0 * PI / opts.scan.max(4) as f64;
    let mut bracket = None;
    let mut best = (m0.abs(), chord, t0);
    'scan: for k in 1..=opts.scan / 2 {
        for dir in [1.0, -1.0] {
            let inner = chord + dir * (k - 1) as f64 * step;
            let outer = chord + dir * k as f64 * step;
            let (mi, _) = shoot(inner)?;
            let (mo, to) = shoot(outer)?;
            iterations += 2;
            if mo.abs() < best.0 {
                best = (mo.abs(), outer, to);
            }
            if mi.signum() != mo.signum() && mi.abs().min(mo.abs()) < 0.5 * pullback.grid.bounds().width() {
                bracket = Some((inner, mi, outer));
                break 'scan;
            }
        }
    }
    let Some((mut lo, mut mlo, mut hi)) = bracket else {
        if best.0 < opts.hit_radius {
            return finish(best.1, best.2, iterations);
        }
        return Err(GeomError::NoConvergence {
            iterations,
            miss: best.0,
        });
    };
    // Bisect to angular resolution rather than stopping at the first hit, so
    // the launch angle does not depend on rounding near the hit radius.
    let mut hit = None;
    for _ in 0..opts.max_iterations {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo.min(hi) && mid < lo.max(hi)) {
            break;
        }
        let (mm, tm) = shoot(mid)?;
        iterations += 1;
        if mm.abs() < opts.hit_radius {
            hit = Some((mid, tm));
        }
        if mm == 0.0 {
            break;
        }
        if mm.signum() == mlo.signum() {
            lo = mid;
            mlo = mm;
        } else {
            hi = mid;
        }
    }
    match hit {
        Some((phi, t)) => finish(phi, t, iterations),
        None => Err(GeomError::NoConvergence {
            iterations,
            miss: best.0,
        }),
    }
}

/// `count` geodesics of the pullback metric from `start`, launched along
/// `(cos phi, sin phi)` for `phi = 0, 0.25, 0.5, ...`.
pub fn config_geodesic_fan(
    pullback: &PullbackMetric,
    start: Point2,
    count: usize,
    t_max: f64,
) -> Result<Vec<GeodesicPath>> {
    let opts = pullback_options(pullback, t_max, 1e-8);
    shoot_fan(pullback, start, &fan_directions(count, 0.25), &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher_field::PrefactorMode;
    use crate::sensor_models::SensorConfiguration;

    fn field(sensors: Vec<Point2>) -> MetricField {
        MetricField::new(SensorConfiguration::new(sensors, 1.0).unwrap(), PrefactorMode::Paper).unwrap()
    }

    fn fig6(s2: Point2) -> MetricField {
        field(vec![Point2::new(2.0, 3.0), s2])
    }

    #[test]
    fn coordinates_validation() {
        assert!(ConfigCoordinates::new(vec![], 2).is_err());
        assert!(ConfigCoordinates::new(vec![(0, 0), (0, 0)], 2).is_err());
        assert!(ConfigCoordinates::new(vec![(2, 0)], 2).is_err());
        assert!(ConfigCoordinates::new(vec![(0, 2)], 2).is_err());
        let c = ConfigCoordinates::moving(1, 2).unwrap();
        assert_eq!(c.free(), &[(1, 0), (1, 1)]);
    }

    #[test]
    fn tangent_radial_scaling() {
        let f = field(vec![Point2::new(0.0, 0.0)]);
        let dir = Vector2::new(0.6, 0.8);
        let near = metric_tangent(&f, (0, 0), Point2::new(0.0, 0.0) + 1.5 * dir).unwrap();
        let far = metric_tangent(&f, (0, 0), Point2::new(0.0, 0.0) + 3.0 * dir).unwrap();
        assert!(near.scaled(1.0 / 8.0).max_abs_diff(&far) < 1e-9);
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let f = fig6(Point2::new(-6.0, -7.0));
        let probes = [(1.0, 1.0), (-3.0, 4.0), (5.0, -2.0), (-8.0, -1.0), (0.5, -6.0)];
        let h = 1e-6;
        for (x, y) in probes {
            let p = Point2::new(x, y);
            for s in 0..2 {
                for a in 0..2 {
                    let pos = f.config().sensors()[s];
                    let e = if a == 0 { Vector2::new(h, 0.0) } else { Vector2::new(0.0, h) };
                    let gp = f.with_sensor(s, pos + e).unwrap().metric_at(p).unwrap();
                    let gm = f.with_sensor(s, pos - e).unwrap().metric_at(p).unwrap();
                    let fd = (gp + gm.scaled(-1.0)).scaled(0.5 / h);
                    let an = metric_tangent(&f, (s, a), p).unwrap();
                    assert!(fd.max_abs_diff(&an) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn config_metric_is_symmetric_psd() {
        let f = fig6(Point2::new(-6.0, -7.0));
        let grid = GridSpec::square(10.0, 101).unwrap();
        let coords = ConfigCoordinates::new(vec![(0, 0), (0, 1), (1, 0), (1, 1)], 2).unwrap();
        let g = config_metric(&f, &coords, &grid).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
        assert!(g.is_psd(1e-8));
        assert_eq!(g.quadrature.exclusion_radius, EXCLUSION_RADIUS);
        assert_eq!((g.quadrature.nx, g.quadrature.ny), (101, 101));
    }

    #[test]
    fn only_free_coordinates_are_differentiated() {
        let f = fig6(Point2::new(-6.0, -7.0));
        let grid = GridSpec::square(10.0, 101).unwrap();
        let quad = Quadrature::new(&grid);
        let free = [(1usize, 0usize), (1, 1)];
        let seen = std::sync::Mutex::new(std::collections::BTreeSet::new());
        quad.integrate(&f, 2, |f, k, p| {
            seen.lock().unwrap().insert(free[k]);
            metric_tangent(f, free[k], p)
        })
        .unwrap();
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), free.to_vec());
    }

    #[test]
    fn rejects_bad_quadrature_grids() {
        let f = fig6(Point2::new(-6.0, -7.0));
        let coords = ConfigCoordinates::moving(1, 2).unwrap();
        assert!(config_metric(&f, &coords, &GridSpec::square(10.0, 51).unwrap()).is_err());
        assert!(config_metric(&f, &coords, &GridSpec::square(10.0, 102).unwrap()).is_err());
        let far = fig6(Point2::new(-13.0, 0.0));
        assert!(config_metric(&far, &coords, &GridSpec::square(10.0, 101).unwrap()).is_err());
    }

    #[test]
    fn single_sensor_metric_is_rejected() {
        // One bearings sensor gives a rank-one g everywhere.
        let f = field(vec![Point2::new(0.5, 0.5)]);
        let coords = ConfigCoordinates::moving(0, 1).unwrap();
        assert!(matches!(
            config_metric(&f, &coords, &GridSpec::square(10.0, 101).unwrap()),
            Err(GeomError::NonPositiveDefinite { .. })
        ));
    }

    #[test]
    fn mirror_reflection_is_exact() {
        let grid = GridSpec::square(10.0, 101).unwrap();
        let coords = ConfigCoordinates::moving(1, 2).unwrap();
        let a = config_metric(&fig6(Point2::new(-6.0, -7.0)), &coords, &grid).unwrap();
        let b = config_metric(
            &field(vec![Point2::new(-2.0, 3.0), Point2::new(6.0, -7.0)]),
            &coords,
            &grid,
        )
        .unwrap();
        assert_eq!(a.get(0, 0), b.get(0, 0));
        assert_eq!(a.get(1, 1), b.get(1, 1));
        assert_eq!(a.get(0, 1), -b.get(0, 1));
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |p: Point2| (p.x - 1.0).powi(2) + 3.0 * (p.y + 2.0).powi(2);
        let s = [Point2::new(0.0, 0.0), Point2::new(0.5, 0.0), Point2::new(0.0, 0.5)];
        let (p, _, _) = nelder_mead(f, s, 1e-8, 1000);
        assert!(p.distance(Point2::new(1.0, -2.0)) < 1e-6);
    }

    #[test]
    fn catmull_rom_reproduces_quadratics() {
        let grid = GridSpec::square(2.0, 21).unwrap();
        let q = |p: Point2| MetricTensor2::new(1.0 + p.x * p.x, 0.1 * p.x * p.y, 2.0 + p.y);
        let pb = PullbackMetric::from_fn(&grid, vec![], q);
        for p in [Point2::new(0.13, -0.71), Point2::new(1.93, 1.99), Point2::new(-2.0, -1.96)] {
            let g = pb.metric(p).unwrap();
            assert!(g.max_abs_diff(&q(p)) < 1e-12, "{p:?}");
            let [dx, _] = pb.metric_gradient(p).unwrap().unwrap();
            assert!((dx.g11 - 2.0 * p.x).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_pullback_fan_is_straight() {
        let grid = GridSpec::square(5.0, 21).unwrap();
        let pb = PullbackMetric::from_fn(&grid, vec![], |_| MetricTensor2::new(2.0, 0.5, 1.0));
        let fan = config_geodesic_fan(&pb, Point2::new(0.5, -0.5), 26, 30.0).unwrap();
        assert_eq!(fan.len(), 26);
        for (k, path) in fan.iter().enumerate() {
            let d = Vector2::from_angle(0.25 * k as f64);
            for s in &path.samples {
                assert!((s.point - Point2::new(0.5, -0.5)).cross(d).abs() < 1e-9);
            }
            assert_eq!(path.termination, Termination::Boundary);
        }
    }

    #[test]
    fn trivial_and_straight_config_geodesics() {
        let grid = GridSpec::square(5.0, 21).unwrap();
        let pb = PullbackMetric::from_fn(&grid, vec![], |_| MetricTensor2::new(2.0, 0.5, 1.0));
        let opts = ConfigGeodesicOptions::default();
        let p = Point2::new(1.0, 1.0);
        let t = config_geodesic(&pb, p, p, &opts).unwrap();
        assert_eq!(t.path.len(), 1);
        let g = config_geodesic(&pb, Point2::new(-3.0, -2.0), Point2::new(3.5, 1.0), &opts).unwrap();
        assert!(g.miss < 0.1);
    }
}
