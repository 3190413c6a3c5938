//! Fast marching for the Riemannian eikonal equation `|grad u|_{g^-1} = 1`
//! and geodesic extraction by descending the resulting distance map.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::fisher_field::MetricTensor2;
use crate::grid::{GridField, GridSpec};
use crate::riemannian_geometry::{
    GeodesicPath, MetricSource, Parameterization, PathSample, Termination, SENSOR_STOP_RADIUS,
};
use crate::sensor_models::{Point2, Vector2};

/// Relative tolerance below which a negative determinant is rounding noise.
const PSD_TOL: f64 = 1e-12;
const MIN_DECREASE: f64 = 1e-12;
/// Nodes within this many cells of the source (in each axis) are seeded
/// with the exact distance of the frozen source metric.
pub const SEED_HALF_WIDTH: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Accepted,
    Trial,
    Far,
    /// Inside the sensor exclusion radius; never accepted.
    Masked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMap {
    pub grid: GridSpec,
    /// Geodesic distance per node; `NaN` on masked or unreached nodes.
    pub u: Vec<f64>,
    pub source: Point2,
    pub state: Vec<NodeState>,
    /// Number of nodes accepted by the sweep.
    pub pops: usize,
    /// Largest drop between consecutively accepted values (zero when the
    /// sweep was causal).
    pub causality_violation: f64,
}

impl DistanceMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.u[self.grid.index(i, j)]
    }

    pub fn state_at(&self, i: usize, j: usize) -> NodeState {
        self.state[self.grid.index(i, j)]
    }

    pub fn unmasked_count(&self) -> usize {
        self.state.iter().filter(|s| **s != NodeState::Masked).count()
    }

    pub fn to_field(&self) -> GridField {
        GridField {
            grid: self.grid,
            values: self.u.clone(),
        }
    }

    /// Bilinear interpolation of `u`.
    pub fn value_at(&self, p: Point2) -> Option<f64> {
        let (i, j, tx, ty) = self.grid.locate(p)?;
        let v = (1.0 - tx) * (1.0 - ty) * self.get(i, j)
            + tx * (1.0 - ty) * self.get(i + 1, j)
            + (1.0 - tx) * ty * self.get(i, j + 1)
            + tx * ty * self.get(i + 1, j + 1);
        v.is_finite().then_some(v)
    }

    /// Central-difference gradient of the interpolated map, falling back to
    /// one-sided differences next to masked nodes or the boundary.
    pub fn gradient_at(&self, p: Point2) -> Option<Vector2> {
        let hx = self.grid.hx();
        let hy = self.grid.hy();
        let u0 = self.value_at(p)?;
        let diff = |e: Vector2, h: f64| -> Option<f64> {
            let fwd = self.value_at(p + h * e);
            let bwd = self.value_at(p - h * e);
            match (fwd, bwd) {
                (Some(f), Some(b)) => Some((f - b) / (2.0 * h)),
                (Some(f), None) => Some((f - u0) / h),
                (None, Some(b)) => Some((u0 - b) / h),
                (None, None) => None,
            }
        };
        Some(Vector2::new(
            diff(Vector2::new(1.0, 0.0), hx)?,
            diff(Vector2::new(0.0, 1.0), hy)?,
        ))
    }

    /// Whether `p` lies within one grid cell of the source.
    pub fn near_source(&self, p: Point2) -> bool {
        (p.x - self.source.x).abs() <= self.grid.hx() && (p.y - self.source.y).abs() <= self.grid.hy()
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    u: f64,
    index: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // Reversed so the max-heap pops the smallest value.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .u
            .total_cmp(&self.u)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Counter-clockwise 8-neighbor offsets; consecutive pairs span triangles.
const RING: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn norm_in(m: &MetricTensor2, v: Vector2) -> f64 {
    m.quad(v).max(0.0).sqrt()
}

/// Minimum over `lambda in [0, 1]` of
/// `lambda u_a + (1 - lambda) u_b + |lambda d_a + (1 - lambda) d_b|_M`, where
/// `d_a`, `d_b` point from the neighbors to the node. Only interior minima
/// that are causal (not below either neighbor) are returned.
fn triangle_update(m: &MetricTensor2, ua: f64, da: Vector2, ub: f64, db: Vector2) -> Option<f64> {
    let d = da - db;
    let a = m.quad(d);
    let b = d.dot(m.apply(db));
    let c = m.quad(db);
    let delta = ua - ub;
    let disc = a * c - b * b;
    if !(a > 0.0) || a <= delta * delta || disc < 0.0 {
        return None;
    }
    let root = delta.abs() * (disc / (a - delta * delta)).sqrt() / a;
    let base = -b / a;
    let mut best: Option<f64> = None;
    for lambda in [base + root, base - root] {
        if !(0.0..=1.0).contains(&lambda) {
            continue;
        }
        let v = lambda * ua + (1.0 - lambda) * ub + norm_in(m, db + lambda * d);
        if v >= ua.max(ub) && best.is_none_or(|x| v < x) {
            best = Some(v);
        }
    }
    best
}

fn check_metric(g: MetricTensor2, p: Point2) -> Result<MetricTensor2> {
    let det = g.det();
    let tr = g.trace();
    if !g.is_finite() || tr < 0.0 || det < -PSD_TOL * tr * tr || g.g11 < 0.0 || g.g22 < 0.0 {
        return Err(GeomError::NonPositiveDefinite { point: p, det });
    }
    Ok(g)
}

/// Fast-marching geodesic distance from `source` over the grid.
pub fn solve_distance<F: MetricSource + ?Sized>(
    field: &F,
    grid: &GridSpec,
    source: Point2,
) -> Result<DistanceMap> {
    grid.validate()?;
    if !grid.contains(source) {
        return Err(GeomError::InvalidInput(format!(
            "source ({}, {}) lies outside the grid",
            source.x, source.y
        )));
    }
    let singular = field.singular_points();
    if singular.iter().any(|s| source.distance(*s) < SENSOR_STOP_RADIUS) {
        return Err(GeomError::MaskedSource { point: source });
    }

    let n = grid.len();
    let mut state = vec![NodeState::Far; n];
    let mut metric = vec![MetricTensor2::ZERO; n];
    for (i, j, p) in grid.nodes() {
        let k = grid.index(i, j);
        if singular.iter().any(|s| p.distance(*s) < SENSOR_STOP_RADIUS) {
            state[k] = NodeState::Masked;
            continue;
        }
        match field.metric(p) {
            Ok(g) => metric[k] = check_metric(g, p)?,
            Err(GeomError::DegenerateGeometry { .. }) => state[k] = NodeState::Masked,
            Err(e) => return Err(e),
        }
    }

    let mut u = vec![f64::INFINITY; n];
    let mut fixed = vec![false; n];
    let mut heap = BinaryHeap::new();

    let g_src = check_metric(field.metric(source)?, source)?;
    let (ci, cj) = grid.nearest(source);
    for dj in -SEED_HALF_WIDTH..=SEED_HALF_WIDTH {
        for di in -SEED_HALF_WIDTH..=SEED_HALF_WIDTH {
            let (i, j) = (ci as i64 + di, cj as i64 + dj);
            if i < 0 || j < 0 || i >= grid.nx as i64 || j >= grid.ny as i64 {
                continue;
            }
            let k = grid.index(i as usize, j as usize);
            if state[k] == NodeState::Masked {
                continue;
            }
            let v = norm_in(&g_src, grid.node(i as usize, j as usize) - source);
            u[k] = v;
            fixed[k] = true;
            state[k] = NodeState::Trial;
            heap.push(HeapEntry { u: v, index: k });
        }
    }

    let nx = grid.nx as i64;
    let ny = grid.ny as i64;
    let mut pops = 0usize;
    let mut front = 0.0f64;
    let mut violation = 0.0f64;

    while let Some(HeapEntry { u: val, index: k }) = heap.pop() {
        if state[k] == NodeState::Accepted || val != u[k] {
            continue;
        }
        state[k] = NodeState::Accepted;
        pops += 1;
        violation = violation.max(front - val);
        front = front.max(val);

        let (ki, kj) = grid.coords(k);
        for (di, dj) in RING {
            let (xi, xj) = (ki as i64 + di, kj as i64 + dj);
            if xi < 0 || xj < 0 || xi >= nx || xj >= ny {
                continue;
            }
            let x = grid.index(xi as usize, xj as usize);
            if fixed[x] || matches!(state[x], NodeState::Accepted | NodeState::Masked) {
                continue;
            }
            let cand = local_update(grid, &metric, &state, &u, xi, xj);
            if cand < u[x] {
                u[x] = cand;
                state[x] = NodeState::Trial;
                heap.push(HeapEntry { u: cand, index: x });
            }
        }
    }

    for k in 0..n {
        if state[k] != NodeState::Accepted {
            u[k] = f64::NAN;
        }
    }
    Ok(DistanceMap {
        grid: *grid,
        u,
        source,
        state,
        pops,
        causality_violation: violation,
    })
}

fn local_update(
    grid: &GridSpec,
    metric: &[MetricTensor2],
    state: &[NodeState],
    u: &[f64],
    xi: i64,
    xj: i64,
) -> f64 {
    let m = &metric[grid.index(xi as usize, xj as usize)];
    let (hx, hy) = (grid.hx(), grid.hy());
    let neighbor = |r: usize| -> Option<(f64, Vector2)> {
        let (di, dj) = RING[r % 8];
        let (i, j) = (xi + di, xj + dj);
        if i < 0 || j < 0 || i >= grid.nx as i64 || j >= grid.ny as i64 {
            return None;
        }
        let k = grid.index(i as usize, j as usize);
        (state[k] == NodeState::Accepted)
            .then(|| (u[k], Vector2::new(-(di as f64) * hx, -(dj as f64) * hy)))
    };
    let nb: Vec<Option<(f64, Vector2)>> = (0..8).map(neighbor).collect();
    let mut best = f64::INFINITY;
    for r in 0..8 {
        let Some((ua, da)) = nb[r] else { continue };
        best = best.min(ua + norm_in(m, da));
        if let Some((ub, db)) = nb[(r + 1) % 8] {
            if let Some(v) = triangle_update(m, ua, da, ub, db) {
                best = best.min(v);
            }
        }
    }
    best
}

/// Descend the distance map from `destination` toward its source along
/// `-g^-1 grad u`, with Euclidean step `min(hx, hy)`. The returned path runs
/// from the destination to the source; `t` is Euclidean arc length.
pub fn extract_geodesic<F: MetricSource + ?Sized>(
    map: &DistanceMap,
    field: &F,
    destination: Point2,
) -> Result<GeodesicPath> {
    let u0 = map.value_at(destination).ok_or_else(|| {
        GeomError::InvalidInput(format!(
            "destination ({}, {}) is outside the grid or in a masked region",
            destination.x, destination.y
        ))
    })?;
    let eta = map.grid.hx().min(map.grid.hy());
    let sample = |t: f64, p: Point2, v: Vector2| -> Result<PathSample> {
        let speed = match field.metric(p) {
            Ok(g) => g.quad(v).max(0.0).sqrt(),
            Err(GeomError::DegenerateGeometry { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok(PathSample {
            t,
            point: p,
            velocity: v,
            speed,
        })
    };

    if map.near_source(destination) {
        return Ok(GeodesicPath {
            samples: vec![sample(0.0, destination, Vector2::new(0.0, 0.0))?],
            parameterization: Parameterization::Descent,
            termination: Termination::ReachedSource,
        });
    }

    let direction = |p: Point2| -> Result<Vector2> {
        let grad = map.gradient_at(p).ok_or(GeomError::Stall {
            point: p,
            u: map.value_at(p).unwrap_or(f64::NAN),
        })?;
        // adj(g) is det(g) g^-1, so it gives the descent direction even
        // where g is only semidefinite.
        let g = field.metric(p)?;
        let adj = MetricTensor2::new(g.g22, -g.g12, g.g11);
        let mut d = adj.apply(grad);
        if !(d.norm() > 0.0) || !d.norm().is_finite() {
            d = grad;
        }
        if !(d.norm() > 0.0) {
            return Err(GeomError::Stall {
                point: p,
                u: map.value_at(p).unwrap_or(f64::NAN),
            });
        }
        Ok(-1.0 * d.normalized())
    };

    let max_steps = 20 * (map.grid.nx + map.grid.ny);
    let mut p = destination;
    let mut up = u0;
    let mut t = 0.0;
    let mut v = direction(p)?;
    let mut samples = vec![sample(0.0, p, v)?];
    for _ in 0..max_steps {
        // Midpoint rule.
        let mid = p + (0.5 * eta) * v;
        let vm = direction(mid)?;
        let next = p + eta * vm;
        let un = map.value_at(next).ok_or(GeomError::Stall { point: p, u: up })?;
        if un > up - MIN_DECREASE {
            return Err(GeomError::Stall { point: p, u: up });
        }
        t += eta;
        p = next;
        up = un;
        if map.near_source(p) {
            samples.push(sample(t, p, vm)?);
            let last = p.distance(map.source);
            if last > 0.0 {
                samples.push(sample(t + last, map.source, (map.source - p).normalized())?);
            }
            return Ok(GeodesicPath {
                samples,
                parameterization: Parameterization::Descent,
                termination: Termination::ReachedSource,
            });
        }
        v = direction(p)?;
        samples.push(sample(t, p, v)?);
    }
    Err(GeomError::Stall { point: p, u: up })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemannian_geometry::ConstantMetric;

    fn constant(c: f64) -> ConstantMetric {
        ConstantMetric(MetricTensor2::identity().scaled(c))
    }

    fn max_rel_error(map: &DistanceMap, exact: impl Fn(Point2) -> f64) -> f64 {
        let mut worst = 0.0f64;
        for (i, j, p) in map.grid.nodes() {
            let e = exact(p);
            if e > 0.0 {
                worst = worst.max((map.get(i, j) - e).abs() / e);
            }
        }
        worst
    }

    #[test]
    fn triangle_update_is_exact_for_plane_waves() {
        let m = MetricTensor2::identity();
        // Plane wave u = x cos a + y sin a sampled at the neighbors.
        let a: f64 = 0.3;
        let w = Vector2::new(a.cos(), a.sin());
        let pa = Vector2::new(-1.0, 0.0);
        let pb = Vector2::new(-1.0, -1.0);
        let v = triangle_update(&m, w.dot(pa), -1.0 * pa, w.dot(pb), -1.0 * pb).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn constant_metric_distance() {
        let grid = GridSpec::square(10.0, 201).unwrap();
        let c = 2.0;
        let map = solve_distance(&constant(c), &grid, Point2::new(0.0, 0.0)).unwrap();
        let err = max_rel_error(&map, |p| c.sqrt() * p.distance(Point2::new(0.0, 0.0)));
        assert!(err <= 0.02, "max relative error {err}");
        assert_eq!(map.pops, grid.len());
        assert!(map.causality_violation <= 0.0);
        assert_eq!(map.get(100, 100), 0.0);
    }

    #[test]
    fn rejects_masked_and_outside_sources() {
        let cfg = crate::sensor_models::SensorConfiguration::new(
            vec![Point2::new(0.0, 1.0), Point2::new(-7.0, -6.0)],
            1.0,
        )
        .unwrap();
        let f = crate::fisher_field::MetricField::new(cfg, Default::default()).unwrap();
        let grid = GridSpec::square(10.0, 41).unwrap();
        assert!(matches!(
            solve_distance(&f, &grid, Point2::new(0.0, 1.01)),
            Err(GeomError::MaskedSource { .. })
        ));
        assert!(solve_distance(&f, &grid, Point2::new(20.0, 0.0)).is_err());
        let bad = ConstantMetric(MetricTensor2::new(1.0, 2.0, 1.0));
        assert!(matches!(
            solve_distance(&bad, &grid, Point2::new(0.0, 0.0)),
            Err(GeomError::NonPositiveDefinite { .. })
        ));
    }

    #[test]
    fn extraction_in_constant_metric_is_straight() {
        let grid = GridSpec::square(10.0, 201).unwrap();
        let f = constant(1.0);
        let src = Point2::new(-3.0, -2.0);
        let map = solve_distance(&f, &grid, src).unwrap();
        let dst = Point2::new(6.3, 4.1);
        let path = extract_geodesic(&map, &f, dst).unwrap();
        assert_eq!(path.termination, Termination::ReachedSource);
        let chord = [dst, src];
        let h = crate::riemannian_geometry::hausdorff(&path.points(), &chord);
        assert!(h <= grid.hx(), "hausdorff {h}");
        let us: Vec<f64> = path.points().iter().map(|p| map.value_at(*p).unwrap()).collect();
        assert!(us.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn extraction_from_source_cell_is_trivial() {
        let grid = GridSpec::square(10.0, 101).unwrap();
        let f = constant(1.0);
        let map = solve_distance(&f, &grid, Point2::new(0.0, 0.0)).unwrap();
        let path = extract_geodesic(&map, &f, Point2::new(0.1, -0.05)).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path.euclidean_length(), 0.0);
    }
}
