//! Geometry of an arbitrary 2-D metric field: Christoffel symbols, geodesic
//! shooting, the energy and length functionals, and geodesic speed fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::fisher_field::{MetricField, MetricTensor2};
use crate::grid::{Bounds, GridField, GridSpec};
use crate::quadrature::{simpson_nonuniform, simpson_weights};
use crate::sensor_models::{Point2, Vector2};

/// Geodesics stop, and speed fields are masked, this close to a sensor.
pub const SENSOR_STOP_RADIUS: f64 = 0.05;

/// Determinant below which a metric is treated as singular.
pub const SINGULAR_DET: f64 = 1e-14;

const MIN_STEP: f64 = 1e-12;

/// Anything that assigns a metric tensor to points of the plane.
pub trait MetricSource: Sync {
    fn metric(&self, p: Point2) -> Result<MetricTensor2>;

    /// Analytic `[dg/dx, dg/dy]`, for sources that have one.
    fn metric_gradient(&self, _p: Point2) -> Option<Result<[MetricTensor2; 2]>> {
        None
    }

    /// Points where the metric blows up (sensor locations).
    fn singular_points(&self) -> Vec<Point2> {
        Vec::new()
    }
}

impl<T: MetricSource + ?Sized> MetricSource for &T {
    fn metric(&self, p: Point2) -> Result<MetricTensor2> {
        (**self).metric(p)
    }
    fn metric_gradient(&self, p: Point2) -> Option<Result<[MetricTensor2; 2]>> {
        (**self).metric_gradient(p)
    }
    fn singular_points(&self) -> Vec<Point2> {
        (**self).singular_points()
    }
}

impl MetricSource for MetricField {
    fn metric(&self, p: Point2) -> Result<MetricTensor2> {
        self.metric_at(p)
    }
    fn metric_gradient(&self, p: Point2) -> Option<Result<[MetricTensor2; 2]>> {
        Some(self.metric_gradient_at(p))
    }
    fn singular_points(&self) -> Vec<Point2> {
        self.config().sensors().to_vec()
    }
}

/// The same tensor everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantMetric(pub MetricTensor2);

impl MetricSource for ConstantMetric {
    fn metric(&self, _p: Point2) -> Result<MetricTensor2> {
        Ok(self.0)
    }
    fn metric_gradient(&self, _p: Point2) -> Option<Result<[MetricTensor2; 2]>> {
        Some(Ok([MetricTensor2::ZERO; 2]))
    }
}

/// `c * g` for a wrapped source `g`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledMetric<F> {
    pub inner: F,
    pub scale: f64,
}

impl<F: MetricSource> MetricSource for ScaledMetric<F> {
    fn metric(&self, p: Point2) -> Result<MetricTensor2> {
        Ok(self.inner.metric(p)?.scaled(self.scale))
    }
    fn metric_gradient(&self, p: Point2) -> Option<Result<[MetricTensor2; 2]>> {
        self.inner
            .metric_gradient(p)
            .map(|r| r.map(|[a, b]| [a.scaled(self.scale), b.scaled(self.scale)]))
    }
    fn singular_points(&self) -> Vec<Point2> {
        self.inner.singular_points()
    }
}

/// Christoffel symbols of the second kind, `gamma[i][j][k]` = Γ^i_{jk}.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChristoffelAt {
    pub gamma: [[[f64; 2]; 2]; 2],
}

impl ChristoffelAt {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[i][j][k]
    }

    /// `Γ^i_{jk} v^j v^k`.
    pub fn contract(&self, v: Vector2) -> Vector2 {
        let c = |i: usize| {
            let g = &self.gamma[i];
            g[0][0] * v.x * v.x + 2.0 * g[0][1] * v.x * v.y + g[1][1] * v.y * v.y
        };
        Vector2::new(c(0), c(1))
    }

    pub fn max_abs_diff(&self, other: &ChristoffelAt) -> f64 {
        let mut m = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    m = m.max((self.gamma[i][j][k] - other.gamma[i][j][k]).abs());
                }
            }
        }
        m
    }

    /// Assemble from the metric and its coordinate derivatives. Only `j <= k`
    /// is computed; the other half is copied, so lower-index symmetry is exact.
    pub fn from_metric(g: &MetricTensor2, dg: &[MetricTensor2; 2]) -> Option<ChristoffelAt> {
        let inv = g.inverse()?;
        let gi = [[inv.g11, inv.g12], [inv.g12, inv.g22]];
        let comp = |m: &MetricTensor2, a: usize, b: usize| match (a, b) {
            (0, 0) => m.g11,
            (1, 1) => m.g22,
            _ => m.g12,
        };
        let mut out = ChristoffelAt::default();
        for i in 0..2 {
            for j in 0..2 {
                for k in j..2 {
                    let mut s = 0.0;
                    for (l, row) in gi[i].iter().enumerate() {
                        s += row
                            * (comp(&dg[j], l, k) + comp(&dg[k], l, j) - comp(&dg[l], j, k));
                    }
                    out.gamma[i][j][k] = 0.5 * s;
                    out.gamma[i][k][j] = 0.5 * s;
                }
            }
        }
        Some(out)
    }
}

fn checked_metric<F: MetricSource + ?Sized>(field: &F, p: Point2) -> Result<MetricTensor2> {
    let g = field.metric(p)?;
    let det = g.det();
    if !(det > SINGULAR_DET) || !g.is_finite() {
        return Err(GeomError::SingularMetric { point: p, det });
    }
    Ok(g)
}

/// Central-difference `[dg/dx, dg/dy]` with spacing `step`.
pub fn metric_gradient_fd<F: MetricSource + ?Sized>(
    field: &F,
    theta: Point2,
    step: f64,
) -> Result<[MetricTensor2; 2]> {
    let xp = checked_metric(field, Point2::new(theta.x + step, theta.y))?;
    let xm = checked_metric(field, Point2::new(theta.x - step, theta.y))?;
    let yp = checked_metric(field, Point2::new(theta.x, theta.y + step))?;
    let ym = checked_metric(field, Point2::new(theta.x, theta.y - step))?;
    let s = 0.5 / step;
    Ok([
        (xp + xm.scaled(-1.0)).scaled(s),
        (yp + ym.scaled(-1.0)).scaled(s),
    ])
}

/// Christoffel symbols at `theta` by central differences of spacing `step`.
pub fn christoffel<F: MetricSource + ?Sized>(
    field: &F,
    theta: Point2,
    step: f64,
) -> Result<ChristoffelAt> {
    if !(step > 0.0) {
        return Err(GeomError::InvalidInput(format!("step must be positive, got {step}")));
    }
    let g = checked_metric(field, theta)?;
    let dg = metric_gradient_fd(field, theta, step)?;
    ChristoffelAt::from_metric(&g, &dg).ok_or(GeomError::SingularMetric {
        point: theta,
        det: g.det(),
    })
}

/// Christoffel symbols from the source's analytic derivatives, falling back
/// to central differences of spacing `fallback_step`.
pub fn christoffel_analytic<F: MetricSource + ?Sized>(
    field: &F,
    theta: Point2,
    fallback_step: f64,
) -> Result<ChristoffelAt> {
    let g = checked_metric(field, theta)?;
    let dg = match field.metric_gradient(theta) {
        Some(r) => r?,
        None => metric_gradient_fd(field, theta, fallback_step)?,
    };
    ChristoffelAt::from_metric(&g, &dg).ok_or(GeomError::SingularMetric {
        point: theta,
        det: g.det(),
    })
}

/// How a path's parameter relates to the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Solution of the geodesic equation; metric speed is constant.
    Affine,
    /// Gradient descent of a distance map; `t` is Euclidean arc length.
    Descent,
}

/// Why integration of a path stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TimeLimit,
    Boundary,
    SensorProximity,
    ReachedSource,
    Trivial,
    /// The metric became nearly rank-deficient (eigenvalue ratio below
    /// [`GeodesicOptions::min_eigen_ratio`]).
    DegenerateMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub point: Point2,
    pub velocity: Vector2,
    /// `sqrt(g(velocity, velocity))`.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub samples: Vec<PathSample>,
    pub parameterization: Parameterization,
    pub termination: Termination,
}

impl GeodesicPath {
    pub fn points(&self) -> Vec<Point2> {
        self.samples.iter().map(|s| s.point).collect()
    }

    pub fn start(&self) -> Point2 {
        self.samples[0].point
    }

    pub fn end(&self) -> Point2 {
        self.samples[self.samples.len() - 1].point
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest relative deviation of the squared speed from its initial value.
    pub fn speed_drift(&self) -> f64 {
        let e0 = self.samples[0].speed.powi(2);
        self.samples
            .iter()
            .map(|s| (s.speed.powi(2) - e0).abs() / e0)
            .fold(0.0, f64::max)
    }

    /// Euclidean length of the polyline through the samples.
    pub fn euclidean_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[0].point.distance(w[1].point))
            .sum()
    }

    /// Prefix of the path up to (and including) sample `k`.
    pub fn truncated(&self, k: usize) -> GeodesicPath {
        GeodesicPath {
            samples: self.samples[..=k].to_vec(),
            parameterization: self.parameterization,
            termination: self.termination,
        }
    }

    /// Cubic Hermite interpolant of segment `k` at local parameter `s`.
    fn hermite(&self, k: usize, s: f64) -> Point2 {
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let dt = b.t - a.t;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Point2::new(
            h00 * a.point.x + h10 * dt * a.velocity.x + h01 * b.point.x + h11 * dt * b.velocity.x,
            h00 * a.point.y + h10 * dt * a.velocity.y + h01 * b.point.y + h11 * dt * b.velocity.y,
        )
    }

    /// Distance from `p` to the Hermite curve through the samples.
    fn curve_distance(&self, p: Point2) -> f64 {
        if self.samples.len() == 1 {
            return p.distance(self.samples[0].point);
        }
        let coarse: Vec<(f64, f64)> = self
            .samples
            .windows(2)
            .map(|w| {
                let d = point_segment_distance(p, w[0].point, w[1].point);
                (d, w[0].point.distance(w[1].point) + (w[1].t - w[0].t) * w[0].velocity.norm())
            })
            .collect();
        let best = coarse.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let mut out = best;
        for (k, &(d, span)) in coarse.iter().enumerate() {
            if d > best + span {
                continue;
            }
            // Golden-section search on the segment parameter.
            let r = 0.5 * (5f64.sqrt() - 1.0);
            let (mut lo, mut hi) = (0.0, 1.0);
            let f = |s: f64| self.hermite(k, s).distance(p);
            let mut x1 = hi - r * (hi - lo);
            let mut x2 = lo + r * (hi - lo);
            let (mut f1, mut f2) = (f(x1), f(x2));
            for _ in 0..60 {
                if f1 < f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - r * (hi - lo);
                    f1 = f(x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + r * (hi - lo);
                    f2 = f(x2);
                }
            }
            out = out.min(f1.min(f2)).min(f(0.0)).min(f(1.0));
        }
        out
    }

    fn dense_points(&self, per_segment: usize) -> Vec<Point2> {
        let mut pts = vec![self.samples[0].point];
        for k in 0..self.samples.len().saturating_sub(1) {
            for m in 1..=per_segment {
                pts.push(self.hermite(k, m as f64 / per_segment as f64));
            }
        }
        pts
    }

    /// Symmetric Hausdorff distance between the two paths as curves, using
    /// cubic Hermite interpolation of the samples.
    pub fn hausdorff(&self, other: &GeodesicPath) -> f64 {
        let directed = |a: &GeodesicPath, b: &GeodesicPath| {
            a.dense_points(8)
                .into_iter()
                .map(|p| b.curve_distance(p))
                .fold(0.0, f64::max)
        };
        directed(self, other).max(directed(other, self))
    }
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + t * ab)
}

fn directed_hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    a.iter()
        .map(|p| {
            if b.len() == 1 {
                return p.distance(b[0]);
            }
            b.windows(2)
                .map(|w| point_segment_distance(*p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines.
pub fn hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// Controls for [`shoot_geodesic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicOptions {
    pub t_max: f64,
    /// Local error tolerance of the step-doubling RK4 integrator.
    pub tol: f64,
    /// Integration stops on leaving this rectangle.
    pub bounds: Bounds,
    /// Integration stops this close to any singular point of the field.
    pub stop_radius: f64,
    /// Central-difference spacing when the field has no analytic gradient;
    /// `None` means `1e-5` times the width of `bounds`.
    pub fd_step: Option<f64>,
    /// Integration stops once `lambda_min / lambda_max` of the metric falls
    /// below this ratio.
    pub min_eigen_ratio: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            t_max: 100.0,
            tol: 1e-8,
            bounds: Bounds::new(-10.0, 10.0, -10.0, 10.0),
            stop_radius: SENSOR_STOP_RADIUS,
            fd_step: None,
            min_eigen_ratio: 1e-8,
            initial_step: 1e-2,
            max_steps: 1_000_000,
        }
    }
}

impl GeodesicOptions {
    fn resolved_fd_step(&self) -> f64 {
        self.fd_step.unwrap_or_else(|| {
            let w = self.bounds.width();
            if w.is_finite() {
                1e-5 * w
            } else {
                1e-4
            }
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct State {
    p: Point2,
    v: Vector2,
}

impl State {
    fn axpy(self, h: f64, d: (Vector2, Vector2)) -> State {
        State {
            p: self.p + h * d.0,
            v: self.v + h * d.1,
        }
    }

    fn max_scaled_diff(&self, o: &State, tol: f64) -> f64 {
        let e = |a: f64, b: f64| (a - b).abs() / (tol * (1.0 + a.abs().max(b.abs())));
        e(self.p.x, o.p.x)
            .max(e(self.p.y, o.p.y))
            .max(e(self.v.x, o.v.x))
            .max(e(self.v.y, o.v.y))
    }
}

struct GeodesicRhs<'a, F: ?Sized> {
    field: &'a F,
    fd_step: f64,
    /// Metric speed at the start of the path.
    speed: f64,
}

impl<F: MetricSource + ?Sized> GeodesicRhs<'_, F> {
    fn eval(&self, s: State) -> Result<(Vector2, Vector2)> {
        let gamma = christoffel_analytic(self.field, s.p, self.fd_step)?;
        Ok((s.v, -gamma.contract(s.v)))
    }

    fn rk4(&self, s: State, h: f64) -> Result<State> {
        let k1 = self.eval(s)?;
        let k2 = self.eval(s.axpy(0.5 * h, k1))?;
        let k3 = self.eval(s.axpy(0.5 * h, k2))?;
        let k4 = self.eval(s.axpy(h, k3))?;
        Ok(State {
            p: s.p + (h / 6.0) * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            v: s.v + (h / 6.0) * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        })
    }

    /// Step doubling with local extrapolation. Returns the new state and the
    /// scaled error estimate. Velocity errors are also measured in the metric
    /// norm against the path's constant speed, which keeps the error control
    /// meaningful where `g` is nearly degenerate and Euclidean speeds are
    /// large.
    fn doubled(&self, s: State, h: f64, tol: f64) -> Result<(State, f64)> {
        let full = self.rk4(s, h)?;
        let half = self.rk4(self.rk4(s, 0.5 * h)?, 0.5 * h)?;
        let mut err = half.max_scaled_diff(&full, tol) / 15.0;
        if self.speed > 0.0 {
            let g = self.field.metric(half.p)?;
            let dv = half.v - full.v;
            err = err.max(g.quad(dv).max(0.0).sqrt() / (15.0 * tol * self.speed));
        }
        let extrap = State {
            p: half.p + (1.0 / 15.0) * (half.p - full.p),
            v: half.v + (1.0 / 15.0) * (half.v - full.v),
        };
        Ok((extrap, err))
    }
}

fn stop_margin(p: Point2, bounds: &Bounds, singular: &[Point2], radius: f64) -> f64 {
    let mut m = bounds.margin(p);
    for s in singular {
        m = m.min(p.distance(*s) - radius);
    }
    m
}

/// Integrate the geodesic equation `x'' + Γ(x)(x', x') = 0` from `start`
/// with initial velocity `direction`.
pub fn shoot_geodesic<F: MetricSource + ?Sized>(
    field: &F,
    start: Point2,
    direction: Vector2,
    opts: &GeodesicOptions,
) -> Result<GeodesicPath> {
    if !(direction.norm() > 0.0) {
        return Err(GeomError::InvalidInput("initial direction must be nonzero".into()));
    }
    if !(opts.t_max > 0.0 && opts.tol > 0.0) {
        return Err(GeomError::InvalidInput("t_max and tol must be positive".into()));
    }
    let singular = field.singular_points();
    if stop_margin(start, &opts.bounds, &singular, opts.stop_radius) < 0.0 {
        return Err(GeomError::InvalidInput(format!(
            "start ({}, {}) is outside the domain or too close to a sensor",
            start.x, start.y
        )));
    }
    let rhs = GeodesicRhs {
        field,
        fd_step: opts.resolved_fd_step(),
        speed: field.metric(start)?.quad(direction).max(0.0).sqrt(),
    };
    let sample = |t: f64, s: State| -> Result<PathSample> {
        let g = field.metric(s.p)?;
        Ok(PathSample {
            t,
            point: s.p,
            velocity: s.v,
            speed: g.quad(s.v).max(0.0).sqrt(),
        })
    };

    let mut state = State {
        p: start,
        v: direction,
    };
    let mut t = 0.0;
    let mut h = opts.initial_step.min(opts.t_max);
    let mut samples = vec![sample(0.0, state)?];
    let mut termination = Termination::TimeLimit;
    let slack = {
        let w = opts.bounds.width();
        if w.is_finite() {
            1e-3 * w
        } else {
            1e-2
        }
    }
    .min(0.5 * opts.stop_radius.max(1e-6));

    for _ in 0..opts.max_steps {
        if t >= opts.t_max {
            break;
        }
        h = h.min(opts.t_max - t);
        // Keep each step from overshooting the stopping surfaces by more
        // than a small slack, so trial stages stay near the valid domain.
        let reach = stop_margin(state.p, &opts.bounds, &singular, opts.stop_radius) + slack;
        let speed = state.v.norm();
        if speed > 0.0 && reach.is_finite() {
            h = h.min(reach / speed);
        }
        let trial = rhs.doubled(state, h, opts.tol);
        let (next, err) = match trial {
            Ok(r) => r,
            Err(GeomError::SingularMetric { .. }) | Err(GeomError::DegenerateGeometry { .. })
                if h > MIN_STEP =>
            {
                h *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            if h < MIN_STEP {
                return Err(GeomError::StepCollapse { t, step: h });
            }
            continue;
        }

        let outside = |s: &State| stop_margin(s.p, &opts.bounds, &singular, opts.stop_radius) < 0.0;
        let degenerate = |s: &State| match field.metric(s.p) {
            Ok(g) => {
                let (lo, hi) = g.eigenvalues();
                lo < opts.min_eigen_ratio * hi
            }
            Err(_) => true,
        };
        let event = if outside(&next) {
            Some(false)
        } else if degenerate(&next) {
            Some(true)
        } else {
            None
        };
        if let Some(is_degenerate) = event {
            // Bisect the step length onto the stopping surface.
            let stopped = |s: &State| outside(s) || (is_degenerate && degenerate(s));
            let (mut lo, mut hi) = (0.0, h);
            let mut landed = state;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let s = rhs.doubled(state, mid, opts.tol)?.0;
                if stopped(&s) {
                    hi = mid;
                } else {
                    lo = mid;
                    landed = s;
                }
                if hi - lo < 1e-13 {
                    break;
                }
            }
            t += lo;
            if lo > 0.0 {
                samples.push(sample(t, landed)?);
            }
            termination = if is_degenerate {
                Termination::DegenerateMetric
            } else if opts.bounds.margin(landed.p)
                <= stop_margin(landed.p, &Bounds::unbounded(), &singular, opts.stop_radius)
            {
                Termination::Boundary
            } else {
                Termination::SensorProximity
            };
            return Ok(GeodesicPath {
                samples,
                parameterization: Parameterization::Affine,
                termination,
            });
        }

        t += h;
        state = next;
        samples.push(sample(t, state)?);
        let grow = if err > 0.0 {
            (0.9 * err.powf(-0.2)).min(4.0)
        } else {
            4.0
        };
        h *= grow.max(1.0);
    }
    if t < opts.t_max {
        return Err(GeomError::StepCollapse { t, step: h });
    }
    termination = if samples.len() == 1 {
        Termination::Trivial
    } else {
        termination
    };
    Ok(GeodesicPath {
        samples,
        parameterization: Parameterization::Affine,
        termination,
    })
}

/// Unit initial directions `(cos phi, sin phi)` for `phi = 0, step, 2 step, ...`.
pub fn fan_directions(count: usize, step: f64) -> Vec<Vector2> {
    (0..count)
        .map(|k| Vector2::from_angle(k as f64 * step))
        .collect()
}

/// Shoot one geodesic per direction, in parallel.
pub fn shoot_fan<F: MetricSource + ?Sized>(
    field: &F,
    start: Point2,
    directions: &[Vector2],
    opts: &GeodesicOptions,
) -> Result<Vec<GeodesicPath>> {
    directions
        .par_iter()
        .map(|d| shoot_geodesic(field, start, *d, opts))
        .collect()
}

/// `∫ g(γ', γ') dt` over the path samples by composite Simpson.
pub fn path_energy<F: MetricSource + ?Sized>(field: &F, path: &GeodesicPath) -> Result<f64> {
    integrate_along(field, path, |q| q)
}

/// `∫ sqrt(g(γ', γ')) dt` over the path samples by composite Simpson.
pub fn path_length<F: MetricSource + ?Sized>(field: &F, path: &GeodesicPath) -> Result<f64> {
    integrate_along(field, path, f64::sqrt)
}

fn integrate_along<F, W>(field: &F, path: &GeodesicPath, weight: W) -> Result<f64>
where
    F: MetricSource + ?Sized,
    W: Fn(f64) -> f64,
{
    if path.samples.len() < 2 {
        return Ok(0.0);
    }
    let t: Vec<f64> = path.samples.iter().map(|s| s.t).collect();
    let f = path
        .samples
        .iter()
        .map(|s| Ok(weight(field.metric(s.point)?.quad(s.velocity).max(0.0))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(simpson_nonuniform(&t, &f).max(0.0))
}

/// Energy of a curve `c(s)`, `s in [0, 1]`, traversed in total time
/// `duration`. `curve` returns the point and `dc/ds`. Returns infinity when
/// the curve runs into a sensor.
pub fn curve_energy<F, C>(field: &F, curve: C, duration: f64, intervals: usize) -> Result<f64>
where
    F: MetricSource + ?Sized,
    C: Fn(f64) -> (Point2, Vector2),
{
    let n = intervals + intervals % 2 + 1;
    let h = 1.0 / (n - 1) as f64;
    let w = simpson_weights(n, h);
    let mut total = 0.0;
    for (k, wk) in w.iter().enumerate() {
        let (p, dp) = curve(k as f64 * h);
        match field.metric(p) {
            Ok(g) => total += wk * g.quad(dp),
            Err(GeomError::DegenerateGeometry { .. }) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    Ok(total / duration)
}

/// Energy of the straight segment `a -> b` traversed uniformly in `duration`.
pub fn chord_energy<F: MetricSource + ?Sized>(
    field: &F,
    a: Point2,
    b: Point2,
    duration: f64,
) -> Result<f64> {
    let d = b - a;
    curve_energy(field, |s| (a + s * d, d), duration, 4000)
}

/// `sqrt(g(v, v))` at every node for the unit vector along `direction`.
/// Nodes within `mask_radius` of a singular point are masked.
pub fn speed_field<F: MetricSource + ?Sized>(
    field: &F,
    direction: Vector2,
    grid: &GridSpec,
    mask_radius: f64,
) -> Result<GridField> {
    if !(direction.norm() > 0.0) {
        return Err(GeomError::InvalidInput("direction must be nonzero".into()));
    }
    let v = direction.normalized();
    let singular = field.singular_points();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = grid.coords(k);
            let p = grid.node(i, j);
            if singular.iter().any(|s| p.distance(*s) < mask_radius) {
                return f64::NAN;
            }
            match field.metric(p) {
                Ok(g) => g.quad(v).max(0.0).sqrt(),
                Err(_) => f64::NAN,
            }
        })
        .collect();
    GridField::new(*grid, values)
}
