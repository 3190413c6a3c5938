//! Fisher–Rao metric induced on the target plane by bearings-only sensors.
//!
//! For Von Mises bearings every sensor contributes a rank-one term along the
//! direction perpendicular to its line of sight, weighted by `1/r^2` and a
//! scalar prefactor depending only on `kappa`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::sensor_models::{
    wrap_angle, Point2, SensorConfiguration, Vector2, VonMisesSampler, DEGENERACY_RADIUS,
};
use crate::special_functions::{bessel_ratio_i2_i0, log_bessel_i0};

const PREFACTOR_NODES: usize = 256;

/// Symmetric 2x2 tensor `[[g11, g12], [g12, g22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTensor2 {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
}

impl MetricTensor2 {
    pub const ZERO: MetricTensor2 = MetricTensor2 {
        g11: 0.0,
        g12: 0.0,
        g22: 0.0,
    };

    pub const fn new(g11: f64, g12: f64, g22: f64) -> Self {
        MetricTensor2 { g11, g12, g22 }
    }

    pub const fn identity() -> Self {
        MetricTensor2::new(1.0, 0.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.g11 * self.g22 - self.g12 * self.g12
    }

    pub fn trace(&self) -> f64 {
        self.g11 + self.g22
    }

    /// Inverse, or `None` when the determinant is not positive.
    pub fn inverse(&self) -> Option<MetricTensor2> {
        let d = self.det();
        if d > 0.0 && d.is_finite() {
            Some(MetricTensor2::new(self.g22 / d, -self.g12 / d, self.g11 / d))
        } else {
            None
        }
    }

    pub fn quad(&self, v: Vector2) -> f64 {
        self.g11 * v.x * v.x + 2.0 * self.g12 * v.x * v.y + self.g22 * v.y * v.y
    }

    pub fn apply(&self, v: Vector2) -> Vector2 {
        Vector2::new(
            self.g11 * v.x + self.g12 * v.y,
            self.g12 * v.x + self.g22 * v.y,
        )
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.g11 + self.g22);
        let half = 0.5 * (self.g11 - self.g22);
        let r = half.hypot(self.g12);
        (mean - r, mean + r)
    }

    pub fn scaled(&self, c: f64) -> MetricTensor2 {
        MetricTensor2::new(c * self.g11, c * self.g12, c * self.g22)
    }

    /// `R g R^T` for the rotation by `angle`.
    pub fn rotated(&self, angle: f64) -> MetricTensor2 {
        let (s, c) = angle.sin_cos();
        let a11 = c * self.g11 - s * self.g12;
        let a12 = c * self.g12 - s * self.g22;
        let a21 = s * self.g11 + c * self.g12;
        let a22 = s * self.g12 + c * self.g22;
        MetricTensor2::new(a11 * c - a12 * s, a11 * s + a12 * c, a21 * s + a22 * c)
    }

    pub fn max_abs_diff(&self, other: &MetricTensor2) -> f64 {
        (self.g11 - other.g11)
            .abs()
            .max((self.g12 - other.g12).abs())
            .max((self.g22 - other.g22).abs())
    }

    pub fn is_finite(&self) -> bool {
        self.g11.is_finite() && self.g12.is_finite() && self.g22.is_finite()
    }
}

impl Add for MetricTensor2 {
    type Output = MetricTensor2;
    fn add(self, o: MetricTensor2) -> MetricTensor2 {
        MetricTensor2::new(self.g11 + o.g11, self.g12 + o.g12, self.g22 + o.g22)
    }
}

impl AddAssign for MetricTensor2 {
    fn add_assign(&mut self, o: MetricTensor2) {
        *self = *self + o;
    }
}

impl Mul<MetricTensor2> for f64 {
    type Output = MetricTensor2;
    fn mul(self, g: MetricTensor2) -> MetricTensor2 {
        g.scaled(self)
    }
}

/// How the `kappa`-dependent scalar in front of the bearings metric is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefactorMode {
    /// `kappa (1 - I2(kappa) / (2 I0(kappa)))`.
    #[default]
    Paper,
    /// Fisher information of the Von Mises mean, `E[(d/dmu log p)^2]`, by
    /// quadrature.
    Quadrature,
}

impl std::str::FromStr for PrefactorMode {
    type Err = GeomError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(PrefactorMode::Paper),
            "quadrature" => Ok(PrefactorMode::Quadrature),
            other => Err(GeomError::InvalidInput(format!(
                "unknown prefactor mode `{other}` (expected paper or quadrature)"
            ))),
        }
    }
}

impl std::fmt::Display for PrefactorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrefactorMode::Paper => "paper",
            PrefactorMode::Quadrature => "quadrature",
        })
    }
}

pub fn fisher_prefactor(kappa: f64, mode: PrefactorMode) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(GeomError::Domain {
            function: "fisher_prefactor",
            value: kappa,
        });
    }
    match mode {
        PrefactorMode::Paper => Ok(kappa * (1.0 - 0.5 * bessel_ratio_i2_i0(kappa)?)),
        PrefactorMode::Quadrature => {
            // Periodic integrand: the trapezoid rule on the circle converges
            // geometrically.
            let norm = (2.0 * PI).ln() + log_bessel_i0(kappa)?;
            let h = 2.0 * PI / PREFACTOR_NODES as f64;
            let sum: f64 = (0..PREFACTOR_NODES)
                .map(|i| {
                    let x = -PI + i as f64 * h;
                    let score = -kappa * x.sin();
                    score * score * (kappa * x.cos() - norm).exp()
                })
                .sum();
            Ok(sum * h)
        }
    }
}

/// Rank-one bearing term `(1/r^4) [[dy^2, -dx dy], [-dx dy, dx^2]]` for the
/// offset `d = theta - sensor`: the outer product of the bearing gradient
/// `(-dy, dx) / r^2`.
fn bearing_term(d: Vector2) -> MetricTensor2 {
    let r2 = d.x * d.x + d.y * d.y;
    let r4 = r2 * r2;
    MetricTensor2::new(d.y * d.y / r4, -d.x * d.y / r4, d.x * d.x / r4)
}

/// Derivatives of [`bearing_term`] with respect to the offset components.
fn bearing_term_gradient(d: Vector2) -> [MetricTensor2; 2] {
    let (dx, dy) = (d.x, d.y);
    let r2 = dx * dx + dy * dy;
    let r4 = r2 * r2;
    let r6 = r4 * r2;
    let a = MetricTensor2::new(dy * dy, -dx * dy, dx * dx);
    let ddx = MetricTensor2::new(0.0, -dy, 2.0 * dx).scaled(1.0 / r4) + a.scaled(-4.0 * dx / r6);
    let ddy = MetricTensor2::new(2.0 * dy, -dx, 0.0).scaled(1.0 / r4) + a.scaled(-4.0 * dy / r6);
    [ddx, ddy]
}

/// The bearings Fisher metric of a configuration, evaluable anywhere off the
/// sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    config: SensorConfiguration,
    mode: PrefactorMode,
    prefactor: f64,
}

impl MetricField {
    pub fn new(config: SensorConfiguration, mode: PrefactorMode) -> Result<Self> {
        let prefactor = fisher_prefactor(config.kappa(), mode)?;
        Ok(MetricField {
            config,
            mode,
            prefactor,
        })
    }

    pub fn config(&self) -> &SensorConfiguration {
        &self.config
    }

    pub fn mode(&self) -> PrefactorMode {
        self.mode
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// Same field with the prefactor multiplied by `c`.
    pub fn with_prefactor_scale(&self, c: f64) -> MetricField {
        MetricField {
            prefactor: self.prefactor * c,
            ..self.clone()
        }
    }

    /// Same field with prefactor exactly 1.
    pub fn with_unit_prefactor(&self) -> MetricField {
        MetricField {
            prefactor: 1.0,
            ..self.clone()
        }
    }

    /// Same field with sensor `index` relocated.
    pub fn with_sensor(&self, index: usize, to: Point2) -> Result<MetricField> {
        Ok(MetricField {
            config: self.config.with_sensor(index, to)?,
            ..self.clone()
        })
    }

    pub fn metric_at(&self, theta: Point2) -> Result<MetricTensor2> {
        self.config.check_clear(theta, DEGENERACY_RADIUS)?;
        let mut g = MetricTensor2::ZERO;
        for s in self.config.sensors() {
            g += bearing_term(theta - *s);
        }
        Ok(g.scaled(self.prefactor))
    }

    /// `det g(theta)` by Cauchy–Binet over pairs of rank-one terms. Unlike
    /// `g11 g22 - g12^2` this keeps full relative accuracy near the lines
    /// through two sensors, where `g` is nearly singular.
    pub fn metric_det_at(&self, theta: Point2) -> Result<f64> {
        self.config.check_clear(theta, DEGENERACY_RADIUS)?;
        let s = self.config.sensors();
        let mut det = 0.0;
        for i in 0..s.len() {
            let di = theta - s[i];
            let ri2 = di.dot(di);
            for sj in &s[i + 1..] {
                let dj = theta - *sj;
                let c = di.cross(s[i] - *sj) / (ri2 * dj.dot(dj));
                det += c * c;
            }
        }
        Ok(det * self.prefactor * self.prefactor)
    }

    /// Contribution of a single sensor.
    pub fn sensor_term(&self, index: usize, theta: Point2) -> Result<MetricTensor2> {
        let s = self.sensor(index)?;
        if theta.distance(s) < DEGENERACY_RADIUS {
            return Err(GeomError::DegenerateGeometry {
                point: theta,
                sensor: index,
                radius: DEGENERACY_RADIUS,
            });
        }
        Ok(bearing_term(theta - s).scaled(self.prefactor))
    }

    /// `[dg/dx, dg/dy]` at `theta`, analytically.
    pub fn metric_gradient_at(&self, theta: Point2) -> Result<[MetricTensor2; 2]> {
        self.config.check_clear(theta, DEGENERACY_RADIUS)?;
        let mut out = [MetricTensor2::ZERO; 2];
        for s in self.config.sensors() {
            let [dx, dy] = bearing_term_gradient(theta - *s);
            out[0] += dx;
            out[1] += dy;
        }
        Ok([out[0].scaled(self.prefactor), out[1].scaled(self.prefactor)])
    }

    /// Derivative of `g(theta)` with respect to coordinate `axis` (0 = x,
    /// 1 = y) of sensor `index`.
    pub fn sensor_derivative(&self, index: usize, axis: usize, theta: Point2) -> Result<MetricTensor2> {
        let s = self.sensor(index)?;
        if axis > 1 {
            return Err(GeomError::InvalidInput(format!("axis {axis} is not 0 or 1")));
        }
        if theta.distance(s) < DEGENERACY_RADIUS {
            return Err(GeomError::DegenerateGeometry {
                point: theta,
                sensor: index,
                radius: DEGENERACY_RADIUS,
            });
        }
        // The term depends on theta - sensor, so d/dsensor = -d/dtheta.
        Ok(bearing_term_gradient(theta - s)[axis].scaled(-self.prefactor))
    }

    fn sensor(&self, index: usize) -> Result<Point2> {
        self.config
            .sensors()
            .get(index)
            .copied()
            .ok_or_else(|| GeomError::InvalidInput(format!("sensor index {index} out of range")))
    }
}

/// Monte-Carlo estimate of the Fisher metric with per-entry standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherEstimate {
    pub metric: MetricTensor2,
    pub std_error: MetricTensor2,
    pub samples: usize,
}

impl FisherEstimate {
    /// True when every entry of `reference` lies within `k` standard errors.
    pub fn within(&self, reference: &MetricTensor2, k: f64) -> bool {
        let d = [
            (self.metric.g11 - reference.g11, self.std_error.g11),
            (self.metric.g12 - reference.g12, self.std_error.g12),
            (self.metric.g22 - reference.g22, self.std_error.g22),
        ];
        d.iter().all(|(delta, se)| delta.abs() <= k * se)
    }
}

/// Estimate `E[grad l (x) grad l]` by sampling bearings and evaluating the
/// analytic score of the joint Von Mises log-likelihood.
pub fn fisher_numeric(
    config: &SensorConfiguration,
    theta: Point2,
    samples: usize,
    seed: u64,
) -> Result<FisherEstimate> {
    if samples < 1000 {
        return Err(GeomError::InvalidInput(format!(
            "fisher_numeric needs at least 1000 samples, got {samples}"
        )));
    }
    let bearings = config.bearings(theta)?;
    // d(bearing)/d(theta) = (-dy, dx) / r^2
    let grads: Vec<Vector2> = config
        .sensors()
        .iter()
        .map(|s| {
            let d = theta - *s;
            let r2 = d.x * d.x + d.y * d.y;
            Vector2::new(-d.y / r2, d.x / r2)
        })
        .collect();
    let kappa = config.kappa();
    let sampler = VonMisesSampler::new(kappa);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    for _ in 0..samples {
        let mut score = Vector2::default();
        for (mu, grad) in bearings.iter().zip(&grads) {
            let a = sampler.draw(*mu, &mut rng);
            score = score + (kappa * wrap_angle(a - mu).sin()) * *grad;
        }
        let e = [score.x * score.x, score.x * score.y, score.y * score.y];
        for k in 0..3 {
            sum[k] += e[k];
            sum_sq[k] += e[k] * e[k];
        }
    }
    let n = samples as f64;
    let mean = sum.map(|s| s / n);
    let mut se = [0.0; 3];
    for k in 0..3 {
        let var = (sum_sq[k] / n - mean[k] * mean[k]).max(0.0) * n / (n - 1.0);
        se[k] = (var / n).sqrt();
    }
    Ok(FisherEstimate {
        metric: MetricTensor2::new(mean[0], mean[1], mean[2]),
        std_error: MetricTensor2::new(se[0], se[1], se[2]),
        samples,
    })
}
