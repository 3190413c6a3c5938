//! Von Mises bearings-only measurement model.
//!
//! Each sensor reports the bearing to the target, corrupted by Von Mises
//! noise with a shared concentration `kappa`. Sensors are independent, so the
//! joint log-likelihood is the sum of per-sensor terms.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::quadrature::gauss_legendre_on;
use crate::special_functions::log_bessel_i0;

/// Bearings are undefined closer than this to a sensor.
pub const DEGENERACY_RADIUS: f64 = 1e-9;

const KL_NODES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Vector2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vector2 { x, y }
    }

    pub fn from_angle(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Vector2 { x: c, y: s }
    }

    pub fn dot(self, other: Vector2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vector2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vector2 {
        let n = self.norm();
        Vector2::new(self.x / n, self.y / n)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Sub for Point2 {
    type Output = Vector2;
    fn sub(self, rhs: Point2) -> Vector2 {
        Vector2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Add<Vector2> for Point2 {
    type Output = Point2;
    fn add(self, rhs: Vector2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub<Vector2> for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Vector2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Add for Vector2 {
    type Output = Vector2;
    fn add(self, rhs: Vector2) -> Vector2 {
        Vector2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vector2 {
    type Output = Vector2;
    fn sub(self, rhs: Vector2) -> Vector2 {
        Vector2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vector2 {
    type Output = Vector2;
    fn neg(self) -> Vector2 {
        Vector2::new(-self.x, -self.y)
    }
}

impl Mul<Vector2> for f64 {
    type Output = Vector2;
    fn mul(self, rhs: Vector2) -> Vector2 {
        Vector2::new(self * rhs.x, self * rhs.y)
    }
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// A point of the sensor manifold: sensor locations plus the shared
/// concentration of the bearing noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfiguration {
    sensors: Vec<Point2>,
    kappa: f64,
}

impl SensorConfiguration {
    pub fn new(sensors: Vec<Point2>, kappa: f64) -> Result<Self> {
        if sensors.is_empty() {
            return Err(GeomError::InvalidInput(
                "a configuration needs at least one sensor".into(),
            ));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(GeomError::InvalidInput(format!(
                "kappa must be positive and finite, got {kappa}"
            )));
        }
        for (i, s) in sensors.iter().enumerate() {
            if !s.is_finite() {
                return Err(GeomError::InvalidInput(format!(
                    "sensor {i} has non-finite coordinates"
                )));
            }
            if sensors[..i].iter().any(|o| o == s) {
                return Err(GeomError::InvalidInput(format!(
                    "sensor {i} duplicates an earlier sensor at ({}, {})",
                    s.x, s.y
                )));
            }
        }
        Ok(SensorConfiguration { sensors, kappa })
    }

    pub fn sensors(&self) -> &[Point2] {
        &self.sensors
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// Copy of this configuration with sensor `index` moved to `to`.
    pub fn with_sensor(&self, index: usize, to: Point2) -> Result<Self> {
        let mut sensors = self.sensors.clone();
        *sensors.get_mut(index).ok_or_else(|| {
            GeomError::InvalidInput(format!("sensor index {index} out of range"))
        })? = to;
        SensorConfiguration::new(sensors, self.kappa)
    }

    /// Error unless `target` is farther than `radius` from every sensor.
    pub fn check_clear(&self, target: Point2, radius: f64) -> Result<()> {
        for (i, s) in self.sensors.iter().enumerate() {
            if target.distance(*s) < radius {
                return Err(GeomError::DegenerateGeometry {
                    point: target,
                    sensor: i,
                    radius,
                });
            }
        }
        Ok(())
    }

    /// Bearing from each sensor to `target`, in `[-pi, pi)`.
    pub fn bearings(&self, target: Point2) -> Result<Vec<f64>> {
        self.check_clear(target, DEGENERACY_RADIUS)?;
        Ok(self
            .sensors
            .iter()
            .map(|s| wrap_angle((target - *s).angle()))
            .collect())
    }
}

/// One joint measurement: a bearing from every sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BearingMeasurement {
    pub angles: Vec<f64>,
}

fn log_normalizer(kappa: f64) -> f64 {
    TAU.ln() + log_bessel_i0(kappa).expect("kappa validated positive")
}

/// Joint log-likelihood of `meas` given a target at `target`.
pub fn log_density(
    config: &SensorConfiguration,
    target: Point2,
    meas: &BearingMeasurement,
) -> Result<f64> {
    if meas.angles.len() != config.len() {
        return Err(GeomError::InvalidInput(format!(
            "measurement has {} angles for {} sensors",
            meas.angles.len(),
            config.len()
        )));
    }
    let kappa = config.kappa();
    let norm = log_normalizer(kappa);
    let bearings = config.bearings(target)?;
    Ok(bearings
        .iter()
        .zip(&meas.angles)
        .map(|(mu, a)| kappa * (a - mu).cos() - norm)
        .sum())
}

/// Draw `count` independent joint measurements, reproducibly from `seed`.
pub fn sample(
    config: &SensorConfiguration,
    target: Point2,
    count: usize,
    seed: u64,
) -> Result<Vec<BearingMeasurement>> {
    let bearings = config.bearings(target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = VonMisesSampler::new(config.kappa());
    Ok((0..count)
        .map(|_| BearingMeasurement {
            angles: bearings
                .iter()
                .map(|&mu| sampler.draw(mu, &mut rng))
                .collect(),
        })
        .collect())
}

/// Best–Fisher wrapped-Cauchy rejection sampler.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VonMisesSampler {
    kappa: f64,
    r: f64,
}

impl VonMisesSampler {
    pub(crate) fn new(kappa: f64) -> Self {
        let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
        let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
        let r = (1.0 + rho * rho) / (2.0 * rho);
        VonMisesSampler { kappa, r }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> f64 {
        if self.kappa < 1e-6 || !self.r.is_finite() {
            return wrap_angle(rng.random::<f64>() * TAU - PI);
        }
        loop {
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let u3: f64 = rng.random();
            let z = (PI * u1).cos();
            let f = (1.0 + self.r * z) / (self.r + z);
            let c = self.kappa * (self.r - f);
            if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
                let dev = f.clamp(-1.0, 1.0).acos();
                let a = if u3 > 0.5 { mu + dev } else { mu - dev };
                return wrap_angle(a);
            }
        }
    }
}

/// Kullback–Leibler divergence `D(p || q)` between two Von Mises laws given as
/// `(kappa, mean)` pairs, by Gauss–Legendre quadrature over the circle.
pub fn von_mises_kl(p: (f64, f64), q: (f64, f64)) -> f64 {
    let (kp, mp) = p;
    let (kq, mq) = q;
    let np = log_normalizer(kp);
    let nq = log_normalizer(kq);
    gauss_legendre_on(KL_NODES, -PI, PI)
        .into_iter()
        .map(|(x, w)| {
            let lp = kp * (x - mp).cos() - np;
            let lq = kq * (x - mq).cos() - nq;
            w * lp.exp() * (lp - lq)
        })
        .sum()
}

/// `D(theta || theta_prime)` for the joint bearings model.
pub fn kl_divergence(
    config: &SensorConfiguration,
    theta: Point2,
    theta_prime: Point2,
) -> Result<f64> {
    let a = config.bearings(theta)?;
    let b = config.bearings(theta_prime)?;
    let d: f64 = a
        .iter()
        .zip(&b)
        .map(|(mu, nu)| von_mises_kl((config.kappa(), *mu), (config.kappa(), *nu)))
        .sum();
    Ok(d.max(0.0))
}
