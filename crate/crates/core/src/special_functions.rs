//! Modified Bessel functions of the first kind, orders 0 through 2.
//!
//! Evaluated by the ascending power series below `SERIES_CUTOFF` and by the
//! Hankel asymptotic expansion (with the exponential factored out) above it.

use std::f64::consts::PI;

use crate::error::{GeomError, Result};

/// Largest argument accepted by [`bessel_i`]; beyond this use [`log_bessel_i0`].
pub const MAX_ARGUMENT: f64 = 500.0;

const SERIES_CUTOFF: f64 = 15.0;

/// Order of a modified Bessel function. Only 0, 1 and 2 are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BesselOrder {
    Zero,
    One,
    Two,
}

impl BesselOrder {
    pub fn as_u32(self) -> u32 {
        match self {
            BesselOrder::Zero => 0,
            BesselOrder::One => 1,
            BesselOrder::Two => 2,
        }
    }
}

impl TryFrom<u32> for BesselOrder {
    type Error = GeomError;

    fn try_from(order: u32) -> Result<Self> {
        match order {
            0 => Ok(BesselOrder::Zero),
            1 => Ok(BesselOrder::One),
            2 => Ok(BesselOrder::Two),
            _ => Err(GeomError::InvalidInput(format!(
                "Bessel order {order} is not supported"
            ))),
        }
    }
}

/// `I_order(x)` for `0 <= x <= 500`.
pub fn bessel_i(order: BesselOrder, x: f64) -> Result<f64> {
    if !(0.0..=MAX_ARGUMENT).contains(&x) {
        return Err(GeomError::Domain {
            function: "bessel_i",
            value: x,
        });
    }
    let nu = order.as_u32();
    if x < SERIES_CUTOFF {
        Ok(power_series(nu, x))
    } else {
        Ok(x.exp() * scaled_asymptotic(nu, x))
    }
}

/// `log I_0(x)` for any finite `x >= 0`, without overflow.
pub fn log_bessel_i0(x: f64) -> Result<f64> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(GeomError::Domain {
            function: "log_bessel_i0",
            value: x,
        });
    }
    if x < SERIES_CUTOFF {
        Ok(power_series(0, x).ln())
    } else {
        Ok(x + scaled_asymptotic(0, x).ln())
    }
}

/// Ratio `I_1(x) / I_0(x)`, stable for large arguments.
pub fn bessel_ratio_i1_i0(x: f64) -> Result<f64> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(GeomError::Domain {
            function: "bessel_ratio_i1_i0",
            value: x,
        });
    }
    if x < SERIES_CUTOFF {
        Ok(power_series(1, x) / power_series(0, x))
    } else {
        Ok(scaled_asymptotic(1, x) / scaled_asymptotic(0, x))
    }
}

/// Ratio `I_2(x) / I_0(x)`, stable for large arguments.
pub fn bessel_ratio_i2_i0(x: f64) -> Result<f64> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(GeomError::Domain {
            function: "bessel_ratio_i2_i0",
            value: x,
        });
    }
    if x < SERIES_CUTOFF {
        Ok(power_series(2, x) / power_series(0, x))
    } else {
        Ok(scaled_asymptotic(2, x) / scaled_asymptotic(0, x))
    }
}

fn power_series(nu: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    // (x/2)^nu / nu!
    let mut term = match nu {
        0 => 1.0,
        1 => half,
        _ => 0.5 * half * half,
    };
    let mut sum = term;
    let nu = nu as f64;
    for k in 1..200 {
        let k = k as f64;
        term *= q / (k * (k + nu));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `e^{-x} I_nu(x)` from the large-argument expansion.
fn scaled_asymptotic(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * (nu as f64).powi(2);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..100 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (8.0 * k as f64 * x);
        if term.abs() >= last {
            // Series is asymptotic; stop at the smallest term.
            break;
        }
        sum += term;
        last = term.abs();
        if last <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}
