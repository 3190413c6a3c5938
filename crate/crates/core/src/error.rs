use thiserror::Error;

use crate::sensor_models::Point2;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("point ({}, {}) lies within {radius} of sensor {sensor}", .point.x, .point.y)]
    DegenerateGeometry {
        point: Point2,
        sensor: usize,
        radius: f64,
    },

    #[error("metric is singular at ({}, {}): det = {det:e}", .point.x, .point.y)]
    SingularMetric { point: Point2, det: f64 },

    #[error("metric is not positive semi-definite at ({}, {}): det = {det:e}", .point.x, .point.y)]
    NonPositiveDefinite { point: Point2, det: f64 },

    #[error("adaptive step collapsed to {step:e} at t = {t}")]
    StepCollapse { t: f64, step: f64 },

    #[error("source ({}, {}) is inside a sensor exclusion disk", .point.x, .point.y)]
    MaskedSource { point: Point2 },

    #[error("geodesic descent stalled at ({}, {}) with u = {u}", .point.x, .point.y)]
    Stall { point: Point2, u: f64 },

    #[error("landscape is flat: max {max:e}, median {median:e}")]
    FlatLandscape { max: f64, median: f64 },

    #[error("shooting did not converge after {iterations} iterations (miss = {miss})")]
    NoConvergence { iterations: usize, miss: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
