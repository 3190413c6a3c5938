//! Information geometry of bearings-only sensor networks.
//!
//! Computes the Fisher–Rao metric a sensor configuration induces on the
//! target plane, geodesics of that metric (by shooting and by Fast Marching),
//! and the metric on the space of configurations used to place sensors
//! D-optimally and to move them along configuration geodesics.

pub mod configuration_manifold;
pub mod eikonal_solver;
pub mod error;
pub mod fisher_field;
pub mod grid;
pub mod quadrature;
pub mod riemannian_geometry;
pub mod sensor_models;
pub mod special_functions;

pub use error::{GeomError, Result};
pub use fisher_field::{MetricField, MetricTensor2, PrefactorMode};
pub use grid::{Bounds, GridField, GridSpec};
pub use sensor_models::{Point2, SensorConfiguration, Vector2};
