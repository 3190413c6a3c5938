//! Scenario documents: TOML with one table per experiment family.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sensor_geometry::configuration_manifold::ConfigGeodesicOptions;
use sensor_geometry::riemannian_geometry::{ConstantMetric, GeodesicOptions, MetricSource, SENSOR_STOP_RADIUS};
use sensor_geometry::{GridSpec, MetricField, MetricTensor2, Point2, PrefactorMode, SensorConfiguration, Vector2};

use crate::error::{CliError, Result};

/// Sensors may sit this far outside the domain rectangle.
pub const SENSOR_SLACK: f64 = 2.0;
pub const DEFAULT_NODES: usize = 201;
/// Names accepted under `[grids.<name>]`.
pub const GRID_NAMES: [&str; 5] = ["fisher_field", "distance_map", "speed_field", "landscape", "quadrature"];

fn default_kappa() -> f64 {
    1.0
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub prefactor: PrefactorMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 2]>,
    pub sensors: Vec<[f64; 2]>,
    pub domain: DomainDoc,
    #[serde(default, skip_serializing_if = "is_default")]
    pub metric: MetricDoc,
    #[serde(default)]
    pub fisher_field: FisherFieldDoc,
    #[serde(default)]
    pub geodesic: GeodesicDoc,
    #[serde(default)]
    pub distance_map: DistanceMapDoc,
    #[serde(default)]
    pub speed_field: SpeedFieldDoc,
    #[serde(default)]
    pub configuration: ConfigurationDoc,
    #[serde(default)]
    pub config_geodesic: ConfigGeodesicDoc,
    #[serde(default)]
    pub config_fan: ConfigFanDoc,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub grids: BTreeMap<String, GridOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDoc {
    pub x: [f64; 2],
    pub y: [f64; 2],
    #[serde(default = "default_nodes")]
    pub nx: usize,
    #[serde(default = "default_nodes")]
    pub ny: usize,
}

/// Partial grid; missing entries come from `[domain]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// The bearings Fisher metric of the sensor list.
    #[default]
    Sensors,
    /// One tensor `[g11, g12, g22]` everywhere.
    Constant,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricDoc {
    #[serde(default)]
    pub kind: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FisherFieldDoc {
    /// Points at which the metric is checked against a Monte-Carlo estimate.
    pub probes: Vec<[f64; 2]>,
    pub samples: usize,
}

impl Default for FisherFieldDoc {
    fn default() -> Self {
        FisherFieldDoc {
            probes: Vec::new(),
            samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeodesicDoc {
    pub count: usize,
    /// Angular step between fan directions, radians.
    pub step: f64,
    pub t_max: f64,
    pub tol: f64,
    pub stop_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    pub min_eigen_ratio: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for GeodesicDoc {
    fn default() -> Self {
        GeodesicDoc::from_options(26, 0.25, &GeodesicOptions::default())
    }
}

impl GeodesicDoc {
    pub fn from_options(count: usize, step: f64, o: &GeodesicOptions) -> Self {
        GeodesicDoc {
            count,
            step,
            t_max: o.t_max,
            tol: o.tol,
            stop_radius: o.stop_radius,
            fd_step: o.fd_step,
            min_eigen_ratio: o.min_eigen_ratio,
            initial_step: o.initial_step,
            max_steps: o.max_steps,
        }
    }

    pub fn options(&self, domain: &GridSpec) -> GeodesicOptions {
        GeodesicOptions {
            t_max: self.t_max,
            tol: self.tol,
            bounds: domain.bounds(),
            stop_radius: self.stop_radius,
            fd_step: self.fd_step,
            min_eigen_ratio: self.min_eigen_ratio,
            initial_step: self.initial_step,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceMapDoc {
    /// Defaults to `target`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<[f64; 2]>,
    /// Points from which a geodesic is extracted back to the source.
    pub destinations: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedFieldDoc {
    pub direction: [f64; 2],
    pub mask_radius: f64,
}

impl Default for SpeedFieldDoc {
    fn default() -> Self {
        SpeedFieldDoc {
            direction: [1.0, 0.0],
            mask_radius: SENSOR_STOP_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigurationDoc {
    /// Index of the moving sensor; defaults to the last one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moving: Option<usize>,
    /// Start of configuration paths; defaults to the moving sensor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigGeodesicDoc {
    pub t_max: f64,
    pub tol: f64,
    pub hit_radius: f64,
    pub max_iterations: usize,
    pub scan: usize,
}

impl Default for ConfigGeodesicDoc {
    fn default() -> Self {
        ConfigGeodesicDoc::from_options(&ConfigGeodesicOptions::default())
    }
}

impl ConfigGeodesicDoc {
    pub fn from_options(o: &ConfigGeodesicOptions) -> Self {
        ConfigGeodesicDoc {
            t_max: o.t_max,
            tol: o.tol,
            hit_radius: o.hit_radius,
            max_iterations: o.max_iterations,
            scan: o.scan,
        }
    }

    pub fn options(&self) -> ConfigGeodesicOptions {
        ConfigGeodesicOptions {
            t_max: self.t_max,
            tol: self.tol,
            hit_radius: self.hit_radius,
            max_iterations: self.max_iterations,
            scan: self.scan,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFanDoc {
    pub count: usize,
    pub t_max: f64,
}

impl Default for ConfigFanDoc {
    fn default() -> Self {
        ConfigFanDoc { count: 26, t_max: 60.0 }
    }
}

/// The metric target-plane experiments run on.
#[derive(Debug, Clone)]
pub enum PlaneMetric {
    Field(MetricField),
    Constant(ConstantMetric),
}

impl MetricSource for PlaneMetric {
    fn metric(&self, p: Point2) -> sensor_geometry::Result<MetricTensor2> {
        match self {
            PlaneMetric::Field(f) => f.metric(p),
            PlaneMetric::Constant(c) => c.metric(p),
        }
    }
    fn metric_gradient(&self, p: Point2) -> Option<sensor_geometry::Result<[MetricTensor2; 2]>> {
        match self {
            PlaneMetric::Field(f) => f.metric_gradient(p),
            PlaneMetric::Constant(c) => c.metric_gradient(p),
        }
    }
    fn singular_points(&self) -> Vec<Point2> {
        match self {
            PlaneMetric::Field(f) => f.singular_points(),
            PlaneMetric::Constant(c) => c.singular_points(),
        }
    }
}

fn schema(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Schema(format!("{field}: {msg}"))
}

fn point(p: [f64; 2]) -> Point2 {
    Point2::new(p[0], p[1])
}

fn check_finite(field: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(schema(field, "values must be finite"))
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(schema(field, format!("must be positive, got {v}")))
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

impl Scenario {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("kappa", self.kappa)?;
        let domain = self.domain_grid()?;
        if self.sensors.is_empty() {
            return Err(schema("sensors", "at least one sensor is required"));
        }
        let b = domain.bounds();
        for (k, s) in self.sensors.iter().enumerate() {
            let field = format!("sensors[{k}]");
            check_finite(&field, s)?;
            let inside = s[0] >= b.x_min - SENSOR_SLACK
                && s[0] <= b.x_max + SENSOR_SLACK
                && s[1] >= b.y_min - SENSOR_SLACK
                && s[1] <= b.y_max + SENSOR_SLACK;
            if !inside {
                return Err(schema(
                    &field,
                    format!("({}, {}) lies outside the domain expanded by {SENSOR_SLACK}", s[0], s[1]),
                ));
            }
        }
        SensorConfiguration::new(self.sensor_points(), self.kappa).map_err(|e| schema("sensors", e))?;
        if let Some(t) = self.target {
            check_finite("target", &t)?;
            if !domain.contains(point(t)) {
                return Err(schema("target", format!("({}, {}) lies outside the domain", t[0], t[1])));
            }
        }
        match (self.metric.kind, self.metric.tensor) {
            (MetricKind::Constant, None) => return Err(schema("metric.tensor", "required for a constant metric")),
            (MetricKind::Constant, Some(t)) => {
                check_finite("metric.tensor", &t)?;
                let m = MetricTensor2::new(t[0], t[1], t[2]);
                if !(m.g11 > 0.0 && m.det() > 0.0) {
                    return Err(schema("metric.tensor", "must be positive definite"));
                }
            }
            (MetricKind::Sensors, Some(_)) => {
                return Err(schema("metric.tensor", "only allowed with kind = \"constant\""))
            }
            (MetricKind::Sensors, None) => {}
        }
        for name in self.grids.keys() {
            if !GRID_NAMES.contains(&name.as_str()) {
                return Err(schema(
                    &format!("grids.{name}"),
                    format!("unknown grid (expected one of {})", GRID_NAMES.join(", ")),
                ));
            }
            self.grid(name)?;
        }

        for p in &self.fisher_field.probes {
            check_finite("fisher_field.probes", p)?;
        }
        if self.fisher_field.samples < 1000 {
            return Err(schema("fisher_field.samples", "must be at least 1000"));
        }

        let g = &self.geodesic;
        if g.count == 0 {
            return Err(schema("geodesic.count", "must be at least 1"));
        }
        check_finite("geodesic.step", &[g.step])?;
        check_positive("geodesic.t_max", g.t_max)?;
        check_positive("geodesic.tol", g.tol)?;
        check_positive("geodesic.stop_radius", g.stop_radius)?;
        check_positive("geodesic.initial_step", g.initial_step)?;
        if let Some(h) = g.fd_step {
            check_positive("geodesic.fd_step", h)?;
        }
        if !(g.min_eigen_ratio >= 0.0 && g.min_eigen_ratio < 1.0) {
            return Err(schema("geodesic.min_eigen_ratio", "must lie in [0, 1)"));
        }
        if g.max_steps == 0 {
            return Err(schema("geodesic.max_steps", "must be at least 1"));
        }

        for (field, p) in [("distance_map.source", self.distance_map.source)]
            .into_iter()
            .chain(self.distance_map.destinations.iter().map(|d| ("distance_map.destinations", Some(*d))))
        {
            if let Some(p) = p {
                check_finite(field, &p)?;
                if !domain.contains(point(p)) {
                    return Err(schema(field, format!("({}, {}) lies outside the domain", p[0], p[1])));
                }
            }
        }

        let d = self.speed_field.direction;
        check_finite("speed_field.direction", &d)?;
        if d == [0.0, 0.0] {
            return Err(schema("speed_field.direction", "must be nonzero"));
        }
        if !(self.speed_field.mask_radius >= 0.0) {
            return Err(schema("speed_field.mask_radius", "must be non-negative"));
        }

        if let Some(m) = self.configuration.moving {
            if m >= self.sensors.len() {
                return Err(schema(
                    "configuration.moving",
                    format!("index {m} out of range for {} sensors", self.sensors.len()),
                ));
            }
        }
        for (field, p) in [("configuration.start", self.configuration.start), ("configuration.end", self.configuration.end)] {
            if let Some(p) = p {
                check_finite(field, &p)?;
            }
        }

        let c = &self.config_geodesic;
        check_positive("config_geodesic.t_max", c.t_max)?;
        check_positive("config_geodesic.tol", c.tol)?;
        check_positive("config_geodesic.hit_radius", c.hit_radius)?;
        if c.scan < 4 {
            return Err(schema("config_geodesic.scan", "must be at least 4"));
        }
        if self.config_fan.count == 0 {
            return Err(schema("config_fan.count", "must be at least 1"));
        }
        check_positive("config_fan.t_max", self.config_fan.t_max)?;
        Ok(())
    }

    pub fn domain_grid(&self) -> Result<GridSpec> {
        let d = &self.domain;
        check_finite("domain", &[d.x[0], d.x[1], d.y[0], d.y[1]])?;
        GridSpec::new(d.x[0], d.x[1], d.y[0], d.y[1], d.nx, d.ny).map_err(|e| schema("domain", e))
    }

    /// The grid for experiment `name`: the domain with any override applied.
    pub fn grid(&self, name: &str) -> Result<GridSpec> {
        let d = &self.domain;
        let Some(o) = self.grids.get(name) else {
            return self.domain_grid();
        };
        let x = o.x.unwrap_or(d.x);
        let y = o.y.unwrap_or(d.y);
        let field = format!("grids.{name}");
        check_finite(&field, &[x[0], x[1], y[0], y[1]])?;
        GridSpec::new(x[0], x[1], y[0], y[1], o.nx.unwrap_or(d.nx), o.ny.unwrap_or(d.ny)).map_err(|e| schema(&field, e))
    }

    pub fn set_resolution(&mut self, name: &str, nx: usize, ny: usize) {
        let o = self.grids.entry(name.to_string()).or_default();
        o.nx = Some(nx);
        o.ny = Some(ny);
    }

    pub fn sensor_points(&self) -> Vec<Point2> {
        self.sensors.iter().map(|s| point(*s)).collect()
    }

    pub fn field(&self) -> Result<MetricField> {
        let c = SensorConfiguration::new(self.sensor_points(), self.kappa).map_err(|e| schema("sensors", e))?;
        MetricField::new(c, self.prefactor).map_err(|e| schema("kappa", e))
    }

    pub fn plane_metric(&self) -> Result<PlaneMetric> {
        match (self.metric.kind, self.metric.tensor) {
            (MetricKind::Constant, Some(t)) => Ok(PlaneMetric::Constant(ConstantMetric(MetricTensor2::new(t[0], t[1], t[2])))),
            _ => Ok(PlaneMetric::Field(self.field()?)),
        }
    }

    pub fn target_point(&self, needed_by: &str) -> Result<Point2> {
        self.target
            .map(point)
            .ok_or_else(|| schema("target", format!("required by {needed_by}")))
    }

    pub fn moving(&self) -> usize {
        self.configuration.moving.unwrap_or(self.sensors.len() - 1)
    }

    pub fn config_start(&self) -> Point2 {
        self.configuration.start.map_or_else(|| point(self.sensors[self.moving()]), point)
    }

    pub fn direction(&self) -> Vector2 {
        Vector2::new(self.speed_field.direction[0], self.speed_field.direction[1])
    }
}
