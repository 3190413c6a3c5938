//! One runner per experiment kind.

use serde_json::{json, Value};

use sensor_geometry::configuration_manifold::{
    config_geodesic, config_geodesic_fan, config_landscape, d_optimal_from_landscape, ConfigLandscape,
    PullbackMetric,
};
use sensor_geometry::eikonal_solver::{extract_geodesic, solve_distance};
use sensor_geometry::fisher_field::{fisher_numeric, fisher_prefactor};
use sensor_geometry::riemannian_geometry::{
    chord_energy, fan_directions, path_energy, path_length, shoot_fan, speed_field, GeodesicPath, MetricSource,
};
use sensor_geometry::{GridField, MetricTensor2, Point2, PrefactorMode};

use crate::error::{Context, Result};
use crate::output::{path_rows, ExperimentResult, Kind, Payload, Prefactor, Provenance, TOOL, VERSION};
use crate::scenario::{MetricKind, PlaneMetric, Scenario};

fn pt(p: Point2) -> Value {
    json!([p.x, p.y])
}

fn tensor(m: &MetricTensor2) -> Value {
    json!([m.g11, m.g12, m.g22])
}

fn provenance(s: &Scenario, prefactor: bool) -> Result<Provenance> {
    let prefactor = match (prefactor, s.metric.kind) {
        (true, MetricKind::Sensors) => Some(Prefactor {
            mode: s.prefactor,
            value: fisher_prefactor(s.kappa, s.prefactor).context("prefactor")?,
        }),
        _ => None,
    };
    Ok(Provenance {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        scenario_sha256: s.sha256(),
        prefactor,
        quadrature: None,
    })
}

fn grid_summary(f: &GridField) -> Value {
    json!({
        "nx": f.grid.nx,
        "ny": f.grid.ny,
        "valid_nodes": f.valid_count(),
        "min": f.min(),
        "max": f.max(),
        "median": f.median(),
    })
}

/// Run one experiment. Nothing is written; see [`ExperimentResult::write`].
pub fn run(s: &Scenario, kind: Kind) -> Result<ExperimentResult> {
    s.validate()?;
    match kind {
        Kind::FisherField => fisher(s),
        Kind::GeodesicFan => geodesic_fan(s),
        Kind::DistanceMap => distance_map(s),
        Kind::SpeedField => speed(s),
        Kind::DetgLandscape | Kind::DOptimal | Kind::ConfigFan | Kind::ConfigGeodesic => configuration(s, kind),
    }
}

fn fisher(s: &Scenario) -> Result<ExperimentResult> {
    let metric = s.plane_metric()?;
    let grid = s.grid("fisher_field")?;
    let values: Vec<Option<MetricTensor2>> = grid.nodes().map(|(_, _, p)| metric.metric(p).ok()).collect();
    let pick = |f: fn(&MetricTensor2) -> f64| -> Result<GridField> {
        let v = values.iter().map(|m| m.as_ref().map_or(f64::NAN, f)).collect();
        GridField::new(grid, v).context("fisher-field")
    };
    let det = pick(|m| m.det())?;
    let grid_info = grid_summary(&det);
    let payload = vec![
        ("g11".to_string(), Payload::Grid(pick(|m| m.g11)?)),
        ("g12".to_string(), Payload::Grid(pick(|m| m.g12)?)),
        ("g22".to_string(), Payload::Grid(pick(|m| m.g22)?)),
        ("det".to_string(), Payload::Grid(det)),
    ];

    let mut probes = Vec::new();
    if let PlaneMetric::Field(field) = &metric {
        for (k, p) in s.fisher_field.probes.iter().enumerate() {
            let p = Point2::new(p[0], p[1]);
            let exact = field.metric_at(p).context("fisher-field probe")?;
            let est = fisher_numeric(field.config(), p, s.fisher_field.samples, s.seed.wrapping_add(k as u64))
                .context("fisher-field probe")?;
            probes.push(json!({
                "point": pt(p),
                "analytic": tensor(&exact),
                "monte_carlo": tensor(&est.metric),
                "std_error": tensor(&est.std_error),
                "samples": est.samples,
                "within_3se": est.within(&exact, 3.0),
            }));
        }
    }
    let ratio = match s.metric.kind {
        MetricKind::Sensors => {
            let paper = fisher_prefactor(s.kappa, PrefactorMode::Paper).context("prefactor")?;
            let quad = fisher_prefactor(s.kappa, PrefactorMode::Quadrature).context("prefactor")?;
            Some(paper / quad)
        }
        MetricKind::Constant => None,
    };
    let summary = json!({
        "grid": grid_info,
        "paper_over_quadrature_prefactor": ratio,
        "probes": probes,
    });
    Ok(ExperimentResult {
        kind: Kind::FisherField,
        provenance: provenance(s, true)?,
        payload,
        summary,
    })
}

fn path_summary<F: MetricSource>(metric: &F, k: usize, phi: Option<f64>, path: &GeodesicPath) -> Result<Value> {
    let energy = path_energy(metric, path).context("path energy")?;
    let length = path_length(metric, path).context("path length")?;
    let chord = chord_energy(metric, path.start(), path.end(), path.duration()).context("chord energy")?;
    Ok(json!({
        "index": k,
        "phi": phi,
        "termination": path.termination,
        "samples": path.len(),
        "duration": path.duration(),
        "end": pt(path.end()),
        "energy": energy,
        "length": length,
        "chord_energy": chord,
        "speed_drift": path.speed_drift(),
    }))
}

fn geodesic_fan(s: &Scenario) -> Result<ExperimentResult> {
    let metric = s.plane_metric()?;
    let start = s.target_point("geodesic-fan")?;
    let opts = s.geodesic.options(&s.domain_grid()?);
    let dirs = fan_directions(s.geodesic.count, s.geodesic.step);
    let fan = shoot_fan(&metric, start, &dirs, &opts).context("geodesic-fan")?;
    let width = digits(fan.len());
    let mut payload = Vec::new();
    let mut paths = Vec::new();
    for (k, path) in fan.iter().enumerate() {
        payload.push((format!("path_{k:0width$}"), Payload::Path(path_rows(path))));
        paths.push(path_summary(&metric, k, Some(k as f64 * s.geodesic.step), path)?);
    }
    Ok(ExperimentResult {
        kind: Kind::GeodesicFan,
        provenance: provenance(s, true)?,
        payload,
        summary: json!({ "start": pt(start), "count": fan.len(), "paths": paths }),
    })
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len().max(2)
}

fn distance_map(s: &Scenario) -> Result<ExperimentResult> {
    let metric = s.plane_metric()?;
    let grid = s.grid("distance_map")?;
    let source = match s.distance_map.source {
        Some(p) => Point2::new(p[0], p[1]),
        None => s.target_point("distance-map")?,
    };
    let map = solve_distance(&metric, &grid, source).context("distance-map")?;
    let u = map.to_field();
    let mut payload = vec![("distance".to_string(), Payload::Grid(u.clone()))];
    let mut extracted = Vec::new();
    for (k, d) in s.distance_map.destinations.iter().enumerate() {
        let d = Point2::new(d[0], d[1]);
        let path = extract_geodesic(&map, &metric, d).context("distance-map extraction")?;
        extracted.push(json!({
            "destination": pt(d),
            "samples": path.len(),
            "euclidean_length": path.euclidean_length(),
            "distance": map.value_at(d),
        }));
        payload.push((format!("extracted_{k:02}"), Payload::Path(path_rows(&path))));
    }
    let summary = json!({
        "source": pt(source),
        "grid": grid_summary(&u),
        "pops": map.pops,
        "unmasked_nodes": map.unmasked_count(),
        "causality_violation": map.causality_violation,
        "extracted": extracted,
    });
    Ok(ExperimentResult {
        kind: Kind::DistanceMap,
        provenance: provenance(s, true)?,
        payload,
        summary,
    })
}

fn speed(s: &Scenario) -> Result<ExperimentResult> {
    let metric = s.plane_metric()?;
    let grid = s.grid("speed_field")?;
    let field = speed_field(&metric, s.direction(), &grid, s.speed_field.mask_radius).context("speed-field")?;
    let summary = json!({
        "direction": s.speed_field.direction,
        "mask_radius": s.speed_field.mask_radius,
        "grid": grid_summary(&field),
    });
    Ok(ExperimentResult {
        kind: Kind::SpeedField,
        provenance: provenance(s, true)?,
        payload: vec![("speed".to_string(), Payload::Grid(field))],
        summary,
    })
}

fn landscape(s: &Scenario, what: &str) -> Result<ConfigLandscape> {
    if s.metric.kind == MetricKind::Constant {
        return Err(crate::error::CliError::Schema(format!(
            "metric.kind: {what} needs the sensors metric"
        )));
    }
    let template = s.field()?;
    config_landscape(&template, s.moving(), &s.grid("quadrature")?, &s.grid("landscape")?).context(what)
}

fn configuration(s: &Scenario, kind: Kind) -> Result<ExperimentResult> {
    let what = kind.name().replace('_', "-");
    let l = landscape(s, &what)?;
    let mut prov = provenance(s, true)?;
    prov.quadrature = Some(l.quadrature);
    let mut payload = vec![("detg".to_string(), Payload::Grid(l.det.clone()))];
    let mut summary = json!({
        "moving": l.moving,
        "frozen": l.frozen_sensors().into_iter().map(pt).collect::<Vec<_>>(),
        "landscape": grid_summary(&l.det),
        "argmax": l.argmax().map(pt),
        "max_entropy_divergence": l.max_entropy_divergence,
    });
    match kind {
        Kind::DetgLandscape => {
            payload.push(("config_g11".to_string(), Payload::Grid(l.g11.clone())));
            payload.push(("config_g12".to_string(), Payload::Grid(l.g12.clone())));
            payload.push(("config_g22".to_string(), Payload::Grid(l.g22.clone())));
        }
        Kind::DOptimal => {
            let opt = d_optimal_from_landscape(&l, &s.grid("quadrature")?).context(&what)?;
            summary["optimum"] = json!({
                "point": pt(opt.point),
                "det": opt.det,
                "grid_point": pt(opt.grid_point),
                "grid_det": opt.grid_det,
                "polish_iterations": opt.polish_iterations,
            });
        }
        Kind::ConfigFan => {
            let pullback = PullbackMetric::from_landscape(&l);
            let start = s.config_start();
            let fan = config_geodesic_fan(&pullback, start, s.config_fan.count, s.config_fan.t_max).context(&what)?;
            let width = digits(fan.len());
            let mut paths = Vec::new();
            for (k, path) in fan.iter().enumerate() {
                payload.push((format!("path_{k:0width$}"), Payload::Path(path_rows(path))));
                paths.push(path_summary(&pullback, k, Some(k as f64 * 0.25), path)?);
            }
            summary["start"] = pt(start);
            summary["paths"] = json!(paths);
        }
        Kind::ConfigGeodesic => {
            let pullback = PullbackMetric::from_landscape(&l);
            let start = s.config_start();
            let end = s
                .configuration
                .end
                .map(|p| Point2::new(p[0], p[1]))
                .ok_or_else(|| crate::error::CliError::Schema("configuration.end: required by config-geodesic".into()))?;
            let geo = config_geodesic(&pullback, start, end, &s.config_geodesic.options()).context(&what)?;
            payload.push(("path".to_string(), Payload::Path(path_rows(&geo.path))));
            let mut p = path_summary(&pullback, 0, None, &geo.path)?;
            p["miss"] = json!(geo.miss);
            p["iterations"] = json!(geo.iterations);
            summary["start"] = pt(start);
            summary["end"] = pt(end);
            summary["path"] = p;
        }
        _ => unreachable!(),
    }
    Ok(ExperimentResult {
        kind,
        provenance: prov,
        payload,
        summary,
    })
}
