use sensor_geometry::configuration_manifold::*;
use sensor_geometry::riemannian_geometry::{chord_energy, path_energy, MetricSource, Termination};
use sensor_geometry::*;

fn field(sensors: Vec<Point2>) -> MetricField {
    MetricField::new(SensorConfiguration::new(sensors, 1.0).unwrap(), PrefactorMode::Paper).unwrap()
}

fn fig6(s2: Point2) -> MetricField {
    field(vec![Point2::new(2.0, 3.0), s2])
}

fn all_coords() -> ConfigCoordinates {
    ConfigCoordinates::new(vec![(0, 0), (0, 1), (1, 0), (1, 1)], 2).unwrap()
}

#[test]
fn diagonal_mirror_permutes_components() {
    let grid = GridSpec::square(10.0, 201).unwrap();
    let a = config_metric(&fig6(Point2::new(-6.0, -7.0)), &all_coords(), &grid).unwrap();
    let m = config_metric(
        &field(vec![Point2::new(3.0, 2.0), Point2::new(-7.0, -6.0)]),
        &all_coords(),
        &grid,
    )
    .unwrap();
    // Swapping x and y exchanges the axis of every coordinate.
    let swap = [1, 0, 3, 2];
    let scale = a.components.abs().max();
    for i in 0..4 {
        for j in 0..4 {
            let d = (a.get(i, j) - m.get(swap[i], swap[j])).abs();
            assert!(d <= 1e-6 * scale, "G[{i}][{j}]: {} vs {}", a.get(i, j), m.get(swap[i], swap[j]));
        }
    }
}

#[test]
fn config_metric_refinement_contracts() {
    let f = fig6(Point2::new(-6.0, -7.0));
    let coords = ConfigCoordinates::moving(1, 2).unwrap();
    let g: Vec<ConfigMetric> = [201, 401, 801]
        .iter()
        .map(|&n| config_metric(&f, &coords, &GridSpec::square(10.0, n).unwrap()).unwrap())
        .collect();
    for i in 0..2 {
        for j in 0..2 {
            let coarse = (g[0].get(i, j) - g[1].get(i, j)).abs();
            let fine = (g[1].get(i, j) - g[2].get(i, j)).abs();
            assert!(
                coarse <= 4.0 * fine,
                "G[{i}][{j}] = {} {} {}",
                g[0].get(i, j),
                g[1].get(i, j),
                g[2].get(i, j)
            );
        }
    }
}

#[test]
fn every_config_metric_is_symmetric_psd() {
    let grid = GridSpec::square(10.0, 101).unwrap();
    for s2 in [(-6.0, -7.0), (-1.0, -5.5), (4.0, -8.0), (0.0, 0.0)] {
        let g = config_metric(&fig6(Point2::new(s2.0, s2.1)), &all_coords(), &grid).unwrap();
        assert_eq!(g.components, g.components.transpose());
        assert!(g.is_psd(1e-8), "{s2:?}: {:?}", g.eigenvalues());
    }
}

#[test]
fn landscape_scales_by_prefactor_squared() {
    let domain = GridSpec::square(10.0, 101).unwrap();
    let eval = GridSpec::square(10.0, 21).unwrap();
    let f = fig6(Point2::new(-6.0, -7.0));
    let base = config_landscape(&f, 1, &domain, &eval).unwrap();
    let max = base.det.max().unwrap();
    assert!(base.det.min().unwrap() >= -1e-10 * max);
    for c in [0.1, 10.0] {
        let scaled = config_landscape(&f.with_prefactor_scale(c), 1, &domain, &eval).unwrap();
        assert_eq!(scaled.det.argmax(), base.det.argmax());
        for (a, b) in base.det.values.iter().zip(&scaled.det.values) {
            assert_eq!(a.is_nan(), b.is_nan());
            if a.is_finite() {
                assert!((b - c * c * a).abs() <= 1e-8 * (c * c * a).abs(), "{a} {b}");
            }
        }
    }
}

#[test]
fn d_optimal_is_mirror_equivariant_and_outside_exclusion() {
    let domain = GridSpec::square(10.0, 101).unwrap();
    let eval = GridSpec::square(10.0, 21).unwrap();
    let a = d_optimal(&fig6(Point2::new(-6.0, -7.0)), 1, &domain, &eval).unwrap();
    let b = d_optimal(&field(vec![Point2::new(-2.0, 3.0), Point2::new(6.0, -7.0)]), 1, &domain, &eval).unwrap();
    assert!((a.point.x + b.point.x).abs() <= 1e-6 && (a.point.y - b.point.y).abs() <= 1e-6, "{a:?} {b:?}");
    assert!(a.det >= a.grid_det);
    for frozen in [(2.0, 3.0), (0.0, 0.0), (-9.0, 9.0)] {
        let s = Point2::new(frozen.0, frozen.1);
        let opt = d_optimal(&field(vec![s, Point2::new(5.0, -5.0)]), 1, &domain, &eval).unwrap();
        assert!(opt.point.distance(s) >= EXCLUSION_RADIUS, "{frozen:?}: {:?}", opt.point);
    }
}

#[test]
fn fig6_config_geodesic_beats_chord() {
    let domain = GridSpec::square(10.0, 201).unwrap();
    let eval = GridSpec::square(10.0, 41).unwrap();
    let landscape = config_landscape(&fig6(Point2::new(-6.0, -7.0)), 1, &domain, &eval).unwrap();
    let pullback = PullbackMetric::from_landscape(&landscape);
    let (start, end) = (Point2::new(-6.0, -7.0), Point2::new(-1.0, -5.5));
    let geo = config_geodesic(&pullback, start, end, &ConfigGeodesicOptions::default()).unwrap();
    let path = &geo.path;
    assert!(geo.miss <= 0.1, "miss {}", geo.miss);
    assert!(path.points().iter().all(|p| domain.contains(*p)));
    let energy = path_energy(&pullback, path).unwrap();
    let chord = chord_energy(&pullback, path.start(), path.end(), path.duration()).unwrap();
    assert!(energy <= chord + 1e-6 * chord.abs(), "{energy} vs chord {chord}");
    assert!(path.speed_drift() <= 1e-5);
}

#[test]
fn fig7_fan_concentrates_directions() {
    let domain = GridSpec::square(10.0, 201).unwrap();
    let eval = GridSpec::square(10.0, 41).unwrap();
    let template = field(vec![Point2::new(-7.0, -6.0), Point2::new(0.0, 1.0)]);
    let landscape = config_landscape(&template, 1, &domain, &eval).unwrap();
    let pullback = PullbackMetric::from_landscape(&landscape);
    let start = Point2::new(0.0, 1.0);
    let fan = config_geodesic_fan(&pullback, start, 26, 60.0).unwrap();
    assert_eq!(fan.len(), 26);
    let mut hist = [0usize; 12];
    for path in &fan {
        assert!(path.speed_drift() <= 1e-5, "drift {}", path.speed_drift());
        let d = path.end() - start;
        let a = d.angle().rem_euclid(std::f64::consts::TAU);
        hist[((a / std::f64::consts::TAU * 12.0) as usize).min(11)] += 1;
    }
    // Modes: bins strictly above both circular neighbors, or plateaus of them.
    let mut modes = 0;
    for k in 0..12 {
        let (l, r) = (hist[(k + 11) % 12], hist[(k + 1) % 12]);
        if hist[k] > l && hist[k] >= r && hist[k] > 0 {
            modes += 1;
        }
    }
    assert!(modes >= 2, "histogram {hist:?}");
}

#[test]
fn near_constant_pullback_gives_straight_path() {
    // A small domain far from the moving sensor keeps G nearly constant
    // across the evaluation region.
    let domain = GridSpec::new(-0.5, 0.5, -0.5, 0.5, 101, 101).unwrap();
    let eval = GridSpec::new(-2.408, -2.392, -0.008, 0.008, 21, 21).unwrap();
    let template = field(vec![Point2::new(0.0, 2.4), Point2::new(-2.4, 0.0)]);
    let landscape = config_landscape(&template, 1, &domain, &eval).unwrap();
    let pullback = PullbackMetric::from_landscape(&landscape);
    let g0 = pullback.metric(Point2::new(-2.4, 0.0)).unwrap();
    let scale = g0.trace();
    for (_, _, p) in eval.nodes() {
        let g = pullback.metric(p).unwrap();
        assert!(g.max_abs_diff(&g0) < 0.01 * scale, "G varies by {} at {p:?}", g.max_abs_diff(&g0) / scale);
    }
    let (a, b) = (Point2::new(-2.406, -0.005), Point2::new(-2.394, 0.006));
    let opts = ConfigGeodesicOptions {
        hit_radius: 0.1 * eval.hx(),
        ..ConfigGeodesicOptions::default()
    };
    let geo = config_geodesic(&pullback, a, b, &opts).unwrap();
    let d = b - a;
    let worst = geo
        .path
        .points()
        .iter()
        .map(|p| (d.cross(*p - a) / d.norm()).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 2.0 * eval.hx(), "deviation {worst}");
    assert_ne!(geo.path.termination, Termination::Trivial);
}

#[test]
fn prefactor_scaling_keeps_config_decisions() {
    let domain = GridSpec::square(10.0, 101).unwrap();
    let eval = GridSpec::square(10.0, 21).unwrap();
    let f = fig6(Point2::new(-6.0, -7.0));
    let (start, end) = (Point2::new(-6.0, -7.0), Point2::new(-1.0, -5.5));
    // Integration error well below the comparison tolerance.
    let opts = ConfigGeodesicOptions {
        tol: 1e-10,
        ..ConfigGeodesicOptions::default()
    };
    let run = |f: &MetricField| {
        let landscape = config_landscape(f, 1, &domain, &eval).unwrap();
        let opt = d_optimal_from_landscape(&landscape, &domain).unwrap();
        let geo = config_geodesic(&PullbackMetric::from_landscape(&landscape), start, end, &opts).unwrap();
        (opt, geo)
    };
    let (opt, geo) = run(&f);
    for c in [0.1, 10.0] {
        let (o, g) = run(&f.with_prefactor_scale(c));
        assert_eq!(o.grid_point, opt.grid_point);
        assert!(o.point.distance(opt.point) <= 1e-6, "{:?} vs {:?}", o.point, opt.point);
        let h = g.path.hausdorff(&geo.path);
        assert!(h <= 1e-6, "c = {c}: hausdorff {h}");
    }
}
