use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensor_geometry::riemannian_geometry::*;
use sensor_geometry::*;

fn fig3() -> MetricField {
    let c = SensorConfiguration::new(vec![Point2::new(-7.0, -6.0), Point2::new(0.0, 1.0)], 1.0).unwrap();
    MetricField::new(c, PrefactorMode::Paper).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn fig3_fan_conserves_speed_and_beats_chords() {
    let f = fig3();
    let opts = GeodesicOptions::default();
    let start = Point2::new(-1.0, -3.0);
    let dirs = fan_directions(26, 0.25);
    assert_eq!(dirs.len(), 26);
    let fan = shoot_fan(&f, start, &dirs, &opts).unwrap();
    assert_eq!(fan.len(), 26);
    for (k, path) in fan.iter().enumerate() {
        assert!(path.points().iter().all(|p| opts.bounds.contains(*p)), "path {k} leaves the domain");
        assert!(path.speed_drift() <= 1e-6, "path {k}: drift {}", path.speed_drift());
        let energy = path_energy(&f, path).unwrap();
        let length = path_length(&f, path).unwrap();
        let t = path.duration();
        assert!((length * length - t * energy).abs() <= 1e-6 * t * energy, "path {k}");
        let chord = chord_energy(&f, path.start(), path.end(), t).unwrap();
        assert!(energy <= chord + 1e-6, "path {k}: {energy} > chord {chord}");
    }
}

#[test]
fn scaling_the_metric_keeps_paths() {
    let f = fig3();
    let opts = GeodesicOptions::default();
    let start = Point2::new(-1.0, -3.0);
    let dirs = fan_directions(26, 0.25);
    let base = shoot_fan(&f, start, &dirs, &opts).unwrap();
    for c in [0.1, 10.0] {
        let scaled = shoot_fan(&f.with_prefactor_scale(c), start, &dirs, &opts).unwrap();
        for (k, (a, b)) in base.iter().zip(&scaled).enumerate() {
            let h = a.hausdorff(b);
            assert!(h <= 1e-6, "c = {c}, path {k}: hausdorff {h}");
            assert_eq!(a.termination, b.termination);
        }
    }
}

fn bezier(a: Point2, p1: Point2, p2: Point2, b: Point2) -> impl Fn(f64) -> (Point2, Vector2) {
    move |s: f64| {
        let r = 1.0 - s;
        let p = Point2::new(
            r * r * r * a.x + 3.0 * r * r * s * p1.x + 3.0 * r * s * s * p2.x + s * s * s * b.x,
            r * r * r * a.y + 3.0 * r * r * s * p1.y + 3.0 * r * s * s * p2.y + s * s * s * b.y,
        );
        let d = 3.0 * r * r * (p1 - a) + 6.0 * r * s * (p2 - p1) + 3.0 * s * s * (b - p2);
        (p, d)
    }
}

#[test]
fn short_geodesics_are_locally_minimal() {
    let f = fig3();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pairs = 0;
    while pairs < 10 {
        let a = Point2::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        if f.singular_points().iter().any(|s| a.distance(*s) < 1.0) {
            continue;
        }
        let dir = Vector2::from_angle(rng.random_range(0.0..std::f64::consts::TAU));
        let speed = f.metric_at(a).unwrap().quad(dir).sqrt();
        if !(speed > 0.0) {
            continue;
        }
        let opts = GeodesicOptions {
            t_max: 1.5 / speed,
            ..GeodesicOptions::default()
        };
        let path = shoot_geodesic(&f, a, dir, &opts).unwrap();
        if path.termination != Termination::TimeLimit {
            continue;
        }
        let b = path.end();
        let t = path.duration();
        assert!(path_length(&f, &path).unwrap() < 2.0);
        let energy = path_energy(&f, &path).unwrap();
        let chord = chord_energy(&f, a, b, t).unwrap();
        assert!(energy <= chord + 1e-6, "pair {pairs}: {energy} vs chord {chord}");
        let d = b - a;
        let n = Vector2::new(-d.y, d.x);
        for _ in 0..5 {
            let c1 = a + (1.0 / 3.0) * d + rng.random_range(-0.3..0.3) * n + rng.random_range(-0.1..0.1) * d;
            let c2 = a + (2.0 / 3.0) * d + rng.random_range(-0.3..0.3) * n + rng.random_range(-0.1..0.1) * d;
            let e = curve_energy(&f, bezier(a, c1, c2, b), t, 4000).unwrap();
            assert!(energy <= e + 1e-6, "pair {pairs}: {energy} vs bezier {e}");
        }
        pairs += 1;
    }
}

#[test]
fn fig5_speed_field_peaks_near_sensors() {
    let f = fig3();
    let grid = GridSpec::square(10.0, 201).unwrap();
    let v = Vector2::new(1.0, -1.0);
    let field = speed_field(&f, v, &grid, SENSOR_STOP_RADIUS).unwrap();
    let flipped = speed_field(&f, -1.0 * v, &grid, SENSOR_STOP_RADIUS).unwrap();
    let sensors = f.singular_points();
    let mut all = Vec::new();
    let mut near = 0.0f64;
    for (i, j, p) in grid.nodes() {
        let s = field.get(i, j);
        assert_eq!(s.to_bits(), flipped.get(i, j).to_bits());
        let d = sensors.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min);
        if d < SENSOR_STOP_RADIUS {
            assert!(s.is_nan());
            continue;
        }
        assert!(s > 0.0, "at {p:?}");
        all.push(s);
        if d <= 2.0 * grid.hx() {
            near = near.max(s);
        }
    }
    let med = median(all);
    assert!(near >= 5.0 * med, "near-sensor max {near} vs median {med}");
}

#[test]
fn analytic_and_fd_christoffels_agree_on_fig3() {
    let f = fig3();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let p = Point2::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
        if f.singular_points().iter().any(|s| p.distance(*s) < 0.5) {
            continue;
        }
        let Ok(fd) = christoffel(&f, p, 2e-4) else { continue };
        let exact = christoffel_analytic(&f, p, 2e-4).unwrap();
        let scale = (0..2)
            .flat_map(|i| (0..2).flat_map(move |j| (0..2).map(move |k| (i, j, k))))
            .map(|(i, j, k)| exact.get(i, j, k).abs())
            .fold(1.0, f64::max);
        assert!(fd.max_abs_diff(&exact) <= 1e-5 * scale, "at {p:?}");
        for i in 0..2 {
            assert_eq!(exact.get(i, 0, 1), exact.get(i, 1, 0));
        }
    }
}
