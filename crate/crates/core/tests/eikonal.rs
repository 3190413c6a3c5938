use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensor_geometry::eikonal_solver::{extract_geodesic, solve_distance, NodeState};
use sensor_geometry::riemannian_geometry::{
    fan_directions, hausdorff, shoot_geodesic, ConstantMetric, GeodesicOptions, MetricSource,
    Termination,
};
use sensor_geometry::*;

fn fig4() -> MetricField {
    let c = SensorConfiguration::new(vec![Point2::new(-7.0, -6.0), Point2::new(0.0, 1.0)], 1.0).unwrap();
    MetricField::new(c, PrefactorMode::Paper).unwrap()
}

/// Dijkstra on the 16-neighbor lattice graph with edge lengths measured in a
/// constant metric.
fn dijkstra16(m: MetricTensor2, grid: &GridSpec, source: (usize, usize)) -> Vec<f64> {
    let mut offsets = Vec::new();
    for (a, b) in [(1i64, 0i64), (1, 1), (2, 1), (1, 2)] {
        for (sa, sb) in [(1, 1), (-1, 1), (1, -1), (-1, -1)] {
            offsets.push((sa * a, sb * b));
            offsets.push((sb * b, sa * a));
        }
    }
    offsets.sort();
    offsets.dedup();
    assert_eq!(offsets.len(), 16);
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    let s = grid.index(source.0, source.1);
    dist[s] = 0.0;
    heap.push(Reverse((0u64, s)));
    while let Some(Reverse((bits, k))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[k] {
            continue;
        }
        let (i, j) = grid.coords(k);
        for &(di, dj) in &offsets {
            let (a, b) = (i as i64 + di, j as i64 + dj);
            if a < 0 || b < 0 || a >= grid.nx as i64 || b >= grid.ny as i64 {
                continue;
            }
            let e = Vector2::new(di as f64 * grid.hx(), dj as f64 * grid.hy());
            let nd = d + m.quad(e).sqrt();
            let n = grid.index(a as usize, b as usize);
            if nd < dist[n] {
                dist[n] = nd;
                heap.push(Reverse((nd.to_bits(), n)));
            }
        }
    }
    dist
}

#[test]
fn anisotropic_axis_distances_match_graph_oracle() {
    let m = MetricTensor2::new(4.0, 0.0, 1.0);
    let grid = GridSpec::square(10.0, 201).unwrap();
    let map = solve_distance(&ConstantMetric(m), &grid, Point2::new(0.0, 0.0)).unwrap();
    let fine = GridSpec::square(10.0, 401).unwrap();
    let oracle = dijkstra16(m, &fine, (200, 200));
    let mut worst = 0.0f64;
    for k in 1..=100 {
        for (i, j) in [(100 + k, 100), (100 - k, 100), (100, 100 + k), (100, 100 - k)] {
            let p = grid.node(i, j);
            let (fi, fj) = fine.nearest(p);
            let expect = oracle[fine.index(fi, fj)];
            worst = worst.max((map.get(i, j) - expect).abs() / expect);
        }
    }
    assert!(worst <= 0.03, "axis error {worst}");
    // The graph oracle itself reproduces the closed form on the axes.
    assert!((oracle[fine.index(300, 200)] - 2.0 * 5.0).abs() < 1e-9);
    assert!((oracle[fine.index(200, 300)] - 5.0).abs() < 1e-9);
}

#[test]
fn constant_metric_error_halves_with_spacing() {
    let f = ConstantMetric(MetricTensor2::identity().scaled(3.0));
    let err = |n: usize| {
        let grid = GridSpec::square(10.0, n).unwrap();
        let map = solve_distance(&f, &grid, Point2::new(0.0, 0.0)).unwrap();
        grid.nodes()
            .map(|(i, j, p)| (map.get(i, j) - 3f64.sqrt() * p.distance(Point2::new(0.0, 0.0))).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(101), err(201), err(401));
    for r in [e1 / e2, e2 / e3] {
        assert!((1.4..=2.6).contains(&r), "ratio {r} from {e1} {e2} {e3}");
    }
}

#[test]
fn fig4_distance_map_is_finite_and_causal() {
    let f = fig4();
    let grid = GridSpec::square(10.0, 201).unwrap();
    let map = solve_distance(&f, &grid, Point2::new(-1.0, -3.0)).unwrap();
    assert_eq!(map.pops, map.unmasked_count());
    assert!(map.causality_violation <= 0.0);
    for (i, j, p) in grid.nodes() {
        match map.state_at(i, j) {
            NodeState::Masked => {
                assert!(f.singular_points().iter().any(|s| p.distance(*s) < 0.05));
            }
            _ => {
                assert!(map.get(i, j).is_finite() && map.get(i, j) >= 0.0);
            }
        }
    }
    let (si, sj) = grid.nearest(Point2::new(-1.0, -3.0));
    assert_eq!(map.get(si, sj), 0.0);
    // Distance grows away from the source along every grid ray.
    for (di, dj) in [(1i64, 0i64), (0, 1), (-1, 0), (0, -1)] {
        let mut prev = 0.0;
        for k in 1..20 {
            let v = map.get((si as i64 + k * di) as usize, (sj as i64 + k * dj) as usize);
            assert!(v >= prev);
            prev = v;
        }
    }
}

#[test]
fn eikonal_residual_at_random_nodes() {
    let f = fig4();
    let grid = GridSpec::square(10.0, 201).unwrap();
    let src = Point2::new(-1.0, -3.0);
    let map = solve_distance(&f, &grid, src).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 10 {
        let i = rng.random_range(10..191);
        let j = rng.random_range(10..191);
        let p = grid.node(i, j);
        let stencil = [(i, j), (i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)];
        if p.distance(src) < 1.0 || stencil.iter().any(|&(a, b)| map.state_at(a, b) == NodeState::Masked) {
            continue;
        }
        let g = f.metric_at(p).unwrap();
        let du = Vector2::new(
            (map.get(i + 1, j) - map.get(i - 1, j)) / (2.0 * grid.hx()),
            (map.get(i, j + 1) - map.get(i, j - 1)) / (2.0 * grid.hy()),
        );
        let norm = g.inverse().unwrap().quad(du).sqrt();
        assert!((norm - 1.0).abs() <= 0.1, "at {p:?}: |grad u| = {norm}");
        checked += 1;
    }
}

#[test]
fn extraction_follows_shot_geodesics() {
    let f = fig4();
    let grid = GridSpec::square(10.0, 201).unwrap();
    let src = Point2::new(-1.0, -3.0);
    let map = solve_distance(&f, &grid, src).unwrap();
    let opts = GeodesicOptions::default();
    let mut compared = 0;
    let mut worst = 0.0;
    for (k, d) in fan_directions(26, 0.25).into_iter().enumerate() {
        if compared == 8 {
            break;
        }
        let shot = shoot_geodesic(&f, src, d, &opts).unwrap();
        if shot.termination != Termination::Boundary {
            continue;
        }
        // Take the endpoint about 3 length units out, well before the boundary.
        let cut = shot
            .samples
            .iter()
            .position(|s| s.point.distance(src) >= 3.0)
            .unwrap();
        let part = shot.truncated(cut);
        let extracted = extract_geodesic(&map, &f, part.end()).unwrap();
        let h = hausdorff(&extracted.points(), &part.points());
        eprintln!("direction {k}: hausdorff {h}");
        worst = f64::max(worst, h);
        compared += 1;
    }
    assert_eq!(compared, 8);
    assert!(worst <= 2.0 * grid.hx(), "hausdorff {worst}");
}

/// Smoothly rotating metric with speed ratio at most 3.
struct Twisted;

impl MetricSource for Twisted {
    fn metric(&self, p: Point2) -> sensor_geometry::Result<MetricTensor2> {
        let th = 0.3 * p.x + 0.2 * p.y;
        let (c, s) = (th.cos(), th.sin());
        let (a, b) = (2.0 + p.y.sin(), 0.5);
        Ok(MetricTensor2::new(a * c * c + b * s * s, (a - b) * c * s, a * s * s + b * c * c))
    }
}

#[test]
fn eikonal_residual_in_moderate_anisotropy() {
    let grid = GridSpec::square(10.0, 201).unwrap();
    let src = Point2::new(0.5, -1.0);
    let map = solve_distance(&Twisted, &grid, src).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 10 {
        let i = rng.random_range(10..191);
        let j = rng.random_range(10..191);
        let p = grid.node(i, j);
        if p.distance(src) < 1.0 {
            continue;
        }
        let du = Vector2::new(
            (map.get(i + 1, j) - map.get(i - 1, j)) / (2.0 * grid.hx()),
            (map.get(i, j + 1) - map.get(i, j - 1)) / (2.0 * grid.hy()),
        );
        let norm = Twisted.metric(p).unwrap().inverse().unwrap().quad(du).sqrt();
        assert!((norm - 1.0).abs() <= 0.1, "at {p:?}: |grad u| = {norm}");
        checked += 1;
    }
}

#[test]
fn pop_count_and_time_scale_like_n_log_n() {
    let f = fig4();
    let src = Point2::new(-1.0, -3.0);
    let mut runs = Vec::new();
    for n in [101usize, 201, 401] {
        let grid = GridSpec::square(10.0, n).unwrap();
        let mut best = f64::INFINITY;
        let mut pops = 0;
        for _ in 0..3 {
            let t = std::time::Instant::now();
            let map = solve_distance(&f, &grid, src).unwrap();
            best = best.min(t.elapsed().as_secs_f64());
            assert_eq!(map.pops, map.unmasked_count());
            pops = map.pops;
        }
        runs.push((pops as f64, best));
    }
    // Time per N log N stays within a factor 1.5 of the smallest grid.
    let unit = |(n, t): (f64, f64)| t / (n * n.ln());
    let base = unit(runs[0]);
    for r in &runs[1..] {
        let q = unit(*r) / base;
        assert!((1.0 / 1.5..=1.5).contains(&q), "normalized time ratio {q} in {runs:?}");
    }
}
