//! One-dimensional quadrature rules shared across modules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (z * p1 - p0) / (z * z - 1.0))
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (mid + half * xi, half * wi))
        .collect()
}

/// Composite Simpson weights for `n` equally spaced nodes with spacing `h`.
/// `n` must be odd.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "composite Simpson needs an odd node count >= 3");
    let mut w = vec![0.0; n];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        *wi *= h / 3.0;
    }
    w
}

/// Composite Simpson integral of samples `f` taken at strictly increasing,
/// possibly non-uniform abscissae `t`. A trailing odd interval is closed with
/// the three-point rule through the last three samples.
pub fn simpson_nonuniform(t: &[f64], f: &[f64]) -> f64 {
    assert_eq!(t.len(), f.len());
    let n = t.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (t[1] - t[0]) * (f[0] + f[1]);
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        total += simpson_pair(t[i], t[i + 1], t[i + 2], f[i], f[i + 1], f[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        // One interval left: integrate the quadratic through the last three
        // points over its final interval only.
        let (t0, t1, t2) = (t[n - 3], t[n - 2], t[n - 1]);
        let (f0, f1, f2) = (f[n - 3], f[n - 2], f[n - 1]);
        // q(s) = f1 + b s + c s^2 with s = t - t1.
        let h0 = t1 - t0;
        let h1 = t2 - t1;
        let d0 = (f1 - f0) / h0;
        let d1 = (f2 - f1) / h1;
        let c = (d1 - d0) / (h0 + h1);
        let b = d1 - c * h1;
        total += f1 * h1 + 0.5 * b * h1 * h1 + c * h1 * h1 * h1 / 3.0;
    }
    total
}

fn simpson_pair(t0: f64, t1: f64, t2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let h0 = t1 - t0;
    let h1 = t2 - t1;
    let s = h0 + h1;
    s / 6.0 * ((2.0 - h1 / h0) * f0 + s * s / (h0 * h1) * f1 + (2.0 - h0 / h1) * f2)
}
