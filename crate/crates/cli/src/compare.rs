//! Field-by-field comparison of two run directories.

use serde::Serialize;

use sensor_geometry::riemannian_geometry::hausdorff;
use sensor_geometry::{GridField, GridSpec, Point2};

use crate::error::{CliError, Result};
use crate::output::{ExperimentResult, Kind, Payload, PathRow};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldDelta {
    pub file: String,
    /// `grid` or `path`.
    pub payload: &'static str,
    /// Largest absolute difference; Hausdorff distance for paths.
    pub max_abs: f64,
    /// `max_abs` over the largest magnitude of the first field, or over the
    /// extent of the first path.
    pub relative: f64,
    pub compared: usize,
    /// Grid nodes valid in one result and masked in the other.
    pub mask_mismatch: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub kind: Kind,
    pub tolerance: f64,
    pub pass: bool,
    pub fields: Vec<FieldDelta>,
}

fn mismatch(msg: String) -> CliError {
    CliError::ShapeMismatch(msg)
}

fn same_bounds(a: &GridSpec, b: &GridSpec) -> bool {
    let tol = 1e-9 * a.bounds().width();
    (a.x_min - b.x_min).abs() <= tol
        && (a.x_max - b.x_max).abs() <= tol
        && (a.y_min - b.y_min).abs() <= tol
        && (a.y_max - b.y_max).abs() <= tol
}

/// Refinement factor per axis when `fine` nests `coarse`.
fn nesting(coarse: &GridSpec, fine: &GridSpec) -> Option<(usize, usize)> {
    let ratio = |c: usize, f: usize| ((f - 1) % (c - 1) == 0).then(|| (f - 1) / (c - 1));
    if fine.nx < coarse.nx || fine.ny < coarse.ny {
        return None;
    }
    Some((ratio(coarse.nx, fine.nx)?, ratio(coarse.ny, fine.ny)?))
}

fn grid_delta(file: &str, a: &GridField, b: &GridField, tol: f64) -> Result<FieldDelta> {
    if !same_bounds(&a.grid, &b.grid) {
        return Err(mismatch(format!("{file}: grids cover different rectangles")));
    }
    // Compare on the coarser lattice.
    let (coarse, fine, flip) = if a.grid.len() <= b.grid.len() { (a, b, false) } else { (b, a, true) };
    let (rx, ry) = nesting(&coarse.grid, &fine.grid).ok_or_else(|| {
        mismatch(format!(
            "{file}: {}x{} and {}x{} grids are not nested",
            a.grid.nx, a.grid.ny, b.grid.nx, b.grid.ny
        ))
    })?;
    let (mut max_abs, mut scale, mut compared, mut mask_mismatch) = (0.0f64, 0.0f64, 0, 0);
    for j in 0..coarse.grid.ny {
        for i in 0..coarse.grid.nx {
            let c = coarse.get(i, j);
            let f = fine.get(i * rx, j * ry);
            let (va, vb) = if flip { (f, c) } else { (c, f) };
            match (va.is_finite(), vb.is_finite()) {
                (true, true) => {
                    max_abs = max_abs.max((va - vb).abs());
                    scale = scale.max(va.abs());
                    compared += 1;
                }
                (false, false) => {}
                _ => mask_mismatch += 1,
            }
        }
    }
    let relative = if max_abs == 0.0 { 0.0 } else { max_abs / scale };
    Ok(FieldDelta {
        file: file.to_string(),
        payload: "grid",
        max_abs,
        relative,
        compared,
        mask_mismatch,
        pass: compared > 0 && relative <= tol,
    })
}

fn points(rows: &[PathRow]) -> Vec<Point2> {
    rows.iter().map(|r| Point2::new(r[1], r[2])).collect()
}

fn path_delta(file: &str, a: &[PathRow], b: &[PathRow], tol: f64) -> Result<FieldDelta> {
    if a.is_empty() || b.is_empty() {
        return Err(mismatch(format!("{file}: empty path")));
    }
    let (pa, pb) = (points(a), points(b));
    let h = hausdorff(&pa, &pb);
    let (mut lo, mut hi) = (pa[0], pa[0]);
    for p in &pa {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let extent = lo.distance(hi);
    let relative = if h == 0.0 { 0.0 } else { h / extent };
    Ok(FieldDelta {
        file: file.to_string(),
        payload: "path",
        max_abs: h,
        relative,
        compared: pa.len().min(pb.len()),
        mask_mismatch: 0,
        pass: relative <= tol,
    })
}

/// Compare every payload file of `a` with its namesake in `b`.
pub fn compare(a: &ExperimentResult, b: &ExperimentResult, tolerance: f64) -> Result<Report> {
    if a.kind != b.kind {
        return Err(mismatch(format!("kinds differ: {} vs {}", a.kind.name(), b.kind.name())));
    }
    fn names(r: &ExperimentResult) -> Vec<&str> {
        let mut v: Vec<&str> = r.payload.iter().map(|(n, _)| n.as_str()).collect();
        v.sort_unstable();
        v
    }
    if names(a) != names(b) {
        return Err(mismatch(format!("file sets differ: {:?} vs {:?}", names(a), names(b))));
    }
    let mut fields = Vec::new();
    for (name, pa) in &a.payload {
        let pb = &b.payload.iter().find(|(n, _)| n == name).expect("same file set").1;
        let file = format!("{name}.csv");
        fields.push(match (pa, pb) {
            (Payload::Grid(fa), Payload::Grid(fb)) => grid_delta(&file, fa, fb, tolerance)?,
            (Payload::Path(ra), Payload::Path(rb)) => path_delta(&file, ra, rb, tolerance)?,
            _ => return Err(mismatch(format!("{file}: grid compared with path"))),
        });
    }
    Ok(Report {
        kind: a.kind,
        tolerance,
        pass: fields.iter().all(|f| f.pass),
        fields,
    })
}
