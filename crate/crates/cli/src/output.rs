//! Run artifacts: grid and path CSV files plus one `summary.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sensor_geometry::configuration_manifold::QuadratureDescriptor;
use sensor_geometry::riemannian_geometry::GeodesicPath;
use sensor_geometry::{GridField, GridSpec, PrefactorMode};

use crate::error::{CliError, Result};

pub const TOOL: &str = "sensorgeom";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GRID_HEADER: &str = "x,y,value";
pub const PATH_HEADER: &str = "t,x,y,vx,vy,speed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    FisherField,
    GeodesicFan,
    DistanceMap,
    SpeedField,
    DetgLandscape,
    DOptimal,
    ConfigFan,
    ConfigGeodesic,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::FisherField => "fisher_field",
            Kind::GeodesicFan => "geodesic_fan",
            Kind::DistanceMap => "distance_map",
            Kind::SpeedField => "speed_field",
            Kind::DetgLandscape => "detg_landscape",
            Kind::DOptimal => "d_optimal",
            Kind::ConfigFan => "config_fan",
            Kind::ConfigGeodesic => "config_geodesic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prefactor {
    pub mode: PrefactorMode,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub scenario_sha256: String,
    pub prefactor: Option<Prefactor>,
    pub quadrature: Option<QuadratureDescriptor>,
}

impl Provenance {
    fn header(&self, kind: Kind) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} {}", self.tool, self.version);
        let _ = writeln!(s, "# kind {}", kind.name());
        let _ = writeln!(s, "# scenario_sha256 {}", self.scenario_sha256);
        match &self.prefactor {
            Some(p) => {
                let _ = writeln!(s, "# prefactor {} {}", p.mode, p.value);
            }
            None => s.push_str("# prefactor none\n"),
        }
        match &self.quadrature {
            Some(q) => {
                let _ = writeln!(
                    s,
                    "# quadrature nx={} ny={} x=[{},{}] y=[{},{}] exclusion_radius={} excluded_nodes={} singular_nodes={}",
                    q.nx,
                    q.ny,
                    q.bounds.x_min,
                    q.bounds.x_max,
                    q.bounds.y_min,
                    q.bounds.y_max,
                    q.exclusion_radius,
                    q.excluded_nodes,
                    q.singular_nodes
                );
            }
            None => s.push_str("# quadrature none\n"),
        }
        s
    }
}

/// One sample row `t, x, y, vx, vy, speed`.
pub type PathRow = [f64; 6];

pub fn path_rows(path: &GeodesicPath) -> Vec<PathRow> {
    path.samples
        .iter()
        .map(|s| [s.t, s.point.x, s.point.y, s.velocity.x, s.velocity.y, s.speed])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Grid(GridField),
    Path(Vec<PathRow>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub kind: Kind,
    pub provenance: Provenance,
    /// Named payload files, without the `.csv` extension.
    pub payload: Vec<(String, Payload)>,
    pub summary: Value,
}

fn grid_line(g: &GridSpec) -> String {
    format!(
        "# grid nx={} ny={} x=[{},{}] y=[{},{}]\n",
        g.nx, g.ny, g.x_min, g.x_max, g.y_min, g.y_max
    )
}

fn grid_csv(head: &str, f: &GridField) -> String {
    let g = &f.grid;
    let mut s = String::with_capacity(head.len() + 48 * g.len());
    s.push_str(head);
    s.push_str(&grid_line(g));
    s.push_str(GRID_HEADER);
    s.push('\n');
    for (i, j, p) in g.nodes() {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, f.get(i, j));
    }
    s
}

fn path_csv(head: &str, rows: &[PathRow]) -> String {
    let mut s = String::from(head);
    s.push_str(PATH_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4], r[5]);
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

impl ExperimentResult {
    pub fn file_names(&self) -> Vec<String> {
        self.payload.iter().map(|(n, _)| format!("{n}.csv")).collect()
    }

    pub fn summary_document(&self) -> Value {
        serde_json::json!({
            "kind": self.kind,
            "provenance": self.provenance,
            "files": self.file_names(),
            "summary": self.summary,
        })
    }

    /// Write every payload file and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let head = self.provenance.header(self.kind);
        for (name, p) in &self.payload {
            let text = match p {
                Payload::Grid(f) => grid_csv(&head, f),
                Payload::Path(rows) => path_csv(&head, rows),
            };
            write(&dir.join(format!("{name}.csv")), &text)?;
        }
        let mut json = serde_json::to_string_pretty(&self.summary_document()).expect("summary serializes");
        json.push('\n');
        write(&dir.join("summary.json"), &json)
    }

    /// Read a run directory written by [`ExperimentResult::write`].
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.json");
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::io(&path, e))?;
        let bad = |what: &str| CliError::io(&path, format!("missing or malformed `{what}`"));
        let kind: Kind = serde_json::from_value(doc["kind"].clone()).map_err(|_| bad("kind"))?;
        let provenance: Provenance = serde_json::from_value(doc["provenance"].clone()).map_err(|_| bad("provenance"))?;
        let files: Vec<String> = serde_json::from_value(doc["files"].clone()).map_err(|_| bad("files"))?;
        let mut payload = Vec::new();
        for f in files {
            let p = dir.join(&f);
            let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            let name = f.strip_suffix(".csv").unwrap_or(&f).to_string();
            payload.push((name, parse_csv(&text).map_err(|e| CliError::io(&p, e))?));
        }
        Ok(ExperimentResult {
            kind,
            provenance,
            payload,
            summary: doc["summary"].clone(),
        })
    }
}

fn parse_pair(s: &str) -> Option<(f64, f64)> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let (a, b) = inner.split_once(',')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

fn parse_grid_line(line: &str) -> Option<GridSpec> {
    let (mut nx, mut ny, mut x, mut y) = (None, None, None, None);
    for tok in line.split_whitespace() {
        let (k, v) = match tok.split_once('=') {
            Some(kv) => kv,
            None => continue,
        };
        match k {
            "nx" => nx = v.parse().ok(),
            "ny" => ny = v.parse().ok(),
            "x" => x = parse_pair(v),
            "y" => y = parse_pair(v),
            _ => {}
        }
    }
    let ((x0, x1), (y0, y1)) = (x?, y?);
    GridSpec::new(x0, x1, y0, y1, nx?, ny?).ok()
}

/// Parse a grid or path CSV as written by this crate.
pub fn parse_csv(text: &str) -> std::result::Result<Payload, String> {
    let mut grid = None;
    let mut lines = text.lines();
    let header = loop {
        let line = lines.next().ok_or("no header row")?;
        match line.strip_prefix("# ") {
            Some(rest) if rest.starts_with("grid ") => grid = parse_grid_line(rest),
            Some(_) => {}
            None => break line,
        }
    };
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"))).collect())
        .collect::<std::result::Result<_, _>>()?;
    match header {
        GRID_HEADER => {
            let g = grid.ok_or("grid file without a `# grid` line")?;
            if rows.len() != g.len() || rows.iter().any(|r| r.len() != 3) {
                return Err(format!("expected {} rows of 3 values", g.len()));
            }
            let values = rows.iter().map(|r| r[2]).collect();
            GridField::new(g, values).map(Payload::Grid).map_err(|e| e.to_string())
        }
        PATH_HEADER => {
            if rows.iter().any(|r| r.len() != 6) {
                return Err("path rows must have 6 values".into());
            }
            Ok(Payload::Path(rows.iter().map(|r| [r[0], r[1], r[2], r[3], r[4], r[5]]).collect()))
        }
        other => Err(format!("unrecognized header `{other}`")),
    }
}
