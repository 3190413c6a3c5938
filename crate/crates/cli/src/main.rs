use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sensor_geometry::PrefactorMode;
use sensorgeom::{compare, load_scenario, run, CliError, ExperimentResult, Kind};

#[derive(Parser)]
#[command(name = "sensorgeom", version, about = "Information geometry experiments for bearings-only sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fisher metric components over the grid.
    FisherField(RunArgs),
    /// Geodesics shot from the target in a fan of directions.
    GeodesicFan(RunArgs),
    /// Fast-marching distance from the target.
    DistanceMap(RunArgs),
    /// Metric speed of a fixed direction over the grid.
    SpeedField(RunArgs),
    /// det G over placements of the moving sensor.
    DetgLandscape(RunArgs),
    /// Placement of the moving sensor maximizing det G.
    DOptimal(RunArgs),
    /// Configuration geodesics from the moving sensor.
    ConfigFan(RunArgs),
    /// Configuration geodesic between two placements.
    ConfigGeodesic(RunArgs),
    /// Compare two run directories.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resolution of the experiment's grid, e.g. 401x401.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    prefactor: Option<PrefactorMode>,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Relative tolerance per field.
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
    /// Also write the report here as report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or("expected <nx>x<ny>")?;
    let n = |v: &str| v.parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((n(a)?, n(b)?))
}

fn grid_name(kind: Kind) -> &'static str {
    match kind {
        Kind::FisherField => "fisher_field",
        Kind::DistanceMap => "distance_map",
        Kind::SpeedField => "speed_field",
        Kind::GeodesicFan => "domain",
        Kind::DetgLandscape | Kind::DOptimal | Kind::ConfigFan | Kind::ConfigGeodesic => "landscape",
    }
}

fn experiment(kind: Kind, args: RunArgs) -> Result<(), CliError> {
    let mut s = load_scenario(&args.scenario)?;
    if let Some((nx, ny)) = args.grid {
        match grid_name(kind) {
            "domain" => {
                s.domain.nx = nx;
                s.domain.ny = ny;
            }
            name => s.set_resolution(name, nx, ny),
        }
    }
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(p) = args.prefactor {
        s.prefactor = p;
    }
    let result = run(&s, kind)?;
    result.write(&args.out)?;
    print_out(&serde_json::to_string_pretty(&result.summary_document()["summary"]).expect("json"));
    Ok(())
}

fn compare_dirs(args: CompareArgs) -> Result<(), CliError> {
    let a = ExperimentResult::load(&args.a)?;
    let b = ExperimentResult::load(&args.b)?;
    let report = compare(&a, &b, args.tol)?;
    let json = serde_json::to_string_pretty(&report).expect("json");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let p = dir.join("report.json");
        std::fs::write(&p, format!("{json}\n")).map_err(|e| CliError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        })?;
    }
    print_out(&json);
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.fields.iter().filter(|f| !f.pass).map(|f| f.file.as_str()).collect();
        Err(CliError::ComparisonFailed(format!("outside tolerance {}: {}", args.tol, failed.join(", "))))
    }
}

// A closed pipe on stdout is not an error of the run.
fn print_out(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::FisherField(a) => experiment(Kind::FisherField, a),
        Command::GeodesicFan(a) => experiment(Kind::GeodesicFan, a),
        Command::DistanceMap(a) => experiment(Kind::DistanceMap, a),
        Command::SpeedField(a) => experiment(Kind::SpeedField, a),
        Command::DetgLandscape(a) => experiment(Kind::DetgLandscape, a),
        Command::DOptimal(a) => experiment(Kind::DOptimal, a),
        Command::ConfigFan(a) => experiment(Kind::ConfigFan, a),
        Command::ConfigGeodesic(a) => experiment(Kind::ConfigGeodesic, a),
        Command::Compare(a) => compare_dirs(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
