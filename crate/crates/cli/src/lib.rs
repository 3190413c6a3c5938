//! Scenario files in, CSV and JSON artifacts out.

pub mod compare;
pub mod error;
pub mod experiments;
pub mod output;
pub mod scenario;

pub use compare::{compare, Report};
pub use error::{CliError, Result};
pub use experiments::run;
pub use output::{ExperimentResult, Kind, Payload};
pub use scenario::{parse_scenario, Scenario};

use std::path::Path;

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_scenario(&text).map_err(|e| match e {
        CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}
