//! Scenario files, verification suites and their reports.

pub mod build;
pub mod config;
pub mod report;
pub mod suite;
pub mod svg;

pub use build::{NamedChart, Scenario, ScenarioField};
pub use config::{load_config, parse_config, ConfigError, ScenarioConfig, SCHEMA_VERSION};
pub use report::{CheckRecord, RunReport, Status};
pub use suite::{run_filtered, run_suite, RunOutput, Suite};
pub use svg::{leaf_plot, parse_projection, Axis, PlotError, SampleFile};

use std::fs;
use std::io;
use std::path::Path;

/// Writes `report.json`, `summary.txt`, `defects.csv`, and the requested samples and plots.
pub fn write_outputs(dir: &Path, output: &RunOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), output.report.to_json())?;
    let mut summary = output.report.summary();
    for (task, elapsed) in &output.timings {
        summary.push_str(&format!("time {task}: {:.3}s\n", elapsed.as_secs_f64()));
    }
    fs::write(dir.join("summary.txt"), summary)?;
    fs::write(dir.join("defects.csv"), output.report.to_csv())?;
    if output.plots.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(dir.join("samples"))?;
    fs::create_dir_all(dir.join("plots"))?;
    for (spec, file) in &output.plots {
        let stem = format!("{}_{}", spec.kind.label(), spec.proj.replace(',', "-"));
        let json = serde_json::to_string_pretty(file).map_err(io::Error::other)?;
        fs::write(dir.join("samples").join(format!("{}.json", spec.kind.label())), json + "\n")?;
        let axes = parse_projection(&spec.proj).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        match leaf_plot(file, &axes) {
            Ok(svg) => fs::write(dir.join("plots").join(format!("{stem}.svg")), svg)?,
            Err(PlotError::Empty) => {}
            Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidInput, e)),
        }
    }
    Ok(())
}
