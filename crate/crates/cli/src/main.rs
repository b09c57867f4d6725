//! `foliation-lab`: run verification suites on scenario files.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for configuration or usage errors.

use clap::{Parser, Subcommand};
use foliation_core::scenario::{self, load_config, SampleFile, Scenario, ScenarioConfig, Suite};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const THREADS_VAR: &str = "FOLIATION_LAB_THREADS";

#[derive(Parser)]
#[command(name = "foliation-lab", version, about = "Verification suites for linearized singular Riemannian foliations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite and write report.json, summary.txt, defects.csv and plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's output dir, then `out/<scenario>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render a saved leaf sample as an SVG projection.
    Plot {
        #[arg(long)]
        sample: PathBuf,
        /// Two or three coordinates, e.g. `v0,v1` or `x0,v0,v1`.
        #[arg(long)]
        proj: String,
        /// Output file; defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(2)
}

fn setup_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got '{value}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn load(path: &Path) -> Result<(ScenarioConfig, Scenario), ExitCode> {
    let config = load_config(path).map_err(config_error)?;
    let built = Scenario::build(config.clone()).map_err(config_error)?;
    Ok((config, built))
}

fn run(config: &Path, suite: Suite, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    let dir =
        out.or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| Path::new("out").join(&cfg.name));
    let built = match Scenario::build(cfg) {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let output = scenario::run_suite(&built, suite);
    if let Err(e) = scenario::write_outputs(&dir, &output) {
        eprintln!("cannot write outputs to {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    print!("{}", output.report.summary());
    println!("outputs in {}", dir.display());
    ExitCode::from(output.report.exit_code() as u8)
}

fn plot(sample: &Path, proj: &str, out: Option<PathBuf>) -> ExitCode {
    let text = match std::fs::read_to_string(sample) {
        Ok(t) => t,
        Err(e) => return config_error(format!("{}: {e}", sample.display())),
    };
    let file: SampleFile = match serde_json::from_str(&text) {
        Ok(f) => f,
        Err(e) => return config_error(format!("{}: {e}", sample.display())),
    };
    let svg = match scenario::parse_projection(proj).and_then(|axes| scenario::leaf_plot(&file, &axes)) {
        Ok(svg) => svg,
        Err(e) => return config_error(e),
    };
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, svg) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{svg}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = setup_threads() {
        return config_error(e);
    }
    match cli.command {
        Command::Run { config, suite, seed, out } => run(&config, suite, seed, out),
        Command::Validate { config } => match load(&config) {
            Ok((cfg, _)) => {
                println!("{}: valid (schema {}, sha256 {})", cfg.name, cfg.schema_version, cfg.hash());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Plot { sample, proj, out } => plot(&sample, &proj, out),
    }
}
