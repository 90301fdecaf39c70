mod config;
mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bc_debranges::validation::{run_suite, DEFAULT_SEED};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;
use pipeline::Table;

pub const SEED_ENV: &str = "BC_DEBRANGES_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(#[from] bc_debranges::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Inverse data that violates an invariant is a validation failure;
    /// everything else is an input problem.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(bc_debranges::Error::InconsistentData(_))
            | CliError::Core(bc_debranges::Error::NotPositiveDefinite(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bc-debranges", version, about = "Boundary-control De Branges spaces")]
struct Cli {
    /// Directory for reports and CSV tables.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the stages listed in a JSON experiment config.
    Run { config: PathBuf },
    /// Run the acceptance suite.
    Validate {
        /// Only criteria belonging to this module.
        #[arg(long)]
        filter: Option<String>,
    },
}

fn seed() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{SEED_ENV} must be an unsigned integer, got '{s}'"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_table(dir: &Path, table: &Table) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join(table.name))?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn run(path: &Path, out_dir: &Path) -> Result<u8, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = ExperimentConfig::parse(&text)?.resolve()?;
    let seed = seed()?;
    let outcome = match pipeline::execute(&cfg, seed) {
        Ok(o) => o,
        Err(e) => {
            let report = json!({"config": cfg, "status": "error", "error": e.to_string()});
            write_json(out_dir, "report.json", &report)?;
            return Err(e);
        }
    };
    fs::create_dir_all(out_dir)?;
    for table in &outcome.tables {
        write_table(out_dir, table)?;
    }
    let files: Vec<&str> = outcome.tables.iter().map(|t| t.name).collect();
    let status = if outcome.failure.is_some() { "validation_failed" } else { "ok" };
    let report = json!({
        "config": cfg,
        "status": status,
        "failed": outcome.failure,
        "stages": outcome.stages,
        "files": files,
    });
    write_json(out_dir, "report.json", &report)?;
    match outcome.failure {
        Some(f) => {
            eprintln!("validation failed: {f}");
            Ok(2)
        }
        None => {
            println!("wrote {}", out_dir.join("report.json").display());
            Ok(0)
        }
    }
}

fn validate(filter: Option<&str>, out_dir: &Path) -> Result<u8, CliError> {
    let report = run_suite(seed()?, filter)?;
    for c in &report.criteria {
        println!(
            "[{}] criterion {:>2} {:<40} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.detail
        );
    }
    write_json(out_dir, "validation.json", &serde_json::to_value(&report)?)?;
    match report.first_failure() {
        Some(c) => {
            eprintln!("validation failed: criterion {} ({}): {}", c.id, c.name, c.detail);
            Ok(2)
        }
        None => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run { config } => run(config, &cli.out_dir),
        Command::Validate { filter } => validate(filter.as_deref(), &cli.out_dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
