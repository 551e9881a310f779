use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use coalition_attrib_cli::output::{render, write_atomic, Metadata};
use coalition_attrib_cli::{execute, load_config, prepare, Command, ConfigError, Format, RunError};

/// Shapley attributions and audits for expression models.
#[derive(Debug, Parser)]
#[command(name = "coalition-attrib", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when neither this nor the config names one.
    #[arg(long)]
    output: Option<PathBuf>,
    /// json, csv or text.
    #[arg(long)]
    format: Option<Format>,
    /// Worker threads; all cores when unset.
    #[arg(long, env = "COALITION_ATTRIB_WORKERS")]
    workers: Option<usize>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_COMPUTE: u8 = 2;

fn report_error(kind: &str, field: Option<&str>, message: &str) {
    let mut e = json!({ "error": kind, "message": message });
    if let Some(f) = field {
        e["field"] = json!(f);
    }
    eprintln!("{e}");
}

fn config_failure(e: &ConfigError) -> ExitCode {
    let kind = match e {
        ConfigError::Parse { .. } => "parse",
        ConfigError::Field { .. } => "config",
        ConfigError::Io { .. } => "io",
    };
    report_error(kind, e.path(), &e.to_string());
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cli.workers == Some(0) {
        report_error("config", Some("--workers"), "workers must be >= 1");
        return ExitCode::from(EXIT_CONFIG);
    }

    let mut config = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let format = cli.format.unwrap_or(config.output.format);
    let output = cli
        .output
        .clone()
        .or_else(|| config.output.path.as_ref().map(|p| config.resolve(p)));

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            report_error("runtime", None, &e.to_string());
            return ExitCode::from(EXIT_COMPUTE);
        }
    };
    let workers = pool.current_num_threads();

    let outcome = pool.install(|| {
        let prepared = prepare(config).map_err(RunError::Config)?;
        execute(cli.command, &prepared)
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(RunError::Config(e)) => return config_failure(&e),
        Err(RunError::Compute(e)) => {
            report_error("compute", None, &e.to_string());
            return ExitCode::from(EXIT_COMPUTE);
        }
    };

    let text = render(
        cli.command,
        &outcome,
        format,
        Metadata::now(workers, Some(&cli.config)),
    );
    match output {
        Some(path) => {
            if let Err(e) = write_atomic(&path, &text) {
                report_error("io", None, &format!("{}: {e}", path.display()));
                return ExitCode::from(EXIT_COMPUTE);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}
