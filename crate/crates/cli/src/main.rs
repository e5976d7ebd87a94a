use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{Level, LevelFilter, Log, Metadata, Record};
use nrt_core::run::{run, Command, RunConfig, RunError};

/// Notification response-time pipeline: simulate, ingest, label, extract
/// features, train, evaluate, analyze and report.
#[derive(Debug, Parser)]
#[command(name = "nrt", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set cv.k_outer=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(short, long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    log_level: LevelFilter,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Write a synthetic cohort into the input directory.
    Simulate,
    /// Validate every participant directory.
    Ingest,
    /// Pair notifications with app opens.
    Label,
    /// Build features.csv.
    Features,
    /// Fit one model per participant and regressor.
    Train,
    /// Nested cross-validation, importance and ablations.
    Evaluate,
    /// CDFs, coverage, categories, mood and correlations.
    Analyze,
    /// Assemble report.json and the CSV tables.
    Report,
    /// Every stage after simulate, in order.
    All,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Ingest => Command::Ingest,
            Cmd::Label => Command::Label,
            Cmd::Features => Command::Features,
            Cmd::Train => Command::Train,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Analyze => Command::Analyze,
            Cmd::Report => Command::Report,
            Cmd::All => Command::All,
        }
    }
}

struct KvLogger {
    level: LevelFilter,
}

impl Log for KvLogger {
    fn enabled(&self, m: &Metadata) -> bool {
        m.level() <= self.level
    }

    fn log(&self, r: &Record) {
        if !self.enabled(r.metadata()) {
            return;
        }
        let stage = if r.target().contains("::") { "-" } else { r.target() };
        let level = match r.level() {
            Level::Error => "error",
            Level::Warn => "warn",
            Level::Info => "info",
            Level::Debug => "debug",
            Level::Trace => "trace",
        };
        let msg = r.args().to_string().replace('\\', "\\\\").replace('"', "\\\"");
        let _ = writeln!(std::io::stderr().lock(), "level={level} stage={stage} msg=\"{msg}\"");
    }

    fn flush(&self) {}
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, RunError> {
    let mut out = Vec::new();
    for s in &cli.overrides {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| RunError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let quoted = |p: &PathBuf| format!("{:?}", p.to_string_lossy());
    if let Some(p) = &cli.input {
        out.push(("paths.input_dir".into(), quoted(p)));
    }
    if let Some(p) = &cli.output {
        out.push(("paths.output_dir".into(), quoted(p)));
    }
    if let Some(s) = cli.seed {
        out.push(("seed".into(), s.to_string()));
    }
    if let Some(j) = cli.jobs {
        out.push(("jobs".into(), j.to_string()));
    }
    Ok(out)
}

fn execute(cli: &Cli) -> Result<PathBuf, RunError> {
    let overrides = overrides(cli)?;
    let cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path, &overrides)?,
        None => RunConfig::from_toml_str("", &overrides)?,
    };
    run(cli.command.into(), &cfg)
}

fn fail(e: &RunError) -> ExitCode {
    let report = serde_json::json!({
        "error": {
            "kind": e.kind(),
            "exit_code": e.exit_code(),
            "message": e.to_string(),
        }
    });
    let _ = writeln!(std::io::stderr().lock(), "{report}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&RunError::Config(e.render().to_string().trim().to_string())),
    };
    let level = cli.log_level;
    if log::set_boxed_logger(Box::new(KvLogger { level })).is_ok() {
        log::set_max_level(level);
    }
    match execute(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!(target: Command::from(cli.command).name(), "{e}");
            fail(&e)
        }
    }
}
