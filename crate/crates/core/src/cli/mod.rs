//! Command-line front end.
//!
//! Exit status: 0 safe, 1 bug, 2 timeout or unknown, 3 usage, input or
//! internal error. `corpus run` exits 1 when any row disagrees with the
//! manifest.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{parse_engines, EngineSpec, Manifest, RunOptions};
use crate::engine::DEFAULT_BUDGET;
use crate::engine::DEFAULT_DOMAIN;
use crate::engine::solver::DEFAULT_SOLVER_TIMEOUT;
use crate::kir::print_module;
use crate::pipeline::{self, chc_script, CheckOptions, EngineKind, PipelineError, Stage, DEFAULT_BOUND};
use crate::refmodel::{apply_models, ModelRegistry};
use crate::slicer::slice_module;

pub const EXIT_ERROR: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "krefcheck", version, about = "Reference-count bug checker for KIR driver programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify that the entry function balances refcounts on its error paths.
    Check(CheckArgs),
    /// Print the sliced program; statistics go to stderr.
    Slice(SliceArgs),
    /// Write the Horn clause script for the harness program.
    EmitChc(EmitArgs),
    /// Corpus operations.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Check every manifest program with every engine and compare.
    Run(CorpusArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Initialization function (defaults to the module's `entry`).
    #[arg(long)]
    pub entry: Option<String>,
    /// Skip slicing.
    #[arg(long)]
    pub no_slice: bool,
    /// Treat a refcount dropping below its start as a bug.
    #[arg(long, value_enum, num_args = 0..=1, require_equals = true, default_value = "on", default_missing_value = "on")]
    pub underflow_check: Switch,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "enum")]
    pub engine: EngineKind,
    /// Loop bound for the bmc engine.
    #[arg(long, default_value_t = DEFAULT_BOUND, value_parser = clap::value_parser!(u32).range(1..))]
    pub bound: u32,
    /// Nondet integers range over 0..N.
    #[arg(long, default_value_t = DEFAULT_DOMAIN, value_parser = clap::value_parser!(u32).range(1..))]
    pub domain: u32,
    /// Step budget of the explicit-state engines.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    /// Horn solver command; `{file}` is replaced by the script path.
    #[arg(long)]
    pub solver_cmd: Option<String>,
    /// Solver wall-clock limit in seconds.
    #[arg(long, default_value_t = DEFAULT_SOLVER_TIMEOUT.as_secs_f64())]
    pub timeout: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    pub file: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EmitArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Output file (stdout when absent).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long, default_value = "corpus/manifest.toml")]
    pub manifest: PathBuf,
    /// Comma-separated engines: enum, chc, bmc<k>, each optionally -noslice.
    #[arg(long, visible_alias = "engine", default_value = "enum")]
    pub engines: String,
    #[arg(long)]
    pub solver_cmd: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SOLVER_TIMEOUT.as_secs_f64())]
    pub timeout: f64,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path)
        .map_err(|e| PipelineError::new(Stage::Read, format!("{}: {e}", path.display())))
}

fn driver_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn seconds(s: f64) -> Result<Duration, PipelineError> {
    Duration::try_from_secs_f64(s).map_err(|e| PipelineError::new(Stage::Engine, format!("timeout {s}: {e}")))
}

fn cmd_check(a: &CheckArgs, out: &mut dyn std::io::Write) -> Result<i32, PipelineError> {
    let text = read(&a.file)?;
    let opts = CheckOptions {
        entry: a.common.entry.clone(),
        engine: a.engine,
        bound: a.bound,
        domain: a.domain,
        budget: a.budget,
        slice: !a.common.no_slice,
        underflow_check: a.common.underflow_check == Switch::On,
        solver_cmd: a.solver_cmd.clone(),
        solver_timeout: seconds(a.timeout)?,
    };
    let report = pipeline::check(&text, &driver_name(&a.file), &opts)?;
    let body = match a.format {
        Format::Text => report.to_text(),
        Format::Machine => report.to_json() + "\n",
    };
    let _ = out.write_all(body.as_bytes());
    Ok(report.exit_code())
}

fn cmd_slice(a: &SliceArgs, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> Result<i32, PipelineError> {
    let text = read(&a.file)?;
    let m = pipeline::load(&text, &driver_name(&a.file))?;
    let modeled = apply_models(&m, &ModelRegistry::builtin()).map_err(|e| PipelineError::new(Stage::Models, e))?;
    let (sliced, _, stats) = slice_module(&modeled);
    match a.format {
        Format::Text => {
            let _ = out.write_all(print_module(&sliced).as_bytes());
            let rules: Vec<String> = stats.rules.iter().map(|(r, n)| format!("{r} {n}")).collect();
            let _ = writeln!(err, "slicing: {} -> {} instructions ({})", stats.before, stats.after, rules.join(", "));
        }
        Format::Machine => {
            let v = serde_json::json!({
                "program": print_module(&sliced),
                "before": stats.before,
                "after": stats.after,
                "rules": stats.rules,
                "functions": stats.per_function,
            });
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"));
        }
    }
    Ok(0)
}

fn cmd_emit(a: &EmitArgs, out: &mut dyn std::io::Write) -> Result<i32, PipelineError> {
    let text = read(&a.file)?;
    let opts = CheckOptions {
        entry: a.common.entry.clone(),
        slice: !a.common.no_slice,
        underflow_check: a.common.underflow_check == Switch::On,
        ..CheckOptions::default()
    };
    let prepared = pipeline::prepare(&text, &driver_name(&a.file), &opts)?;
    let (script, _) = chc_script(&prepared.program, &opts)?;
    match &a.out {
        Some(p) => std::fs::write(p, script)
            .map_err(|e| PipelineError::new(Stage::Engine, format!("{}: {e}", p.display())))?,
        None => {
            let _ = out.write_all(script.as_bytes());
        }
    }
    Ok(0)
}

fn cmd_corpus(a: &CorpusArgs, out: &mut dyn std::io::Write) -> Result<i32, PipelineError> {
    let engines: Vec<EngineSpec> =
        parse_engines(&a.engines).map_err(|e| PipelineError::new(Stage::Read, e))?;
    let manifest = Manifest::load(&a.manifest).map_err(|e| PipelineError::new(Stage::Read, e))?;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));
    let opts = RunOptions {
        engines,
        solver_cmd: a.solver_cmd.clone(),
        solver_timeout: seconds(a.timeout)?,
        budget: a.budget,
    };
    let summary = crate::corpus::run_manifest(&manifest, dir, &opts);
    let body = match a.format {
        Format::Text => summary.to_text(),
        Format::Machine => summary.to_json() + "\n",
    };
    let _ = out.write_all(body.as_bytes());
    Ok(summary.exit_code())
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit status.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    let res = match &cli.command {
        Command::Check(a) => cmd_check(a, out),
        Command::Slice(a) => cmd_slice(a, out, err),
        Command::EmitChc(a) => cmd_emit(a, out),
        Command::Corpus {
            command: CorpusCommand::Run(a),
        } => cmd_corpus(a, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}
