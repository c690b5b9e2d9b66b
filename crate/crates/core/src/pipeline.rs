//! The check pipeline: parse, model, harness, slice, verify.

use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::engine::chc::{emit_smtlib, encode_chc, ChcOptions};
use crate::engine::solver::{run_external_solver, SolverAnswer, DEFAULT_SOLVER_TIMEOUT};
use crate::engine::{self, EngineConfig, Failure, Verdict, DEFAULT_BUDGET, DEFAULT_DOMAIN};
use crate::harness::{build_harness, EntryDescriptor, HarnessProgram};
use crate::kir::{validate, Module};
use crate::parse::parse_module_named;
use crate::kir::validate::Violation;
use crate::refmodel::{apply_models, check_token_uses, ModelRegistry};
use crate::report::{
    ExplorationReport, Report, SlicingReport, Timings, TraceReport, VerdictName, REPORT_SCHEMA,
};
use crate::slicer::{slice_module, SliceStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum EngineKind {
    Enum,
    Bmc,
    Chc,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Enum => "enum",
            EngineKind::Bmc => "bmc",
            EngineKind::Chc => "chc",
        }
    }
}

pub const DEFAULT_BOUND: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    pub entry: Option<String>,
    pub engine: EngineKind,
    pub bound: u32,
    pub domain: u32,
    pub budget: u64,
    pub slice: bool,
    pub underflow_check: bool,
    /// Shell command with a `{file}` placeholder.
    pub solver_cmd: Option<String>,
    pub solver_timeout: Duration,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            entry: None,
            engine: EngineKind::Enum,
            bound: DEFAULT_BOUND,
            domain: DEFAULT_DOMAIN,
            budget: DEFAULT_BUDGET,
            slice: true,
            underflow_check: true,
            solver_cmd: None,
            solver_timeout: DEFAULT_SOLVER_TIMEOUT,
        }
    }
}

impl CheckOptions {
    fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            domain: self.domain,
            budget: self.budget,
            underflow_check: self.underflow_check,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Read,
    Parse,
    Validate,
    Models,
    Harness,
    Slice,
    Engine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Read => "read",
            Stage::Parse => "parse",
            Stage::Validate => "validate",
            Stage::Models => "models",
            Stage::Harness => "harness",
            Stage::Slice => "slice",
            Stage::Engine => "engine",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            message: message.to_string(),
        }
    }
}

fn check_valid(m: &Module, stage: Stage) -> Result<(), PipelineError> {
    let v = validate(m);
    if v.is_empty() {
        return Ok(());
    }
    let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
    Err(PipelineError::new(stage, msgs.join("; ")))
}

fn micros(t: Instant) -> u64 {
    t.elapsed().as_micros().try_into().unwrap_or(u64::MAX)
}

/// Harness program ready for an engine.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub harness: HarnessProgram,
    /// The program the engine sees: the harness, sliced unless disabled.
    pub program: Module,
    pub slicing: Option<SliceStats>,
    /// Token results used other than for null checks, found after modeling.
    pub token_misuse: Vec<Violation>,
    pub timings: Timings,
}

/// Parses and validates `text` as a source module.
pub fn load(text: &str, file: &str) -> Result<Module, PipelineError> {
    let m = parse_module_named(text, file).map_err(|e| PipelineError::new(Stage::Parse, e))?;
    check_valid(&m, Stage::Validate)?;
    Ok(m)
}

pub fn prepare(text: &str, file: &str, opts: &CheckOptions) -> Result<Prepared, PipelineError> {
    let mut timings = Timings::default();
    let t = Instant::now();
    let m = load(text, file)?;
    timings.parse_us = micros(t);

    let t = Instant::now();
    let modeled = apply_models(&m, &ModelRegistry::builtin())
        .map_err(|e| PipelineError::new(Stage::Models, e))?;
    check_valid(&modeled, Stage::Models)?;
    let token_misuse = check_token_uses(&modeled);
    timings.models_us = micros(t);

    let t = Instant::now();
    let desc = EntryDescriptor::resolve(&modeled, opts.entry.as_deref())
        .map_err(|e| PipelineError::new(Stage::Harness, e))?;
    let harness =
        build_harness(&modeled, &desc).map_err(|e| PipelineError::new(Stage::Harness, e))?;
    check_valid(&harness.module, Stage::Harness)?;
    timings.harness_us = micros(t);

    let t = Instant::now();
    let (program, slicing) = if opts.slice {
        let (s, _, st) = slice_module(&harness.module);
        check_valid(&s, Stage::Slice)?;
        (s, Some(st))
    } else {
        (harness.module.clone(), None)
    };
    timings.slice_us = micros(t);
    Ok(Prepared {
        harness,
        program,
        slicing,
        token_misuse,
        timings,
    })
}

/// Engine outcome in report vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineRun {
    pub verdict: VerdictName,
    pub bounded: bool,
    pub reason: Option<String>,
    pub failure: Option<Failure>,
    pub trace: Option<TraceReport>,
    pub exploration: Option<ExplorationReport>,
    pub notes: Vec<String>,
}

fn from_outcome(o: engine::Outcome) -> EngineRun {
    let exploration = Some(ExplorationReport {
        paths: o.paths,
        steps: o.steps,
    });
    let (verdict, reason, bug) = match o.verdict {
        Verdict::Safe => (VerdictName::Safe, None, None),
        Verdict::Bug(t) => (VerdictName::Bug, None, Some(t)),
        Verdict::Timeout(b) => (
            VerdictName::Timeout,
            Some(format!("step budget of {b} exhausted")),
            None,
        ),
        Verdict::Unknown(r) => (VerdictName::Unknown, Some(r), None),
    };
    let (failure, trace) = match bug {
        Some(b) => (
            Some(b.failure),
            Some(TraceReport {
                choices: b.choices,
                steps: b.steps,
            }),
        ),
        None => (None, None),
    };
    EngineRun {
        verdict,
        bounded: o.bounded,
        reason,
        failure,
        trace,
        exploration,
        notes: Vec::new(),
    }
}

/// Horn script for a prepared program.
pub fn chc_script(program: &Module, opts: &CheckOptions) -> Result<(String, Vec<String>), PipelineError> {
    let chc_opts = ChcOptions {
        inline: true,
        underflow_check: opts.underflow_check,
    };
    let sys = encode_chc(program, chc_opts).map_err(|e| PipelineError::new(Stage::Engine, e))?;
    Ok((emit_smtlib(&sys), sys.notes))
}

pub fn run_engine(program: &Module, opts: &CheckOptions) -> Result<EngineRun, PipelineError> {
    let cfg = opts.engine_config();
    match opts.engine {
        EngineKind::Enum => Ok(from_outcome(engine::enumerate(program, &cfg))),
        EngineKind::Bmc => {
            if opts.bound == 0 {
                return Err(PipelineError::new(Stage::Engine, "loop bound must be at least 1"));
            }
            Ok(from_outcome(engine::bmc(program, opts.bound, &cfg)))
        }
        EngineKind::Chc => {
            let Some(cmd) = &opts.solver_cmd else {
                return Err(PipelineError::new(
                    Stage::Engine,
                    "the chc engine needs a solver command (for example --solver-cmd \"z3 fp.spacer.global=true {file}\")",
                ));
            };
            let (script, notes) = chc_script(program, opts)?;
            let answer = run_external_solver(&script, cmd, opts.solver_timeout)
                .map_err(|e| PipelineError::new(Stage::Engine, e))?;
            let (verdict, reason) = match answer {
                SolverAnswer::Unsat => (VerdictName::Bug, None),
                SolverAnswer::Sat => (VerdictName::Safe, None),
                SolverAnswer::Timeout => (
                    VerdictName::Timeout,
                    Some(format!("solver exceeded {} s", opts.solver_timeout.as_secs_f64())),
                ),
                SolverAnswer::Error(e) => (VerdictName::Unknown, Some(format!("solver error: {e}"))),
            };
            Ok(EngineRun {
                verdict,
                bounded: false,
                reason,
                failure: None,
                trace: None,
                exploration: None,
                notes,
            })
        }
    }
}

fn token_misuse_run(first: &Violation, count: usize) -> EngineRun {
    EngineRun {
        verdict: VerdictName::Bug,
        bounded: false,
        reason: None,
        failure: Some(Failure::TokenMisuse {
            what: first.to_string(),
        }),
        trace: None,
        exploration: None,
        notes: vec![format!(
            "{count} token use(s) other than null checks found after modeling; engine not run"
        )],
    }
}

fn slicing_report(st: &SliceStats) -> SlicingReport {
    SlicingReport {
        before: st.before as u64,
        after: st.after as u64,
        rules: st.rules.iter().map(|(k, v)| (k.clone(), *v as u64)).collect(),
    }
}

/// Runs the whole pipeline on source `text`; `driver` names the report.
pub fn check(text: &str, driver: &str, opts: &CheckOptions) -> Result<Report, PipelineError> {
    let prepared = prepare(text, driver, opts)?;
    let t = Instant::now();
    let run = match prepared.token_misuse.first() {
        Some(v) => token_misuse_run(v, prepared.token_misuse.len()),
        None => run_engine(&prepared.program, opts)?,
    };
    let mut timings = prepared.timings.clone();
    timings.engine_us = micros(t);
    Ok(Report {
        schema: REPORT_SCHEMA,
        driver: driver.to_string(),
        entry: prepared.harness.init.clone(),
        engine: opts.engine.as_str().to_string(),
        bound: (opts.engine == EngineKind::Bmc).then_some(opts.bound),
        domain: opts.domain,
        sliced: opts.slice,
        underflow_check: opts.underflow_check,
        verdict: run.verdict,
        bounded: run.bounded,
        reason: run.reason,
        failure: run.failure,
        trace: run.trace,
        slicing: prepared.slicing.as_ref().map(slicing_report),
        exploration: run.exploration,
        notes: run.notes,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEAK: &str = "refclass device
type device { refs: kref_t } kref refs
extern get_device(ptr<device>) -> ptr<device>
extern probe_hw(ptr<device>) -> i32
entry probe
fn @probe(%d: ptr<device>) -> i32 {
^entry:
  %g = call ptr<device> @get_device(%d)
  %err = call i32 @probe_hw(%d)
  ret i32 %err
}
";

    #[test]
    fn leak_is_a_bug_with_trace() {
        let r = check(LEAK, "leak", &CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, VerdictName::Bug);
        assert_eq!(r.exit_code(), 1);
        assert!(r.trace.as_ref().is_some_and(|t| !t.steps.is_empty()));
        let s = r.slicing.as_ref().unwrap();
        assert!(s.after <= s.before);
    }

    #[test]
    fn stages_are_named_in_errors() {
        let e = check("fn @f(", "bad", &CheckOptions::default()).unwrap_err();
        assert_eq!(e.stage, Stage::Parse);
        let e = check(LEAK, "leak", &CheckOptions {
            entry: Some("nope".into()),
            ..CheckOptions::default()
        })
        .unwrap_err();
        assert_eq!(e.stage, Stage::Harness);
        let e = check(LEAK, "leak", &CheckOptions {
            engine: EngineKind::Chc,
            ..CheckOptions::default()
        })
        .unwrap_err();
        assert_eq!(e.stage, Stage::Engine);
    }

    #[test]
    fn unsliced_run_has_no_slicing_stats() {
        let opts = CheckOptions {
            slice: false,
            ..CheckOptions::default()
        };
        let r = check(LEAK, "leak", &opts).unwrap();
        assert!(r.slicing.is_none());
        assert_eq!(r.verdict, VerdictName::Bug);
    }
}
