//! Verification engines for harness programs.
//!
//! [`enumerate`] explores every path over a finite nondet domain and is the
//! reference oracle. [`bmc`] is the same exploration with each loop back
//! edge capped. [`chc`] encodes the program as constrained Horn clauses for
//! an external solver.

pub mod chc;
pub mod inline;
pub mod solver;
mod state;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::harness::HARNESS_MAIN;
use crate::kir::Module;

pub use inline::inline_all_nonrecursive;
pub use state::{step, Addr, Failure, Frame, Object, Program, State, StepConfig, Successor, Value};

pub const DEFAULT_DOMAIN: u32 = 2;
pub const DEFAULT_BUDGET: u64 = 250_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    /// Nondet integers range over `0..domain`.
    pub domain: u32,
    /// Instruction steps summed over all explored paths.
    pub budget: u64,
    pub underflow_check: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            domain: DEFAULT_DOMAIN,
            budget: DEFAULT_BUDGET,
            underflow_check: true,
        }
    }
}

/// One executed instruction of a bug trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub function: String,
    pub block: String,
    pub index: usize,
    /// Hash of the state before the instruction executes.
    pub digest: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BugTrace {
    pub failure: Failure,
    /// Nondet outcomes that reproduce the path.
    pub choices: Vec<u32>,
    pub steps: Vec<TraceStep>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Safe,
    Bug(BugTrace),
    /// Step budget exhausted.
    Timeout(u64),
    Unknown(String),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Safe => "safe",
            Verdict::Bug(_) => "bug",
            Verdict::Timeout(_) => "timeout",
            Verdict::Unknown(_) => "unknown",
        }
    }

    pub fn is_bug(&self) -> bool {
        matches!(self, Verdict::Bug(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub verdict: Verdict,
    /// Some path was cut by the loop bound, so `Safe` only holds within it.
    pub bounded: bool,
    /// Paths that reached the end of the entry function.
    pub paths: u64,
    pub steps: u64,
}

/// A path that returned from the entry function.
#[derive(Clone, Debug)]
pub struct Terminal {
    pub state: State,
    pub returned: Option<Value>,
}

/// Depth-first exploration from `init`. `on_terminal` sees every completed
/// path; the first failure stops the search.
pub fn explore(
    prog: &Program,
    init: State,
    cfg: &EngineConfig,
    bound: Option<u32>,
    mut on_terminal: impl FnMut(Terminal),
) -> Outcome {
    let sc = StepConfig {
        domain: cfg.domain,
        underflow_check: cfg.underflow_check,
        bound,
    };
    let mut stack = vec![init];
    let mut steps = 0u64;
    let mut paths = 0u64;
    let mut bounded = false;
    let mut unknown: Option<String> = None;
    while let Some(mut st) = stack.pop() {
        loop {
            if steps >= cfg.budget {
                return Outcome {
                    verdict: Verdict::Timeout(cfg.budget),
                    bounded,
                    paths,
                    steps,
                };
            }
            steps += 1;
            // Walk successors last to first so the lowest choice continues
            // in place and the others wait on the stack in order.
            let mut cont = None;
            for s in step(prog, &st, sc).into_iter().rev() {
                match s {
                    Successor::Next(s) => {
                        if let Some(later) = cont.replace(s) {
                            stack.push(later);
                        }
                    }
                    Successor::Done(s) => {
                        paths += 1;
                        let returned = s.returned.clone().flatten();
                        on_terminal(Terminal { state: s, returned });
                    }
                    Successor::Fail(s, failure) => {
                        return Outcome {
                            verdict: Verdict::Bug(bug_trace(prog, cfg, s.choices, failure)),
                            bounded,
                            paths,
                            steps,
                        };
                    }
                    Successor::Pruned => {}
                    Successor::Bounded => bounded = true,
                    Successor::Stuck(reason) => {
                        unknown.get_or_insert(reason);
                    }
                }
            }
            match cont {
                Some(s) => st = s,
                None => break,
            }
        }
    }
    let verdict = match unknown {
        Some(reason) => Verdict::Unknown(reason),
        None => Verdict::Safe,
    };
    Outcome {
        verdict,
        bounded,
        paths,
        steps,
    }
}

fn bug_trace(prog: &Program, cfg: &EngineConfig, choices: Vec<u32>, failure: Failure) -> BugTrace {
    let r = replay_program(prog, cfg, &choices);
    BugTrace {
        failure,
        choices,
        steps: r.trace,
    }
}

fn harness_state(prog: &Program) -> Option<State> {
    let main = prog.function_index(HARNESS_MAIN)?;
    Some(prog.initial_state(main, Vec::new()))
}

fn no_main() -> Outcome {
    Outcome {
        verdict: Verdict::Unknown(format!("module has no @{HARNESS_MAIN}")),
        bounded: false,
        paths: 0,
        steps: 0,
    }
}

/// Exhaustive exploration of the harness `main`.
pub fn enumerate(m: &Module, cfg: &EngineConfig) -> Outcome {
    let prog = Program::new(m);
    match harness_state(&prog) {
        Some(init) => explore(&prog, init, cfg, None, |_| {}),
        None => no_main(),
    }
}

/// Exploration with every loop back edge taken at most `k` times per
/// function activation.
pub fn bmc(m: &Module, k: u32, cfg: &EngineConfig) -> Outcome {
    let prog = Program::new(m);
    match harness_state(&prog) {
        Some(init) => explore(&prog, init, cfg, Some(k.max(1)), |_| {}),
        None => no_main(),
    }
}

/// Single path re-executed from recorded nondet choices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    pub trace: Vec<TraceStep>,
    pub failure: Option<Failure>,
    /// Aggregate delta per class at the end of the path.
    pub delta: BTreeMap<String, i64>,
    pub incs: BTreeMap<String, u64>,
    pub decs: BTreeMap<String, u64>,
    /// Choices left unused (nonzero only for a mismatched recording).
    pub unused_choices: usize,
}

impl Replay {
    /// Whether every class delta equals increments minus decrements.
    pub fn conserves_ledger(&self) -> bool {
        let classes = self
            .delta
            .keys()
            .chain(self.incs.keys())
            .chain(self.decs.keys());
        classes.into_iter().all(|c| {
            let d = self.delta.get(c).copied().unwrap_or(0);
            let i = self.incs.get(c).copied().unwrap_or(0) as i64;
            let n = self.decs.get(c).copied().unwrap_or(0) as i64;
            d == i - n
        })
    }
}

fn replay_program(prog: &Program, cfg: &EngineConfig, choices: &[u32]) -> Replay {
    let sc = StepConfig {
        domain: cfg.domain,
        underflow_check: cfg.underflow_check,
        bound: None,
    };
    let mut trace = Vec::new();
    let mut st = match harness_state(prog) {
        Some(s) => s,
        None => {
            return Replay {
                trace,
                failure: None,
                delta: BTreeMap::new(),
                incs: BTreeMap::new(),
                decs: BTreeMap::new(),
                unused_choices: choices.len(),
            }
        }
    };
    let summary = |st: &State, trace: Vec<TraceStep>, failure| {
        let delta = st
            .ledger
            .keys()
            .map(|c| (c.clone(), st.delta(c)))
            .collect();
        Replay {
            trace,
            failure,
            delta,
            incs: st.incs.clone(),
            decs: st.decs.clone(),
            unused_choices: choices.len().saturating_sub(st.choices.len()),
        }
    };
    loop {
        if let Some((fi, id)) = st.position() {
            let f = prog.function(fi);
            trace.push(TraceStep {
                function: f.name.clone(),
                block: f.blocks[id.block].label.clone(),
                index: id.index,
                digest: st.digest(),
            });
        }
        let taken = st.choices.len();
        let mut chosen = None;
        for s in step(prog, &st, sc) {
            match s {
                Successor::Next(s) => {
                    let fits = s.choices.len() == taken
                        || choices.get(taken) == s.choices.last();
                    if fits {
                        chosen = Some(s);
                        break;
                    }
                }
                Successor::Fail(s, f) => {
                    if s.choices.len() == taken || choices.get(taken) == s.choices.last() {
                        return summary(&s, trace, Some(f));
                    }
                }
                Successor::Done(s) => return summary(&s, trace, None),
                _ => {}
            }
        }
        match chosen {
            Some(s) => st = s,
            None => return summary(&st, trace, None),
        }
    }
}

/// Re-executes the harness along `choices`.
pub fn replay(m: &Module, cfg: &EngineConfig, choices: &[u32]) -> Replay {
    replay_program(&Program::new(m), cfg, choices)
}

#[cfg(test)]
mod tests;
