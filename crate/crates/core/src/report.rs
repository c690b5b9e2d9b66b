//! Check reports: the machine schema (see `docs/report.md`) and the text
//! rendering.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::engine::{Failure, TraceStep};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictName {
    Safe,
    Bug,
    Timeout,
    Unknown,
}

impl VerdictName {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictName::Safe => "safe",
            VerdictName::Bug => "bug",
            VerdictName::Timeout => "timeout",
            VerdictName::Unknown => "unknown",
        }
    }

    /// Process exit status for this verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            VerdictName::Safe => 0,
            VerdictName::Bug => 1,
            VerdictName::Timeout | VerdictName::Unknown => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Safe, Self::Bug, Self::Timeout, Self::Unknown]
            .into_iter()
            .find(|v| v.as_str() == s)
    }
}

impl fmt::Display for VerdictName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceReport {
    pub choices: Vec<u32>,
    pub steps: Vec<TraceStep>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicingReport {
    pub before: u64,
    pub after: u64,
    /// Necessary instructions per marking rule.
    pub rules: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationReport {
    pub paths: u64,
    pub steps: u64,
}

/// Wall-clock microseconds per stage; informational only.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timings {
    pub parse_us: u64,
    pub models_us: u64,
    pub harness_us: u64,
    pub slice_us: u64,
    pub engine_us: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema: u32,
    pub driver: String,
    pub entry: String,
    pub engine: String,
    pub bound: Option<u32>,
    pub domain: u32,
    pub sliced: bool,
    pub underflow_check: bool,
    pub verdict: VerdictName,
    /// A loop bound cut some path, so `safe` holds only within the bound.
    pub bounded: bool,
    pub reason: Option<String>,
    pub failure: Option<Failure>,
    pub trace: Option<TraceReport>,
    pub slicing: Option<SlicingReport>,
    pub exploration: Option<ExplorationReport>,
    pub notes: Vec<String>,
    pub timings: Timings,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let engine = match self.bound {
            Some(k) => format!("{} (bound {k})", self.engine),
            None => self.engine.clone(),
        };
        let _ = writeln!(out, "{}: {} [{engine}]", self.driver, self.verdict);
        if self.bounded && self.verdict == VerdictName::Safe {
            let _ = writeln!(out, "warning: no bug within the loop bound; longer paths were not explored");
        }
        if let Some(r) = &self.reason {
            let _ = writeln!(out, "reason: {r}");
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(out, "failure: {f}");
        }
        if let Some(t) = &self.trace {
            let _ = writeln!(out, "trace: {} steps, choices {:?}", t.steps.len(), t.choices);
            let mut last = None;
            for s in &t.steps {
                let here = (&s.function, &s.block);
                if last != Some(here) {
                    let _ = writeln!(out, "  @{} ^{}", s.function, s.block);
                    last = Some(here);
                }
            }
        }
        if let Some(s) = &self.slicing {
            let rules: Vec<String> = s
                .rules
                .iter()
                .filter(|(_, n)| **n > 0)
                .map(|(r, n)| format!("{r} {n}"))
                .collect();
            let _ = writeln!(
                out,
                "slicing: {} -> {} instructions ({})",
                s.before,
                s.after,
                rules.join(", ")
            );
        }
        if let Some(e) = &self.exploration {
            let _ = writeln!(out, "explored: {} paths, {} steps", e.paths, e.steps);
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            schema: REPORT_SCHEMA,
            driver: "tpm_leak".into(),
            entry: "open".into(),
            engine: "enum".into(),
            bound: None,
            domain: 2,
            sliced: true,
            underflow_check: true,
            verdict: VerdictName::Bug,
            bounded: false,
            reason: None,
            failure: Some(Failure::Assertion {
                function: "main".into(),
                block: "failure".into(),
                index: 2,
            }),
            trace: Some(TraceReport {
                choices: vec![1, 0],
                steps: vec![TraceStep {
                    function: "main".into(),
                    block: "entry".into(),
                    index: 0,
                    digest: 7,
                }],
            }),
            slicing: Some(SlicingReport {
                before: 10,
                after: 4,
                rules: BTreeMap::from([("R1".into(), 3), ("R2".into(), 1)]),
            }),
            exploration: Some(ExplorationReport { paths: 3, steps: 40 }),
            notes: vec![],
            timings: Timings::default(),
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(Report::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["slicing"]["extra"] = serde_json::json!(1);
        assert!(Report::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn exit_codes_follow_verdicts() {
        let codes: Vec<i32> = ["safe", "bug", "timeout", "unknown"]
            .iter()
            .map(|s| VerdictName::parse(s).unwrap().exit_code())
            .collect();
        assert_eq!(codes, vec![0, 1, 2, 2]);
    }
}
