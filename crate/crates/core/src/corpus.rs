//! Corpus manifests and the batch runner that checks every program against
//! its expected verdicts.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kir::cfg::Cfg;
use crate::pipeline::{check, load, CheckOptions, EngineKind};
use crate::report::VerdictName;

pub const CORPUS_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(rename = "program")]
    pub programs: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    /// Relative to the manifest's directory.
    pub file: PathBuf,
    pub entry: Option<String>,
    pub domain: Option<u32>,
    /// Expected verdict per engine spec (`enum`, `bmc3`, `chc-noslice`, ...).
    pub expect: BTreeMap<String, String>,
    /// The correct verdict when some engine is expected to be wrong.
    pub truth: Option<String>,
    /// Why the wrong answers arise.
    pub mismatch: Option<String>,
    pub origin: Option<String>,
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("program {name}: {message}")]
    Entry { name: String, message: String },
}

/// Engine selection for one corpus column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EngineSpec {
    pub kind: EngineKind,
    pub bound: u32,
    pub slice: bool,
}

impl EngineSpec {
    pub const ENUM: EngineSpec = EngineSpec {
        kind: EngineKind::Enum,
        bound: 1,
        slice: true,
    };
}

impl fmt::Display for EngineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EngineKind::Bmc => write!(f, "bmc{}", self.bound)?,
            k => f.write_str(k.as_str())?,
        }
        if !self.slice {
            f.write_str("-noslice")?;
        }
        Ok(())
    }
}

impl FromStr for EngineSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, slice) = match s.strip_suffix("-noslice") {
            Some(b) => (b, false),
            None => (s, true),
        };
        let (kind, bound) = match base {
            "enum" => (EngineKind::Enum, 1),
            "chc" => (EngineKind::Chc, 1),
            _ => match base.strip_prefix("bmc").map(str::parse::<u32>) {
                Some(Ok(k)) if k >= 1 => (EngineKind::Bmc, k),
                _ => {
                    return Err(format!(
                        "unknown engine {s:?}; use enum, chc or bmc<k>, optionally with -noslice"
                    ))
                }
            },
        };
        Ok(EngineSpec { kind, bound, slice })
    }
}

/// Parses a comma-separated engine list.
pub fn parse_engines(list: &str) -> Result<Vec<EngineSpec>, String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl Manifest {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ManifestError> {
        let m: Manifest = toml::from_str(text).map_err(|source| ManifestError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        for p in &m.programs {
            let bad = |message: String| ManifestError::Entry {
                name: p.name.clone(),
                message,
            };
            if let Some(t) = &p.truth {
                if VerdictName::parse(t).is_none() {
                    return Err(bad(format!("truth {t:?} is not a verdict")));
                }
            }
            for (k, v) in &p.expect {
                k.parse::<EngineSpec>().map_err(bad)?;
                if VerdictName::parse(v).is_none() {
                    return Err(bad(format!("expected verdict {v:?} for {k} is not safe, bug, timeout or unknown")));
                }
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }
}

impl ManifestEntry {
    /// Expected verdict for `spec`: the exact key, else the sliced key for
    /// an unsliced run, else the `enum` verdict when loops cannot matter.
    pub fn expected(&self, spec: EngineSpec, loop_free: bool) -> Option<VerdictName> {
        let exact = spec.to_string();
        let sliced = EngineSpec { slice: true, ..spec }.to_string();
        let mut keys = vec![exact, sliced];
        if spec.kind == EngineKind::Chc || loop_free {
            keys.push(EngineSpec { slice: spec.slice, ..EngineSpec::ENUM }.to_string());
            keys.push("enum".into());
        }
        keys.iter()
            .find_map(|k| self.expect.get(k))
            .and_then(|v| VerdictName::parse(v))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum RowStatus {
    Match,
    Mismatch,
    Skipped(String),
    Error(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRow {
    pub program: String,
    pub engine: String,
    pub expected: Option<VerdictName>,
    pub actual: Option<VerdictName>,
    pub status: RowStatus,
    /// The manifest records this row as a known wrong answer.
    pub expected_mismatch: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusTotals {
    pub rows: u64,
    pub matched: u64,
    pub mismatched: u64,
    pub skipped: u64,
    pub errors: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSummary {
    pub schema: u32,
    pub rows: Vec<CorpusRow>,
    pub totals: CorpusTotals,
}

impl CorpusSummary {
    pub fn ok(&self) -> bool {
        self.totals.mismatched == 0 && self.totals.errors == 0
    }

    pub fn exit_code(&self) -> i32 {
        if self.ok() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn to_text(&self) -> String {
        let w = self
            .rows
            .iter()
            .map(|r| r.program.len())
            .max()
            .unwrap_or(7)
            .max(7);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w$}  {:<14}  {:<8}  {:<8}  status", "program", "engine", "expected", "actual");
        for r in &self.rows {
            let show = |v: Option<VerdictName>| v.map_or("-", VerdictName::as_str);
            let status = match &r.status {
                RowStatus::Match if r.expected_mismatch => "ok (known wrong answer)".to_string(),
                RowStatus::Match => "ok".to_string(),
                RowStatus::Mismatch => "MISMATCH".to_string(),
                RowStatus::Skipped(why) => format!("skipped: {why}"),
                RowStatus::Error(e) => format!("ERROR: {e}"),
            };
            let _ = writeln!(
                out,
                "{:<w$}  {:<14}  {:<8}  {:<8}  {status}",
                r.program,
                r.engine,
                show(r.expected),
                show(r.actual)
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "{} rows: {} ok, {} mismatched, {} skipped, {} errors",
            t.rows, t.matched, t.mismatched, t.skipped, t.errors
        );
        out
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub engines: Vec<EngineSpec>,
    pub solver_cmd: Option<String>,
    pub solver_timeout: Duration,
    pub budget: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        let base = CheckOptions::default();
        RunOptions {
            engines: vec![EngineSpec::ENUM],
            solver_cmd: None,
            solver_timeout: base.solver_timeout,
            budget: base.budget,
        }
    }
}

fn run_row(dir: &Path, p: &ManifestEntry, spec: EngineSpec, opts: &RunOptions) -> CorpusRow {
    let mut row = CorpusRow {
        program: p.name.clone(),
        engine: spec.to_string(),
        expected: None,
        actual: None,
        status: RowStatus::Skipped(String::new()),
        expected_mismatch: false,
    };
    let path = dir.join(&p.file);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            row.status = RowStatus::Error(format!("cannot read {}: {e}", path.display()));
            return row;
        }
    };
    let loop_free = match load(&text, &p.name) {
        Ok(m) => m.functions.iter().all(|f| Cfg::new(f).back_edges().is_empty()),
        Err(e) => {
            row.status = RowStatus::Error(e.to_string());
            return row;
        }
    };
    row.expected = p.expected(spec, loop_free);
    let truth = p.truth.as_deref().and_then(VerdictName::parse);
    row.expected_mismatch = truth.is_some() && row.expected.is_some() && row.expected != truth;
    let Some(expected) = row.expected else {
        row.status = RowStatus::Skipped("no expectation for this engine".into());
        return row;
    };
    if spec.kind == EngineKind::Chc && opts.solver_cmd.is_none() {
        row.status = RowStatus::Skipped("no solver configured".into());
        return row;
    }
    let base = CheckOptions::default();
    let copts = CheckOptions {
        entry: p.entry.clone(),
        engine: spec.kind,
        bound: spec.bound,
        domain: p.domain.unwrap_or(base.domain),
        budget: opts.budget,
        slice: spec.slice,
        underflow_check: true,
        solver_cmd: opts.solver_cmd.clone(),
        solver_timeout: opts.solver_timeout,
    };
    match check(&text, &p.name, &copts) {
        Ok(r) => {
            row.actual = Some(r.verdict);
            row.status = if r.verdict == expected {
                RowStatus::Match
            } else {
                RowStatus::Mismatch
            };
        }
        Err(e) => row.status = RowStatus::Error(e.to_string()),
    }
    row
}

/// Runs every (program, engine) pair; rows come back in manifest order.
pub fn run_manifest(manifest: &Manifest, dir: &Path, opts: &RunOptions) -> CorpusSummary {
    let tasks: Vec<(&ManifestEntry, EngineSpec)> = manifest
        .programs
        .iter()
        .flat_map(|p| opts.engines.iter().map(move |e| (p, *e)))
        .collect();
    let rows: Vec<CorpusRow> = tasks
        .par_iter()
        .map(|(p, e)| run_row(dir, p, *e, opts))
        .collect();
    let mut totals = CorpusTotals::default();
    for r in &rows {
        totals.rows += 1;
        match r.status {
            RowStatus::Match => totals.matched += 1,
            RowStatus::Mismatch => totals.mismatched += 1,
            RowStatus::Skipped(_) => totals.skipped += 1,
            RowStatus::Error(_) => totals.errors += 1,
        }
    }
    CorpusSummary {
        schema: CORPUS_SCHEMA,
        rows,
        totals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_specs_round_trip() {
        for s in ["enum", "bmc1", "bmc4", "chc", "enum-noslice", "bmc2-noslice"] {
            assert_eq!(s.parse::<EngineSpec>().unwrap().to_string(), s);
        }
        assert!("bmc0".parse::<EngineSpec>().is_err());
        assert!("sat".parse::<EngineSpec>().is_err());
        assert_eq!(parse_engines("enum, bmc1").unwrap().len(), 2);
    }

    fn entry(expect: &[(&str, &str)]) -> ManifestEntry {
        ManifestEntry {
            name: "p".into(),
            file: "p.kir".into(),
            entry: None,
            domain: None,
            expect: expect
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            truth: None,
            mismatch: None,
            origin: None,
            note: None,
        }
    }

    #[test]
    fn expectation_fallbacks() {
        let e = entry(&[("enum", "bug"), ("enum-noslice", "safe")]);
        let spec = |s: &str| s.parse::<EngineSpec>().unwrap();
        assert_eq!(e.expected(spec("enum-noslice"), true), Some(VerdictName::Safe));
        assert_eq!(e.expected(spec("chc"), false), Some(VerdictName::Bug));
        assert_eq!(e.expected(spec("chc-noslice"), false), Some(VerdictName::Safe));
        assert_eq!(e.expected(spec("bmc1"), true), Some(VerdictName::Bug));
        assert_eq!(e.expected(spec("bmc1"), false), None);
    }

    #[test]
    fn manifest_rejects_bad_verdicts_and_fields() {
        let p = Path::new("m.toml");
        let ok = "[[program]]\nname = \"a\"\nfile = \"a.kir\"\nexpect = { enum = \"bug\" }\n";
        assert_eq!(Manifest::from_toml(ok, p).unwrap().programs.len(), 1);
        let bad = ok.replace("\"bug\"", "\"broken\"");
        assert!(Manifest::from_toml(&bad, p).is_err());
        let extra = format!("{ok}colour = 1\n");
        assert!(Manifest::from_toml(&extra, p).is_err());
    }
}
