use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use krefcheck::corpus::CorpusSummary;
use krefcheck::kir::validate;
use krefcheck::parse::parse_module;
use krefcheck::report::{Report, VerdictName};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn krefcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krefcheck"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes_follow_verdicts() {
    let leak = corpus("tpm_leak.kir");
    let fixed = corpus("tpm_fixed.kir");
    let stress = corpus("stress.kir");
    assert_eq!(code(&krefcheck(&["check", path(&leak)])), 1);
    assert_eq!(code(&krefcheck(&["check", path(&fixed)])), 0);
    assert_eq!(code(&krefcheck(&["check", path(&fixed), "--engine", "bmc", "--bound", "2"])), 0);
    assert_eq!(code(&krefcheck(&["check", path(&stress), "--no-slice"])), 2);
    assert_eq!(code(&krefcheck(&["check", path(&leak), "--budget", "1"])), 2);
}

#[test]
fn usage_and_input_errors_exit_3() {
    let leak = corpus("tpm_leak.kir");
    let missing = krefcheck(&["check", "/nonexistent/x.kir"]);
    assert_eq!(code(&missing), 3);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));
    assert_eq!(code(&krefcheck(&["check", path(&leak), "--engine", "bdd"])), 3);
    assert_eq!(code(&krefcheck(&["check", path(&leak), "--bound", "0"])), 3);
    assert_eq!(code(&krefcheck(&["check", path(&leak), "--entry", "no_such_fn"])), 3);
    assert_eq!(code(&krefcheck(&["frobnicate"])), 3);
    assert_eq!(code(&krefcheck(&[])), 3);
    assert_eq!(code(&krefcheck(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.kir");
    std::fs::write(&bad, "fn @f( {\n").unwrap();
    let o = krefcheck(&["check", path(&bad)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad:1:"));
}

#[test]
fn machine_report_round_trips() {
    let o = krefcheck(&["check", path(&corpus("tpm_leak.kir")), "--format", "machine"]);
    assert_eq!(code(&o), 1);
    let text = stdout(&o);
    let r = Report::from_json(&text).expect("report parses");
    assert_eq!(r.verdict, VerdictName::Bug);
    assert_eq!(r.driver, "tpm_leak");
    assert_eq!(r.entry, "tpm_bios_measurements_open");
    assert!(r.trace.is_some() && r.failure.is_some());
    assert_eq!(r.exit_code(), code(&o));
    assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().insert("extra".into(), serde_json::json!(1));
    assert!(Report::from_json(&v.to_string()).is_err(), "unknown fields are rejected");
}

#[test]
fn text_and_machine_agree() {
    let file = corpus("q6v5_leak.kir");
    let text = krefcheck(&["check", path(&file)]);
    let machine = krefcheck(&["check", path(&file), "--format", "machine"]);
    assert_eq!(code(&text), code(&machine));
    let r = Report::from_json(&stdout(&machine)).unwrap();
    assert!(stdout(&text).contains(r.verdict.as_str()));
}

#[test]
fn slice_output_reparses_and_is_a_fixpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = krefcheck(&["slice", path(&corpus("tpm_fixed.kir"))]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("slicing:"));
    let once = stdout(&o);
    let m = parse_module(&once).expect("sliced output parses");
    assert!(validate(&m).is_empty());

    let again = dir.path().join("once.kir");
    std::fs::write(&again, &once).unwrap();
    let o2 = krefcheck(&["slice", path(&again)]);
    assert_eq!(code(&o2), 0);
    assert_eq!(stdout(&o2), once);

    let machine = krefcheck(&["slice", path(&corpus("tpm_fixed.kir")), "--format", "machine"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&machine)).unwrap();
    assert_eq!(v["program"].as_str(), Some(once.as_str()));
    assert!(v["after"].as_u64() <= v["before"].as_u64());
}

#[test]
fn emit_chc_to_stdout_and_file() {
    let file = corpus("tpm_leak.kir");
    let o = krefcheck(&["emit-chc", path(&file)]);
    assert_eq!(code(&o), 0);
    let script = stdout(&o);
    assert!(script.contains("(set-logic HORN)"));
    assert!(script.contains("(check-sat)"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.smt2");
    let o = krefcheck(&["emit-chc", path(&file), "-o", path(&out)]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), script);
}

#[test]
fn corpus_summary_is_machine_readable() {
    let o = krefcheck(&[
        "corpus",
        "run",
        "--manifest",
        path(&corpus("manifest.toml")),
        "--engines",
        "enum,bmc1",
        "--format",
        "machine",
    ]);
    let s: CorpusSummary = serde_json::from_str(&stdout(&o)).expect("summary parses");
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(s.ok());
    assert_eq!(s.rows.len() % 2, 0);
    assert!(s.rows.len() >= 2 * 13);
}

#[test]
fn corpus_reports_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(corpus("tpm_leak.kir"), dir.path().join("p.kir")).unwrap();
    let manifest = dir.path().join("manifest.toml");
    std::fs::write(
        &manifest,
        "[[program]]\nname = \"p\"\nfile = \"p.kir\"\nexpect = { enum = \"safe\" }\n",
    )
    .unwrap();
    let o = krefcheck(&["corpus", "run", "--manifest", path(&manifest), "--format", "machine"]);
    assert_eq!(code(&o), 1);
    let s: CorpusSummary = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s.totals.mismatched, 1);
}
