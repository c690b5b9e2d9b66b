use std::time::Duration;

use super::*;
use crate::engine::solver::{on_path, run_external_solver, SolverAnswer};
use crate::engine::tests::{harnessed, tpm, DEVICE, LOOP_LEAK};
use crate::parse::parse_module;

fn script(m: &Module) -> String {
    emit_smtlib(&encode_chc(m, ChcOptions::default()).unwrap())
}

fn z3(m: &Module) -> Option<SolverAnswer> {
    if !on_path("z3") {
        return None;
    }
    Some(run_external_solver(&script(m), "z3 {file}", Duration::from_secs(60)).unwrap())
}

#[test]
fn script_shape() {
    let s = script(&harnessed(&tpm(false)));
    assert!(s.contains("(set-logic HORN)"));
    assert_eq!(s.matches("(check-sat)").count(), 1);
    assert!(s.contains("(declare-fun P_main_entry ("));
    assert!(s.contains("(declare-fun Err () Bool)"));
    let open = s.matches('(').count();
    assert_eq!(open, s.matches(')').count());
}

/// Predicate name and top-level argument count of an application.
fn split_app(t: &str) -> (&str, usize) {
    let Some(inner) = t.strip_prefix('(').and_then(|t| t.strip_suffix(')')) else {
        return (t, 0);
    };
    let name = inner.split_whitespace().next().unwrap();
    let (mut depth, mut args, mut in_atom) = (0, 0, false);
    for ch in inner[name.len()..].chars() {
        match ch {
            '(' => {
                if depth == 0 {
                    args += 1;
                }
                depth += 1;
            }
            ')' => depth -= 1,
            c if c.is_whitespace() => in_atom = false,
            _ if depth == 0 && !in_atom => {
                in_atom = true;
                args += 1;
            }
            _ => {}
        }
    }
    (name, args)
}

#[test]
fn predicates_are_declared_once_with_matching_arity() {
    let sys = encode_chc(&harnessed(LOOP_LEAK), ChcOptions::default()).unwrap();
    let mut names: Vec<&str> = sys.predicates.iter().map(|p| p.name.as_str()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), sys.predicates.len());
    for c in &sys.clauses {
        let (name, args) = split_app(&c.head);
        let p = sys.predicates.iter().find(|p| p.name == name).unwrap();
        assert_eq!(args, p.arity, "{}", c.head);
    }
}

#[test]
fn loop_sites_are_noted() {
    let m = parse_module(&format!(
        "{DEVICE}fn @main() -> i32 {{
^entry:
  br ^head
^head:
  %o = nondet ptr<device>
  rc_inc device, %o
  %b = nondet i1
  condbr %b, ^head, ^out
^out:
  ret i32 0
}}
"
    ))
    .unwrap();
    let sys = encode_chc(&m, ChcOptions::default()).unwrap();
    assert_eq!(sys.notes.len(), 1, "{:?}", sys.notes);
}

#[test]
fn solver_agrees_on_tpm() {
    let Some(leak) = z3(&harnessed(&tpm(false))) else {
        return;
    };
    assert_eq!(leak, SolverAnswer::Unsat);
    assert_eq!(z3(&harnessed(&tpm(true))), Some(SolverAnswer::Sat));
}

#[test]
fn solver_finds_the_loop_leak() {
    assert!(matches!(z3(&harnessed(LOOP_LEAK)), None | Some(SolverAnswer::Unsat)));
}

#[test]
fn solver_sees_token_misuse() {
    let m = parse_module(
        "fn @main() -> i32 {
^entry:
  %t = alloca token_t
  %s = alloca ptr
  store ptr %t, %s
  ret i32 0
}
",
    )
    .unwrap();
    assert!(matches!(z3(&m), None | Some(SolverAnswer::Unsat)));
}

#[test]
fn summaries_without_inlining_match() {
    let m = harnessed(&tpm(false));
    let opts = ChcOptions {
        inline: false,
        ..ChcOptions::default()
    };
    let s = emit_smtlib(&encode_chc(&m, opts).unwrap());
    assert!(s.contains("(declare-fun S_open "));
    if on_path("z3") {
        let a = run_external_solver(&s, "z3 {file}", Duration::from_secs(60)).unwrap();
        assert_eq!(a, SolverAnswer::Unsat);
    }
}
