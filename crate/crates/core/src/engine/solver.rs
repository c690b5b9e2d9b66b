//! External Horn solver driver.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt as _;
use std::process::{Command, Stdio};
use std::time::Duration;

use thiserror::Error;
use wait_timeout::ChildExt;

/// Placeholder replaced by the script path in a solver command template.
pub const FILE_PLACEHOLDER: &str = "{file}";
pub const DEFAULT_SOLVER_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverAnswer {
    Sat,
    Unsat,
    Timeout,
    Error(String),
}

#[derive(Debug, Error)]
pub enum SolverSetupError {
    #[error("solver command has no {FILE_PLACEHOLDER} placeholder: {0}")]
    NoPlaceholder(String),
    #[error("could not write the solver script: {0}")]
    Io(#[from] std::io::Error),
}

/// First `sat` or `unsat` token of the solver output.
pub fn parse_answer(output: &str) -> Option<SolverAnswer> {
    output.split_whitespace().find_map(|t| match t {
        "sat" => Some(SolverAnswer::Sat),
        "unsat" => Some(SolverAnswer::Unsat),
        _ => None,
    })
}

/// Runs `template` through `sh -c` with the script written to a temporary
/// file, killing the solver after `timeout`.
pub fn run_external_solver(
    script: &str,
    template: &str,
    timeout: Duration,
) -> Result<SolverAnswer, SolverSetupError> {
    if !template.contains(FILE_PLACEHOLDER) {
        return Err(SolverSetupError::NoPlaceholder(template.to_string()));
    }
    let mut file = tempfile::Builder::new().suffix(".smt2").tempfile()?;
    file.write_all(script.as_bytes())?;
    file.flush()?;
    let path = file.path().to_string_lossy().replace('\'', r"'\''");
    let cmd = template.replace(FILE_PLACEHOLDER, &format!("'{path}'"));
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let status = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            kill_group(child.id());
            let _ = child.kill();
            let _ = child.wait();
            return Ok(SolverAnswer::Timeout);
        }
    };
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    if let Some(answer) = parse_answer(&out) {
        return Ok(answer);
    }
    let detail = format!("{status}; stdout: {} stderr: {}", out.trim(), err.trim());
    Ok(SolverAnswer::Error(detail))
}

fn kill_group(pid: u32) {
    let Ok(pgid) = libc::pid_t::try_from(pid) else {
        return;
    };
    // SAFETY: plain syscall; a positive pgid never names this process group
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

/// Whether `program` resolves on `PATH`.
pub fn on_path(program: &str) -> bool {
    std::env::var_os("PATH").is_some_and(|paths| {
        std::env::split_paths(&paths).any(|dir| dir.join(program).is_file())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_verdict_token() {
        assert_eq!(parse_answer("unsat\n"), Some(SolverAnswer::Unsat));
        assert_eq!(parse_answer("warning x\nsat\nunsat"), Some(SolverAnswer::Sat));
        assert_eq!(parse_answer("unknown"), None);
    }

    #[test]
    fn echo_solver() {
        let a = run_external_solver("(check-sat)", "echo unsat; cat {file} >/dev/null", Duration::from_secs(5))
            .unwrap();
        assert_eq!(a, SolverAnswer::Unsat);
    }

    #[test]
    fn slow_solver_times_out() {
        let a = run_external_solver("", "sleep 1; echo sat {file}", Duration::from_millis(100)).unwrap();
        assert_eq!(a, SolverAnswer::Timeout);
    }

    #[test]
    fn failing_solver_reports_error() {
        let a = run_external_solver("", "echo boom >&2; test -e {file}; exit 3", Duration::from_secs(5)).unwrap();
        assert!(matches!(a, SolverAnswer::Error(ref s) if s.contains("boom")), "{a:?}");
    }

    #[test]
    fn template_needs_placeholder() {
        assert!(run_external_solver("", "z3", Duration::from_secs(1)).is_err());
    }
}
