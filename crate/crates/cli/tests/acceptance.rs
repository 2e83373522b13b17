//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Runs without the libtest harness so the lines are never captured.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use kato_cli::suite::{run_criterion, SuiteSize, CRITERIA};

fn run_small_suite(dir: &Path) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kato"))
        .args(["verify", "--suite", "small", "--out"])
        .arg(dir)
        .output()
        .map_err(|e| format!("spawn kato: {e}"))?;
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    Ok((out.stdout, read("suite.json")?, read("suite.csv")?))
}

/// Two runs of the small suite must agree byte for byte.
fn determinism() -> (bool, String) {
    let dirs = (tempfile::tempdir(), tempfile::tempdir());
    let (Ok(a), Ok(b)) = dirs else { return (false, "cannot create temp dirs".into()) };
    match (run_small_suite(a.path()), run_small_suite(b.path())) {
        (Ok(x), Ok(y)) => {
            let same = [x.0 == y.0, x.1 == y.1, x.2 == y.2];
            let names = ["stdout", "suite.json", "suite.csv"];
            let diff: Vec<&str> = names.iter().zip(same).filter(|(_, s)| !s).map(|(n, _)| *n).collect();
            if diff.is_empty() {
                (true, format!("{} bytes of output compared", x.0.len() + x.1.len() + x.2.len()))
            } else {
                (false, format!("differs in {}", diff.join(", ")))
            }
        }
        (Err(e), _) | (_, Err(e)) => (false, e),
    }
}

fn main() -> ExitCode {
    let mut all = true;
    for id in 1..=CRITERIA {
        let start = Instant::now();
        let r = run_criterion(id, SuiteSize::Full);
        println!("{} [{:.1}s]", r.line(), start.elapsed().as_secs_f64());
        all &= r.pass;
    }
    let start = Instant::now();
    let (pass, detail) = determinism();
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} 9: determinism of verify --suite small: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
    all &= pass;
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
