//! Runs the acceptance criteria and prints one PASS/FAIL line for each.
//!
//! `cargo test -p mabuchi --test acceptance` runs all ten; numeric arguments
//! after `--` select a subset, e.g. `-- 1 9 10`.

use std::process::ExitCode;

use mabuchi::suite;

fn main() -> ExitCode {
    let mut ids: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if ids.is_empty() {
        ids = (1..=10).collect();
    }
    if std::env::args().any(|a| a == "--list") {
        for id in ids {
            println!("criterion_{id}: test");
        }
        return ExitCode::SUCCESS;
    }
    let mut failed = Vec::new();
    for id in ids {
        let outcome = suite::criterion(id);
        for c in &outcome.checks {
            println!("    {} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
        }
        println!("{}", outcome.summary());
        if !outcome.pass() {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAIL {failed:?}");
        ExitCode::FAILURE
    }
}
