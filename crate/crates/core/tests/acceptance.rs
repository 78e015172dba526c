//! Runs every acceptance criterion and prints one line per criterion.
//!
//! Set `ISOPLATE_QUICK=1` to run only the criteria that need no time stepping.

use std::process::ExitCode;

use isoplate::suite;

fn main() -> ExitCode {
    let quick = std::env::var_os("ISOPLATE_QUICK").is_some();
    let outcomes = if quick { suite::run_static() } else { suite::run_all() };
    for o in &outcomes {
        println!("{o}");
    }
    let failures = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failures} failed", outcomes.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
