//! One pass/fail line per acceptance criterion. Tolerances and time limits
//! live in `pirogov::verify`; this target only runs and reports them.

use std::process::ExitCode;

use pirogov::verify::{run_suite, SUITES};

fn main() -> ExitCode {
    let mut failed = 0;
    for name in SUITES {
        match run_suite(name, 1) {
            Ok(report) => {
                println!("{}", report.line());
                failed += usize::from(!report.passed);
            }
            Err(e) => {
                println!("[FAIL] {name}: error: {e}");
                failed += 1;
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", SUITES.len() - failed, SUITES.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
