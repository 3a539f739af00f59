//! Run the built-in self-check suites and print one line per suite.
//! Pass suite names as arguments to run a subset.

use pirogov::verify::{run_suite, SUITES};

fn main() -> pirogov::Result<()> {
    let wanted: Vec<String> = std::env::args().skip(1).collect();
    let mut failed = 0;
    for name in SUITES.iter().filter(|s| wanted.is_empty() || wanted.iter().any(|w| w == *s)) {
        let report = run_suite(name, 1)?;
        println!("{}", report.line());
        failed += usize::from(!report.passed);
    }
    std::process::exit(i32::from(failed > 0));
}
