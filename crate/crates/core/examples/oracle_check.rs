//! Brute-force checks of the closed forms on tiny instances.
//!
//! cargo run --release --example oracle_check

use divprem::oracle::run_oracle_checks;

fn main() -> divprem::Result<()> {
    let report = run_oracle_checks(42, 1e-3, 20)?;
    for c in &report.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("{mark} {:<45} {:>12.3e} <= {:.3e}", c.name, c.value, c.tolerance);
    }
    println!("all passed: {}", report.passed);
    Ok(())
}
