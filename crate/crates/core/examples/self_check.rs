//! Runs the built-in verification battery: finite-difference gradients,
//! KKT certificates and the simulation constants.
//!
//!     cargo run --release --example self_check

use calibdr::selfcheck::{run_checks, CheckOptions};

fn main() {
    let report = run_checks(CheckOptions { quick: true, ..Default::default() });
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    std::process::exit(if report.pass { 0 } else { 1 });
}
