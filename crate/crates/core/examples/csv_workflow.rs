//! Writes a CSV file and runs the `estimate` command on it, as the
//! command-line tool would. The JSON report goes to stdout.
//!
//!     cargo run --release --example csv_workflow

mod common;

use std::fmt::Write as _;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = common::synthetic(500, 6, 1.0, 21)?;
    let mut text = String::from("treated,outcome");
    for j in 1..=data.n_covariates() {
        write!(text, ",age{j}")?;
    }
    text.push('\n');
    for i in 0..data.n() {
        write!(text, "{},{}", data.treatment()[i], data.outcome()[i].unwrap())?;
        for v in data.covariates().row(i) {
            write!(text, ",{v}")?;
        }
        text.push('\n');
    }
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("study.csv");
    std::fs::write(&path, text)?;

    let code = calibdr::cli::run([
        "calibdr",
        "estimate",
        "--data",
        path.to_str().unwrap(),
        "--t-col",
        "treated",
        "--y-col",
        "outcome",
        "--x-cols",
        "age*",
        "--target",
        "ate",
        "--grid",
        "pow2:11",
    ]);
    std::process::exit(code);
}
