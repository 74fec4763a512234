//! One line per acceptance criterion. `cargo test --test acceptance -- 3 7` runs a subset.

use annealed_green::cli::verify::{criterion, VerifyOptions};

fn main() {
    let selected: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<u8> = if selected.is_empty() { (1..=9).collect() } else { selected };
    let opts = VerifyOptions::default();
    let mut failed = Vec::new();
    for id in ids {
        match criterion(id, &opts) {
            Ok(report) => {
                println!("{}", report.line());
                for note in &report.notes {
                    println!("    {note}");
                }
                if !report.status.is_success() {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id}: FAIL (error: {e})");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
