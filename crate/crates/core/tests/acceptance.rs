//! Runs every acceptance criterion and prints one line each.

use reactive_sgd::harness::verify::{run_criterion, CRITERIA};

#[test]
fn acceptance_suite() {
    let mut failed = Vec::new();
    for (id, name) in CRITERIA {
        match run_criterion(id) {
            Ok(outcome) => {
                println!("{outcome}");
                if !outcome.passed {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("[FAIL] {id:>2} {name:<34} error: {e}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
