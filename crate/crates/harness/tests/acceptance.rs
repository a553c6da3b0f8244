//! Runs all acceptance criteria and prints one PASS/FAIL line each.

use shadowlab::acceptance::{run_suite, CRITERIA};

fn main() {
    let ids: Vec<usize> = (1..=CRITERIA).collect();
    let (results, _) = run_suite(&ids, 0x5eed, |r| println!("{}", r.line()));
    let failed: Vec<usize> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!("{}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
