//! Acceptance suite: one PASS/FAIL line per criterion. Set
//! `ACCEPTANCE_ONLY=3,7` to run a subset.

use roughwave::acceptance::{run_criterion, AcceptanceOptions, CRITERIA};

fn main() {
    // Behave like a libtest target under `cargo test <filter>`.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let opts = AcceptanceOptions { enforce_runtime: !cfg!(debug_assertions), ..Default::default() };
    let mut failed = Vec::new();
    for id in 1..=CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let c = run_criterion(id, &opts);
        println!("{}", c.line());
        for n in &c.notes {
            println!("       {n}");
        }
        if !c.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
