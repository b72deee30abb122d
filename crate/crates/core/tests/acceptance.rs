//! Runs every acceptance criterion at its stated tolerance and prints one
//! line per criterion. Exits non-zero if any criterion fails.

use std::time::Instant;

use fibrig::config::Config;
use fibrig::verify::{criterion, determinism, CRITERIA};

fn main() {
    let cfg = Config::default();
    let mut results = Vec::new();
    let mut failed = 0;
    for &(id, _) in CRITERIA.iter().filter(|c| c.0 != 12) {
        let t = Instant::now();
        let r = criterion(id, &cfg);
        report(&r, t.elapsed().as_secs_f64());
        failed += usize::from(!r.pass);
        results.push(r);
    }
    let t = Instant::now();
    let r = determinism(&cfg, &results);
    report(&r, t.elapsed().as_secs_f64());
    failed += usize::from(!r.pass);
    println!("acceptance: {} passed, {failed} failed", CRITERIA.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn report(r: &fibrig::verify::CriterionResult, secs: f64) {
    let tag = if r.pass { "PASS" } else { "FAIL" };
    println!("{tag} AC{:<2} {} ({secs:.1}s): {}", r.id, r.name, r.detail);
}
