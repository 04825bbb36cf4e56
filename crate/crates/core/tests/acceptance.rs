//! Acceptance suite: one test per acceptance criterion, each printing its
//! pass/fail line(s). Run with `cargo test --test acceptance -- --nocapture`
//! to see the full matrix.

use std::time::Instant;

use tcpshare::verify::{self, CheckResult};

fn report(results: &[CheckResult]) {
    for r in results {
        println!("{}", r.line());
    }
    assert!(results.iter().all(|r| r.pass), "{:#?}", results);
}

#[test]
fn c01_loss_interval() {
    let start = Instant::now();
    let results = verify::check_loss_interval();
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "[{}] c01 runtime {elapsed:.1}s (< 30s)",
        if elapsed < 30.0 { "PASS" } else { "FAIL" }
    );
    assert!(elapsed < 30.0, "600 simulated seconds took {elapsed}s");
    report(&results);
}

#[test]
fn c02_buffer_bound_best() {
    let start = Instant::now();
    let results = verify::check_buffer_bound_best();
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "[{}] c02 runtime {elapsed:.1}s (< 60s)",
        if elapsed < 60.0 { "PASS" } else { "FAIL" }
    );
    assert!(elapsed < 60.0, "both runs took {elapsed}s");
    report(&results);
}

#[test]
fn c03_global_synchronization_bound() {
    report(&verify::check_buffer_bound_sync());
}

#[test]
fn c04_rtt_growth() {
    report(&verify::check_rtt_growth());
}

#[test]
fn c05_convergence_trajectory() {
    report(&verify::check_convergence());
}

#[test]
fn c06_step_formulas() {
    report(&verify::check_rate_steps());
}

#[test]
fn c07_markov_chain() {
    let start = Instant::now();
    let results = verify::check_markov_chain();
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "[{}] c07 runtime {elapsed:.1}s (< 120s)",
        if elapsed < 120.0 { "PASS" } else { "FAIL" }
    );
    assert!(elapsed < 120.0, "chain checks took {elapsed}s");
    report(&results);
}

#[test]
fn c08_distribution_shape() {
    report(&verify::check_distribution_shape());
}

#[test]
fn c09_macroscopic_consistency() {
    report(&verify::check_throughput_inversion());
}

#[test]
fn c10_resampler_dealiasing() {
    report(&verify::check_resampler_dealiasing());
}

#[test]
fn c11_step_absorption() {
    report(&verify::check_step_absorption());
}

#[test]
fn c12_determinism() {
    report(&verify::check_determinism());
}
