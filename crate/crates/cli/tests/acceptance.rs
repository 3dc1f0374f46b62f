//! Release criteria, one test per criterion. Each prints its measured
//! values against the pinned bounds, so `--nocapture` shows the whole
//! scoreboard and a failure carries its numbers in the assert message.
//!
//! The stochastic criteria share one sampled ensemble through a process-wide
//! context seeded at 0; reruns are bit-identical.

use std::sync::OnceLock;

use collapse_cli::checks::{run_criterion, CheckContext};

fn ctx() -> &'static CheckContext {
    static CTX: OnceLock<CheckContext> = OnceLock::new();
    CTX.get_or_init(|| CheckContext::new(0, false, 1.0))
}

fn assert_criterion(id: usize) {
    let report = run_criterion(ctx(), id);
    println!("{}", report.summary_line());
    for line in report.detail_lines() {
        println!("{line}");
    }
    assert!(
        report.passed,
        "criterion {:02} ({}) failed:\n{}",
        report.id,
        report.name,
        report.detail_lines().join("\n")
    );
}

#[test]
fn criterion_01_born_frequencies() {
    assert_criterion(1);
}

#[test]
fn criterion_02_engine_equivalence() {
    assert_criterion(2);
}

#[test]
fn criterion_03_offdiag_decay() {
    assert_criterion(3);
}

#[test]
fn criterion_04_ensemble_indistinguishability() {
    assert_criterion(4);
}

#[test]
fn criterion_05_nonmarkovian_closed_form() {
    assert_criterion(5);
}

#[test]
fn criterion_06_clump_scaling() {
    assert_criterion(6);
}

#[test]
fn criterion_07_extended_object() {
    assert_criterion(7);
}

#[test]
fn criterion_08_energy_gain() {
    assert_criterion(8);
}

#[test]
fn criterion_09_mass_proportional_null() {
    assert_criterion(9);
}

#[test]
fn criterion_10_germanium_bound() {
    assert_criterion(10);
}

#[test]
fn criterion_11_parameter_relations() {
    assert_criterion(11);
}

#[test]
fn criterion_12_relativistic_kernels() {
    assert_criterion(12);
}

#[test]
fn criterion_13_determinism() {
    assert_criterion(13);
}
