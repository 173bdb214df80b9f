//! The verification gate: one test per criterion, each printing a single
//! pass/fail line. Criteria carry wall-clock budgets, so run this target
//! serially and unmuted:
//!
//!     cargo test -p ppl-cli --test acceptance -- --test-threads=1 --nocapture

use std::sync::{Mutex, MutexGuard, OnceLock};

use ppl_core::accept::{self, CriterionOutcome};

fn lock() -> MutexGuard<'static, ()> {
    static GATE: OnceLock<Mutex<()>> = OnceLock::new();
    GATE.get_or_init(|| Mutex::new(())).lock().unwrap_or_else(|e| e.into_inner())
}

fn check(outcome: CriterionOutcome) {
    println!("{}", outcome.report_line());
    assert!(outcome.passed, "{}", outcome.report_line());
}

#[test]
fn criterion_01_geometric_posterior() {
    let _gate = lock();
    check(accept::geometric_posterior());
}

#[test]
fn criterion_02_conjugate_posterior() {
    let _gate = lock();
    check(accept::conjugate_posterior());
}

#[test]
fn criterion_03_evidence_unbiasedness() {
    let _gate = lock();
    check(accept::evidence_unbiasedness());
}

#[test]
fn criterion_04_linear_gaussian_ssm() {
    let _gate = lock();
    check(accept::linear_gaussian_ssm());
}

#[test]
fn criterion_05_replay_placement_invariance() {
    let _gate = lock();
    check(accept::replay_placement_invariance());
}

#[test]
fn criterion_06_inference_placement_consistency() {
    let _gate = lock();
    check(accept::inference_placement_consistency());
}

#[test]
fn criterion_07_pathological_programs() {
    let _gate = lock();
    check(accept::pathological_programs());
}

#[test]
fn criterion_08_decomposition_lemma() {
    let _gate = lock();
    check(accept::decomposition_lemma());
}

#[test]
fn criterion_09_distribution_layer() {
    let _gate = lock();
    check(accept::distribution_layer());
}

#[test]
fn criterion_10_crbd_strategies() {
    let _gate = lock();
    check(accept::crbd_strategies());
}

#[test]
fn criterion_11_thread_determinism() {
    let _gate = lock();
    check(accept::thread_determinism());
}
