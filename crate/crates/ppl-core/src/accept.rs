//! The verification gate: eleven end-to-end criteria, each checking the
//! engine against an independent oracle at a stated tolerance and, where
//! one applies, a wall-clock budget. The `acceptance` integration test
//! and the CLI `accept` subcommand both run `all_criteria` and print one
//! pass/fail line per criterion.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::ast::{self, PlacementSpec, Term, TermRef};
use crate::corpus;
use crate::dist::{self, DistId};
use crate::machine::{self, Cursor, MachineCore, Outcome, RunOpts, StopState};
use crate::oracle;
use crate::rng::{RngStream, StreamKind};
use crate::smc::{run_smc, SmcConfig, SmcResult, Termination};
use crate::value::Value;

/// One criterion's verdict.
#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub wall: Duration,
}

impl CriterionOutcome {
    pub fn report_line(&self) -> String {
        format!(
            "{} {}: {} [{:.1}s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.wall.as_secs_f64(),
        )
    }
}

fn timed(
    name: &'static str,
    budget: Option<Duration>,
    body: impl FnOnce() -> (bool, String),
) -> CriterionOutcome {
    let start = Instant::now();
    let (ok, mut detail) = body();
    let wall = start.elapsed();
    let mut passed = ok;
    if let Some(limit) = budget {
        if wall > limit {
            passed = false;
            detail.push_str(&format!("; exceeded {:.0}s budget", limit.as_secs_f64()));
        }
    }
    CriterionOutcome { name, passed, detail, wall }
}

fn cfg(particles: usize, seed: u64) -> SmcConfig {
    SmcConfig { particles, seed, ..SmcConfig::default() }
}

/// 1. Geometric posterior from the resampling variant, seed-averaged,
/// against the exact mass function.
pub fn geometric_posterior() -> CriterionOutcome {
    timed("geometric-posterior", Some(Duration::from_secs(10)), || {
        let term = corpus::term("geometric_resample").unwrap();
        let seeds = 5;
        let mut averaged = BTreeMap::<u64, f64>::new();
        for seed in 1..=seeds {
            let result = run_smc(&term, &cfg(100_000, seed));
            for (value, weight) in result.real_pmf() {
                *averaged.entry(value.to_bits()).or_insert(0.0) += weight / seeds as f64;
            }
        }
        let tv = 0.5
            * (1..=15u64)
                .map(|k| {
                    let est =
                        averaged.get(&(k as f64).to_bits()).copied().unwrap_or(0.0);
                    (est - oracle::geometric_pmf(k)).abs()
                })
                .sum::<f64>();
        (tv < 0.02, format!("TV {tv:.4} over k in [1,15], J=1e5 x 5 seeds (bound 0.02)"))
    })
}

/// 2. Conjugate Beta-Bernoulli posterior mean and evidence, with the
/// reference constant produced by quadrature before comparison.
pub fn conjugate_posterior() -> CriterionOutcome {
    timed("conjugate-posterior", Some(Duration::from_secs(10)), || {
        let term = corpus::term("beta_obs").unwrap();
        let quad = oracle::single_draw_quadrature(&term, 8192);
        let z_ref = quad.norm_const;
        if (z_ref - 0.1).abs() >= 1e-4 {
            return (false, format!("quadrature Z {z_ref:.6} disagrees with 0.1"));
        }
        let result = run_smc(&term, &cfg(100_000, 42));
        let mean = result.posterior_mean().unwrap_or(f64::NAN);
        let z_hat = result.log_norm_const.exp();
        let mean_err = (mean - 4.0 / 7.0).abs();
        let z_rel = (z_hat - 0.1) / 0.1;
        (
            mean_err < 0.01 && z_rel.abs() < 0.05,
            format!(
                "mean {mean:.4} (|err| {mean_err:.4} < 0.01), Z {z_hat:.4} \
                 (rel {z_rel:+.4}, bound 0.05), quadrature Z {z_ref:.6}"
            ),
        )
    })
}

/// 3. Evidence unbiasedness: the mean of 400 independent estimates sits
/// within three standard errors of the quadrature constant.
pub fn evidence_unbiasedness() -> CriterionOutcome {
    timed("evidence-unbiasedness", Some(Duration::from_secs(60)), || {
        let term = corpus::term("beta_obs").unwrap();
        let estimates: Vec<f64> = (0..400)
            .map(|seed| run_smc(&term, &cfg(1000, seed)).log_norm_const.exp())
            .collect();
        let (mean, se) = oracle::mean_and_se(&estimates);
        let gap = (mean - 0.1).abs();
        (
            gap < 3.0 * se,
            format!("mean Z {mean:.5} over 400 runs at J=1000, |gap| {gap:.5} vs 3se {:.5}", 3.0 * se),
        )
    })
}

/// 4. Gaussian-prior state-space model against the exact Kalman filter,
/// both posterior location and evidence.
pub fn linear_gaussian_ssm() -> CriterionOutcome {
    timed("linear-gaussian-ssm", Some(Duration::from_secs(30)), || {
        let term = corpus::term("seq_gauss").unwrap();
        let observations = corpus::constant_lists(&term)
            .into_iter()
            .find(|l| l.len() == 10)
            .expect("observation list");
        let kalman = oracle::kalman_filter(50.0, 400.0, 2.0, 1.0, 4.0, &observations);
        let result = run_smc(&term, &cfg(100_000, 4));
        let mean = result.posterior_mean().unwrap_or(f64::NAN);
        let sd = kalman.variance.sqrt();
        let mean_gap = (mean - kalman.mean).abs();
        let z_gap = (result.log_norm_const - kalman.log_likelihood).abs();
        (
            mean_gap < 0.05 * sd && z_gap < 0.05,
            format!(
                "mean {mean:.3} vs Kalman {:.3} (gap {mean_gap:.4} < {:.4}), \
                 logZ {:.4} vs {:.4} (gap {z_gap:.4} < 0.05)",
                kalman.mean,
                0.05 * sd,
                result.log_norm_const,
                kalman.log_likelihood,
            ),
        )
    })
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Real(x), Value::Real(y)) => x.to_bits() == y.to_bits(),
        _ => a == b,
    }
}

fn placements_for(term: &TermRef) -> Vec<(&'static str, TermRef)> {
    let mut out = Vec::new();
    let root = PlacementSpec { paths: vec![Vec::new()] };
    out.push(("root", ast::insert_resamples(term, &root).unwrap()));

    let mut after = Vec::new();
    for site in 1..=ast::weight_site_paths(term).len() {
        if let Ok(mut paths) = ast::after_weight_paths(term, &[site]) {
            after.append(&mut paths);
        }
    }
    if !after.is_empty() {
        let spec = PlacementSpec { paths: after };
        out.push(("after-weights", ast::insert_resamples(term, &spec).unwrap()));
    }

    let samples: Vec<_> = ast::enumerate_paths(term)
        .into_iter()
        .filter(|p| matches!(&**ast::node_at(term, p).unwrap(), Term::Sample { .. }))
        .collect();
    if !samples.is_empty() {
        let spec = PlacementSpec { paths: samples };
        out.push(("before-samples", ast::insert_resamples(term, &spec).unwrap()));
    }
    out
}

/// 5. Replay-level placement invariance: inserting resamples anywhere
/// changes neither the result value nor the weight of any trace.
pub fn replay_placement_invariance() -> CriterionOutcome {
    timed("replay-placement-invariance", None, || {
        let mut compared = 0usize;
        let mut mismatches = 0usize;
        for (idx, (name, _)) in corpus::PROGRAMS.iter().enumerate() {
            let term = corpus::term(name).unwrap();
            let budget = if *name == "loop" { 20_000 } else { 1_000_000 };

            let mut rng = RngStream::keyed(5, idx as u64, 0, StreamKind::Mutation);
            let mut traces: Vec<Vec<f64>> = (0..1000)
                .map(|_| {
                    let len = (rng.next_u64() % 24) as usize;
                    (0..len).map(|_| rng.next_unit()).collect()
                })
                .collect();
            for k in 0..100 {
                let recorder = RngStream::keyed(6, idx as u64, k, StreamKind::Mutation);
                let (_, trace) = machine::record_with(&term, recorder, None, budget);
                traces.push(trace);
            }

            let placements = placements_for(&term);
            for trace in &traces {
                let base = machine::replay_with(&term, trace, None, budget);
                for (_, placed) in &placements {
                    let alt = machine::replay_with(placed, trace, None, budget);
                    compared += 1;
                    let equal = base.is_discarded() == alt.is_discarded()
                        && base.log_weight.to_bits() == alt.log_weight.to_bits()
                        && base.consumed == alt.consumed
                        && values_equal(&base.result_value(), &alt.result_value());
                    if !equal {
                        mismatches += 1;
                    }
                }
            }
        }
        (
            mismatches == 0,
            format!(
                "{compared} (trace, placement) comparisons over {} programs, {mismatches} mismatches",
                corpus::PROGRAMS.len(),
            ),
        )
    })
}

/// 6. Inference-level placement consistency on the unrolled sequential
/// model: three placements agree on log Z within combined-error bars.
pub fn inference_placement_consistency() -> CriterionOutcome {
    timed("inference-placement-consistency", Some(Duration::from_secs(120)), || {
        let term = corpus::term("seq_unrolled").unwrap();
        let strategies: [(&str, &[usize]); 3] =
            [("all", &[1, 2, 3]), ("none", &[]), ("first", &[1])];
        let replicates = 50;
        let mut stats = Vec::new();
        for (sidx, (label, sites)) in strategies.iter().enumerate() {
            let paths = ast::after_weight_paths(&term, sites).unwrap();
            let placed = ast::insert_resamples(&term, &PlacementSpec { paths }).unwrap();
            let log_zs: Vec<f64> = (0..replicates)
                .map(|rep| {
                    let seed = 1000 * (sidx as u64 + 1) + rep;
                    run_smc(&placed, &cfg(10_000, seed)).log_norm_const
                })
                .collect();
            stats.push((*label, oracle::mean_and_se(&log_zs)));
        }
        let mut ok = true;
        let mut parts = Vec::new();
        for a in 0..stats.len() {
            for b in a + 1..stats.len() {
                let (la, (ma, sa)) = stats[a];
                let (lb, (mb, sb)) = stats[b];
                let gap = (ma - mb).abs();
                let bound = 3.0 * (sa * sa + sb * sb).sqrt();
                ok &= gap < bound;
                parts.push(format!("{la} vs {lb}: |d| {gap:.4} < {bound:.4}"));
            }
        }
        (ok, format!("logZ over {replicates} reps at J=1e4: {}", parts.join("; ")))
    })
}

/// 7. Pathological programs: divergence is caught by the round cap, the
/// unit program's intermediate constants stay near one, and a completed
/// trace of it has full-replay density exactly zero.
pub fn pathological_programs() -> CriterionOutcome {
    timed("pathological-programs", None, || {
        let loop_term = corpus::term("loop").unwrap();
        let loop_cfg = SmcConfig { max_rounds: 10, ..cfg(100, 1) };
        let loop_result = run_smc(&loop_term, &loop_cfg);
        let loop_ok = loop_result.termination == Termination::RoundCap
            && loop_result.rounds == 10
            && loop_result.posterior.is_empty();

        let unit_term = corpus::term("unit").unwrap();
        let mut z_min: f64 = f64::INFINITY;
        let mut z_max: f64 = f64::NEG_INFINITY;
        let mut unit_ok = true;
        for n in 1..=6 {
            let result = run_smc(&unit_term, &SmcConfig { max_rounds: n, ..cfg(10_000, 2) });
            let z = result.log_norm_const.exp();
            z_min = z_min.min(z);
            z_max = z_max.max(z);
            unit_ok &= (0.8..=1.2).contains(&z) && result.termination == Termination::RoundCap;
        }

        // Every completed run of the unit program ends in `weight 0`, so
        // each recorded full trace must replay to a value whose density
        // is exactly zero even though every resample-limited constant
        // sits near one.
        let mut completed = 0usize;
        let mut zero_ok = true;
        for k in 0..100u64 {
            let recorder = RngStream::keyed(77, 0, k, StreamKind::Mutation);
            let (out, trace) = machine::record_with(&unit_term, recorder, None, 1_000_000);
            if out.is_discarded() {
                zero_ok = false;
                continue;
            }
            completed += 1;
            zero_ok &= out.log_weight == f64::NEG_INFINITY;
            let full = machine::replay(&unit_term, &trace);
            zero_ok &= !full.is_discarded()
                && full.log_weight == f64::NEG_INFINITY
                && values_equal(&full.result_value(), &Value::unit());
        }
        zero_ok &= completed == 100;

        (
            loop_ok && unit_ok && zero_ok,
            format!(
                "loop: {:?} after {} rounds; unit: Z_n in [{z_min:.3}, {z_max:.3}] for n<=6 \
                 (bound [0.8, 1.2]); {completed} completed traces all replay to density 0: {zero_ok}",
                loop_result.termination, loop_result.rounds,
            ),
        )
    })
}

fn decomposition_case(
    term: &TermRef,
    n_max: u64,
    wanted: usize,
    seed: u64,
    budget: u64,
) -> (usize, usize) {
    let mut checked = 0usize;
    let mut failures = 0usize;
    let mut attempt = 0u64;
    while checked < wanted && attempt < 20 * wanted as u64 {
        attempt += 1;
        let n = 1 + (attempt % n_max);
        let rng = RngStream::keyed(seed, n, attempt, StreamKind::Mutation);
        let (out, trace) = machine::record_with(term, rng, Some(n), budget);
        if out.is_discarded() || out.log_weight == f64::NEG_INFINITY {
            continue;
        }
        checked += 1;
        let total = out.log_weight;

        // Find the split point by running the (n-1)-limited machine.
        let mut core = MachineCore::new(term.clone());
        let mut cursor = Cursor::replay(&trace);
        let opts = RunOpts {
            resample_limit: Some(n - 1),
            step_budget: budget,
            kill_zero: false,
        };
        let stop = machine::run(&mut core, &mut cursor, &opts);
        if !matches!(stop, StopState::AtResample) {
            failures += 1;
            continue;
        }
        let cut = cursor.consumed();

        let prefix = machine::replay_limited(term, &trace[..cut], n - 1);
        let Outcome::Paused(paused) = &prefix.outcome else {
            failures += 1;
            continue;
        };
        let suffix = machine::resume_replay(paused, &trace[cut..]);
        let positive = prefix.log_weight > f64::NEG_INFINITY
            && suffix.log_weight > f64::NEG_INFINITY;
        let additive = (total - (prefix.log_weight + suffix.log_weight)).abs() <= 1e-9;

        // Uniqueness: every other cut gives a zero-density prefix.
        let unique = (0..=trace.len())
            .filter(|&i| i != cut)
            .all(|i| machine::replay_limited(term, &trace[..i], n - 1).is_discarded());

        if !(positive && additive && unique && !suffix.is_discarded()) {
            failures += 1;
        }
    }
    (checked, failures)
}

/// 8. Decomposition lemma: a trace density under n resamples factors
/// uniquely into the (n-1)-limited prefix density times the one-segment
/// resumption density.
pub fn decomposition_lemma() -> CriterionOutcome {
    timed("decomposition-lemma", None, || {
        let seq = corpus::term("seq").unwrap();
        let (seq_checked, seq_failures) = decomposition_case(&seq, 3, 500, 81, 1_000_000);

        let crbd = corpus::term("crbd").unwrap();
        let paths = ast::after_weight_paths(&crbd, &[3]).unwrap();
        let placed = ast::insert_resamples(&crbd, &PlacementSpec { paths }).unwrap();
        let (crbd_checked, crbd_failures) = decomposition_case(&placed, 6, 500, 82, 1_000_000);

        let ok = seq_failures == 0
            && crbd_failures == 0
            && seq_checked == 500
            && crbd_checked == 500;
        (
            ok,
            format!(
                "seq: {seq_checked} traces, {seq_failures} failures; \
                 crbd: {crbd_checked} traces, {crbd_failures} failures \
                 (split exact to 1e-9, unique positive cut)"
            ),
        )
    })
}

/// 9. Distribution layer: quantile/CDF roundtrips, KS goodness of fit,
/// and exact Bernoulli threshold behavior.
pub fn distribution_layer() -> CriterionOutcome {
    timed("distribution-layer", None, || {
        use statrs::distribution::ContinuousCDF;
        let normal = statrs::distribution::Normal::new(2.0, 3.0).unwrap();
        let uniform = statrs::distribution::Uniform::new(2.0, 5.0).unwrap();
        let beta22 = statrs::distribution::Beta::new(2.0, 2.0).unwrap();
        let beta43 = statrs::distribution::Beta::new(4.0, 3.0).unwrap();
        let exp = statrs::distribution::Exp::new(1.5).unwrap();
        let cases: Vec<(DistId, Vec<f64>, Box<dyn Fn(f64) -> f64>)> = vec![
            (DistId::Uniform, vec![2.0, 5.0], Box::new(move |x| uniform.cdf(x))),
            (DistId::Normal, vec![2.0, 9.0], Box::new(move |x| normal.cdf(x))),
            (DistId::Beta, vec![2.0, 2.0], Box::new(move |x| beta22.cdf(x))),
            (DistId::Beta, vec![4.0, 3.0], Box::new(move |x| beta43.cdf(x))),
            (DistId::Exponential, vec![1.5], Box::new(move |x| exp.cdf(x))),
        ];

        let mut max_roundtrip: f64 = 0.0;
        let mut max_ks: f64 = 0.0;
        let n = 100_000usize;
        let ks_bound = 1.9495 / (n as f64).sqrt();
        for (case_idx, (id, params, cdf)) in cases.iter().enumerate() {
            for i in 0..=2000 {
                let u = (i as f64 / 2000.0).clamp(1e-6, 1.0 - 1e-6);
                let x = dist::inv_cdf(*id, params, u);
                max_roundtrip = max_roundtrip.max((cdf(x) - u).abs());
            }
            let mut rng = RngStream::keyed(9, case_idx as u64, 0, StreamKind::Mutation);
            let mut sample: Vec<f64> =
                (0..n).map(|_| dist::inv_cdf(*id, params, rng.next_unit())).collect();
            max_ks = max_ks.max(oracle::ks_statistic(&mut sample, cdf));
        }

        let bern = |u: f64| dist::inv_cdf(DistId::Bernoulli, &[0.6], u);
        let bern_ok = bern(0.0) == 1.0
            && bern(0.3) == 1.0
            && bern(0.6) == 1.0
            && bern(0.6_f64.next_up()) == 0.0
            && bern(0.9) == 0.0
            && bern(1.0) == 0.0;

        (
            max_roundtrip < 1e-8 && max_ks < ks_bound && bern_ok,
            format!(
                "roundtrip max |F(Q(u))-u| {max_roundtrip:.2e} < 1e-8; \
                 KS max {max_ks:.5} < {ks_bound:.5} at n=1e5; \
                 Bernoulli threshold exact: {bern_ok}"
            ),
        )
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// 10. Birth-death strategies: three resample placements give mutually
/// consistent evidence, and dropping the per-speciation barrier does not
/// slow the run down.
pub fn crbd_strategies() -> CriterionOutcome {
    timed("crbd-strategies", Some(Duration::from_secs(180)), || {
        let term = corpus::term("crbd").unwrap();
        let strategies: [(&str, &[usize]); 3] =
            [("w123", &[1, 2, 3]), ("w13", &[1, 3]), ("w3", &[3])];
        let replicates = 20;
        let mut stats = Vec::new();
        let mut walls = Vec::new();
        for (sidx, (label, sites)) in strategies.iter().enumerate() {
            let paths = ast::after_weight_paths(&term, sites).unwrap();
            let placed = ast::insert_resamples(&term, &PlacementSpec { paths }).unwrap();
            let mut log_zs = Vec::new();
            let mut times = Vec::new();
            for rep in 0..replicates {
                let seed = 300 * (sidx as u64 + 1) + rep;
                let start = Instant::now();
                let result = run_smc(&placed, &cfg(2000, seed));
                times.push(start.elapsed().as_secs_f64());
                log_zs.push(result.log_norm_const);
            }
            stats.push((*label, oracle::mean_and_se(&log_zs)));
            walls.push(median(&mut times));
        }

        let mut consistent = true;
        let mut parts = Vec::new();
        for a in 0..stats.len() {
            for b in a + 1..stats.len() {
                let (la, (ma, sa)) = stats[a];
                let (lb, (mb, sb)) = stats[b];
                let gap = (ma - mb).abs();
                let bound = 3.0 * (sa * sa + sb * sb).sqrt();
                consistent &= gap < bound;
                parts.push(format!("{la} vs {lb}: |d| {gap:.3} < {bound:.3}"));
            }
        }
        let timing_ok = walls[1] <= walls[0];
        (
            consistent && timing_ok,
            format!(
                "logZ over {replicates} reps at J=2000: {}; median wall w13 {:.3}s <= w123 {:.3}s: {timing_ok}",
                parts.join("; "),
                walls[1],
                walls[0],
            ),
        )
    })
}

fn fingerprint(result: &SmcResult) -> Vec<(u64, u64)> {
    result
        .posterior
        .iter()
        .map(|(v, w)| {
            let bits = match v {
                Value::Real(x) => x.to_bits(),
                _ => 0,
            };
            (bits, w.to_bits())
        })
        .collect()
}

/// 11. Determinism: identical config and seed produce byte-identical
/// posterior and evidence regardless of the thread count.
pub fn thread_determinism() -> CriterionOutcome {
    timed("thread-determinism", None, || {
        let mut ok = true;
        let mut parts = Vec::new();
        for name in ["seq_gauss", "geometric"] {
            let term = corpus::term(name).unwrap();
            let base = cfg(10_000, 7);
            let runs: Vec<SmcResult> = [Some(1), Some(4), None]
                .into_iter()
                .map(|threads| run_smc(&term, &SmcConfig { threads, ..base.clone() }))
                .collect();
            let same = runs.windows(2).all(|w| {
                w[0].log_norm_const.to_bits() == w[1].log_norm_const.to_bits()
                    && fingerprint(&w[0]) == fingerprint(&w[1])
                    && w[0].ess_history == w[1].ess_history
            });
            ok &= same;
            parts.push(format!("{name}: threads 1/4/default byte-identical: {same}"));
        }
        (ok, parts.join("; "))
    })
}

/// Criterion names and runners, in report order.
pub const CRITERIA: &[(&str, fn() -> CriterionOutcome)] = &[
    ("geometric-posterior", geometric_posterior),
    ("conjugate-posterior", conjugate_posterior),
    ("evidence-unbiasedness", evidence_unbiasedness),
    ("linear-gaussian-ssm", linear_gaussian_ssm),
    ("replay-placement-invariance", replay_placement_invariance),
    ("inference-placement-consistency", inference_placement_consistency),
    ("pathological-programs", pathological_programs),
    ("decomposition-lemma", decomposition_lemma),
    ("distribution-layer", distribution_layer),
    ("crbd-strategies", crbd_strategies),
    ("thread-determinism", thread_determinism),
];

/// Run all eleven criteria in order.
pub fn all_criteria() -> Vec<CriterionOutcome> {
    CRITERIA.iter().map(|(_, run)| run()).collect()
}
