//! Bootstrap particle filter over resample segments.
//!
//! A program's `resample` barriers cut every run into segments. The
//! filter runs a population of machines segment by segment:
//!
//! 1. *Init*: run every particle from the start with resample limit 0,
//!    so each pauses at its first barrier (or finishes, or dies).
//! 2. *Correction*: the weight of the segment each particle just ran
//!    contributes one factor to the normalizing-constant estimate,
//!    `log Z += logsumexp(lw) - log J`.
//! 3. *Termination*: stop once no particle is paused, or at the round
//!    cap, or when all weight mass is gone.
//! 4. *Selection*: draw J particles proportional to the segment weights;
//!    afterwards all weights are conceptually 1. Finished particles
//!    take part (they persist with weight 1); dead ones have weight 0
//!    and are never chosen.
//! 5. *Mutation*: resume each selected paused particle with resample
//!    limit 1, so it crosses its barrier and runs one more segment.
//!
//! Randomness is keyed by `(seed, round, particle index, purpose)`, and
//! correction/selection are sequential scans in particle-index order, so
//! results are bit-identical no matter how many threads run the mutation
//! step. The `parallel` feature (default on) runs mutations through
//! rayon; without it the engine is single-threaded.

use crate::ast::TermRef;
use crate::machine::{
    run_segment, Cursor, MachineCore, RunOpts, StopState, StuckReason, DEFAULT_STEP_BUDGET,
};
use crate::rng::{RngStream, StreamKind};
use crate::value::Value;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How selection draws the next population.
#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum Resampling {
    /// J independent categorical draws.
    Multinomial,
    /// One uniform offset, J evenly spaced positions.
    Systematic,
}

/// Engine configuration.
#[derive(Clone, Debug)]
pub struct SmcConfig {
    /// Population size J.
    pub particles: usize,
    pub seed: u64,
    pub resampling: Resampling,
    /// Mutation rounds to run before giving up on unfinished particles.
    pub max_rounds: u64,
    /// Machine steps allowed per segment.
    pub step_budget: u64,
    /// Kill a particle the moment it hits weight zero instead of letting
    /// it run to completion with zero weight. Changes no estimate, only
    /// wasted work; disable to observe exact semantics.
    pub kill_zero_weight: bool,
    /// Mutation thread count: `None` uses the default pool, `Some(1)`
    /// stays on the calling thread. Ignored without the `parallel`
    /// feature.
    pub threads: Option<usize>,
}

impl Default for SmcConfig {
    fn default() -> SmcConfig {
        SmcConfig {
            particles: 1000,
            seed: 0,
            resampling: Resampling::Multinomial,
            max_rounds: 10_000,
            step_budget: DEFAULT_STEP_BUDGET,
            kill_zero_weight: true,
            threads: None,
        }
    }
}

/// Where a particle stands after its latest segment.
#[derive(Clone, Debug)]
pub enum ParticleState {
    /// Waiting at a resample barrier.
    Paused(Box<MachineCore>),
    /// Terminated in a value.
    Finished(Value),
    /// Discarded; can never carry weight again.
    Dead(StuckReason),
}

/// One particle: machine state, the full trace drawn so far, and the
/// log weight of the segment it ran in the current round.
#[derive(Clone, Debug)]
pub struct Particle {
    pub state: ParticleState,
    pub trace: Vec<f64>,
    pub log_weight: f64,
}

/// Why the filter stopped.
#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum Termination {
    /// Every particle finished (at least one with positive weight).
    AllValues,
    /// No particle can continue with positive weight.
    AllDead,
    /// The round cap was reached with particles still paused.
    RoundCap,
}

/// Filter output.
#[derive(Clone, Debug)]
pub struct SmcResult {
    /// Finished values with positive normalized weights (summing to 1).
    /// Empty when the run collapsed or hit the round cap unfinished.
    pub posterior: Vec<(Value, f64)>,
    /// Log of the normalizing-constant estimate.
    pub log_norm_const: f64,
    /// Mutation rounds performed (init not counted).
    pub rounds: u64,
    /// Effective sample size at each correction, starting with init.
    pub ess_history: Vec<f64>,
    /// Particles dead at each correction.
    pub dead_history: Vec<usize>,
    /// Dead particles in the final population.
    pub dead_count: usize,
    pub termination: Termination,
    /// The final population, traces included, for diagnostics.
    pub final_particles: Vec<Particle>,
}

impl SmcResult {
    /// Posterior expectation of the identity, for real-valued models.
    pub fn posterior_mean(&self) -> Option<f64> {
        if self.posterior.is_empty() {
            return None;
        }
        let mut mean = 0.0;
        for (value, weight) in &self.posterior {
            mean += value.as_real()? * weight;
        }
        Some(mean)
    }

    /// Posterior grouped by identical real value (exact bit equality),
    /// sorted ascending. Panics on non-real posteriors.
    pub fn real_pmf(&self) -> Vec<(f64, f64)> {
        let mut acc = std::collections::BTreeMap::<u64, f64>::new();
        for (value, weight) in &self.posterior {
            let x = value.as_real().expect("real-valued posterior");
            *acc.entry(x.to_bits()).or_insert(0.0) += weight;
        }
        acc.into_iter().map(|(bits, w)| (f64::from_bits(bits), w)).collect()
    }
}

enum Pool {
    Seq,
    #[cfg(feature = "parallel")]
    Default,
    #[cfg(feature = "parallel")]
    Sized(rayon::ThreadPool),
}

impl Pool {
    fn new(threads: Option<usize>) -> Pool {
        #[cfg(feature = "parallel")]
        {
            match threads {
                Some(1) => Pool::Seq,
                None => Pool::Default,
                Some(n) => Pool::Sized(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .expect("building worker pool"),
                ),
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Pool::Seq
        }
    }

    fn run_round(&self, particles: &mut [Particle], job: impl Fn(usize, &mut Particle) + Sync) {
        match self {
            Pool::Seq => {
                particles.iter_mut().enumerate().for_each(|(i, p)| job(i, p));
            }
            #[cfg(feature = "parallel")]
            Pool::Default => {
                particles.par_iter_mut().enumerate().for_each(|(i, p)| job(i, p));
            }
            #[cfg(feature = "parallel")]
            Pool::Sized(pool) => pool.install(|| {
                particles.par_iter_mut().enumerate().for_each(|(i, p)| job(i, p));
            }),
        }
    }
}

/// Run the particle filter.
pub fn run_smc(term: &TermRef, config: &SmcConfig) -> SmcResult {
    assert!(config.particles > 0, "particle count must be positive");
    let j = config.particles;
    let pool = Pool::new(config.threads);

    let mut particles: Vec<Particle> = (0..j)
        .map(|_| Particle {
            state: ParticleState::Paused(Box::new(MachineCore::new(term.clone()))),
            trace: Vec::new(),
            log_weight: 0.0,
        })
        .collect();

    // Init: segment from the program start, crossing no barrier.
    run_mutation_round(&pool, &mut particles, config, 0, Some(0));

    let mut log_norm_const = 0.0;
    let mut rounds: u64 = 0;
    let mut ess_history = Vec::new();
    let mut dead_history = Vec::new();

    let termination = loop {
        // Correction.
        let lws: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
        let mass = logsumexp(&lws);
        log_norm_const += mass - (j as f64).ln();
        ess_history.push(effective_sample_size(&lws));
        dead_history.push(
            particles.iter().filter(|p| matches!(p.state, ParticleState::Dead(_))).count(),
        );

        // Termination.
        let all_terminal =
            particles.iter().all(|p| !matches!(p.state, ParticleState::Paused(_)));
        if all_terminal {
            let any_live = particles.iter().any(|p| {
                matches!(p.state, ParticleState::Finished(_))
                    && p.log_weight > f64::NEG_INFINITY
            });
            break if any_live { Termination::AllValues } else { Termination::AllDead };
        }
        if mass == f64::NEG_INFINITY {
            break Termination::AllDead;
        }
        if rounds >= config.max_rounds {
            break Termination::RoundCap;
        }

        // Selection, then mutation under the next round's keys.
        let next_round = rounds + 1;
        particles = select(&particles, config, next_round);
        run_mutation_round(&pool, &mut particles, config, next_round, Some(1));
        rounds = next_round;
    };

    let dead_count =
        particles.iter().filter(|p| matches!(p.state, ParticleState::Dead(_))).count();
    let posterior = normalized_posterior(&particles);

    SmcResult {
        posterior,
        log_norm_const,
        rounds,
        ess_history,
        dead_history,
        dead_count,
        termination,
        final_particles: particles,
    }
}

/// Run one segment for every paused particle. Finished particles persist
/// and weigh 1 in later corrections; dead ones stay dead.
fn run_mutation_round(
    pool: &Pool,
    particles: &mut [Particle],
    config: &SmcConfig,
    round: u64,
    resample_limit: Option<u64>,
) {
    let opts = RunOpts {
        resample_limit,
        step_budget: config.step_budget,
        kill_zero: config.kill_zero_weight,
    };
    let seed = config.seed;
    pool.run_round(particles, move |index, particle| {
        match &mut particle.state {
            ParticleState::Paused(core) => {
                let rng = RngStream::keyed(seed, round, index as u64, StreamKind::Mutation);
                let mut cursor = Cursor::record(rng);
                let stop = run_segment(core, &mut cursor, &opts);
                let segment_lw = core.log_weight;
                particle.trace.extend(cursor.into_draws());
                match stop {
                    StopState::Value(v) => {
                        particle.log_weight = segment_lw;
                        particle.state = ParticleState::Finished(v);
                    }
                    StopState::AtResample => particle.log_weight = segment_lw,
                    StopState::Stuck(reason) => {
                        particle.log_weight = f64::NEG_INFINITY;
                        particle.state = ParticleState::Dead(reason);
                    }
                }
            }
            ParticleState::Finished(_) => particle.log_weight = 0.0,
            ParticleState::Dead(_) => particle.log_weight = f64::NEG_INFINITY,
        }
    });
}

/// Draw the next population proportional to current segment weights.
fn select(particles: &[Particle], config: &SmcConfig, round: u64) -> Vec<Particle> {
    let j = particles.len();
    let max_lw = particles
        .iter()
        .map(|p| p.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max_lw > f64::NEG_INFINITY, "selection from zero-mass population");

    let mut cumulative = Vec::with_capacity(j);
    let mut total = 0.0;
    for p in particles {
        total += (p.log_weight - max_lw).exp();
        cumulative.push(total);
    }

    let mut rng = RngStream::keyed(config.seed, round, 0, StreamKind::Selection);
    let pick = |x: f64| -> usize {
        cumulative.partition_point(|&c| c <= x).min(j - 1)
    };
    match config.resampling {
        Resampling::Multinomial => (0..j)
            .map(|_| particles[pick(rng.next_unit() * total)].clone())
            .collect(),
        Resampling::Systematic => {
            let offset = rng.next_unit();
            (0..j)
                .map(|k| particles[pick((k as f64 + offset) / j as f64 * total)].clone())
                .collect()
        }
    }
}

/// Finished particles with positive weight, normalized to sum to 1.
fn normalized_posterior(particles: &[Particle]) -> Vec<(Value, f64)> {
    let finished: Vec<(&Value, f64)> = particles
        .iter()
        .filter_map(|p| match &p.state {
            ParticleState::Finished(v) if p.log_weight > f64::NEG_INFINITY => {
                Some((v, p.log_weight))
            }
            _ => None,
        })
        .collect();
    if finished.is_empty() {
        return Vec::new();
    }
    let max_lw = finished.iter().map(|(_, lw)| *lw).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = finished.iter().map(|(_, lw)| (lw - max_lw).exp()).collect();
    let total: f64 = weights.iter().sum();
    finished
        .iter()
        .zip(&weights)
        .map(|((v, _), w)| ((*v).clone(), w / total))
        .collect()
}

/// log(sum(exp(x))) without overflow; minus infinity for all-zero mass.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// (sum w)^2 / sum(w^2) over linear weights; 0 for an all-dead round.
pub fn effective_sample_size(lws: &[f64]) -> f64 {
    let m = lws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for lw in lws {
        let w = (lw - m).exp();
        sum += w;
        sum_sq += w * w;
    }
    sum * sum / sum_sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn config(particles: usize, seed: u64) -> SmcConfig {
        SmcConfig { particles, seed, ..SmcConfig::default() }
    }

    fn result_fingerprint(r: &SmcResult) -> Vec<(u64, u64)> {
        r.posterior
            .iter()
            .map(|(v, w)| (v.as_real().unwrap().to_bits(), w.to_bits()))
            .collect()
    }

    #[test]
    fn weightless_programs_have_unit_normalizing_constant() {
        // No weight statements anywhere: every segment weight is exactly
        // 1, so log Z must be exactly 0, resamples or not.
        for name in ["beta", "geometric", "geometric_resample"] {
            let term = corpus::term(name).unwrap();
            let result = run_smc(&term, &config(500, 3));
            assert_eq!(result.log_norm_const, 0.0, "{name}");
            assert_eq!(result.termination, Termination::AllValues, "{name}");
            assert_eq!(result.dead_count, 0, "{name}");
            let total: f64 = result.posterior.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12, "{name}");
        }
    }

    #[test]
    fn beta_posterior_mean_matches_prior_mean() {
        let term = corpus::term("beta").unwrap();
        let result = run_smc(&term, &config(20_000, 1));
        let mean = result.posterior_mean().unwrap();
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert_eq!(result.rounds, 0);
    }

    #[test]
    fn geometric_resample_rounds_follow_the_recursion_depth() {
        let term = corpus::term("geometric_resample").unwrap();
        let result = run_smc(&term, &config(2_000, 5));
        // One resample per loop iteration; some particle recurses beyond
        // the mean depth of 2.5.
        assert!(result.rounds >= 3, "rounds {}", result.rounds);
        let mean = result.posterior_mean().unwrap();
        assert!((mean - 2.5).abs() < 0.15, "mean {mean}");
    }

    #[test]
    fn beta_obs_recovers_conjugate_posterior_and_evidence() {
        let term = corpus::term("beta_obs").unwrap();
        let result = run_smc(&term, &config(20_000, 2));
        let mean = result.posterior_mean().unwrap();
        assert!((mean - 4.0 / 7.0).abs() < 0.01, "mean {mean}");
        let z = result.log_norm_const.exp();
        assert!((z - 0.1).abs() < 0.005, "Z {z}");
        assert_eq!(result.termination, Termination::AllValues);
    }

    #[test]
    fn systematic_resampling_agrees_with_multinomial() {
        let term = corpus::term("seq").unwrap();
        let base = config(5_000, 7);
        let systematic =
            SmcConfig { resampling: Resampling::Systematic, ..base.clone() };
        let a = run_smc(&term, &base);
        let b = run_smc(&term, &systematic);
        let (ma, mb) = (a.posterior_mean().unwrap(), b.posterior_mean().unwrap());
        assert!((ma - mb).abs() < 0.5, "means {ma} vs {mb}");
        assert!((a.log_norm_const - b.log_norm_const).abs() < 0.3);
    }

    #[test]
    fn loop_program_hits_the_round_cap_with_unit_constant() {
        let term = corpus::term("loop").unwrap();
        let cfg = SmcConfig { max_rounds: 10, ..config(100, 9) };
        let result = run_smc(&term, &cfg);
        assert_eq!(result.termination, Termination::RoundCap);
        assert_eq!(result.rounds, 10);
        assert!(result.posterior.is_empty());
        assert_eq!(result.log_norm_const, 0.0);
        assert!(result.ess_history.iter().all(|&e| (e - 100.0).abs() < 1e-9));
    }

    #[test]
    fn unit_program_keeps_normalizing_constant_near_one() {
        let term = corpus::term("unit").unwrap();
        for n in 1..=4 {
            let cfg = SmcConfig { max_rounds: n, ..config(4_000, 11) };
            let result = run_smc(&term, &cfg);
            let z = result.log_norm_const.exp();
            assert!((z - 1.0).abs() < 0.25, "n={n}: Z {z}");
        }
    }

    #[test]
    fn zero_weight_programs_collapse_honestly() {
        let term = crate::desugar::compile("weight 0; 1").unwrap();
        let result = run_smc(&term, &config(50, 1));
        assert_eq!(result.termination, Termination::AllDead);
        assert!(result.posterior.is_empty());
        assert_eq!(result.log_norm_const, f64::NEG_INFINITY);
        assert_eq!(result.dead_count, 50);

        // Same program with kill-zero disabled: runs finish, but with
        // zero weight, so the posterior is still empty.
        let cfg = SmcConfig { kill_zero_weight: false, ..config(50, 1) };
        let result = run_smc(&term, &cfg);
        assert!(result.posterior.is_empty());
        assert_eq!(result.log_norm_const, f64::NEG_INFINITY);
    }

    #[test]
    fn runs_are_deterministic_for_a_fixed_seed() {
        let term = corpus::term("seq").unwrap();
        let a = run_smc(&term, &config(300, 13));
        let b = run_smc(&term, &config(300, 13));
        assert_eq!(a.log_norm_const.to_bits(), b.log_norm_const.to_bits());
        assert_eq!(result_fingerprint(&a), result_fingerprint(&b));
        let c = run_smc(&term, &config(300, 14));
        assert_ne!(result_fingerprint(&a), result_fingerprint(&c));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn results_do_not_depend_on_thread_count() {
        let term = corpus::term("seq").unwrap();
        let base = config(300, 21);
        let one = SmcConfig { threads: Some(1), ..base.clone() };
        let four = SmcConfig { threads: Some(4), ..base.clone() };
        let default = SmcConfig { threads: None, ..base };
        let a = run_smc(&term, &one);
        let b = run_smc(&term, &four);
        let c = run_smc(&term, &default);
        assert_eq!(a.log_norm_const.to_bits(), b.log_norm_const.to_bits());
        assert_eq!(a.log_norm_const.to_bits(), c.log_norm_const.to_bits());
        assert_eq!(result_fingerprint(&a), result_fingerprint(&b));
        assert_eq!(result_fingerprint(&a), result_fingerprint(&c));
        assert_eq!(a.ess_history, b.ess_history);
    }

    #[test]
    fn every_particle_trace_replays_to_its_own_outcome() {
        // The population stays consistent with pure replay semantics:
        // each finished particle's accumulated trace, replayed without a
        // resample limit, reaches the same value with the trace consumed
        // exactly and positive density.
        let term = corpus::term("seq").unwrap();
        let result = run_smc(&term, &config(200, 17));
        assert_eq!(result.termination, Termination::AllValues);
        for particle in &result.final_particles {
            let ParticleState::Finished(value) = &particle.state else {
                panic!("expected a finished particle");
            };
            let replayed = crate::machine::replay(&term, &particle.trace);
            assert!(!replayed.is_discarded());
            let again = replayed.result_value();
            assert_eq!(again.as_real().unwrap().to_bits(), value.as_real().unwrap().to_bits());
            assert!(replayed.log_weight > f64::NEG_INFINITY);
        }
    }

    #[test]
    fn paused_traces_stay_feasible_at_the_round_cap() {
        let term = corpus::term("unit").unwrap();
        let cfg = SmcConfig { max_rounds: 3, ..config(200, 19) };
        let result = run_smc(&term, &cfg);
        assert_eq!(result.termination, Termination::RoundCap);
        for particle in &result.final_particles {
            if matches!(particle.state, ParticleState::Paused(_)) {
                assert!(crate::machine::feasible_limited(&term, &particle.trace, result.rounds));
            }
        }
    }
}
