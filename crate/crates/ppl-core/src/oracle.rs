//! Independent reference answers for the verification suite.
//!
//! Nothing here touches the particle filter. The oracles work from
//! closed forms (geometric mass, conjugate updates, Kalman recursions)
//! or from deterministic quadrature over the replay density, so engine
//! estimates can be checked against numbers produced by a different
//! route entirely.

use crate::ast::TermRef;
use crate::machine::replay;

/// Mass of the geometric program's return value: 0.6^(k-1) * 0.4.
pub fn geometric_pmf(k: u64) -> f64 {
    assert!(k >= 1);
    0.6_f64.powi(k as i32 - 1) * 0.4
}

/// Composite Simpson rule with `intervals` subdivisions (made even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = if intervals % 2 == 0 { intervals } else { intervals + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let coeff = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += coeff * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Normalizing constant and posterior moments of a one-draw program,
/// computed by integrating its replay density over the unit interval.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSummary {
    pub norm_const: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Quadrature oracle for programs that consume exactly one trace entry
/// and return a real. Integrates the trace density f(<u>) and the
/// weighted return value r(<u>) by Simpson's rule.
pub fn single_draw_quadrature(term: &TermRef, intervals: usize) -> QuadratureSummary {
    let density_at = |u: f64| {
        let out = replay(term, &[u]);
        if out.is_discarded() {
            (0.0, 0.0)
        } else {
            let value = out.result_value().as_real().unwrap_or(0.0);
            (out.log_weight.exp(), value)
        }
    };
    let z = simpson(|u| density_at(u).0, 0.0, 1.0, intervals);
    let m1 = simpson(
        |u| {
            let (f, v) = density_at(u);
            f * v
        },
        0.0,
        1.0,
        intervals,
    ) / z;
    let m2 = simpson(
        |u| {
            let (f, v) = density_at(u);
            f * v * v
        },
        0.0,
        1.0,
        intervals,
    ) / z;
    QuadratureSummary { norm_const: z, mean: m1, variance: m2 - m1 * m1 }
}

/// Filtered posterior of the final latent state, plus the model
/// evidence from the prediction-error decomposition.
#[derive(Clone, Copy, Debug)]
pub struct KalmanSummary {
    pub mean: f64,
    pub variance: f64,
    pub log_likelihood: f64,
}

/// Exact filter for the linear-Gaussian chain
/// x_0 ~ N(prior_mean, prior_var), x_t ~ N(x_{t-1} + drift, trans_var),
/// y_t ~ N(x_t, obs_var), one observation per transition.
pub fn kalman_filter(
    prior_mean: f64,
    prior_var: f64,
    drift: f64,
    trans_var: f64,
    obs_var: f64,
    observations: &[f64],
) -> KalmanSummary {
    let mut mean = prior_mean;
    let mut var = prior_var;
    let mut log_likelihood = 0.0;
    for &y in observations {
        let pred_mean = mean + drift;
        let pred_var = var + trans_var;
        let innov_var = pred_var + obs_var;
        log_likelihood += ln_normal_pdf(y, pred_mean, innov_var);
        let gain = pred_var / innov_var;
        mean = pred_mean + gain * (y - pred_mean);
        var = (1.0 - gain) * pred_var;
    }
    KalmanSummary { mean, variance: var, log_likelihood }
}

/// Log density of N(mean, var) at x.
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

/// Kolmogorov-Smirnov statistic of a sample against a reference CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    d
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Total variation distance between two distributions given as
/// (value, probability) maps keyed by the value's bit pattern.
pub fn total_variation(p: &[(f64, f64)], q: impl Fn(f64) -> f64, support: &[f64]) -> f64 {
    let lookup = |x: f64| {
        p.iter()
            .find(|(v, _)| v.to_bits() == x.to_bits())
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    };
    let mut tv = 0.0;
    let mut covered = 0.0;
    for &x in support {
        let px = lookup(x);
        tv += (px - q(x)).abs();
        covered += px;
    }
    // Estimated mass outside the reference support counts fully.
    tv += 1.0 - covered;
    tv / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use statrs::distribution::ContinuousCDF;

    #[test]
    fn geometric_pmf_matches_closed_form_and_sums_to_one() {
        assert!((geometric_pmf(1) - 0.4).abs() < 1e-15);
        assert!((geometric_pmf(2) - 0.24).abs() < 1e-15);
        assert!((geometric_pmf(3) - 0.144).abs() < 1e-15);
        let total: f64 = (1..200).map(geometric_pmf).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_reproduces_textbook_integrals() {
        assert!((simpson(|x| x * x, 0.0, 1.0, 100) - 1.0 / 3.0).abs() < 1e-12);
        assert!((simpson(f64::sin, 0.0, std::f64::consts::PI, 200) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_on_the_conjugate_model_matches_beta_posterior() {
        // Beta(2,2) prior with observations [1,0,1] has evidence
        // B(4,3)/B(2,2) = 0.1 and posterior Beta(4,3): mean 4/7,
        // variance 12/392.
        let term = corpus::term("beta_obs").unwrap();
        let q = single_draw_quadrature(&term, 4096);
        assert!((q.norm_const - 0.1).abs() < 1e-6, "Z {}", q.norm_const);
        assert!((q.mean - 4.0 / 7.0).abs() < 1e-6, "mean {}", q.mean);
        assert!((q.variance - 12.0 / 392.0).abs() < 1e-6, "var {}", q.variance);
    }

    #[test]
    fn kalman_single_step_matches_hand_computation() {
        let k = kalman_filter(50.0, 400.0, 2.0, 1.0, 4.0, &[52.0]);
        // Prediction N(52, 401); innovation zero.
        assert!((k.mean - 52.0).abs() < 1e-12);
        assert!((k.variance - 4.0 * 401.0 / 405.0).abs() < 1e-12);
        let expect = -0.5 * (2.0 * std::f64::consts::PI * 405.0).ln();
        assert!((k.log_likelihood - expect).abs() < 1e-12);
    }

    #[test]
    fn kalman_likelihood_agrees_with_statrs_normal() {
        let s = statrs::distribution::Normal::new(1.5, 2.0).unwrap();
        let mine = ln_normal_pdf(0.7, 1.5, 4.0);
        let theirs = statrs::distribution::Continuous::ln_pdf(&s, 0.7);
        assert!((mine - theirs).abs() < 1e-12);
    }

    #[test]
    fn ks_statistic_is_small_for_a_stratified_uniform_sample() {
        let n = 10_000;
        let mut xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&mut xs, |x| x);
        assert!(d < 1e-3, "d {d}");
        let u = statrs::distribution::Uniform::new(0.0, 1.0).unwrap();
        let mut ys: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d2 = ks_statistic(&mut ys, |x| u.cdf(x));
        assert!(d2 < 1e-3);
    }

    #[test]
    fn mean_and_se_match_direct_formulas() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_and_se(&xs);
        assert!((m - 2.5).abs() < 1e-15);
        // Sample variance 5/3, se = sqrt(5/12).
        assert!((se - (5.0_f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn total_variation_identical_distributions_is_zero() {
        let support: Vec<f64> = (1..30).map(|k| k as f64).collect();
        let p: Vec<(f64, f64)> =
            support.iter().map(|&k| (k, geometric_pmf(k as u64))).collect();
        let tv = total_variation(&p, |k| geometric_pmf(k as u64), &support);
        // Only the tail mass beyond k=29 remains.
        assert!(tv < 1e-6, "tv {tv}");
    }
}
