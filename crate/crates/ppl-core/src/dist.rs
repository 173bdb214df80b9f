//! Built-in probability distributions.
//!
//! Sampling is quantile-based: a distribution is drawn by pushing a
//! uniform [0,1] random number through [`inv_cdf`]. This keeps every
//! random choice of a program identified with one entry of its trace.
//! Densities back the `f_D` scoring primitives.

use thiserror::Error;

/// Identifier of a built-in distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistId {
    Bernoulli,
    Uniform,
    Normal,
    Exponential,
    Beta,
}

impl DistId {
    /// Number of parameters the distribution takes.
    pub fn arity(self) -> usize {
        match self {
            DistId::Bernoulli | DistId::Exponential => 1,
            DistId::Uniform | DistId::Normal | DistId::Beta => 2,
        }
    }

    /// Canonical name used in concrete syntax (`sample_<name>`, `f_<name>`).
    pub fn name(self) -> &'static str {
        match self {
            DistId::Bernoulli => "Bern",
            DistId::Uniform => "U",
            DistId::Normal => "N",
            DistId::Exponential => "Exp",
            DistId::Beta => "Beta",
        }
    }

    /// Resolve a surface-syntax distribution name, case-insensitively.
    pub fn resolve(name: &str) -> Option<DistId> {
        match name.to_ascii_lowercase().as_str() {
            "bern" | "bernoulli" => Some(DistId::Bernoulli),
            "u" | "uniform" => Some(DistId::Uniform),
            "n" | "normal" | "gaussian" => Some(DistId::Normal),
            "exp" | "exponential" => Some(DistId::Exponential),
            "beta" => Some(DistId::Beta),
            _ => None,
        }
    }
}

/// Parameter or argument rejected by a distribution.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum DistError {
    #[error("invalid parameters for {dist}: {reason}")]
    InvalidParams { dist: &'static str, reason: &'static str },
}

/// Check distribution parameters. Invalid parameters at sample or score
/// time make the machine stuck, they never panic.
pub fn validate_params(dist: DistId, params: &[f64]) -> Result<(), DistError> {
    debug_assert_eq!(params.len(), dist.arity());
    let fail = |reason| Err(DistError::InvalidParams { dist: dist.name(), reason });
    if params.iter().any(|p| !p.is_finite()) {
        return fail("parameters must be finite");
    }
    match dist {
        DistId::Bernoulli => {
            let p = params[0];
            if !(0.0..=1.0).contains(&p) {
                return fail("success probability must lie in [0,1]");
            }
        }
        DistId::Uniform => {
            if params[0] >= params[1] {
                return fail("lower bound must be strictly below upper bound");
            }
        }
        DistId::Normal => {
            if params[1] <= 0.0 {
                return fail("variance must be positive");
            }
        }
        DistId::Exponential => {
            if params[0] <= 0.0 {
                return fail("rate must be positive");
            }
        }
        DistId::Beta => {
            if params[0] <= 0.0 || params[1] <= 0.0 {
                return fail("both shape parameters must be positive");
            }
        }
    }
    Ok(())
}

/// Widest finite standard-normal quantile we report; u = 0 and u = 1 clamp
/// to this many standard deviations instead of the infinite essential
/// bounds.
const NORMAL_CLAMP: f64 = 39.0;

/// Generalized inverse CDF. `u` must lie in [0,1] and the parameters must
/// already be validated. Results at u = 0 and u = 1 are the essential
/// infimum and supremum clamped to finite representables, and the map is
/// monotone nondecreasing in `u`.
///
/// For Bernoulli the convention is `u <= p` maps to 1, so the success
/// region sits at the bottom of the unit interval.
pub fn inv_cdf(dist: DistId, params: &[f64], u: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&u));
    match dist {
        DistId::Bernoulli => {
            if u <= params[0] {
                1.0
            } else {
                0.0
            }
        }
        DistId::Uniform => {
            let (a, b) = (params[0], params[1]);
            a + u * (b - a)
        }
        DistId::Normal => {
            let (mean, var) = (params[0], params[1]);
            mean + var.sqrt() * std_normal_quantile(u)
        }
        DistId::Exponential => {
            let rate = params[0];
            let mut v = 1.0 - u;
            if v <= 0.0 {
                // Keep u = 1 finite and above the value at the largest
                // representable u below 1 (where 1 - u is 2^-53).
                v = 2f64.powi(-54);
            }
            -v.ln() / rate
        }
        DistId::Beta => beta_quantile(params[0], params[1], u),
    }
}

/// Density (mass for Bernoulli) of the distribution at `x`.
pub fn density(dist: DistId, params: &[f64], x: f64) -> f64 {
    match dist {
        DistId::Bernoulli => {
            let p = params[0];
            if x == 1.0 {
                p
            } else if x == 0.0 {
                1.0 - p
            } else {
                0.0
            }
        }
        DistId::Uniform => {
            let (a, b) = (params[0], params[1]);
            if (a..=b).contains(&x) {
                1.0 / (b - a)
            } else {
                0.0
            }
        }
        DistId::Normal => {
            let (mean, var) = (params[0], params[1]);
            let d = x - mean;
            (-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        }
        DistId::Exponential => {
            let rate = params[0];
            if x >= 0.0 {
                rate * (-rate * x).exp()
            } else {
                0.0
            }
        }
        DistId::Beta => {
            let (a, b) = (params[0], params[1]);
            if !(0.0..=1.0).contains(&x) {
                0.0
            } else if x == 0.0 {
                // The formula below would evaluate 0 * ln 0; handle the
                // boundary orders explicitly instead.
                if a < 1.0 {
                    f64::INFINITY
                } else if a == 1.0 {
                    (-ln_beta(a, b)).exp()
                } else {
                    0.0
                }
            } else if x == 1.0 {
                if b < 1.0 {
                    f64::INFINITY
                } else if b == 1.0 {
                    (-ln_beta(a, b)).exp()
                } else {
                    0.0
                }
            } else {
                ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp()
            }
        }
    }
}

/// Standard normal quantile, Wichura's AS 241 (PPND16) rational
/// approximations, absolute error well below 1e-9 over (0,1).
pub fn std_normal_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return -NORMAL_CLAMP;
    }
    if u >= 1.0 {
        return NORMAL_CLAMP;
    }
    let q = u - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        const A: [f64; 8] = [
            3.387_132_872_796_366_608,
            1.331_416_678_917_843_774_5e2,
            1.971_590_950_306_551_442_7e3,
            1.373_169_376_550_946_112_5e4,
            4.592_195_393_154_987_145_7e4,
            6.726_577_092_700_870_085_3e4,
            3.343_057_558_358_812_810_5e4,
            2.509_080_928_730_122_672_7e3,
        ];
        const B: [f64; 7] = [
            4.231_333_070_160_091_125_2e1,
            6.871_870_074_920_579_083e2,
            5.394_196_021_424_751_107_7e3,
            2.121_379_430_158_659_586_7e4,
            3.930_789_580_009_271_061e4,
            2.872_908_573_572_194_267_4e4,
            5.226_495_278_852_854_561e3,
        ];
        let num = poly(&A, r);
        let den = poly(&B, r) * r + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { u } else { 1.0 - u };
    r = (-r.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        const C: [f64; 8] = [
            1.423_437_110_749_683_577_3,
            4.630_337_846_156_545_295_9,
            5.769_497_221_460_691_405_5,
            3.647_848_324_763_204_605,
            1.270_458_252_452_368_382_6,
            2.417_807_251_774_506_117_7e-1,
            2.272_384_498_926_918_458_3e-2,
            7.745_450_142_783_414_076_4e-4,
        ];
        const D: [f64; 7] = [
            2.053_191_626_637_758_821_9,
            1.676_384_830_183_803_849_4,
            6.897_673_349_851_000_045_5e-1,
            1.481_039_764_274_800_745_9e-1,
            1.519_866_656_361_645_719_7e-2,
            5.475_938_084_995_344_946e-4,
            1.050_750_071_644_416_843_2e-9,
        ];
        poly(&C, r) / (poly(&D, r) * r + 1.0)
    } else {
        let r = r - 5.0;
        const E: [f64; 8] = [
            6.657_904_643_501_103_777_2,
            5.463_784_911_164_114_369_9,
            1.784_826_539_917_291_335_8,
            2.965_605_718_285_048_912_3e-1,
            2.653_218_952_657_612_309_3e-2,
            1.242_660_947_388_078_438_6e-3,
            2.711_555_568_743_487_578_15e-5,
            2.010_334_399_292_288_132_65e-7,
        ];
        const F: [f64; 7] = [
            5.998_322_065_558_879_376_9e-1,
            1.369_298_809_227_358_053_1e-1,
            1.487_536_129_085_061_485_25e-2,
            7.868_691_311_456_132_591e-4,
            1.846_318_317_510_054_681_8e-5,
            1.421_511_758_316_445_888_7e-7,
            2.044_263_103_389_939_785_64e-15,
        ];
        poly(&E, r) / (poly(&F, r) * r + 1.0)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// Horner evaluation with coefficients ordered from degree zero upward.
fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Natural log of the gamma function, Lanczos approximation (g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Natural log of the beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function I_x(a, b) by Lentz's continued
/// fraction.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cont_frac(a, b, x) / a
    } else {
        1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b
    }
}

fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Beta quantile by bisection with Newton acceleration on the regularized
/// incomplete beta function. Converges to |dx| <= 1e-12 within 200
/// iterations for all positive shapes.
fn beta_quantile(a: f64, b: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut x = a / (a + b);
    for _ in 0..200 {
        let f = inc_beta(a, b, x);
        if f > u {
            hi = x;
        } else {
            lo = x;
        }
        let pdf = density(DistId::Beta, &[a, b], x);
        let newton = x - (f - u) / pdf;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-12 {
            return next;
        }
        x = next;
    }
    x
}
