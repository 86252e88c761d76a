//! Standard normal right-tail probability `Q(t) = P(Z > t)` and friends.
//!
//! The log-domain variant never takes the logarithm of an underflowed
//! probability: for `t >= 0` it is assembled from `-t^2/2` and the scaled
//! complementary error function `erfcx(x) = exp(x^2) erfc(x)`, which stays
//! O(1/x) for large arguments.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Below this argument `erfcx` is computed as `exp(x^2) * erfc(x)`.
const ERFCX_SWITCH: f64 = 4.0;

fn check_finite(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("Q-function argument must be finite, got {t}")))
    }
}

/// Right-tail probability of the standard normal distribution.
pub fn q_function(t: f64) -> Result<f64> {
    check_finite(t)?;
    Ok(0.5 * libm::erfc(t * FRAC_1_SQRT_2))
}

/// Natural logarithm of [`q_function`], accurate far into the tail
/// (e.g. `t = 40`, where `Q(t)` itself is below the smallest `f64`).
pub fn log_q_function(t: f64) -> Result<f64> {
    check_finite(t)?;
    if t < 0.0 {
        // Q(t) = 1 - Q(-t); log1p keeps relative accuracy when Q(-t) is tiny.
        Ok((-0.5 * libm::erfc(-t * FRAC_1_SQRT_2)).ln_1p())
    } else {
        Ok(-0.5 * t * t + (0.5 * erfcx(t * FRAC_1_SQRT_2)).ln())
    }
}

/// Scaled complementary error function `exp(x^2) erfc(x)` for `x >= 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < ERFCX_SWITCH {
        (x * x).exp() * libm::erfc(x)
    } else {
        FRAC_1_SQRT_PI * erfcx_continued_fraction(x)
    }
}

/// `sqrt(pi) * erfcx(x)` from the Laplace continued fraction
/// `1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))`, evaluated with the
/// modified Lentz algorithm.
fn erfcx_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..10_000 {
        let a = 0.5 * n as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Lower and upper bounds on `Q(t)` for `t > 0`:
/// `t/(1+t^2) * phi(t) <= Q(t) <= phi(t)/t`, with `phi` the standard normal density.
pub fn q_bounds(t: f64) -> Result<(f64, f64)> {
    check_finite(t)?;
    if t <= 0.0 {
        return Err(Error::domain(format!("Q-function bounds need t > 0, got {t}")));
    }
    let density = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    Ok((t / (1.0 + t * t) * density, density / t))
}

/// Numerically stable `log(sum(exp(terms)))`. Empty input or all `-inf`
/// terms give `-inf`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = terms.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values from a 50-digit mpmath evaluation of erfc(t/sqrt(2))/2.
    const Q_1: f64 = 0.158_655_253_931_457_05;
    const Q_4_4721: f64 = 3.872_759_483_089_899_5e-6;
    const LOG_Q_10: f64 = -53.231_285_150_512_47;
    const LOG_Q_30: f64 = -454.321_243_956_343_2;
    const LOG_Q_40: f64 = -804.608_442_013_753_8;

    /// Independent oracle: Maclaurin series of erf with Kahan summation,
    /// usable for small arguments only.
    fn q_series(t: f64) -> f64 {
        let x = t * FRAC_1_SQRT_2;
        let mut term = x;
        let mut sum = 0.0;
        let mut comp = 0.0;
        for n in 0..200 {
            let add = term / (2 * n + 1) as f64;
            let y = add - comp;
            let s = sum + y;
            comp = (s - sum) - y;
            sum = s;
            term *= -x * x / (n + 1) as f64;
        }
        0.5 - sum / PI.sqrt()
    }

    #[test]
    fn q_at_reference_points() {
        assert_eq!(q_function(0.0).unwrap(), 0.5);
        assert_relative_eq!(q_function(1.0).unwrap(), Q_1, max_relative = 1e-12);
        assert_relative_eq!(q_function(1.0).unwrap(), q_series(1.0), max_relative = 1e-12);
        let q = q_function(4.4721).unwrap();
        assert_relative_eq!(q, Q_4_4721, max_relative = 1e-12);
        assert!((q / 3.87e-6 - 1.0).abs() < 0.01);
    }

    #[test]
    fn q_matches_series_oracle_on_small_arguments() {
        for i in -30..=30 {
            let t = i as f64 * 0.1;
            assert_relative_eq!(q_function(t).unwrap(), q_series(t), max_relative = 1e-12);
        }
    }

    #[test]
    fn log_q_reference_points() {
        assert_relative_eq!(log_q_function(0.0).unwrap(), 0.5f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(log_q_function(10.0).unwrap(), LOG_Q_10, max_relative = 1e-12);
        assert_relative_eq!(log_q_function(30.0).unwrap(), LOG_Q_30, max_relative = 1e-12);
        assert_relative_eq!(log_q_function(40.0).unwrap(), LOG_Q_40, max_relative = 1e-12);
        let (lo, hi) = q_bounds(30.0).unwrap();
        let lq = log_q_function(30.0).unwrap();
        assert!(lo.ln() <= lq && lq <= hi.ln());
    }

    #[test]
    fn log_q_negative_tail_keeps_relative_accuracy() {
        // log Q(-8) = log(1 - Q(8)) ~ -Q(8)
        let q8 = q_function(8.0).unwrap();
        assert_relative_eq!(log_q_function(-8.0).unwrap(), -q8, max_relative = 1e-10);
    }

    #[test]
    fn erfcx_is_continuous_across_switch() {
        let below = (ERFCX_SWITCH * ERFCX_SWITCH).exp() * libm::erfc(ERFCX_SWITCH);
        let above = FRAC_1_SQRT_PI * erfcx_continued_fraction(ERFCX_SWITCH);
        assert_relative_eq!(below, above, max_relative = 1e-13);
    }

    #[test]
    fn bounds_reference_and_ratio() {
        let (lo, hi) = q_bounds(1.0).unwrap();
        assert_relative_eq!(lo, 0.120_985_362_259_571_8, max_relative = 1e-12);
        assert_relative_eq!(hi, 0.241_970_724_519_143_37, max_relative = 1e-12);
        assert!(lo < Q_1 && Q_1 < hi);
        let (lo, hi) = q_bounds(4.0).unwrap();
        assert_relative_eq!(hi / lo, 1.0625, max_relative = 1e-14);
        for t in [5.0, 6.0, 10.0, 25.0] {
            let (lo, hi) = q_bounds(t).unwrap();
            assert!(hi / lo <= 1.04 + 1e-15);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(q_function(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(log_q_function(f64::INFINITY), Err(Error::Domain(_))));
        assert!(matches!(q_bounds(0.0), Err(Error::Domain(_))));
        assert!(matches!(q_bounds(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_relative_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(log_sum_exp(&[0.0, f64::NEG_INFINITY]), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]
            #[test]
            fn bounds_bracket_q(t in 1e-6f64..=8.0) {
                let (lo, hi) = q_bounds(t).unwrap();
                let q = q_function(t).unwrap();
                prop_assert!(lo < q && q < hi);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2_000))]
            #[test]
            fn exp_log_q_matches_q(t in -8.0f64..=8.0) {
                let q = q_function(t).unwrap();
                let lq = log_q_function(t).unwrap();
                prop_assert!((lq.exp() / q - 1.0).abs() <= 1e-10);
            }
        }
    }
}
