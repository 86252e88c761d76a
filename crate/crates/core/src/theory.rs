//! Closed-form large-deviations quantities for running consensus.
//!
//! For switching fusion (`W = J` with probability `p`, else `I`) the error
//! probability is known exactly and its decay rate has a three-branch closed
//! form. For general weight models only bounds are available: a sufficient
//! condition and lower bound in terms of `r = lambda_2(E[W^2])`, and a
//! necessary condition in terms of each sensor's connectivity probability.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{log_q_function, log_sum_exp};
use crate::observation::DerivedStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// The network attains the centralized rate `C_tot`.
    Optimal,
    /// Strictly between the individual and the centralized rate.
    SuboptimalBranch,
    /// Rate governed by a single sensor's own information plus connectivity.
    IndividualBranch,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Optimal => "optimal",
            Regime::SuboptimalBranch => "suboptimal_branch",
            Regime::IndividualBranch => "individual_branch",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

/// Switching fusion with `N` identical sensors of Chernoff information `C_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingFusionSpec {
    n: usize,
    c_i: f64,
    p: f64,
}

impl SwitchingFusionSpec {
    pub fn new(n: usize, c_i: f64, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        if !(c_i > 0.0 && c_i.is_finite()) {
            return Err(Error::domain(format!("C_i must be positive, got {c_i}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("p must lie in [0,1], got {p}")));
        }
        Ok(Self { n, c_i, p })
    }

    pub fn from_total(n: usize, c_tot: f64, p: f64) -> Result<Self> {
        Self::new(n, c_tot / n as f64, p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c_i(&self) -> f64 {
        self.c_i
    }

    pub fn c_tot(&self) -> f64 {
        self.n as f64 * self.c_i
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.n, self.c_i, p)
    }

    /// `|log(1-p)|`, infinite at `p = 1`.
    pub fn abs_log_one_minus_p(&self) -> f64 {
        -(-self.p).ln_1p()
    }
}

/// `sqrt(2 C_i) k / sqrt(l/N + k - l)`, the normalized threshold of
/// `alpha` given that the last fusion happened at time `l`.
pub fn chi(spec: &SwitchingFusionSpec, l: u64, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if l >= k {
        return Err(Error::domain(format!("l must lie in 0..k-1, got l={l}, k={k}")));
    }
    Ok(chi_unchecked(spec, l as f64, k as f64))
}

fn chi_unchecked(spec: &SwitchingFusionSpec, l: f64, k: f64) -> f64 {
    (2.0 * spec.c_i).sqrt() * k / (l / spec.n as f64 + (k - l)).sqrt()
}

/// `log alpha(k)`, the exact log error probability of every sensor at time
/// `k` under switching fusion.
///
/// Conditioning on the last time `l` at which `W = J` (`l = 0`: never),
/// `alpha(k) = sum_l P(l) Q(chi(l;k))`; the sum is evaluated in the log
/// domain. `p = 0` and `p = 1` are the exact limits (no fusion, fusion every
/// step).
pub fn exact_switching_fusion_alpha(spec: &SwitchingFusionSpec, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let kf = k as f64;
    let log_p = spec.p.ln();
    let log_1mp = (-spec.p).ln_1p();
    // a zero-probability factor raised to the 0th power contributes 1
    let weight = |power: u64, log_base: f64| if power == 0 { 0.0 } else { power as f64 * log_base };
    let mut terms = Vec::with_capacity(k as usize);
    terms.push(log_q_function(chi_unchecked(spec, 0.0, kf))? + weight(k - 1, log_1mp));
    if spec.p > 0.0 {
        for l in 1..k {
            let lw = log_p + weight(k - l - 1, log_1mp);
            if lw == f64::NEG_INFINITY {
                continue;
            }
            terms.push(log_q_function(chi_unchecked(spec, l as f64, kf))? + lw);
        }
    }
    Ok(log_sum_exp(&terms))
}

/// `C_tot / (1 + (N-1)(j+1)/k) + (j/k)|log(1-p)|`, the decay mode of the
/// paths whose last fusion is at `l = k - j - 1`. Real `j` is accepted.
pub fn phi_mode(spec: &SwitchingFusionSpec, j: f64, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let kf = k as f64;
    if !(0.0..=kf - 1.0).contains(&j) {
        return Err(Error::domain(format!("j must lie in [0, k-1], got {j}")));
    }
    let a = spec.abs_log_one_minus_p();
    let connectivity = if j == 0.0 { 0.0 } else { j / kf * a };
    Ok(spec.c_tot() / (1.0 + (spec.n as f64 - 1.0) * (j + 1.0) / kf) + connectivity)
}

/// Minimum of [`phi_mode`] over real `j` in `[0, k-1]`.
pub fn phi_star_k(spec: &SwitchingFusionSpec, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let kf = k as f64;
    let nm1 = spec.n as f64 - 1.0;
    let c = spec.c_tot();
    let a = spec.abs_log_one_minus_p();
    let n2 = (spec.n as f64).powi(2);
    if a >= c * nm1 / (1.0 + nm1 / kf).powi(2) {
        Ok(c / (1.0 + nm1 / kf))
    } else if a <= c * nm1 / n2 {
        Ok(c / spec.n as f64 + (kf - 1.0) / kf * a)
    } else {
        Ok(2.0 * (a * c / nm1).sqrt() - a / nm1 - a / kf)
    }
}

/// Exact decay rate of the error probability under switching fusion, with
/// the branch that attains it.
pub fn phi_star(spec: &SwitchingFusionSpec) -> (f64, Regime) {
    let nm1 = spec.n as f64 - 1.0;
    let c = spec.c_tot();
    let a = spec.abs_log_one_minus_p();
    if a >= c * nm1 {
        (c, Regime::Optimal)
    } else if a <= c * nm1 / (spec.n as f64).powi(2) {
        (spec.c_i + a, Regime::IndividualBranch)
    } else {
        (2.0 * (a * c / nm1).sqrt() - a / nm1, Regime::SuboptimalBranch)
    }
}

/// Smallest `p` at which switching fusion is asymptotically optimal,
/// `1 - exp(-C_tot (N-1))`.
pub fn theorem1_optimality_threshold(spec: &SwitchingFusionSpec) -> f64 {
    -(-spec.c_tot() * (spec.n as f64 - 1.0)).exp_m1()
}

/// The scalars the generic-network bound depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Inputs {
    pub n: usize,
    pub sigma_l2: f64,
    pub m_l0: f64,
    pub s_eta_norm: f64,
    pub m_bar: f64,
    pub k: f64,
    pub r: f64,
}

impl Theorem2Inputs {
    pub fn new(stats: &DerivedStats, r: f64) -> Result<Self> {
        let inp = Self {
            n: stats.n,
            sigma_l2: stats.sigma_l2,
            m_l0: stats.m_l0,
            s_eta_norm: stats.s_eta_norm,
            m_bar: stats.m_bar,
            k: stats.k,
            r,
        };
        inp.validate()?;
        Ok(inp)
    }

    pub fn with_r(&self, r: f64) -> Result<Self> {
        let inp = Self { r, ..*self };
        inp.validate()?;
        Ok(inp)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::domain(format!("r must lie in [0,1], got {}", self.r)));
        }
        if self.n == 0 || !(self.sigma_l2 > 0.0) || !(self.s_eta_norm > 0.0) {
            return Err(Error::domain("degenerate inputs"));
        }
        Ok(())
    }

    pub fn c_tot(&self) -> f64 {
        self.sigma_l2 / 8.0
    }

    pub fn abs_log_r(&self) -> f64 {
        -self.r.ln()
    }

    /// `(1/8) N^2 (1 + (1 - 1/N) K) ||S_eta||`: `|log r|` at or above this
    /// guarantees the centralized rate.
    pub fn sufficient_threshold(&self) -> f64 {
        let n = self.n as f64;
        n * n * (1.0 + (1.0 - 1.0 / n) * self.k) * self.s_eta_norm / 8.0
    }
}

/// The largest `mu` for which the bound's supremum over `theta` sits at
/// `theta = 0`; capped at `N/2` once the sufficient condition holds.
pub fn theorem2_mu_bar(inp: &Theorem2Inputs) -> Result<f64> {
    if !(inp.r > 0.0 && inp.r < 1.0) {
        return Err(Error::domain(format!("r must lie in (0,1), got {}", inp.r)));
    }
    let l = inp.abs_log_r();
    let (k, s) = (inp.k, inp.s_eta_norm);
    if l >= inp.sufficient_threshold() {
        return Ok(inp.n as f64 / 2.0);
    }
    if l > s / 8.0 {
        Ok(0.25 * k / (k + 1.0) + 0.25 * (k * k + 32.0 * l * (1.0 + k) / s).sqrt() / (k + 1.0))
    } else {
        Ok(0.25 * (k * k + 32.0 * l / s).sqrt() - 0.25 * k)
    }
}

/// Lower bound on the decay rate of every sensor's error probability, and
/// whether the sufficient condition for optimality holds.
pub fn theorem2_rate_bound(inp: &Theorem2Inputs) -> Result<(f64, bool)> {
    inp.validate()?;
    if inp.r == 0.0 || inp.abs_log_r() >= inp.sufficient_threshold() {
        return Ok((inp.c_tot(), true));
    }
    if inp.r == 1.0 {
        return Ok((0.0, false));
    }
    let mu = theorem2_mu_bar(inp)?;
    let n = inp.n as f64;
    Ok((-(inp.sigma_l2 * mu * mu / (2.0 * n * n) + inp.m_l0 * mu / n), false))
}

/// Which branch [`theorem2_rate_bound`] uses.
pub fn theorem2_regime(inp: &Theorem2Inputs) -> Regime {
    let l = inp.abs_log_r();
    if inp.r == 0.0 || l >= inp.sufficient_threshold() {
        Regime::Optimal
    } else if l > inp.s_eta_norm / 8.0 {
        Regime::SuboptimalBranch
    } else {
        Regime::IndividualBranch
    }
}

/// The exponent family
/// `sigma_L^2 mu^2/(2N^2) + m_L0 mu/N + 2|2mu^2 - mu| m_bar theta + (mu^2/2)||S_eta|| theta + theta log r`.
pub fn theorem2_exponent(inp: &Theorem2Inputs, theta: f64, mu: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain(format!("theta must lie in [0,1], got {theta}")));
    }
    if !(mu > 0.0) {
        return Err(Error::domain(format!("mu must be positive, got {mu}")));
    }
    let n = inp.n as f64;
    let log_r_term = if theta == 0.0 { 0.0 } else { theta * inp.r.ln() };
    Ok(inp.sigma_l2 * mu * mu / (2.0 * n * n)
        + inp.m_l0 * mu / n
        + 2.0 * (2.0 * mu * mu - mu).abs() * inp.m_bar * theta
        + 0.5 * mu * mu * inp.s_eta_norm * theta
        + log_r_term)
}

/// Bound and optimality flag for `r` known up to a standard error, with the
/// bound re-evaluated at `r -/+ z * se` (clamped to `[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem2Interval {
    pub bound: f64,
    pub optimal: bool,
    pub bound_low: f64,
    pub bound_high: f64,
    pub abs_log_r_low: f64,
    pub abs_log_r_high: f64,
}

pub fn theorem2_with_uncertainty(inp: &Theorem2Inputs, r_se: f64, z: f64) -> Result<Theorem2Interval> {
    let (bound, optimal) = theorem2_rate_bound(inp)?;
    let spread = if r_se.is_finite() { z * r_se } else { 1.0 };
    let worse = inp.with_r((inp.r + spread).min(1.0))?;
    let better = inp.with_r((inp.r - spread).max(0.0))?;
    Ok(Theorem2Interval {
        bound,
        optimal,
        bound_low: theorem2_rate_bound(&worse)?.0,
        bound_high: theorem2_rate_bound(&better)?.0,
        abs_log_r_low: worse.abs_log_r(),
        abs_log_r_high: better.abs_log_r(),
    })
}

/// `|log(1 - P_i)| > C_tot - C_i`: without it, sensor `i` cannot reach the
/// centralized rate.
pub fn theorem3_necessary(c_tot: f64, c_i: f64, p_i: f64) -> Result<bool> {
    if !(c_i > 0.0) || c_i > c_tot * (1.0 + 1e-12) {
        return Err(Error::domain(format!("need 0 < C_i <= C_tot, got C_i={c_i}, C_tot={c_tot}")));
    }
    if !(0.0..=1.0).contains(&p_i) {
        return Err(Error::domain(format!("P_i must lie in [0,1], got {p_i}")));
    }
    let gap = c_tot - c_i;
    if p_i == 1.0 || gap <= 1e-12 * c_tot {
        return Ok(true);
    }
    Ok(-(-p_i).ln_1p() > gap)
}

/// A theoretical prediction, optionally paired with a measured rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    pub theoretical_rate_or_bound: f64,
    pub regime: Regime,
    pub sufficient_condition_met: bool,
    pub necessary_condition_met: Option<bool>,
    pub empirical_rate: Option<f64>,
}

/// Exact rate and conditions for switching fusion.
pub fn switching_fusion_report(spec: &SwitchingFusionSpec) -> Result<RateReport> {
    let (rate, regime) = phi_star(spec);
    Ok(RateReport {
        theoretical_rate_or_bound: rate,
        regime,
        sufficient_condition_met: regime == Regime::Optimal,
        necessary_condition_met: Some(theorem3_necessary(spec.c_tot(), spec.c_i, spec.p)?),
        empirical_rate: None,
    })
}

/// Bound and conditions for a generic weight model. `c_i` and `p_i` enable
/// the necessary-condition check (they need a diagonal noise covariance).
pub fn generic_report(inp: &Theorem2Inputs, c_i: Option<f64>, p_i: Option<f64>) -> Result<RateReport> {
    let (bound, optimal) = theorem2_rate_bound(inp)?;
    let necessary = match (c_i, p_i) {
        (Some(c), Some(p)) => Some(theorem3_necessary(inp.c_tot(), c, p)?),
        _ => None,
    };
    Ok(RateReport {
        theoretical_rate_or_bound: bound,
        regime: theorem2_regime(inp),
        sufficient_condition_met: optimal,
        necessary_condition_met: necessary,
        empirical_rate: None,
    })
}
