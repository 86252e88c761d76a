//! Centralized, running-consensus and no-cooperation detectors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{log_q_function, psd_factor, q_function, RngSeed};
use crate::network::{Realization, WeightSample};
use crate::observation::{chernoff_no_cooperation, DerivedStats, ObservationModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn from_index(l: u8) -> Result<Self> {
        match l {
            0 => Ok(Self::H0),
            1 => Ok(Self::H1),
            _ => Err(Error::domain(format!("hypothesis must be 0 or 1, got {l}"))),
        }
    }
}

/// Draws the per-sensor LLR shares `eta(k) ~ N(m_eta_l, S_eta)`.
///
/// `S_eta` may be singular, so the factor comes from
/// [`crate::gaussian::psd_factor`].
#[derive(Debug, Clone)]
pub struct EtaSampler {
    factor: DMatrix<f64>,
    m_eta0: DVector<f64>,
    m_eta1: DVector<f64>,
}

impl EtaSampler {
    pub fn new(stats: &DerivedStats) -> Result<Self> {
        Ok(Self {
            factor: psd_factor(&stats.s_eta)?,
            m_eta0: stats.m_eta0.clone(),
            m_eta1: stats.m_eta1.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.m_eta0.len()
    }

    /// Writes `m_eta_l + F z` into `out` for caller-supplied normals `z`.
    pub fn transform_into(&self, hyp: Hypothesis, z: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(match hyp {
            Hypothesis::H0 => &self.m_eta0,
            Hypothesis::H1 => &self.m_eta1,
        });
        out.gemv(1.0, &self.factor, z, 1.0);
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, hyp: Hypothesis, rng: &mut R, z: &mut DVector<f64>, out: &mut DVector<f64>) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        self.transform_into(hyp, z, out);
    }

    pub fn sample<R: Rng + ?Sized>(&self, hyp: Hypothesis, rng: &mut R) -> DVector<f64> {
        let mut z = DVector::zeros(self.n());
        let mut out = DVector::zeros(self.n());
        self.sample_into(hyp, rng, &mut z, &mut out);
        out
    }
}

/// One draw of `eta` under `hyp`, fully determined by `seed`.
pub fn eta_sample(stats: &DerivedStats, hyp: Hypothesis, seed: RngSeed) -> Result<DVector<f64>> {
    Ok(EtaSampler::new(stats)?.sample(hyp, &mut seed.rng()))
}

/// The shares carried by one observation vector,
/// `eta_i = v_i (y_i - ([m1]_i + [m0]_i) / 2)`. They sum to the centralized LLR.
pub fn eta_from_observation(model: &ObservationModel, stats: &DerivedStats, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != model.n() {
        return Err(Error::domain("observation length does not match the model"));
    }
    let mid = (model.m1() + model.m0()) * 0.5;
    Ok(stats.v.component_mul(&(y - mid)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub k: u64,
    pub x: DVector<f64>,
}

impl ConsensusState {
    /// `x(1) = eta(1)`.
    pub fn initial(eta1: DVector<f64>) -> Self {
        Self { k: 1, x: eta1 }
    }

    pub fn decisions(&self) -> DecisionRecord {
        DecisionRecord {
            k: self.k,
            decisions: self.x.iter().map(|&v| u8::from(v > 0.0)).collect(),
        }
    }

    /// In-place update with a compact weight realization; `scratch` must have
    /// length `N`.
    pub fn advance(&mut self, w: &Realization, eta_next: &DVector<f64>, scratch: &mut DVector<f64>) {
        w.apply(&self.x, scratch);
        let k = self.k as f64;
        let a = k / (k + 1.0);
        let b = 1.0 / (k + 1.0);
        for ((xi, wi), ei) in self.x.iter_mut().zip(scratch.iter()).zip(eta_next.iter()) {
            *xi = a * wi + b * ei;
        }
        self.k += 1;
    }
}

/// `x(k+1) = k/(k+1) W(k) x(k) + 1/(k+1) eta(k+1)`.
pub fn consensus_step(state: &ConsensusState, w: &WeightSample, eta_next: &DVector<f64>) -> Result<ConsensusState> {
    let n = state.x.len();
    if state.k == 0 {
        return Err(Error::domain("consensus time index starts at 1"));
    }
    if w.w.nrows() != n || w.w.ncols() != n || eta_next.len() != n {
        return Err(Error::domain("dimension mismatch in consensus step"));
    }
    let k = state.k as f64;
    let x = (&w.w * &state.x) * (k / (k + 1.0)) + eta_next * (1.0 / (k + 1.0));
    Ok(ConsensusState { k: state.k + 1, x })
}

/// Per-sensor decisions at one time: `1` exactly when `x_i(k) > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRecord {
    pub k: u64,
    pub decisions: Vec<u8>,
}

/// `(1/k) sum_{j<k} Phi(k,j) eta(j) + eta(k)/k` with
/// `Phi(k,j) = W(k-1) ... W(j)`; `weights[j-1]` is `W(j)`.
pub fn closed_form_state(weights: &[WeightSample], etas: &[DVector<f64>]) -> Result<DVector<f64>> {
    let k = etas.len();
    if k < 2 || weights.len() != k - 1 {
        return Err(Error::domain(format!(
            "need k >= 2 observations and k-1 weights, got {} and {}",
            k,
            weights.len()
        )));
    }
    let n = etas[0].len();
    if etas.iter().any(|e| e.len() != n) || weights.iter().any(|w| w.w.nrows() != n || w.w.ncols() != n) {
        return Err(Error::domain("dimension mismatch"));
    }
    let mut sum = etas[k - 1].clone();
    for j in 1..k {
        // Phi(k,j) eta(j), applied right to left
        let mut v = etas[j - 1].clone();
        for w in &weights[j - 1..k - 1] {
            v = &w.w * v;
        }
        sum += v;
    }
    Ok(sum / k as f64)
}

/// Error probability of the optimal fusion-center test with equal priors,
/// `Q(sqrt(2 k C_tot))`.
pub fn centralized_error_probability(stats: &DerivedStats, k: u64) -> Result<f64> {
    q_function(centralized_argument(stats, k)?)
}

pub fn centralized_log_error_probability(stats: &DerivedStats, k: u64) -> Result<f64> {
    log_q_function(centralized_argument(stats, k)?)
}

fn centralized_argument(stats: &DerivedStats, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    Ok((k as f64).sqrt() * stats.m_l1 / stats.sigma_l2.sqrt())
}

/// Error probability of sensor `i` deciding alone from its own `k`
/// observations, `Q(sqrt(2 k C_i))`. Needs diagonal `S`.
pub fn no_cooperation_error_probability(model: &ObservationModel, i: usize, k: u64) -> Result<f64> {
    q_function(no_cooperation_argument(model, i, k)?)
}

pub fn no_cooperation_log_error_probability(model: &ObservationModel, i: usize, k: u64) -> Result<f64> {
    log_q_function(no_cooperation_argument(model, i, k)?)
}

fn no_cooperation_argument(model: &ObservationModel, i: usize, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let c = chernoff_no_cooperation(model, i)?;
    Ok((2.0 * k as f64 * c).sqrt())
}
