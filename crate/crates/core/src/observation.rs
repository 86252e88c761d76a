//! The Gaussian two-hypothesis sensing model.
//!
//! Under `H_l` the network observes `y(k) = m_l + zeta(k)` with
//! `zeta(k) ~ N(0, S)` i.i.d. over time. The log-likelihood ratio is affine
//! in `y` and separates into per-sensor shares
//! `eta_i(k) = v_i (y_i(k) - ([m1]_i + [m0]_i)/2)` with `v = S^{-1}(m1 - m0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{generate_random_covariance, RngSeed, SpdMatrix};

/// Covariances whose condition number exceeds this are rejected.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    m0: DVector<f64>,
    m1: DVector<f64>,
    s: SpdMatrix,
    prior_h0: f64,
}

impl ObservationModel {
    pub fn new(m0: DVector<f64>, m1: DVector<f64>, s: SpdMatrix, prior_h0: f64) -> Result<Self> {
        let n = s.dim();
        if m0.len() != n || m1.len() != n {
            return Err(Error::domain(format!(
                "signal lengths ({}, {}) do not match covariance dimension {n}",
                m0.len(),
                m1.len()
            )));
        }
        if m0.iter().chain(m1.iter()).any(|x| !x.is_finite()) {
            return Err(Error::domain("signals must be finite"));
        }
        if m0 == m1 {
            return Err(Error::domain("m1 must differ from m0"));
        }
        if !(prior_h0 > 0.0 && prior_h0 < 1.0) {
            return Err(Error::domain(format!("prior_h0 must lie in (0,1), got {prior_h0}")));
        }
        Ok(Self { m0, m1, s, prior_h0 })
    }

    /// Equal priors.
    pub fn with_equal_priors(m0: DVector<f64>, m1: DVector<f64>, s: SpdMatrix) -> Result<Self> {
        Self::new(m0, m1, s, 0.5)
    }

    /// `m0 = 0`, `m1 = signal * 1`, independent sensors with the given variances.
    pub fn uncorrelated(signal: f64, variances: &[f64]) -> Result<Self> {
        let n = variances.len();
        Self::with_equal_priors(
            DVector::zeros(n),
            DVector::from_element(n, signal),
            SpdMatrix::from_diagonal(variances)?,
        )
    }

    /// `m0 = 0`, `m1 = 1` and a random covariance (see
    /// [`generate_random_covariance`]).
    pub fn random(n: usize, alpha_s: f64, seed: RngSeed) -> Result<Self> {
        Self::with_equal_priors(
            DVector::zeros(n),
            DVector::from_element(n, 1.0),
            generate_random_covariance(n, alpha_s, seed)?,
        )
    }

    /// Same model with the noise covariance rescaled so that the total
    /// Chernoff information equals `target`.
    pub fn rescaled_to_chernoff(&self, target: f64) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::domain("target Chernoff information must be positive"));
        }
        let current = derive_stats(self)?.c_tot;
        let s = SpdMatrix::new(self.s.matrix() * (current / target))?;
        Self::new(self.m0.clone(), self.m1.clone(), s, self.prior_h0)
    }

    pub fn n(&self) -> usize {
        self.s.dim()
    }

    pub fn m0(&self) -> &DVector<f64> {
        &self.m0
    }

    pub fn m1(&self) -> &DVector<f64> {
        &self.m1
    }

    pub fn covariance(&self) -> &SpdMatrix {
        &self.s
    }

    pub fn prior_h0(&self) -> f64 {
        self.prior_h0
    }

    pub fn has_equal_priors(&self) -> bool {
        self.prior_h0 == 0.5
    }

    pub fn signal_difference(&self) -> DVector<f64> {
        &self.m1 - &self.m0
    }

    /// Centralized LLR of one observation vector, `(m1-m0)^T S^{-1} (y - (m1+m0)/2)`.
    pub fn llr(&self, y: &DVector<f64>) -> f64 {
        let centered = y - (&self.m1 + &self.m0) * 0.5;
        let solved = self.s.cholesky().solve(&centered);
        self.signal_difference().dot(&solved)
    }
}

/// On-disk form: `{"N", "m0", "m1", "S" (row-major, N*N entries), "prior_h0"}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationModelDoc {
    #[serde(rename = "N")]
    n: usize,
    m0: Vec<f64>,
    m1: Vec<f64>,
    #[serde(rename = "S")]
    s: Vec<f64>,
    #[serde(default = "default_prior")]
    prior_h0: f64,
}

fn default_prior() -> f64 {
    0.5
}

impl Serialize for ObservationModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n();
        let m = self.s.matrix();
        let s = (0..n).flat_map(|i| (0..n).map(move |j| m[(i, j)])).collect();
        ObservationModelDoc {
            n,
            m0: self.m0.iter().copied().collect(),
            m1: self.m1.iter().copied().collect(),
            s,
            prior_h0: self.prior_h0,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ObservationModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = ObservationModelDoc::deserialize(deserializer)?;
        if doc.s.len() != doc.n * doc.n {
            return Err(D::Error::custom(format!(
                "field `S` must hold N*N = {} entries, found {}",
                doc.n * doc.n,
                doc.s.len()
            )));
        }
        let s = SpdMatrix::new(DMatrix::from_row_slice(doc.n, doc.n, &doc.s)).map_err(D::Error::custom)?;
        ObservationModel::new(DVector::from_vec(doc.m0), DVector::from_vec(doc.m1), s, doc.prior_h0)
            .map_err(D::Error::custom)
    }
}

/// Every statistic derived from `(m0, m1, S)`.
#[derive(Debug, Clone)]
pub struct DerivedStats {
    pub n: usize,
    /// `S^{-1}(m1 - m0)`.
    pub v: DVector<f64>,
    pub m_l0: f64,
    pub m_l1: f64,
    /// LLR variance `(m1-m0)^T S^{-1} (m1-m0)`.
    pub sigma_l2: f64,
    pub m_eta0: DVector<f64>,
    pub m_eta1: DVector<f64>,
    /// `Diag(v) S Diag(v)`.
    pub s_eta: DMatrix<f64>,
    pub s_eta_norm: f64,
    pub c_tot: f64,
    /// Per-sensor Chernoff information; only defined for diagonal `S`.
    pub c_i: Option<DVector<f64>>,
    /// `max_i |[m_eta0]_i|`.
    pub m_bar: f64,
    /// `8 m_bar / ||S_eta||`.
    pub k: f64,
}

pub fn derive_stats(model: &ObservationModel) -> Result<DerivedStats> {
    let s = model.covariance();
    let cond = s.condition_number();
    if !(cond <= MAX_CONDITION_NUMBER) {
        return Err(Error::numeric(format!(
            "noise covariance is ill-conditioned (condition number {cond:e})"
        )));
    }
    let n = model.n();
    let delta = model.signal_difference();
    let v = s.cholesky().solve(&delta);
    let sigma_l2 = delta.dot(&v);
    let m_l1 = 0.5 * sigma_l2;

    let m_eta1 = v.component_mul(&delta) * 0.5;
    let m_eta0 = -&m_eta1;
    let sm = s.matrix();
    let s_eta = DMatrix::from_fn(n, n, |i, j| sm[(i, j)] * (v[i] * v[j]));
    let s_eta_norm = crate::gaussian::symmetric_eigenvalues(&s_eta)?
        .iter()
        .fold(0.0f64, |a, x| a.max(x.abs()));

    let c_i = s.is_diagonal().then(|| {
        DVector::from_fn(n, |i, _| delta[i] * delta[i] / (8.0 * sm[(i, i)]))
    });
    let m_bar = m_eta0.iter().fold(0.0f64, |a, x| a.max(x.abs()));

    Ok(DerivedStats {
        n,
        v,
        m_l0: -m_l1,
        m_l1,
        sigma_l2,
        m_eta0,
        m_eta1,
        s_eta,
        s_eta_norm,
        c_tot: sigma_l2 / 8.0,
        c_i,
        m_bar,
        k: 8.0 * m_bar / s_eta_norm,
    })
}

/// Chernoff information of sensor `i` working alone,
/// `(1/8) ([m1 - m0]_i)^2 / S_ii`. Requires diagonal `S`.
pub fn chernoff_no_cooperation(model: &ObservationModel, i: usize) -> Result<f64> {
    if i >= model.n() {
        return Err(Error::domain(format!("sensor index {i} out of range")));
    }
    if !model.covariance().is_diagonal() {
        return Err(Error::UnsupportedModel(
            "per-sensor Chernoff information needs a diagonal noise covariance".into(),
        ));
    }
    let d = model.m1()[i] - model.m0()[i];
    if d == 0.0 {
        return Err(Error::domain(format!("sensor {i} carries no signal")));
    }
    Ok(d * d / (8.0 * model.covariance().matrix()[(i, i)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_model() {
        let m = ObservationModel::uncorrelated(1.0, &[1.0]).unwrap();
        let st = derive_stats(&m).unwrap();
        assert_relative_eq!(st.v[0], 1.0);
        assert_relative_eq!(st.sigma_l2, 1.0);
        assert_relative_eq!(st.m_l1, 0.5);
        assert_relative_eq!(st.c_tot, 0.125);
    }

    #[test]
    fn two_equal_sensors() {
        let m = ObservationModel::uncorrelated(1.0, &[1.0, 1.0]).unwrap();
        let st = derive_stats(&m).unwrap();
        assert_relative_eq!(st.c_tot, 0.25);
        let ci = st.c_i.as_ref().unwrap();
        assert_relative_eq!(ci[0], 0.125);
        assert_relative_eq!(ci[1], 0.125);
        assert_relative_eq!((st.s_eta.clone() - DMatrix::identity(2, 2)).abs().max(), 0.0);
        assert_eq!(st.m_eta0.as_slice(), &[-0.5, -0.5]);
        assert_relative_eq!(st.m_bar, 0.5);
        assert_relative_eq!(st.k, 4.0, max_relative = 1e-14);
    }

    #[test]
    fn llr_identities_hold_exactly() {
        let m = ObservationModel::random(7, 1.0, RngSeed::new(3, 0)).unwrap();
        let st = derive_stats(&m).unwrap();
        assert_eq!(st.m_l1, -st.m_l0);
        assert_eq!(st.c_tot, st.sigma_l2 / 8.0);
        assert_eq!(st.m_eta0, -&st.m_eta1);
        assert!(st.c_i.is_none());
    }

    #[test]
    fn no_cooperation_chernoff() {
        let m = ObservationModel::new(
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 3.0]),
            SpdMatrix::from_diagonal(&[1.0, 0.5]).unwrap(),
            0.5,
        )
        .unwrap();
        assert_relative_eq!(chernoff_no_cooperation(&m, 0).unwrap(), 0.125);
        assert_relative_eq!(chernoff_no_cooperation(&m, 1).unwrap(), 1.0);
        let ci = derive_stats(&m).unwrap().c_i.unwrap();
        assert_eq!(ci[1], chernoff_no_cooperation(&m, 1).unwrap());

        let corr = ObservationModel::random(3, 1.0, RngSeed::new(1, 1)).unwrap();
        assert!(matches!(chernoff_no_cooperation(&corr, 0), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn invariants_rejected() {
        let s = SpdMatrix::identity(2);
        let z = DVector::zeros(2);
        assert!(ObservationModel::new(z.clone(), z.clone(), s.clone(), 0.5).is_err());
        let one = DVector::from_element(2, 1.0);
        assert!(ObservationModel::new(z.clone(), one.clone(), s.clone(), 0.0).is_err());
        assert!(ObservationModel::new(z, one, s, 1.0).is_err());
    }

    #[test]
    fn ill_conditioned_covariance_is_numeric_error() {
        let m = ObservationModel::uncorrelated(1.0, &[1.0, 1e-13]).unwrap();
        assert!(matches!(derive_stats(&m), Err(Error::Numeric(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = ObservationModel::random(5, 0.37, RngSeed::new(8, 2)).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: ObservationModel = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
        assert!(text.contains("\"N\":5"));
        assert!(text.contains("\"prior_h0\":0.5"));
    }

    #[test]
    fn json_rejects_bad_shapes() {
        let bad = r#"{"N":2,"m0":[0,0],"m1":[1,1],"S":[1,0,0]}"#;
        let err = serde_json::from_str::<ObservationModel>(bad).unwrap_err().to_string();
        assert!(err.contains("N*N"));
        let missing = r#"{"N":2,"m0":[0,0],"S":[1,0,0,1]}"#;
        let err = serde_json::from_str::<ObservationModel>(missing).unwrap_err().to_string();
        assert!(err.contains("m1"));
    }

    #[test]
    fn rescaling_hits_target() {
        let m = ObservationModel::random(6, 1.0, RngSeed::new(2, 0)).unwrap();
        let scaled = m.rescaled_to_chernoff(0.009).unwrap();
        assert_relative_eq!(derive_stats(&scaled).unwrap().c_tot, 0.009, max_relative = 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            #[test]
            fn c_tot_matches_explicit_inverse(seed in 0u64..1_000_000, n in 1usize..8) {
                let m = ObservationModel::random(n, 1.0, RngSeed::new(seed, 0)).unwrap();
                let Ok(st) = derive_stats(&m) else { return Ok(()); };
                // independent route: explicit inverse instead of a Cholesky solve
                let inv = m.covariance().matrix().clone().try_inverse().unwrap();
                let d = m.signal_difference();
                let c13 = (d.transpose() * inv * &d)[0] / 8.0;
                prop_assert!((c13 / st.c_tot - 1.0).abs() < 1e-10 * m.covariance().condition_number().max(1.0).sqrt().max(1.0));
            }

            #[test]
            fn diagonal_chernoff_sums(vars in proptest::collection::vec(0.1f64..10.0, 1..12),
                                      sig in proptest::collection::vec(-3.0f64..3.0, 12)) {
                let n = vars.len();
                let m1: Vec<f64> = sig[..n].iter().map(|x| if x.abs() < 1e-3 { 1.0 } else { *x }).collect();
                let m = ObservationModel::new(DVector::zeros(n), DVector::from_vec(m1),
                    SpdMatrix::from_diagonal(&vars).unwrap(), 0.5).unwrap();
                let st = derive_stats(&m).unwrap();
                let sum: f64 = st.c_i.unwrap().iter().sum();
                prop_assert!((sum / st.c_tot - 1.0).abs() < 1e-12);
            }

            #[test]
            fn llr_is_separable(seed in 0u64..1_000_000, n in 1usize..8) {
                let m = ObservationModel::random(n, 1.0, RngSeed::new(seed, 1)).unwrap();
                let Ok(st) = derive_stats(&m) else { return Ok(()); };
                let y = crate::gaussian::sample_gaussian(m.m0(), m.covariance(), RngSeed::new(seed, 2)).unwrap();
                let mid = (m.m1() + m.m0()) * 0.5;
                let sep: f64 = (0..n).map(|i| st.v[i] * (y[i] - mid[i])).sum();
                let full = m.llr(&y);
                prop_assert!((sep - full).abs() <= 1e-10 * (1.0 + full.abs()));
            }
        }
    }
}
