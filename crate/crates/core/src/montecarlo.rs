//! Seeded, parallel Monte Carlo estimation of per-sensor error curves, and
//! decay-rate fitting.
//!
//! Every path owns one random stream, so the result depends only on the
//! configuration, never on the number of worker threads. Paths are grouped
//! into fixed-size chunks whose integer error counters are summed.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::detectors::{ConsensusState, EtaSampler, Hypothesis};
use crate::error::{Error, Result};
use crate::gaussian::{Lane, RngSeed};
use crate::network::{Realization, WeightModel};
use crate::observation::{derive_stats, ObservationModel};
use crate::theory::{RateReport, Regime};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Checkpoints with fewer errors than this are not used for rate fits.
pub const MIN_ERRORS: u64 = 10;

pub const MIN_PATHS: usize = 100;

/// Stream offset of the first `H1` path relative to the first `H0` path.
pub const H1_STREAM_OFFSET: u64 = 1 << 30;

/// Paths per unit of parallel work.
const CHUNK: usize = 128;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ObservationModel,
    pub weights: WeightModel,
    pub paths_per_hypothesis: usize,
    pub k_max: u64,
    /// Sorted, distinct, within `1..=k_max`.
    pub checkpoints: Vec<u64>,
    /// Path `i` under `H0` uses stream `seed.offset(i)`.
    pub seed: RngSeed,
    /// 0-based sensor indices; `None` records every sensor.
    pub record_sensors: Option<Vec<usize>>,
    /// Also simulate `H1` and report the prior-weighted error instead of
    /// relying on the `alpha = beta` symmetry of equal priors.
    pub two_hypothesis: bool,
    /// Keep full decision-variable trajectories of this many `H0` paths.
    pub trajectory_paths: usize,
    /// `None` uses rayon's global pool.
    pub workers: Option<usize>,
    pub memory_budget_bytes: usize,
}

impl ExperimentConfig {
    /// All checkpoints `1..=k_max`, every sensor, `H0` only, 1 GiB budget.
    pub fn new(model: ObservationModel, weights: WeightModel, paths_per_hypothesis: usize, k_max: u64, seed: RngSeed) -> Self {
        Self {
            model,
            weights,
            paths_per_hypothesis,
            k_max,
            checkpoints: (1..=k_max).collect(),
            seed,
            record_sensors: None,
            two_hypothesis: false,
            trajectory_paths: 0,
            workers: None,
            memory_budget_bytes: 1 << 30,
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn sensors(&self) -> Vec<usize> {
        self.record_sensors.clone().unwrap_or_else(|| (0..self.model.n()).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.n();
        if self.weights.n() != n {
            return Err(Error::config(format!(
                "weight model has {} nodes but the observation model has {n} sensors",
                self.weights.n()
            )));
        }
        if self.paths_per_hypothesis < MIN_PATHS {
            return Err(Error::config(format!("paths_per_hypothesis must be at least {MIN_PATHS}")));
        }
        if self.k_max == 0 {
            return Err(Error::config("k_max must be at least 1"));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::config("at least one checkpoint is required"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("checkpoints must be strictly increasing"));
        }
        if self.checkpoints[0] < 1 || *self.checkpoints.last().unwrap() > self.k_max {
            return Err(Error::config("checkpoints must lie in 1..=k_max"));
        }
        let sensors = self.sensors();
        if sensors.is_empty() || sensors.iter().any(|&s| s >= n) {
            return Err(Error::config("record_sensors must name existing sensors"));
        }
        if !self.two_hypothesis && !self.model.has_equal_priors() {
            return Err(Error::config(
                "unequal priors need two_hypothesis = true (the H0-only estimator assumes alpha = beta)",
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        let need = self.memory_estimate_bytes();
        if need > self.memory_budget_bytes {
            return Err(Error::config(format!(
                "estimated memory {need} bytes exceeds the budget of {} bytes",
                self.memory_budget_bytes
            )));
        }
        Ok(())
    }

    /// Rough upper bound on the memory held by a run.
    pub fn memory_estimate_bytes(&self) -> usize {
        let n = self.model.n();
        let workers = self.workers.unwrap_or_else(rayon::current_num_threads);
        let counters = self.checkpoints.len() * self.sensors().len() * 8 * (1 + usize::from(self.two_hypothesis));
        let traj = self.trajectory_paths.min(self.paths_per_hypothesis) * self.checkpoints.len() * (n * 8 + 32);
        let lookup = (self.k_max as usize + 1) * 8;
        counters * (2 * workers + 2) + traj + lookup + n * n * 8 * 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_errors: u64,
    pub n_paths: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    /// 0-based sensor index.
    pub sensor: usize,
    pub points: Vec<CurvePoint>,
}

/// Decision variables of one path at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub path: usize,
    pub k: u64,
    pub x: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub curves: Vec<ErrorCurve>,
    pub trajectories: Vec<TrajectoryPoint>,
}

/// Wilson score interval for `errors` successes out of `n`.
pub fn wilson_interval(errors: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = errors as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

struct ChunkOutput {
    h0: Vec<u64>,
    h1: Vec<u64>,
    trajectories: Vec<TrajectoryPoint>,
}

impl ChunkOutput {
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.h0.iter_mut().zip(other.h0) {
            *a += b;
        }
        for (a, b) in self.h1.iter_mut().zip(other.h1) {
            *a += b;
        }
        self.trajectories.extend(other.trajectories);
        self
    }
}

struct Engine<'a> {
    cfg: &'a ExperimentConfig,
    sampler: EtaSampler,
    sensors: Vec<usize>,
    /// `checkpoint_of[k]` is the checkpoint index of time `k`, if any.
    checkpoint_of: Vec<Option<usize>>,
}

impl Engine<'_> {
    fn counters(&self) -> Vec<u64> {
        vec![0; self.cfg.checkpoints.len() * self.sensors.len()]
    }

    fn run_path(&self, hyp: Hypothesis, stream: RngSeed, counts: &mut [u64], mut record: Option<(usize, &mut Vec<TrajectoryPoint>)>) {
        let n = self.sampler.n();
        let ns = self.sensors.len();
        let mut noise = stream.lane_rng(Lane::Noise);
        let mut links = stream.lane_rng(Lane::Links);
        let mut z = DVector::zeros(n);
        let mut eta = DVector::zeros(n);
        let mut scratch = DVector::zeros(n);
        let mut w = Realization::new(n);
        self.sampler.sample_into(hyp, &mut noise, &mut z, &mut eta);
        let mut state = ConsensusState::initial(eta.clone());
        for k in 1..=self.cfg.k_max {
            if k > 1 {
                self.cfg.weights.draw(&mut links, &mut w);
                self.sampler.sample_into(hyp, &mut noise, &mut z, &mut eta);
                state.advance(&w, &eta, &mut scratch);
            }
            if let Some(c) = self.checkpoint_of[k as usize] {
                let row = &mut counts[c * ns..(c + 1) * ns];
                for (slot, &s) in row.iter_mut().zip(&self.sensors) {
                    let decide_h1 = state.x[s] > 0.0;
                    if decide_h1 == (hyp == Hypothesis::H0) {
                        *slot += 1;
                    }
                }
                if let Some((path, traj)) = record.as_mut() {
                    traj.push(TrajectoryPoint { path: *path, k, x: state.x.clone() });
                }
            }
        }
    }

    fn run_chunk(&self, chunk: usize) -> ChunkOutput {
        let cfg = self.cfg;
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(cfg.paths_per_hypothesis);
        let mut out = ChunkOutput {
            h0: self.counters(),
            h1: if cfg.two_hypothesis { self.counters() } else { Vec::new() },
            trajectories: Vec::new(),
        };
        for path in start..end {
            let stream = cfg.seed.offset(path as u64);
            let record = (path < cfg.trajectory_paths).then_some((path, &mut out.trajectories));
            self.run_path(Hypothesis::H0, stream, &mut out.h0, record);
            if cfg.two_hypothesis {
                self.run_path(Hypothesis::H1, stream.offset(H1_STREAM_OFFSET), &mut out.h1, None);
            }
        }
        out
    }
}

/// Runs every path and returns one error curve per recorded sensor.
///
/// With equal priors and `two_hypothesis = false`, the error probability is
/// estimated as the `H0` false-alarm rate. Otherwise it is
/// `pi_0 alpha_hat + pi_1 beta_hat`, with the interval formed from the two
/// Wilson intervals in the same way.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let stats = derive_stats(&cfg.model)?;
    let mut checkpoint_of = vec![None; cfg.k_max as usize + 1];
    for (c, &k) in cfg.checkpoints.iter().enumerate() {
        checkpoint_of[k as usize] = Some(c);
    }
    let engine = Engine { cfg, sampler: EtaSampler::new(&stats)?, sensors: cfg.sensors(), checkpoint_of };
    let chunks = cfg.paths_per_hypothesis.div_ceil(CHUNK);
    let work = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| engine.run_chunk(c))
            .reduce_with(ChunkOutput::merge)
            .expect("at least one chunk")
    };
    let merged = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(ExperimentResult {
        curves: assemble_curves(cfg, &engine.sensors, &merged),
        trajectories: merged.trajectories,
    })
}

fn assemble_curves(cfg: &ExperimentConfig, sensors: &[usize], counts: &ChunkOutput) -> Vec<ErrorCurve> {
    let n = cfg.paths_per_hypothesis as u64;
    let ns = sensors.len();
    let pi0 = cfg.model.prior_h0();
    sensors
        .iter()
        .enumerate()
        .map(|(si, &sensor)| {
            let points = cfg
                .checkpoints
                .iter()
                .enumerate()
                .map(|(c, &k)| {
                    let e0 = counts.h0[c * ns + si];
                    if !cfg.two_hypothesis {
                        let (lo, hi) = wilson_interval(e0, n, Z95);
                        return CurvePoint { k, p_hat: e0 as f64 / n as f64, ci_low: lo, ci_high: hi, n_errors: e0, n_paths: n };
                    }
                    let e1 = counts.h1[c * ns + si];
                    let (lo0, hi0) = wilson_interval(e0, n, Z95);
                    let (lo1, hi1) = wilson_interval(e1, n, Z95);
                    let p_hat = pi0 * e0 as f64 / n as f64 + (1.0 - pi0) * e1 as f64 / n as f64;
                    CurvePoint {
                        k,
                        p_hat,
                        ci_low: (pi0 * lo0 + (1.0 - pi0) * lo1).min(p_hat),
                        ci_high: (pi0 * hi0 + (1.0 - pi0) * hi1).max(p_hat),
                        n_errors: e0 + e1,
                        n_paths: 2 * n,
                    }
                })
                .collect();
            ErrorCurve { sensor, points }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    RegressionSlope,
    Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub sensor: usize,
    pub fitted_rate: f64,
    pub window: (u64, u64),
    pub stderr: f64,
    pub method: FitMethod,
    pub points_used: usize,
}

/// Ordinary least squares of `y` on `x`: `(slope, slope standard error)`.
/// The standard error is 0 with exactly two points.
fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let xm = x.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - ym - slope * (a - xm)).powi(2)).sum();
    let se = if x.len() > 2 { (rss / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, se, sxx)
}

/// Slope of `-log p_hat` against `k` over checkpoints in `window` with at
/// least [`MIN_ERRORS`] errors.
///
/// The standard error is the larger of the regression-residual error and the
/// binomial error of the points, propagated through the slope weights with
/// `Var(log p_hat) ~ (1 - p) / n_errors`.
pub fn fit_decay_rate(curve: &ErrorCurve, window: (u64, u64)) -> Result<RateFit> {
    let usable: Vec<&CurvePoint> = curve
        .points
        .iter()
        .filter(|p| p.k >= window.0 && p.k <= window.1 && p.n_errors >= MIN_ERRORS && p.p_hat > 0.0)
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData { usable: usable.len(), required: 3 });
    }
    let x: Vec<f64> = usable.iter().map(|p| p.k as f64).collect();
    let y: Vec<f64> = usable.iter().map(|p| -p.p_hat.ln()).collect();
    let (slope, resid_se, sxx) = ols_slope(&x, &y);
    let xm = x.iter().sum::<f64>() / x.len() as f64;
    let binom_var: f64 = usable
        .iter()
        .zip(&x)
        .map(|(p, &k)| ((k - xm) / sxx).powi(2) * (1.0 - p.p_hat) / p.n_errors as f64)
        .sum();
    Ok(RateFit {
        sensor: curve.sensor,
        fitted_rate: slope,
        window,
        stderr: resid_se.max(binom_var.sqrt()),
        method: FitMethod::RegressionSlope,
        points_used: usable.len(),
    })
}

/// `-(1/k) log p_hat(k)` at the last usable checkpoint in `window`.
pub fn fit_endpoint_rate(curve: &ErrorCurve, window: (u64, u64)) -> Result<RateFit> {
    let p = curve
        .points
        .iter()
        .rev()
        .find(|p| p.k >= window.0 && p.k <= window.1 && p.n_errors >= MIN_ERRORS && p.p_hat > 0.0)
        .ok_or(Error::InsufficientData { usable: 0, required: 1 })?;
    let k = p.k as f64;
    Ok(RateFit {
        sensor: curve.sensor,
        fitted_rate: -p.p_hat.ln() / k,
        window,
        stderr: ((1.0 - p.p_hat) / p.n_errors as f64).sqrt() / k,
        method: FitMethod::Endpoint,
        points_used: 1,
    })
}

/// Slope of `-log p` against `k` for an exactly known curve `(k, log p)`.
pub fn fit_log_decay(points: &[(u64, f64)], window: (u64, u64)) -> Result<(f64, f64)> {
    let used: Vec<&(u64, f64)> = points.iter().filter(|(k, lp)| *k >= window.0 && *k <= window.1 && lp.is_finite()).collect();
    if used.len() < 3 {
        return Err(Error::InsufficientData { usable: used.len(), required: 3 });
    }
    let x: Vec<f64> = used.iter().map(|(k, _)| *k as f64).collect();
    let y: Vec<f64> = used.iter().map(|(_, lp)| -lp).collect();
    let (slope, se, _) = ols_slope(&x, &y);
    Ok((slope, se))
}

/// Theoretical prediction for one sensor, as consumed by [`compare_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorTheory {
    pub sensor: usize,
    pub report: RateReport,
    /// True when `report` holds the exact rate rather than a lower bound.
    pub exact: bool,
    pub c_tot: f64,
    /// The sensor's own Chernoff information, when defined.
    pub c_i: Option<f64>,
    /// Probability that the sensor has an online link at a given time.
    pub p_i: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Too few errors to fit a rate.
    Censored,
    /// No simulation data.
    TheoryOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorComparison {
    pub sensor: usize,
    pub fit: Option<RateFit>,
    pub report: RateReport,
    pub exact: bool,
    /// Centralized rate `C_tot`.
    pub centralized_rate: f64,
    /// Rate of the sensor working alone, `C_i`.
    pub no_cooperation_rate: Option<f64>,
    /// `C_i + |log(1 - P_i)|`: no sensor can decay faster than this.
    pub connectivity_rate_cap: Option<f64>,
    pub verdict: Verdict,
}

/// Pairs each sensor's fitted rate with its theory and judges agreement.
///
/// * exact theory or a met sufficient condition: pass when the relative error
///   to the predicted rate (`C_tot` in the optimal regime) is within
///   `tolerance`;
/// * lower bound only: pass when `rate + 2 stderr >= bound (1 - tolerance)`;
/// * in every case, the rate must not exceed the connectivity cap by more
///   than `2 stderr`.
pub fn compare_report(curves: &[ErrorCurve], theory: &[SensorTheory], window: (u64, u64), tolerance: f64) -> Vec<SensorComparison> {
    theory
        .iter()
        .map(|t| {
            let cap = match (t.c_i, t.p_i) {
                (Some(c), Some(p)) => Some(c - (-p).ln_1p()),
                _ => None,
            };
            let base = SensorComparison {
                sensor: t.sensor,
                fit: None,
                report: t.report,
                exact: t.exact,
                centralized_rate: t.c_tot,
                no_cooperation_rate: t.c_i,
                connectivity_rate_cap: cap,
                verdict: Verdict::TheoryOnly,
            };
            let Some(curve) = curves.iter().find(|c| c.sensor == t.sensor) else {
                return base;
            };
            let Ok(fit) = fit_decay_rate(curve, window) else {
                return SensorComparison { verdict: Verdict::Censored, ..base };
            };
            let (rate, se) = (fit.fitted_rate, fit.stderr);
            let target = if t.report.regime == Regime::Optimal { t.c_tot } else { t.report.theoretical_rate_or_bound };
            let mut ok = if t.exact || t.report.sufficient_condition_met {
                (rate - target).abs() <= tolerance * target
            } else {
                rate + 2.0 * se >= target * (1.0 - tolerance)
            };
            if let Some(c) = cap {
                ok &= rate <= c + 2.0 * se;
            }
            let report = RateReport { empirical_rate: Some(rate), ..t.report };
            SensorComparison { fit: Some(fit), report, verdict: if ok { Verdict::Pass } else { Verdict::Fail }, ..base }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn fmt_bool(v: Option<bool>) -> String {
    v.map_or_else(|| "NA".to_string(), |b| b.to_string())
}

/// `sensor,k,p_hat,ci_low,ci_high,n_errors,n_paths`, sensors 1-based, after
/// the `# ...` header lines.
pub fn write_curves_csv<W: Write>(mut w: W, header: &[String], curves: &[ErrorCurve]) -> Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "sensor,k,p_hat,ci_low,ci_high,n_errors,n_paths")?;
    for c in curves {
        for p in &c.points {
            writeln!(w, "{},{},{},{},{},{},{}", c.sensor + 1, p.k, p.p_hat, p.ci_low, p.ci_high, p.n_errors, p.n_paths)?;
        }
    }
    Ok(())
}

pub const RATES_COLUMNS: &str = "sensor,empirical_rate,stderr,theory_rate,regime,sufficient_met,necessary_met";

/// One [`RATES_COLUMNS`] row; censored fits print `NA`.
pub fn rates_row(c: &SensorComparison) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        c.sensor + 1,
        fmt_opt(c.fit.map(|f| f.fitted_rate)),
        fmt_opt(c.fit.map(|f| f.stderr)),
        c.report.theoretical_rate_or_bound,
        c.report.regime,
        c.report.sufficient_condition_met,
        fmt_bool(c.report.necessary_condition_met)
    )
}

pub fn write_rates_csv<W: Write>(mut w: W, header: &[String], rows: &[SensorComparison]) -> Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "{RATES_COLUMNS}")?;
    for c in rows {
        writeln!(w, "{}", rates_row(c))?;
    }
    Ok(())
}

/// `path,k,x_1,...,x_N` rows for recorded trajectories.
pub fn write_trajectories_csv<W: Write>(mut w: W, header: &[String], traj: &[TrajectoryPoint]) -> Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    let n = traj.first().map_or(0, |t| t.x.len());
    let cols: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    writeln!(w, "path,k,{}", cols.join(","))?;
    for t in traj {
        let xs: Vec<String> = t.x.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{},{}", t.path, t.k, xs.join(","))?;
    }
    Ok(())
}
