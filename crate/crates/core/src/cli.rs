//! Batch front end: `graph-gen`, `theory`, `simulate` and `sweep`.
//!
//! Configurations are JSON documents; `--set a.b.c=value` overrides any
//! field before validation (values parse as JSON, falling back to a string).
//! Every output file starts with `#` lines carrying the config hash (SHA-256
//! of the canonical JSON, without `workers`) and the master seed. Sensors
//! and nodes are numbered from 1 in all files and flags.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::RngSeed;
use crate::montecarlo::{
    compare_report, run_experiment, write_curves_csv, write_rates_csv, write_trajectories_csv, ErrorCurve,
    ExperimentConfig, SensorComparison, SensorTheory, RATES_COLUMNS,
};
use crate::network::{
    connectivity_probability, geometric_supergraph, geometric_supergraph_with_edges, pendant_supergraph, spectral_r,
    Supergraph, WeightModel,
};
use crate::observation::{derive_stats, DerivedStats, ObservationModel};
use crate::theory::{
    generic_report, phi_star, switching_fusion_report, theorem1_optimality_threshold, theorem3_necessary,
    SwitchingFusionSpec, Theorem2Inputs,
};

/// Offset between the random streams of consecutive sweep points.
pub const SWEEP_STREAM_STRIDE: u64 = 1 << 32;

/// Stream offset used for the Monte Carlo estimate of `r`.
pub const SPECTRAL_STREAM_OFFSET: u64 = 1 << 31;

/// Default radius of the geometric part of a pendant graph.
pub const DEFAULT_PENDANT_RADIUS: f64 = 0.45;

#[derive(Debug, Parser)]
#[command(name = "consensus-detect", version, about = "Running-consensus distributed detection: theory and Monte Carlo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a geometric or pendant supergraph as JSON.
    GraphGen(GraphGenArgs),
    /// Tabulate decay rates, bounds and thresholds over a parameter grid.
    Theory(RunArgs),
    /// Run one Monte Carlo experiment.
    Simulate(RunArgs),
    /// Run one experiment per value of a swept parameter.
    Sweep(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Override a config field, e.g. `--set weights.switching_fusion.p=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads (does not affect results).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GraphGenArgs {
    #[arg(long)]
    pub n: usize,
    /// Connection radius on the unit square.
    #[arg(long, conflicts_with = "target_m")]
    pub radius: Option<f64>,
    /// Choose the radius so that the graph has exactly this many edges.
    #[arg(long)]
    pub target_m: Option<usize>,
    /// Formation probability of every edge.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Node attached to `--anchor` only (1-based).
    #[arg(long, requires_all = ["anchor", "q_pendant", "q_rest"])]
    pub pendant: Option<usize>,
    #[arg(long)]
    pub anchor: Option<usize>,
    #[arg(long)]
    pub q_pendant: Option<f64>,
    #[arg(long)]
    pub q_rest: Option<f64>,
    /// Output JSON file.
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GraphGen(a) => cmd_graph_gen(&a).map(|_| ()),
        Command::Theory(a) => cmd_theory(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

/// Builds the supergraph described by the flags, writes it and prints a
/// short summary.
pub fn cmd_graph_gen(a: &GraphGenArgs) -> Result<Supergraph> {
    let seed = RngSeed::new(a.seed, 0);
    let g = if let Some(p) = a.pendant {
        let (anchor, qp, qr) = (a.anchor.unwrap_or(0), a.q_pendant.unwrap_or(0.0), a.q_rest.unwrap_or(0.0));
        if p == 0 || anchor == 0 {
            return Err(Error::config("node labels start at 1"));
        }
        let radius = a.radius.unwrap_or(DEFAULT_PENDANT_RADIUS);
        pendant_supergraph(a.n, p - 1, anchor - 1, qp, qr, radius, seed)?
    } else {
        let q = a.q.ok_or_else(|| Error::config("--q is required"))?;
        match (a.radius, a.target_m) {
            (Some(r), None) => geometric_supergraph(a.n, r, q, seed)?,
            (None, Some(m)) => {
                let max = a.n * a.n.saturating_sub(1) / 2;
                if m > max {
                    return Err(Error::config(format!(
                        "target M={m} is unreachable for N={}; closest M found is {max} (radius sqrt(2))",
                        a.n
                    )));
                }
                let (g, radius) = geometric_supergraph_with_edges(a.n, m, q, seed)?;
                if g.edge_count() != m {
                    return Err(Error::numeric(format!(
                        "target M={m} is unreachable (tied distances); closest M found is {}",
                        g.edge_count()
                    )));
                }
                log::info!("radius {radius} gives {m} edges");
                g
            }
            _ => return Err(Error::config("give exactly one of --radius and --target-m")),
        }
    };
    write_json(&a.out, &g)?;
    let deg: Vec<usize> = (0..g.n()).map(|i| g.degree(i)).collect();
    println!(
        "N={} M={} degree min={} mean={:.3} max={} connected={}",
        g.n(),
        g.edge_count(),
        deg.iter().min().unwrap_or(&0),
        deg.iter().sum::<usize>() as f64 / g.n() as f64,
        deg.iter().max().unwrap_or(&0),
        g.is_connected()
    );
    Ok(g)
}

/// Sets `path` (dot-separated; numeric segments index arrays) to `value`.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(format!("`{part}` in `{key}` must index an array")))?;
                items.get_mut(idx).ok_or_else(|| Error::config(format!("index {idx} out of range in `{key}`")))?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Null),
            other => {
                if other.is_null() {
                    *other = Value::Object(Map::new());
                    other.as_object_mut().unwrap().entry(part.to_string()).or_insert(Value::Null)
                } else {
                    return Err(Error::config(format!("cannot descend into `{part}` of `{key}`")));
                }
            }
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    Err(Error::config("empty override key"))
}

/// SHA-256 of the canonical (key-sorted, compact) JSON without `workers`.
pub fn config_hash(doc: &Value) -> String {
    let mut v = doc.clone();
    if let Some(map) = v.as_object_mut() {
        map.remove("workers");
    }
    hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
}

fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", Value::String((*k).clone()), canonical_json(&map[*k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// Reads a config file and applies overrides.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    let mut doc: Value = serde_json::from_str(&text)?;
    if !doc.is_object() {
        return Err(Error::Schema("config must be a JSON object".into()));
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    Ok(doc)
}

fn typed<T: for<'de> Deserialize<'de>>(v: &Value, what: &str) -> Result<T> {
    T::deserialize(v).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomModelSpec {
    n: usize,
    #[serde(default = "one")]
    alpha_s: f64,
    seed: u64,
    #[serde(default)]
    stream_index: u64,
    /// Rescale the covariance to this total Chernoff information.
    c_tot: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UncorrelatedModelSpec {
    signal: f64,
    variances: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

/// An observation model given explicitly (`N, m0, m1, S, prior_h0`), as
/// `{"random": {n, alpha_s, seed, stream_index?, c_tot?}}` or as
/// `{"uncorrelated": {signal, variances}}`.
pub fn model_from_value(v: &Value) -> Result<ObservationModel> {
    if let Some(spec) = v.get("random") {
        let s: RandomModelSpec = typed(spec, "model.random")?;
        let m = ObservationModel::random(s.n, s.alpha_s, RngSeed::new(s.seed, s.stream_index))?;
        return match s.c_tot {
            Some(c) => m.rescaled_to_chernoff(c),
            None => Ok(m),
        };
    }
    if let Some(spec) = v.get("uncorrelated") {
        let s: UncorrelatedModelSpec = typed(spec, "model.uncorrelated")?;
        return ObservationModel::uncorrelated(s.signal, &s.variances);
    }
    typed(v, "model")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum WeightsSpec {
    SwitchingFusion { p: f64 },
    Metropolis { graph: Option<Value>, graph_path: Option<PathBuf> },
}

fn load_graph(graph: &Option<Value>, graph_path: &Option<PathBuf>, base: &Path) -> Result<Supergraph> {
    match (graph, graph_path) {
        (Some(g), None) => typed(g, "weights.metropolis.graph"),
        (None, Some(p)) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let text = fs::read_to_string(&path)?;
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
        }
        _ => Err(Error::Schema("weights.metropolis needs exactly one of `graph` and `graph_path`".into())),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, num: usize },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, num } => match num {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64).collect(),
            },
        };
        if v.is_empty() {
            return Err(Error::config("grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("grid values must be finite"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum CheckpointSpec {
    List(Vec<u64>),
    Step { step: u64 },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Q,
    P,
    QPendant,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSpec {
    variable: SweepVariable,
    grid: Grid,
}

fn default_paths() -> usize {
    20_000
}
fn default_tolerance() -> f64 {
    0.2
}
fn default_budget() -> usize {
    1024
}
fn default_r_samples() -> usize {
    crate::network::DEFAULT_R_SAMPLES
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    model: Value,
    weights: WeightsSpec,
    #[serde(default = "default_paths")]
    paths_per_hypothesis: usize,
    k_max: u64,
    checkpoints: Option<CheckpointSpec>,
    master_seed: u64,
    #[serde(default)]
    stream_index: u64,
    record_sensors: Option<Vec<usize>>,
    #[serde(default)]
    two_hypothesis: bool,
    #[serde(default)]
    trajectory_paths: usize,
    fit_window: Option<(u64, u64)>,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_budget")]
    memory_budget_mb: usize,
    #[serde(default = "default_r_samples")]
    r_samples: usize,
    sweep: Option<SweepSpec>,
    workers: Option<usize>,
}

/// A fully resolved simulation setup.
struct Prepared {
    hash: String,
    cfg: SimulateConfig,
    model: ObservationModel,
    stats: DerivedStats,
    weights: WeightModel,
    experiment: ExperimentConfig,
    window: (u64, u64),
}

fn prepare(args: &RunArgs) -> Result<Prepared> {
    let doc = load_config(&args.config, &args.overrides)?;
    let hash = config_hash(&doc);
    let cfg: SimulateConfig = typed(&doc, "config")?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let model = model_from_value(&cfg.model)?;
    let stats = derive_stats(&model)?;
    let weights = match &cfg.weights {
        WeightsSpec::SwitchingFusion { p } => WeightModel::switching_fusion(model.n(), *p)?,
        WeightsSpec::Metropolis { graph, graph_path } => WeightModel::metropolis(load_graph(graph, graph_path, base)?),
    };
    let checkpoints = match &cfg.checkpoints {
        None => (1..=cfg.k_max).collect(),
        Some(CheckpointSpec::List(v)) => v.clone(),
        Some(CheckpointSpec::Step { step }) => {
            if *step == 0 {
                return Err(Error::config("checkpoints.step must be positive"));
            }
            let mut v: Vec<u64> = std::iter::once(1).chain((1..).map(|i| i * step).take_while(|k| *k <= cfg.k_max)).collect();
            v.push(cfg.k_max);
            v.sort_unstable();
            v.dedup();
            v
        }
    };
    let record_sensors = match &cfg.record_sensors {
        None => None,
        Some(v) => Some(
            v.iter()
                .map(|&s| s.checked_sub(1).ok_or_else(|| Error::config("sensor labels start at 1")))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let mut experiment = ExperimentConfig::new(
        model.clone(),
        weights.clone(),
        cfg.paths_per_hypothesis,
        cfg.k_max,
        RngSeed::new(cfg.master_seed, cfg.stream_index),
    )
    .with_checkpoints(checkpoints);
    experiment.record_sensors = record_sensors;
    experiment.two_hypothesis = cfg.two_hypothesis;
    experiment.trajectory_paths = cfg.trajectory_paths;
    experiment.workers = args.workers.or(cfg.workers);
    experiment.memory_budget_bytes = cfg.memory_budget_mb.saturating_mul(1 << 20);
    experiment.validate()?;
    let window = cfg.fit_window.unwrap_or((cfg.k_max / 2, cfg.k_max));
    if window.0 > window.1 {
        return Err(Error::config("fit_window must be [k_lo, k_hi] with k_lo <= k_hi"));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(Error::config("tolerance must be positive"));
    }
    Ok(Prepared { hash, cfg, model, stats, weights, experiment, window })
}

/// Spectral summary of a weight model: `(r, standard error)`.
fn r_of(weights: &WeightModel, samples: usize, seed: RngSeed) -> Result<(f64, f64)> {
    spectral_r(weights, samples, seed.offset(SPECTRAL_STREAM_OFFSET))
}

/// Per-sensor theoretical prediction for an experiment.
pub fn sensor_theory(
    model: &ObservationModel,
    stats: &DerivedStats,
    weights: &WeightModel,
    r: f64,
    sensors: &[usize],
) -> Result<Vec<SensorTheory>> {
    let c_i = stats.c_i.as_ref();
    let equal_sensors = c_i.is_some_and(|c| c.iter().all(|x| (x / c[0] - 1.0).abs() < 1e-12));
    let mut out = Vec::with_capacity(sensors.len());
    for &s in sensors {
        let ci = c_i.map(|c| c[s]);
        let p_i = if model.n() > 1 { Some(connectivity_probability(weights, s)?) } else { None };
        let (report, exact) = match weights {
            WeightModel::SwitchingFusion { p, .. } if equal_sensors => {
                (switching_fusion_report(&SwitchingFusionSpec::new(model.n(), ci.unwrap(), *p)?)?, true)
            }
            _ => (generic_report(&Theorem2Inputs::new(stats, r)?, ci, p_i)?, false),
        };
        out.push(SensorTheory { sensor: s, report, exact, c_tot: stats.c_tot, c_i: ci, p_i });
    }
    Ok(out)
}

struct PointResult {
    curves: Vec<ErrorCurve>,
    comparisons: Vec<SensorComparison>,
    trajectories: Vec<crate::montecarlo::TrajectoryPoint>,
    r: (f64, f64),
}

fn simulate_point(p: &Prepared, weights: &WeightModel, seed: RngSeed) -> Result<PointResult> {
    let mut exp = p.experiment.clone();
    exp.weights = weights.clone();
    exp.seed = seed;
    exp.validate()?;
    let r = r_of(weights, p.cfg.r_samples, seed)?;
    let theory = sensor_theory(&p.model, &p.stats, weights, r.0, &exp.sensors())?;
    let res = run_experiment(&exp)?;
    let comparisons = compare_report(&res.curves, &theory, p.window, p.cfg.tolerance);
    Ok(PointResult { curves: res.curves, comparisons, trajectories: res.trajectories, r })
}

fn header(p: &Prepared) -> Vec<String> {
    vec![format!(
        "config_hash={} master_seed={} stream_index={}",
        p.hash, p.cfg.master_seed, p.cfg.stream_index
    )]
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_manifest(dir: &Path, command: &str, p: &Prepared, start: Instant, outputs: &[&str], extra: Value) -> Result<()> {
    let mut m = json!({
        "command": command,
        "config_hash": p.hash,
        "master_seed": p.cfg.master_seed,
        "stream_index": p.cfg.stream_index,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "outputs": outputs,
    });
    if let (Some(obj), Value::Object(more)) = (m.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_json(&dir.join("manifest.json"), &m)
}

/// Runs one experiment and writes `curves.csv`, `rates.csv`,
/// `trajectories.csv` (when requested) and `manifest.json`.
pub fn cmd_simulate(args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let p = prepare(args)?;
    fs::create_dir_all(&args.out)?;
    let res = simulate_point(&p, &p.weights, p.experiment.seed)?;
    let mut h = header(&p);
    write_curves_csv(create(&args.out, "curves.csv")?, &h, &res.curves)?;
    h.push(format!("r={} r_stderr={} fit_window={}..{}", res.r.0, res.r.1, p.window.0, p.window.1));
    write_rates_csv(create(&args.out, "rates.csv")?, &h, &res.comparisons)?;
    let mut outputs = vec!["curves.csv", "rates.csv"];
    if !res.trajectories.is_empty() {
        write_trajectories_csv(create(&args.out, "trajectories.csv")?, &header(&p), &res.trajectories)?;
        outputs.push("trajectories.csv");
    }
    for c in &res.comparisons {
        log::info!("sensor {}: {:?}", c.sensor + 1, c.verdict);
    }
    write_manifest(&args.out, "simulate", &p, start, &outputs, json!({"r": res.r.0, "r_stderr": res.r.1}))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

/// Runs the base experiment once per grid value of `sweep.variable` and
/// writes `sweep.csv` and `sweep_curves.csv`. Point `i` uses stream index
/// `stream_index + i * 2^32`, so point 0 reproduces `simulate`.
pub fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let p = prepare(args)?;
    let sweep = p.cfg.sweep.clone().ok_or_else(|| Error::Schema("config: missing field `sweep`".into()))?;
    let grid = sweep.grid.values()?;
    let points: Vec<WeightModel> = grid
        .iter()
        .map(|&v| match (sweep.variable, &p.weights) {
            (SweepVariable::P, WeightModel::SwitchingFusion { n, .. }) => WeightModel::switching_fusion(*n, v),
            (SweepVariable::Q, WeightModel::LinkFailureMetropolis(g)) => Ok(WeightModel::metropolis(g.with_uniform_q(v)?)),
            (SweepVariable::QPendant, WeightModel::LinkFailureMetropolis(g)) => {
                let pend = g.pendant().ok_or_else(|| Error::config("sweeping q_pendant needs a graph with a pendant node"))?;
                let e = *g.incident(pend).next().ok_or_else(|| Error::config("pendant node has no edge"))?;
                Ok(WeightModel::metropolis(g.with_edge_q(e.i, e.j, v)?))
            }
            _ => Err(Error::config(format!("sweep variable {:?} does not apply to these weights", sweep.variable))),
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(&args.out)?;
    let mut rates = create(&args.out, "sweep.csv")?;
    let mut curves = create(&args.out, "sweep_curves.csv")?;
    for h in header(&p) {
        writeln!(rates, "# {h}")?;
        writeln!(curves, "# {h}")?;
    }
    writeln!(rates, "value,r,r_stderr,{RATES_COLUMNS}")?;
    writeln!(curves, "value,sensor,k,p_hat,ci_low,ci_high,n_errors,n_paths")?;
    let mut summary = Vec::new();
    for (i, (v, w)) in grid.iter().zip(&points).enumerate() {
        let seed = p.experiment.seed.offset(i as u64 * SWEEP_STREAM_STRIDE);
        let res = simulate_point(&p, w, seed)?;
        for c in &res.comparisons {
            writeln!(rates, "{v},{},{},{}", res.r.0, res.r.1, crate::montecarlo::rates_row(c))?;
        }
        let fits: Vec<_> = res.comparisons.iter().filter_map(|c| c.fit).collect();
        let mean = |f: &dyn Fn(&crate::montecarlo::RateFit) -> f64| {
            (!fits.is_empty()).then(|| fits.iter().map(f).sum::<f64>() / fits.len() as f64)
        };
        let (mean_rate, mean_se) = (mean(&|f| f.fitted_rate), mean(&|f| f.stderr));
        let mean_theory =
            res.comparisons.iter().map(|c| c.report.theoretical_rate_or_bound).sum::<f64>() / res.comparisons.len() as f64;
        writeln!(rates, "{v},{},{},mean,{},{},{mean_theory},NA,NA,NA", res.r.0, res.r.1, fmt_opt(mean_rate), fmt_opt(mean_se))?;
        for c in &res.curves {
            for q in &c.points {
                writeln!(curves, "{v},{},{},{},{},{},{},{}", c.sensor + 1, q.k, q.p_hat, q.ci_low, q.ci_high, q.n_errors, q.n_paths)?;
            }
        }
        summary.push(json!({"value": v, "stream_index": seed.stream_index, "r": res.r.0, "r_stderr": res.r.1, "mean_rate": mean_rate}));
        log::info!("sweep point {v}: mean rate {:?}", mean_rate);
    }
    rates.flush()?;
    curves.flush()?;
    write_manifest(&args.out, "sweep", &p, start, &["sweep.csv", "sweep_curves.csv"], json!({ "points": summary }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwitchingFusionTheory {
    n: usize,
    c_tot: f64,
    p_grid: Grid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TheoryConfig {
    switching_fusion: Option<SwitchingFusionTheory>,
    model: Option<Value>,
    r_grid: Option<Grid>,
    graph: Option<Value>,
    graph_path: Option<PathBuf>,
    q_grid: Option<Grid>,
    #[serde(default)]
    master_seed: u64,
    #[serde(default)]
    stream_index: u64,
    #[serde(default = "default_r_samples")]
    r_samples: usize,
    workers: Option<usize>,
}

/// One row of the theory table.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub value: f64,
    pub r: f64,
    pub r_stderr: f64,
    pub rate_or_bound: f64,
    pub regime: crate::theory::Regime,
    pub sufficient_met: bool,
    pub necessary_met: Option<bool>,
    pub p_star: Option<f64>,
    pub t2_log_r_threshold: f64,
}

/// Exact switching-fusion rates for `N` identical sensors over a `p` grid.
pub fn switching_fusion_table(n: usize, c_tot: f64, grid: &[f64]) -> Result<Vec<TheoryRow>> {
    let c_i = c_tot / n as f64;
    let nf = n as f64;
    grid.iter()
        .map(|&p| {
            let spec = SwitchingFusionSpec::new(n, c_i, p)?;
            let (rate, regime) = phi_star(&spec);
            Ok(TheoryRow {
                value: p,
                r: 1.0 - p,
                r_stderr: 0.0,
                rate_or_bound: rate,
                regime,
                sufficient_met: regime == crate::theory::Regime::Optimal,
                necessary_met: Some(theorem3_necessary(c_tot, c_i, p)?),
                p_star: Some(theorem1_optimality_threshold(&spec)),
                // K = 4 and ||S_eta|| = 8 C_i for identical uncorrelated sensors
                t2_log_r_threshold: (5.0 * nf * nf - 4.0 * nf) * c_i,
            })
        })
        .collect()
}

fn generic_row(stats: &DerivedStats, value: f64, r: f64, se: f64, p_i: Option<Vec<f64>>) -> Result<TheoryRow> {
    let inp = Theorem2Inputs::new(stats, r)?;
    let rep = generic_report(&inp, None, None)?;
    let necessary = match (&stats.c_i, p_i) {
        (Some(c), Some(p)) => {
            let mut all = true;
            for (ci, pi) in c.iter().zip(p) {
                all &= theorem3_necessary(stats.c_tot, *ci, pi)?;
            }
            Some(all)
        }
        _ => None,
    };
    Ok(TheoryRow {
        value,
        r,
        r_stderr: se,
        rate_or_bound: rep.theoretical_rate_or_bound,
        regime: rep.regime,
        sufficient_met: rep.sufficient_condition_met,
        necessary_met: necessary,
        p_star: None,
        t2_log_r_threshold: inp.sufficient_threshold(),
    })
}

pub fn write_theory_csv<W: Write>(mut w: W, header: &[String], variable: &str, rows: &[TheoryRow]) -> Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "{variable},r,r_stderr,rate_or_bound,regime,sufficient_met,necessary_met,p_star,t2_log_r_threshold")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.value,
            r.r,
            r.r_stderr,
            r.rate_or_bound,
            r.regime,
            r.sufficient_met,
            r.necessary_met.map_or("NA".to_string(), |b| b.to_string()),
            fmt_opt(r.p_star),
            r.t2_log_r_threshold
        )?;
    }
    Ok(())
}

/// Writes `theory.csv` for one of three setups: switching fusion over a `p`
/// grid; a model over an `r` grid; a model on a supergraph over a uniform
/// `q` grid (with `r` estimated by Monte Carlo).
pub fn cmd_theory(args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let doc = load_config(&args.config, &args.overrides)?;
    let hash = config_hash(&doc);
    let cfg: TheoryConfig = typed(&doc, "config")?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let (variable, rows) = match (&cfg.switching_fusion, &cfg.model) {
        (Some(sf), None) => ("p", switching_fusion_table(sf.n, sf.c_tot, &sf.p_grid.values()?)?),
        (None, Some(m)) => {
            let model = model_from_value(m)?;
            let stats = derive_stats(&model)?;
            match (&cfg.r_grid, &cfg.q_grid) {
                (Some(g), None) => {
                    let rows = g.values()?.into_iter().map(|r| generic_row(&stats, r, r, 0.0, None)).collect::<Result<_>>()?;
                    ("r", rows)
                }
                (None, Some(g)) => {
                    let graph = load_graph(&cfg.graph, &cfg.graph_path, base)?;
                    if graph.n() != model.n() {
                        return Err(Error::config("graph and model sizes differ"));
                    }
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(args.workers.or(cfg.workers).unwrap_or(0))
                        .build()
                        .map_err(|e| Error::config(e.to_string()))?;
                    let mut rows = Vec::new();
                    for (i, q) in g.values()?.into_iter().enumerate() {
                        let w = WeightModel::metropolis(graph.with_uniform_q(q)?);
                        let seed = RngSeed::new(cfg.master_seed, cfg.stream_index).offset(i as u64 * SWEEP_STREAM_STRIDE);
                        let (r, se) = pool.install(|| r_of(&w, cfg.r_samples, seed))?;
                        let p_i = (0..model.n()).map(|s| connectivity_probability(&w, s)).collect::<Result<Vec<_>>>()?;
                        rows.push(generic_row(&stats, q, r, se, Some(p_i))?);
                    }
                    ("q", rows)
                }
                _ => return Err(Error::Schema("config: give exactly one of `r_grid` and `q_grid` with `model`".into())),
            }
        }
        _ => return Err(Error::Schema("config: give exactly one of `switching_fusion` and `model`".into())),
    };
    fs::create_dir_all(&args.out)?;
    let h = vec![format!("config_hash={hash} master_seed={} stream_index={}", cfg.master_seed, cfg.stream_index)];
    write_theory_csv(create(&args.out, "theory.csv")?, &h, variable, &rows)?;
    write_json(
        &args.out.join("manifest.json"),
        &json!({
            "command": "theory",
            "config_hash": hash,
            "master_seed": cfg.master_seed,
            "stream_index": cfg.stream_index,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_s": start.elapsed().as_secs_f64(),
            "outputs": ["theory.csv"],
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_set_nested_values() {
        let mut doc = json!({"weights": {"switching_fusion": {"p": 0.5}}, "grid": [1, 2, 3]});
        apply_override(&mut doc, "weights.switching_fusion.p=0.9").unwrap();
        apply_override(&mut doc, "grid.1=7").unwrap();
        apply_override(&mut doc, "new.key=hello").unwrap();
        assert_eq!(doc["weights"]["switching_fusion"]["p"], json!(0.9));
        assert_eq!(doc["grid"], json!([1, 7, 3]));
        assert_eq!(doc["new"]["key"], json!("hello"));
        assert!(apply_override(&mut doc, "no_equals").is_err());
        assert!(apply_override(&mut doc, "grid.9=1").is_err());
    }

    #[test]
    fn hash_ignores_key_order_and_workers() {
        let a = json!({"a": 1, "b": {"c": [1, 2], "d": 0.1}});
        let b: Value = serde_json::from_str(r#"{"b": {"d": 0.1, "c": [1, 2]}, "a": 1, "workers": 8}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&json!({"a": 2, "b": {"c": [1, 2], "d": 0.1}})));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn model_forms() {
        let m = model_from_value(&json!({"uncorrelated": {"signal": 1.0, "variances": [1.0, 2.0]}})).unwrap();
        assert_eq!(m.n(), 2);
        let r = model_from_value(&json!({"random": {"n": 4, "seed": 3, "c_tot": 0.01}})).unwrap();
        assert!((derive_stats(&r).unwrap().c_tot - 0.01).abs() < 1e-12);
        let e = model_from_value(&json!({"N": 1, "m0": [0.0], "S": [1.0]})).unwrap_err();
        assert!(matches!(e, Error::Schema(ref s) if s.contains("m1")), "{e}");
    }

    #[test]
    fn grid_forms() {
        let g: Grid = serde_json::from_value(json!({"start": 0.0, "stop": 1.0, "num": 5})).unwrap();
        assert_eq!(g.values().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g: Grid = serde_json::from_value(json!([0.1, 0.2])).unwrap();
        assert_eq!(g.values().unwrap(), vec![0.1, 0.2]);
        let g: Grid = serde_json::from_value(json!([])).unwrap();
        assert!(matches!(g.values(), Err(Error::Config(_))));
    }

    #[test]
    fn switching_fusion_table_rows() {
        let rows = switching_fusion_table(20, 0.1, &[0.0, 0.5, 0.9]).unwrap();
        assert!((rows[0].rate_or_bound - 0.005).abs() < 1e-15);
        assert_eq!(rows[1].r, 0.5);
        assert_eq!(rows[2].regime, crate::theory::Regime::Optimal);
        assert!((rows[0].p_star.unwrap() - 0.8504313807773649).abs() < 1e-12);
        assert!((rows[0].t2_log_r_threshold - (5.0 * 400.0 - 80.0) * 0.005).abs() < 1e-12);
    }
}
