//! Supergraphs and random averaging matrices.
//!
//! Node indices are 0-based throughout the library. The JSON form of a
//! [`Supergraph`] uses 1-based labels, matching how sensors are numbered in
//! configuration files and on the command line.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{lambda2, RngSeed};

/// Tolerance for the row-sum and symmetry checks on sampled matrices.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Default number of draws behind a Monte Carlo estimate of `r`.
pub const DEFAULT_R_SAMPLES: usize = 10_000;

/// Number of groups in the delete-a-group jackknife of [`spectral_r`].
pub const JACKKNIFE_GROUPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Probability that the link is online at a given time.
    pub q: f64,
}

/// Undirected graph of all links that can ever be online, with independent
/// per-edge formation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Supergraph {
    n: usize,
    edges: Vec<Edge>,
    positions: Option<Vec<[f64; 2]>>,
    pendant: Option<usize>,
}

impl Supergraph {
    /// Edges are normalized to `i < j` and sorted; duplicates are rejected.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("a supergraph needs at least one node"));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i >= n || e.j >= n {
                return Err(Error::domain(format!("edge ({}, {}) has an endpoint outside 0..{n}", e.i, e.j)));
            }
            if e.i == e.j {
                return Err(Error::domain(format!("self-loop at node {}", e.i)));
            }
            if !(e.q > 0.0 && e.q <= 1.0) {
                return Err(Error::domain(format!(
                    "edge ({}, {}) has formation probability {} outside (0, 1]",
                    e.i, e.j, e.q
                )));
            }
            norm.push(Edge { i: e.i.min(e.j), j: e.i.max(e.j), q: e.q });
        }
        norm.sort_by_key(|e| (e.i, e.j));
        if norm.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::domain("duplicate edge"));
        }
        Ok(Self { n, edges: norm, positions: None, pendant: None })
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.len() != self.n {
            return Err(Error::domain("one position per node is required"));
        }
        self.positions = Some(positions);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    /// The attached node, for graphs built by [`pendant_supergraph`].
    pub fn pendant(&self) -> Option<usize> {
        self.pendant
    }

    pub fn degree(&self, i: usize) -> usize {
        self.incident(i).count()
    }

    pub fn incident(&self, i: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.i == i || e.j == i)
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Copy with every edge probability replaced by `q`.
    pub fn with_uniform_q(&self, q: f64) -> Result<Self> {
        let edges = self.edges.iter().map(|e| Edge { q, ..*e }).collect();
        let mut g = Self::new(self.n, edges)?;
        g.positions = self.positions.clone();
        g.pendant = self.pendant;
        Ok(g)
    }

    /// Copy with the probability of edge `{i, j}` replaced.
    pub fn with_edge_q(&self, i: usize, j: usize, q: f64) -> Result<Self> {
        let (a, b) = (i.min(j), i.max(j));
        if !self.edges.iter().any(|e| e.i == a && e.j == b) {
            return Err(Error::domain(format!("no edge ({i}, {j}) in the supergraph")));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| if e.i == a && e.j == b { Edge { q, ..*e } } else { *e })
            .collect();
        let mut g = Self::new(self.n, edges)?;
        g.positions = self.positions.clone();
        g.pendant = self.pendant;
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    i: usize,
    j: usize,
    q: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupergraphDoc {
    #[serde(rename = "N")]
    n: usize,
    edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pendant: Option<usize>,
}

impl Serialize for Supergraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SupergraphDoc {
            n: self.n,
            edges: self.edges.iter().map(|e| EdgeDoc { i: e.i + 1, j: e.j + 1, q: e.q }).collect(),
            positions: self.positions.clone(),
            pendant: self.pendant.map(|p| p + 1),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Supergraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = SupergraphDoc::deserialize(deserializer)?;
        let to0 = |x: usize| {
            if x == 0 || x > doc.n {
                Err(D::Error::custom(format!("node label {x} outside 1..={}", doc.n)))
            } else {
                Ok(x - 1)
            }
        };
        let mut edges = Vec::with_capacity(doc.edges.len());
        for e in &doc.edges {
            edges.push(Edge { i: to0(e.i)?, j: to0(e.j)?, q: e.q });
        }
        let pendant = doc.pendant.map(to0).transpose()?;
        let mut g = Supergraph::new(doc.n, edges).map_err(D::Error::custom)?;
        if let Some(p) = doc.positions {
            g = g.with_positions(p).map_err(D::Error::custom)?;
        }
        g.pendant = pendant;
        Ok(g)
    }
}

fn uniform_points(n: usize, seed: RngSeed) -> Vec<[f64; 2]> {
    let mut rng = seed.rng();
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn geometric_edges(points: &[[f64; 2]], radius: f64, q: f64) -> Vec<Edge> {
    let mut edges = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if dist(points[i], points[j]) < radius {
                edges.push(Edge { i, j, q });
            }
        }
    }
    edges
}

/// `n` points uniform on the unit square, joined when closer than `radius`.
pub fn geometric_supergraph(n: usize, radius: f64, uniform_q: f64, seed: RngSeed) -> Result<Supergraph> {
    if n < 2 {
        return Err(Error::domain("a geometric supergraph needs N >= 2"));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::domain(format!("radius must be nonnegative, got {radius}")));
    }
    let points = uniform_points(n, seed);
    Supergraph::new(n, geometric_edges(&points, radius, uniform_q))?.with_positions(points)
}

/// Radius giving exactly `target_edges` edges on the point set drawn from
/// `seed`, returned together with the graph.
///
/// The edge count is a step function of the radius, jumping at each pairwise
/// distance; the radius is placed midway between the `M`-th and `(M+1)`-th
/// smallest distances.
pub fn geometric_supergraph_with_edges(
    n: usize,
    target_edges: usize,
    uniform_q: f64,
    seed: RngSeed,
) -> Result<(Supergraph, f64)> {
    if n < 2 {
        return Err(Error::domain("a geometric supergraph needs N >= 2"));
    }
    let max_edges = n * (n - 1) / 2;
    if target_edges > max_edges {
        return Err(Error::domain(format!("N={n} admits at most {max_edges} edges")));
    }
    let points = uniform_points(n, seed);
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| dist(points[i], points[j]))
        .collect();
    d.sort_by(f64::total_cmp);
    let radius = match target_edges {
        0 => d[0] * 0.5,
        m if m == max_edges => d[m - 1] * 1.000001 + 1e-12,
        m => 0.5 * (d[m - 1] + d[m]),
    };
    let g = Supergraph::new(n, geometric_edges(&points, radius, uniform_q))?.with_positions(points)?;
    Ok((g, radius))
}

/// Geometric supergraph on the nodes other than `pendant`, with `q_rest` on
/// every edge; `pendant` is then linked to `anchor` alone with `q_pendant`.
pub fn pendant_supergraph(
    n: usize,
    pendant: usize,
    anchor: usize,
    q_pendant: f64,
    q_rest: f64,
    radius: f64,
    seed: RngSeed,
) -> Result<Supergraph> {
    if n < 3 {
        return Err(Error::domain("a pendant supergraph needs N >= 3"));
    }
    if pendant >= n || anchor >= n {
        return Err(Error::domain(format!("pendant {pendant} / anchor {anchor} outside 0..{n}")));
    }
    if pendant == anchor {
        return Err(Error::domain("pendant and anchor must differ"));
    }
    let rest: Vec<usize> = (0..n).filter(|&v| v != pendant).collect();
    let points = uniform_points(n, seed);
    let mut edges = Vec::new();
    for (a, &u) in rest.iter().enumerate() {
        for &v in &rest[a + 1..] {
            if dist(points[u], points[v]) < radius {
                edges.push(Edge { i: u, j: v, q: q_rest });
            }
        }
    }
    edges.push(Edge { i: pendant, j: anchor, q: q_pendant });
    let mut g = Supergraph::new(n, edges)?.with_positions(points)?;
    g.pendant = Some(pendant);
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightModel {
    /// `W = J` (everyone averages) with probability `p`, otherwise `W = I`.
    SwitchingFusion { n: usize, p: f64 },
    /// Independent link failures on a supergraph, Metropolis weights on the
    /// realized topology.
    LinkFailureMetropolis(Supergraph),
}

impl WeightModel {
    pub fn switching_fusion(n: usize, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("fusion probability must lie in [0,1], got {p}")));
        }
        Ok(Self::SwitchingFusion { n, p })
    }

    pub fn metropolis(graph: Supergraph) -> Self {
        Self::LinkFailureMetropolis(graph)
    }

    pub fn n(&self) -> usize {
        match self {
            Self::SwitchingFusion { n, .. } => *n,
            Self::LinkFailureMetropolis(g) => g.n(),
        }
    }

    /// Draws one realization using `rng`, reusing the buffers in `out`.
    ///
    /// Switching fusion consumes one uniform; Metropolis consumes one uniform
    /// per supergraph edge, in edge order.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Realization) {
        match self {
            Self::SwitchingFusion { p, .. } => {
                let u: f64 = rng.random();
                out.kind = if u < *p { Kind::Average } else { Kind::Identity };
            }
            Self::LinkFailureMetropolis(g) => {
                out.links.clear();
                out.degree.clear();
                out.degree.resize(g.n(), 0);
                for e in g.edges() {
                    let u: f64 = rng.random();
                    if u < e.q {
                        out.links.push((e.i, e.j, 0.0));
                        out.degree[e.i] += 1;
                        out.degree[e.j] += 1;
                    }
                }
                for l in out.links.iter_mut() {
                    let d = out.degree[l.0].max(out.degree[l.1]);
                    l.2 = 1.0 / (1.0 + d as f64);
                }
                out.kind = if out.links.is_empty() { Kind::Identity } else { Kind::Sparse };
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Identity,
    Average,
    Sparse,
}

/// A sampled averaging matrix in a compact form that can be applied to a
/// vector in `O(N + online links)` time.
#[derive(Debug, Clone)]
pub struct Realization {
    n: usize,
    kind: Kind,
    links: Vec<(usize, usize, f64)>,
    degree: Vec<u32>,
}

impl Realization {
    pub fn new(n: usize) -> Self {
        Self { n, kind: Kind::Identity, links: Vec::new(), degree: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == Kind::Identity
    }

    /// Online links with their weights; empty unless Metropolis.
    pub fn links(&self) -> &[(usize, usize, f64)] {
        if self.kind == Kind::Sparse {
            &self.links
        } else {
            &[]
        }
    }

    /// `out = W x`.
    pub fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        match self.kind {
            Kind::Identity => out.copy_from(x),
            Kind::Average => out.fill(x.mean()),
            Kind::Sparse => {
                out.copy_from(x);
                for &(i, j, w) in &self.links {
                    let d = w * (x[j] - x[i]);
                    out[i] += d;
                    out[j] -= d;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self.kind {
            Kind::Identity => DMatrix::identity(self.n, self.n),
            Kind::Average => DMatrix::from_element(self.n, self.n, 1.0 / self.n as f64),
            Kind::Sparse => {
                let mut w = DMatrix::zeros(self.n, self.n);
                for &(i, j, wij) in &self.links {
                    w[(i, j)] = wij;
                    w[(j, i)] = wij;
                }
                for i in 0..self.n {
                    let off: f64 = w.row(i).sum();
                    w[(i, i)] = 1.0 - off;
                }
                w
            }
        }
    }
}

/// A dense sampled weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSample {
    pub w: DMatrix<f64>,
}

impl WeightSample {
    /// Symmetric, nonnegative, rows summing to one, all within [`WEIGHT_TOL`].
    pub fn check(&self) -> Result<()> {
        check_doubly_stochastic(&self.w, WEIGHT_TOL)?;
        let n = self.w.nrows();
        for i in 0..n {
            for j in 0..i {
                if (self.w[(i, j)] - self.w[(j, i)]).abs() > WEIGHT_TOL {
                    return Err(Error::numeric(format!("asymmetric weight at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn identity(n: usize) -> Self {
        Self { w: DMatrix::identity(n, n) }
    }

    pub fn average(n: usize) -> Self {
        Self { w: DMatrix::from_element(n, n, 1.0 / n as f64) }
    }
}

/// Checks nonnegativity and unit row and column sums.
pub fn check_doubly_stochastic(w: &DMatrix<f64>, tol: f64) -> Result<()> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::numeric("weight matrix is not square"));
    }
    for i in 0..n {
        let row: f64 = w.row(i).sum();
        let col: f64 = w.column(i).sum();
        if (row - 1.0).abs() > tol || (col - 1.0).abs() > tol {
            return Err(Error::numeric(format!("row/column {i} sums to {row}/{col}")));
        }
        for j in 0..n {
            if w[(i, j)] < -tol {
                return Err(Error::numeric(format!("negative weight at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// One weight matrix, fully determined by `seed`.
pub fn sample_weight(model: &WeightModel, seed: RngSeed) -> WeightSample {
    let mut real = Realization::new(model.n());
    model.draw(&mut seed.rng(), &mut real);
    WeightSample { w: real.to_dense() }
}

/// `r = lambda_2(E[W^2])` with its standard error.
///
/// Exact for switching fusion (`r = 1 - p`, error 0); otherwise a Monte Carlo
/// estimate, see [`spectral_r_monte_carlo`].
pub fn spectral_r(model: &WeightModel, n_samples: usize, seed: RngSeed) -> Result<(f64, f64)> {
    match model {
        WeightModel::SwitchingFusion { n, p } => {
            if *n < 2 {
                return Err(Error::domain("r needs N >= 2"));
            }
            Ok((1.0 - p, 0.0))
        }
        WeightModel::LinkFailureMetropolis(_) => spectral_r_monte_carlo(model, n_samples, seed),
    }
}

/// Sample average of `W^2` over `n_samples` draws, then `lambda_2`.
///
/// Draws are split into [`JACKKNIFE_GROUPS`] groups (fewer when `n_samples`
/// is small), group `g` using stream `seed.offset(g)`. The standard error is
/// the delete-a-group jackknife; it is infinite with a single group.
pub fn spectral_r_monte_carlo(model: &WeightModel, n_samples: usize, seed: RngSeed) -> Result<(f64, f64)> {
    let n = model.n();
    if n < 2 {
        return Err(Error::domain("r needs N >= 2"));
    }
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be at least 1"));
    }
    let groups = JACKKNIFE_GROUPS.min(n_samples);
    let sums: Vec<(DMatrix<f64>, usize)> = (0..groups)
        .into_par_iter()
        .map(|g| {
            let count = n_samples / groups + usize::from(g < n_samples % groups);
            let mut rng = seed.offset(g as u64).rng();
            let mut real = Realization::new(n);
            let mut acc = DMatrix::zeros(n, n);
            for _ in 0..count {
                model.draw(&mut rng, &mut real);
                let w = real.to_dense();
                acc.gemm(1.0, &w, &w, 1.0);
            }
            (acc, count)
        })
        .collect();
    let total = sums.iter().fold(DMatrix::zeros(n, n), |a, (s, _)| a + s);
    let r = lambda2(&symmetrize(&total / n_samples as f64))?;
    if groups < 2 {
        return Ok((r, f64::INFINITY));
    }
    let mut loo = Vec::with_capacity(groups);
    for (s, c) in &sums {
        let m = (&total - s) / (n_samples - c) as f64;
        loo.push(lambda2(&symmetrize(m))?);
    }
    let g = groups as f64;
    let mean = loo.iter().sum::<f64>() / g;
    let var = (g - 1.0) / g * loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    Ok((r, var.sqrt()))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Probability that sensor `i` has at least one online link at a given time,
/// `1 - prod_e (1 - q_e)` over incident edges.
///
/// For switching fusion this is `p`, the probability of the all-to-all event.
pub fn connectivity_probability(model: &WeightModel, i: usize) -> Result<f64> {
    if i >= model.n() {
        return Err(Error::domain(format!("sensor index {i} out of range")));
    }
    match model {
        WeightModel::SwitchingFusion { p, .. } => Ok(*p),
        WeightModel::LinkFailureMetropolis(g) => {
            if g.degree(i) == 0 {
                log::warn!("sensor {} has no incident edges in the supergraph", i + 1);
            }
            Ok(1.0 - g.incident(i).map(|e| 1.0 - e.q).product::<f64>())
        }
    }
}

/// Per-row `(sum |V_il|, sum V_il^2)` of `V = W - J`.
pub fn deviation_row_norms(w: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let n = w.nrows();
    let jn = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            (0..n).fold((0.0, 0.0), |(a, b), l| {
                let v = w[(i, l)] - jn;
                (a + v.abs(), b + v * v)
            })
        })
        .collect()
}

/// Row bounds satisfied by `W - J` for any stochastic `W`:
/// `(2(N-1)/N, (N-1)/N)`.
pub fn deviation_row_bounds(n: usize) -> (f64, f64) {
    let n = n as f64;
    (2.0 * (n - 1.0) / n, (n - 1.0) / n)
}

/// `N^4 / eps^2 * r^m`, the bound on `P(||(W(k-1)-J)...(W(j)-J)|| > eps)`
/// with `m = k - j`.
pub fn product_deviation_bound(n: usize, eps: f64, r: f64, m: u32) -> f64 {
    (n as f64).powi(4) / (eps * eps) * r.powi(m as i32)
}

/// Spectral norm of `(W_m - J) ... (W_1 - J)` for dense samples.
pub fn deviation_product_norm(samples: &[WeightSample]) -> f64 {
    let Some(first) = samples.first() else {
        return 0.0;
    };
    let n = first.w.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let mut prod = DMatrix::identity(n, n);
    for s in samples {
        prod = (&s.w - &j) * prod;
    }
    crate::gaussian::spectral_norm(&prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn seed(s: u64) -> RngSeed {
        RngSeed::new(s, 0)
    }

    #[test]
    fn geometric_trivial_radii() {
        let g = geometric_supergraph(2, 2.0, 0.5, seed(1)).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(geometric_supergraph(10, 0.0, 0.5, seed(1)).unwrap().edge_count(), 0);
        assert!(geometric_supergraph(1, 0.3, 0.5, seed(1)).is_err());
    }

    #[test]
    fn edge_target_is_hit_exactly() {
        for s in 0..20 {
            let (g, radius) = geometric_supergraph_with_edges(40, 247, 0.5, seed(s)).unwrap();
            assert_eq!(g.edge_count(), 247);
            assert!(radius > 0.0 && radius < 2f64.sqrt());
            let again = geometric_supergraph(40, radius, 0.5, seed(s)).unwrap();
            assert_eq!(again, g);
        }
    }

    #[test]
    fn pendant_has_degree_one() {
        let g = pendant_supergraph(35, 34, 2, 0.05, 0.8, 0.45, seed(4)).unwrap();
        assert_eq!(g.degree(34), 1);
        assert_eq!(g.pendant(), Some(34));
        let e = g.incident(34).next().unwrap();
        assert_eq!((e.i, e.j, e.q), (2, 34, 0.05));
        let m = WeightModel::metropolis(g);
        assert_abs_diff_eq!(connectivity_probability(&m, 34).unwrap(), 0.05);
        assert!(pendant_supergraph(35, 34, 2, 0.0, 0.8, 0.45, seed(4)).is_err());
        assert!(pendant_supergraph(35, 3, 3, 0.1, 0.8, 0.45, seed(4)).is_err());
        assert!(pendant_supergraph(35, 35, 3, 0.1, 0.8, 0.45, seed(4)).is_err());
    }

    #[test]
    fn connectivity_of_two_half_links() {
        let g = Supergraph::new(3, vec![Edge { i: 0, j: 1, q: 0.5 }, Edge { i: 0, j: 2, q: 0.5 }]).unwrap();
        let m = WeightModel::metropolis(g);
        assert_abs_diff_eq!(connectivity_probability(&m, 0).unwrap(), 0.75);
        let lonely = WeightModel::metropolis(Supergraph::new(3, vec![Edge { i: 0, j: 1, q: 0.5 }]).unwrap());
        assert_eq!(connectivity_probability(&lonely, 2).unwrap(), 0.0);
        let sf = WeightModel::switching_fusion(4, 0.3).unwrap();
        assert_eq!(connectivity_probability(&sf, 1).unwrap(), 0.3);
    }

    #[test]
    fn supergraph_validation() {
        assert!(Supergraph::new(3, vec![Edge { i: 1, j: 1, q: 0.5 }]).is_err());
        assert!(Supergraph::new(3, vec![Edge { i: 0, j: 3, q: 0.5 }]).is_err());
        assert!(Supergraph::new(3, vec![Edge { i: 0, j: 1, q: 0.0 }]).is_err());
        assert!(Supergraph::new(3, vec![Edge { i: 0, j: 1, q: 1.5 }]).is_err());
        let dup = vec![Edge { i: 0, j: 1, q: 0.5 }, Edge { i: 1, j: 0, q: 0.5 }];
        assert!(Supergraph::new(3, dup).is_err());
    }

    #[test]
    fn json_uses_one_based_labels() {
        let g = pendant_supergraph(6, 5, 2, 0.1, 0.9, 0.6, seed(2)).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"pendant\":6"));
        assert!(text.contains("{\"i\":3,\"j\":6,\"q\":0.1}"));
        let back: Supergraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Supergraph>(r#"{"N":2,"edges":[{"i":0,"j":1,"q":0.5}]}"#).is_err());
    }

    #[test]
    fn switching_fusion_extremes() {
        let always = WeightModel::switching_fusion(4, 1.0).unwrap();
        let never = WeightModel::switching_fusion(4, 0.0).unwrap();
        for s in 0..50 {
            assert_eq!(sample_weight(&always, seed(s)), WeightSample::average(4));
            assert_eq!(sample_weight(&never, seed(s)), WeightSample::identity(4));
        }
    }

    #[test]
    fn single_online_link_averages() {
        let g = Supergraph::new(2, vec![Edge { i: 0, j: 1, q: 1.0 }]).unwrap();
        let w = sample_weight(&WeightModel::metropolis(g), seed(0)).w;
        assert_eq!(w, DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn metropolis_uses_max_degree() {
        // path 0-1-2 with all links online: d = (1, 2, 1)
        let g = Supergraph::new(3, vec![Edge { i: 0, j: 1, q: 1.0 }, Edge { i: 1, j: 2, q: 1.0 }]).unwrap();
        let w = sample_weight(&WeightModel::metropolis(g), seed(0)).w;
        let third = 1.0 / 3.0;
        let expect = DMatrix::from_row_slice(3, 3, &[1.0 - third, third, 0.0, third, third, third, 0.0, third, 1.0 - third]);
        assert!((w - expect).abs().max() < 1e-15);
    }

    #[test]
    fn realization_apply_matches_dense() {
        let (g, _) = geometric_supergraph_with_edges(12, 30, 0.6, seed(3)).unwrap();
        let model = WeightModel::metropolis(g);
        let mut rng = seed(9).rng();
        let mut real = Realization::new(12);
        let x = DVector::from_fn(12, |i, _| (i as f64).cos());
        let mut out = DVector::zeros(12);
        for _ in 0..50 {
            model.draw(&mut rng, &mut real);
            real.apply(&x, &mut out);
            let dense = real.to_dense() * &x;
            assert!((&out - dense).abs().max() < 1e-14);
        }
    }

    #[test]
    fn spectral_r_switching_fusion_exact() {
        let (r, se) = spectral_r(&WeightModel::switching_fusion(5, 0.3).unwrap(), 1, seed(0)).unwrap();
        assert_abs_diff_eq!(r, 0.7, epsilon = 1e-15);
        assert_eq!(se, 0.0);
        let (r, _) = spectral_r(&WeightModel::switching_fusion(5, 1.0).unwrap(), 1, seed(0)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn spectral_r_monte_carlo_converges_for_switching_fusion() {
        for (i, p) in [0.1, 0.5, 0.9].into_iter().enumerate() {
            let m = WeightModel::switching_fusion(6, p).unwrap();
            let (r, se) = spectral_r_monte_carlo(&m, 20_000, seed(100 + i as u64)).unwrap();
            assert!(se > 0.0);
            assert!((r - (1.0 - p)).abs() < 3.0 * se, "p={p}: r={r} se={se}");
        }
    }

    #[test]
    fn spectral_r_rare_links_near_one() {
        let (g, _) = geometric_supergraph_with_edges(10, 20, 1e-4, seed(5)).unwrap();
        let (r, _) = spectral_r(&WeightModel::metropolis(g), 2000, seed(6)).unwrap();
        assert!(r > 0.99, "r = {r}");
    }

    #[test]
    fn spectral_r_is_deterministic_and_below_one() {
        let (g, _) = geometric_supergraph_with_edges(15, 40, 0.5, seed(7)).unwrap();
        let m = WeightModel::metropolis(g);
        let a = spectral_r(&m, 1000, seed(8)).unwrap();
        let b = spectral_r(&m, 1000, seed(8)).unwrap();
        assert_eq!(a, b);
        assert!(a.0 < 1.0 && a.0 > 0.0 && a.1.is_finite());
    }

    #[test]
    fn deviation_product_of_switching_fusion() {
        let n = 4;
        let j = WeightSample::average(n);
        let i = WeightSample::identity(n);
        assert_abs_diff_eq!(deviation_product_norm(&[i.clone(), i.clone()]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(deviation_product_norm(&[i.clone(), j, i]), 0.0, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn metropolis_model(s: u64, n: usize, q: f64) -> WeightModel {
            let radius = 0.2 + (s % 7) as f64 * 0.1;
            WeightModel::metropolis(geometric_supergraph(n, radius, q, RngSeed::new(s, 1)).unwrap())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn samples_are_doubly_stochastic(s in 0u64..10_000, n in 2usize..15, q in 0.01f64..1.0, p in 0.0f64..=1.0) {
                let models = [metropolis_model(s, n, q), WeightModel::switching_fusion(n, p).unwrap()];
                for m in &models {
                    let mut rng = RngSeed::new(s, 2).rng();
                    let mut real = Realization::new(n);
                    for _ in 0..160 {
                        m.draw(&mut rng, &mut real);
                        let sample = WeightSample { w: real.to_dense() };
                        prop_assert!(sample.check().is_ok());
                    }
                }
            }

            #[test]
            fn deviation_rows_within_bounds(s in 0u64..10_000, n in 2usize..15, q in 0.01f64..1.0) {
                let m = metropolis_model(s, n, q);
                let (b1, b2) = deviation_row_bounds(n);
                let mut rng = RngSeed::new(s, 3).rng();
                let mut real = Realization::new(n);
                for _ in 0..16 {
                    m.draw(&mut rng, &mut real);
                    for (a, b) in deviation_row_norms(&real.to_dense()) {
                        prop_assert!(a <= b1 + 1e-12 && b <= b2 + 1e-12);
                    }
                }
            }

            #[test]
            fn products_stay_doubly_stochastic(s in 0u64..10_000, n in 2usize..10, q in 0.05f64..1.0) {
                let m = metropolis_model(s, n, q);
                let mut prod = DMatrix::identity(n, n);
                for t in 0..30 {
                    prod = sample_weight(&m, RngSeed::new(s, 100 + t)).w * prod;
                }
                prop_assert!(check_doubly_stochastic(&prod, 1e-10).is_ok());
            }
        }
    }
}
