//! Per-round communication graphs and their Metropolis-Hastings weights.
//!
//! Learners are identified by `1..=N`. Matrices are indexed `0..N` with
//! learner `i` at row `i - 1`.

use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Tolerance on row and column sums accepted by [`verify_consensus_conditions`].
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Above this size the contraction radius is found by power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

const SYMMETRY_TOL: f64 = 1e-12;

/// An undirected simple graph over learners `1..=n_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTopology {
    n_nodes: usize,
    round_index: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl RoundTopology {
    pub fn new(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        round_index: usize,
    ) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::BadParameters("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::BadParameters(format!("self-loop at {a}")));
            }
            if a == 0 || b == 0 || a > n_nodes || b > n_nodes {
                return Err(Error::BadParameters(format!(
                    "edge ({a}, {b}) outside 1..={n_nodes}"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(a, b) in &set {
            adjacency[a - 1].push(b);
            adjacency[b - 1].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self {
            n_nodes,
            round_index,
            edges: set,
            adjacency,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn round_index(&self) -> usize {
        self.round_index
    }

    pub fn with_round(mut self, round_index: usize) -> Self {
        self.round_index = round_index;
        self
    }

    /// Edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of learner `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i - 1]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i - 1].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Learner `i` followed by its neighbors, sorted ascending.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let mut v = self.adjacency[i - 1].clone();
        let pos = v.partition_point(|&j| j < i);
        v.insert(pos, i);
        v
    }

    pub fn average_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n_nodes as f64
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self)
    }

    /// Renders the edge-list exchange format.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (a, b) in self.edges() {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }
}

/// Depth-first search from learner 1.
pub fn is_connected(g: &RoundTopology) -> bool {
    let n = g.n_nodes;
    let mut seen = vec![false; n];
    let mut stack = vec![1usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in g.neighbors(v) {
            if !seen[u - 1] {
                seen[u - 1] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

/// Parses one `i j` pair per line. Blank lines and `#` comments are skipped.
/// When `n_nodes` is `None` the node count is the largest id seen.
pub fn parse_edge_list(text: &str, n_nodes: Option<usize>) -> Result<RoundTopology> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut field = |name: &str| -> Result<usize> {
            let tok = it.next().ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("missing {name} endpoint"),
            })?;
            tok.parse::<usize>().map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: format!("bad {name} endpoint {tok:?}: {e}"),
            })
        };
        let a = field("first")?;
        let b = field("second")?;
        if it.next().is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "expected exactly two ids".into(),
            });
        }
        edges.push((a, b));
    }
    let n = match n_nodes {
        Some(n) => n,
        None => edges.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0),
    };
    RoundTopology::new(n, edges, 0)
}

/// Symmetric doubly stochastic weights for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    m: DMatrix<f64>,
}

impl WeightMatrix {
    /// Wraps an arbitrary square matrix; no stochasticity is enforced.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self { m })
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// Weight `a_ij` between learners `i` and `j` (1-based).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.m[(i - 1, j - 1)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.m[(i, j)] - self.m[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self) -> bool {
        self.max_asymmetry() <= SYMMETRY_TOL
    }

    /// `A - (1/N) 1 1^T`.
    pub fn deviation(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut b = self.m.clone();
        b.add_scalar_mut(-1.0 / n as f64);
        b
    }
}

/// `a_ij = 1 / (max(d_i, d_j) + 1)` on edges, residual mass on the diagonal.
pub fn mh_weights(g: &RoundTopology) -> Result<WeightMatrix> {
    if !g.is_connected() {
        return Err(Error::DisconnectedGraph);
    }
    let n = g.n_nodes();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (a, b) in g.edges() {
        let w = 1.0 / (g.degree(a).max(g.degree(b)) + 1) as f64;
        m[(a - 1, b - 1)] = w;
        m[(b - 1, a - 1)] = w;
    }
    for i in 1..=n {
        let off: f64 = g.neighbors(i).iter().map(|&j| m[(i - 1, j - 1)]).sum();
        m[(i - 1, i - 1)] = 1.0 - off;
    }
    Ok(WeightMatrix { m })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusConditions {
    pub row_sum_err: f64,
    pub col_sum_err: f64,
    /// `rho(A - (1/N) 1 1^T)`.
    pub contraction_radius: f64,
    pub passed: bool,
}

pub fn verify_consensus_conditions(a: &WeightMatrix) -> ConsensusConditions {
    let m = a.matrix();
    let row_sum_err = m
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let col_sum_err = m
        .column_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let contraction_radius = contraction_radius(a);
    ConsensusConditions {
        row_sum_err,
        col_sum_err,
        contraction_radius,
        passed: row_sum_err < STOCHASTIC_TOL
            && col_sum_err < STOCHASTIC_TOL
            && contraction_radius < 1.0,
    }
}

/// Spectral radius of `A - (1/N) 1 1^T`.
pub fn contraction_radius(a: &WeightMatrix) -> f64 {
    let b = a.deviation();
    if a.is_symmetric() {
        if a.n() <= DENSE_EIGEN_LIMIT {
            symmetric_spectral_radius(b)
        } else {
            power_iteration_radius(&b)
        }
    } else {
        b.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn symmetric_spectral_radius(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

/// Power iteration with Rayleigh quotient, relative tolerance `1e-12`,
/// capped at `1e5` iterations. Only valid for symmetric `m`.
fn power_iteration_radius(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    x /= x.norm();
    let mut prev = 0.0;
    for _ in 0..100_000 {
        // two steps at a time: |lambda|^2 is reached even with +/- pairs
        let y = m * &x;
        let z = m * &y;
        let est = x.dot(&z).abs().sqrt();
        let nz = z.norm();
        if nz == 0.0 {
            return 0.0;
        }
        x = z / nz;
        if (est - prev).abs() <= 1e-12 * est.max(1e-300) {
            return est;
        }
        prev = est;
    }
    prev
}

/// Second-largest eigenvalue magnitude of a symmetric weight matrix, i.e.
/// the largest `|lambda|` once the consensus eigenvalue 1 is removed.
pub fn second_largest_eigenvalue(a: &WeightMatrix) -> Result<f64> {
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(contraction_radius(a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TopologyKind {
    Complete,
    Star,
    Line,
    Ring,
    RandomConnected { avg_degree: f64 },
}

impl FromStr for TopologyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "complete" => Ok(Self::Complete),
            "star" => Ok(Self::Star),
            "line" => Ok(Self::Line),
            "ring" => Ok(Self::Ring),
            _ => {
                let d = s
                    .strip_prefix("random:")
                    .ok_or_else(|| Error::BadParameters(format!("unknown topology {s:?}")))?;
                let avg_degree: f64 = d
                    .parse()
                    .map_err(|_| Error::BadParameters(format!("bad average degree {d:?}")))?;
                if !avg_degree.is_finite() {
                    return Err(Error::BadParameters(format!("bad average degree {d:?}")));
                }
                Ok(Self::RandomConnected { avg_degree })
            }
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Complete => f.write_str("complete"),
            Self::Star => f.write_str("star"),
            Self::Line => f.write_str("line"),
            Self::Ring => f.write_str("ring"),
            Self::RandomConnected { avg_degree } => write!(f, "random:{avg_degree}"),
        }
    }
}

pub fn generate_topology(kind: TopologyKind, n: usize, seed: u64) -> Result<RoundTopology> {
    if n < 2 {
        return Err(Error::BadParameters(format!("need at least 2 nodes, got {n}")));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Complete => (1..=n)
            .flat_map(|a| ((a + 1)..=n).map(move |b| (a, b)))
            .collect(),
        TopologyKind::Star => (2..=n).map(|b| (1, b)).collect(),
        TopologyKind::Line => (1..n).map(|a| (a, a + 1)).collect(),
        TopologyKind::Ring => {
            let mut e: Vec<_> = (1..n).map(|a| (a, a + 1)).collect();
            if n > 2 {
                e.push((1, n));
            }
            e
        }
        TopologyKind::RandomConnected { avg_degree } => {
            // a spanning tree already has average degree 2 (n - 1) / n
            let lo = 2.0 * (n - 1) as f64 / n as f64;
            if !(avg_degree >= lo - 1e-9 && avg_degree <= (n - 1) as f64) {
                return Err(Error::BadParameters(format!(
                    "average degree {avg_degree} outside [{lo}, {}]",
                    n - 1
                )));
            }
            random_connected_edges(n, avg_degree, &mut ChaCha8Rng::seed_from_u64(seed))
        }
    };
    RoundTopology::new(n, edges, 0)
}

/// Decodes a uniformly random Prüfer sequence into a spanning tree.
fn random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(1, 2)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(1..=n)).collect();
    let mut degree = vec![1usize; n + 1];
    for &v in &seq {
        degree[v] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (1..=n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in &seq {
        let Reverse(leaf) = leaves.pop().expect("Prüfer decoding always has a leaf");
        edges.push((leaf.min(v), leaf.max(v)));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.push(Reverse(v));
        }
    }
    let Reverse(a) = leaves.pop().unwrap();
    let Reverse(b) = leaves.pop().unwrap();
    edges.push((a.min(b), a.max(b)));
    edges
}

fn random_connected_edges<R: Rng + ?Sized>(
    n: usize,
    avg_degree: f64,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let max_edges = n * (n - 1) / 2;
    let target = ((avg_degree * n as f64 / 2.0).round() as usize).clamp(n - 1, max_edges);
    let mut edges: HashSet<(usize, usize)> = random_tree(n, rng).into_iter().collect();
    let extra = target - edges.len();
    let free = max_edges - edges.len();
    if extra * 2 > free {
        let mut candidates: Vec<(usize, usize)> = (1..=n)
            .flat_map(|a| ((a + 1)..=n).map(move |b| (a, b)))
            .filter(|e| !edges.contains(e))
            .collect();
        candidates.shuffle(rng);
        edges.extend(candidates.into_iter().take(extra));
    } else {
        while edges.len() < target {
            let a = rng.gen_range(1..=n);
            let b = rng.gen_range(1..=n);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    let mut out: Vec<_> = edges.into_iter().collect();
    out.sort_unstable();
    out
}

/// The graph used in each round.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySchedule {
    Explicit(Vec<RoundTopology>),
    /// A fresh graph per round; random kinds reseed from `(seed, round)`.
    Generated { kind: TopologyKind, n: usize, seed: u64 },
}

impl TopologySchedule {
    /// Topology of round `t` (1-based).
    pub fn round(&self, t: usize) -> Result<RoundTopology> {
        match self {
            Self::Explicit(rounds) => rounds
                .get(t.wrapping_sub(1))
                .cloned()
                .map(|g| g.with_round(t))
                .ok_or_else(|| {
                    Error::BadParameters(format!("schedule has {} rounds, round {t} requested", rounds.len()))
                }),
            Self::Generated { kind, n, seed } => {
                Ok(generate_topology(*kind, *n, derive_seed(*seed, &[0x70, t as u64]))?.with_round(t))
            }
        }
    }

    /// Number of rounds available, `None` when unbounded.
    pub fn len(&self) -> Option<usize> {
        match self {
            Self::Explicit(r) => Some(r.len()),
            Self::Generated { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// Parses a JSON array of per-round edge lists, e.g. `[[[1,2],[2,3]], [[1,3]]]`.
    pub fn from_json(text: &str, n_nodes: usize) -> Result<Self> {
        let raw: Vec<Vec<(usize, usize)>> = serde_json::from_str(text)?;
        let rounds = raw
            .into_iter()
            .enumerate()
            .map(|(t, edges)| RoundTopology::new(n_nodes, edges, t + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::Explicit(rounds))
    }

    pub fn to_json(rounds: &[RoundTopology]) -> String {
        let raw: Vec<Vec<(usize, usize)>> =
            rounds.iter().map(|g| g.edges().collect()).collect();
        serde_json::to_string(&raw).expect("edge lists serialize")
    }
}
