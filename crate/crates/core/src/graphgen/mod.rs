//! Random dot product graphs: snapshots, latent matrices, the RDPG sampler,
//! the time-varying two-block SBM, and induced subgraphs.

mod edgelist;
mod sbm;

pub use edgelist::{
    format_edge_list, parse_edge_list, read_edge_list, read_snapshot_dir, write_edge_list,
    write_snapshot_dir,
};
pub use sbm::{
    block_latents, sbm_block_matrix_at, sbm_latents, sbm_trajectory, SbmSpec, SBM_B1, SBM_B2,
    SBM_B3,
};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::SymmetricOperator;
use crate::rng::{domain, substream};

/// Inner products this far outside `[0, 1]` are clamped; beyond it the
/// sampler refuses the latent matrix.
pub const CLAMP_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("node {node} out of range for a graph on {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("node {0} listed more than once")]
    DuplicateNode(usize),
    #[error("inner product <X_{i}, X_{j}> = {value} lies outside [0, 1] beyond the clamp tolerance")]
    InnerProductOutOfRange { i: usize, j: usize, value: f64 },
    #[error("time {0} outside the block-matrix domain [0, 3]")]
    TimeOutOfDomain(f64),
    #[error("block matrix is not positive semidefinite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("invalid block model: {0}")]
    InvalidSbm(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One undirected simple graph observed at `time`. Edges are stored as
/// sorted pairs `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    time: f64,
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl GraphSnapshot {
    /// Builds a snapshot, normalizing each pair to `(min, max)`. Self-loops,
    /// duplicates (in either orientation) and out-of-range nodes are errors.
    pub fn new(
        time: f64,
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut out = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            for node in [a, b] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            out.push((a.min(b), a.max(b)));
        }
        out.sort_unstable();
        if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
        }
        Ok(Self { time, n, edges: out })
    }

    pub fn empty(time: f64, n: usize) -> Self {
        Self {
            time,
            n,
            edges: Vec::new(),
        }
    }

    pub fn complete(time: f64, n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self { time, n, edges }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Fraction of the `n(n-1)/2` possible pairs that are edges.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let pairs = self.n * (self.n - 1) / 2;
        self.edges.len() as f64 / pairs as f64
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Compressed adjacency lists, usable as a symmetric operator.
    pub fn adjacency(&self) -> Adjacency {
        let mut degree = vec![0usize; self.n];
        for &(i, j) in &self.edges {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = Vec::with_capacity(self.n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..self.n].to_vec();
        let mut neighbors = vec![0u32; offsets[self.n]];
        for &(i, j) in &self.edges {
            neighbors[fill[i]] = j as u32;
            fill[i] += 1;
            neighbors[fill[j]] = i as u32;
            fill[j] += 1;
        }
        Adjacency { offsets, neighbors }
    }
}

/// Adjacency matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Adjacency {
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }
}

impl SymmetricOperator for Adjacency {
    fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.neighbors(i).iter().map(|&j| x[j as usize]).sum();
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for &j in self.neighbors(i) {
                m[(i, j as usize)] = 1.0;
            }
        }
        m
    }
}

/// Latent position matrix at one time: row `i` is node `i`'s position.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    pub time: f64,
    pub rows: DMatrix<f64>,
}

impl LatentMatrix {
    pub fn new(time: f64, rows: DMatrix<f64>) -> Self {
        Self { time, rows }
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Appends zero columns up to `dim` (no-op when already that wide).
    pub fn padded(mut self, dim: usize) -> Self {
        if dim > self.rows.ncols() {
            let n = self.rows.nrows();
            self.rows = self.rows.resize(n, dim, 0.0);
        }
        self
    }
}

/// A sampled graph plus the number of clamped inner products.
#[derive(Debug, Clone)]
pub struct RdpgSample {
    pub graph: GraphSnapshot,
    pub clamped: usize,
}

fn clamp_probability(value: f64, i: usize, j: usize) -> Result<(f64, bool), GraphError> {
    if (0.0..=1.0).contains(&value) {
        Ok((value, false))
    } else if (-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&value) {
        Ok((value.clamp(0.0, 1.0), true))
    } else {
        Err(GraphError::InnerProductOutOfRange { i, j, value })
    }
}

/// Samples an RDPG: each pair `i < j` is an edge independently with
/// probability `<X_i, X_j>`. Row `i` draws its pairs from its own
/// substream, so the result is independent of the thread count.
pub fn sample_rdpg(x: &LatentMatrix, seed: u64) -> Result<RdpgSample, GraphError> {
    let n = x.n();
    let d = x.dim();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..d).map(|k| x.rows[(i, k)]).collect())
        .collect();

    // Per row: edges to later nodes and the number of clamped probabilities.
    type RowEdges = Result<(Vec<(usize, usize)>, usize), GraphError>;
    let per_row: Vec<RowEdges> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, domain::GRAPH, i as u64);
            let mut edges = Vec::new();
            let mut clamped = 0;
            for j in i + 1..n {
                let ip: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                let (p, was_clamped) = clamp_probability(ip, i, j)?;
                clamped += was_clamped as usize;
                let u: f64 = rng.random();
                if u < p {
                    edges.push((i, j));
                }
            }
            Ok((edges, clamped))
        })
        .collect();

    let mut edges = Vec::new();
    let mut clamped = 0;
    for row in per_row {
        let (e, c) = row?;
        edges.extend(e);
        clamped += c;
    }
    Ok(RdpgSample {
        graph: GraphSnapshot {
            time: x.time,
            n,
            edges,
        },
        clamped,
    })
}

/// Subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given
/// order.
pub fn induced_subgraph(g: &GraphSnapshot, nodes: &[usize]) -> Result<GraphSnapshot, GraphError> {
    let mut relabel: Vec<Option<usize>> = vec![None; g.n];
    for (new, &old) in nodes.iter().enumerate() {
        if old >= g.n {
            return Err(GraphError::NodeOutOfRange { node: old, n: g.n });
        }
        if relabel[old].replace(new).is_some() {
            return Err(GraphError::DuplicateNode(old));
        }
    }
    let mut edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .filter_map(|&(i, j)| match (relabel[i], relabel[j]) {
            (Some(a), Some(b)) => Some((a.min(b), a.max(b))),
            _ => None,
        })
        .collect();
    edges.sort_unstable();
    Ok(GraphSnapshot {
        time: g.time,
        n: nodes.len(),
        edges,
    })
}
