//! Ising model parameters, mean vectors and their matrix forms.
//!
//! Every `(p+1) x (p+1)` matrix in this crate uses index 0 for the
//! suspension (bias) vertex and index `v + 1` for node `v`. Node and pair
//! coordinates of a dense `d = p + p(p-1)/2` vector are laid out as all node
//! entries first, then pairs `(u, v)`, `u < v`, in lexicographic order.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default magnitude below which an edge parameter counts as absent.
pub const DEFAULT_EDGE_TOL: f64 = 1e-4;

/// Number of unordered pairs over `p` nodes.
pub fn num_pairs(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Position of the pair `(u, v)`, `u < v`, in the lexicographic pair order.
#[inline]
pub fn pair_index(p: usize, u: usize, v: usize) -> usize {
    debug_assert!(u < v && v < p);
    u * (2 * p - u - 1) / 2 + (v - u - 1)
}

/// All pairs `(u, v)` with `u < v < p`, in lexicographic order.
pub fn pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |u| (u + 1..p).map(move |v| (u, v)))
}

/// Pairwise binary Markov random field over `{-1, +1}^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    p: usize,
    node_params: Vec<f64>,
    edge_params: BTreeMap<(usize, usize), f64>,
}

impl IsingModel {
    /// Builds a model, normalising each edge to `u < v`.
    ///
    /// Rejects self-loops, out-of-range nodes, duplicate pairs and non-finite
    /// values.
    pub fn new<I>(node_params: Vec<f64>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let p = node_params.len();
        if p == 0 {
            return Err(Error::InvalidModel("model needs at least one node".into()));
        }
        if let Some(v) = node_params.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidModel(format!("node {v} has a non-finite parameter")));
        }
        let mut edge_params = BTreeMap::new();
        for (u, v, theta) in edges {
            if u >= p || v >= p {
                return Err(Error::InvalidModel(format!("edge ({u}, {v}) out of range for p = {p}")));
            }
            if u == v {
                return Err(Error::InvalidModel(format!("self-loop at node {u}")));
            }
            if !theta.is_finite() {
                return Err(Error::InvalidModel(format!("edge ({u}, {v}) is not finite")));
            }
            let key = (u.min(v), u.max(v));
            if edge_params.insert(key, theta).is_some() {
                return Err(Error::InvalidModel(format!("duplicate edge ({}, {})", key.0, key.1)));
            }
        }
        Ok(IsingModel { p, node_params, edge_params })
    }

    /// The all-zero model (uniform distribution).
    pub fn zeros(p: usize) -> Self {
        IsingModel { p, node_params: vec![0.0; p], edge_params: BTreeMap::new() }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Parameter dimension `d = p + p(p-1)/2`.
    pub fn dim(&self) -> usize {
        self.p + num_pairs(self.p)
    }

    pub fn node_params(&self) -> &[f64] {
        &self.node_params
    }

    /// Stored edges; pairs not present are exactly zero.
    pub fn edge_params(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.edge_params
    }

    pub fn node(&self, v: usize) -> f64 {
        self.node_params[v]
    }

    pub fn edge(&self, u: usize, v: usize) -> f64 {
        let key = (u.min(v), u.max(v));
        self.edge_params.get(&key).copied().unwrap_or(0.0)
    }

    pub fn set_node(&mut self, v: usize, theta: f64) {
        self.node_params[v] = theta;
    }

    /// Sets an edge parameter; `0.0` removes the edge.
    pub fn set_edge(&mut self, u: usize, v: usize, theta: f64) {
        assert!(u != v && u < self.p && v < self.p, "invalid pair ({u}, {v})");
        let key = (u.min(v), u.max(v));
        if theta == 0.0 {
            self.edge_params.remove(&key);
        } else {
            self.edge_params.insert(key, theta);
        }
    }

    /// Dense parameter vector in the canonical node-then-pair layout.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        out[..self.p].copy_from_slice(&self.node_params);
        for (&(u, v), &t) in &self.edge_params {
            out[self.p + pair_index(self.p, u, v)] = t;
        }
        out
    }

    /// Inverse of [`IsingModel::to_vector`]; zero pair entries are not stored.
    pub fn from_vector(p: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != p + num_pairs(p) {
            return Err(Error::InvalidModel(format!(
                "parameter vector has length {}, expected {}",
                theta.len(),
                p + num_pairs(p)
            )));
        }
        let edges = pairs(p)
            .enumerate()
            .map(|(k, (u, v))| (u, v, theta[p + k]))
            .filter(|&(_, _, t)| t != 0.0);
        IsingModel::new(theta[..p].to_vec(), edges)
    }

    /// `<theta, phi>` for a statistics vector in the canonical layout.
    pub fn dot(&self, stats: &[f64]) -> f64 {
        debug_assert_eq!(stats.len(), self.dim());
        let mut acc: f64 = self.node_params.iter().zip(stats).map(|(a, b)| a * b).sum();
        for (&(u, v), &t) in &self.edge_params {
            acc += t * stats[self.p + pair_index(self.p, u, v)];
        }
        acc
    }

    /// `<theta, eta>` over node and pair coordinates.
    pub fn dot_means(&self, eta: &MeanVector) -> f64 {
        assert_eq!(self.p, eta.p(), "dimension mismatch");
        let mut acc: f64 = self.node_params.iter().zip(eta.node_means()).map(|(a, b)| a * b).sum();
        for (&(u, v), &t) in &self.edge_params {
            acc += t * eta.pair(u, v);
        }
        acc
    }

    /// Sum of `|theta_uv|` over all stored edges.
    pub fn edge_l1(&self) -> f64 {
        self.edge_params.values().map(|t| t.abs()).sum()
    }

    /// Reads a model back from an `R(theta)` matrix; zero pairs are dropped.
    pub fn from_param_matrix(r: &MomentMatrix) -> Self {
        let p = r.p();
        let m = r.matrix();
        let node_params = (0..p).map(|v| m[(0, v + 1)]).collect();
        let edge_params = pairs(p)
            .map(|(u, v)| ((u, v), m[(u + 1, v + 1)]))
            .filter(|&(_, t)| t != 0.0)
            .collect();
        IsingModel { p, node_params, edge_params }
    }
}

/// Node and pairwise moments `eta_v = E[x_v]`, `eta_uv = E[x_u x_v]`.
///
/// Pair moments are stored densely for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    p: usize,
    node_means: Vec<f64>,
    pair_means: Vec<f64>,
}

impl MeanVector {
    pub fn new(node_means: Vec<f64>, pair_means: Vec<f64>) -> Result<Self> {
        let p = node_means.len();
        if pair_means.len() != num_pairs(p) {
            return Err(Error::InvalidData(format!(
                "expected {} pair means for p = {p}, got {}",
                num_pairs(p),
                pair_means.len()
            )));
        }
        if node_means.iter().chain(&pair_means).any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("mean vector has non-finite entries".into()));
        }
        Ok(MeanVector { p, node_means, pair_means })
    }

    pub fn zeros(p: usize) -> Self {
        MeanVector { p, node_means: vec![0.0; p], pair_means: vec![0.0; num_pairs(p)] }
    }

    /// Splits a canonical node-then-pair vector.
    pub fn from_vector(p: usize, stats: &[f64]) -> Result<Self> {
        if stats.len() != p + num_pairs(p) {
            return Err(Error::InvalidData("statistics vector has the wrong length".into()));
        }
        MeanVector::new(stats[..p].to_vec(), stats[p..].to_vec())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn node_means(&self) -> &[f64] {
        &self.node_means
    }

    pub fn pair_means(&self) -> &[f64] {
        &self.pair_means
    }

    pub fn node(&self, v: usize) -> f64 {
        self.node_means[v]
    }

    pub fn pair(&self, u: usize, v: usize) -> f64 {
        let (a, b) = (u.min(v), u.max(v));
        self.pair_means[pair_index(self.p, a, b)]
    }

    pub fn set_pair(&mut self, u: usize, v: usize, value: f64) {
        let (a, b) = (u.min(v), u.max(v));
        self.pair_means[pair_index(self.p, a, b)] = value;
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = self.node_means.clone();
        out.extend_from_slice(&self.pair_means);
        out
    }

    /// Largest coordinate-wise absolute difference.
    pub fn max_abs_diff(&self, other: &MeanVector) -> f64 {
        assert_eq!(self.p, other.p, "dimension mismatch");
        self.node_means
            .iter()
            .zip(&other.node_means)
            .chain(self.pair_means.iter().zip(&other.pair_means))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Reads node and pair moments from the off-diagonal of an `R(eta)`-shaped matrix.
    pub fn from_moment_matrix(r: &MomentMatrix) -> Self {
        let p = r.p();
        let m = r.matrix();
        MeanVector {
            p,
            node_means: (0..p).map(|v| m[(0, v + 1)]).collect(),
            pair_means: pairs(p).map(|(u, v)| m[(u + 1, v + 1)]).collect(),
        }
    }
}

/// Symmetric `(p+1) x (p+1)` matrix with the bias vertex at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix(DMatrix<f64>);

impl MomentMatrix {
    /// Wraps a square symmetric matrix of size at least 2.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() < 2 {
            return Err(Error::InvalidData("moment matrix must be square with size >= 2".into()));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in i + 1..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                    return Err(Error::InvalidData(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(MomentMatrix(m))
    }

    /// Number of model nodes (matrix size minus one).
    pub fn p(&self) -> usize {
        self.0.nrows() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// `R(theta)`: node fields on row/column 0, couplings off the diagonal.
pub fn param_matrix(model: &IsingModel) -> MomentMatrix {
    let p = model.p();
    let mut m = DMatrix::zeros(p + 1, p + 1);
    for (v, &t) in model.node_params().iter().enumerate() {
        m[(0, v + 1)] = t;
        m[(v + 1, 0)] = t;
    }
    for (&(u, v), &t) in model.edge_params() {
        m[(u + 1, v + 1)] = t;
        m[(v + 1, u + 1)] = t;
    }
    MomentMatrix(m)
}

/// `R(eta)`: the off-diagonal part of the second-moment matrix `M1(eta)`.
pub fn moment_matrix(eta: &MeanVector) -> MomentMatrix {
    let p = eta.p();
    let mut m = DMatrix::zeros(p + 1, p + 1);
    for (v, &e) in eta.node_means().iter().enumerate() {
        m[(0, v + 1)] = e;
        m[(v + 1, 0)] = e;
    }
    for ((u, v), &e) in pairs(p).zip(eta.pair_means()) {
        m[(u + 1, v + 1)] = e;
        m[(v + 1, u + 1)] = e;
    }
    MomentMatrix(m)
}

/// Edge weights on the complete suspension graph, clamped to `[0, 1]`.
///
/// Vertex 0 is the suspension vertex; node `v` is vertex `v + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspensionWeights {
    w: DMatrix<f64>,
}

impl SuspensionWeights {
    /// Wraps an arbitrary symmetric weight matrix, clamping entries to `[0, 1]`.
    pub fn from_matrix(mut w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() < 2 {
            return Err(Error::InvalidData("weight matrix must be square with size >= 2".into()));
        }
        let n = w.nrows();
        for i in 0..n {
            w[(i, i)] = 0.0;
            for j in i + 1..n {
                if !w[(i, j)].is_finite() || (w[(i, j)] - w[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidData(format!("bad weight at ({i}, {j})")));
                }
                let c = w[(i, j)].clamp(0.0, 1.0);
                w[(i, j)] = c;
                w[(j, i)] = c;
            }
        }
        Ok(SuspensionWeights { w })
    }

    /// Number of vertices of the suspension graph (`p + 1`).
    pub fn num_vertices(&self) -> usize {
        self.w.nrows()
    }

    pub fn p(&self) -> usize {
        self.w.nrows() - 1
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Inverse map back to mean parameters.
    pub fn to_means(&self) -> MeanVector {
        let p = self.p();
        MeanVector {
            p,
            node_means: (0..p).map(|v| 2.0 * self.w[(0, v + 1)] - 1.0).collect(),
            pair_means: pairs(p).map(|(u, v)| 1.0 - 2.0 * self.w[(u + 1, v + 1)]).collect(),
        }
    }
}

/// Maps mean parameters to cut-polytope coordinates on the suspension graph.
pub fn suspension_weights(eta: &MeanVector) -> SuspensionWeights {
    let p = eta.p();
    let mut w = DMatrix::zeros(p + 1, p + 1);
    for (v, &e) in eta.node_means().iter().enumerate() {
        let x = (0.5 * (e + 1.0)).clamp(0.0, 1.0);
        w[(0, v + 1)] = x;
        w[(v + 1, 0)] = x;
    }
    for ((u, v), &e) in pairs(p).zip(eta.pair_means()) {
        let x = (0.5 * (1.0 - e)).clamp(0.0, 1.0);
        w[(u + 1, v + 1)] = x;
        w[(v + 1, u + 1)] = x;
    }
    SuspensionWeights { w }
}

/// Node statistics `x_v` followed by pair statistics `x_u x_v`.
pub fn sufficient_statistics(x: &[i8]) -> Result<Vec<f64>> {
    if let Some(bad) = x.iter().find(|&&s| s != 1 && s != -1) {
        return Err(Error::InvalidData(format!("state entry {bad} is not in {{-1, +1}}")));
    }
    let p = x.len();
    let mut out = Vec::with_capacity(p + num_pairs(p));
    out.extend(x.iter().map(|&s| f64::from(s)));
    out.extend(pairs(p).map(|(u, v)| f64::from(x[u] * x[v])));
    Ok(out)
}

/// Pairs whose coupling magnitude exceeds `tol`.
pub fn edge_set(model: &IsingModel, tol: f64) -> BTreeSet<(usize, usize)> {
    model
        .edge_params()
        .iter()
        .filter(|(_, t)| t.abs() > tol)
        .map(|(&e, _)| e)
        .collect()
}
