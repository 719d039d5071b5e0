//! Synthetic benchmark generation: graph families, parameter priors and a
//! systematic-scan Gibbs sampler.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{num_pairs, pairs, IsingModel, MeanVector};

/// Name of the generator behind every seeded draw in this crate.
pub const RNG_NAME: &str = "ChaCha8";

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One of the three benchmark graph families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    /// 4-nearest-neighbour lattice with `p = rows * cols`.
    Grid4 { rows: usize, cols: usize },
    /// `n_edges` uniform random pairs subject to an optional degree cap.
    RandomSparse {
        p: usize,
        n_edges: usize,
        #[serde(default)]
        max_degree: Option<usize>,
    },
    /// `n_blocks` disjoint cliques of `block_size`, then random cross-component
    /// edges up to `n_edges` in total.
    DenseSubgraphs { p: usize, n_edges: usize, block_size: usize, n_blocks: usize },
}

impl GraphSpec {
    pub fn p(&self) -> usize {
        match *self {
            GraphSpec::Grid4 { rows, cols } => rows * cols,
            GraphSpec::RandomSparse { p, .. } | GraphSpec::DenseSubgraphs { p, .. } => p,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GraphSpec::Grid4 { .. } => "grid4",
            GraphSpec::RandomSparse { .. } => "random_sparse",
            GraphSpec::DenseSubgraphs { .. } => "dense_subgraphs",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleGraph(msg));
        match *self {
            GraphSpec::Grid4 { rows, cols } if rows == 0 || cols == 0 => {
                bad("grid dimensions must be positive".into())
            }
            GraphSpec::RandomSparse { p, n_edges, .. } if n_edges > num_pairs(p) => {
                bad(format!("{n_edges} edges do not fit on {p} nodes"))
            }
            GraphSpec::DenseSubgraphs { p, n_edges, block_size, n_blocks } => {
                let clique = n_blocks * num_pairs(block_size);
                if block_size * n_blocks > p {
                    bad(format!("{n_blocks} blocks of {block_size} exceed p = {p}"))
                } else if n_edges < clique {
                    bad(format!("n_edges = {n_edges} is below the {clique} clique edges"))
                } else if n_edges > num_pairs(p) {
                    bad(format!("{n_edges} edges do not fit on {p} nodes"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Edge list for a graph family, sorted with `u < v`.
pub fn make_graph(spec: &GraphSpec, seed: u64) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let edges: BTreeSet<(usize, usize)> = match *spec {
        GraphSpec::Grid4 { rows, cols } => {
            let id = |r: usize, c: usize| r * cols + c;
            let mut set = BTreeSet::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        set.insert((id(r, c), id(r, c + 1)));
                    }
                    if r + 1 < rows {
                        set.insert((id(r, c), id(r + 1, c)));
                    }
                }
            }
            set
        }
        GraphSpec::RandomSparse { p, n_edges, max_degree } => {
            let cap = max_degree.unwrap_or(usize::MAX);
            let mut degree = vec![0usize; p];
            let mut set = BTreeSet::new();
            add_random_edges(&mut rng, p, n_edges, &mut set, |u, v| {
                if degree[u] >= cap || degree[v] >= cap {
                    return false;
                }
                degree[u] += 1;
                degree[v] += 1;
                true
            })?;
            set
        }
        GraphSpec::DenseSubgraphs { p, n_edges, block_size, n_blocks } => {
            let component = |v: usize| if v < block_size * n_blocks { v / block_size } else { n_blocks + v };
            let mut set = BTreeSet::new();
            for b in 0..n_blocks {
                let base = b * block_size;
                for (u, v) in pairs(block_size) {
                    set.insert((base + u, base + v));
                }
            }
            add_random_edges(&mut rng, p, n_edges, &mut set, |u, v| component(u) != component(v))?;
            set
        }
    };
    Ok(edges.into_iter().collect())
}

/// Rejection-samples uniform pairs until `set` holds `target` edges.
fn add_random_edges<F>(
    rng: &mut ChaCha8Rng,
    p: usize,
    target: usize,
    set: &mut BTreeSet<(usize, usize)>,
    mut accept: F,
) -> Result<()>
where
    F: FnMut(usize, usize) -> bool,
{
    if set.len() >= target {
        return Ok(());
    }
    if p < 2 {
        return Err(Error::InfeasibleGraph("need at least two nodes for edges".into()));
    }
    let max_tries = 100 * target.max(1);
    for _ in 0..max_tries {
        let u = rng.gen_range(0..p);
        let v = rng.gen_range(0..p);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if set.contains(&key) || !accept(key.0, key.1) {
            continue;
        }
        set.insert(key);
        if set.len() == target {
            return Ok(());
        }
    }
    Err(Error::InfeasibleGraph(format!(
        "only {} of {target} edges placed after {max_tries} draws",
        set.len()
    )))
}

/// Draws `theta_v ~ U[-1, 1]` per node, then `theta_uv ~ U[-xi, xi]` per edge in list order.
pub fn assign_parameters(p: usize, edges: &[(usize, usize)], xi: f64, seed: u64) -> Result<IsingModel> {
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::Config(format!("coupling strength must be finite and >= 0, got {xi}")));
    }
    let mut rng = rng_from_seed(seed);
    let nodes = (0..p).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let couplings: Vec<_> = edges
        .iter()
        .map(|&(u, v)| (u, v, if xi > 0.0 { rng.gen_range(-xi..=xi) } else { 0.0 }))
        .collect();
    IsingModel::new(nodes, couplings)
}

/// Gibbs sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { n: 1000, burn_in: 1000, thin: 5, seed: 0 }
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub model_hash: Option<u64>,
    pub generator: Option<String>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
}

/// `n x p` matrix of spins in `{-1, +1}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    n: usize,
    values: Vec<i8>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(p: usize, values: Vec<i8>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidData("dataset needs at least one column".into()));
        }
        if !values.len().is_multiple_of(p) {
            return Err(Error::InvalidData("value count is not a multiple of p".into()));
        }
        if let Some(bad) = values.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidData(format!("entry {bad} is not in {{-1, +1}}")));
        }
        Ok(Dataset { p, n: values.len() / p, values, provenance: Provenance::default() })
    }

    pub fn from_rows(p: usize, rows: &[Vec<i8>]) -> Result<Self> {
        if let Some(r) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::InvalidData(format!("row {r} does not have {p} entries")));
        }
        Dataset::new(p, rows.concat())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.values.chunks_exact(self.p)
    }
}

/// Stable FNV-1a fingerprint of a model's parameters.
pub fn model_hash(model: &IsingModel) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&(model.p() as u64).to_le_bytes());
    for t in model.to_vector() {
        eat(&t.to_bits().to_le_bytes());
    }
    h
}

/// Systematic-scan Gibbs sampler: sweeps `v = 0..p`, discards `burn_in`
/// sweeps, then keeps one state every `thin` sweeps.
pub fn gibbs_sample(model: &IsingModel, cfg: &SamplerConfig) -> Result<Dataset> {
    if cfg.n == 0 || cfg.thin == 0 {
        return Err(Error::Config("sampler needs n >= 1 and thin >= 1".into()));
    }
    let p = model.p();
    let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for (&(u, v), &t) in model.edge_params() {
        if t != 0.0 {
            neighbours[u].push((v, t));
            neighbours[v].push((u, t));
        }
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut x: Vec<i8> = (0..p).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    let sweep = |x: &mut [i8], rng: &mut ChaCha8Rng| {
        for v in 0..p {
            let field = model.node(v)
                + neighbours[v].iter().map(|&(u, t)| t * f64::from(x[u])).sum::<f64>();
            let prob_up = 1.0 / (1.0 + (-2.0 * field).exp());
            x[v] = if rng.gen::<f64>() < prob_up { 1 } else { -1 };
        }
    };
    for _ in 0..cfg.burn_in {
        sweep(&mut x, &mut rng);
    }
    let mut values = Vec::with_capacity(cfg.n * p);
    for _ in 0..cfg.n {
        for _ in 0..cfg.thin {
            sweep(&mut x, &mut rng);
        }
        values.extend_from_slice(&x);
    }
    let mut data = Dataset::new(p, values)?;
    data.provenance = Provenance {
        seed: Some(cfg.seed),
        model_hash: Some(model_hash(model)),
        generator: Some(RNG_NAME.to_string()),
        burn_in: Some(cfg.burn_in),
        thin: Some(cfg.thin),
    };
    Ok(data)
}

/// Sample averages of the node and pair statistics.
pub fn empirical_means(data: &Dataset) -> Result<MeanVector> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let p = data.p();
    let mut node = vec![0i64; p];
    let mut pair = vec![0i64; num_pairs(p)];
    for row in data.rows() {
        let mut k = 0;
        for u in 0..p {
            let xu = i64::from(row[u]);
            node[u] += xu;
            for &xv in &row[u + 1..] {
                pair[k] += xu * i64::from(xv);
                k += 1;
            }
        }
    }
    let n = data.n() as f64;
    MeanVector::new(
        node.into_iter().map(|s| s as f64 / n).collect(),
        pair.into_iter().map(|s| s as f64 / n).collect(),
    )
}
