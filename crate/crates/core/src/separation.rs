//! Cycle inequalities over the suspension graph and their separation.
//!
//! A cycle inequality for a cycle `C` and an odd subset `F` of its edges
//! reads `sum_{C\F} w_e + sum_F (1 - w_e) >= 1` in cut coordinates. In mean
//! coordinates it becomes `tr(A R(eta)) >= b` with `A` supported on the cycle
//! edges and `b = 1 - |C|/2`.
//!
//! Vertices use matrix indexing: 0 is the suspension vertex, `v + 1` is node `v`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{MomentMatrix, SuspensionWeights};

/// Default smallest violation worth adding as a cut.
pub const DEFAULT_MIN_VIOLATION: f64 = 1e-4;
/// Default cap on cuts returned per separation call.
pub const DEFAULT_MAX_CUTS: usize = 20;

/// Canonical identity of a cut: its sorted edge set and sorted odd set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CutSignature {
    pub edges: Vec<(usize, usize)>,
    pub odd_set: Vec<(usize, usize)>,
}

/// One linearised cycle inequality `tr(A R(eta)) >= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleInequality {
    /// Upper-triangle entries `(i, j, A_ij)` with `i < j`; `A` is symmetric.
    entries: Vec<(usize, usize, f64)>,
    rhs: f64,
    cycle: Vec<usize>,
    signature: CutSignature,
    dim: usize,
}

#[inline]
fn edge_key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// Builds the matrix form of the cycle inequality for `cycle` and odd set `odd_set`.
///
/// `cycle` lists distinct vertices of the suspension graph of a `p`-node model;
/// consecutive vertices (and the last and first) are joined by the cycle edges.
pub fn cycle_to_matrix(cycle: &[usize], odd_set: &[(usize, usize)], p: usize) -> Result<CycleInequality> {
    let n = p + 1;
    if cycle.len() < 3 {
        return Err(Error::InvalidCycle(format!("cycle needs at least 3 vertices, got {}", cycle.len())));
    }
    if let Some(&v) = cycle.iter().find(|&&v| v >= n) {
        return Err(Error::InvalidCycle(format!("vertex {v} out of range for p = {p}")));
    }
    if cycle.iter().collect::<BTreeSet<_>>().len() != cycle.len() {
        return Err(Error::InvalidCycle("repeated vertex".into()));
    }
    let edges: Vec<(usize, usize)> = (0..cycle.len())
        .map(|k| edge_key(cycle[k], cycle[(k + 1) % cycle.len()]))
        .collect();
    let odd: BTreeSet<(usize, usize)> = odd_set.iter().map(|&(i, j)| edge_key(i, j)).collect();
    if odd.len() != odd_set.len() {
        return Err(Error::InvalidCycle("odd set has a repeated edge".into()));
    }
    if odd.len().is_multiple_of(2) {
        return Err(Error::InvalidCycle(format!("odd set has even size {}", odd.len())));
    }
    if let Some(e) = odd.iter().find(|e| !edges.contains(e)) {
        return Err(Error::InvalidCycle(format!("odd-set edge {e:?} is not on the cycle")));
    }
    let mut entries: Vec<(usize, usize, f64)> = edges
        .iter()
        .map(|&(i, j)| {
            // w_e = 1/2 + g_e * eta_e with g = +1/2 on spokes, -1/2 on node pairs
            let g = if i == 0 { 0.5 } else { -0.5 };
            let sigma = if odd.contains(&(i, j)) { -1.0 } else { 1.0 };
            (i, j, 0.5 * sigma * g)
        })
        .collect();
    entries.sort_by_key(|a| (a.0, a.1));
    let mut sorted_edges = edges;
    sorted_edges.sort_unstable();
    Ok(CycleInequality {
        entries,
        rhs: 1.0 - cycle.len() as f64 / 2.0,
        cycle: cycle.to_vec(),
        signature: CutSignature { edges: sorted_edges, odd_set: odd.into_iter().collect() },
        dim: n,
    })
}

impl CycleInequality {
    /// Right-hand side `b = 1 - |C|/2`.
    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    pub fn cycle(&self) -> &[usize] {
        &self.cycle
    }

    pub fn odd_set(&self) -> &[(usize, usize)] {
        &self.signature.odd_set
    }

    pub fn signature(&self) -> &CutSignature {
        &self.signature
    }

    /// Upper-triangle nonzeros `(i, j, A_ij)`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Size of the coefficient matrix (`p + 1`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense symmetric coefficient matrix `A`.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, c) in &self.entries {
            a[(i, j)] = c;
            a[(j, i)] = c;
        }
        a
    }

    /// `tr(A X)` for a symmetric `X` of matching size.
    #[inline]
    pub fn trace_with(&self, x: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, c)| 2.0 * c * x[(i, j)]).sum()
    }

    /// Adds `scale * A` to a symmetric matrix in place.
    pub(crate) fn add_scaled_to(&self, x: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, c) in &self.entries {
            x[(i, j)] += scale * c;
            x[(j, i)] += scale * c;
        }
    }

    /// Left-hand side of the cut-coordinate form, `sum_{C\F} w + sum_F (1 - w)`.
    pub fn weight_lhs(&self, weights: &SuspensionWeights) -> f64 {
        self.signature
            .edges
            .iter()
            .map(|&(i, j)| {
                let w = weights.weight(i, j);
                if self.signature.odd_set.binary_search(&(i, j)).is_ok() {
                    1.0 - w
                } else {
                    w
                }
            })
            .sum()
    }
}

/// `b - tr(A R(eta))`; positive means the inequality is violated.
pub fn violation(ineq: &CycleInequality, eta_matrix: &MomentMatrix) -> f64 {
    assert_eq!(ineq.dim(), eta_matrix.p() + 1, "dimension mismatch");
    ineq.rhs - ineq.trace_with(eta_matrix.matrix())
}

/// Splits a closed walk into simple cycles, each given as its vertex list and
/// its edges `(a, b, crosses_sides)`.
fn split_closed_walk(walk: &[(usize, bool)]) -> Vec<(Vec<usize>, Vec<(usize, usize, bool)>)> {
    let mut verts = vec![walk[0].0];
    let mut edges: Vec<(usize, usize, bool)> = Vec::new();
    let mut pieces = Vec::new();
    for pair in walk.windows(2) {
        let (a, b) = (pair[0].0, pair[1].0);
        edges.push((a, b, pair[0].1 != pair[1].1));
        if let Some(pos) = verts.iter().position(|&v| v == b) {
            let cycle = verts.split_off(pos);
            let cycle_edges = edges.split_off(pos);
            verts.push(cycle[0]);
            pieces.push((cycle, cycle_edges));
        } else {
            verts.push(b);
        }
    }
    pieces
}

/// For every root, the shortest closed walk with an odd number of side
/// switches on the doubled graph. Returns the walk lengths and the odd simple
/// cycles (at least three vertices) the walks decompose into, with their lengths.
fn rooted_odd_cycles(weights: &SuspensionWeights) -> (Vec<f64>, Vec<(f64, CycleInequality)>) {
    let n = weights.num_vertices();
    let p = n - 1;
    let mut walk_lengths = Vec::with_capacity(n);
    let mut out = Vec::new();
    // doubled vertex k encodes (k / 2, side k % 2)
    let m = 2 * n;
    let mut dist = vec![f64::INFINITY; m];
    let mut prev = vec![usize::MAX; m];
    let mut done = vec![false; m];
    for root in 0..n {
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        let (source, target) = (2 * root, 2 * root + 1);
        dist[source] = 0.0;
        loop {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for k in 0..m {
                if !done[k] && dist[k] < best_d {
                    best_d = dist[k];
                    best = k;
                }
            }
            if best == usize::MAX || best == target {
                break;
            }
            done[best] = true;
            let (i, side) = (best / 2, best % 2);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = weights.weight(i, j);
                for (other, len) in [(side, w), (1 - side, 1.0 - w)] {
                    let k = 2 * j + other;
                    let cand = best_d + len;
                    if !done[k] && cand < dist[k] {
                        dist[k] = cand;
                        prev[k] = best;
                    }
                }
            }
        }
        if !dist[target].is_finite() {
            continue;
        }
        walk_lengths.push(dist[target]);
        let mut walk = vec![target];
        let mut cur = target;
        while cur != source {
            cur = prev[cur];
            walk.push(cur);
        }
        walk.reverse();
        let projected: Vec<(usize, bool)> = walk.iter().map(|&k| (k / 2, k % 2 == 1)).collect();
        for (cycle, edges) in split_closed_walk(&projected) {
            let odd: Vec<(usize, usize)> =
                edges.iter().filter(|e| e.2).map(|&(a, b, _)| edge_key(a, b)).collect();
            if cycle.len() < 3 || odd.len().is_multiple_of(2) {
                continue;
            }
            let ineq = cycle_to_matrix(&cycle, &odd, p).expect("decomposed walk piece is a valid odd cycle");
            out.push((ineq.weight_lhs(weights), ineq));
        }
    }
    (walk_lengths, out)
}

/// Violated cycle inequalities for the given cut weights, most violated first.
///
/// Returns at most `max_cuts` distinct cuts whose left-hand side is below
/// `1 - min_violation`, sorted by left-hand side and then by signature.
pub fn separate(weights: &SuspensionWeights, min_violation: f64, max_cuts: usize) -> Vec<CycleInequality> {
    let threshold = 1.0 - min_violation;
    let mut found: Vec<(f64, CycleInequality)> = rooted_odd_cycles(weights)
        .1
        .into_iter()
        .filter(|(len, _)| *len < threshold)
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.signature.cmp(&b.1.signature)));
    let mut seen = BTreeSet::new();
    found
        .into_iter()
        .filter(|(_, c)| seen.insert(c.signature.clone()))
        .map(|(_, c)| c)
        .take(max_cuts)
        .collect()
}

/// Smallest cut-coordinate left-hand side over all simple odd cycles of the
/// suspension graph (never above 1 on three or more vertices).
pub fn min_cycle_value(weights: &SuspensionWeights) -> Option<f64> {
    rooted_odd_cycles(weights).0.into_iter().reduce(f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{moment_matrix, suspension_weights, MeanVector};

    fn eta_from_states(states: &[[i8; 3]]) -> MeanVector {
        let n = states.len() as f64;
        let node = (0..3).map(|v| states.iter().map(|s| f64::from(s[v])).sum::<f64>() / n).collect();
        let pair = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(u, v)| states.iter().map(|s| f64::from(s[u] * s[v])).sum::<f64>() / n)
            .collect();
        MeanVector::new(node, pair).unwrap()
    }

    #[test]
    fn internal_triangle_matrix_form() {
        let cut = cycle_to_matrix(&[1, 2, 3], &[(1, 2), (2, 3), (1, 3)], 3).unwrap();
        assert_eq!(cut.rhs(), -0.5);
        assert!(cut.entries().iter().all(|&(_, _, c)| c == 0.25));
        // every deterministic state satisfies eta12 + eta23 + eta13 >= -1
        for s in 0..8u8 {
            let x = [0, 1, 2].map(|v| if s >> v & 1 == 1 { 1i8 } else { -1 });
            let eta = eta_from_states(&[x]);
            assert!(violation(&cut, &moment_matrix(&eta)) <= 0.0);
        }
        let bad = MeanVector::new(vec![0.0; 3], vec![-1.0; 3]).unwrap();
        assert_eq!(violation(&cut, &moment_matrix(&bad)), 1.0);
        assert_eq!(violation(&cut, &moment_matrix(&MeanVector::zeros(3))), -0.5);
    }

    /// The four odd subsets of a spoke triangle are the local-consistency
    /// inequalities: `eta_uv - eta_u + eta_v <= 1`, `eta_uv + eta_u - eta_v <= 1`,
    /// `eta_u + eta_v - eta_uv <= 1`, and `eta_u + eta_v + eta_uv >= -1`.
    #[test]
    fn spoke_triangle_gives_local_inequalities() {
        let (u, v) = (1, 2);
        let spoke_u = (0, u);
        let spoke_v = (0, v);
        let inner = (u, v);
        let odd_sets: [Vec<(usize, usize)>; 4] =
            [vec![spoke_u], vec![spoke_v], vec![inner], vec![spoke_u, spoke_v, inner]];
        // coefficients on (eta_u, eta_v, eta_uv) and rhs of a . eta >= b
        let expected = [
            ([-1.0, 1.0, -1.0], -1.0),
            ([1.0, -1.0, -1.0], -1.0),
            ([1.0, 1.0, 1.0], -1.0),
            ([-1.0, -1.0, 1.0], -1.0),
        ];
        for (f, (coef, b)) in odd_sets.iter().zip(expected) {
            let cut = cycle_to_matrix(&[0, u, v], f, 2).unwrap();
            let a = cut.coefficient_matrix();
            // tr(A R) = 2 * sum over upper entries, so the eta coefficients are 2 A_ij
            let got = [2.0 * a[(0, 1)], 2.0 * a[(0, 2)], 2.0 * a[(1, 2)]];
            // scale to the normalised form with unit coefficients
            let scale = 1.0 / got[0].abs();
            for k in 0..3 {
                assert!((got[k] * scale - coef[k]).abs() < 1e-15, "{f:?}: {got:?}");
            }
            assert!((cut.rhs() * scale - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_malformed_cycles() {
        assert!(cycle_to_matrix(&[1, 2, 3], &[(1, 2), (2, 3)], 3).is_err());
        assert!(cycle_to_matrix(&[1, 2, 1], &[(1, 2)], 3).is_err());
        assert!(cycle_to_matrix(&[1, 2], &[(1, 2)], 3).is_err());
        assert!(cycle_to_matrix(&[1, 2, 3], &[(0, 2)], 3).is_err());
        assert!(cycle_to_matrix(&[1, 2, 5], &[(1, 2)], 3).is_err());
    }

    #[test]
    fn weight_form_matches_matrix_form() {
        let eta = MeanVector::new(vec![0.3, -0.2, 0.5], vec![0.1, -0.4, 0.25]).unwrap();
        let w = suspension_weights(&eta);
        let r = moment_matrix(&eta);
        let cut = cycle_to_matrix(&[0, 1, 3, 2], &[(0, 1), (1, 3), (2, 3)], 3).unwrap();
        assert!((violation(&cut, &r) - (1.0 - cut.weight_lhs(&w))).abs() < 1e-14);
    }

    #[test]
    fn frustrated_triangle_is_found() {
        let mut w = DMatrix::from_element(4, 4, 0.5);
        for (i, j) in [(1, 2), (2, 3), (1, 3)] {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
        let weights = SuspensionWeights::from_matrix(w).unwrap();
        let cuts = separate(&weights, DEFAULT_MIN_VIOLATION, DEFAULT_MAX_CUTS);
        assert!(!cuts.is_empty());
        let first = &cuts[0];
        assert_eq!(first.signature().edges, vec![(1, 2), (1, 3), (2, 3)]);
        assert_eq!(first.odd_set().len(), 3);
        assert_eq!(first.weight_lhs(&weights), 0.0);
        let lens: Vec<f64> = cuts.iter().map(|c| c.weight_lhs(&weights)).collect();
        assert!(lens.windows(2).all(|p| p[0] <= p[1]));
        assert!(lens.iter().all(|&l| l < 1.0 - DEFAULT_MIN_VIOLATION));
    }

    #[test]
    fn realizable_point_has_no_cuts() {
        let eta = eta_from_states(&[[1, 1, -1], [-1, 1, 1], [1, -1, 1], [1, 1, 1]]);
        assert!(separate(&suspension_weights(&eta), DEFAULT_MIN_VIOLATION, 20).is_empty());
    }

    #[test]
    fn max_cuts_truncates() {
        let mut w = DMatrix::from_element(6, 6, 1.0);
        for i in 0..6 {
            w[(0, i)] = 0.5;
            w[(i, 0)] = 0.5;
        }
        let weights = SuspensionWeights::from_matrix(w).unwrap();
        let all = separate(&weights, DEFAULT_MIN_VIOLATION, usize::MAX);
        let two = separate(&weights, DEFAULT_MIN_VIOLATION, 2);
        assert!(all.len() > 2);
        assert_eq!(two, all[..2].to_vec());
        let sigs: BTreeSet<_> = all.iter().map(|c| c.signature().clone()).collect();
        assert_eq!(sigs.len(), all.len());
    }
}
