//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver or the separation routine; they are checked against it.

#![allow(dead_code)]

use cutlearn::model::{pairs, SuspensionWeights};
use cutlearn::solver::SolverState;
use cutlearn::{CycleInequality, IsingModel, MeanVector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random model with each pair present with probability `density`,
/// `theta_v ~ U[-1, 1]` and `theta_uv ~ U[-xi, xi]`.
pub fn random_model(rng: &mut ChaCha8Rng, p: usize, density: f64, xi: f64) -> IsingModel {
    let nodes = (0..p).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let mut edges = Vec::new();
    for u in 0..p {
        for v in u + 1..p {
            if rng.gen_bool(density) {
                edges.push((u, v, rng.gen_range(-xi..=xi)));
            }
        }
    }
    IsingModel::new(nodes, edges).unwrap()
}

/// `R(eta) + diag(1, 4/3, ..., 4/3)`, built from scratch.
pub fn shifted_moments(eta: &MeanVector) -> DMatrix<f64> {
    let p = eta.p();
    let mut s = DMatrix::zeros(p + 1, p + 1);
    s[(0, 0)] = 1.0;
    for v in 0..p {
        s[(v + 1, v + 1)] = 4.0 / 3.0;
        s[(0, v + 1)] = eta.node(v);
        s[(v + 1, 0)] = eta.node(v);
    }
    for (u, v) in pairs(p) {
        s[(u + 1, v + 1)] = eta.pair(u, v);
        s[(v + 1, u + 1)] = eta.pair(u, v);
    }
    s
}

pub fn cut_sum(cuts: &[CycleInequality], alpha: &[f64], n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, n);
    for (cut, &a) in cuts.iter().zip(alpha) {
        c += cut.coefficient_matrix() * a;
    }
    c
}

fn logdet_pd(x: &DMatrix<f64>) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// The penalised objective in `(Y, alpha)`, written out directly.
pub fn objective(y: &DMatrix<f64>, alpha: &[f64], s: &DMatrix<f64>, cuts: &[CycleInequality], lambda: f64) -> Option<f64> {
    let n = y.nrows();
    let ld = logdet_pd(&(y - cut_sum(cuts, alpha, n)))?;
    let mut pen = 0.0;
    for i in 1..n {
        for j in 1..n {
            if i != j {
                pen += y[(i, j)].abs();
            }
        }
    }
    let ab: f64 = cuts.iter().zip(alpha).map(|(c, a)| a * c.rhs()).sum();
    Some(-(y.component_mul(s)).sum() + ld + ab - lambda * pen)
}

/// Proximal-gradient ascent on `(Y, alpha)` jointly, with backtracking and
/// soft-thresholding of the penalised entries. Returns the best objective.
pub fn proximal_gradient(eta_hat: &MeanVector, cuts: &[CycleInequality], lambda: f64, max_iters: usize) -> f64 {
    let s = shifted_moments(eta_hat);
    let n = s.nrows();
    let mut y = s.clone().try_inverse().expect("invertible start");
    let mut alpha = vec![0.0; cuts.len()];
    let mut f = objective(&y, &alpha, &s, cuts, lambda).expect("feasible start");
    let mut step: f64 = 1.0;
    let soft = |x: f64, t: f64| x.signum() * (x.abs() - t).max(0.0);
    for _ in 0..max_iters {
        let z = (&y - cut_sum(cuts, &alpha, n)).try_inverse().unwrap();
        let gy = &z - &s;
        let ga: Vec<f64> = cuts.iter().map(|c| c.rhs() - (c.coefficient_matrix().component_mul(&z)).sum()).collect();
        let mut t = step * 2.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut y_new = &y + &gy * t;
            for i in 1..n {
                for j in 1..n {
                    if i != j {
                        y_new[(i, j)] = soft(y_new[(i, j)], t * lambda);
                    }
                }
            }
            let a_new: Vec<f64> = alpha.iter().zip(&ga).map(|(a, g)| (a + t * g).max(0.0)).collect();
            if let Some(f_new) = objective(&y_new, &a_new, &s, cuts, lambda) {
                // sufficient-ascent test of the proximal step
                let dy = &y_new - &y;
                let lin = (gy.component_mul(&dy)).sum()
                    + a_new.iter().zip(&alpha).zip(&ga).map(|((an, a), g)| g * (an - a)).sum::<f64>();
                let sq = dy.norm_squared() + a_new.iter().zip(&alpha).map(|(an, a)| (an - a).powi(2)).sum::<f64>();
                let smooth_new = f_new + lambda * penalty(&y_new);
                let smooth_old = f + lambda * penalty(&y);
                if smooth_new >= smooth_old + lin - sq / (2.0 * t) {
                    accepted = Some((y_new, a_new, f_new, sq));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((y_new, a_new, f_new, sq)) = accepted else { break };
        step = t;
        y = y_new;
        alpha = a_new;
        let done = (f_new - f).abs() <= 1e-15 * f.abs().max(1.0) && sq.sqrt() / t < 1e-9;
        f = f_new;
        if done {
            break;
        }
    }
    f
}

fn penalty(y: &DMatrix<f64>) -> f64 {
    let n = y.nrows();
    let mut pen = 0.0;
    for i in 1..n {
        for j in 1..n {
            if i != j {
                pen += y[(i, j)].abs();
            }
        }
    }
    pen
}

/// Smallest `sum_{C \ F} w + sum_F (1 - w)` over every simple cycle with at
/// least three vertices and every odd `F`, by enumeration.
pub fn min_cycle_lhs(weights: &SuspensionWeights) -> Option<f64> {
    let n = weights.num_vertices();
    let mut best: Option<f64> = None;
    let mut path = Vec::with_capacity(n);
    for start in 0..n {
        path.clear();
        path.push(start);
        extend(weights, start, &mut path, &mut best);
    }
    best
}

fn extend(weights: &SuspensionWeights, start: usize, path: &mut Vec<usize>, best: &mut Option<f64>) {
    let n = weights.num_vertices();
    let k = path.len();
    // each cycle once: smallest vertex first, second vertex below the last
    if k >= 3 && path[1] < path[k - 1] {
        let w: Vec<f64> = (0..k).map(|i| weights.weight(path[i], path[(i + 1) % k])).collect();
        for mask in 0u32..(1 << k) {
            if mask.count_ones() % 2 == 1 {
                let lhs: f64 = (0..k).map(|i| if mask >> i & 1 == 1 { 1.0 - w[i] } else { w[i] }).sum();
                *best = Some(best.map_or(lhs, |b| b.min(lhs)));
            }
        }
    }
    for next in start + 1..n {
        if !path.contains(&next) {
            path.push(next);
            extend(weights, start, path, best);
            path.pop();
        }
    }
}

/// Worst violations of the optimality conditions at a solver state.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kkt {
    pub box_ok: bool,
    pub alpha_ok: bool,
    pub coupling: f64,
    pub node_moments: f64,
    pub active_slack: f64,
}

impl Kkt {
    pub fn passes(&self) -> bool {
        self.box_ok && self.alpha_ok && self.coupling <= 1e-6 && self.node_moments <= 1e-10 && self.active_slack <= 1e-4
    }
}

/// Checks a solver state against the data it was fitted to.
///
/// `active` lists the pairs with a nonzero fitted coupling.
pub fn kkt(state: &SolverState, eta_hat: &MeanVector, lambda: f64, active: &[(usize, usize)]) -> Kkt {
    let w = &state.w;
    let n = w.nrows();
    let mut box_ok = true;
    for i in 0..n {
        for j in 0..n {
            let pinned = i == 0 || j == 0 || i == j;
            if (pinned && w[(i, j)] != 0.0) || w[(i, j)].abs() > lambda || w[(i, j)] != w[(j, i)] {
                box_ok = false;
            }
        }
    }
    let alpha_ok = state.alpha.iter().all(|&a| a >= 0.0);
    let s = shifted_moments(eta_hat);
    let c = cut_sum(&state.cuts, &state.alpha, n);
    let predicted = (&s + w).try_inverse().expect("S + W invertible") + &c;
    let coupling = (&predicted - &state.y).amax();
    // moments implied by the primal iterate: (Y - C)^{-1} should reproduce S + W
    let z = (&state.y - &c).try_inverse().expect("Y - C invertible");
    let mut node_moments: f64 = (z[(0, 0)] - 1.0).abs();
    for v in 0..eta_hat.p() {
        node_moments = node_moments.max((z[(0, v + 1)] - eta_hat.node(v)).abs());
    }
    let active_slack = active
        .iter()
        .map(|&(u, v)| lambda - w[(u + 1, v + 1)].abs())
        .fold(0.0, f64::max);
    Kkt { box_ok, alpha_ok, coupling, node_moments, active_slack }
}
