//! Neighbourhood selection by per-node ℓ1-penalised logistic regression.
//!
//! Each node is regressed on all the others; the conditional of an Ising
//! model has logit `2 theta_v + 2 sum_u theta_uv x_u`, so coefficients are
//! halved to land on the Ising scale. The penalty acts on the logistic scale.

use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{pairs, IsingModel};
use crate::synthetic::Dataset;

/// Bound on `|beta_j|` that keeps quasi-separable data finite.
pub const COEFFICIENT_CAP: f64 = 30.0;
/// Stop when no coordinate moves more than this in a sweep.
pub const COORDINATE_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;

/// Output of one penalised logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Objective after every full sweep, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Some coefficient hit [`COEFFICIENT_CAP`].
    pub capped: bool,
}

#[inline]
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// `(1/n) sum log(1 + exp(-y (b0 + b^T z))) + lambda ||b||_1` for responses
/// `y` and design rows `z` in `{-1, +1}`.
pub fn logistic_objective(y: &[f64], z: &[Vec<f64>], intercept: f64, beta: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let loss: f64 = y
        .iter()
        .zip(z)
        .map(|(&yi, zi)| {
            let f = intercept + beta.iter().zip(zi).map(|(b, x)| b * x).sum::<f64>();
            log1p_exp(-yi * f)
        })
        .sum();
    loss / n + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Response column `v` and the remaining columns of `data`.
fn split_columns(data: &Dataset, v: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let y = data.rows().map(|r| f64::from(r[v])).collect();
    let z = data
        .rows()
        .map(|r| r.iter().enumerate().filter(|&(u, _)| u != v).map(|(_, &x)| f64::from(x)).collect())
        .collect();
    (y, z)
}

/// Cyclic coordinate descent with the curvature bound `1/4`:
/// `beta_j <- S(beta_j - 4 g_j, 4 lambda)`, intercept unpenalised.
pub fn logistic_regression(y: &[f64], z: &[Vec<f64>], lambda: f64) -> Result<LogisticFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let k = z.first().map_or(0, Vec::len);
    let nf = n as f64;
    // a constant response drives the intercept to the cap; start there instead of creeping
    let constant = y.iter().all(|&yi| yi == y[0]);
    let mut intercept = if constant { y[0].signum() * COEFFICIENT_CAP } else { 0.0 };
    let mut beta = vec![0.0; k];
    // margins y_i * f_i, kept in sync with every coordinate update
    let mut margin: Vec<f64> = y.iter().map(|&yi| yi * intercept).collect();
    let mut trace = vec![logistic_objective(y, z, intercept, &beta, lambda)];
    let mut capped = constant;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut biggest: f64 = 0.0;
        // intercept
        let g0 = -margin.iter().zip(y).map(|(&m, &yi)| yi * sigmoid(-m)).sum::<f64>() / nf;
        let new0 = (intercept - 4.0 * g0).clamp(-COEFFICIENT_CAP, COEFFICIENT_CAP);
        let d0 = new0 - intercept;
        if d0 != 0.0 {
            for (m, &yi) in margin.iter_mut().zip(y) {
                *m += yi * d0;
            }
            intercept = new0;
            biggest = biggest.max(d0.abs());
        }
        for j in 0..k {
            let g = -margin.iter().zip(y).zip(z).map(|((&m, &yi), zi)| yi * zi[j] * sigmoid(-m)).sum::<f64>() / nf;
            let mut next = soft_threshold(beta[j] - 4.0 * g, 4.0 * lambda);
            if next.abs() > COEFFICIENT_CAP {
                next = next.signum() * COEFFICIENT_CAP;
                capped = true;
            }
            let d = next - beta[j];
            if d != 0.0 {
                for ((m, &yi), zi) in margin.iter_mut().zip(y).zip(z) {
                    *m += yi * zi[j] * d;
                }
                beta[j] = next;
                biggest = biggest.max(d.abs());
            }
        }
        trace.push(logistic_objective(y, z, intercept, &beta, lambda));
        if biggest < COORDINATE_TOL {
            converged = true;
            break;
        }
    }
    Ok(LogisticFit { intercept, coefficients: beta, objective_trace: trace, sweeps, converged, capped })
}

/// Regresses node `v` on all other nodes of `data`.
pub fn logistic_lasso(v: usize, data: &Dataset, lambda: f64) -> Result<LogisticFit> {
    if v >= data.p() {
        return Err(Error::Config(format!("node {v} out of range for p = {}", data.p())));
    }
    let (y, z) = split_columns(data, v);
    logistic_regression(&y, &z, lambda)
}

/// Per-node estimates before symmetrisation, on the Ising scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricEstimate {
    /// `couplings[(u, v)]` is the weight on `x_v` in the regression of node `u`; diagonal unused.
    pub couplings: DMatrix<f64>,
    pub node_fields: Vec<f64>,
    /// Nodes whose regression hit the coefficient cap.
    pub capped_nodes: Vec<usize>,
    /// Nodes whose regression stopped at the sweep limit.
    pub unconverged_nodes: Vec<usize>,
}

impl AsymmetricEstimate {
    pub fn p(&self) -> usize {
        self.node_fields.len()
    }
}

/// Runs [`logistic_lasso`] for every node and rescales to Ising parameters.
pub fn fit_pseudo(data: &Dataset, lambda: f64) -> Result<AsymmetricEstimate> {
    let p = data.p();
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let fits: Vec<LogisticFit> = (0..p).into_par_iter().map(|v| logistic_lasso(v, data, lambda)).collect::<Result<_>>()?;
    let mut couplings = DMatrix::zeros(p, p);
    let mut node_fields = Vec::with_capacity(p);
    for (v, fit) in fits.iter().enumerate() {
        node_fields.push(fit.intercept / 2.0);
        let others = (0..p).filter(|&u| u != v);
        for (u, b) in others.zip(&fit.coefficients) {
            couplings[(v, u)] = b / 2.0;
        }
    }
    Ok(AsymmetricEstimate {
        couplings,
        node_fields,
        capped_nodes: fits.iter().enumerate().filter(|(_, f)| f.capped).map(|(v, _)| v).collect(),
        unconverged_nodes: fits.iter().enumerate().filter(|(_, f)| !f.converged).map(|(v, _)| v).collect(),
    })
}

/// How the two directed estimates of a coupling are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetrization {
    /// Keep the smaller magnitude.
    Min,
    /// Keep the larger magnitude.
    Max,
}

impl FromStr for Symmetrization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Symmetrization::Min),
            "max" => Ok(Symmetrization::Max),
            _ => Err(Error::Config(format!("symmetrization must be `min` or `max`, got `{s}`"))),
        }
    }
}

/// Merges directed couplings into one Ising model. Ties keep the estimate
/// from the lower-indexed node; magnitudes `<= edge_tol` become zero.
pub fn symmetrize(est: &AsymmetricEstimate, mode: Symmetrization, edge_tol: f64) -> IsingModel {
    let p = est.p();
    let edges: Vec<(usize, usize, f64)> = pairs(p)
        .map(|(u, v)| {
            let (forward, backward) = (est.couplings[(u, v)], est.couplings[(v, u)]);
            let keep_backward = match mode {
                Symmetrization::Min => backward.abs() < forward.abs(),
                Symmetrization::Max => backward.abs() > forward.abs(),
            };
            (u, v, if keep_backward { backward } else { forward })
        })
        .filter(|&(_, _, t)| t.abs() > edge_tol)
        .collect();
    IsingModel::new(est.node_fields.clone(), edges).expect("symmetrized estimate is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::edge_set;
    use crate::solver::auto_lambda;
    use crate::synthetic::{assign_parameters, gibbs_sample, make_graph, GraphSpec, SamplerConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coin_rows(p: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<i8>> =
            (0..n).map(|_| (0..p).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect()).collect();
        Dataset::from_rows(p, &rows).unwrap()
    }

    fn sampled(p: usize, n_edges: usize, xi: f64, n: usize, seed: u64) -> (IsingModel, Dataset) {
        let spec = GraphSpec::RandomSparse { p, n_edges, max_degree: None };
        let edges = make_graph(&spec, seed).unwrap();
        let model = assign_parameters(p, &edges, xi, seed + 1).unwrap();
        let data = gibbs_sample(&model, &SamplerConfig { n, seed: seed + 2, ..Default::default() }).unwrap();
        (model, data)
    }

    /// Proximal gradient with backtracking on the full objective.
    fn proximal_oracle(y: &[f64], z: &[Vec<f64>], lambda: f64) -> f64 {
        let k = z[0].len();
        let n = y.len() as f64;
        let smooth = |b0: f64, b: &[f64]| logistic_objective(y, z, b0, b, 0.0);
        let grad = |b0: f64, b: &[f64]| {
            let mut g = vec![0.0; k + 1];
            for (yi, zi) in y.iter().zip(z) {
                let f = b0 + b.iter().zip(zi).map(|(a, x)| a * x).sum::<f64>();
                let s = -yi * sigmoid(-yi * f) / n;
                g[0] += s;
                for j in 0..k {
                    g[j + 1] += s * zi[j];
                }
            }
            g
        };
        let (mut b0, mut b) = (0.0, vec![0.0; k]);
        let mut step = 1.0;
        for _ in 0..20_000 {
            let g = grad(b0, &b);
            let f = smooth(b0, &b);
            loop {
                let nb0 = b0 - step * g[0];
                let nb: Vec<f64> = (0..k).map(|j| soft_threshold(b[j] - step * g[j + 1], step * lambda)).collect();
                let d: Vec<f64> = std::iter::once(nb0 - b0).chain(nb.iter().zip(&b).map(|(x, y)| x - y)).collect();
                let lin: f64 = d.iter().zip(&g).map(|(a, c)| a * c).sum();
                let quad: f64 = d.iter().map(|a| a * a).sum::<f64>() / (2.0 * step);
                if smooth(nb0, &nb) <= f + lin + quad + 1e-15 {
                    b0 = nb0;
                    b = nb;
                    break;
                }
                step *= 0.5;
            }
            step *= 1.5;
        }
        logistic_objective(y, z, b0, &b, lambda)
    }

    #[test]
    fn huge_lambda_gives_log_odds_intercept() {
        let data = coin_rows(4, 200, 1);
        let fit = logistic_lasso(0, &data, 100.0).unwrap();
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        let mean = data.rows().map(|r| f64::from(r[0])).sum::<f64>() / 200.0;
        let q = (1.0 + mean) / 2.0;
        assert!((fit.intercept - (q / (1.0 - q)).ln()).abs() <= 1e-6);
    }

    #[test]
    fn independent_columns_give_small_coefficients() {
        let data = coin_rows(6, 5000, 2);
        let lambda = auto_lambda(6, 5000);
        for v in 0..6 {
            let fit = logistic_lasso(v, &data, lambda).unwrap();
            assert!(fit.coefficients.iter().all(|b| b.abs() <= 0.1));
        }
    }

    #[test]
    fn matches_proximal_gradient_oracle() {
        for seed in 0..4 {
            let (_, data) = sampled(6 + seed as usize, 8, 1.0, 300, 10 + seed);
            for lambda in [0.01, 0.05, 0.2] {
                let (y, z) = split_columns(&data, 0);
                let fit = logistic_regression(&y, &z, lambda).unwrap();
                let ours = logistic_objective(&y, &z, fit.intercept, &fit.coefficients, lambda);
                let oracle = proximal_oracle(&y, &z, lambda);
                assert!(ours <= oracle + 1e-6, "seed {seed} lambda {lambda}: {ours} vs {oracle}");
            }
        }
    }

    #[test]
    fn objective_never_increases_per_sweep() {
        let (_, data) = sampled(8, 10, 1.0, 400, 20);
        for v in 0..8 {
            let fit = logistic_lasso(v, &data, 0.03).unwrap();
            assert!(fit.converged);
            assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        }
    }

    #[test]
    fn unpenalised_fit_is_stationary() {
        let (_, data) = sampled(5, 6, 0.5, 4000, 30);
        let (y, z) = split_columns(&data, 2);
        let fit = logistic_regression(&y, &z, 0.0).unwrap();
        let n = y.len() as f64;
        let mut g = vec![0.0; z[0].len() + 1];
        for (yi, zi) in y.iter().zip(&z) {
            let f = fit.intercept + fit.coefficients.iter().zip(zi).map(|(a, x)| a * x).sum::<f64>();
            let s = -yi * sigmoid(-yi * f) / n;
            g[0] += s;
            for (j, x) in zi.iter().enumerate() {
                g[j + 1] += s * x;
            }
        }
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-5);
    }

    #[test]
    fn separable_data_stays_finite() {
        let rows: Vec<Vec<i8>> = (0..50).map(|i| if i % 2 == 0 { vec![1, 1] } else { vec![-1, -1] }).collect();
        let data = Dataset::from_rows(2, &rows).unwrap();
        let fit = logistic_lasso(0, &data, 0.0).unwrap();
        assert!(fit.coefficients[0] > 5.0 && fit.coefficients[0] <= COEFFICIENT_CAP);
        assert!(fit.intercept.is_finite());
    }

    #[test]
    fn constant_response_goes_straight_to_the_cap() {
        let rows: Vec<Vec<i8>> = (0..40).map(|i| vec![-1, if i % 3 == 0 { 1 } else { -1 }]).collect();
        let data = Dataset::from_rows(2, &rows).unwrap();
        let fit = logistic_lasso(0, &data, 0.05).unwrap();
        assert!(fit.converged && fit.capped);
        assert_eq!(fit.intercept, -COEFFICIENT_CAP);
        assert_eq!(fit.coefficients, vec![0.0]);
        assert!(fit.sweeps <= 2);
    }

    #[test]
    fn ferromagnet_signs() {
        let model = IsingModel::new(vec![0.0, 0.0], [(0, 1, 1.0)]).unwrap();
        let data = gibbs_sample(&model, &SamplerConfig { n: 2000, seed: 4, ..Default::default() }).unwrap();
        let est = fit_pseudo(&data, 0.01).unwrap();
        assert!(est.couplings[(0, 1)] > 0.0 && est.couplings[(1, 0)] > 0.0);
    }

    #[test]
    fn relabelling_permutes_the_estimate() {
        let (_, data) = sampled(5, 6, 1.0, 500, 40);
        let perm = [3, 0, 4, 1, 2];
        let rows: Vec<Vec<i8>> = data.rows().map(|r| perm.iter().map(|&k| r[k]).collect()).collect();
        let permuted = Dataset::from_rows(5, &rows).unwrap();
        let a = fit_pseudo(&data, 0.05).unwrap();
        let b = fit_pseudo(&permuted, 0.05).unwrap();
        for i in 0..5 {
            assert!((b.node_fields[i] - a.node_fields[perm[i]]).abs() <= 1e-5);
            for j in 0..5 {
                if i != j {
                    assert!((b.couplings[(i, j)] - a.couplings[(perm[i], perm[j])]).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn sign_recovery_on_weak_couplings() {
        let sign = |x: f64| if x > 0.0 { 1 } else if x < 0.0 { -1 } else { 0 };
        let (mut agree, mut total) = (0, 0);
        for rep in 0..5 {
            let (model, data) = sampled(8, 10, 0.5, 10_000, 50 + 10 * rep);
            let est = fit_pseudo(&data, 1e-3).unwrap();
            for (&(u, v), &t) in model.edge_params() {
                total += 1;
                if sign(est.couplings[(u, v)]) == sign(t) && sign(est.couplings[(v, u)]) == sign(t) {
                    agree += 1;
                }
            }
        }
        assert!(agree as f64 >= 0.9 * total as f64, "{agree}/{total}");
    }

    fn two_node_estimate(forward: f64, backward: f64) -> AsymmetricEstimate {
        AsymmetricEstimate {
            couplings: DMatrix::from_row_slice(2, 2, &[0.0, forward, backward, 0.0]),
            node_fields: vec![0.1, -0.2],
            capped_nodes: vec![],
            unconverged_nodes: vec![],
        }
    }

    #[test]
    fn min_and_max_rules() {
        let est = two_node_estimate(0.2, -0.7);
        assert_eq!(symmetrize(&est, Symmetrization::Min, 1e-4).edge(0, 1), 0.2);
        assert_eq!(symmetrize(&est, Symmetrization::Max, 1e-4).edge(0, 1), -0.7);
        let tie = two_node_estimate(0.5, -0.5);
        assert_eq!(symmetrize(&tie, Symmetrization::Min, 0.0).edge(0, 1), 0.5);
        assert_eq!(symmetrize(&tie, Symmetrization::Max, 0.0).edge(0, 1), 0.5);
        let same = two_node_estimate(0.3, 0.3);
        assert_eq!(symmetrize(&same, Symmetrization::Min, 0.0), symmetrize(&same, Symmetrization::Max, 0.0));
        assert_eq!(symmetrize(&est, Symmetrization::Min, 0.0).node_params(), &[0.1, -0.2]);
        assert_eq!("min".parse::<Symmetrization>().unwrap(), Symmetrization::Min);
        assert!("mean".parse::<Symmetrization>().is_err());
    }

    #[test]
    fn min_edges_are_contained_in_max_edges() {
        let (_, data) = sampled(8, 12, 1.0, 400, 60);
        let est = fit_pseudo(&data, 0.05).unwrap();
        let lo = symmetrize(&est, Symmetrization::Min, 1e-4);
        let hi = symmetrize(&est, Symmetrization::Max, 1e-4);
        assert!(edge_set(&lo, 1e-4).is_subset(&edge_set(&hi, 1e-4)));
        for (u, v) in pairs(8) {
            assert!(lo.edge(u, v).abs() <= hi.edge(u, v).abs());
        }
    }
}
