//! Brute-force exact inference by enumerating all `2^p` states.
//!
//! Intended for small models only: it is the ground truth that the
//! relaxation, the sampler and the separation routine are tested against.

use crate::error::{Error, Result};
use crate::model::{num_pairs, pairs, IsingModel, MeanVector};
use crate::synthetic::{empirical_means, Dataset};

/// Largest `p` the enumeration will accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimit {
    pub max_p: usize,
}

impl Default for OracleLimit {
    fn default() -> Self {
        OracleLimit { max_p: 16 }
    }
}

impl OracleLimit {
    fn check(&self, p: usize) -> Result<()> {
        if p > self.max_p {
            Err(Error::TooLarge { p, max_p: self.max_p })
        } else {
            Ok(())
        }
    }
}

#[inline]
fn spin(state: usize, v: usize) -> f64 {
    if state >> v & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `<theta, phi(x)>` for every state in plain binary counting order.
fn energies(model: &IsingModel) -> Vec<f64> {
    let p = model.p();
    let edges: Vec<_> = model.edge_params().iter().map(|(&(u, v), &t)| (u, v, t)).collect();
    (0..1usize << p)
        .map(|s| {
            let mut e = 0.0;
            for (v, &t) in model.node_params().iter().enumerate() {
                e += t * spin(s, v);
            }
            for &(u, v, t) in &edges {
                e += t * spin(s, u) * spin(s, v);
            }
            e
        })
        .collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|e| (e - max).exp()).sum::<f64>().ln()
}

/// Exact log-partition function `A(theta)` with the default limit.
pub fn exact_log_partition(model: &IsingModel) -> Result<f64> {
    exact_log_partition_with(model, OracleLimit::default())
}

pub fn exact_log_partition_with(model: &IsingModel, limit: OracleLimit) -> Result<f64> {
    limit.check(model.p())?;
    Ok(log_sum_exp(&energies(model)))
}

/// Exact mean parameters `E_theta[phi(x)]` with the default limit.
pub fn exact_mean_parameters(model: &IsingModel) -> Result<MeanVector> {
    exact_mean_parameters_with(model, OracleLimit::default())
}

pub fn exact_mean_parameters_with(model: &IsingModel, limit: OracleLimit) -> Result<MeanVector> {
    let p = model.p();
    limit.check(p)?;
    let e = energies(model);
    let log_z = log_sum_exp(&e);
    let pair_list: Vec<_> = pairs(p).collect();
    let mut node = vec![0.0; p];
    let mut pair = vec![0.0; num_pairs(p)];
    let mut x = vec![0.0; p];
    for (s, &energy) in e.iter().enumerate() {
        let prob = (energy - log_z).exp();
        for (v, xv) in x.iter_mut().enumerate() {
            *xv = spin(s, v);
            node[v] += prob * *xv;
        }
        for (k, &(u, v)) in pair_list.iter().enumerate() {
            pair[k] += prob * x[u] * x[v];
        }
    }
    MeanVector::new(node, pair)
}

/// Average exact log-likelihood `<theta, eta_hat> - A(theta)` of a dataset.
pub fn exact_avg_loglik(model: &IsingModel, data: &Dataset) -> Result<f64> {
    if data.p() != model.p() {
        return Err(Error::InvalidData(format!(
            "dataset has p = {}, model has p = {}",
            data.p(),
            model.p()
        )));
    }
    let eta_hat = empirical_means(data)?;
    let log_z = exact_log_partition(model)?;
    Ok(model.dot_means(&eta_hat) - log_z)
}
