//! The log-determinant upper bound on the log-partition function.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};

use super::inner::multiplier_matrix;
use super::{alpha_step, m_vector, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, logdet_inverse};
use crate::model::{param_matrix, IsingModel, MeanVector, MomentMatrix};
use crate::separation::CycleInequality;

/// Relaxed inference result for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateInference {
    /// `B(theta)`.
    pub log_partition: f64,
    /// Off-diagonal of `Z = (-R(theta) - diag(nu) - sum alpha_i A_i)^{-1}` at the optimum.
    pub means: MeanVector,
    pub nu: DVector<f64>,
    pub alpha: Vec<f64>,
}

const NU_TOL: f64 = 1e-11;

/// Maximises `nu^T m + alpha^T b + logdet(-R(theta) - diag(nu) - sum alpha_i A_i)`
/// by alternating Newton steps in `nu` with the multiplier update, then
/// returns `B(theta) = (p/2) log(e pi / 2) - (p+1)/2 - max / 2` and the relaxed means.
pub fn surrogate_inference(
    model: &IsingModel,
    cuts: &[CycleInequality],
    cfg: &SolverConfig,
) -> Result<SurrogateInference> {
    let p = model.p();
    let n = p + 1;
    let m = m_vector(p);
    let neg_r = -param_matrix(model).into_inner();
    let mut alpha = vec![0.0; cuts.len()];

    // scaled-identity ramp: nu = -t 1 until the matrix is positive definite
    let mut t = 1.0;
    let mut nu = loop {
        let candidate = DVector::from_element(n, -t);
        if cholesky(&(&neg_r - DMatrix::from_diagonal(&candidate))).is_some() {
            break candidate;
        }
        t *= 2.0;
        if t > 1e150 {
            return Err(Error::NotPositiveDefinite("-R(theta) - diag(nu)"));
        }
    };

    let objective = |nu: &DVector<f64>, alpha: &[f64]| -> Option<(f64, DMatrix<f64>)> {
        let x = &neg_r - DMatrix::from_diagonal(nu) - multiplier_matrix(cuts, alpha, n);
        let (ld, z) = logdet_inverse(&x)?;
        let ab: f64 = cuts.iter().zip(alpha).map(|(c, a)| a * c.rhs()).sum();
        Some((nu.dot(&m) + ab + ld, z))
    };

    let mut rounds = 0;
    let (value, z) = loop {
        rounds += 1;
        let (mut value, mut z) = objective(&nu, &alpha).ok_or(Error::NotPositiveDefinite("surrogate iterate"))?;
        for _ in 0..100 {
            let grad = &m - z.diagonal();
            if grad.amax() <= NU_TOL {
                break;
            }
            let hess = z.component_mul(&z);
            let Some(chol) = cholesky(&hess) else { break };
            let dir = chol.solve(&grad);
            let slope = grad.dot(&dir);
            let mut s = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial = &nu + &dir * s;
                if let Some((v, zt)) = objective(&trial, &alpha) {
                    if v >= value + 1e-4 * s * slope {
                        nu = trial;
                        value = v;
                        z = zt;
                        moved = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if cuts.is_empty() {
            break (value, z);
        }
        let y = &neg_r - DMatrix::from_diagonal(&nu);
        let res = alpha_step(&y, cuts, &alpha, &cfg.alpha)?;
        let nu_ok = (&m - z.diagonal()).amax() <= 1e-9;
        let alpha_settled = res.iterations == 0 || res.alpha == alpha;
        if (alpha_settled && nu_ok) || rounds >= 500 {
            break (value, z);
        }
        alpha = res.alpha;
    };

    let pf = p as f64;
    let log_partition = 0.5 * pf * (E * PI / 2.0).ln() - 0.5 * (pf + 1.0) - 0.5 * value;
    let means = MeanVector::from_moment_matrix(&MomentMatrix::from_matrix(z).expect("inverse is symmetric"));
    Ok(SurrogateInference { log_partition, means, nu, alpha })
}

/// `B(theta)` under the given cut pool.
pub fn surrogate_logpartition(model: &IsingModel, cuts: &[CycleInequality], cfg: &SolverConfig) -> Result<f64> {
    Ok(surrogate_inference(model, cuts, cfg)?.log_partition)
}

/// `<theta, eta_test> - B(theta)`, without the penalty.
pub fn surrogate_loglik(
    model: &IsingModel,
    eta_test: &MeanVector,
    cuts: &[CycleInequality],
    cfg: &SolverConfig,
) -> Result<f64> {
    Ok(model.dot_means(eta_test) - surrogate_logpartition(model, cuts, cfg)?)
}
