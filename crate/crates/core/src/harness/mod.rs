//! Evaluation metrics, the four estimators behind one interface, and the
//! batch experiment runners.

mod config;
mod run;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_pseudo, symmetrize, Symmetrization};
use crate::error::{Error, Result};
use crate::model::{edge_set, IsingModel, MeanVector};
use crate::separation::CycleInequality;
use crate::solver::{fit, fit_no_cuts, surrogate_loglik, SolverConfig};
use crate::synthetic::{empirical_means, Dataset};

pub use config::{ExperimentConfig, GibbsSettings, Protocol};
pub use run::{
    derive_seed, loglog_slope, run_experiment, run_likelihood_experiment, run_rate_experiment,
    run_structure_experiment, write_results, ExperimentOutput, RateSummary, ResultRow, CSV_HEADER,
};

/// The estimators compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Log-determinant surrogate with cycle-inequality cuts.
    #[serde(rename = "logdet-cut")]
    LogdetCut,
    /// Log-determinant surrogate without cuts.
    #[serde(rename = "logdet")]
    Logdet,
    #[serde(rename = "pl-min")]
    PlMin,
    #[serde(rename = "pl-max")]
    PlMax,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LogdetCut, Method::Logdet, Method::PlMin, Method::PlMax];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LogdetCut => "logdet-cut",
            Method::Logdet => "logdet",
            Method::PlMin => "pl-min",
            Method::PlMax => "pl-max",
        }
    }

    pub fn is_pseudo_likelihood(self) -> bool {
        matches!(self, Method::PlMin | Method::PlMax)
    }

    /// Scale on which `lambda` penalises the couplings.
    pub fn penalty_scale(self) -> &'static str {
        if self.is_pseudo_likelihood() {
            "logistic"
        } else {
            "theta"
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected logdet-cut, logdet, pl-min or pl-max)")))
    }
}

/// Estimated model plus everything needed to re-evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub method: Method,
    pub lambda: f64,
    pub model: IsingModel,
    /// `eta*` for the surrogate methods.
    pub fitted_means: Option<MeanVector>,
    pub cuts: Vec<CycleInequality>,
    pub cut_violations: Vec<f64>,
    pub rounds: usize,
    pub objective_per_round: Vec<f64>,
    pub cuts_per_round: Vec<usize>,
    pub round_limit_reached: bool,
    /// Nodes whose logistic fit hit the coefficient cap or the sweep limit.
    pub capped_nodes: Vec<usize>,
    pub unconverged_nodes: Vec<usize>,
    pub wall_time: f64,
    pub solver: SolverConfig,
    /// Seed recorded with the fit; the estimators themselves are deterministic.
    pub seed: Option<u64>,
}

impl FitRecord {
    pub fn cuts_added(&self) -> usize {
        self.cuts.len()
    }
}

/// Fits `method` to a dataset. `cfg.lambda` is the penalty on the method's own scale.
pub fn fit_method(method: Method, data: &Dataset, cfg: &SolverConfig) -> Result<FitRecord> {
    let start = Instant::now();
    match method {
        Method::LogdetCut | Method::Logdet => {
            let eta_hat = empirical_means(data)?;
            let res = if method == Method::LogdetCut { fit(&eta_hat, cfg)? } else { fit_no_cuts(&eta_hat, cfg)? };
            Ok(FitRecord {
                method,
                lambda: cfg.lambda,
                model: res.model,
                fitted_means: Some(res.fitted_means),
                cuts: res.cuts,
                cut_violations: res.cut_violations,
                rounds: res.rounds,
                objective_per_round: res.objective_per_round,
                cuts_per_round: res.cuts_per_round,
                round_limit_reached: res.round_limit_reached,
                capped_nodes: Vec::new(),
                unconverged_nodes: Vec::new(),
                wall_time: start.elapsed().as_secs_f64(),
                solver: *cfg,
                seed: None,
            })
        }
        Method::PlMin | Method::PlMax => {
            let est = fit_pseudo(data, cfg.lambda)?;
            let mode = if method == Method::PlMin { Symmetrization::Min } else { Symmetrization::Max };
            Ok(FitRecord {
                method,
                lambda: cfg.lambda,
                model: symmetrize(&est, mode, cfg.edge_tol),
                fitted_means: None,
                cuts: Vec::new(),
                cut_violations: Vec::new(),
                rounds: 0,
                objective_per_round: Vec::new(),
                cuts_per_round: Vec::new(),
                round_limit_reached: false,
                capped_nodes: est.capped_nodes,
                unconverged_nodes: est.unconverged_nodes,
                wall_time: start.elapsed().as_secs_f64(),
                solver: *cfg,
                seed: None,
            })
        }
    }
}

/// `(precision, recall)`; `None` where the denominator is zero.
pub fn precision_recall(
    estimated: &BTreeSet<(usize, usize)>,
    truth: &BTreeSet<(usize, usize)>,
) -> (Option<f64>, Option<f64>) {
    let hits = estimated.intersection(truth).count() as f64;
    let ratio = |d: usize| (d > 0).then(|| hits / d as f64);
    (ratio(estimated.len()), ratio(truth.len()))
}

/// Euclidean distance between two parameter vectors over all node and pair coordinates.
pub fn l2_param_error(a: &IsingModel, b: &IsingModel) -> Result<f64> {
    if a.p() != b.p() {
        return Err(Error::InvalidModel(format!("p mismatch: {} vs {}", a.p(), b.p())));
    }
    Ok(a.to_vector().iter().zip(b.to_vector()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

/// Per-fit evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub edge_count: usize,
    pub l2_param_error: Option<f64>,
    /// Test surrogate log-likelihood under the fit's own cuts.
    pub test_surrogate_loglik: Option<f64>,
    /// The same without any cuts.
    pub test_surrogate_loglik_no_cuts: Option<f64>,
    pub cuts_added: usize,
    pub wall_time: f64,
}

/// Scores a fit against a true model and/or held-out moments.
pub fn evaluate(
    fit: &FitRecord,
    truth: Option<&IsingModel>,
    test_means: Option<&MeanVector>,
    edge_tol: f64,
) -> Result<Metrics> {
    let estimated = edge_set(&fit.model, edge_tol);
    let (precision, recall, l2) = match truth {
        Some(t) => {
            let (pr, rc) = precision_recall(&estimated, &edge_set(t, 0.0));
            (pr, rc, Some(l2_param_error(&fit.model, t)?))
        }
        None => (None, None, None),
    };
    let (own, bare) = match test_means {
        Some(eta) => (
            Some(surrogate_loglik(&fit.model, eta, &fit.cuts, &fit.solver)?),
            Some(surrogate_loglik(&fit.model, eta, &[], &fit.solver)?),
        ),
        None => (None, None),
    };
    Ok(Metrics {
        precision,
        recall,
        edge_count: estimated.len(),
        l2_param_error: l2,
        test_surrogate_loglik: own,
        test_surrogate_loglik_no_cuts: bare,
        cuts_added: fit.cuts_added(),
        wall_time: fit.wall_time,
    })
}
