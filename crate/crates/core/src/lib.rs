//! Sparse Ising model learning with a log-determinant surrogate likelihood
//! tightened by cycle-inequality cutting planes.
//!
//! The main entry point is [`fit`], which takes empirical means and returns a
//! sparse [`IsingModel`] together with the cuts that were added. The
//! [`oracle`] module gives exact answers for small models, [`synthetic`]
//! generates graphs and Gibbs samples, and [`baselines`] holds the
//! pseudo-likelihood neighbourhood-selection estimators. [`harness`] runs
//! seeded batch experiments over all four estimators and writes CSV tables;
//! [`io`] reads and writes the model, samples and fit files.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod io;
mod linalg;
pub mod model;
pub mod oracle;
pub mod separation;
pub mod solver;
pub mod synthetic;

pub use baselines::{fit_pseudo, symmetrize, AsymmetricEstimate, Symmetrization};
pub use error::{Error, Result};
pub use harness::{
    evaluate, fit_method, precision_recall, run_experiment, ExperimentConfig, FitRecord, Method, Metrics, Protocol,
};
pub use model::{
    edge_set, moment_matrix, param_matrix, suspension_weights, IsingModel, MeanVector, MomentMatrix,
    SuspensionWeights, DEFAULT_EDGE_TOL,
};
pub use oracle::{exact_avg_loglik, exact_log_partition, exact_mean_parameters, OracleLimit};
pub use separation::{cycle_to_matrix, separate, violation, CutSignature, CycleInequality};
pub use solver::{
    auto_lambda, fit, fit_no_cuts, surrogate_logpartition, surrogate_loglik, AlphaStepConfig, FitResult,
    LambdaRule, SolverConfig, StepRule,
};
pub use synthetic::{assign_parameters, empirical_means, gibbs_sample, make_graph, Dataset, GraphSpec, SamplerConfig};
