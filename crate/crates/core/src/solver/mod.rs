//! Penalised log-determinant surrogate likelihood with cycle-inequality cuts.
//!
//! The learning problem is solved in the matrix variables
//! `Y = -R(theta) - diag(nu)` and cut multipliers `alpha >= 0`:
//!
//! ```text
//! max  -tr(Y (R(eta_hat) + diag(m))) + logdet(Y - sum_i alpha_i A_i) + alpha^T b
//!      - lambda * sum_{u != v} |Y_uv|
//! ```
//!
//! where each cut is stored as `tr(A_i R(eta)) >= b_i` and
//! `m = (1, 4/3, ..., 4/3)`. For fixed `alpha` the `Y`-problem is solved
//! through its box-constrained dual in `W`; the multipliers are then updated
//! for fixed `Y`. An outer loop separates cycle inequalities violated by the
//! fitted means and re-solves from the previous optimum.

mod inner;
mod surrogate;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pairs, IsingModel, MeanVector, DEFAULT_EDGE_TOL};
use crate::separation::{self, CutSignature, CycleInequality, DEFAULT_MAX_CUTS, DEFAULT_MIN_VIOLATION};

pub use inner::{alpha_step, eq7_objective, inner_solve, w_step, WStepOutcome};
pub use surrogate::{surrogate_inference, surrogate_logpartition, surrogate_loglik, SurrogateInference};

/// `lambda = 2 sqrt(log p / n)`.
pub fn auto_lambda(p: usize, n: usize) -> f64 {
    2.0 * ((p as f64).ln() / n as f64).sqrt()
}

/// Penalty choice: the automatic rule or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Auto,
    Fixed(f64),
}

impl LambdaRule {
    pub fn resolve(self, p: usize, n: usize) -> f64 {
        match self {
            LambdaRule::Auto => auto_lambda(p, n),
            LambdaRule::Fixed(l) => l,
        }
    }
}

impl std::str::FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaRule::Auto);
        }
        match s.parse::<f64>() {
            Ok(l) if l >= 0.0 && l.is_finite() => Ok(LambdaRule::Fixed(l)),
            _ => Err(Error::Config(format!("lambda must be `auto` or a non-negative number, got `{s}`"))),
        }
    }
}

impl std::fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaRule::Auto => f.write_str("auto"),
            LambdaRule::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for LambdaRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LambdaRule::Auto => s.serialize_str("auto"),
            LambdaRule::Fixed(l) => s.serialize_f64(*l),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Value(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Value(l) => format!("{l}").parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Trial step for the projected `W` ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `gamma_t = gamma0 / sqrt(t)`, `t` counting steps within one `W` batch.
    Diminishing,
    /// Barzilai-Borwein step from the last accepted move, capped at `gamma0`.
    Spectral,
}

/// Settings for the multiplier subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlphaStepConfig {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub backtrack: f64,
}

impl Default for AlphaStepConfig {
    fn default() -> Self {
        AlphaStepConfig { grad_tol: 1e-6, max_iters: 500, backtrack: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lambda: f64,
    pub gamma0: f64,
    pub step_rule: StepRule,
    /// Relative objective change (and relative duality gap) that ends the inner loop.
    pub inner_tol: f64,
    /// Cap on projected `W` steps per inner solve.
    pub max_inner_iters: usize,
    /// `W` steps between multiplier updates.
    pub w_batch: usize,
    pub max_outer_rounds: usize,
    /// When false, no cuts are ever separated (the plain log-determinant method).
    pub separate: bool,
    pub min_violation: f64,
    pub max_cuts: usize,
    pub edge_tol: f64,
    pub max_halvings: usize,
    pub alpha: AlphaStepConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.1,
            gamma0: 0.5,
            step_rule: StepRule::Spectral,
            inner_tol: 1e-7,
            max_inner_iters: 5000,
            w_batch: 25,
            max_outer_rounds: 10,
            separate: true,
            min_violation: DEFAULT_MIN_VIOLATION,
            max_cuts: DEFAULT_MAX_CUTS,
            edge_tol: DEFAULT_EDGE_TOL,
            max_halvings: 30,
            alpha: AlphaStepConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        SolverConfig { lambda, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma0", self.gamma0),
            ("inner_tol", self.inner_tol),
            ("alpha.grad_tol", self.alpha.grad_tol),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.edge_tol >= 0.0) {
            return Err(Error::Config("edge_tol must be >= 0".into()));
        }
        if self.w_batch == 0 || self.max_inner_iters == 0 || self.max_outer_rounds == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if !(self.alpha.backtrack > 0.0 && self.alpha.backtrack < 1.0) {
            return Err(Error::Config("alpha.backtrack must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-solve iteration record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InnerDiagnostics {
    /// Objective after every `W`/`alpha` alternation.
    pub objective_trace: Vec<f64>,
    pub w_steps: usize,
    pub alternations: usize,
    /// Duality gap of the `W` problem at exit.
    pub final_gap: f64,
    pub converged: bool,
}

/// Iterate of the block-coordinate method.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Dual matrix; zero on row/column 0 and the diagonal, entries in `[-lambda, lambda]`.
    pub w: DMatrix<f64>,
    /// Primal matrix `-R(theta) - diag(nu)`.
    pub y: DMatrix<f64>,
    /// One multiplier per cut.
    pub alpha: Vec<f64>,
    pub cuts: Vec<CycleInequality>,
    pub diagnostics: InnerDiagnostics,
}

impl SolverState {
    /// `nu`, carried as the negated diagonal of `Y`.
    pub fn nu(&self) -> DVector<f64> {
        -self.y.diagonal()
    }

    /// `(R(eta_hat) + diag(m) + W)`, the matrix whose inverse couples `Y` and `W`.
    pub fn z_matrix(&self, eta_hat: &MeanVector) -> DMatrix<f64> {
        inner::base_matrix(eta_hat) + &self.w
    }
}

/// `m = (1, 4/3, ..., 4/3)`.
pub fn m_vector(p: usize) -> DVector<f64> {
    DVector::from_fn(p + 1, |i, _| if i == 0 { 1.0 } else { 4.0 / 3.0 })
}

/// Reads `theta` off `Y`; couplings with `|theta_uv| <= edge_tol` become exact zeros.
pub fn recover_theta(state: &SolverState, edge_tol: f64) -> IsingModel {
    let y = &state.y;
    let p = y.nrows() - 1;
    let nodes = (0..p).map(|v| -y[(0, v + 1)]).collect();
    let edges: Vec<_> = pairs(p)
        .map(|(u, v)| (u, v, -y[(u + 1, v + 1)]))
        .filter(|&(_, _, t)| t.abs() > edge_tol)
        .collect();
    IsingModel::new(nodes, edges).expect("recovered parameters are well formed")
}

/// Fitted means: node means are the data means, pair means are shifted by `W`.
pub fn recover_eta(state: &SolverState, eta_hat: &MeanVector) -> MeanVector {
    let p = eta_hat.p();
    let pair = pairs(p).map(|(u, v)| eta_hat.pair(u, v) + state.w[(u + 1, v + 1)]).collect();
    MeanVector::new(eta_hat.node_means().to_vec(), pair).expect("finite fitted means")
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: IsingModel,
    pub fitted_means: MeanVector,
    pub cuts: Vec<CycleInequality>,
    /// Violation of each cut at the moment it was added.
    pub cut_violations: Vec<f64>,
    pub rounds: usize,
    pub objective: f64,
    pub objective_per_round: Vec<f64>,
    pub cuts_per_round: Vec<usize>,
    pub round_limit_reached: bool,
    pub lambda: f64,
    pub wall_time: Duration,
    pub state: SolverState,
}

impl FitResult {
    pub fn cuts_added(&self) -> usize {
        self.cuts.len()
    }
}

/// Cutting-plane structure learning from empirical moments.
///
/// Each round solves the penalised problem over the current cut pool, maps
/// the fitted means to cut weights, and adds newly violated cycle
/// inequalities; the next round starts from the previous `(W, alpha)`.
pub fn fit(eta_hat: &MeanVector, cfg: &SolverConfig) -> Result<FitResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut cuts: Vec<CycleInequality> = Vec::new();
    let mut cut_violations = Vec::new();
    let mut known: std::collections::BTreeSet<CutSignature> = Default::default();
    let mut warm: Option<SolverState> = None;
    let mut objective_per_round = Vec::new();
    let mut cuts_per_round = Vec::new();
    let mut round_limit_reached = false;
    let rounds_allowed = if cfg.separate { cfg.max_outer_rounds } else { 1 };
    let mut rounds = 0;
    let state = loop {
        rounds += 1;
        let state = inner_solve(eta_hat, &cuts, cfg, warm.take())?;
        objective_per_round.push(*state.diagnostics.objective_trace.last().unwrap_or(&f64::NAN));
        if !cfg.separate {
            break state;
        }
        let fitted = recover_eta(&state, eta_hat);
        let r_fitted = crate::model::moment_matrix(&fitted);
        let fresh: Vec<(CycleInequality, f64)> = separation::separate(
            &crate::model::suspension_weights(&fitted),
            cfg.min_violation,
            cfg.max_cuts,
        )
        .into_iter()
        .filter(|c| !known.contains(c.signature()))
        .map(|c| {
            let v = separation::violation(&c, &r_fitted);
            (c, v)
        })
        .filter(|(_, v)| *v > cfg.min_violation)
        .collect();
        if fresh.is_empty() {
            break state;
        }
        if rounds >= rounds_allowed {
            round_limit_reached = true;
            break state;
        }
        cuts_per_round.push(fresh.len());
        for (c, v) in fresh {
            known.insert(c.signature().clone());
            cuts.push(c);
            cut_violations.push(v);
        }
        let mut next = state;
        next.alpha.resize(cuts.len(), 0.0);
        warm = Some(next);
    };
    Ok(FitResult {
        model: recover_theta(&state, cfg.edge_tol),
        fitted_means: recover_eta(&state, eta_hat),
        cuts,
        cut_violations,
        rounds,
        objective: *objective_per_round.last().unwrap_or(&f64::NAN),
        objective_per_round,
        cuts_per_round,
        round_limit_reached,
        lambda: cfg.lambda,
        wall_time: start.elapsed(),
        state,
    })
}

/// The cut-free log-determinant estimator (all multipliers zero).
pub fn fit_no_cuts(eta_hat: &MeanVector, cfg: &SolverConfig) -> Result<FitResult> {
    fit(eta_hat, &SolverConfig { separate: false, ..*cfg })
}
