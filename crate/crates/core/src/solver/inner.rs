//! Block-coordinate solver for a fixed cut pool.

use nalgebra::{DMatrix, DVector};

use super::{m_vector, InnerDiagnostics, SolverConfig, SolverState, StepRule};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, logdet, logdet_inverse, symmetrize, trace_product};
use crate::model::{moment_matrix, MeanVector};
use crate::separation::CycleInequality;
use crate::AlphaStepConfig;

/// `R(eta_hat) + diag(m)`.
pub(crate) fn base_matrix(eta_hat: &MeanVector) -> DMatrix<f64> {
    let mut s = moment_matrix(eta_hat).into_inner();
    s.set_diagonal(&m_vector(eta_hat.p()));
    s
}

/// `sum_i alpha_i A_i` as a dense matrix.
pub(crate) fn multiplier_matrix(cuts: &[CycleInequality], alpha: &[f64], n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, n);
    for (cut, &a) in cuts.iter().zip(alpha) {
        if a != 0.0 {
            cut.add_scaled_to(&mut c, a);
        }
    }
    c
}

/// Projection onto the box: zero bias row/column and diagonal, clip the rest to `[-lambda, lambda]`.
pub(crate) fn project_box(w: &mut DMatrix<f64>, lambda: f64) {
    let n = w.nrows();
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] = if i == 0 || j == 0 || i == j { 0.0 } else { w[(i, j)].clamp(-lambda, lambda) };
        }
    }
}

/// Sum of `|Y_uv|` over node pairs, both triangles.
fn penalty_sum(y: &DMatrix<f64>) -> f64 {
    let n = y.nrows();
    let mut acc = 0.0;
    for i in 1..n {
        for j in 1..n {
            if i != j {
                acc += y[(i, j)].abs();
            }
        }
    }
    acc
}

/// `W`-problem duality gap `sum (lambda |Y_uv| - W_uv Y_uv)` over penalised entries.
pub(crate) fn duality_gap(w: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> f64 {
    let n = y.nrows();
    let mut acc = 0.0;
    for i in 1..n {
        for j in 1..n {
            if i != j {
                acc += lambda * y[(i, j)].abs() - w[(i, j)] * y[(i, j)];
            }
        }
    }
    acc
}

/// The penalised objective in `(Y, alpha)`; `None` when `Y - sum alpha_i A_i` is not positive definite.
pub fn eq7_objective(
    y: &DMatrix<f64>,
    eta_hat: &MeanVector,
    cuts: &[CycleInequality],
    alpha: &[f64],
    lambda: f64,
) -> Option<f64> {
    let n = y.nrows();
    let s = base_matrix(eta_hat);
    let x = y - multiplier_matrix(cuts, alpha, n);
    let chol = cholesky(&x)?;
    let ab: f64 = cuts.iter().zip(alpha).map(|(c, a)| a * c.rhs()).sum();
    Some(-trace_product(y, &s) + logdet(&chol) + ab - lambda * penalty_sum(y))
}

/// Result of one batch of projected `W` ascent steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WStepOutcome {
    pub accepted: usize,
    /// The projected gradient step vanished: `W` is optimal for the current multipliers.
    pub stationary: bool,
    /// No trial step passed the ascent test after all halvings.
    pub stalled: bool,
}

/// Projected ascent on `logdet(S + W) + tr(W C)` over the box, with `C = sum alpha_i A_i`.
struct DualAscent<'a> {
    s: &'a DMatrix<f64>,
    c: DMatrix<f64>,
    lambda: f64,
    gamma0: f64,
    rule: StepRule,
    max_halvings: usize,
}

struct DualPoint {
    w: DMatrix<f64>,
    value: f64,
    inv: DMatrix<f64>,
}

impl DualAscent<'_> {
    fn eval(&self, w: DMatrix<f64>) -> Option<DualPoint> {
        let (ld, inv) = logdet_inverse(&(self.s + &w))?;
        let value = ld + trace_product(&w, &self.c);
        Some(DualPoint { w, value, inv })
    }

    fn gradient(&self, pt: &DualPoint) -> DMatrix<f64> {
        &pt.inv + &self.c
    }

    fn run(&self, mut cur: DualPoint, steps: usize) -> (DualPoint, WStepOutcome) {
        let mut outcome = WStepOutcome { accepted: 0, stationary: false, stalled: false };
        let mut grad = self.gradient(&cur);
        let mut last_move: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
        for t in 1..=steps {
            let mut gamma = match (self.rule, &last_move) {
                (StepRule::Diminishing, _) => self.gamma0 / (t as f64).sqrt(),
                (StepRule::Spectral, Some((ds, dg))) => {
                    let sy = trace_product(ds, dg);
                    if sy < 0.0 {
                        (trace_product(ds, ds) / -sy).clamp(1e-10, 1e10)
                    } else {
                        self.gamma0
                    }
                }
                (StepRule::Spectral, None) => self.gamma0,
            };
            let mut accepted = None;
            for _ in 0..=self.max_halvings {
                let mut w = &cur.w + &grad * gamma;
                project_box(&mut w, self.lambda);
                let step = &w - &cur.w;
                let predicted = trace_product(&grad, &step);
                if step.amax() == 0.0 {
                    outcome.stationary = true;
                    break;
                }
                if let Some(next) = self.eval(w) {
                    if next.value >= cur.value + 1e-4 * predicted {
                        accepted = Some((next, step));
                        break;
                    }
                }
                gamma *= 0.5;
            }
            if outcome.stationary {
                break;
            }
            match accepted {
                Some((next, step)) => {
                    let next_grad = self.gradient(&next);
                    last_move = Some((step, &next_grad - &grad));
                    cur = next;
                    grad = next_grad;
                    outcome.accepted += 1;
                }
                None => {
                    outcome.stalled = true;
                    break;
                }
            }
        }
        (cur, outcome)
    }
}

/// One batch of `cfg.w_batch` projected ascent steps on `W`, then the coupling
/// `Y = (W + R(eta_hat) + diag(m))^{-1} + sum alpha_i A_i`.
pub fn w_step(state: &mut SolverState, eta_hat: &MeanVector, cfg: &SolverConfig) -> Result<WStepOutcome> {
    let s = base_matrix(eta_hat);
    let n = s.nrows();
    let ascent = DualAscent {
        s: &s,
        c: multiplier_matrix(&state.cuts, &state.alpha, n),
        lambda: cfg.lambda,
        gamma0: cfg.gamma0,
        rule: cfg.step_rule,
        max_halvings: cfg.max_halvings,
    };
    let start = ascent
        .eval(state.w.clone())
        .ok_or(Error::NotPositiveDefinite("W + R(eta_hat) + diag(m)"))?;
    let (pt, outcome) = ascent.run(start, cfg.w_batch);
    state.y = &pt.inv + &ascent.c;
    state.w = pt.w;
    state.diagnostics.w_steps += outcome.accepted;
    Ok(outcome)
}

/// Result of the multiplier update.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaOutcome {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    /// Infinity norm of the projected gradient at exit.
    pub kkt_residual: f64,
}

struct AlphaProblem<'a> {
    y: &'a DMatrix<f64>,
    cuts: &'a [CycleInequality],
}

struct AlphaPoint {
    alpha: Vec<f64>,
    value: f64,
    z: DMatrix<f64>,
}

impl AlphaProblem<'_> {
    fn eval(&self, alpha: Vec<f64>) -> Option<AlphaPoint> {
        let x = self.y - multiplier_matrix(self.cuts, &alpha, self.y.nrows());
        let (ld, z) = logdet_inverse(&x)?;
        let value = ld + self.cuts.iter().zip(&alpha).map(|(c, a)| a * c.rhs()).sum::<f64>();
        Some(AlphaPoint { alpha, value, z })
    }

    /// `b_i - tr(A_i Z)`.
    fn gradient(&self, pt: &AlphaPoint) -> Vec<f64> {
        self.cuts.iter().map(|c| c.rhs() - c.trace_with(&pt.z)).collect()
    }

    /// `tr(Z A_i Z A_j)` restricted to `idx`; the negated Hessian.
    fn curvature(&self, z: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
        let k = idx.len();
        let mut h = DMatrix::zeros(k, k);
        for (r, &i) in idx.iter().enumerate() {
            for (col, &j) in idx.iter().enumerate().skip(r) {
                let mut acc = 0.0;
                for &(a, b, c) in self.cuts[i].entries() {
                    for &(d, e, f) in self.cuts[j].entries() {
                        acc += 2.0 * c * f * (z[(a, e)] * z[(b, d)] + z[(a, d)] * z[(b, e)]);
                    }
                }
                h[(r, col)] = acc;
                h[(col, r)] = acc;
            }
        }
        h
    }
}

fn projected_residual(alpha: &[f64], grad: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(grad)
        .map(|(&a, &g)| if a > 0.0 { g.abs() } else { g.max(0.0) })
        .fold(0.0, f64::max)
}

/// Maximises `logdet(Y - sum alpha_i A_i) + alpha^T b` over `alpha >= 0`.
///
/// Projected Newton steps on the free multipliers with backtracking that
/// keeps the matrix positive definite; falls back to a projected gradient
/// step when the Newton direction does not ascend.
pub fn alpha_step(
    y: &DMatrix<f64>,
    cuts: &[CycleInequality],
    alpha0: &[f64],
    cfg: &AlphaStepConfig,
) -> Result<AlphaOutcome> {
    if cuts.is_empty() {
        return Ok(AlphaOutcome { alpha: Vec::new(), iterations: 0, kkt_residual: 0.0 });
    }
    assert_eq!(cuts.len(), alpha0.len(), "one multiplier per cut");
    let problem = AlphaProblem { y, cuts };
    let start: Vec<f64> = alpha0.iter().map(|a| a.max(0.0)).collect();
    let mut cur = problem
        .eval(start)
        .ok_or(Error::NotPositiveDefinite("Y - sum alpha_i A_i"))?;
    let mut grad = problem.gradient(&cur);
    let mut residual = projected_residual(&cur.alpha, &grad);
    let mut iterations = 0;
    while residual > cfg.grad_tol && iterations < cfg.max_iters {
        iterations += 1;
        let free: Vec<usize> = (0..cuts.len()).filter(|&i| cur.alpha[i] > 0.0 || grad[i] > 0.0).collect();
        let mut directions = Vec::with_capacity(2);
        let mut h = problem.curvature(&cur.z, &free);
        let ridge = 1e-12 * (1.0 + h.diagonal().amax());
        for d in 0..free.len() {
            h[(d, d)] += ridge;
        }
        if let Some(chol) = cholesky(&h) {
            let g = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
            let step = chol.solve(&g);
            let mut dir = vec![0.0; cuts.len()];
            for (d, &i) in free.iter().enumerate() {
                dir[i] = step[d];
            }
            directions.push((dir, 1.0));
        }
        let scale = 1.0 / (1.0 + h.diagonal().amax());
        directions.push((grad.clone(), scale));

        let mut moved = false;
        'dirs: for (dir, mut s) in directions {
            for _ in 0..=30 {
                let trial: Vec<f64> = cur.alpha.iter().zip(&dir).map(|(a, d)| (a + s * d).max(0.0)).collect();
                let predicted: f64 = trial.iter().zip(&cur.alpha).zip(&grad).map(|((t, a), g)| (t - a) * g).sum();
                if predicted <= 0.0 {
                    break;
                }
                if let Some(next) = problem.eval(trial) {
                    if next.value >= cur.value + 1e-4 * predicted {
                        cur = next;
                        moved = true;
                        break 'dirs;
                    }
                }
                s *= cfg.backtrack;
            }
        }
        if !moved {
            break;
        }
        grad = problem.gradient(&cur);
        residual = projected_residual(&cur.alpha, &grad);
    }
    Ok(AlphaOutcome { alpha: cur.alpha, iterations, kkt_residual: residual })
}

/// Largest `tr(A R(eta_hat + W))` over the box; pair entries move by at most `lambda`.
fn max_reachable_lhs(cut: &CycleInequality, r_hat: &crate::model::MomentMatrix, lambda: f64) -> f64 {
    let shift: f64 = cut.entries().iter().filter(|e| e.0 != 0).map(|e| 2.0 * e.2.abs() * lambda).sum();
    cut.trace_with(r_hat.matrix()) + shift
}

/// Multipliers this large mean the cut pool cannot be met inside the box.
const MAX_MULTIPLIER: f64 = 1e6;

/// Solves the penalised problem for a fixed cut pool by alternating `W` batches
/// and multiplier updates until the objective settles and the `W` duality gap closes.
pub fn inner_solve(
    eta_hat: &MeanVector,
    cuts: &[CycleInequality],
    cfg: &SolverConfig,
    warm_state: Option<SolverState>,
) -> Result<SolverState> {
    cfg.validate()?;
    let s = base_matrix(eta_hat);
    let n = s.nrows();
    if cholesky(&s).is_none() {
        return Err(Error::NotPositiveDefinite("R(eta_hat) + diag(m)"));
    }
    let r_hat = moment_matrix(eta_hat);
    if cuts.iter().any(|c| max_reachable_lhs(c, &r_hat, cfg.lambda) < c.rhs()) {
        return Err(Error::DivergentMultipliers);
    }
    let (mut w, mut alpha) = match warm_state {
        Some(st) if st.w.nrows() == n => (st.w, st.alpha),
        _ => (DMatrix::zeros(n, n), Vec::new()),
    };
    alpha.resize(cuts.len(), 0.0);
    project_box(&mut w, cfg.lambda);
    if cholesky(&(&s + &w)).is_none() {
        w.fill(0.0);
    }
    let mut state = SolverState {
        y: DMatrix::zeros(n, n),
        w,
        alpha,
        cuts: cuts.to_vec(),
        diagnostics: InnerDiagnostics::default(),
    };
    let mut prev_obj = f64::NAN;
    loop {
        let budget = cfg.max_inner_iters.saturating_sub(state.diagnostics.w_steps).max(1);
        let batch_cfg = SolverConfig { w_batch: cfg.w_batch.min(budget), ..*cfg };
        let outcome = w_step(&mut state, eta_hat, &batch_cfg)?;
        // multipliers already optimal for the new Y
        let mut alpha_optimal = true;
        if !cuts.is_empty() {
            let res = alpha_step(&state.y, cuts, &state.alpha, &cfg.alpha)?;
            alpha_optimal = res.iterations == 0 || res.alpha == state.alpha;
            if res.alpha.iter().any(|&a| a > MAX_MULTIPLIER) {
                return Err(Error::DivergentMultipliers);
            }
            if !alpha_optimal {
                state.alpha = res.alpha;
                let (_, inv) = logdet_inverse(&(&s + &state.w)).expect("W iterate is feasible");
                state.y = inv + multiplier_matrix(cuts, &state.alpha, n);
            }
        }
        symmetrize(&mut state.y);
        state.diagnostics.alternations += 1;
        let obj = eq7_objective(&state.y, eta_hat, cuts, &state.alpha, cfg.lambda)
            .ok_or(Error::NotPositiveDefinite("Y - sum alpha_i A_i"))?;
        state.diagnostics.objective_trace.push(obj);
        let gap = duality_gap(&state.w, &state.y, cfg.lambda);
        state.diagnostics.final_gap = gap;
        let scale = obj.abs().max(1.0);
        let settled = (obj - prev_obj).abs() <= cfg.inner_tol * scale;
        let gap_closed = gap <= cfg.inner_tol * scale;
        prev_obj = obj;
        let w_optimal = outcome.stationary || outcome.stalled || (settled && gap_closed);
        if w_optimal && alpha_optimal {
            state.diagnostics.converged = true;
            break;
        }
        if state.diagnostics.w_steps >= cfg.max_inner_iters
            || state.diagnostics.alternations >= cfg.max_inner_iters
        {
            break;
        }
    }
    Ok(state)
}
