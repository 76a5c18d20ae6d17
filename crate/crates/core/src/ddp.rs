//! iLQR-style DDP over (barrier-augmented) dynamics.
//!
//! The backward pass uses first-order dynamics derivatives only; barrier
//! curvature enters through the quadratic cost on the barrier states. The
//! forward pass applies `u = ū + α·k + K·(x̂ − x̄̂)` with a backtracking line
//! search over `α` and a multiplicative regularization schedule on `Q_uu`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problem::{is_bounded, rollout, ControlLimits, CostModel, Dynamics, Problem, SharedSafety, Trajectory};
use crate::{Error, Result};

/// Minimum ratio of actual to predicted cost reduction for a step to be accepted.
pub const ARMIJO_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// Stop once an accepted step reduces the cost by less than this.
    pub conv_tol: f64,
    pub reg_init: f64,
    /// Regularization decreased below this snaps to zero.
    pub reg_min: f64,
    pub reg_max: f64,
    pub reg_scale: f64,
    /// Strictly descending, starting at 1.
    pub line_search_alphas: Vec<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 500,
            conv_tol: 1e-3,
            reg_init: 1e-6,
            reg_min: 1e-6,
            reg_max: 1e10,
            reg_scale: 2.0,
            line_search_alphas: default_alphas(),
        }
    }
}

/// `10^linspace(0, −3, 11)`.
pub fn default_alphas() -> Vec<f64> {
    (0..11).map(|i| 10f64.powf(-0.3 * i as f64)).collect()
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.conv_tol > 0.0) {
            return Err(Error::InvalidParameter("conv_tol must be > 0".into()));
        }
        let a = &self.line_search_alphas;
        if a.first() != Some(&1.0) {
            return Err(Error::InvalidParameter(
                "line search must start at alpha = 1".into(),
            ));
        }
        if a.windows(2).any(|w| !(w[1] < w[0])) || a.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter(
                "line search alphas must be positive and strictly descending".into(),
            ));
        }
        if !(self.reg_scale > 1.0) || self.reg_init < 0.0 || self.reg_max < self.reg_init {
            return Err(Error::InvalidParameter(
                "regularization schedule needs reg_scale > 1 and 0 <= reg_init <= reg_max".into(),
            ));
        }
        Ok(())
    }

    fn increase(&self, reg: f64) -> f64 {
        (reg * self.reg_scale).max(self.reg_min)
    }

    fn decrease(&self, reg: f64) -> f64 {
        let r = reg / self.reg_scale;
        if r < self.reg_min {
            0.0
        } else {
            r
        }
    }
}

/// Feed-forward and feedback gains, one pair per step.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub feedforward: Vec<DVector<f64>>,
    pub feedback: Vec<DMatrix<f64>>,
}

impl GainSchedule {
    pub fn zeros(horizon: usize, state_dim: usize, control_dim: usize) -> Self {
        Self {
            feedforward: vec![DVector::zeros(control_dim); horizon],
            feedback: vec![DMatrix::zeros(control_dim, state_dim); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.feedforward.len()
    }
}

/// Output of one backward sweep.
///
/// `q_u` and `q_uu` are the unregularized expansions per step and
/// `value_hessian[k]` is `V_x̂x̂` at step `k` (with `value_hessian[N] = Φ_x̂x̂`).
#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub gains: GainSchedule,
    /// `(ΔV1, ΔV2)`: predicted change is `α·ΔV1 + α²·ΔV2`.
    pub expected: (f64, f64),
    pub q_u: Vec<DVector<f64>>,
    pub q_uu: Vec<DMatrix<f64>>,
    pub value_hessian: Vec<DMatrix<f64>>,
}

impl BackwardPass {
    /// Predicted cost reduction (positive for descent) for step size `alpha`.
    pub fn expected_reduction(&self, alpha: f64) -> f64 {
        -(alpha * self.expected.0 + alpha * alpha * self.expected.1)
    }
}

/// Riccati-like sweep from the terminal cost back to step 0.
pub fn backward_pass(
    traj: &Trajectory,
    dynamics: &dyn Dynamics,
    cost: &dyn CostModel,
    reg: f64,
) -> Result<BackwardPass> {
    let n = traj.horizon();
    let m = dynamics.control_dim();
    let (mut v_x, mut v_xx) = cost.terminal_expansion(&traj.states[n]);

    let mut feedforward = vec![DVector::zeros(0); n];
    let mut feedback = vec![DMatrix::zeros(0, 0); n];
    let mut q_us = vec![DVector::zeros(0); n];
    let mut q_uus = vec![DMatrix::zeros(0, 0); n];
    let mut value_hessian = vec![DMatrix::zeros(0, 0); n + 1];
    value_hessian[n] = v_xx.clone();
    let (mut dv1, mut dv2) = (0.0, 0.0);

    for k in (0..n).rev() {
        let x = &traj.states[k];
        let u = &traj.controls[k];
        let (f_x, f_u) = dynamics.jacobians(k, x, u);
        let l = cost.running_expansion(k, x, u);

        let f_ut = f_u.transpose();
        let f_xt = f_x.transpose();
        let vxx_fx = &v_xx * &f_x;
        let vxx_fu = &v_xx * &f_u;
        let q_x = &l.l_x + &f_xt * &v_x;
        let q_u = &l.l_u + &f_ut * &v_x;
        let q_xx = &l.l_xx + &f_xt * &vxx_fx;
        let q_uu = &l.l_uu + &f_ut * &vxx_fu;
        let q_ux = &l.l_ux + &f_ut * &vxx_fx;

        let mut q_uu_reg = q_uu.clone();
        for i in 0..m {
            q_uu_reg[(i, i)] += reg;
        }
        let chol = q_uu_reg
            .cholesky()
            .ok_or(Error::BackwardPass { step: k })?;
        let k_ff = -chol.solve(&q_u);
        let k_fb = -chol.solve(&q_ux);
        if !k_ff.iter().chain(k_fb.iter()).all(|v| v.is_finite()) {
            return Err(Error::BackwardPass { step: k });
        }

        dv1 += k_ff.dot(&q_u);
        dv2 += 0.5 * k_ff.dot(&(&q_uu * &k_ff));

        let k_fbt = k_fb.transpose();
        let q_uxt = q_ux.transpose();
        v_x = &q_x + &k_fbt * (&q_uu * &k_ff) + &k_fbt * &q_u + &q_uxt * &k_ff;
        let vxx = &q_xx + &k_fbt * &q_uu * &k_fb + &k_fbt * &q_ux + &q_uxt * &k_fb;
        v_xx = (&vxx + vxx.transpose()) * 0.5;

        value_hessian[k] = v_xx.clone();
        feedforward[k] = k_ff;
        feedback[k] = k_fb;
        q_us[k] = q_u;
        q_uus[k] = q_uu;
    }

    Ok(BackwardPass {
        gains: GainSchedule {
            feedforward,
            feedback,
        },
        expected: (dv1, dv2),
        q_u: q_us,
        q_uu: q_uus,
        value_hessian,
    })
}

/// Roll the closed-loop policy around `nominal` forward from its first state.
pub fn forward_pass(
    nominal: &Trajectory,
    gains: &GainSchedule,
    alpha: f64,
    dynamics: &dyn Dynamics,
    cost: &dyn CostModel,
    constraints: &[SharedSafety],
    limits: Option<&ControlLimits>,
) -> Result<Trajectory> {
    let n = nominal.horizon();
    let mut states: Vec<DVector<f64>> = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    states.push(nominal.states[0].clone());
    for k in 0..n {
        let dx = &states[k] - &nominal.states[k];
        let mut u = &nominal.controls[k] + &gains.feedforward[k] * alpha + &gains.feedback[k] * dx;
        if let Some(l) = limits {
            u = l.clamp(&u);
        }
        let next = dynamics.try_step(k, &states[k], &u)?;
        if !is_bounded(&next) {
            return Err(Error::Diverged { step: k + 1 });
        }
        states.push(next);
        controls.push(u);
    }
    let mut traj = Trajectory {
        states,
        controls,
        costs: Vec::new(),
        h_values: Vec::new(),
    };
    traj.evaluate(cost, constraints);
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Diverged,
    BackwardPassFailed,
    /// Regularization reached its cap without any step passing the line search.
    LineSearchFailed,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::Diverged => "diverged",
            Termination::BackwardPassFailed => "backward_pass_failed",
            Termination::LineSearchFailed => "line_search_failed",
        })
    }
}

/// One solver iteration. Iteration 0 is the initial rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cost of the current (accepted) trajectory after this iteration.
    pub cost: f64,
    /// Largest constraint violation `max(0, −min h)` of the current trajectory.
    pub max_violation: f64,
    /// Smallest safety value on the current trajectory.
    pub min_h: f64,
    pub alpha: Option<f64>,
    pub reg: f64,
    pub accepted: bool,
    /// Terminal state of the current trajectory.
    pub terminal: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub trajectory: Trajectory,
    pub gains: GainSchedule,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
}

impl SolverResult {
    /// Number of solver iterations performed (the initial rollout is not counted).
    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |r| r.iteration)
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

fn record(
    iteration: usize,
    traj: &Trajectory,
    alpha: Option<f64>,
    reg: f64,
    accepted: bool,
) -> IterationRecord {
    let min_h = traj.min_h();
    IterationRecord {
        iteration,
        cost: traj.total_cost(),
        max_violation: (-min_h).max(0.0),
        min_h,
        alpha,
        reg,
        accepted,
        terminal: traj.terminal().clone(),
    }
}

/// Solve `problem` from the given initial controls.
///
/// Malformed input (bad settings, dimension mismatch, a classical barrier
/// evaluated at an unsafe initial state) is an error; solver outcomes are
/// reported through [`SolverResult::termination`].
pub fn solve(
    problem: &Problem,
    initial_controls: &[DVector<f64>],
    settings: &SolverSettings,
) -> Result<SolverResult> {
    run(
        problem.dynamics.as_ref(),
        &problem.cost,
        &problem.constraints,
        &problem.x0,
        initial_controls,
        problem.limits.as_ref(),
        settings,
    )
}

/// The iLQR loop on an explicit dynamics/cost pair.
pub fn run(
    dynamics: &dyn Dynamics,
    cost: &dyn CostModel,
    constraints: &[SharedSafety],
    x0: &DVector<f64>,
    initial_controls: &[DVector<f64>],
    limits: Option<&ControlLimits>,
    settings: &SolverSettings,
) -> Result<SolverResult> {
    settings.validate()?;
    if initial_controls.is_empty() {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let mut traj = match rollout(dynamics, x0, initial_controls, limits) {
        Ok(t) => t,
        Err(Error::Diverged { .. }) => return Ok(diverged(dynamics, x0, initial_controls)),
        Err(e) => return Err(e),
    };
    traj.evaluate(cost, constraints);
    let n = traj.horizon();

    let mut reg = settings.reg_init;
    let mut history = vec![record(0, &traj, None, reg, true)];
    let mut gains = GainSchedule::zeros(n, dynamics.state_dim(), dynamics.control_dim());
    let mut termination = Termination::MaxIters;
    let mut current = traj.total_cost();

    for iteration in 1..=settings.max_iters {
        let bp = match backward_pass(&traj, dynamics, cost, reg) {
            Ok(bp) => bp,
            Err(Error::BackwardPass { .. }) => {
                reg = settings.increase(reg);
                history.push(record(iteration, &traj, None, reg, false));
                if reg > settings.reg_max {
                    termination = Termination::BackwardPassFailed;
                    break;
                }
                continue;
            }
            Err(e) => return Err(e),
        };

        let mut accepted = None;
        for &alpha in &settings.line_search_alphas {
            let candidate =
                match forward_pass(&traj, &bp.gains, alpha, dynamics, cost, constraints, limits) {
                    Ok(c) => c,
                    // Divergent or barrier-infeasible candidates count as infinite cost.
                    Err(Error::Diverged { .. } | Error::BarrierDomain { .. } | Error::GimbalLock { .. }) => {
                        continue
                    }
                    Err(e) => return Err(e),
                };
            let new_cost = candidate.total_cost();
            if !new_cost.is_finite() {
                continue;
            }
            let actual = current - new_cost;
            let expected = bp.expected_reduction(alpha);
            let ratio = if expected > 0.0 {
                actual / expected
            } else {
                actual.signum()
            };
            if ratio > ARMIJO_RATIO {
                accepted = Some((alpha, candidate, actual));
                break;
            }
        }

        match accepted {
            Some((alpha, candidate, reduction)) => {
                traj = candidate;
                current = traj.total_cost();
                gains = bp.gains;
                reg = settings.decrease(reg);
                history.push(record(iteration, &traj, Some(alpha), reg, true));
                if reduction < settings.conv_tol {
                    termination = Termination::Converged;
                    break;
                }
            }
            None => {
                if bp.expected_reduction(1.0) < settings.conv_tol {
                    history.push(record(iteration, &traj, None, reg, false));
                    gains = bp.gains;
                    termination = Termination::Converged;
                    break;
                }
                reg = settings.increase(reg);
                history.push(record(iteration, &traj, None, reg, false));
                if reg > settings.reg_max {
                    termination = Termination::LineSearchFailed;
                    break;
                }
            }
        }
    }

    Ok(SolverResult {
        trajectory: traj,
        gains,
        history,
        termination,
    })
}

fn diverged(dynamics: &dyn Dynamics, x0: &DVector<f64>, controls: &[DVector<f64>]) -> SolverResult {
    let n = controls.len();
    let traj = Trajectory {
        states: vec![x0.clone()],
        controls: Vec::new(),
        costs: vec![f64::NAN],
        h_values: Vec::new(),
    };
    SolverResult {
        history: vec![IterationRecord {
            iteration: 0,
            cost: f64::NAN,
            max_violation: f64::NAN,
            min_h: f64::NAN,
            alpha: None,
            reg: 0.0,
            accepted: false,
            terminal: x0.clone(),
        }],
        trajectory: traj,
        gains: GainSchedule::zeros(n, dynamics.state_dim(), dynamics.control_dim()),
        termination: Termination::Diverged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_settings_are_valid() {
        let s = SolverSettings::default();
        s.validate().unwrap();
        assert_eq!(s.line_search_alphas.len(), 11);
        assert!((s.line_search_alphas[10] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn settings_validation() {
        let mut s = SolverSettings::default();
        s.line_search_alphas = vec![0.5, 0.25];
        assert!(s.validate().is_err());
        s.line_search_alphas = vec![1.0, 1.0];
        assert!(s.validate().is_err());
        s.line_search_alphas = vec![1.0, 0.1];
        s.conv_tol = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn regularization_schedule() {
        let s = SolverSettings::default();
        assert_eq!(s.increase(0.0), 1e-6);
        assert_eq!(s.increase(1e-6), 2e-6);
        assert_eq!(s.decrease(1e-6), 0.0);
        assert_eq!(s.decrease(4e-6), 2e-6);
    }
}
