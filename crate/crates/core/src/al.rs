//! Augmented-Lagrangian DDP baseline.
//!
//! Each safety condition `h(k, x_k) > 0` is treated pointwise as the
//! inequality `g = −h ≤ 0` with the clamped penalty
//!
//! ```text
//! φ(h; λ, ρ) = (max(0, λ + ρ·g)² − λ²) / (2ρ)
//! ```
//!
//! The inner loop is the unconstrained iLQR solver from [`crate::ddp`] run
//! with tolerance `ω` for at most `M` iterations. After each inner solve the
//! multipliers are updated; the penalty grows while constraints are violated
//! and the inner tolerance shrinks once they are satisfied, until `ω` drops
//! below the outer tolerance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ddp::{self, IterationRecord, SolverResult, SolverSettings, Termination};
use crate::problem::{CostModel, Problem, QuadraticCost, SharedSafety, StageExpansion, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct ALSettings {
    /// Maximum inner iterations per outer iteration.
    pub max_inner: usize,
    pub rho0: f64,
    pub beta_rho: f64,
    pub omega0: f64,
    pub beta_omega: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
}

impl Default for ALSettings {
    /// Differential-drive comparison values.
    fn default() -> Self {
        Self {
            max_inner: 150,
            rho0: 33.7,
            beta_rho: 1.18,
            omega0: 2.77,
            beta_omega: 0.33,
            outer_tol: 1e-3,
            max_outer: 100,
        }
    }
}

impl ALSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_rho > 1.0) {
            return Err(Error::InvalidParameter("beta_rho must be > 1".into()));
        }
        if !(self.beta_omega > 0.0 && self.beta_omega < 1.0) {
            return Err(Error::InvalidParameter("beta_omega must be in (0, 1)".into()));
        }
        if !(self.rho0 > 0.0 && self.omega0 > 0.0 && self.outer_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "rho0, omega0 and outer_tol must be > 0".into(),
            ));
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::InvalidParameter(
                "max_inner and max_outer must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Multipliers and schedule state of the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ALState {
    /// `multipliers[k][i]` for step `k` and constraint `i`; step 0 is fixed by
    /// the initial state and its multipliers stay zero.
    pub multipliers: Vec<Vec<f64>>,
    pub rho: f64,
    pub omega: f64,
}

impl ALState {
    pub fn new(horizon: usize, n_constraints: usize, settings: &ALSettings) -> Self {
        Self {
            multipliers: vec![vec![0.0; n_constraints]; horizon + 1],
            rho: settings.rho0,
            omega: settings.omega0,
        }
    }
}

/// `(φ, dφ/dh, d²φ/dh²)` for one constraint value.
pub fn al_cost_terms(h: f64, lambda: f64, rho: f64) -> (f64, f64, f64) {
    let shifted = lambda - rho * h;
    if shifted > 0.0 {
        (
            (shifted * shifted - lambda * lambda) / (2.0 * rho),
            -shifted,
            rho,
        )
    } else {
        (-lambda * lambda / (2.0 * rho), 0.0, 0.0)
    }
}

/// True when any step `k ≥ 1` has `h ≤ 0`.
fn has_violation(traj: &Trajectory) -> bool {
    traj.h_values.iter().skip(1).flatten().any(|&h| !(h > 0.0))
}

/// Multiplier update followed by the penalty/tolerance schedule.
pub fn al_outer_update(state: &ALState, traj: &Trajectory, settings: &ALSettings) -> ALState {
    let multipliers = state
        .multipliers
        .iter()
        .zip(&traj.h_values)
        .enumerate()
        .map(|(k, (lams, hs))| {
            if k == 0 {
                return lams.clone();
            }
            lams.iter()
                .zip(hs)
                .map(|(&l, &h)| (l - state.rho * h).max(0.0))
                .collect()
        })
        .collect();
    let (rho, omega) = if has_violation(traj) {
        (state.rho * settings.beta_rho, state.omega)
    } else {
        (state.rho, state.omega * settings.beta_omega)
    };
    ALState {
        multipliers,
        rho,
        omega,
    }
}

/// Quadratic cost plus the AL penalty on every constraint at every step.
///
/// Constraint curvature is taken in Gauss-Newton form, `φ''·∇h ∇hᵀ`.
pub struct ALCost<'a> {
    pub base: &'a QuadraticCost,
    pub constraints: &'a [SharedSafety],
    pub state: &'a ALState,
}

impl ALCost<'_> {
    fn penalty(&self, k: usize, x: &DVector<f64>) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.constraints
            .iter()
            .zip(&self.state.multipliers[k])
            .map(|(h, &l)| al_cost_terms(h.eval(k, x), l, self.state.rho).0)
            .sum()
    }

    fn penalty_expansion(&self, k: usize, x: &DVector<f64>, g: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        if k == 0 {
            return;
        }
        for (h, &l) in self.constraints.iter().zip(&self.state.multipliers[k]) {
            let (_, d1, d2) = al_cost_terms(h.eval(k, x), l, self.state.rho);
            if d1 == 0.0 && d2 == 0.0 {
                continue;
            }
            let hx = h.gradient(k, x);
            g.axpy(d1, &hx, 1.0);
            hess.ger(d2, &hx, &hx, 1.0);
        }
    }
}

impl CostModel for ALCost<'_> {
    fn running(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.base.running(k, x, u) + self.penalty(k, x)
    }

    fn terminal(&self, x: &DVector<f64>) -> f64 {
        self.base.terminal(x) + self.penalty(self.base.horizon(), x)
    }

    fn running_expansion(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> StageExpansion {
        let mut e = self.base.running_expansion(k, x, u);
        self.penalty_expansion(k, x, &mut e.l_x, &mut e.l_xx);
        e
    }

    fn terminal_expansion(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (mut g, mut hess) = self.base.terminal_expansion(x);
        self.penalty_expansion(self.base.horizon(), x, &mut g, &mut hess);
        (g, hess)
    }
}

/// Outer-iteration summary.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub inner_iterations: usize,
    pub inner_termination: Termination,
    pub max_violation: f64,
    pub rho: f64,
    pub omega: f64,
}

#[derive(Debug, Clone)]
pub struct ALResult {
    /// Combined result. History iterations are numbered across inner solves
    /// and record the penalized inner objective; the final trajectory's costs
    /// are re-evaluated under the plain quadratic cost.
    pub result: SolverResult,
    pub outer: Vec<OuterRecord>,
    pub state: ALState,
}

/// AL-DDP on `problem`, whose dynamics must not carry barrier states.
///
/// `solver.max_iters` caps the total number of inner iterations and each
/// inner solve runs with `conv_tol = ω`.
pub fn solve_al(
    problem: &Problem,
    initial_controls: &[DVector<f64>],
    al: &ALSettings,
    solver: &SolverSettings,
) -> Result<ALResult> {
    al.validate()?;
    solver.validate()?;
    let n = problem.horizon();
    let constraints = &problem.constraints;
    let mut state = ALState::new(n, constraints.len(), al);

    if constraints.is_empty() {
        let result = ddp::solve(problem, initial_controls, solver)?;
        return Ok(ALResult {
            result,
            outer: Vec::new(),
            state,
        });
    }

    let mut controls = initial_controls.to_vec();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut outer = Vec::new();
    let mut used = 0usize;
    let mut termination = Termination::MaxIters;
    let mut last: Option<SolverResult> = None;

    for _ in 0..al.max_outer {
        let budget = (solver.max_iters - used).min(al.max_inner);
        if budget == 0 {
            break;
        }
        let inner_settings = SolverSettings {
            max_iters: budget,
            conv_tol: state.omega,
            ..solver.clone()
        };
        let cost = ALCost {
            base: &problem.cost,
            constraints,
            state: &state,
        };
        let inner = ddp::run(
            problem.dynamics.as_ref(),
            &cost,
            constraints,
            &problem.x0,
            &controls,
            problem.limits.as_ref(),
            &inner_settings,
        )?;
        if inner.termination == Termination::Diverged {
            termination = Termination::Diverged;
            last = Some(inner);
            break;
        }

        let mut traj = inner.trajectory.clone();
        traj.evaluate(&problem.cost, constraints);
        let skip = usize::from(!history.is_empty());
        for rec in inner.history.iter().skip(skip) {
            let mut rec = rec.clone();
            rec.iteration += used;
            history.push(rec);
        }
        used += inner.iterations();

        let violated = has_violation(&traj);
        let inner_iterations = inner.iterations();
        let inner_termination = inner.termination;
        controls = traj.controls.clone();
        state = al_outer_update(&state, &traj, al);
        outer.push(OuterRecord {
            inner_iterations,
            inner_termination,
            max_violation: (-traj.min_h()).max(0.0),
            rho: state.rho,
            omega: state.omega,
        });
        last = Some(SolverResult {
            trajectory: traj,
            ..inner
        });

        if !violated && state.omega < al.outer_tol {
            termination = Termination::Converged;
            break;
        }
        if matches!(
            inner_termination,
            Termination::BackwardPassFailed | Termination::LineSearchFailed
        ) && used >= solver.max_iters
        {
            termination = inner_termination;
            break;
        }
    }

    let mut result = last.expect("at least one inner solve runs");
    result.history = if history.is_empty() {
        result.history
    } else {
        history
    };
    result.termination = termination;
    Ok(ALResult {
        result,
        outer,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inactive_constraint_has_no_penalty() {
        for rho in [0.1, 1.0, 33.7] {
            assert_eq!(al_cost_terms(1.0, 0.0, rho), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn violated_constraint_penalty() {
        let (v, d1, d2) = al_cost_terms(-1.0, 0.0, 2.0);
        assert_eq!(v, 1.0);
        assert_eq!(d1, -2.0);
        assert_eq!(d2, 2.0);
    }

    #[test]
    fn penalty_growth_on_violation() {
        let settings = ALSettings::default();
        let state = ALState::new(2, 1, &settings);
        let traj = Trajectory {
            states: vec![DVector::zeros(1); 3],
            controls: vec![DVector::zeros(1); 2],
            costs: vec![0.0; 3],
            h_values: vec![vec![1.0], vec![-0.5], vec![1.0]],
        };
        let next = al_outer_update(&state, &traj, &settings);
        assert!((next.rho - 39.766).abs() < 1e-12);
        assert_eq!(next.omega, settings.omega0);
        assert!((next.multipliers[1][0] - 33.7 * 0.5).abs() < 1e-12);
        assert_eq!(next.multipliers[0][0], 0.0);
    }

    #[test]
    fn tolerance_shrinks_when_feasible() {
        let settings = ALSettings::default();
        let state = ALState::new(2, 2, &settings);
        let traj = Trajectory {
            states: vec![DVector::zeros(1); 3],
            controls: vec![DVector::zeros(1); 2],
            costs: vec![0.0; 3],
            h_values: vec![vec![0.5, 0.5]; 3],
        };
        let next = al_outer_update(&state, &traj, &settings);
        assert!((next.omega - 0.9141).abs() < 1e-12);
        assert_eq!(next.rho, settings.rho0);
        assert!(next.multipliers.iter().flatten().all(|&l| l == 0.0));
    }

    #[test]
    fn settings_validation() {
        let mut s = ALSettings::default();
        s.validate().unwrap();
        s.beta_rho = 1.0;
        assert!(s.validate().is_err());
        s.beta_rho = 2.0;
        s.beta_omega = 1.0;
        assert!(s.validate().is_err());
    }
}
