//! Problem-definition types shared by every solver: dynamics and safety
//! function interfaces, quadratic costs, trajectories and rollouts.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Any state component with magnitude above this aborts a rollout.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

/// Discrete-time dynamics `x_{k+1} = f(k, x_k, u_k)` with first derivatives.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn dt(&self) -> f64;

    fn step(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `(f_x, f_u)` evaluated at `(k, x, u)`.
    fn jacobians(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>)
        -> (DMatrix<f64>, DMatrix<f64>);

    /// Fallible step used by rollouts. Models with a restricted domain
    /// (Euler-angle singularities, classical barriers) override this.
    fn try_step(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.step(k, x, u))
    }
}

/// Scalar safety function `h(k, x)`; the safe set is `{x | h > 0}`.
///
/// Implementations read whatever coordinates they need from `x` and return
/// gradients and Hessians sized to `x.len()`, so the same function works on
/// physical and barrier-augmented states.
pub trait SafetyFunction: Send + Sync + fmt::Debug {
    /// Smallest state length this function can read (highest index used + 1).
    fn min_state_dim(&self) -> usize;
    fn eval(&self, k: usize, x: &DVector<f64>) -> f64;
    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64>;
    fn time_varying(&self) -> bool {
        false
    }
}

pub type SharedSafety = Arc<dyn SafetyFunction>;

/// Box constraint on controls, enforced by clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlLimits {
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
        }
    }

    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .enumerate()
                .map(|(i, &v)| v.clamp(self.lower[i], self.upper[i])),
        )
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }
}

/// Second-order expansion of a running cost term around `(x, u)`.
#[derive(Debug, Clone)]
pub struct StageExpansion {
    pub l_x: DVector<f64>,
    pub l_u: DVector<f64>,
    pub l_xx: DMatrix<f64>,
    pub l_uu: DMatrix<f64>,
    pub l_ux: DMatrix<f64>,
}

/// Running plus terminal cost, with derivatives for the backward pass.
pub trait CostModel: Send + Sync {
    fn running(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn terminal(&self, x: &DVector<f64>) -> f64;
    fn running_expansion(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> StageExpansion;
    /// `(Φ_x, Φ_xx)`.
    fn terminal_expansion(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
}

/// State reference for the tracking cost.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Fixed(DVector<f64>),
    /// One reference state per step, `N + 1` entries.
    Trajectory(Vec<DVector<f64>>),
}

impl Reference {
    pub fn at(&self, k: usize) -> &DVector<f64> {
        match self {
            Reference::Fixed(r) => r,
            Reference::Trajectory(rs) => &rs[k.min(rs.len() - 1)],
        }
    }

    fn dim(&self) -> usize {
        self.at(0).len()
    }
}

/// `Σ (x̂_k − r_k)ᵀ Q (x̂_k − r_k) + (u_k − u_r)ᵀ R (u_k − u_r) + (x̂_N − r_N)ᵀ S (x̂_N − r_N)`.
///
/// The control reference `u_r` defaults to zero; the quadrotor uses hover thrust.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub x_ref: Reference,
    pub u_ref: DVector<f64>,
    horizon: usize,
}

impl QuadraticCost {
    /// Validates symmetry and definiteness: `R ≻ 0`, `Q, S ⪰ 0`.
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        s: DMatrix<f64>,
        x_ref: Reference,
        horizon: usize,
    ) -> Result<Self> {
        let n = q.nrows();
        let m = r.nrows();
        for (what, mat, dim) in [("Q", &q, n), ("R", &r, m), ("S", &s, n)] {
            if mat.nrows() != dim || mat.ncols() != dim {
                return Err(Error::Dimension {
                    what,
                    expected: dim,
                    found: mat.ncols(),
                });
            }
            if (mat - mat.transpose()).amax() > 1e-12 * (1.0 + mat.amax()) {
                return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
            }
        }
        if x_ref.dim() != n {
            return Err(Error::Dimension {
                what: "reference",
                expected: n,
                found: x_ref.dim(),
            });
        }
        if let Reference::Trajectory(rs) = &x_ref {
            if rs.len() != horizon + 1 {
                return Err(Error::Dimension {
                    what: "reference trajectory",
                    expected: horizon + 1,
                    found: rs.len(),
                });
            }
        }
        let min_eig = |m: &DMatrix<f64>| m.clone().symmetric_eigenvalues().min();
        if m == 0 || min_eig(&r) <= 0.0 {
            return Err(Error::InvalidParameter("R must be positive definite".into()));
        }
        for (what, mat) in [("Q", &q), ("S", &s)] {
            if n > 0 && min_eig(mat) < -1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "{what} must be positive semi-definite"
                )));
            }
        }
        Ok(Self {
            q,
            r,
            s,
            x_ref,
            u_ref: DVector::zeros(m),
            horizon,
        })
    }

    pub fn with_control_reference(mut self, u_ref: DVector<f64>) -> Self {
        assert_eq!(u_ref.len(), self.r.nrows());
        self.u_ref = u_ref;
        self
    }

    pub fn from_diagonals(
        q: &[f64],
        r: &[f64],
        s: &[f64],
        x_ref: Reference,
        horizon: usize,
    ) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
            DMatrix::from_diagonal(&DVector::from_column_slice(s)),
            x_ref,
            horizon,
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.r.nrows()
    }
}

impl CostModel for QuadraticCost {
    fn running(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let dx = x - self.x_ref.at(k);
        let du = u - &self.u_ref;
        dx.dot(&(&self.q * &dx)) + du.dot(&(&self.r * &du))
    }

    fn terminal(&self, x: &DVector<f64>) -> f64 {
        let dx = x - self.x_ref.at(self.horizon);
        dx.dot(&(&self.s * &dx))
    }

    fn running_expansion(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> StageExpansion {
        let dx = x - self.x_ref.at(k);
        let du = u - &self.u_ref;
        StageExpansion {
            l_x: &self.q * dx * 2.0,
            l_u: &self.r * du * 2.0,
            l_xx: &self.q * 2.0,
            l_uu: &self.r * 2.0,
            l_ux: DMatrix::zeros(self.r.nrows(), self.q.nrows()),
        }
    }

    fn terminal_expansion(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let dx = x - self.x_ref.at(self.horizon);
        (&self.s * dx * 2.0, &self.s * 2.0)
    }
}

/// A state/control sequence with per-step cost and safety records.
///
/// `states` has `N + 1` entries and `controls` has `N`. `costs[k]` is the
/// running cost for `k < N` and the terminal cost at `N`. `h_values[k][i]` is
/// safety function `i` evaluated at `(k, states[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub costs: Vec<f64>,
    pub h_values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// Smallest safety value over every step and constraint (`+∞` when unconstrained).
    pub fn min_h(&self) -> f64 {
        self.h_values
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Re-evaluate `costs` and `h_values` for the current states and controls.
    pub fn evaluate(&mut self, cost: &dyn CostModel, constraints: &[SharedSafety]) {
        let n = self.controls.len();
        self.costs = (0..n)
            .map(|k| cost.running(k, &self.states[k], &self.controls[k]))
            .chain(std::iter::once(cost.terminal(&self.states[n])))
            .collect();
        self.h_values = self
            .states
            .iter()
            .enumerate()
            .map(|(k, x)| constraints.iter().map(|h| h.eval(k, x)).collect())
            .collect();
    }
}

/// Propagate `x0` through `dynamics`, clipping each control to `limits`.
///
/// The returned trajectory stores the applied (clipped) controls; its cost
/// and safety records are empty until [`Trajectory::evaluate`] is called.
pub fn rollout(
    dynamics: &dyn Dynamics,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    limits: Option<&ControlLimits>,
) -> Result<Trajectory> {
    if x0.len() != dynamics.state_dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: dynamics.state_dim(),
            found: x0.len(),
        });
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged { step: 0 });
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut applied = Vec::with_capacity(controls.len());
    states.push(x0.clone());
    for (k, u) in controls.iter().enumerate() {
        if u.len() != dynamics.control_dim() {
            return Err(Error::Dimension {
                what: "control",
                expected: dynamics.control_dim(),
                found: u.len(),
            });
        }
        let u = match limits {
            Some(l) => l.clamp(u),
            None => u.clone(),
        };
        let next = dynamics.try_step(k, &states[k], &u)?;
        if !is_bounded(&next) {
            return Err(Error::Diverged { step: k + 1 });
        }
        states.push(next);
        applied.push(u);
    }
    Ok(Trajectory {
        states,
        controls: applied,
        costs: Vec::new(),
        h_values: Vec::new(),
    })
}

/// Finite and within [`DIVERGENCE_THRESHOLD`] in every component.
pub fn is_bounded(x: &DVector<f64>) -> bool {
    x.iter()
        .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_THRESHOLD)
}

/// Sum of running and terminal costs of `traj` under `cost`.
pub fn total_cost(traj: &Trajectory, cost: &QuadraticCost) -> Result<f64> {
    if traj.states.iter().any(|x| x.len() != cost.state_dim()) {
        return Err(Error::Dimension {
            what: "trajectory state",
            expected: cost.state_dim(),
            found: traj.states[0].len(),
        });
    }
    if traj.controls.iter().any(|u| u.len() != cost.control_dim()) {
        return Err(Error::Dimension {
            what: "trajectory control",
            expected: cost.control_dim(),
            found: traj.controls[0].len(),
        });
    }
    let n = traj.controls.len();
    let running: f64 = (0..n)
        .map(|k| cost.running(k, &traj.states[k], &traj.controls[k]))
        .sum();
    Ok(running + cost.terminal(&traj.states[n]))
}

/// First point where a safety function is not strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub constraint: usize,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyReport {
    pub safe: bool,
    pub first_violation: Option<Violation>,
}

/// `safe` is true iff every recorded `h` is strictly positive.
pub fn is_safe(traj: &Trajectory) -> SafetyReport {
    is_safe_from(traj, 0)
}

/// Like [`is_safe`] but ignores steps before `first_step`.
pub fn is_safe_from(traj: &Trajectory, first_step: usize) -> SafetyReport {
    let first_violation = traj
        .h_values
        .iter()
        .enumerate()
        .skip(first_step)
        .find_map(|(step, hs)| {
            hs.iter()
                .position(|&h| !(h > 0.0))
                .map(|constraint| Violation {
                    step,
                    constraint,
                    h: hs[constraint],
                })
        });
    SafetyReport {
        safe: first_violation.is_none(),
        first_violation,
    }
}

/// A fully assembled optimal control problem.
///
/// `dynamics` may be a barrier-augmented system, in which case `x0` is the
/// augmented initial state. `constraints` always lists the raw safety
/// functions so that safety can be verified independently of how (or
/// whether) the solver sees them.
#[derive(Clone)]
pub struct Problem {
    pub dynamics: Arc<dyn Dynamics>,
    pub cost: QuadraticCost,
    pub constraints: Vec<SharedSafety>,
    pub x0: DVector<f64>,
    pub limits: Option<ControlLimits>,
}

impl Problem {
    pub fn horizon(&self) -> usize {
        self.cost.horizon()
    }

    pub fn zero_controls(&self) -> Vec<DVector<f64>> {
        vec![DVector::zeros(self.dynamics.control_dim()); self.horizon()]
    }

    /// Rollout followed by cost/safety evaluation under the problem's own cost.
    pub fn evaluate(&self, controls: &[DVector<f64>]) -> Result<Trajectory> {
        let mut traj = rollout(
            self.dynamics.as_ref(),
            &self.x0,
            controls,
            self.limits.as_ref(),
        )?;
        traj.evaluate(&self.cost, &self.constraints);
        Ok(traj)
    }
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("state_dim", &self.dynamics.state_dim())
            .field("control_dim", &self.dynamics.control_dim())
            .field("horizon", &self.horizon())
            .field("constraints", &self.constraints.len())
            .finish()
    }
}
