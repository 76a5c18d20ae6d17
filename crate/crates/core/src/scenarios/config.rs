//! Serializable scenario description and its assembly into a [`Problem`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::safety::{
    DistanceMode, L1Rectangle, MovingEllipsoid, PairwiseDistance, Sphere, Wall, WallSide,
};
use crate::al::{solve_al, ALSettings, OuterRecord};
use crate::barriers::{embed, BarrierFamily, BarrierSpec, TolerantParams};
use crate::ddp::{self, SolverResult, SolverSettings};
use crate::models::{Quadrotor, QuadrotorParams, Unicycle, UnicycleTeam};
use crate::problem::{
    ControlLimits, Dynamics, Problem, QuadraticCost, Reference, SharedSafety, Trajectory,
};
use crate::{Error, Result};

/// How safety is handled when a scenario is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Tolerant barrier states.
    Tdbas,
    /// Inverse barrier states.
    Dbas,
    /// Augmented-Lagrangian DDP on the raw constraints.
    Al,
    /// Unconstrained DDP; constraints are only checked.
    None,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Tdbas, Method::Dbas, Method::Al, Method::None];

    pub fn uses_barrier_states(self) -> bool {
        matches!(self, Method::Tdbas | Method::Dbas)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tdbas => "tdbas",
            Method::Dbas => "dbas",
            Method::Al => "al",
            Method::None => "none",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (tdbas, dbas, al, none)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(deny_unknown_fields)]
pub enum ModelConfig {
    Unicycle,
    UnicycleTeam { agents: usize },
    Quadrotor { mass: f64, gravity: f64, inertia: [f64; 3] },
}

impl ModelConfig {
    pub fn quadrotor(params: QuadrotorParams) -> Self {
        ModelConfig::Quadrotor {
            mass: params.mass,
            gravity: params.gravity,
            inertia: params.inertia,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            ModelConfig::Unicycle => 3,
            ModelConfig::UnicycleTeam { agents } => 3 * agents,
            ModelConfig::Quadrotor { .. } => 12,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            ModelConfig::Unicycle => 2,
            ModelConfig::UnicycleTeam { agents } => 2 * agents,
            ModelConfig::Quadrotor { .. } => 4,
        }
    }

    pub fn agents(&self) -> usize {
        match self {
            ModelConfig::UnicycleTeam { agents } => *agents,
            _ => 1,
        }
    }

    /// State indices of the position of `agent`.
    pub fn position_index(&self, agent: usize) -> Vec<usize> {
        match self {
            ModelConfig::Unicycle => vec![0, 1],
            ModelConfig::UnicycleTeam { .. } => vec![3 * agent, 3 * agent + 1],
            ModelConfig::Quadrotor { .. } => vec![0, 1, 2],
        }
    }

    fn hover_thrust(&self) -> Option<f64> {
        match self {
            ModelConfig::Quadrotor { mass, gravity, .. } => Some(mass * gravity),
            _ => None,
        }
    }

    pub fn dynamics(&self, dt: f64) -> Arc<dyn Dynamics> {
        match self {
            ModelConfig::Unicycle => Arc::new(Unicycle::new(dt)),
            ModelConfig::UnicycleTeam { agents } => Arc::new(UnicycleTeam::new(*agents, dt)),
            ModelConfig::Quadrotor {
                mass,
                gravity,
                inertia,
            } => Arc::new(Quadrotor::new(
                QuadrotorParams {
                    mass: *mass,
                    gravity: *gravity,
                    inertia: *inertia,
                },
                dt,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Track the goal state at every step.
    #[default]
    Goal,
    /// Lemniscate `x = A sin(2πt/T)`, `y = A sin(4πt/T)/2` at fixed altitude,
    /// offset by `center`. Only positions are tracked; other states are zero.
    Figure8 {
        amplitude: f64,
        period: f64,
        altitude: f64,
        center: [f64; 2],
    },
}

pub fn figure8_point(amplitude: f64, period: f64, altitude: f64, center: [f64; 2], t: f64) -> [f64; 3] {
    let w = 2.0 * PI * t / period;
    [
        center[0] + amplitude * w.sin(),
        center[1] + amplitude * (2.0 * w).sin() / 2.0,
        altitude,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlReference {
    #[default]
    Zero,
    /// Hover thrust on the first input; also the initial control guess.
    Hover,
}

/// Diagonal cost weights over the physical state and control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    #[serde(default)]
    pub control_reference: ControlReference,
    #[serde(default)]
    pub reference: ReferenceConfig,
}

/// One barrier state and the weights on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierGroup {
    pub name: String,
    pub family: BarrierFamily,
    pub p: f64,
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    /// Running-cost weight on the barrier state.
    pub weight: f64,
    pub terminal_weight: f64,
}

impl BarrierGroup {
    pub fn tolerant(name: &str, params: TolerantParams, weight: f64, terminal_weight: f64) -> Self {
        Self {
            name: name.into(),
            family: BarrierFamily::Tolerant,
            p: params.p,
            m: params.m,
            c1: params.c1,
            c2: params.c2,
            weight,
            terminal_weight,
        }
    }

    pub fn params(&self) -> TolerantParams {
        TolerantParams {
            p: self.p,
            m: self.m,
            c1: self.c1,
            c2: self.c2,
        }
    }

    pub fn set_params(&mut self, params: TolerantParams) {
        self.p = params.p;
        self.m = params.m;
        self.c1 = params.c1;
        self.c2 = params.c2;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(deny_unknown_fields)]
pub enum Shape {
    /// `|u/r + v| + |u/r − v| − s` in the frame rotated by `theta`.
    RotatedRectangle {
        center: [f64; 2],
        s: f64,
        r: f64,
        theta: f64,
    },
    /// Axis-aligned `|a·Δx + b·Δy| + |a·Δx − b·Δy| − s`.
    HorseshoeRect { center: [f64; 2], a: f64, b: f64, s: f64 },
    /// Square of side `size` plus a robot-radius margin, in L1 form.
    Diamond { center: [f64; 2], size: f64, margin: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    MovingEllipsoid {
        start: [f64; 3],
        travel: [f64; 3],
        axes: [f64; 3],
        period: f64,
    },
    /// One arena wall on position axis `axis` (0 = x, 1 = y).
    Boundary {
        axis: usize,
        bound: f64,
        side: WallSide,
        margin: f64,
    },
    /// Distance between `agent` and `other`.
    PairwiseDistance {
        other: usize,
        radius: f64,
        mode: DistanceMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    /// Agent whose position the safety function reads.
    #[serde(default)]
    pub agent: usize,
    /// Barrier state this obstacle contributes to.
    #[serde(default)]
    pub group: usize,
    pub shape: Shape,
}

impl Obstacle {
    pub fn new(shape: Shape) -> Self {
        Self {
            agent: 0,
            group: 0,
            shape,
        }
    }

    pub fn in_group(mut self, group: usize) -> Self {
        self.group = group;
        self
    }

    pub fn for_agent(mut self, agent: usize) -> Self {
        self.agent = agent;
        self
    }

    fn validate(&self, model: &ModelConfig) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.agent >= model.agents() {
            return bad(format!("obstacle agent {} out of range", self.agent));
        }
        let planar = !matches!(model, ModelConfig::Quadrotor { .. });
        match &self.shape {
            Shape::RotatedRectangle { s, r, .. } if !(*s >= 0.0 && *r > 0.0) => {
                bad(format!("rotated_rectangle needs s >= 0 and r > 0 (s = {s}, r = {r})"))
            }
            Shape::HorseshoeRect { a, b, s, .. } if !(*a > 0.0 && *b > 0.0 && *s >= 0.0) => {
                bad("horseshoe_rect needs a, b > 0 and s >= 0".into())
            }
            Shape::Diamond { size, margin, .. } if !(*size >= 0.0 && *margin >= 0.0) => {
                bad("diamond needs size, margin >= 0".into())
            }
            Shape::Sphere { radius, .. } if !(*radius > 0.0) => {
                bad(format!("sphere radius must be > 0 (got {radius})"))
            }
            Shape::Sphere { .. } | Shape::MovingEllipsoid { .. } if planar => {
                bad("3-D obstacle on a planar model".into())
            }
            Shape::MovingEllipsoid { axes, period, .. }
                if !(axes.iter().all(|&a| a > 0.0) && *period > 0.0) =>
            {
                bad("moving_ellipsoid needs positive axes and period".into())
            }
            Shape::Boundary { axis, .. } if *axis > 1 => {
                bad(format!("boundary axis must be 0 or 1 (got {axis})"))
            }
            Shape::PairwiseDistance { other, radius, .. }
                if *other >= model.agents() || *other == self.agent || !(*radius > 0.0) =>
            {
                bad("pairwise_distance needs a distinct valid agent and radius > 0".into())
            }
            _ => Ok(()),
        }
    }

    pub fn safety(&self, model: &ModelConfig, dt: f64) -> SharedSafety {
        let pos = model.position_index(self.agent);
        let xy = [pos[0], pos[1]];
        match self.shape.clone() {
            Shape::RotatedRectangle { center, s, r, theta } => {
                Arc::new(super::safety::rotated_rectangle(center, s, r, theta, xy))
            }
            Shape::HorseshoeRect { center, a, b, s } => Arc::new(L1Rectangle {
                center,
                theta: 0.0,
                a,
                b,
                s,
                index: xy,
            }),
            Shape::Diamond {
                center,
                size,
                margin,
            } => Arc::new(L1Rectangle {
                center,
                theta: 0.0,
                a: 1.0,
                b: 1.0,
                s: size + margin,
                index: xy,
            }),
            Shape::Sphere { center, radius } => Arc::new(Sphere {
                center,
                radius,
                index: [pos[0], pos[1], pos[2]],
            }),
            Shape::MovingEllipsoid {
                start,
                travel,
                axes,
                period,
            } => Arc::new(MovingEllipsoid {
                start,
                travel,
                axes,
                period,
                dt,
                index: [pos[0], pos[1], pos[2]],
            }),
            Shape::Boundary {
                axis,
                bound,
                side,
                margin,
            } => Arc::new(Wall {
                index: pos[axis],
                bound,
                side,
                margin,
            }),
            Shape::PairwiseDistance { other, radius, mode } => {
                let o = model.position_index(other);
                Arc::new(PairwiseDistance {
                    first: xy,
                    second: [o[0], o[1]],
                    radius,
                    mode,
                })
            }
        }
    }
}

fn default_goal_tolerance() -> f64 {
    0.25
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub problem: Problem,
    pub result: SolverResult,
    /// Outer-loop log; empty unless the method is AL.
    pub outer: Vec<OuterRecord>,
}

/// Complete, serializable description of one trajectory optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub method: Method,
    pub horizon: usize,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Physical initial state.
    pub start: Vec<f64>,
    /// Physical goal state.
    pub goal: Vec<f64>,
    /// Terminal position error below which the goal counts as reached.
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    pub model: ModelConfig,
    pub cost: CostConfig,
    #[serde(default)]
    pub limits: Option<ControlLimits>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub al: ALSettings,
    #[serde(default)]
    pub barriers: Vec<BarrierGroup>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    /// Overrides one field by dotted path, e.g. `solver.max_iters=50` or
    /// `barriers.0.weight=0.1`. The value is parsed as a TOML value, falling
    /// back to a bare string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = match slot {
                toml::Value::Table(t) => t
                    .get_mut(part)
                    .ok_or_else(|| Error::Config(format!("unknown key '{part}' in '{key}'")))?,
                toml::Value::Array(a) => {
                    let i: usize = part
                        .parse()
                        .map_err(|_| Error::Config(format!("expected index, found '{part}' in '{key}'")))?;
                    let len = a.len();
                    a.get_mut(i)
                        .ok_or_else(|| Error::Config(format!("index {i} out of range ({len}) in '{key}'")))?
                }
                _ => return Err(Error::Config(format!("'{key}' does not name a field"))),
            };
        }
        // Integers are accepted where floats are expected.
        *slot = match (&*slot, parsed) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        let cfg: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {}", e.message())))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    /// Same scenario with `method`; barrier methods also switch every group
    /// to the matching barrier family.
    pub fn with_method(&self, method: Method) -> Self {
        let mut out = self.clone();
        out.method = method;
        let family = match method {
            Method::Tdbas => Some(BarrierFamily::Tolerant),
            Method::Dbas => Some(BarrierFamily::Inverse),
            _ => None,
        };
        if let Some(f) = family {
            for g in &mut out.barriers {
                g.family = f;
            }
        }
        out
    }

    pub fn physical_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.model.control_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.physical_dim();
        let m = self.control_dim();
        let check = |what: &str, len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} has length {len}, expected {want}")))
            }
        };
        check("start", self.start.len(), n)?;
        check("goal", self.goal.len(), n)?;
        check("cost.q", self.cost.q.len(), n)?;
        check("cost.s", self.cost.s.len(), n)?;
        check("cost.r", self.cost.r.len(), m)?;
        if let Some(l) = &self.limits {
            check("limits.lower", l.lower.len(), m)?;
            check("limits.upper", l.upper.len(), m)?;
            if l.lower.iter().zip(&l.upper).any(|(a, b)| !(a <= b)) {
                return Err(Error::Config("limits.lower must not exceed limits.upper".into()));
            }
        }
        if self.horizon == 0 || !(self.dt > 0.0) {
            return Err(Error::Config("horizon must be >= 1 and dt > 0".into()));
        }
        if let ReferenceConfig::Figure8 { amplitude, period, .. } = self.cost.reference {
            if !matches!(self.model, ModelConfig::Quadrotor { .. }) || !(period > 0.0) || !amplitude.is_finite() {
                return Err(Error::Config(
                    "figure8 reference needs a quadrotor and period > 0".into(),
                ));
            }
        }
        if self.cost.control_reference == ControlReference::Hover && self.model.hover_thrust().is_none() {
            return Err(Error::Config("hover control reference needs a quadrotor".into()));
        }
        for o in &self.obstacles {
            o.validate(&self.model)?;
            if self.method.uses_barrier_states() && o.group >= self.barriers.len() {
                return Err(Error::Config(format!(
                    "obstacle group {} has no barrier (have {})",
                    o.group,
                    self.barriers.len()
                )));
            }
        }
        if self.method.uses_barrier_states() {
            for g in &self.barriers {
                BarrierSpec::new(g.family, g.params(), Vec::new(), g.weight)?;
                if !(g.terminal_weight >= 0.0) {
                    return Err(Error::Config("barrier terminal_weight must be >= 0".into()));
                }
            }
        }
        self.solver.validate()?;
        if self.method == Method::Al {
            self.al.validate()?;
        }
        Ok(())
    }

    /// Raw safety functions, one per obstacle, in listing order.
    pub fn safety_functions(&self) -> Vec<SharedSafety> {
        self.obstacles
            .iter()
            .map(|o| o.safety(&self.model, self.dt))
            .collect()
    }

    /// One barrier spec per group, members taken from `safety` in obstacle order.
    pub fn barrier_specs(&self, safety: &[SharedSafety]) -> Result<Vec<BarrierSpec>> {
        self.barriers
            .iter()
            .enumerate()
            .map(|(g, group)| {
                let members = self
                    .obstacles
                    .iter()
                    .zip(safety)
                    .filter(|(o, _)| o.group == g)
                    .map(|(_, h)| h.clone())
                    .collect();
                BarrierSpec::new(group.family, group.params(), members, group.weight)
            })
            .collect()
    }

    fn n_barriers(&self) -> usize {
        if self.method.uses_barrier_states() {
            self.barriers.len()
        } else {
            0
        }
    }

    /// Physical reference state at step `k`.
    pub fn reference_at(&self, k: usize) -> Vec<f64> {
        match self.cost.reference {
            ReferenceConfig::Goal => self.goal.clone(),
            ReferenceConfig::Figure8 {
                amplitude,
                period,
                altitude,
                center,
            } => {
                let p = figure8_point(amplitude, period, altitude, center, k as f64 * self.dt);
                let mut r = vec![0.0; self.physical_dim()];
                r[..3].copy_from_slice(&p);
                r
            }
        }
    }

    fn reference(&self) -> Reference {
        let nb = self.n_barriers();
        let pad = |mut r: Vec<f64>| {
            r.resize(r.len() + nb, 0.0);
            DVector::from_vec(r)
        };
        match self.cost.reference {
            ReferenceConfig::Goal => Reference::Fixed(pad(self.goal.clone())),
            ReferenceConfig::Figure8 { .. } => Reference::Trajectory(
                (0..=self.horizon).map(|k| pad(self.reference_at(k))).collect(),
            ),
        }
    }

    fn control_reference(&self) -> DVector<f64> {
        let mut u = DVector::zeros(self.control_dim());
        if let (ControlReference::Hover, Some(t)) = (self.cost.control_reference, self.model.hover_thrust()) {
            u[0] = t;
        }
        u
    }

    /// Nominal control sequence the solver starts from.
    pub fn initial_controls(&self) -> Vec<DVector<f64>> {
        vec![self.control_reference(); self.horizon]
    }

    pub fn build(&self) -> Result<Problem> {
        self.validate()?;
        let base = self.model.dynamics(self.dt);
        let constraints = self.safety_functions();
        let start = DVector::from_column_slice(&self.start);

        let mut q = self.cost.q.clone();
        let mut s = self.cost.s.clone();
        let (dynamics, x0): (Arc<dyn Dynamics>, _) = if self.method.uses_barrier_states() {
            q.extend(self.barriers.iter().map(|g| g.weight));
            s.extend(self.barriers.iter().map(|g| g.terminal_weight));
            let aug = embed(base, self.barrier_specs(&constraints)?)?;
            let x0 = aug.augment_state(0, &start)?;
            (Arc::new(aug), x0)
        } else {
            (base, start)
        };
        let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_column_slice(v));
        let cost = QuadraticCost::new(
            diag(&q),
            diag(&self.cost.r),
            diag(&s),
            self.reference(),
            self.horizon,
        )?
        .with_control_reference(self.control_reference());

        Ok(Problem {
            dynamics,
            cost,
            constraints,
            x0,
            limits: self.limits.clone(),
        })
    }

    /// Builds and solves with the configured method.
    pub fn solve(&self) -> Result<Solved> {
        let problem = self.build()?;
        let init = self.initial_controls();
        let (result, outer) = if self.method == Method::Al {
            let r = solve_al(&problem, &init, &self.al, &self.solver)?;
            (r.result, r.outer)
        } else {
            (ddp::solve(&problem, &init, &self.solver)?, Vec::new())
        };
        Ok(Solved {
            problem,
            result,
            outer,
        })
    }

    /// Largest distance between an agent's terminal position and its goal.
    pub fn goal_distance(&self, traj: &Trajectory) -> f64 {
        self.goal_distance_of(traj.terminal())
    }

    /// [`goal_distance`](Self::goal_distance) for a single (possibly augmented) state.
    pub fn goal_distance_of(&self, x: &DVector<f64>) -> f64 {
        (0..self.model.agents())
            .map(|a| {
                self.model
                    .position_index(a)
                    .iter()
                    .map(|&i| (x[i] - self.goal[i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn goal_reached(&self, traj: &Trajectory) -> bool {
        self.goal_distance(traj) < self.goal_tolerance
    }
}
