//! Experiment environments: the corridor, the quadrotor figure-eight, the
//! two-team formation task and the randomized obstacle fields.

mod config;
pub mod safety;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    figure8_point, BarrierGroup, ControlReference, CostConfig, Method, ModelConfig, Obstacle,
    ReferenceConfig, ScenarioConfig, Shape, Solved,
};
pub use safety::{h_horseshoe, h_moving_ellipsoid, h_rotated_rectangle};

use crate::al::ALSettings;
use crate::barriers::TolerantParams;
use crate::ddp::SolverSettings;
use crate::models::QuadrotorParams;
use crate::problem::ControlLimits;
use crate::{Error, Result};
use safety::{DistanceMode, WallSide};

/// Attempts per instance before sampling gives up.
pub const MAX_RESAMPLES: usize = 100;

pub const PRESETS: [&str; 5] = ["corridor", "fig8", "robotarium", "rect_field", "ellipsoid_field"];

/// Shipped scenario by name. Field presets use seed 1 with 10 obstacles.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    match name {
        "corridor" => Ok(build_corridor()),
        "fig8" => Ok(build_quadrotor_fig8()),
        "robotarium" => Ok(build_robotarium()),
        "rect_field" => sample_rect_field(1, 10),
        "ellipsoid_field" => sample_ellipsoid_field(1, 10),
        _ => Err(Error::Config(format!(
            "unknown preset '{name}' (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

/// Differential drive behind a horseshoe of three walls, starting from rest
/// with zero controls.
pub fn build_corridor() -> ScenarioConfig {
    let walls = [(0.5, 0.0, 3.0, 0.5), (0.0, 0.75, 1.0, 2.0), (-0.5, 0.0, 3.0, 0.5)];
    ScenarioConfig {
        name: "corridor".into(),
        method: Method::Tdbas,
        horizon: 300,
        dt: 0.01,
        seed: 0,
        start: vec![1.0, -0.5, 0.0],
        goal: vec![0.0, 0.0, 0.0],
        goal_tolerance: 0.25,
        model: ModelConfig::Unicycle,
        cost: CostConfig {
            q: vec![0.0, 0.0, 0.0],
            r: vec![0.001, 0.001],
            s: vec![1000.0, 1000.0, 0.0],
            control_reference: ControlReference::Zero,
            reference: ReferenceConfig::Goal,
        },
        limits: None,
        solver: SolverSettings::default(),
        al: ALSettings::default(),
        barriers: vec![BarrierGroup::tolerant(
            "walls",
            TolerantParams::new(500.0, 500.0, 30.0, 50.0).unwrap(),
            1e-5,
            0.05,
        )],
        obstacles: walls
            .iter()
            .map(|&(cx, cy, a, b)| {
                Obstacle::new(Shape::HorseshoeRect {
                    center: [cx, cy],
                    a,
                    b,
                    s: 1.0,
                })
            })
            .collect(),
    }
}

/// Quadrotor starting inside a sphere at the origin, tracking a figure-eight
/// that runs back through that sphere and past two more obstacles.
pub fn build_quadrotor_fig8() -> ScenarioConfig {
    let horizon = 300;
    let dt = 0.02;
    let params = QuadrotorParams::default();
    let mut q = vec![0.0; 12];
    q[..3].fill(200.0);
    let sphere = |c: [f64; 3], r: f64| Obstacle::new(Shape::Sphere { center: c, radius: r });
    ScenarioConfig {
        name: "fig8".into(),
        method: Method::Tdbas,
        horizon,
        dt,
        seed: 0,
        start: vec![0.0; 12],
        goal: vec![0.0; 12],
        goal_tolerance: 0.25,
        model: ModelConfig::quadrotor(params),
        cost: CostConfig {
            q,
            r: vec![0.5e-2; 4],
            s: vec![0.0; 12],
            control_reference: ControlReference::Hover,
            reference: ReferenceConfig::Figure8 {
                amplitude: 2.0,
                period: horizon as f64 * dt,
                altitude: 0.0,
                center: [0.0, 0.0],
            },
        },
        limits: None,
        solver: SolverSettings {
            conv_tol: 1e-2,
            ..SolverSettings::default()
        },
        al: ALSettings::default(),
        barriers: vec![BarrierGroup::tolerant(
            "spheres",
            TolerantParams::new(10.0, 5.0, 5.0, 5.0).unwrap(),
            5.0,
            0.05,
        )],
        obstacles: vec![
            sphere([0.05, -0.05, 0.0], 0.5),
            sphere([1.8, 0.4, 0.0], 0.3),
            sphere([-1.8, -0.4, 0.0], 0.3),
        ],
    }
}

/// Robot radius added to obstacle and arena-boundary safety functions.
pub const ROBOT_RADIUS: f64 = 0.075;
pub const CONNECT_RADIUS: f64 = 0.3;
pub const COLLIDE_RADIUS: f64 = 0.15;

/// Two teams of two unicycles swap sides of an arena with three square
/// obstacles, keeping teammates connected and all agents apart.
///
/// Barrier groups, in order: connectivity, collision, obstacles, boundaries.
pub fn build_robotarium() -> ScenarioConfig {
    let agents = 4;
    let starts = [(-1.2, 0.6, 0.0), (-1.2, -0.6, 0.0), (1.2, 0.6, PI), (1.2, -0.6, PI)];
    let goals = [(1.2, 0.1), (1.2, -0.1), (-1.2, 0.1), (-1.2, -0.1)];
    let mut start = Vec::new();
    let mut goal = Vec::new();
    for (s, g) in starts.iter().zip(&goals) {
        start.extend([s.0, s.1, s.2]);
        goal.extend([g.0, g.1, 0.0]);
    }

    let mut obstacles = Vec::new();
    for (a, b) in [(0, 1), (2, 3)] {
        obstacles.push(
            Obstacle::new(Shape::PairwiseDistance {
                other: b,
                radius: CONNECT_RADIUS,
                mode: DistanceMode::Connect,
            })
            .for_agent(a),
        );
    }
    for a in 0..agents {
        for b in a + 1..agents {
            obstacles.push(
                Obstacle::new(Shape::PairwiseDistance {
                    other: b,
                    radius: COLLIDE_RADIUS,
                    mode: DistanceMode::Collide,
                })
                .for_agent(a)
                .in_group(1),
            );
        }
    }
    for a in 0..agents {
        for cy in [0.0, 1.15, -1.15] {
            obstacles.push(
                Obstacle::new(Shape::Diamond {
                    center: [0.0, cy],
                    size: 0.9,
                    margin: ROBOT_RADIUS,
                })
                .for_agent(a)
                .in_group(2),
            );
        }
        for (axis, bound, side) in [
            (0, -1.6, WallSide::Lower),
            (0, 1.6, WallSide::Upper),
            (1, -1.0, WallSide::Lower),
            (1, 1.0, WallSide::Upper),
        ] {
            obstacles.push(
                Obstacle::new(Shape::Boundary {
                    axis,
                    bound,
                    side,
                    margin: ROBOT_RADIUS,
                })
                .for_agent(a)
                .in_group(3),
            );
        }
    }

    let q = vec![0.0001; 3 * agents];
    let mut s = vec![0.0; 3 * agents];
    for a in 0..agents {
        s[3 * a] = 1000.0;
        s[3 * a + 1] = 1000.0;
    }
    let group = |name: &str, p, m, c1, c2| {
        BarrierGroup::tolerant(name, TolerantParams::new(p, m, c1, c2).unwrap(), 0.1, 0.05)
    };
    ScenarioConfig {
        name: "robotarium".into(),
        method: Method::Tdbas,
        horizon: 1213,
        dt: 0.033,
        seed: 0,
        start,
        goal,
        goal_tolerance: 0.25,
        model: ModelConfig::UnicycleTeam { agents },
        cost: CostConfig {
            q,
            r: vec![5.0; 2 * agents],
            s,
            control_reference: ControlReference::Zero,
            reference: ReferenceConfig::Goal,
        },
        limits: None,
        solver: SolverSettings::default(),
        al: ALSettings::default(),
        barriers: vec![
            group("connect", 0.0, 5.0, 1.0, 45.0),
            group("collide", 0.0, 100.0, 1.0, 175.0),
            group("obstacles", 3.0, 1.0, 50.0, 100.0),
            group("boundaries", 3.0, 1.0, 50.0, 100.0),
        ],
        obstacles,
    }
}

/// Cost and method parameters for one method on one field kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodTuning {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default)]
    pub barrier_weight: Option<f64>,
    #[serde(default)]
    pub barrier: Option<TolerantParams>,
    #[serde(default)]
    pub al: Option<ALSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldTuning {
    pub tdbas: MethodTuning,
    pub dbas: MethodTuning,
    pub al: MethodTuning,
}

impl FieldTuning {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn for_method(&self, method: Method) -> Option<&MethodTuning> {
        match method {
            Method::Tdbas => Some(&self.tdbas),
            Method::Dbas => Some(&self.dbas),
            Method::Al => Some(&self.al),
            Method::None => None,
        }
    }

    /// `cfg` switched to `method` with that method's tuned parameters.
    /// `Method::None` keeps the T-DBaS cost weights.
    pub fn apply(&self, cfg: &ScenarioConfig, method: Method) -> ScenarioConfig {
        let mut out = cfg.with_method(method);
        let t = self.for_method(method).unwrap_or(&self.tdbas);
        out.cost.q = t.q.clone();
        out.cost.r = t.r.clone();
        for g in &mut out.barriers {
            if let Some(w) = t.barrier_weight {
                g.weight = w;
            }
            if let Some(p) = t.barrier {
                g.set_params(p);
            }
        }
        if let Some(al) = &t.al {
            out.al = al.clone();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Differential drive among static rotated rectangles.
    Rect,
    /// Quadrotor among periodically moving ellipsoids.
    Ellipsoid,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Rect => "rect",
            FieldKind::Ellipsoid => "ellipsoid",
        }
    }

    pub fn sample(self, seed: u64, n_obstacles: usize) -> Result<ScenarioConfig> {
        match self {
            FieldKind::Rect => sample_rect_field(seed, n_obstacles),
            FieldKind::Ellipsoid => sample_ellipsoid_field(seed, n_obstacles),
        }
    }

    /// Shipped tuned parameters.
    pub fn tuning(self) -> FieldTuning {
        let text = match self {
            FieldKind::Rect => include_str!("../../presets/rect_field_tuning.toml"),
            FieldKind::Ellipsoid => include_str!("../../presets/ellipsoid_field_tuning.toml"),
        };
        FieldTuning::from_toml(text).expect("shipped tuning files parse")
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(FieldKind::Rect),
            "ellipsoid" => Ok(FieldKind::Ellipsoid),
            _ => Err(Error::Config(format!("unknown field kind '{s}' (rect, ellipsoid)"))),
        }
    }
}

fn check_count(n_obstacles: usize) -> Result<()> {
    if n_obstacles == 0 {
        return Err(Error::InvalidParameter("n_obstacles must be >= 1".into()));
    }
    Ok(())
}

/// `U(lo, hi)` with the endpoint `lo` excluded.
fn open_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

/// Differential drive among `n_obstacles` random rotated rectangles.
///
/// Start and goal are redrawn until both lie outside every rectangle.
/// Returned with the tuned T-DBaS parameters applied.
pub fn sample_rect_field(seed: u64, n_obstacles: usize) -> Result<ScenarioConfig> {
    check_count(n_obstacles)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obstacles: Vec<Obstacle> = (0..n_obstacles)
        .map(|_| {
            let ox = rng.random_range(-5.0..5.0);
            let oy = rng.random_range(-5.0..5.0);
            let s = rng.random_range(1.0..1.5);
            let r = open_uniform(&mut rng, 0.0, 4.0);
            let theta = rng.random_range(-PI..PI);
            Obstacle::new(Shape::RotatedRectangle {
                center: [ox, oy],
                s,
                r,
                theta,
            })
        })
        .collect();

    let mut cfg = ScenarioConfig {
        name: format!("rect_field_{n_obstacles}_{seed}"),
        method: Method::Tdbas,
        horizon: 300,
        dt: 0.01,
        seed,
        start: vec![0.0; 3],
        goal: vec![0.0; 3],
        goal_tolerance: 0.25,
        model: ModelConfig::Unicycle,
        cost: CostConfig {
            q: vec![0.0; 3],
            r: vec![1.0; 2],
            s: vec![500.0, 500.0, 0.0],
            control_reference: ControlReference::Zero,
            reference: ReferenceConfig::Goal,
        },
        limits: Some(ControlLimits::uniform(2, -100.0, 100.0)),
        solver: SolverSettings {
            conv_tol: 1e-3,
            max_iters: 500,
            ..SolverSettings::default()
        },
        al: ALSettings::default(),
        barriers: vec![BarrierGroup::tolerant("obstacles", TolerantParams::default(), 0.0, 0.05)],
        obstacles,
    };
    let safety = cfg.safety_functions();
    let outside = |p: [f64; 2]| {
        let x = nalgebra::DVector::from_vec(vec![p[0], p[1], 0.0]);
        safety.iter().all(|h| h.eval(0, &x) > 0.0)
    };
    for _ in 0..MAX_RESAMPLES {
        let start = [rng.random_range(-5.0..0.0), rng.random_range(-5.0..5.0)];
        let goal = [rng.random_range(0.0..5.0), rng.random_range(-5.0..5.0)];
        if outside(start) && outside(goal) {
            cfg.start = vec![start[0], start[1], 0.0];
            cfg.goal = vec![goal[0], goal[1], 0.0];
            return Ok(FieldKind::Rect.tuning().apply(&cfg, Method::Tdbas));
        }
    }
    Err(Error::Generation(format!(
        "no free start/goal pair after {MAX_RESAMPLES} draws (seed {seed}, {n_obstacles} obstacles)"
    )))
}

/// Quadrotor among `n_obstacles` ellipsoids moving on random segments.
///
/// The start is redrawn until hovering there stays clear of every obstacle
/// over the horizon, and the goal until it is clear at the final step.
/// Returned with the tuned T-DBaS parameters applied.
pub fn sample_ellipsoid_field(seed: u64, n_obstacles: usize) -> Result<ScenarioConfig> {
    check_count(n_obstacles)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| {
        [
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ]
    };
    let obstacles: Vec<Obstacle> = (0..n_obstacles)
        .map(|_| {
            let p0 = point(&mut rng);
            let pf = point(&mut rng);
            let axes = [
                rng.random_range(0.3..0.7),
                rng.random_range(0.3..0.7),
                rng.random_range(0.3..0.7),
            ];
            let period = rng.random_range(5.0..10.0);
            Obstacle::new(Shape::MovingEllipsoid {
                start: p0,
                travel: [pf[0] - p0[0], pf[1] - p0[1], pf[2] - p0[2]],
                axes,
                period,
            })
        })
        .collect();

    let mut s = vec![0.0; 12];
    s[..3].fill(500.0);
    s[6..9].fill(250.0);
    let mut cfg = ScenarioConfig {
        name: format!("ellipsoid_field_{n_obstacles}_{seed}"),
        method: Method::Tdbas,
        horizon: 333,
        dt: 0.03,
        seed,
        start: vec![0.0; 12],
        goal: vec![0.0; 12],
        goal_tolerance: 0.25,
        model: ModelConfig::quadrotor(QuadrotorParams::default()),
        cost: CostConfig {
            q: vec![0.0; 12],
            r: vec![1.0; 4],
            s,
            control_reference: ControlReference::Hover,
            reference: ReferenceConfig::Goal,
        },
        limits: None,
        solver: SolverSettings {
            conv_tol: 1e-2,
            max_iters: 500,
            ..SolverSettings::default()
        },
        al: ALSettings::default(),
        barriers: vec![BarrierGroup::tolerant("obstacles", TolerantParams::default(), 0.0, 0.05)],
        obstacles,
    };
    let safety = cfg.safety_functions();
    let clear = |p: [f64; 3], steps: std::ops::RangeInclusive<usize>| {
        let mut x = nalgebra::DVector::zeros(12);
        x.rows_mut(0, 3).copy_from_slice(&p);
        steps.into_iter().all(|k| safety.iter().all(|h| h.eval(k, &x) > 0.0))
    };
    let n = cfg.horizon;
    for _ in 0..MAX_RESAMPLES {
        let start = [
            rng.random_range(-5.0..0.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ];
        let goal = [
            rng.random_range(0.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ];
        // Hover is a fixed point of the model, so the nominal rollout stays at the start.
        if clear(start, 0..=n) && clear(goal, n..=n) {
            cfg.start[..3].copy_from_slice(&start);
            cfg.goal[..3].copy_from_slice(&goal);
            return Ok(FieldKind::Ellipsoid.tuning().apply(&cfg, Method::Tdbas));
        }
    }
    Err(Error::Generation(format!(
        "no clear start/goal pair after {MAX_RESAMPLES} draws (seed {seed}, {n_obstacles} obstacles)"
    )))
}
