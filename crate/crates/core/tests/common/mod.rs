//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdbas::al::{al_cost_terms, ALCost, ALSettings, ALState};
use tdbas::barriers::{
    barrier_derivs, barrier_eval, barrier_hessian_term_weighted, embed, BarrierFamily, BarrierSpec,
    TolerantParams,
};
use tdbas::ddp::{backward_pass, solve, SolverSettings};
use tdbas::models::{Quadrotor, QuadrotorParams, Unicycle, UnicycleTeam};
use tdbas::problem::{
    rollout, CostModel, Dynamics, Problem, QuadraticCost, Reference, SafetyFunction, SharedSafety,
};
use tdbas::scenarios::safety::{DistanceMode, WallSide};
use tdbas::scenarios::{ModelConfig, Obstacle, Shape};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, lo, hi))
}

/// `M Mᵀ + shift·I` for a random `M`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| uniform(rng, -1.0, 1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * shift
}

/// Largest entrywise `|a − b| / max(1, |b|)`.
pub fn mixed_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, eps: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += eps;
        xm[i] -= eps;
        j.set_column(i, &((f(&xp) - f(&xm)) / (2.0 * eps)));
    }
    j
}

pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, eps: f64) -> DMatrix<f64> {
    fd_jacobian(|y| DVector::from_element(1, f(y)), x, eps)
}

/// Tolerant parameter sets used by the shipped scenarios and tuning files.
pub fn shipped_params() -> Vec<TolerantParams> {
    [
        (500.0, 500.0, 30.0, 50.0),
        (10.0, 5.0, 5.0, 5.0),
        (21.0, 10.2, 44.8, 6.86),
        (0.0, 5.0, 1.0, 45.0),
        (0.0, 100.0, 1.0, 175.0),
        (3.0, 1.0, 50.0, 100.0),
    ]
    .into_iter()
    .map(|(p, m, c1, c2)| TolerantParams::new(p, m, c1, c2).unwrap())
    .collect()
}

/// Largest `|fd − analytic| / max(1, |analytic|)` over a grid on `[−5, 5]`
/// for `(dB/dh, d²B/dh²)` of every shipped tolerant parameter set.
pub fn tolerant_barrier_fd_error() -> (f64, f64) {
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    let eps = 1e-6;
    for params in shipped_params() {
        let b = |h: f64| barrier_eval(BarrierFamily::Tolerant, &params, h).unwrap();
        let d = |h: f64| barrier_derivs(BarrierFamily::Tolerant, &params, h).unwrap();
        for i in 0..=1000 {
            let h = -5.0 + 0.01 * i as f64;
            let (d1, d2) = d(h);
            let fd1 = (b(h + eps) - b(h - eps)) / (2.0 * eps);
            let fd2 = (d(h + eps).0 - d(h - eps).0) / (2.0 * eps);
            e1 = e1.max((fd1 - d1).abs() / d1.abs().max(1.0));
            e2 = e2.max((fd2 - d2).abs() / d2.abs().max(1.0));
        }
    }
    (e1, e2)
}

fn random_rect(rng: &mut ChaCha8Rng) -> Shape {
    Shape::RotatedRectangle {
        center: [uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0)],
        s: uniform(rng, 1.0, 1.5),
        r: uniform(rng, 0.2, 4.0),
        theta: uniform(rng, -3.0, 3.0),
    }
}

/// Tolerant barrier states over random rectangles, one or two groups.
pub fn random_unicycle_barriers(rng: &mut ChaCha8Rng, groups: usize) -> Vec<BarrierSpec> {
    let params = shipped_params();
    (0..groups)
        .map(|_| {
            let members: Vec<SharedSafety> = (0..rng.random_range(1..4))
                .map(|_| Obstacle::new(random_rect(rng)).safety(&ModelConfig::Unicycle, 0.01))
                .collect();
            let p = params[rng.random_range(0..params.len())];
            BarrierSpec::new(BarrierFamily::Tolerant, p, members, uniform(rng, 0.01, 5.0)).unwrap()
        })
        .collect()
}

/// Max mixed error of `(f_x, f_u)` against central differences at 100
/// random points, for every model with and without barrier states.
pub fn dynamics_fd_errors() -> Vec<(&'static str, f64)> {
    let mut rng = rng(11);
    let quad_spheres: Vec<SharedSafety> = (0..3)
        .map(|i| {
            Obstacle::new(Shape::Sphere {
                center: [i as f64 - 1.0, 0.5, 0.2],
                radius: 0.4,
            })
            .safety(&ModelConfig::quadrotor(QuadrotorParams::default()), 0.02)
        })
        .collect();
    let quad_spec = BarrierSpec::new(
        BarrierFamily::Tolerant,
        TolerantParams::new(10.0, 5.0, 5.0, 5.0).unwrap(),
        quad_spheres,
        1.0,
    )
    .unwrap();
    let quad = Arc::new(Quadrotor::new(QuadrotorParams::default(), 0.02));
    let uni_specs = random_unicycle_barriers(&mut rng, 2);
    let models: Vec<(&'static str, Arc<dyn Dynamics>, f64)> = vec![
        ("unicycle", Arc::new(Unicycle::new(0.01)), 3.0),
        ("unicycle_team", Arc::new(UnicycleTeam::new(4, 0.033)), 3.0),
        ("quadrotor", quad.clone(), 1.0),
        (
            "unicycle+barrier_states",
            Arc::new(embed(Arc::new(Unicycle::new(0.05)), uni_specs).unwrap()),
            3.0,
        ),
        (
            "quadrotor+barrier_states",
            Arc::new(embed(quad, vec![quad_spec]).unwrap()),
            1.0,
        ),
    ];
    models
        .into_iter()
        .map(|(name, dynamics, spread)| {
            let mut worst = 0.0f64;
            for k in 0..100 {
                let x = random_vector(&mut rng, dynamics.state_dim(), -spread, spread);
                let u = random_vector(&mut rng, dynamics.control_dim(), -spread, spread);
                let (fx, fu) = dynamics.jacobians(k, &x, &u);
                let fd_x = fd_jacobian(|y| dynamics.step(k, y, &u), &x, 1e-6);
                let fd_u = fd_jacobian(|v| dynamics.step(k, &x, v), &u, 1e-6);
                worst = worst.max(mixed_error(&fd_x, &fx)).max(mixed_error(&fd_u, &fu));
            }
            (name, worst)
        })
        .collect()
}

/// Points closer than this to an L1 kink are resampled.
const KINK_MARGIN: f64 = 1e-3;

/// Distance to the nearest kink of the L1 forms, `+∞` for smooth shapes.
fn kink_distance(shape: &Shape, p: [f64; 2]) -> f64 {
    let (center, theta, a, b) = match *shape {
        Shape::RotatedRectangle { center, r, theta, .. } => (center, theta, 1.0 / r, 1.0),
        Shape::HorseshoeRect { center, a, b, .. } => (center, 0.0, a, b),
        Shape::Diamond { center, .. } => (center, 0.0, 1.0, 1.0),
        _ => return f64::INFINITY,
    };
    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
    let u = dx * theta.cos() + dy * theta.sin();
    let v = dx * theta.sin() - dy * theta.cos();
    (a * u + b * v).abs().min((a * u - b * v).abs())
}

/// Max mixed error of safety gradients against central differences at
/// 100 random points per shape kind (kinks excluded).
pub fn safety_fd_errors() -> Vec<(&'static str, f64)> {
    let mut rng = rng(12);
    let team = ModelConfig::UnicycleTeam { agents: 3 };
    let quad = ModelConfig::quadrotor(QuadrotorParams::default());
    let cases: Vec<(&'static str, ModelConfig, Obstacle)> = vec![
        ("rotated_rectangle", ModelConfig::Unicycle, Obstacle::new(random_rect(&mut rng))),
        (
            "horseshoe_rect",
            ModelConfig::Unicycle,
            Obstacle::new(Shape::HorseshoeRect {
                center: [0.0, 0.75],
                a: 1.0,
                b: 2.0,
                s: 1.0,
            }),
        ),
        (
            "diamond",
            team.clone(),
            Obstacle::new(Shape::Diamond {
                center: [0.0, 1.15],
                size: 0.9,
                margin: 0.075,
            })
            .for_agent(1),
        ),
        (
            "sphere",
            quad.clone(),
            Obstacle::new(Shape::Sphere {
                center: [0.3, -0.2, 0.1],
                radius: 0.5,
            }),
        ),
        (
            "moving_ellipsoid",
            quad.clone(),
            Obstacle::new(Shape::MovingEllipsoid {
                start: [0.5, 0.0, 0.0],
                travel: [1.0, -2.0, 0.5],
                axes: [0.3, 0.5, 0.7],
                period: 7.0,
            }),
        ),
        (
            "boundary",
            team.clone(),
            Obstacle::new(Shape::Boundary {
                axis: 1,
                bound: 1.0,
                side: WallSide::Upper,
                margin: 0.075,
            })
            .for_agent(2),
        ),
        (
            "pairwise_collide",
            team.clone(),
            Obstacle::new(Shape::PairwiseDistance {
                other: 2,
                radius: 0.15,
                mode: DistanceMode::Collide,
            }),
        ),
        (
            "pairwise_connect",
            team,
            Obstacle::new(Shape::PairwiseDistance {
                other: 0,
                radius: 0.3,
                mode: DistanceMode::Connect,
            })
            .for_agent(1),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, model, obstacle)| {
            let h = obstacle.safety(&model, 0.03);
            let pos = model.position_index(obstacle.agent);
            let mut worst = 0.0f64;
            let mut checked = 0;
            while checked < 100 {
                let x = random_vector(&mut rng, model.state_dim(), -3.0, 3.0);
                if kink_distance(&obstacle.shape, [x[pos[0]], x[pos[1]]]) < KINK_MARGIN {
                    continue;
                }
                let k = rng.random_range(0..400);
                let fd = fd_gradient(|y| h.eval(k, y), &x, 1e-6);
                let g = DMatrix::from_row_slice(1, x.len(), h.gradient(k, &x).as_slice());
                worst = worst.max(mixed_error(&fd, &g));
                checked += 1;
            }
            (name, worst)
        })
        .collect()
}

/// Max mixed error of the AL stage gradient and the scalar penalty
/// derivatives against central differences.
pub fn al_fd_error() -> f64 {
    let mut rng = rng(13);
    let model = ModelConfig::Unicycle;
    let constraints: Vec<SharedSafety> = (0..3)
        .map(|_| Obstacle::new(random_rect(&mut rng)).safety(&model, 0.01))
        .collect();
    let base = QuadraticCost::from_diagonals(
        &[1.0, 2.0, 0.5],
        &[0.1, 0.2],
        &[10.0, 10.0, 0.0],
        Reference::Fixed(DVector::from_vec(vec![0.5, -0.5, 0.0])),
        10,
    )
    .unwrap();
    let mut state = ALState::new(10, constraints.len(), &ALSettings::default());
    let mut worst = 0.0f64;
    for _ in 0..100 {
        for lams in state.multipliers.iter_mut() {
            for l in lams.iter_mut() {
                *l = uniform(&mut rng, 0.0, 20.0);
            }
        }
        state.rho = uniform(&mut rng, 1.0, 100.0);
        let cost = ALCost {
            base: &base,
            constraints: &constraints,
            state: &state,
        };
        let k = rng.random_range(1..10);
        let x = random_vector(&mut rng, 3, -3.0, 3.0);
        let u = random_vector(&mut rng, 2, -3.0, 3.0);
        let kinked = constraints.iter().enumerate().any(|(i, h)| {
            let shifted = state.multipliers[k][i] - state.rho * h.eval(k, &x);
            shifted.abs() < 1e-3 || kink_distance_any(h.as_ref(), k, &x)
        });
        if kinked {
            continue;
        }
        let e = cost.running_expansion(k, &x, &u);
        let fd = fd_gradient(|y| cost.running(k, y, &u), &x, 1e-6);
        worst = worst.max(mixed_error(&fd, &DMatrix::from_row_slice(1, 3, e.l_x.as_slice())));

        let (lam, rho) = (uniform(&mut rng, 0.0, 10.0), state.rho);
        let hv = uniform(&mut rng, -3.0, 3.0);
        if (lam - rho * hv).abs() > 1e-3 {
            let eps = 1e-6;
            let (_, d1, d2) = al_cost_terms(hv, lam, rho);
            let fd1 = (al_cost_terms(hv + eps, lam, rho).0 - al_cost_terms(hv - eps, lam, rho).0) / (2.0 * eps);
            let fd2 = (al_cost_terms(hv + eps, lam, rho).1 - al_cost_terms(hv - eps, lam, rho).1) / (2.0 * eps);
            worst = worst
                .max((fd1 - d1).abs() / d1.abs().max(1.0))
                .max((fd2 - d2).abs() / d2.abs().max(1.0));
        }
    }
    worst
}

/// The L1 gradient is piecewise constant; a point is near a kink when a
/// small perturbation changes it.
fn kink_distance_any(h: &dyn SafetyFunction, k: usize, x: &DVector<f64>) -> bool {
    let g = h.gradient(k, x);
    (0..x.len()).any(|i| {
        [-1e-3, 1e-3].iter().any(|d| {
            let mut y = x.clone();
            y[i] += d;
            (h.gradient(k, &y) - &g).amax() > 1e-6 * (1.0 + g.amax())
        })
    })
}

/// `x_{k+1} = A x_k + B u_k`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Dynamics for Linear {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn dt(&self) -> f64 {
        1.0
    }
    fn step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
    fn jacobians(&self, _k: usize, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

pub struct Lq {
    pub sys: Linear,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub horizon: usize,
}

pub fn random_lq(seed: u64) -> Lq {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=n);
    let horizon = rng.random_range(1..=50);
    let a = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| uniform(&mut rng, -0.15, 0.15));
    let b = DMatrix::from_fn(n, m, |_, _| uniform(&mut rng, -1.0, 1.0));
    Lq {
        sys: Linear { a, b },
        q: random_psd(&mut rng, n, 0.0),
        r: random_psd(&mut rng, m, 0.1),
        s: random_psd(&mut rng, n, 0.0),
        x0: random_vector(&mut rng, n, -2.0, 2.0),
        horizon,
    }
}

/// Backward Riccati recursion for `Σ xᵀQx + uᵀRu + x_NᵀSx_N`, returning
/// the optimal cost from `x0` and the first control.
pub fn riccati(lq: &Lq) -> (f64, DVector<f64>) {
    let (a, b) = (&lq.sys.a, &lq.sys.b);
    let mut p = lq.s.clone();
    let mut gain = DMatrix::zeros(b.ncols(), a.nrows());
    for _ in 0..lq.horizon {
        let bt_p = b.transpose() * &p;
        let lhs = &lq.r + &bt_p * b;
        gain = lhs.lu().solve(&(&bt_p * a)).unwrap();
        p = &lq.q + a.transpose() * &p * a - a.transpose() * &p * b * &gain;
        p = (&p + p.transpose()) * 0.5;
    }
    (lq.x0.dot(&(&p * &lq.x0)), -(gain * &lq.x0))
}

/// `(|ΔJ|, ‖Δu_0‖∞)` between the DDP solution and the Riccati oracle.
pub fn lqr_gap(seed: u64) -> (f64, f64) {
    let lq = random_lq(seed);
    let (cost_star, u0_star) = riccati(&lq);
    let n = lq.sys.state_dim();
    let m = lq.sys.control_dim();
    let problem = Problem {
        dynamics: Arc::new(lq.sys.clone()),
        cost: QuadraticCost::new(
            lq.q.clone(),
            lq.r.clone(),
            lq.s.clone(),
            Reference::Fixed(DVector::zeros(n)),
            lq.horizon,
        )
        .unwrap(),
        constraints: Vec::new(),
        x0: lq.x0.clone(),
        limits: None,
    };
    let settings = SolverSettings {
        conv_tol: 1e-13,
        max_iters: 50,
        ..SolverSettings::default()
    };
    let res = solve(&problem, &vec![DVector::zeros(m); lq.horizon], &settings).unwrap();
    let traj = &res.trajectory;
    (
        (traj.total_cost() - cost_star).abs(),
        (&traj.controls[0] - u0_star).amax(),
    )
}

/// One random augmented backward step: `(‖(Q̂_uu − Q_uu) − f_uᵀ H f_u‖∞,
/// λ_min(Q̂_uu − Q_uu))`, where `H = Σ_j p_w,j ∇β_j ∇β_jᵀ` and `p_w,j` is the
/// value Hessian entry on barrier state `j`.
pub fn self_regularization_case(seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let groups = rng.random_range(1..=2);
    let specs = random_unicycle_barriers(&mut rng, groups);
    let base: Arc<dyn Dynamics> = Arc::new(Unicycle::new(uniform(&mut rng, 0.01, 0.1)));
    let aug = embed(base.clone(), specs.clone()).unwrap();

    let x = DVector::from_vec(vec![
        uniform(&mut rng, -3.0, 3.0),
        uniform(&mut rng, -3.0, 3.0),
        uniform(&mut rng, -3.0, 3.0),
    ]);
    let u = random_vector(&mut rng, 2, -5.0, 5.0);
    let s_phys = random_psd(&mut rng, 3, 0.0);
    let r = random_psd(&mut rng, 2, 0.1);
    let p_w: Vec<f64> = (0..groups).map(|_| uniform(&mut rng, 0.01, 10.0)).collect();
    let mut s_aug = DMatrix::zeros(3 + groups, 3 + groups);
    s_aug.view_mut((0, 0), (3, 3)).copy_from(&s_phys);
    for (j, w) in p_w.iter().enumerate() {
        s_aug[(3 + j, 3 + j)] = *w;
    }

    let q_uu = |dynamics: &dyn Dynamics, s: DMatrix<f64>, x0: DVector<f64>| {
        let n = s.nrows();
        let cost = QuadraticCost::new(DMatrix::zeros(n, n), r.clone(), s, Reference::Fixed(DVector::zeros(n)), 1).unwrap();
        let mut traj = rollout(dynamics, &x0, std::slice::from_ref(&u), None).unwrap();
        traj.evaluate(&cost, &[]);
        let (_, phi_xx) = cost.terminal_expansion(traj.terminal());
        (backward_pass(&traj, dynamics, &cost, 0.0).unwrap().q_uu[0].clone(), phi_xx)
    };
    let (plain, _) = q_uu(base.as_ref(), s_phys.clone(), x.clone());
    let (hat, phi_xx) = q_uu(&aug, s_aug, aug.augment_state(0, &x).unwrap());

    let next = base.step(0, &x, &u);
    let (_, f_u) = base.jacobians(0, &x, &u);
    let mut h = DMatrix::zeros(3, 3);
    for (j, spec) in specs.iter().enumerate() {
        h += barrier_hessian_term_weighted(spec, 1, &next, phi_xx[(3 + j, 3 + j)]).unwrap();
    }
    let diff = &hat - &plain;
    let predicted = f_u.transpose() * h * &f_u;
    let min_eig = diff.clone().symmetric_eigenvalues().min();
    ((&diff - predicted).amax(), min_eig)
}
