//! Dynamics models, discretized with explicit Euler.
//!
//! State orderings:
//!
//! - [`Unicycle`]: `(p_x, p_y, γ)`, controls `(v, ω)`.
//! - [`Quadrotor`]: `(x, y, z, φ, θ, ψ, ẋ, ẏ, ż, p, q, r)`, controls
//!   `(F, τ_φ, τ_θ, τ_ψ)` (collective thrust and body torques).
//! - [`UnicycleTeam`]: unicycle states stacked per agent, `(p_x, p_y, γ)` × n.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problem::Dynamics;
use crate::{Error, Result};

/// Euler step of `ṗ_x = v cos γ, ṗ_y = v sin γ, γ̇ = ω`.
pub fn unicycle_step(x: &[f64], u: &[f64], dt: f64) -> [f64; 3] {
    let (c, s) = (x[2].cos(), x[2].sin());
    [x[0] + dt * u[0] * c, x[1] + dt * u[0] * s, x[2] + dt * u[1]]
}

fn unicycle_jacobians(x: &[f64], u: &[f64], dt: f64) -> ([[f64; 3]; 3], [[f64; 2]; 3]) {
    let (c, s) = (x[2].cos(), x[2].sin());
    (
        [
            [1.0, 0.0, -dt * u[0] * s],
            [0.0, 1.0, dt * u[0] * c],
            [0.0, 0.0, 1.0],
        ],
        [[dt * c, 0.0], [dt * s, 0.0], [0.0, dt]],
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unicycle {
    pub dt: f64,
}

impl Unicycle {
    pub fn new(dt: f64) -> Self {
        Self { dt }
    }
}

impl Dynamics for Unicycle {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&unicycle_step(x.as_slice(), u.as_slice(), self.dt))
    }

    fn jacobians(
        &self,
        _k: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let (fx, fu) = unicycle_jacobians(x.as_slice(), u.as_slice(), self.dt);
        (
            DMatrix::from_fn(3, 3, |i, j| fx[i][j]),
            DMatrix::from_fn(3, 2, |i, j| fu[i][j]),
        )
    }
}

/// `n_agents` independent unicycles integrated side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnicycleTeam {
    pub n_agents: usize,
    pub dt: f64,
}

impl UnicycleTeam {
    pub fn new(n_agents: usize, dt: f64) -> Self {
        Self { n_agents, dt }
    }
}

impl Dynamics for UnicycleTeam {
    fn state_dim(&self) -> usize {
        3 * self.n_agents
    }
    fn control_dim(&self) -> usize {
        2 * self.n_agents
    }
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut next = DVector::zeros(self.state_dim());
        for a in 0..self.n_agents {
            let xa = &x.as_slice()[3 * a..3 * a + 3];
            let ua = &u.as_slice()[2 * a..2 * a + 2];
            next.rows_mut(3 * a, 3)
                .copy_from_slice(&unicycle_step(xa, ua, self.dt));
        }
        next
    }

    fn jacobians(
        &self,
        _k: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut fx = DMatrix::zeros(self.state_dim(), self.state_dim());
        let mut fu = DMatrix::zeros(self.state_dim(), self.control_dim());
        for a in 0..self.n_agents {
            let (ja, ba) = unicycle_jacobians(
                &x.as_slice()[3 * a..3 * a + 3],
                &u.as_slice()[2 * a..2 * a + 2],
                self.dt,
            );
            for i in 0..3 {
                for j in 0..3 {
                    fx[(3 * a + i, 3 * a + j)] = ja[i][j];
                }
                for j in 0..2 {
                    fu[(3 * a + i, 2 * a + j)] = ba[i][j];
                }
            }
        }
        (fx, fu)
    }
}

/// Rigid-body quadrotor parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub gravity: f64,
    /// Diagonal inertia `(I_x, I_y, I_z)`.
    pub inertia: [f64; 3],
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: 9.81,
            inertia: [0.01, 0.01, 0.02],
        }
    }
}

/// Pitch angles closer than this to ±π/2 are rejected.
pub const GIMBAL_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrotor {
    pub params: QuadrotorParams,
    pub dt: f64,
}

impl Quadrotor {
    pub fn new(params: QuadrotorParams, dt: f64) -> Self {
        Self { params, dt }
    }

    pub fn hover_thrust(&self) -> f64 {
        self.params.mass * self.params.gravity
    }

    pub fn hover_control(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.hover_thrust(), 0.0, 0.0, 0.0])
    }

    /// Continuous-time state derivative.
    pub fn derivative(&self, x: &[f64], u: &[f64]) -> [f64; 12] {
        let QuadrotorParams {
            mass,
            gravity,
            inertia: [ix, iy, iz],
        } = self.params;
        let (phi, theta, psi) = (x[3], x[4], x[5]);
        let (p, q, r) = (x[9], x[10], x[11]);
        let (sph, cph) = phi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let (sps, cps) = psi.sin_cos();
        let tth = sth / cth;
        let a = u[0] / mass;
        [
            x[6],
            x[7],
            x[8],
            p + sph * tth * q + cph * tth * r,
            cph * q - sph * r,
            (sph * q + cph * r) / cth,
            a * (cph * sth * cps + sph * sps),
            a * (cph * sth * sps - sph * cps),
            a * cph * cth - gravity,
            ((iy - iz) * q * r + u[1]) / ix,
            ((iz - ix) * p * r + u[2]) / iy,
            ((ix - iy) * p * q + u[3]) / iz,
        ]
    }

    /// Continuous-time Jacobians `(∂ẋ/∂x, ∂ẋ/∂u)`.
    pub fn derivative_jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let QuadrotorParams {
            mass,
            inertia: [ix, iy, iz],
            ..
        } = self.params;
        let (phi, theta, psi) = (x[3], x[4], x[5]);
        let (p, q, r) = (x[9], x[10], x[11]);
        let (sph, cph) = phi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let (sps, cps) = psi.sin_cos();
        let tth = sth / cth;
        let sec2 = 1.0 / (cth * cth);
        let a = u[0] / mass;

        let mut jx = DMatrix::zeros(12, 12);
        let mut ju = DMatrix::zeros(12, 4);
        jx[(0, 6)] = 1.0;
        jx[(1, 7)] = 1.0;
        jx[(2, 8)] = 1.0;

        // φ̇ = p + sφ tθ q + cφ tθ r
        jx[(3, 3)] = cph * tth * q - sph * tth * r;
        jx[(3, 4)] = (sph * q + cph * r) * sec2;
        jx[(3, 9)] = 1.0;
        jx[(3, 10)] = sph * tth;
        jx[(3, 11)] = cph * tth;
        // θ̇ = cφ q − sφ r
        jx[(4, 3)] = -sph * q - cph * r;
        jx[(4, 10)] = cph;
        jx[(4, 11)] = -sph;
        // ψ̇ = (sφ q + cφ r)/cθ
        jx[(5, 3)] = (cph * q - sph * r) / cth;
        jx[(5, 4)] = (sph * q + cph * r) * sth * sec2;
        jx[(5, 10)] = sph / cth;
        jx[(5, 11)] = cph / cth;

        // Translational accelerations.
        let ax = cph * sth * cps + sph * sps;
        let ay = cph * sth * sps - sph * cps;
        let az = cph * cth;
        jx[(6, 3)] = a * (-sph * sth * cps + cph * sps);
        jx[(6, 4)] = a * cph * cth * cps;
        jx[(6, 5)] = a * (-cph * sth * sps + sph * cps);
        jx[(7, 3)] = a * (-sph * sth * sps - cph * cps);
        jx[(7, 4)] = a * cph * cth * sps;
        jx[(7, 5)] = a * (cph * sth * cps + sph * sps);
        jx[(8, 3)] = -a * sph * cth;
        jx[(8, 4)] = -a * cph * sth;
        ju[(6, 0)] = ax / mass;
        ju[(7, 0)] = ay / mass;
        ju[(8, 0)] = az / mass;

        // Body rates.
        jx[(9, 10)] = (iy - iz) * r / ix;
        jx[(9, 11)] = (iy - iz) * q / ix;
        jx[(10, 9)] = (iz - ix) * r / iy;
        jx[(10, 11)] = (iz - ix) * p / iy;
        jx[(11, 9)] = (ix - iy) * q / iz;
        jx[(11, 10)] = (ix - iy) * p / iz;
        ju[(9, 1)] = 1.0 / ix;
        ju[(10, 2)] = 1.0 / iy;
        ju[(11, 3)] = 1.0 / iz;
        (jx, ju)
    }
}

/// Euler step of the 12-state quadrotor. Fails near the pitch singularity.
pub fn quadrotor_step(
    model: &Quadrotor,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let theta = x[4];
    if theta.abs() >= std::f64::consts::FRAC_PI_2 - GIMBAL_MARGIN {
        return Err(Error::GimbalLock { theta });
    }
    Ok(model.step(0, x, u))
}

impl Dynamics for Quadrotor {
    fn state_dim(&self) -> usize {
        12
    }
    fn control_dim(&self) -> usize {
        4
    }
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let xd = self.derivative(x.as_slice(), u.as_slice());
        DVector::from_iterator(12, x.iter().zip(xd).map(|(xi, di)| xi + self.dt * di))
    }

    fn try_step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        quadrotor_step(self, x, u)
    }

    fn jacobians(
        &self,
        _k: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let (jx, ju) = self.derivative_jacobians(x.as_slice(), u.as_slice());
        (DMatrix::identity(12, 12) + jx * self.dt, ju * self.dt)
    }
}
