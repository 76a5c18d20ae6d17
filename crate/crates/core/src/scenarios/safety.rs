//! Safety functions for the shipped environments.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::problem::SafetyFunction;

/// `sign` with `sign(0) = 0`, used as the subgradient on L1 kinks.
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Rectangle in L1 form:
/// `h = |a·u + b·v| + |a·u − b·v| − s` with
/// `u = Δx cos θ + Δy sin θ`, `v = Δx sin θ − Δy cos θ`, `Δ = p − c`.
///
/// The zero level set is the rectangle `|u| ≤ s/(2a)`, `|v| ≤ s/(2b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Rectangle {
    pub center: [f64; 2],
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub s: f64,
    /// State indices of `(p_x, p_y)`.
    pub index: [usize; 2],
}

impl L1Rectangle {
    fn frame(&self, p: [f64; 2]) -> (f64, f64, f64, f64) {
        let (sin, cos) = self.theta.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let u = dx * cos + dy * sin;
        let v = dx * sin - dy * cos;
        (u, v, sin, cos)
    }

    pub fn value_at(&self, p: [f64; 2]) -> f64 {
        let (u, v, _, _) = self.frame(p);
        (self.a * u + self.b * v).abs() + (self.a * u - self.b * v).abs() - self.s
    }

    pub fn gradient_at(&self, p: [f64; 2]) -> [f64; 2] {
        let (u, v, sin, cos) = self.frame(p);
        let s1 = sign0(self.a * u + self.b * v);
        let s2 = sign0(self.a * u - self.b * v);
        // ∂u/∂p = (cos, sin), ∂v/∂p = (sin, −cos)
        let du = self.a * (s1 + s2);
        let dv = self.b * (s1 - s2);
        [du * cos + dv * sin, du * sin - dv * cos]
    }

    /// Corners of the zero level set, counter-clockwise.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let hu = self.s / (2.0 * self.a);
        let hv = self.s / (2.0 * self.b);
        let (sin, cos) = self.theta.sin_cos();
        // The (u, v) map is its own inverse.
        let to_world = |u: f64, v: f64| {
            [
                self.center[0] + u * cos + v * sin,
                self.center[1] + u * sin - v * cos,
            ]
        };
        [
            to_world(hu, hv),
            to_world(-hu, hv),
            to_world(-hu, -hv),
            to_world(hu, -hv),
        ]
    }
}

impl SafetyFunction for L1Rectangle {
    fn min_state_dim(&self) -> usize {
        self.index[0].max(self.index[1]) + 1
    }

    fn eval(&self, _k: usize, x: &DVector<f64>) -> f64 {
        self.value_at([x[self.index[0]], x[self.index[1]]])
    }

    fn gradient(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        let g = self.gradient_at([x[self.index[0]], x[self.index[1]]]);
        let mut out = DVector::zeros(x.len());
        out[self.index[0]] = g[0];
        out[self.index[1]] = g[1];
        out
    }

    fn hessian(&self, _k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}

/// Randomized-field rectangle:
/// `h = |u/r + v| + |u/r − v| − s` in the obstacle frame rotated by `θ`.
pub fn h_rotated_rectangle(center: [f64; 2], s: f64, r: f64, theta: f64, p: [f64; 2]) -> f64 {
    rotated_rectangle(center, s, r, theta, [0, 1]).value_at(p)
}

pub fn rotated_rectangle(center: [f64; 2], s: f64, r: f64, theta: f64, index: [usize; 2]) -> L1Rectangle {
    L1Rectangle {
        center,
        theta,
        a: 1.0 / r,
        b: 1.0,
        s,
        index,
    }
}

/// The three walls of the corridor environment.
pub fn horseshoe_walls(index: [usize; 2]) -> [L1Rectangle; 3] {
    let wall = |cx: f64, cy: f64, a: f64, b: f64| L1Rectangle {
        center: [cx, cy],
        theta: 0.0,
        a,
        b,
        s: 1.0,
        index,
    };
    [
        wall(0.5, 0.0, 3.0, 0.5),
        wall(0.0, 0.75, 1.0, 2.0),
        wall(-0.5, 0.0, 3.0, 0.5),
    ]
}

/// `(h1, h2, h3)` of the corridor walls at position `p`.
pub fn h_horseshoe(p: [f64; 2]) -> (f64, f64, f64) {
    let [w1, w2, w3] = horseshoe_walls([0, 1]);
    (w1.value_at(p), w2.value_at(p), w3.value_at(p))
}

/// `h = ‖p − o‖² − r²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub index: [usize; 3],
}

impl SafetyFunction for Sphere {
    fn min_state_dim(&self) -> usize {
        self.index.iter().max().unwrap() + 1
    }

    fn eval(&self, _k: usize, x: &DVector<f64>) -> f64 {
        (0..3)
            .map(|i| (x[self.index[i]] - self.center[i]).powi(2))
            .sum::<f64>()
            - self.radius * self.radius
    }

    fn gradient(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for i in 0..3 {
            g[self.index[i]] = 2.0 * (x[self.index[i]] - self.center[i]);
        }
        g
    }

    fn hessian(&self, _k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        for i in 0..3 {
            h[(self.index[i], self.index[i])] = 2.0;
        }
        h
    }
}

/// Ellipsoid whose center oscillates on a segment:
/// `p_o(t) = p_{o,0} + l·(1 − cos(2πt/P))/2`, evaluated at `t = k·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingEllipsoid {
    pub start: [f64; 3],
    pub travel: [f64; 3],
    pub axes: [f64; 3],
    pub period: f64,
    pub dt: f64,
    pub index: [usize; 3],
}

impl MovingEllipsoid {
    pub fn center_at(&self, t: f64) -> [f64; 3] {
        let w = (1.0 - (2.0 * PI * t / self.period).cos()) / 2.0;
        [
            self.start[0] + self.travel[0] * w,
            self.start[1] + self.travel[1] * w,
            self.start[2] + self.travel[2] * w,
        ]
    }

    pub fn value_at(&self, p: [f64; 3], t: f64) -> f64 {
        let c = self.center_at(t);
        (0..3)
            .map(|i| ((p[i] - c[i]) / self.axes[i]).powi(2))
            .sum::<f64>()
            - 1.0
    }

    fn position(&self, x: &DVector<f64>) -> [f64; 3] {
        [x[self.index[0]], x[self.index[1]], x[self.index[2]]]
    }
}

/// Moving-ellipsoid safety value at time `t`.
pub fn h_moving_ellipsoid(obs: &MovingEllipsoid, p: [f64; 3], t: f64) -> f64 {
    obs.value_at(p, t)
}

impl SafetyFunction for MovingEllipsoid {
    fn min_state_dim(&self) -> usize {
        self.index.iter().max().unwrap() + 1
    }

    fn eval(&self, k: usize, x: &DVector<f64>) -> f64 {
        self.value_at(self.position(x), k as f64 * self.dt)
    }

    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        let c = self.center_at(k as f64 * self.dt);
        let mut g = DVector::zeros(x.len());
        for i in 0..3 {
            g[self.index[i]] = 2.0 * (x[self.index[i]] - c[i]) / (self.axes[i] * self.axes[i]);
        }
        g
    }

    fn hessian(&self, _k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        for i in 0..3 {
            h[(self.index[i], self.index[i])] = 2.0 / (self.axes[i] * self.axes[i]);
        }
        h
    }

    fn time_varying(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Keep agents at least `radius` apart: `h = d² − radius²`.
    Collide,
    /// Keep agents within `radius`: `h = radius² − d²`.
    Connect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseDistance {
    pub first: [usize; 2],
    pub second: [usize; 2],
    pub radius: f64,
    pub mode: DistanceMode,
}

impl PairwiseDistance {
    fn sign(&self) -> f64 {
        match self.mode {
            DistanceMode::Collide => 1.0,
            DistanceMode::Connect => -1.0,
        }
    }
}

impl SafetyFunction for PairwiseDistance {
    fn min_state_dim(&self) -> usize {
        self.first.iter().chain(&self.second).max().unwrap() + 1
    }

    fn eval(&self, _k: usize, x: &DVector<f64>) -> f64 {
        let d2: f64 = (0..2)
            .map(|i| (x[self.first[i]] - x[self.second[i]]).powi(2))
            .sum();
        self.sign() * (d2 - self.radius * self.radius)
    }

    fn gradient(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for i in 0..2 {
            let d = 2.0 * self.sign() * (x[self.first[i]] - x[self.second[i]]);
            g[self.first[i]] += d;
            g[self.second[i]] -= d;
        }
        g
    }

    fn hessian(&self, _k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        let s = 2.0 * self.sign();
        for i in 0..2 {
            let (a, b) = (self.first[i], self.second[i]);
            h[(a, a)] += s;
            h[(b, b)] += s;
            h[(a, b)] -= s;
            h[(b, a)] -= s;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallSide {
    /// Safe side is `x[index] > bound + margin`.
    Lower,
    /// Safe side is `x[index] < bound − margin`.
    Upper,
}

/// Signed distance to one axis-aligned wall minus a margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub index: usize,
    pub bound: f64,
    pub side: WallSide,
    pub margin: f64,
}

impl SafetyFunction for Wall {
    fn min_state_dim(&self) -> usize {
        self.index + 1
    }

    fn eval(&self, _k: usize, x: &DVector<f64>) -> f64 {
        match self.side {
            WallSide::Lower => x[self.index] - self.bound - self.margin,
            WallSide::Upper => self.bound - x[self.index] - self.margin,
        }
    }

    fn gradient(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        g[self.index] = match self.side {
            WallSide::Lower => 1.0,
            WallSide::Upper => -1.0,
        };
        g
    }

    fn hessian(&self, _k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rectangle_center_and_edge() {
        assert_eq!(h_rotated_rectangle([0.0, 0.0], 1.0, 1.0, 0.0, [0.0, 0.0]), -1.0);
        assert_eq!(h_rotated_rectangle([0.0, 0.0], 1.0, 1.0, 0.0, [1.0, 0.0]), 1.0);
    }

    #[test]
    fn horseshoe_points() {
        assert_eq!(h_horseshoe([0.5, 0.0]).0, -1.0);
        assert_eq!(h_horseshoe([0.0, 0.75]).1, -1.0);
        let (h1, h2, h3) = h_horseshoe([1.0, -0.5]);
        assert!(h1 > 0.0 && h2 > 0.0 && h3 > 0.0);
        // The goal sits inside the horseshoe but outside every wall.
        let (h1, h2, h3) = h_horseshoe([0.0, 0.0]);
        assert!(h1 > 0.0 && h2 > 0.0 && h3 > 0.0);
    }

    #[test]
    fn kink_subgradient_is_zero() {
        let rect = rotated_rectangle([0.0, 0.0], 1.0, 1.0, 0.0, [0, 1]);
        assert_eq!(rect.gradient_at([0.0, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn rectangle_corners_lie_on_boundary() {
        let rect = rotated_rectangle([1.0, -2.0], 1.3, 2.5, 0.7, [0, 1]);
        for c in rect.corners() {
            assert!(rect.value_at(c).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_ellipsoid_center_schedule() {
        let obs = MovingEllipsoid {
            start: [1.0, 2.0, 3.0],
            travel: [0.5, -1.0, 2.0],
            axes: [0.3, 0.5, 0.7],
            period: 6.0,
            dt: 0.03,
            index: [0, 1, 2],
        };
        assert_eq!(obs.center_at(0.0), obs.start);
        let half = obs.center_at(3.0);
        for i in 0..3 {
            assert!((half[i] - (obs.start[i] + obs.travel[i])).abs() < 1e-12);
        }
        let surface = [1.3, 2.0, 3.0];
        assert!(h_moving_ellipsoid(&obs, surface, 0.0).abs() < 1e-12);
        assert!(obs.time_varying());
    }

    #[test]
    fn pairwise_modes() {
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.2, 0.0, 0.0]);
        let collide = PairwiseDistance {
            first: [0, 1],
            second: [3, 4],
            radius: 0.15,
            mode: DistanceMode::Collide,
        };
        let connect = PairwiseDistance {
            radius: 0.3,
            mode: DistanceMode::Connect,
            ..collide
        };
        assert!((collide.eval(0, &x) - (0.04 - 0.0225)).abs() < 1e-15);
        assert!((connect.eval(0, &x) - (0.09 - 0.04)).abs() < 1e-15);
    }
}
