//! Barrier values and gradient fields around a 2-D ellipse, for plotting
//! how classical and tolerant barriers shape the landscape.

use serde::{Deserialize, Serialize};

use crate::barriers::{barrier_derivs, barrier_eval, BarrierFamily, TolerantParams};
use crate::{Error, Result};

/// `h = (Δx/a)² + (Δy/b)² − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub axes: [f64; 2],
}

impl Ellipse {
    pub fn h(&self, p: [f64; 2]) -> f64 {
        let u = (p[0] - self.center[0]) / self.axes[0];
        let v = (p[1] - self.center[1]) / self.axes[1];
        u * u + v * v - 1.0
    }

    pub fn grad_h(&self, p: [f64; 2]) -> [f64; 2] {
        [
            2.0 * (p[0] - self.center[0]) / (self.axes[0] * self.axes[0]),
            2.0 * (p[1] - self.center[1]) / (self.axes[1] * self.axes[1]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        let at = |r: [f64; 2], n: usize, i: usize| {
            if n <= 1 {
                (r[0] + r[1]) / 2.0
            } else {
                r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64
            }
        };
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| [at(self.x, self.nx, i), at(self.y, self.ny, j)]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub p: [f64; 2],
    pub h: f64,
    /// `None` where a classical barrier is undefined (`h ≤ 0`).
    pub value: Option<f64>,
    /// `−∇β`.
    pub arrow: Option<[f64; 2]>,
}

pub fn barrier_field(
    family: BarrierFamily,
    params: &TolerantParams,
    ellipse: &Ellipse,
    grid: &Grid,
) -> Result<Vec<FieldSample>> {
    if !(ellipse.axes[0] > 0.0 && ellipse.axes[1] > 0.0) {
        return Err(Error::InvalidParameter("ellipse axes must be > 0".into()));
    }
    if family == BarrierFamily::Tolerant {
        params.validate()?;
    }
    Ok(grid
        .points()
        .map(|p| {
            let h = ellipse.h(p);
            let value = barrier_eval(family, params, h).ok();
            let arrow = barrier_derivs(family, params, h).ok().map(|(d1, _)| {
                let g = ellipse.grad_h(p);
                [-d1 * g[0], -d1 * g[1]]
            });
            FieldSample { p, h, value, arrow }
        })
        .collect())
}

/// `(h, B(h), B'(h))` on `n` evenly spaced points; `None` outside the domain.
pub fn barrier_curve(
    family: BarrierFamily,
    params: &TolerantParams,
    h_range: [f64; 2],
    n: usize,
) -> Vec<(f64, Option<f64>, Option<f64>)> {
    (0..n)
        .map(|i| {
            let t = if n <= 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            let h = h_range[0] + (h_range[1] - h_range[0]) * t;
            (
                h,
                barrier_eval(family, params, h).ok(),
                barrier_derivs(family, params, h).ok().map(|d| d.0),
            )
        })
        .collect()
}
