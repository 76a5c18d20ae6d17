//! Barrier functions and the barrier-state embedding.
//!
//! A barrier state `β_{k+1} = Σ_i B(h_i(k+1, f(k, x_k, u_k)))` is appended to
//! the physical state. Classical barriers (inverse, log) blow up on the
//! boundary of the safe set and are undefined outside it. The tolerant
//! barrier `B̃(h) = p·σ(h) + m·σ⁺(h)` with
//!
//! ```text
//! σ(h)  = 1 / (1 + exp(c1·h))
//! σ⁺(h) = (1/c2)·ln(1 + exp(−c2·h))
//! ```
//!
//! is finite for every `h`, has slope tending to `−m` deep inside the unsafe
//! set, and vanishes far inside the safe set.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problem::{Dynamics, SharedSafety};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierFamily {
    Inverse,
    Log,
    Tolerant,
}

impl BarrierFamily {
    pub fn is_classical(self) -> bool {
        !matches!(self, BarrierFamily::Tolerant)
    }
}

impl fmt::Display for BarrierFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BarrierFamily::Inverse => "inverse",
            BarrierFamily::Log => "log",
            BarrierFamily::Tolerant => "tolerant",
        })
    }
}

/// Shape parameters of the tolerant barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerantParams {
    /// Sigmoid height.
    pub p: f64,
    /// Limiting slope magnitude inside the unsafe set.
    pub m: f64,
    /// Sigmoid sharpness.
    pub c1: f64,
    /// Softplus sharpness.
    pub c2: f64,
}

impl TolerantParams {
    pub fn new(p: f64, m: f64, c1: f64, c2: f64) -> Result<Self> {
        let params = Self { p, m, c1, c2 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { p, m, c1, c2 } = *self;
        if !(p >= 0.0 && m >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerant barrier needs p, m >= 0 (got p={p}, m={m})"
            )));
        }
        if p + m <= 0.0 {
            return Err(Error::InvalidParameter(
                "tolerant barrier with p = m = 0 is identically zero".into(),
            ));
        }
        if !(c1 > 0.0 && c2 > 0.0) || !c1.is_finite() || !c2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tolerant barrier needs c1, c2 > 0 (got c1={c1}, c2={c2})"
            )));
        }
        Ok(())
    }
}

impl Default for TolerantParams {
    fn default() -> Self {
        Self {
            p: 500.0,
            m: 500.0,
            c1: 30.0,
            c2: 50.0,
        }
    }
}

/// `ln(1 + e^z)` without overflow for large `|z|`.
fn softplus_unit(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + e^z)`.
fn logistic_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Sigmoid term `σ(h)` and its first two derivatives.
fn sigmoid_terms(c1: f64, h: f64) -> (f64, f64, f64) {
    let s = logistic_neg(c1 * h);
    // 1 − σ computed directly to keep precision when σ ≈ 1.
    let one_minus = logistic_neg(-c1 * h);
    let d1 = -c1 * s * one_minus;
    let d2 = c1 * c1 * s * one_minus * (one_minus - s);
    (s, d1, d2)
}

/// Softplus term `σ⁺(h)` and its first two derivatives.
fn softplus_terms(c2: f64, h: f64) -> (f64, f64, f64) {
    let value = softplus_unit(-c2 * h) / c2;
    let s = logistic_neg(c2 * h);
    let one_minus = logistic_neg(-c2 * h);
    (value, -s, c2 * s * one_minus)
}

fn domain_check(family: BarrierFamily, h: f64) -> Result<()> {
    if family.is_classical() && !(h > 0.0) {
        return Err(Error::BarrierDomain { constraint: 0, h });
    }
    Ok(())
}

/// Barrier value `B(h)`.
///
/// `params` is only read by the tolerant family. The log barrier is
/// `−ln(h / (1 + h))`, positive and vanishing as `h → ∞`.
pub fn barrier_eval(family: BarrierFamily, params: &TolerantParams, h: f64) -> Result<f64> {
    domain_check(family, h)?;
    Ok(match family {
        BarrierFamily::Inverse => 1.0 / h,
        BarrierFamily::Log => h.recip().ln_1p(),
        BarrierFamily::Tolerant => {
            params.p * sigmoid_terms(params.c1, h).0 + params.m * softplus_terms(params.c2, h).0
        }
    })
}

/// `(dB/dh, d²B/dh²)`.
pub fn barrier_derivs(family: BarrierFamily, params: &TolerantParams, h: f64) -> Result<(f64, f64)> {
    domain_check(family, h)?;
    Ok(match family {
        BarrierFamily::Inverse => (-1.0 / (h * h), 2.0 / (h * h * h)),
        BarrierFamily::Log => {
            let a = 1.0 / (1.0 + h);
            let b = 1.0 / h;
            (a - b, b * b - a * a)
        }
        BarrierFamily::Tolerant => {
            let (_, s1, s2) = sigmoid_terms(params.c1, h);
            let (_, sp1, sp2) = softplus_terms(params.c2, h);
            (params.p * s1 + params.m * sp1, params.p * s2 + params.m * sp2)
        }
    })
}

/// One barrier state: a barrier family applied to a group of safety
/// functions whose barrier values are summed.
#[derive(Clone)]
pub struct BarrierSpec {
    pub family: BarrierFamily,
    pub params: TolerantParams,
    pub constraints: Vec<SharedSafety>,
    /// Running-cost weight on this barrier state.
    pub weight: f64,
}

impl BarrierSpec {
    pub fn new(
        family: BarrierFamily,
        params: TolerantParams,
        constraints: Vec<SharedSafety>,
        weight: f64,
    ) -> Result<Self> {
        if family == BarrierFamily::Tolerant {
            params.validate()?;
        }
        if !(weight >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "barrier weight must be >= 0 (got {weight})"
            )));
        }
        Ok(Self {
            family,
            params,
            constraints,
            weight,
        })
    }

    fn with_index<T>(&self, i: usize, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::BarrierDomain { h, .. } => Error::BarrierDomain { constraint: i, h },
            other => other,
        })
    }

    /// `∂β/∂x = Σ_i B'(h_i) ∇h_i` at `(k, x)`.
    pub fn gradient(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(x.len());
        for (i, h) in self.constraints.iter().enumerate() {
            let hv = h.eval(k, x);
            let (d1, _) = self.with_index(i, barrier_derivs(self.family, &self.params, hv))?;
            g.axpy(d1, &h.gradient(k, x), 1.0);
        }
        Ok(g)
    }
}

impl fmt::Debug for BarrierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierSpec")
            .field("family", &self.family)
            .field("params", &self.params)
            .field("constraints", &self.constraints.len())
            .field("weight", &self.weight)
            .finish()
    }
}

/// `Σ_i B(h_i(k, x))` over the spec's constraints.
pub fn barrier_state_of(spec: &BarrierSpec, k: usize, x: &DVector<f64>) -> Result<f64> {
    spec.constraints
        .iter()
        .enumerate()
        .try_fold(0.0, |acc, (i, h)| {
            let b = spec.with_index(i, barrier_eval(spec.family, &spec.params, h.eval(k, x)))?;
            Ok(acc + b)
        })
}

/// Gauss-Newton curvature of the weighted barrier state,
/// `H = w · (∂β/∂x)ᵀ(∂β/∂x)`, using the spec's own weight.
pub fn barrier_hessian_term(spec: &BarrierSpec, k: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    barrier_hessian_term_weighted(spec, k, x, spec.weight)
}

/// [`barrier_hessian_term`] with an explicit weight `p_w`.
pub fn barrier_hessian_term_weighted(
    spec: &BarrierSpec,
    k: usize,
    x: &DVector<f64>,
    weight: f64,
) -> Result<DMatrix<f64>> {
    if weight == 0.0 {
        return Ok(DMatrix::zeros(x.len(), x.len()));
    }
    let g = spec.gradient(k, x)?;
    Ok(&g * g.transpose() * weight)
}

/// A dynamics model with barrier states appended after the physical state.
#[derive(Clone)]
pub struct AugmentedDynamics {
    base: Arc<dyn Dynamics>,
    barriers: Vec<BarrierSpec>,
}

/// Wrap `base` with one barrier state per spec.
pub fn embed(base: Arc<dyn Dynamics>, barriers: Vec<BarrierSpec>) -> Result<AugmentedDynamics> {
    let n = base.state_dim();
    for spec in &barriers {
        for h in &spec.constraints {
            if h.min_state_dim() > n {
                return Err(Error::Dimension {
                    what: "safety function state",
                    expected: n,
                    found: h.min_state_dim(),
                });
            }
        }
    }
    Ok(AugmentedDynamics { base, barriers })
}

impl AugmentedDynamics {
    pub fn base(&self) -> &Arc<dyn Dynamics> {
        &self.base
    }

    pub fn barriers(&self) -> &[BarrierSpec] {
        &self.barriers
    }

    pub fn physical_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn physical(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.physical_dim()).into_owned()
    }

    fn barrier_values(&self, k: usize, x: &DVector<f64>) -> Result<Vec<f64>> {
        self.barriers
            .iter()
            .map(|spec| barrier_state_of(spec, k, x))
            .collect()
    }

    /// `[x; β(k, x)]`. Classical barriers reject an unsafe `x`.
    pub fn augment_state(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        let betas = self.barrier_values(k, x)?;
        Ok(stack(x, &betas))
    }
}

fn stack(x: &DVector<f64>, tail: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() + tail.len(), x.iter().chain(tail).copied())
}

impl Dynamics for AugmentedDynamics {
    fn state_dim(&self) -> usize {
        self.base.state_dim() + self.barriers.len()
    }

    fn control_dim(&self) -> usize {
        self.base.control_dim()
    }

    fn dt(&self) -> f64 {
        self.base.dt()
    }

    /// Classical barriers outside their domain yield `+∞` barrier states.
    fn step(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let next = self.base.step(k, &self.physical(x), u);
        let betas: Vec<f64> = self
            .barriers
            .iter()
            .map(|spec| barrier_state_of(spec, k + 1, &next).unwrap_or(f64::INFINITY))
            .collect();
        stack(&next, &betas)
    }

    fn try_step(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let next = self.base.try_step(k, &self.physical(x), u)?;
        let betas = self.barrier_values(k + 1, &next)?;
        Ok(stack(&next, &betas))
    }

    fn jacobians(
        &self,
        k: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.physical_dim();
        let na = self.state_dim();
        let m = self.control_dim();
        let xp = self.physical(x);
        let (fx, fu) = self.base.jacobians(k, &xp, u);
        let next = self.base.step(k, &xp, u);

        let mut ax = DMatrix::zeros(na, na);
        let mut au = DMatrix::zeros(na, m);
        ax.view_mut((0, 0), (n, n)).copy_from(&fx);
        au.view_mut((0, 0), (n, m)).copy_from(&fu);
        for (j, spec) in self.barriers.iter().enumerate() {
            let g = spec
                .gradient(k + 1, &next)
                .unwrap_or_else(|_| DVector::from_element(n, f64::NAN));
            let gt = g.transpose();
            ax.view_mut((n + j, 0), (1, n)).copy_from(&(&gt * &fx));
            au.view_mut((n + j, 0), (1, m)).copy_from(&(&gt * &fu));
        }
        (ax, au)
    }
}

impl fmt::Debug for AugmentedDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AugmentedDynamics")
            .field("physical_dim", &self.physical_dim())
            .field("barriers", &self.barriers)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::SafetyFunction;

    const PAPER_CORRIDOR: TolerantParams = TolerantParams {
        p: 500.0,
        m: 500.0,
        c1: 30.0,
        c2: 50.0,
    };
    const PAPER_QUAD: TolerantParams = TolerantParams {
        p: 10.0,
        m: 5.0,
        c1: 5.0,
        c2: 5.0,
    };

    #[derive(Debug)]
    struct Constant(f64);

    impl SafetyFunction for Constant {
        fn min_state_dim(&self) -> usize {
            0
        }
        fn eval(&self, _k: usize, _x: &DVector<f64>) -> f64 {
            self.0
        }
        fn gradient(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(x.len())
        }
        fn hessian(&self, _k: usize, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(x.len(), x.len())
        }
    }

    #[test]
    fn tolerant_vanishes_far_inside_safe_set() {
        let params = TolerantParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let b = barrier_eval(BarrierFamily::Tolerant, &params, 100.0).unwrap();
        assert!(b < 1e-40, "{b}");
    }

    #[test]
    fn tolerant_at_boundary() {
        let b = barrier_eval(BarrierFamily::Tolerant, &PAPER_CORRIDOR, 0.0).unwrap();
        let expected = 250.0 + 500.0 * std::f64::consts::LN_2 / 50.0;
        assert!((b - expected).abs() < 1e-12, "{b} vs {expected}");
        assert!((b - 256.931_471_805_599_4).abs() < 1e-9);
    }

    #[test]
    fn tolerant_deep_unsafe_value() {
        // 10/(1+e^-50) + (5/5)·ln(1+e^50); the e^-50 corrections are far below
        // double precision on the result: 10 + 50 + e^-50 − 10e^-50.
        let b = barrier_eval(BarrierFamily::Tolerant, &PAPER_QUAD, -10.0).unwrap();
        assert_eq!(b, 60.0);
    }

    #[test]
    fn inverse_and_log_values() {
        let p = TolerantParams::default();
        assert_eq!(barrier_eval(BarrierFamily::Inverse, &p, 2.0).unwrap(), 0.5);
        let log = barrier_eval(BarrierFamily::Log, &p, 1.0).unwrap();
        assert!((log - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn classical_domain_violation() {
        let p = TolerantParams::default();
        for family in [BarrierFamily::Inverse, BarrierFamily::Log] {
            assert!(matches!(
                barrier_eval(family, &p, 0.0),
                Err(Error::BarrierDomain { .. })
            ));
            assert!(barrier_derivs(family, &p, -1.0).is_err());
        }
        assert!(barrier_eval(BarrierFamily::Tolerant, &p, -1e6).unwrap().is_finite());
    }

    #[test]
    fn tolerant_slope_at_boundary() {
        let (d1, _) = barrier_derivs(BarrierFamily::Tolerant, &PAPER_QUAD, 0.0).unwrap();
        assert!((d1 + 15.0).abs() < 1e-12, "{d1}");
    }

    #[test]
    fn unsafe_slope_tends_to_minus_m() {
        for params in [PAPER_QUAD, PAPER_CORRIDOR, TolerantParams::new(0.0, 100.0, 1.0, 175.0).unwrap()] {
            let (d1, _) = barrier_derivs(BarrierFamily::Tolerant, &params, -50.0).unwrap();
            assert!((d1 + params.m).abs() < 1e-9, "{params:?}: {d1}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(TolerantParams::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(TolerantParams::new(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(TolerantParams::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(TolerantParams::new(0.0, 5.0, 1.0, 45.0).is_ok());
    }

    #[test]
    fn inverse_state_sums_over_group() {
        let spec = BarrierSpec::new(
            BarrierFamily::Inverse,
            TolerantParams::default(),
            vec![Arc::new(Constant(0.1)), Arc::new(Constant(0.2))],
            1.0,
        )
        .unwrap();
        let b = barrier_state_of(&spec, 0, &DVector::zeros(2)).unwrap();
        assert!((b - 15.0).abs() < 1e-12);
    }

    #[test]
    fn domain_error_names_constraint() {
        let spec = BarrierSpec::new(
            BarrierFamily::Inverse,
            TolerantParams::default(),
            vec![Arc::new(Constant(0.1)), Arc::new(Constant(-0.2))],
            1.0,
        )
        .unwrap();
        assert_eq!(
            barrier_state_of(&spec, 0, &DVector::zeros(2)),
            Err(Error::BarrierDomain {
                constraint: 1,
                h: -0.2
            })
        );
    }

    #[test]
    fn zero_weight_gives_zero_hessian() {
        let spec = BarrierSpec::new(
            BarrierFamily::Tolerant,
            PAPER_QUAD,
            vec![Arc::new(Constant(0.3))],
            0.0,
        )
        .unwrap();
        let h = barrier_hessian_term(&spec, 0, &DVector::from_element(3, 1.0)).unwrap();
        assert_eq!(h, DMatrix::zeros(3, 3));
    }
}
