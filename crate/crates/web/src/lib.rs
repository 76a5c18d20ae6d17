//! Browser bindings for the barrier plots and a corridor solve.
//!
//! Each exported function has a plain Rust twin that returns `Result<_, String>`
//! so the logic is testable off the wasm target.

use wasm_bindgen::prelude::*;

use tdbas::barriers::{BarrierFamily, TolerantParams};
use tdbas::bench::verify_safety;
use tdbas::field::{self, Ellipse, Grid};
use tdbas::scenarios::{self, Method};

fn family(name: &str) -> Result<BarrierFamily, String> {
    match name {
        "tolerant" => Ok(BarrierFamily::Tolerant),
        "inverse" => Ok(BarrierFamily::Inverse),
        "log" => Ok(BarrierFamily::Log),
        other => Err(format!("unknown barrier family '{other}'")),
    }
}

fn params(p: f64, m: f64, c1: f64, c2: f64) -> Result<TolerantParams, String> {
    TolerantParams::new(p, m, c1, c2).map_err(|e| e.to_string())
}

/// Flattened `(h, B, B')` triples; NaN where the barrier is undefined.
#[allow(clippy::too_many_arguments)]
pub fn curve(name: &str, p: f64, m: f64, c1: f64, c2: f64, h_min: f64, h_max: f64, n: usize) -> Result<Vec<f64>, String> {
    let fam = family(name)?;
    let params = params(p, m, c1, c2)?;
    Ok(field::barrier_curve(fam, &params, [h_min, h_max], n)
        .into_iter()
        .flat_map(|(h, b, d)| [h, b.unwrap_or(f64::NAN), d.unwrap_or(f64::NAN)])
        .collect())
}

/// Flattened `(x, y, h, B, −∂B/∂x, −∂B/∂y)` rows over a grid on
/// `[−extent, extent]²` around an origin-centered ellipse.
#[allow(clippy::too_many_arguments)]
pub fn gradient_field(
    name: &str,
    p: f64,
    m: f64,
    c1: f64,
    c2: f64,
    axis_a: f64,
    axis_b: f64,
    extent: f64,
    n: usize,
) -> Result<Vec<f64>, String> {
    let ellipse = Ellipse {
        center: [0.0, 0.0],
        axes: [axis_a, axis_b],
    };
    let grid = Grid {
        x: [-extent, extent],
        y: [-extent, extent],
        nx: n,
        ny: n,
    };
    let samples = field::barrier_field(family(name)?, &params(p, m, c1, c2)?, &ellipse, &grid)
        .map_err(|e| e.to_string())?;
    Ok(samples
        .into_iter()
        .flat_map(|s| {
            let [ax, ay] = s.arrow.unwrap_or([f64::NAN; 2]);
            [s.p[0], s.p[1], s.h, s.value.unwrap_or(f64::NAN), ax, ay]
        })
        .collect())
}

/// Result of a corridor solve.
#[wasm_bindgen]
pub struct CorridorRun {
    xs: Vec<f64>,
    ys: Vec<f64>,
    termination: String,
    iterations: usize,
    distance: f64,
    safe: bool,
}

#[wasm_bindgen]
impl CorridorRun {
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }
    pub fn ys(&self) -> Vec<f64> {
        self.ys.clone()
    }
    pub fn termination(&self) -> String {
        self.termination.clone()
    }
    pub fn iterations(&self) -> usize {
        self.iterations
    }
    pub fn distance(&self) -> f64 {
        self.distance
    }
    pub fn safe(&self) -> bool {
        self.safe
    }
}

/// Solves the corridor with `method` and the given tolerant parameters
/// (ignored by the classical and AL methods).
pub fn corridor(method: &str, p: f64, m: f64, c1: f64, c2: f64) -> Result<CorridorRun, String> {
    let method: Method = method.parse().map_err(|e: tdbas::Error| e.to_string())?;
    let mut cfg = scenarios::build_corridor();
    cfg.barriers[0].set_params(params(p, m, c1, c2)?);
    let cfg = cfg.with_method(method);
    let solved = cfg.solve().map_err(|e| e.to_string())?;
    let traj = &solved.result.trajectory;
    Ok(CorridorRun {
        xs: traj.states.iter().map(|x| x[0]).collect(),
        ys: traj.states.iter().map(|x| x[1]).collect(),
        termination: solved.result.termination.to_string(),
        iterations: solved.result.iterations(),
        distance: cfg.goal_distance(traj),
        safe: verify_safety(&cfg, traj),
    })
}

/// Corridor wall corners as flattened `(x, y)` quadruples.
pub fn walls() -> Vec<f64> {
    let cfg = scenarios::build_corridor();
    cfg.obstacles
        .iter()
        .flat_map(|o| match o.shape {
            scenarios::Shape::HorseshoeRect { center, a, b, s } => {
                let hw = s / (2.0 * a);
                let hh = s / (2.0 * b);
                vec![center[0] - hw, center[1] - hh, center[0] + hw, center[1] + hh]
            }
            _ => Vec::new(),
        })
        .collect()
}

#[wasm_bindgen(js_name = barrierCurve)]
#[allow(clippy::too_many_arguments)]
pub fn barrier_curve(family: &str, p: f64, m: f64, c1: f64, c2: f64, h_min: f64, h_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    curve(family, p, m, c1, c2, h_min, h_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = barrierField)]
#[allow(clippy::too_many_arguments)]
pub fn barrier_field(
    family: &str,
    p: f64,
    m: f64,
    c1: f64,
    c2: f64,
    axis_a: f64,
    axis_b: f64,
    extent: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    gradient_field(family, p, m, c1, c2, axis_a, axis_b, extent, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = solveCorridor)]
pub fn solve_corridor(method: &str, p: f64, m: f64, c1: f64, c2: f64) -> Result<CorridorRun, JsError> {
    corridor(method, p, m, c1, c2).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = corridorWalls)]
pub fn corridor_walls() -> Vec<f64> {
    walls()
}
