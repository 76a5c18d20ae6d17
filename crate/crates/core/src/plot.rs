//! Minimal SVG output for trajectories, traces, benchmark summaries and
//! barrier fields. Numbers are printed with fixed precision so identical
//! inputs give identical files.

use std::fmt::Write;

use crate::bench::SummaryRow;
use crate::field::{Ellipse, FieldSample, Grid};
use crate::problem::Trajectory;
use crate::scenarios::safety::{rotated_rectangle, L1Rectangle};
use crate::scenarios::{figure8_point, Method, ReferenceConfig, ScenarioConfig, Shape};

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn method_color(m: Method) -> &'static str {
    match m {
        Method::Tdbas => "#ff7f0e",
        Method::Dbas => "#1f77b4",
        Method::Al => "#2ca02c",
        Method::None => "#7f7f7f",
    }
}

/// SVG document under construction.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    pub fn line(&mut self, a: [f64; 2], b: [f64; 2], style: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            a[0], a[1], b[0], b[1]
        );
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], style: &str) {
        let mut d = String::new();
        for p in pts {
            let _ = write!(d, "{:.2},{:.2} ", p[0], p[1]);
        }
        let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" {style}/>"#, d.trim_end());
    }

    pub fn polygon(&mut self, pts: &[[f64; 2]], style: &str) {
        let mut d = String::new();
        for p in pts {
            let _ = write!(d, "{:.2},{:.2} ", p[0], p[1]);
        }
        let _ = writeln!(self.body, r#"<polygon points="{}" {style}/>"#, d.trim_end());
    }

    pub fn circle(&mut self, c: [f64; 2], r: f64, style: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" {style}/>"#, c[0], c[1], r);
    }

    pub fn ellipse(&mut self, c: [f64; 2], r: [f64; 2], style: &str) {
        let _ = writeln!(
            self.body,
            r#"<ellipse cx="{:.2}" cy="{:.2}" rx="{:.2}" ry="{:.2}" {style}/>"#,
            c[0], c[1], r[0], r[1]
        );
    }

    pub fn rect(&mut self, p: [f64; 2], size: [f64; 2], style: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
            p[0], p[1], size[0], size[1]
        );
    }

    pub fn text(&mut self, p: [f64; 2], s: &str, style: &str) {
        let escaped = s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" {style}>{escaped}</text>"#,
            p[0], p[1]
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Affine map from data coordinates to a pixel box (y up).
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub origin: [f64; 2],
    pub size: [f64; 2],
}

impl Frame {
    pub fn map(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + (p[0] - self.x[0]) / (self.x[1] - self.x[0]) * self.size[0],
            self.origin[1] + self.size[1] - (p[1] - self.y[0]) / (self.y[1] - self.y[0]) * self.size[1],
        ]
    }

    pub fn scale(&self) -> [f64; 2] {
        [
            self.size[0] / (self.x[1] - self.x[0]),
            self.size[1] / (self.y[1] - self.y[0]),
        ]
    }

    fn axes(&self, svg: &mut Svg, xlabel: &str, ylabel: &str) {
        let [ox, oy] = self.origin;
        let [w, h] = self.size;
        svg.rect(self.origin, self.size, r##"fill="none" stroke="#444""##);
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = self.x[0] + t * (self.x[1] - self.x[0]);
            let yv = self.y[0] + t * (self.y[1] - self.y[0]);
            svg.text([ox + t * w, oy + h + 15.0], &fmt_tick(xv), r#"text-anchor="middle""#);
            svg.text([ox - 5.0, oy + h - t * h + 4.0], &fmt_tick(yv), r#"text-anchor="end""#);
        }
        svg.text([ox + w / 2.0, oy + h + 32.0], xlabel, r#"text-anchor="middle""#);
        svg.text([ox - 45.0, oy + h / 2.0], ylabel, r#"text-anchor="middle""#);
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn padded(lo: f64, hi: f64) -> [f64; 2] {
    let span = (hi - lo).max(1e-9);
    [lo - 0.08 * span, hi + 0.08 * span]
}

fn l1_rect(shape: &Shape, pos: [usize; 2]) -> Option<L1Rectangle> {
    match *shape {
        Shape::RotatedRectangle { center, s, r, theta } => Some(rotated_rectangle(center, s, r, theta, pos)),
        Shape::HorseshoeRect { center, a, b, s } => Some(L1Rectangle {
            center,
            theta: 0.0,
            a,
            b,
            s,
            index: pos,
        }),
        Shape::Diamond { center, size, margin } => Some(L1Rectangle {
            center,
            theta: 0.0,
            a: 1.0,
            b: 1.0,
            s: size + margin,
            index: pos,
        }),
        _ => None,
    }
}

/// Top-down view: obstacles, per-agent paths, start and goal markers, and
/// the figure-eight reference when present.
pub fn overhead_svg(cfg: &ScenarioConfig, traj: &Trajectory) -> String {
    let agents = cfg.model.agents();
    let paths: Vec<Vec<[f64; 2]>> = (0..agents)
        .map(|a| {
            let idx = cfg.model.position_index(a);
            traj.states.iter().map(|x| [x[idx[0]], x[idx[1]]]).collect()
        })
        .collect();
    let mut reference = Vec::new();
    if let ReferenceConfig::Figure8 { .. } = cfg.cost.reference {
        reference = (0..=cfg.horizon).map(|k| {
            let r = cfg.reference_at(k);
            [r[0], r[1]]
        })
        .collect();
    }

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    let mut grow = |p: [f64; 2]| {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    };
    paths.iter().flatten().chain(&reference).for_each(|&p| grow(p));
    for a in 0..agents {
        let idx = cfg.model.position_index(a);
        grow([cfg.goal[idx[0]], cfg.goal[idx[1]]]);
    }
    for o in &cfg.obstacles {
        match &o.shape {
            Shape::Sphere { center, radius } => {
                grow([center[0] - radius, center[1] - radius]);
                grow([center[0] + radius, center[1] + radius]);
            }
            Shape::Boundary { axis, bound, .. } => {
                let mut p = [0.0, 0.0];
                p[*axis] = *bound;
                grow(p);
            }
            Shape::RotatedRectangle { center, .. } | Shape::Diamond { center, .. } | Shape::HorseshoeRect { center, .. } => {
                grow(*center)
            }
            _ => {}
        }
    }
    // Equal aspect ratio.
    let (cx, cy) = ((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0);
    let half = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / 2.0).max(0.5);
    let frame = Frame {
        x: padded(cx - half, cx + half),
        y: padded(cy - half, cy + half),
        origin: [60.0, 30.0],
        size: [500.0, 500.0],
    };
    let mut svg = Svg::new(600.0, 590.0);
    svg.text([60.0, 20.0], &format!("{} ({})", cfg.name, cfg.method), "");
    frame.axes(&mut svg, "x", "y");
    let clip = format!(
        r#"<clipPath id="plot"><rect x="{}" y="{}" width="{}" height="{}"/></clipPath><g clip-path="url(#plot)">"#,
        frame.origin[0], frame.origin[1], frame.size[0], frame.size[1]
    );
    svg.raw(&clip);

    let fill = r##"fill="#c0392b" fill-opacity="0.35" stroke="#922b21""##;
    let mut drawn_rects = Vec::new();
    for o in &cfg.obstacles {
        if let Some(rect) = l1_rect(&o.shape, [0, 1]) {
            // Per-agent copies of the same obstacle are drawn once.
            if drawn_rects.contains(&rect) {
                continue;
            }
            drawn_rects.push(rect);
            let pts: Vec<_> = rect.corners().iter().map(|&c| frame.map(c)).collect();
            svg.polygon(&pts, fill);
            continue;
        }
        match &o.shape {
            Shape::Sphere { center, radius } => {
                svg.circle(frame.map([center[0], center[1]]), radius * frame.scale()[0], fill);
            }
            Shape::MovingEllipsoid { start, travel, axes, .. } => {
                let s = frame.scale();
                svg.ellipse(frame.map([start[0], start[1]]), [axes[0] * s[0], axes[1] * s[1]], fill);
                let end = [start[0] + travel[0], start[1] + travel[1]];
                svg.ellipse(frame.map(end), [axes[0] * s[0], axes[1] * s[1]], r##"fill="none" stroke="#922b21" stroke-dasharray="3,3""##);
                svg.line(frame.map([start[0], start[1]]), frame.map(end), r##"stroke="#922b21" stroke-dasharray="2,4""##);
            }
            Shape::Boundary { axis, bound, .. } if o.agent == 0 => {
                let (a, b) = if *axis == 0 {
                    ([*bound, frame.y[0]], [*bound, frame.y[1]])
                } else {
                    ([frame.x[0], *bound], [frame.x[1], *bound])
                };
                svg.line(frame.map(a), frame.map(b), r#"stroke="black" stroke-width="3""#);
            }
            _ => {}
        }
    }
    if !reference.is_empty() {
        let pts: Vec<_> = reference.iter().map(|&p| frame.map(p)).collect();
        svg.polyline(&pts, r##"stroke="#1f77b4" stroke-dasharray="4,4""##);
    }
    for (a, path) in paths.iter().enumerate() {
        let color = PALETTE[(a + 1) % PALETTE.len()];
        let pts: Vec<_> = path.iter().map(|&p| frame.map(p)).collect();
        svg.polyline(&pts, &format!(r#"stroke="{color}" stroke-width="2""#));
        svg.circle(pts[0], 5.0, &format!(r#"fill="{color}""#));
        let idx = cfg.model.position_index(a);
        let g = frame.map([cfg.goal[idx[0]], cfg.goal[idx[1]]]);
        svg.line([g[0] - 6.0, g[1] - 6.0], [g[0] + 6.0, g[1] + 6.0], &format!(r#"stroke="{color}" stroke-width="2""#));
        svg.line([g[0] - 6.0, g[1] + 6.0], [g[0] + 6.0, g[1] - 6.0], &format!(r#"stroke="{color}" stroke-width="2""#));
    }
    svg.raw("</g>");
    svg.finish()
}

/// Line chart of one or more series against `k·dt`.
pub fn trace_svg(title: &str, ylabel: &str, dt: f64, series: &[(String, Vec<f64>)]) -> String {
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(0).max(2);
    let finite = || series.iter().flat_map(|s| s.1.iter().copied()).filter(|v| v.is_finite());
    let lo = finite().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = finite().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let frame = Frame {
        x: [0.0, (n - 1) as f64 * dt],
        y: padded(lo, hi),
        origin: [70.0, 30.0],
        size: [560.0, 300.0],
    };
    let mut svg = Svg::new(660.0, 380.0);
    svg.text([70.0, 20.0], title, "");
    frame.axes(&mut svg, "t [s]", ylabel);
    for (i, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<_> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(k, &v)| frame.map([k as f64 * dt, v]))
            .collect();
        svg.polyline(&pts, &format!(r#"stroke="{color}" stroke-width="1.5""#));
        svg.text([500.0, 50.0 + 15.0 * i as f64], name, &format!(r#"fill="{color}""#));
    }
    svg.finish()
}

/// Four bar-chart panels: safe %, safe+goal %, mean iterations to the first
/// safe goal-reaching iterate, mean iterations to converge.
pub fn bench_svg(title: &str, rows: &[SummaryRow]) -> String {
    let mut counts: Vec<usize> = rows.iter().map(|r| r.n_obstacles).collect();
    counts.dedup();
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    type Metric = fn(&SummaryRow) -> Option<f64>;
    let panels: [(&str, Metric); 4] = [
        ("safe [%]", |r| Some(r.safe_pct)),
        ("safe + goal [%]", |r| Some(r.safe_goal_pct)),
        ("iterations to first safe goal", |r| r.mean_iters_first),
        ("iterations to converge", |r| r.mean_iters_conv),
    ];
    let (pw, ph) = (420.0, 260.0);
    let mut svg = Svg::new(2.0 * pw + 40.0, 2.0 * ph + 90.0);
    svg.text([20.0, 20.0], title, "");
    for (i, m) in methods.iter().enumerate() {
        svg.rect([400.0 + 90.0 * i as f64, 8.0], [12.0, 12.0], &format!(r#"fill="{}""#, method_color(*m)));
        svg.text([416.0 + 90.0 * i as f64, 19.0], m.as_str(), "");
    }
    for (p, (label, metric)) in panels.iter().enumerate() {
        let origin = [70.0 + (p % 2) as f64 * (pw + 20.0), 40.0 + (p / 2) as f64 * (ph + 30.0)];
        let ymax = rows.iter().filter_map(metric).fold(1.0, f64::max);
        let frame = Frame {
            x: [0.0, counts.len().max(1) as f64],
            y: [0.0, ymax * 1.1],
            origin,
            size: [pw - 80.0, ph - 60.0],
        };
        svg.rect(origin, frame.size, r##"fill="none" stroke="#444""##);
        svg.text([origin[0], origin[1] - 4.0], label, "");
        svg.text([origin[0] - 5.0, origin[1] + 10.0], &fmt_tick(ymax * 1.1), r#"text-anchor="end""#);
        svg.text([origin[0] - 5.0, origin[1] + frame.size[1]], "0", r#"text-anchor="end""#);
        let bw = 0.8 / methods.len().max(1) as f64;
        for (ci, &c) in counts.iter().enumerate() {
            let base = frame.map([ci as f64 + 0.5, 0.0]);
            svg.text([base[0], base[1] + 15.0], &c.to_string(), r#"text-anchor="middle""#);
            for (mi, &m) in methods.iter().enumerate() {
                let Some(v) = rows.iter().find(|r| r.n_obstacles == c && r.method == m).and_then(metric) else {
                    continue;
                };
                let x0 = ci as f64 + 0.1 + mi as f64 * bw;
                let top = frame.map([x0, v]);
                let bottom = frame.map([x0 + bw, 0.0]);
                svg.rect(top, [bottom[0] - top[0], bottom[1] - top[1]], &format!(r#"fill="{}""#, method_color(m)));
            }
        }
        svg.text(
            [origin[0] + frame.size[0] / 2.0, origin[1] + frame.size[1] + 30.0],
            "obstacles",
            r#"text-anchor="middle""#,
        );
    }
    svg.finish()
}

fn heat(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t.sqrt()) as u8;
    let g = (255.0 * (1.0 - t) * 0.9) as u8;
    let b = (255.0 * (1.0 - t)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Color map of `log(1 + β)` with `−∇β` arrows normalized per plot; cells
/// where the barrier is undefined are left blank.
pub fn field_svg(title: &str, ellipse: &Ellipse, grid: &Grid, samples: &[FieldSample]) -> String {
    let frame = Frame {
        x: grid.x,
        y: grid.y,
        origin: [60.0, 30.0],
        size: [500.0, 500.0 * (grid.y[1] - grid.y[0]) / (grid.x[1] - grid.x[0])],
    };
    let mut svg = Svg::new(600.0, frame.size[1] + 80.0);
    svg.text([60.0, 20.0], title, "");
    let vmax = samples
        .iter()
        .filter_map(|s| s.value)
        .map(|v| v.max(0.0).ln_1p())
        .fold(1e-12, f64::max);
    let amax = samples
        .iter()
        .filter_map(|s| s.arrow)
        .map(|a| a[0].hypot(a[1]))
        .fold(1e-300, f64::max);
    let cell = [
        frame.size[0] / grid.nx.max(1) as f64,
        frame.size[1] / grid.ny.max(1) as f64,
    ];
    for s in samples {
        let c = frame.map(s.p);
        if let Some(v) = s.value {
            svg.rect(
                [c[0] - cell[0] / 2.0, c[1] - cell[1] / 2.0],
                cell,
                &format!(r#"fill="{}" fill-opacity="0.6""#, heat(v.max(0.0).ln_1p() / vmax)),
            );
        }
        if let Some(a) = s.arrow {
            let len = a[0].hypot(a[1]);
            if len > 1e-12 * amax {
                // Square-root scaling keeps weak far-field arrows visible.
                let l = 0.9 * cell[0].min(cell[1]) * (len / amax).sqrt();
                let d = [a[0] / len * l, -a[1] / len * l];
                let tip = [c[0] + d[0], c[1] + d[1]];
                svg.line(c, tip, r#"stroke="black" stroke-width="1""#);
                svg.circle(tip, 1.2, r#"fill="black""#);
            }
        }
    }
    let s = frame.scale();
    svg.ellipse(
        frame.map(ellipse.center),
        [ellipse.axes[0] * s[0], ellipse.axes[1] * s[1]],
        r#"fill="none" stroke="black" stroke-width="2""#,
    );
    frame.axes(&mut svg, "x", "y");
    svg.finish()
}

/// Figure-eight sample points, for callers drawing their own reference.
pub fn figure8_polyline(amplitude: f64, period: f64, n: usize) -> Vec<[f64; 2]> {
    (0..=n)
        .map(|i| {
            let p = figure8_point(amplitude, period, 0.0, [0.0, 0.0], period * i as f64 / n as f64);
            [p[0], p[1]]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::build_corridor;

    #[test]
    fn frame_maps_corners() {
        let f = Frame {
            x: [0.0, 10.0],
            y: [0.0, 5.0],
            origin: [10.0, 20.0],
            size: [100.0, 50.0],
        };
        assert_eq!(f.map([0.0, 0.0]), [10.0, 70.0]);
        assert_eq!(f.map([10.0, 5.0]), [110.0, 20.0]);
    }

    #[test]
    fn overhead_is_deterministic_and_well_formed() {
        let cfg = build_corridor();
        let p = cfg.build().unwrap();
        let traj = p.evaluate(&cfg.initial_controls()).unwrap();
        let a = overhead_svg(&cfg, &traj);
        assert_eq!(a, overhead_svg(&cfg, &traj));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polygon").count(), 3);
    }

    #[test]
    fn text_is_escaped() {
        let mut svg = Svg::new(10.0, 10.0);
        svg.text([0.0, 0.0], "a<b & c", "");
        assert!(svg.finish().contains("a&lt;b &amp; c"));
    }
}
