//! `tdbas` command-line front end.
//!
//! Exit codes of `solve`:
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | converged, safe, and at the goal (when one is set)   |
//! | 1    | usage, configuration or I/O error                    |
//! | 2    | iteration limit reached                              |
//! | 3    | rollout diverged                                     |
//! | 4    | final trajectory violates a constraint               |
//! | 5    | converged and safe but the goal was not reached      |
//! | 6    | line search or backward pass failed                  |

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tdbas::barriers::{BarrierFamily, TolerantParams};
use tdbas::bench::{self, SuiteSpec};
use tdbas::ddp::Termination;
use tdbas::field::{barrier_field, Ellipse, Grid};
use tdbas::plot;
use tdbas::scenarios::{self, FieldKind, Method, ReferenceConfig, ScenarioConfig, Solved};

pub const EXIT_MAX_ITERS: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_UNSAFE: u8 = 4;
pub const EXIT_GOAL_MISSED: u8 = 5;
pub const EXIT_SOLVER_FAILED: u8 = 6;

#[derive(Parser)]
#[command(name = "tdbas", version, about = "Safe trajectory optimization with tolerant barrier states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write the log, trajectory and plots.
    Solve(SolveArgs),
    /// Run the randomized comparison suite.
    Bench(BenchArgs),
    /// Plot the barrier gradient field around an ellipse.
    BarrierField(FieldArgs),
    /// List shipped scenarios, or print one as TOML.
    Presets {
        /// Print this preset's scenario file instead of the list.
        #[arg(long)]
        dump: Option<String>,
    },
}

#[derive(Args)]
struct SolveArgs {
    /// Scenario file (TOML).
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Shipped scenario name (see `presets`).
    #[arg(long)]
    preset: Option<String>,
    /// tdbas, dbas, al or none. Defaults to the scenario's method.
    #[arg(long)]
    method: Option<String>,
    /// Override a field, e.g. `--set solver.max_iters=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Suppress the per-iteration log on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// rect or ellipsoid.
    kind: String,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,15,20,25")]
    counts: Vec<usize>,
    /// Instances per obstacle count.
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "tdbas,dbas,al")]
    methods: Vec<String>,
    /// Instance i uses seed first_seed + i.
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Records file; the summary plot is written next to it as .svg.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    /// Fill the wall_ms column (records are then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct FieldArgs {
    #[arg(long, default_value = "tolerant")]
    family: String,
    #[arg(long, default_value_t = 500.0)]
    p: f64,
    #[arg(long, default_value_t = 500.0)]
    m: f64,
    #[arg(long, default_value_t = 30.0)]
    c1: f64,
    #[arg(long, default_value_t = 50.0)]
    c2: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,0", allow_negative_numbers = true)]
    center: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1.5,1")]
    axes: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "-3,3", allow_negative_numbers = true)]
    x: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "-2,2", allow_negative_numbers = true)]
    y: Vec<f64>,
    /// Grid points per axis as nx,ny.
    #[arg(long, value_delimiter = ',', default_value = "31,21")]
    grid: Vec<usize>,
    #[arg(long, default_value = "barrier_field.svg")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args).map(|()| 0),
        Command::BarrierField(args) => cmd_barrier_field(args).map(|()| 0),
        Command::Presets { dump } => cmd_presets(dump).map(|()| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(args: &SolveArgs) -> Result<ScenarioConfig> {
    let mut cfg = match (&args.preset, &args.scenario) {
        (Some(name), _) => scenarios::preset(name)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, None) => bail!("give a scenario file or --preset"),
    };
    if let Some(m) = &args.method {
        cfg = cfg.with_method(m.parse()?);
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("override '{kv}' is not KEY=VALUE"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn cmd_solve(args: SolveArgs) -> Result<u8> {
    let cfg = load_scenario(&args)?;
    let solved = cfg.solve()?;
    let res = &solved.result;
    let traj = &res.trajectory;

    fs::create_dir_all(&args.out)?;
    let stem = format!("{}_{}", cfg.name, cfg.method);
    let path = |suffix: &str| args.out.join(format!("{stem}_{suffix}"));
    fs::write(path("scenario.toml"), cfg.to_toml())?;
    write_log(&path("log.csv"), &solved)?;
    write_trajectory(&path("trajectory.csv"), &cfg, &solved)?;
    fs::write(path("overhead.svg"), plot::overhead_svg(&cfg, traj))?;
    let nx = cfg.physical_dim();
    let betas: Vec<(String, Vec<f64>)> = cfg
        .barriers
        .iter()
        .enumerate()
        .filter(|_| cfg.method.uses_barrier_states())
        .map(|(i, g)| (g.name.clone(), traj.states.iter().map(|x| x[nx + i]).collect()))
        .collect();
    if !betas.is_empty() {
        fs::write(
            path("barrier.svg"),
            plot::trace_svg(&format!("{} barrier states", cfg.name), "beta", cfg.dt, &betas),
        )?;
    }

    if !args.quiet {
        for r in &res.history {
            println!(
                "iter {:4}  cost {:<14.6e} max_violation {:<10.3e} alpha {:<8} reg {:.1e}",
                r.iteration,
                r.cost,
                r.max_violation,
                r.alpha.map_or("-".into(), |a| format!("{a:.3}")),
                r.reg
            );
        }
    }
    let diverged = res.termination == Termination::Diverged;
    let safe = !diverged && bench::verify_safety(&cfg, traj);
    let tracks_goal = cfg.cost.reference == ReferenceConfig::Goal;
    let distance = cfg.goal_distance(traj);
    println!(
        "{}: {} after {} iterations, cost {:.6}, safe {}, goal distance {:.4}",
        stem,
        res.termination,
        res.iterations(),
        traj.total_cost(),
        safe,
        distance
    );
    println!("wrote {}", args.out.join(format!("{stem}_*")).display());

    Ok(match res.termination {
        Termination::Diverged => EXIT_DIVERGED,
        Termination::MaxIters => EXIT_MAX_ITERS,
        Termination::LineSearchFailed | Termination::BackwardPassFailed => EXIT_SOLVER_FAILED,
        Termination::Converged if !safe => EXIT_UNSAFE,
        Termination::Converged if tracks_goal && distance >= cfg.goal_tolerance => EXIT_GOAL_MISSED,
        Termination::Converged => 0,
    })
}

fn write_log(path: &Path, solved: &Solved) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iteration,cost,max_violation,min_h,alpha,reg,accepted")?;
    for r in &solved.result.history {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.iteration,
            fmt_f64(&r.cost),
            fmt_f64(&r.max_violation),
            fmt_f64(&r.min_h),
            r.alpha.map_or(String::new(), |a| fmt_f64(&a)),
            fmt_f64(&r.reg),
            r.accepted
        )?;
    }
    Ok(w.flush()?)
}

/// Rows `k, t, states, controls, barrier states, safety values`; the last
/// row has no control.
fn write_trajectory(path: &Path, cfg: &ScenarioConfig, solved: &Solved) -> Result<()> {
    let traj = &solved.result.trajectory;
    let nx = cfg.physical_dim();
    let nu = cfg.control_dim();
    let nb = traj.states.first().map_or(0, |x| x.len() - nx);
    let nh = solved.problem.constraints.len();
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((0..nx).map(|i| format!("x{i}")));
    header.extend((0..nu).map(|i| format!("u{i}")));
    header.extend((0..nb).map(|i| format!("beta{i}")));
    header.extend((0..nh).map(|i| format!("h{i}")));

    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for (k, x) in traj.states.iter().enumerate() {
        let mut row = vec![k.to_string(), fmt_f64(&(k as f64 * cfg.dt))];
        row.extend(x.iter().take(nx).map(fmt_f64));
        match traj.controls.get(k) {
            Some(u) => row.extend(u.iter().map(fmt_f64)),
            None => row.extend(std::iter::repeat_n(String::new(), nu)),
        }
        row.extend(x.iter().skip(nx).map(fmt_f64));
        match traj.h_values.get(k) {
            Some(h) => row.extend(h.iter().map(fmt_f64)),
            None => row.extend(std::iter::repeat_n(String::new(), nh)),
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(w.flush()?)
}

fn fmt_f64(v: &f64) -> String {
    bench::fmt_f64(*v)
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let kind: FieldKind = args.kind.parse()?;
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<tdbas::Result<Vec<_>>>()?;
    if methods.is_empty() || args.counts.is_empty() || args.n == 0 {
        bail!("need at least one method, one obstacle count and --n >= 1");
    }
    if args.counts.contains(&0) {
        bail!("obstacle counts must be >= 1");
    }
    let spec = SuiteSpec {
        kind,
        counts: args.counts,
        n_per_count: args.n,
        methods,
        first_seed: args.first_seed,
        timing: args.timing,
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }

    // Records are appended here as they finish, then replaced by the sorted file.
    let partial_path = args.out.with_extension("partial.csv");
    let partial = Mutex::new(BufWriter::new(
        OpenOptions::new().create(true).write(true).truncate(true).open(&partial_path)?,
    ));
    writeln!(partial.lock().unwrap(), "{}", bench::CSV_HEADER)?;
    let records = bench::run_suite(&spec, |r| {
        let mut w = partial.lock().unwrap();
        let _ = writeln!(w, "{}", bench::csv_row(r));
        let _ = w.flush();
        eprintln!(
            "{:>3} obstacles  seed {:>4}  {:<5}  converged {:<5} safe {:<5} goal {}",
            r.n_obstacles, r.seed, r.method, r.converged, r.safe, r.goal_reached
        );
    });
    drop(partial);

    bench::write_csv(BufWriter::new(File::create(&args.out)?), &records)?;
    fs::remove_file(&partial_path)?;
    let rows = bench::aggregate(&records);
    let svg_path = args.out.with_extension("svg");
    fs::write(&svg_path, plot::bench_svg(&format!("{} field", kind.as_str()), &rows))?;

    println!(
        "{:>9}  {:<6} {:>4} {:>8} {:>7} {:>12} {:>11} {:>10}",
        "obstacles", "method", "runs", "diverged", "safe%", "safe+goal%", "iters_first", "iters_conv"
    );
    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.1}"));
    for r in &rows {
        println!(
            "{:>9}  {:<6} {:>4} {:>8} {:>7.1} {:>12.1} {:>11} {:>10}",
            r.n_obstacles,
            r.method,
            r.runs,
            r.diverged,
            r.safe_pct,
            r.safe_goal_pct,
            fmt(r.mean_iters_first),
            fmt(r.mean_iters_conv)
        );
    }
    let failed: Vec<_> = records.iter().filter(|r| r.error.is_some()).collect();
    if !failed.is_empty() {
        println!("{} runs failed:", failed.len());
        for r in failed {
            println!(
                "  {} obstacles, seed {}, {}: {}",
                r.n_obstacles,
                r.seed,
                r.method,
                r.error.as_deref().unwrap_or_default()
            );
        }
    }
    println!("wrote {} and {}", args.out.display(), svg_path.display());
    Ok(())
}

fn pair<T: Copy>(flag: &str, v: &[T]) -> Result<[T; 2]> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => bail!("--{flag} takes two comma-separated values"),
    }
}

fn cmd_barrier_field(args: FieldArgs) -> Result<()> {
    let family: BarrierFamily = match args.family.as_str() {
        "tolerant" => BarrierFamily::Tolerant,
        "inverse" => BarrierFamily::Inverse,
        "log" => BarrierFamily::Log,
        other => bail!("unknown barrier family '{other}' (tolerant, inverse, log)"),
    };
    let params = TolerantParams {
        p: args.p,
        m: args.m,
        c1: args.c1,
        c2: args.c2,
    };
    let ellipse = Ellipse {
        center: pair("center", &args.center)?,
        axes: pair("axes", &args.axes)?,
    };
    let [nx, ny] = pair("grid", &args.grid)?;
    let grid = Grid {
        x: pair("x", &args.x)?,
        y: pair("y", &args.y)?,
        nx,
        ny,
    };
    if !(grid.x[0] < grid.x[1] && grid.y[0] < grid.y[1]) || grid.nx == 0 || grid.ny == 0 {
        bail!("grid ranges must be increasing and sizes >= 1");
    }
    let samples = barrier_field(family, &params, &ellipse, &grid)?;
    let title = match family {
        BarrierFamily::Tolerant => format!(
            "tolerant barrier (p={}, m={}, c1={}, c2={})",
            params.p, params.m, params.c1, params.c2
        ),
        f => format!("{f} barrier"),
    };
    fs::write(&args.out, plot::field_svg(&title, &ellipse, &grid, &samples))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_presets(dump: Option<String>) -> Result<()> {
    if let Some(name) = dump {
        print!("{}", scenarios::preset(&name)?.to_toml());
        return Ok(());
    }
    let about = [
        ("corridor", "differential drive behind a three-wall horseshoe, zero-control start"),
        ("fig8", "quadrotor starting inside a sphere, tracking a figure-eight"),
        ("robotarium", "two teams of two unicycles swapping sides with connectivity"),
        ("rect_field", "differential drive among 10 random rotated rectangles (seed 1)"),
        ("ellipsoid_field", "quadrotor among 10 moving ellipsoids (seed 1)"),
    ];
    for (name, text) in about {
        println!("{name:<16} {text}");
    }
    Ok(())
}
