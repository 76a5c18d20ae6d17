//! Randomized comparison harness: paired instances across methods, per-run
//! records, aggregation and CSV persistence.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::Instant;

use crate::ddp::Termination;
use crate::problem::Trajectory;
use crate::scenarios::{FieldKind, Method, ScenarioConfig, Solved};

/// Outcome of one (instance, method) run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub n_obstacles: usize,
    pub method: Method,
    pub termination: Option<Termination>,
    pub converged: bool,
    /// Every raw safety function positive at every step of the final trajectory.
    pub safe: bool,
    pub goal_reached: bool,
    /// First iteration whose trajectory was both safe and goal-reaching.
    pub iters_first: Option<usize>,
    pub iters_conv: usize,
    /// Final plain cost; NaN when the run diverged or failed.
    pub cost: f64,
    pub wall_ms: Option<f64>,
    /// Set when the instance could not be built or solved.
    pub error: Option<String>,
}

impl ExperimentRecord {
    /// Divergent and failed runs count as neither safe nor goal-reaching.
    pub fn diverged(&self) -> bool {
        self.error.is_some() || self.termination == Some(Termination::Diverged)
    }

    fn failed(seed: u64, n_obstacles: usize, method: Method, error: String) -> Self {
        Self {
            seed,
            n_obstacles,
            method,
            termination: None,
            converged: false,
            safe: false,
            goal_reached: false,
            iters_first: None,
            iters_conv: 0,
            cost: f64::NAN,
            wall_ms: None,
            error: Some(error),
        }
    }
}

/// `true` when every raw safety function is strictly positive at every step.
pub fn verify_safety(cfg: &ScenarioConfig, traj: &Trajectory) -> bool {
    let safety = cfg.safety_functions();
    traj.states
        .iter()
        .enumerate()
        .all(|(k, x)| safety.iter().all(|h| h.eval(k, x) > 0.0))
}

/// Solves one configured instance and scores it.
pub fn run_experiment(cfg: &ScenarioConfig, n_obstacles: usize, timing: bool) -> ExperimentRecord {
    solve_and_score(cfg, n_obstacles, timing).1
}

fn solve_and_score(cfg: &ScenarioConfig, n_obstacles: usize, timing: bool) -> (Option<Solved>, ExperimentRecord) {
    let start = Instant::now();
    match cfg.solve() {
        Ok(solved) => {
            let mut rec = score(cfg, n_obstacles, &solved);
            rec.wall_ms = timing.then(|| start.elapsed().as_secs_f64() * 1e3);
            (Some(solved), rec)
        }
        Err(e) => (None, ExperimentRecord::failed(cfg.seed, n_obstacles, cfg.method, e.to_string())),
    }
}

/// Record for an already solved instance, without timing.
pub fn score(cfg: &ScenarioConfig, n_obstacles: usize, solved: &Solved) -> ExperimentRecord {
    let res = &solved.result;
    let traj = &res.trajectory;
    let diverged = res.termination == Termination::Diverged;
    let iters_first = res
        .history
        .iter()
        .find(|r| r.min_h > 0.0 && cfg.goal_distance_of(&r.terminal) < cfg.goal_tolerance)
        .map(|r| r.iteration);
    ExperimentRecord {
        seed: cfg.seed,
        n_obstacles,
        method: cfg.method,
        termination: Some(res.termination),
        converged: res.converged(),
        safe: !diverged && verify_safety(cfg, traj),
        goal_reached: !diverged && cfg.goal_reached(traj),
        iters_first: if diverged { None } else { iters_first },
        iters_conv: res.iterations(),
        cost: if diverged { f64::NAN } else { traj.total_cost() },
        wall_ms: None,
        error: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub kind: FieldKind,
    pub counts: Vec<usize>,
    /// Instances per obstacle count.
    pub n_per_count: usize,
    pub methods: Vec<Method>,
    /// Instance `i` uses seed `first_seed + i`.
    pub first_seed: u64,
    /// Record wall time per run. Off by default so records are reproducible.
    pub timing: bool,
}

impl SuiteSpec {
    /// Desk-scale defaults: 30 instances at each of the shipped counts.
    pub fn desk(kind: FieldKind) -> Self {
        Self {
            kind,
            counts: vec![1, 5, 10, 15, 20, 25],
            n_per_count: 30,
            methods: vec![Method::Tdbas, Method::Dbas, Method::Al],
            first_seed: 0,
            timing: false,
        }
    }

    fn jobs(&self) -> Vec<(usize, u64, Method)> {
        let mut jobs = Vec::new();
        for &count in &self.counts {
            for i in 0..self.n_per_count as u64 {
                for &m in &self.methods {
                    jobs.push((count, self.first_seed + i, m));
                }
            }
        }
        jobs
    }
}

fn sort_key(r: &ExperimentRecord) -> (usize, u64, Method) {
    (r.n_obstacles, r.seed, r.method)
}

/// Runs every (count, seed, method) triple. Methods share the sampled
/// instance and differ only in their tuned parameters. `on_record` sees
/// records as they finish (in completion order); the returned list is
/// sorted by (count, seed, method).
pub fn run_suite<F>(spec: &SuiteSpec, on_record: F) -> Vec<ExperimentRecord>
where
    F: Fn(&ExperimentRecord) + Sync,
{
    run_suite_inspect(spec, |_, rec| on_record(rec))
}

/// [`run_suite`] with access to each run's configuration and solution
/// (`None` when the instance failed to sample, build or solve).
pub fn run_suite_inspect<F>(spec: &SuiteSpec, inspect: F) -> Vec<ExperimentRecord>
where
    F: Fn(Option<(&ScenarioConfig, &Solved)>, &ExperimentRecord) + Sync,
{
    let tuning = spec.kind.tuning();
    let run = |&(count, seed, method): &(usize, u64, Method)| match spec.kind.sample(seed, count) {
        Ok(base) => {
            let cfg = tuning.apply(&base, method);
            let (solved, rec) = solve_and_score(&cfg, count, spec.timing);
            inspect(solved.as_ref().map(|s| (&cfg, s)), &rec);
            rec
        }
        Err(e) => {
            let rec = ExperimentRecord::failed(seed, count, method, e.to_string());
            inspect(None, &rec);
            rec
        }
    };
    let jobs = spec.jobs();
    #[cfg(feature = "parallel")]
    let mut records: Vec<ExperimentRecord> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut records: Vec<ExperimentRecord> = jobs.iter().map(run).collect();
    records.sort_by_key(sort_key);
    records
}

/// Per-(count, method) summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n_obstacles: usize,
    pub method: Method,
    pub runs: usize,
    pub diverged: usize,
    pub safe_pct: f64,
    pub safe_goal_pct: f64,
    /// Over converged runs that reached a safe, goal-reaching iterate.
    pub mean_iters_first: Option<f64>,
    /// Over converged runs.
    pub mean_iters_conv: Option<f64>,
}

fn mean(values: impl Iterator<Item = usize>) -> Option<f64> {
    let (sum, n) = values.fold((0usize, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Buckets by (count, method); buckets without records produce no row.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut buckets: BTreeMap<(usize, Method), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        buckets.entry((r.n_obstacles, r.method)).or_default().push(r);
    }
    buckets
        .into_iter()
        .map(|((n_obstacles, method), rs)| {
            let runs = rs.len();
            let pct = |f: &dyn Fn(&ExperimentRecord) -> bool| {
                100.0 * rs.iter().filter(|r| f(r)).count() as f64 / runs as f64
            };
            let converged = || rs.iter().filter(|r| r.converged && !r.diverged());
            SummaryRow {
                n_obstacles,
                method,
                runs,
                diverged: rs.iter().filter(|r| r.diverged()).count(),
                safe_pct: pct(&|r| r.safe),
                safe_goal_pct: pct(&|r| r.safe && r.goal_reached),
                mean_iters_first: mean(converged().filter_map(|r| r.iters_first)),
                mean_iters_conv: mean(converged().map(|r| r.iters_conv)),
            }
        })
        .collect()
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub const CSV_HEADER: &str =
    "seed,n_obstacles,method,converged,safe,goal_reached,iters_first,iters_conv,cost,wall_ms";

/// One CSV row in [`CSV_HEADER`] order. Missing values are empty fields.
pub fn csv_row(r: &ExperimentRecord) -> String {
    let opt = |v: Option<String>| v.unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.seed,
        r.n_obstacles,
        r.method,
        r.converged,
        r.safe,
        r.goal_reached,
        opt(r.iters_first.map(|v| v.to_string())),
        r.iters_conv,
        fmt_f64(r.cost),
        opt(r.wall_ms.map(|v| format!("{v:.3}"))),
    )
}

pub fn write_csv<W: Write>(mut w: W, records: &[ExperimentRecord]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", csv_row(r))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: usize, method: Method, conv: bool, safe: bool, goal: bool, first: Option<usize>, iters: usize) -> ExperimentRecord {
        ExperimentRecord {
            seed: 0,
            n_obstacles: n,
            method,
            termination: Some(if conv { Termination::Converged } else { Termination::MaxIters }),
            converged: conv,
            safe,
            goal_reached: goal,
            iters_first: first,
            iters_conv: iters,
            cost: 1.0,
            wall_ms: None,
            error: None,
        }
    }

    #[test]
    fn single_record_summary() {
        let rows = aggregate(&[rec(5, Method::Tdbas, true, true, true, Some(7), 7)]);
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!((r.safe_pct, r.safe_goal_pct), (100.0, 100.0));
        assert_eq!((r.mean_iters_first, r.mean_iters_conv), (Some(7.0), Some(7.0)));
    }

    #[test]
    fn mixed_records_summary() {
        let mut diverged = rec(1, Method::Al, false, false, false, None, 3);
        diverged.termination = Some(Termination::Diverged);
        diverged.cost = f64::NAN;
        let rows = aggregate(&[
            rec(1, Method::Al, true, true, true, Some(4), 10),
            rec(1, Method::Al, true, true, false, None, 20),
            rec(1, Method::Al, false, true, true, Some(2), 500),
            rec(1, Method::Al, true, false, true, Some(9), 30),
            diverged,
        ]);
        let r = &rows[0];
        assert_eq!((r.runs, r.diverged), (5, 1));
        assert_eq!(r.safe_pct, 60.0);
        assert_eq!(r.safe_goal_pct, 40.0);
        assert_eq!(r.mean_iters_first, Some(6.5));
        assert_eq!(r.mean_iters_conv, Some(20.0));
    }

    #[test]
    fn empty_buckets_are_omitted() {
        let rows = aggregate(&[rec(1, Method::Tdbas, false, false, false, None, 500)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_iters_conv, None);
        assert!(aggregate(&[]).is_empty());
    }

    #[test]
    fn csv_leaves_missing_fields_empty() {
        let row = csv_row(&rec(25, Method::Dbas, true, true, false, None, 12));
        assert_eq!(row, "0,25,dbas,true,true,false,,12,1.0,");
        assert_eq!(CSV_HEADER.split(',').count(), row.split(',').count());
    }

    #[test]
    fn suite_is_paired_and_sorted() {
        let spec = SuiteSpec {
            kind: FieldKind::Rect,
            counts: vec![1],
            n_per_count: 3,
            methods: vec![Method::Tdbas, Method::Dbas],
            first_seed: 0,
            timing: false,
        };
        let records = run_suite(&spec, |_| {});
        assert_eq!(records.len(), 6);
        for pair in records.chunks(2) {
            assert_eq!(pair[0].seed, pair[1].seed);
            assert_eq!((pair[0].method, pair[1].method), (Method::Tdbas, Method::Dbas));
        }
    }
}
