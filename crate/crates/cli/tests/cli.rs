use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tdbas::scenarios::{ScenarioConfig, PRESETS};

fn tdbas(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdbas"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn presets_lists_every_shipped_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdbas(&["presets"], dir.path());
    assert_eq!(code(&out), 0);
    let listed = String::from_utf8(out.stdout).unwrap();
    for name in PRESETS {
        assert!(listed.contains(name), "{name} missing from:\n{listed}");
    }
}

#[test]
fn dumped_preset_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdbas(&["presets", "--dump", "robotarium"], dir.path());
    assert_eq!(code(&out), 0);
    let cfg = ScenarioConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, tdbas::scenarios::preset("robotarium").unwrap());
}

#[test]
fn corridor_tolerant_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdbas(&["solve", "--preset", "corridor", "--quiet", "--out", "res"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    for suffix in ["scenario.toml", "log.csv", "trajectory.csv", "overhead.svg", "barrier.svg"] {
        assert!(res.join(format!("corridor_tdbas_{suffix}")).is_file(), "{suffix}");
    }
    let traj = fs::read_to_string(res.join("corridor_tdbas_trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next().unwrap(), "k,t,x0,x1,x2,u0,u1,beta0,h0,h1,h2");
    assert_eq!(lines.count(), 301);
    let svg = fs::read_to_string(res.join("corridor_tdbas_overhead.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn corridor_classical_barrier_misses_the_goal() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdbas(&["solve", "--preset", "corridor", "--method", "dbas", "--quiet"], dir.path());
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn overrides_apply_to_scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("corridor.toml");
    fs::write(&scenario, tdbas::scenarios::build_corridor().to_toml()).unwrap();
    let out = tdbas(
        &["solve", "corridor.toml", "--set", "solver.max_iters=1", "--quiet"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    let written = fs::read_to_string(dir.path().join("out/corridor_tdbas_scenario.toml")).unwrap();
    assert_eq!(ScenarioConfig::from_toml(&written).unwrap().solver.max_iters, 1);
}

#[test]
fn malformed_scenario_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = tdbas::scenarios::build_corridor().to_toml();
    assert!(text.contains("horizon = 300"));
    fs::write(dir.path().join("bad.toml"), text.replace("horizon = 300", "horizon = \"long\"")).unwrap();
    let out = tdbas(&["solve", "bad.toml"], dir.path());
    assert_eq!(code(&out), 1);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line"), "{err}");
}

#[test]
fn unknown_scenario_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = tdbas::scenarios::build_corridor().to_toml();
    text.push_str("
radius_typo = 1.0
");
    fs::write(dir.path().join("typo.toml"), text).unwrap();
    let out = tdbas(&["solve", "typo.toml"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8(out.stderr).unwrap().contains("radius_typo"));
}

#[test]
fn unknown_preset_and_bad_override_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tdbas(&["solve", "--preset", "nowhere"], dir.path())), 1);
    assert_eq!(
        code(&tdbas(&["solve", "--preset", "corridor", "--set", "horizon"], dir.path())),
        1
    );
    assert_eq!(
        code(&tdbas(&["solve", "--preset", "corridor", "--set", "no.such.key=1"], dir.path())),
        1
    );
}

#[test]
fn barrier_field_writes_an_svg() {
    let dir = tempfile::tempdir().unwrap();
    for family in ["tolerant", "inverse", "log"] {
        let file = format!("{family}.svg");
        let out = tdbas(&["barrier-field", "--family", family, "--grid", "9,7", "--out", &file], dir.path());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let svg = fs::read_to_string(dir.path().join(&file)).unwrap();
        assert!(svg.contains("<ellipse"), "{family}");
    }
    assert_eq!(code(&tdbas(&["barrier-field", "--family", "tolerant", "--p=-1"], dir.path())), 1);
}

#[test]
fn bench_records_are_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["bench", "rect", "--counts", "1,3", "--n", "2", "--methods", "tdbas,dbas", "--out", out]
    };
    assert_eq!(code(&tdbas(&args("a.csv"), dir.path())), 0);
    assert_eq!(code(&tdbas(&args("b.csv"), dir.path())), 0);
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[0].starts_with("seed,n_obstacles,method"));
    assert!(dir.path().join("a.svg").is_file());
}
