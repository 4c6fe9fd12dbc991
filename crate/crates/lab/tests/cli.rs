use std::fs;
use std::path::Path;
use std::process::Command;

use qtraj_core::export::read_table;
use qtraj_lab::report::{describe_run, export};
use qtraj_lab::{run_scenario, LabError, Registry, RunRecord, ScenarioConfig};

fn config(text: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml(text).unwrap()
}

fn run(text: &str, root: &Path) -> RunRecord {
    let c = config(text);
    let task = c.resolve_task(None).unwrap();
    run_scenario(&c, task, root).unwrap()
}

fn artifact(root: &Path, record: &RunRecord, kind: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let a = record.artifacts.iter().find(|a| a.kind == kind).unwrap();
    read_table(&fs::read_to_string(root.join(&a.path)).unwrap()).unwrap()
}

const WELL_SOLVE: &str = r#"
task = "solve"
[potential]
family = "infinite_well"
width = 1.0
[params]
n_max = 3
"#;

const FREE_TRAJECTORY: &str = r#"
task = "trajectory"
[potential]
family = "constant"
value = 0.0
[params]
energy = 0.5
model = { kind = "continuum_limit", d_e = 5e-6 }
q0 = [0.0]
t_span = [0.0, 1.0]
"#;

const STEP_COMPARE: &str = r#"
task = "compare"
[potential]
family = "step"
height = 0.75
[params]
energy = 1.0
q0 = [-3.2]
t_span = [0.0, 3.0]
"#;

const BEAT_SCAN: &str = r#"
task = "beat-scan"
[potential]
family = "infinite_well"
width = 1.0
[params]
levels = [1, 2]
coefficients = [2.0, 1.0, 0.0]
q_probe = 0.3
periods = 4
"#;

const WELL_MICROSTATE: &str = r#"
task = "microstate"
[potential]
family = "infinite_well"
width = 1.0
[params]
level = 1
coefficients = [1.0, 1.0, 0.5]
"#;

const BEAT_SWEEP: &str = r#"
task = "dtde-sweep"
seed = 3
[potential]
family = "infinite_well"
width = 1.0
[params]
levels = [1, 2]
coefficients = [2.0, 1.0, 0.0]
t_span = [0.0, 0.5]
samples = 200
check_points = 5
"#;

#[test]
fn solve_lists_well_levels() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(WELL_SOLVE, dir.path());
    let got: Vec<f64> = serde_json::from_value(rec.summary["eigenvalues"].clone()).unwrap();
    for (g, want) in got.iter().zip([4.93480, 19.73921, 44.41322]) {
        assert!((g - want).abs() < 1e-5, "{g} vs {want}");
    }
    let (cols, rows) = artifact(dir.path(), &rec, "spectrum");
    assert_eq!(cols[..2], ["level", "energy"]);
    assert_eq!(rows.len(), 3);
}

#[test]
fn free_trajectory_moves_uniformly() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(FREE_TRAJECTORY, dir.path());
    let (cols, rows) = artifact(dir.path(), &rec, "trajectory");
    assert_eq!(cols, ["t", "q", "v", "t_q", "dTdE", "dQdE", "event_flag"]);
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - 1.0).abs() < 1e-8);
}

#[test]
fn step_compare_reports_sign_changes() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(STEP_COMPARE, dir.path());
    let changes = rec.summary["dtde_sign_changes"].as_array().unwrap();
    assert!(!changes.is_empty());
    let (cols, _) = artifact(dir.path(), &rec, "comparison");
    assert_eq!(cols, ["t", "q_bohm", "q_floyd", "q_classical"]);
    let r = rec.summary["reflection"][0].as_f64().unwrap();
    assert!((r - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn describe_reports_beat_period() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(BEAT_SCAN, dir.path());
    let reg = Registry::open(dir.path()).unwrap();
    let text = describe_run(&reg, &rec.id).unwrap();
    assert!(text.contains("beat period 0.424413 for (1, 2) of InfiniteWell"), "{text}");
    assert!(matches!(describe_run(&reg, "missing"), Err(LabError::NotFound(_))));
}

#[test]
fn export_kinds_and_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let reg = Registry::open(dir.path()).unwrap();
    let ms = run(WELL_MICROSTATE, dir.path());
    let files = export(&reg, &ms.id, "field", None).unwrap();
    let (cols, _) = read_table(&fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(cols[..6], ["q", "w_prime", "w", "r", "q_schwarzian", "q_bohm"]);
    match export(&reg, &ms.id, "trajectory", None) {
        Err(LabError::KindMismatch { available, .. }) => assert_eq!(available, ["field", "summary"]),
        other => panic!("{other:?}"),
    }

    let sweep = run(BEAT_SWEEP, dir.path());
    let dest = dir.path().join("exported");
    let files = export(&reg, &sweep.id, "sweep", Some(&dest)).unwrap();
    assert!(files[0].starts_with(&dest));
    let (cols, rows) = read_table(&fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(cols[..3], ["t", "q", "dTdE"]);
    assert!(cols.contains(&"pole_flag".to_string()));
    assert_eq!(rows.len(), 200);
    assert_eq!(sweep.summary["check_points"].as_array().unwrap().len(), 5);
}

#[test]
fn reruns_are_bit_identical_and_registry_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let reg = Registry::open(dir.path()).unwrap();
    let a = run(BEAT_SWEEP, dir.path());
    let b = run(BEAT_SWEEP, dir.path());
    assert_ne!(a.id, b.id);
    assert_eq!(a.scenario_hash, b.scenario_hash);
    for (x, y) in a.artifacts.iter().zip(&b.artifacts) {
        assert_eq!(x.sha256, y.sha256);
        assert_eq!(fs::read(reg.artifact_path(x)).unwrap(), fs::read(reg.artifact_path(y)).unwrap());
    }
    for entry in reg.index().unwrap() {
        reg.verify(&reg.load(&entry.id).unwrap()).unwrap();
    }
    let reseeded = run(&BEAT_SWEEP.replace("seed = 3", "seed = 4"), dir.path());
    assert_ne!(reseeded.scenario_hash, a.scenario_hash);
}

fn qtraj(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qtraj")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("runs");
    let root_s = root.to_str().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };

    let good = write("solve.toml", WELL_SOLVE);
    let (code, stdout, _) = qtraj(&["solve", "--config", &good, "--out", root_s, "--threads", "2"]);
    assert_eq!(code, 0);
    let id = stdout.trim().to_string();
    let (code, text, _) = qtraj(&["describe", &id, "--out", root_s]);
    assert_eq!(code, 0);
    assert!(text.contains("eigenvalues"));
    let (code, _, err) = qtraj(&["describe", "nope", "--out", root_s]);
    assert_eq!(code, 2);
    assert!(err.contains("not found"));
    let (code, _, err) = qtraj(&["export", &id, "--kind", "sweep", "--out", root_s]);
    assert_eq!(code, 2);
    assert!(err.contains("available: eigenfunctions, spectrum, summary"), "{err}");

    // Wrong subcommand for the file, and a bad coefficient set.
    let (code, _, _) = qtraj(&["compare", "--config", &good, "--out", root_s]);
    assert_eq!(code, 2);
    let bad = write("bad.toml", &WELL_MICROSTATE.replace("0.5]", "3.0]"));
    let (code, _, err) = qtraj(&["microstate", "--config", &bad, "--out", root_s]);
    assert_eq!(code, 2);
    assert!(err.contains("params.coefficients"), "{err}");

    // The harmonic tails underflow W' unless the microstate is windowed.
    let tails = write(
        "tails.toml",
        r#"
task = "microstate"
[potential]
family = "harmonic"
omega = 1.0
[grid]
points = 1601
[params]
level = 0
"#,
    );
    let (code, _, err) = qtraj(&["microstate", "--config", &tails, "--out", root_s]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("qshje_microstates"), "{err}");
}
