//! Human-readable reports and plot-data export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::{ScenarioConfig, TaskKind};
use crate::error::{LabError, Result};
use crate::registry::{Registry, RunRecord};

/// What a scenario file would do, without running it.
pub fn describe_config(config: &ScenarioConfig, task: Option<TaskKind>) -> Result<String> {
    let spec = config.potential_spec()?;
    let grid = config.grid(&spec)?;
    let mut s = String::new();
    let _ = writeln!(s, "potential: {} {:?}", spec.family_name(), spec.family);
    let _ = writeln!(s, "domain: [{}, {}]", spec.q_min, spec.q_max);
    let _ = writeln!(s, "spectrum: {:?}", spec.spectrum_class());
    let _ = writeln!(s, "units: hbar = {}, mass = {}", spec.units.hbar, spec.units.mass);
    let _ = writeln!(s, "grid: {} points on [{}, {}]", grid.len(), grid.q_min(), grid.q_max());
    if let Some(levels) = spec.analytic_spectrum(3) {
        let first = spec.first_quantum_number();
        let shown: Vec<String> = levels
            .iter()
            .enumerate()
            .map(|(k, e)| format!("E_{} = {e:.6}", first + k))
            .collect();
        let _ = writeln!(s, "closed-form levels: {}", shown.join(", "));
    }
    match task.or(config.task) {
        Some(t) => {
            config.validate(t)?;
            let _ = writeln!(s, "task: {t}");
        }
        None => {
            let _ = writeln!(s, "task: none given");
        }
    }
    let _ = writeln!(s, "seed: {}", config.seed);
    Ok(s)
}

fn f(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), |x| format!("{x:.6}")),
        Value::String(text) => text.clone(),
        Value::Null => "n/a".into(),
        other => other.to_string(),
    }
}

/// Summary of a finished run.
pub fn describe_run(registry: &Registry, id: &str) -> Result<String> {
    let record = registry.load(id)?;
    let sum = &record.summary;
    let mut s = String::new();
    let _ = writeln!(s, "run {} ({})", record.id, record.task);
    let _ = writeln!(s, "scenario {}", record.scenario_hash);
    let _ = writeln!(s, "potential: {}", f(&sum["potential"]));
    let _ = writeln!(s, "seed: {}", sum["seed"]);
    match record.task.as_str() {
        "solve" => {
            let _ = writeln!(s, "eigenvalues: {}", sum["eigenvalues"]);
            let _ = writeln!(s, "max relative error: {}", f(&sum["max_relative_error"]));
        }
        "microstate" => {
            let _ = writeln!(s, "energy: {}", f(&sum["energy"]));
            let _ = writeln!(s, "qshje residual: {}", f(&sum["qshje_residual"]));
        }
        "beat-scan" | "dtde-sweep" if !sum["beat_period"].is_null() => {
            let levels = &sum["levels"];
            let _ = writeln!(
                s,
                "beat period {} for ({}, {}) of {}",
                f(&sum["beat_period"]),
                levels[0],
                levels[1],
                f(&sum["potential"])
            );
            if let Some(peak) = sum["peak"].as_object() {
                let _ = writeln!(
                    s,
                    "spectral peak {} (expected {}, bin width {})",
                    f(&peak["frequency"]),
                    f(&sum["expected_frequency"]),
                    f(&peak["bin_width"])
                );
            }
        }
        "dtde-sweep" => {
            let _ = writeln!(s, "dT/dE sign changes at q = {}", sum["sign_changes"]);
        }
        "compare" => {
            let changes = sum["dtde_sign_changes"].as_array().map_or(0, Vec::len);
            let _ = writeln!(s, "dT/dE sign changes along Bohm paths: {changes}");
        }
        "trajectory" => {
            let runs = sum["runs"].as_array().map_or(0, Vec::len);
            let _ = writeln!(s, "trajectories: {runs}");
        }
        _ => {}
    }
    let _ = writeln!(s, "artifacts:");
    for a in &record.artifacts {
        let _ = writeln!(s, "  {:<12} {}", a.kind, a.path.display());
    }
    Ok(s)
}

/// One line per registered run.
pub fn describe_index(registry: &Registry) -> Result<String> {
    let mut s = String::new();
    for e in registry.index()? {
        let _ = writeln!(s, "{}  {}", e.id, e.task);
    }
    if s.is_empty() {
        s.push_str("no runs recorded\n");
    }
    Ok(s)
}

/// Paths of the run's `kind` artifacts after checking their digests;
/// copied into `dest` when given.
pub fn export(registry: &Registry, id: &str, kind: &str, dest: Option<&Path>) -> Result<Vec<PathBuf>> {
    let record: RunRecord = registry.load(id)?;
    let chosen: Vec<_> = record.artifacts.iter().filter(|a| a.kind == kind).collect();
    if chosen.is_empty() {
        return Err(LabError::KindMismatch {
            id: id.to_string(),
            kind: kind.to_string(),
            available: record.kinds(),
        });
    }
    registry.verify(&record)?;
    let mut out = Vec::with_capacity(chosen.len());
    for a in chosen {
        let src = registry.artifact_path(a);
        match dest {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
                let name = src.file_name().expect("artifact has a file name").to_string_lossy();
                let target = dir.join(format!("{id}-{name}"));
                fs::copy(&src, &target).map_err(|e| LabError::io(&target, e))?;
                out.push(target);
            }
            None => out.push(src),
        }
    }
    Ok(out)
}
