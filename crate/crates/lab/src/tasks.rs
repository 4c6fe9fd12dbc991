//! The six scenario tasks. Each returns a JSON summary and in-memory
//! artifacts; nothing here touches the file system.

use std::f64::consts::PI;
use std::io;

use qtraj_core::export::write_table;
use qtraj_core::grid::Grid;
use qtraj_core::microstate::{build_microstate, qshje_residual, Microstate};
use qtraj_core::schrodinger::{
    find_bound_eigenvalues, solution_pair, EigenSolution, ScatteringState, SolutionPair,
    DEFAULT_EIGEN_TOL,
};
use qtraj_core::spectral::dominant_frequency;
use qtraj_core::trajectory::{
    bohm_floyd_time_deformation, epoch_identity_check, integrate_trajectory,
    microstate_initial_kinematics, BohmRule, FloydRule, Kinematics, TrajectoryResult, VelocityRule,
};
use qtraj_core::variation::{
    beat_frame, delta_t_delta_e_continuum, delta_t_delta_e_discrete, time_sweep, write_sweep,
    EnergyDerivativeModel, SweepRow, VariationFrame, DEFAULT_RELATIVE_DE,
};
use qtraj_core::{PotentialSpec, SpectrumClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Dynamics, ScenarioConfig, TaskKind};
use crate::error::{Context, LabError, Result};
use crate::registry::Artifact;

pub struct TaskOutput {
    pub summary: Value,
    pub artifacts: Vec<Artifact>,
}

pub fn execute(config: &ScenarioConfig, task: TaskKind) -> Result<TaskOutput> {
    config.validate(task)?;
    let spec = config.potential_spec()?;
    let grid = config.grid(&spec)?;
    let mut out = match task {
        TaskKind::Solve => solve(config, &spec, &grid),
        TaskKind::Microstate => microstate(config, &spec, &grid),
        TaskKind::DtdeSweep => dtde_sweep(config, &spec, &grid),
        TaskKind::Trajectory => trajectory(config, &spec, &grid),
        TaskKind::Compare => compare(config, &spec),
        TaskKind::BeatScan => beat_scan(config, &spec, &grid),
    }?;
    if let Value::Object(map) = &mut out.summary {
        map.insert("task".into(), json!(task.name()));
        map.insert("potential".into(), json!(spec.family_name()));
        map.insert("seed".into(), json!(config.seed));
    }
    Ok(out)
}

fn csv(write: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory cannot fail");
    buf
}

/// JSON cannot carry NaN or infinities; they become `null`.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}

fn solve_levels(spec: &PotentialSpec, grid: &Grid, count: usize) -> Result<Vec<EigenSolution>> {
    let eig = find_bound_eigenvalues(spec, grid, count, DEFAULT_EIGEN_TOL)
        .context("schrodinger1d: bound states")?;
    if eig.len() < count {
        return Err(LabError::config(
            "params",
            format!("only {} levels are bound on this grid, {count} requested", eig.len()),
        ));
    }
    Ok(eig)
}

fn eigenstate(spec: &PotentialSpec, grid: &Grid, level: usize) -> Result<EigenSolution> {
    let first = spec.first_quantum_number();
    let mut eig = solve_levels(spec, grid, level - first + 1).map_err(|e| match e {
        LabError::Config { message, .. } => LabError::config("params.level", message),
        other => other,
    })?;
    Ok(eig.swap_remove(level - first))
}

fn build(config: &ScenarioConfig, spec: &PotentialSpec, pair: &SolutionPair) -> Result<Microstate> {
    let g = pair.grid();
    let q_ref = config.params.q_ref.unwrap_or_else(|| g.q(g.midpoint_index()));
    build_microstate(spec, pair, config.coefficients()?, q_ref).context("qshje_microstates: build")
}

fn microstate_for(config: &ScenarioConfig, spec: &PotentialSpec, grid: &Grid) -> Result<Microstate> {
    let mut pair = match (spec.spectrum_class(), config.params.level) {
        (SpectrumClass::Continuous, _) | (_, None) => {
            let energy = config.params.energy.unwrap_or(f64::NAN);
            solution_pair(spec, energy, grid).context("schrodinger1d: solution pair")?
        }
        (_, Some(level)) => SolutionPair::from_eigen(&eigenstate(spec, grid, level)?)
            .context("schrodinger1d: eigen pair")?,
    };
    if let Some([lo, hi]) = config.params.window {
        pair = pair.window(lo, hi).context("schrodinger1d: window")?;
    }
    build(config, spec, &pair)
}

fn frame_for(
    config: &ScenarioConfig,
    spec: &PotentialSpec,
    grid: &Grid,
    levels: [usize; 2],
) -> Result<VariationFrame> {
    let window = config.params.window.map(|[a, b]| (a, b));
    beat_frame(
        spec,
        grid,
        (levels[0], levels[1]),
        config.coefficients()?,
        window,
        config.params.q_ref,
    )
    .context("energy_variation: beat frame")
}

/// Default probe: 30% into the frame, off the symmetry point of symmetric wells.
fn probe(config: &ScenarioConfig, grid: &Grid) -> f64 {
    config
        .params
        .q_probe
        .unwrap_or_else(|| grid.q_min() + 0.3 * (grid.q_max() - grid.q_min()))
}

fn solve(config: &ScenarioConfig, spec: &PotentialSpec, grid: &Grid) -> Result<TaskOutput> {
    let n = config.params.n_max;
    let eig = solve_levels(spec, grid, n)?;
    let first = spec.first_quantum_number();
    let analytic = spec.analytic_spectrum(n);
    let mut drifts = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for (k, e) in eig.iter().enumerate() {
        let drift = SolutionPair::from_eigen(e)
            .context("schrodinger1d: eigen pair")?
            .wronskian_drift();
        drifts.push(drift);
        let exact = analytic.as_ref().map_or(f64::NAN, |a| a[k]);
        rows.push(vec![
            (first + k) as f64,
            e.energy,
            exact,
            ((e.energy - exact) / exact).abs(),
            drift,
        ]);
    }
    let energies: Vec<f64> = eig.iter().map(|e| e.energy).collect();
    let max_rel = rows.iter().map(|r| r[3]).fold(f64::NAN, f64::max);
    let mut summary = json!({
        "levels": (first..first + n).collect::<Vec<_>>(),
        "eigenvalues": energies,
        "analytic": analytic,
        "max_relative_error": num(max_rel),
        "max_wronskian_drift": drifts.iter().copied().fold(0.0, f64::max),
        "grid_points": grid.len(),
    });
    if config.params.convergence {
        summary["convergence"] = convergence(spec, grid, n)?;
    }

    let mut columns = vec!["q".to_string()];
    columns.extend((first..first + n).map(|l| format!("psi_{l}")));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let fields: Vec<Vec<f64>> = (0..grid.len())
        .map(|i| {
            let mut row = vec![grid.q(i)];
            row.extend(eig.iter().map(|e| e.psi.values[i]));
            row
        })
        .collect();
    Ok(TaskOutput {
        summary,
        artifacts: vec![
            Artifact::new(
                "spectrum",
                "spectrum.csv",
                csv(|b| write_table(b, &["level", "energy", "analytic", "relative_error", "wronskian_drift"], &rows)),
            ),
            Artifact::new("eigenfunctions", "eigenfunctions.csv", csv(|b| write_table(b, &cols, &fields))),
        ],
    })
}

/// Energies on the grid and two successive halvings of its spacing; the
/// observed order per level compares successive errors against the closed
/// form when there is one, otherwise successive differences.
fn convergence(spec: &PotentialSpec, grid: &Grid, n: usize) -> Result<Value> {
    let grids = [*grid, grid.refined(), grid.refined().refined()];
    let runs: Vec<Vec<f64>> = grids
        .par_iter()
        .map(|g| Ok(solve_levels(spec, g, n)?.iter().map(|e| e.energy).collect()))
        .collect::<Result<_>>()?;
    let analytic = spec.analytic_spectrum(n);
    let orders: Vec<Value> = (0..n)
        .map(|k| {
            let (e0, e1, e2) = (runs[0][k], runs[1][k], runs[2][k]);
            let ratio = match &analytic {
                Some(a) => (e0 - a[k]).abs() / (e1 - a[k]).abs(),
                None => (e0 - e1).abs() / (e1 - e2).abs(),
            };
            num(ratio.log2())
        })
        .collect();
    Ok(json!({
        "grid_points": grids.iter().map(Grid::len).collect::<Vec<_>>(),
        "energies": runs,
        "observed_order": orders,
    }))
}

fn microstate(config: &ScenarioConfig, spec: &PotentialSpec, grid: &Grid) -> Result<TaskOutput> {
    let ms = microstate_for(config, spec, grid)?;
    let (t, q, v) = (ms.kinetic_energy(), ms.quantum_potential(), ms.potential_samples());
    let bohm = ms.bohm_potential();
    let interior = ms.interior();
    let balance = interior
        .clone()
        .map(|i| (t[i] + q[i] + v[i] - ms.energy).abs())
        .fold(0.0, f64::max);
    let agreement = interior
        .clone()
        .filter(|i| !bohm.excluded.contains(i))
        .map(|i| (q[i] - bohm.values[i]).abs())
        .fold(0.0, f64::max);
    let flux: Vec<f64> = ms.r.iter().zip(&ms.w_prime).map(|(r, w)| r * r * w).collect();
    let spread = flux.iter().map(|c| ((c - flux[0]) / flux[0]).abs()).fold(0.0, f64::max);
    let c = ms.coefficients;
    let summary = json!({
        "energy": ms.energy,
        "level": config.params.level,
        "coefficients": [c.a, c.b, c.c],
        "q_ref": ms.q_ref,
        "qshje_residual": qshje_residual(&ms),
        "energy_balance_max": balance,
        "bohm_schwarzian_max_gap": agreement,
        "bohm_excluded_points": bohm.excluded.len(),
        "amplitude_flux_spread": spread,
        "w_prime_range": [
            ms.w_prime.iter().copied().fold(f64::INFINITY, f64::min),
            ms.w_prime.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ],
        "grid_points": ms.grid.len(),
    });
    Ok(TaskOutput {
        summary,
        artifacts: vec![Artifact::new("field", "microstate.csv", csv(|b| ms.write_csv(b)))],
    })
}

fn dtde_sweep(config: &ScenarioConfig, spec: &PotentialSpec, grid: &Grid) -> Result<TaskOutput> {
    let p = &config.params;
    let mass = spec.units.mass;
    if spec.spectrum_class() == SpectrumClass::Continuous {
        let energy = p.energy.unwrap_or(f64::NAN);
        let d_e = p.d_e.unwrap_or(DEFAULT_RELATIVE_DE * energy.abs());
        let rows: Vec<SweepRow> = linspace(grid.q_min(), grid.q_max(), p.samples)
            .into_iter()
            .map(|q| {
                let dtde = delta_t_delta_e_continuum(spec, energy, d_e, q)
                    .context("energy_variation: continuum dT/dE")?;
                Ok(SweepRow {
                    t: 0.0,
                    q,
                    dtde,
                    pole_flag: 0.0,
                })
            })
            .collect::<Result<_>>()?;
        let state = ScatteringState::new(spec, energy).context("schrodinger1d: scattering")?;
        let summary = json!({
            "energy": energy,
            "d_e": d_e,
            "sign_changes": sign_changes(&rows),
            "reflection": [state.r.re, state.r.im],
            "k_left": state.k_left,
            "k_right": [state.k_right.re, state.k_right.im],
        });
        return Ok(TaskOutput {
            summary,
            artifacts: vec![Artifact::new("sweep", "sweep.csv", csv(|b| write_sweep(b, &rows, mass)))],
        });
    }

    let levels = config.beat_levels(spec);
    let frame = frame_for(config, spec, grid, levels)?;
    let q = probe(config, frame.grid());
    let times = linspace(p.t_span[0], p.t_span[1], p.samples);
    let rows = time_sweep(&frame, q, &times, p.delta_alpha).context("energy_variation: sweep")?;
    let poles = rows.iter().filter(|r| r.pole_flag != 0.0).count();

    // Seeded spot checks, for comparison against an independent oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let g = frame.grid();
    let margin = 0.05 * (g.q_max() - g.q_min());
    let period = frame.beat_period();
    let checks: Vec<Value> = (0..p.check_points)
        .map(|_| {
            let q = rng.gen_range(g.q_min() + margin..g.q_max() - margin);
            let t = rng.gen_range(0.0..period);
            let value = delta_t_delta_e_discrete(&frame, q, t, p.delta_alpha).ok();
            json!({ "q": q, "t": t, "dtde": value.map(num) })
        })
        .collect();
    let summary = json!({
        "levels": levels,
        "energies": [frame.lower.energy, frame.upper.energy],
        "beat_period": period,
        "q_probe": q,
        "delta_alpha": p.delta_alpha,
        "pole_rows": poles,
        "check_points": checks,
    });
    Ok(TaskOutput {
        summary,
        artifacts: vec![Artifact::new("sweep", "sweep.csv", csv(|b| write_sweep(b, &rows, mass)))],
    })
}

/// Positions where `dT/dE` changes sign, by linear interpolation.
fn sign_changes(rows: &[SweepRow]) -> Vec<f64> {
    rows.windows(2)
        .filter(|w| w[0].dtde.is_finite() && w[1].dtde.is_finite())
        .filter(|w| (w[0].dtde > 0.0) != (w[1].dtde > 0.0))
        .map(|w| w[0].q + (w[1].q - w[0].q) * w[0].dtde / (w[0].dtde - w[1].dtde))
        .collect()
}

fn beat_scan(config: &ScenarioConfig, spec: &PotentialSpec, grid: &Grid) -> Result<TaskOutput> {
    let p = &config.params;
    let levels = config.beat_levels(spec);
    let frame = frame_for(config, spec, grid, levels)?;
    let q = probe(config, frame.grid());
    let period = frame.beat_period();
    let expected = 1.0 / period;
    let rule = FloydRule::Beat {
        frame,
        delta_alpha: p.delta_alpha,
    };
    let n = p.periods * p.samples_per_period;
    let dt = period / p.samples_per_period as f64;
    let velocity = |t: f64| rule.kinematics(q, t).map(|k| k.v).ok();
    let samples: Vec<(f64, Option<f64>)> = (0..n).map(|k| (k as f64 * dt, velocity(k as f64 * dt))).collect();
    let signal: Vec<f64> = samples.iter().map(|(_, v)| v.unwrap_or(0.0)).collect();
    let singular = samples.iter().filter(|(_, v)| v.is_none()).count();
    let peak = dominant_frequency(&signal, dt);

    // Magnitude of the component at the beat frequency itself, relative to
    // the peak, and how far the signal is from repeating every half beat.
    let beat_bin = p.periods;
    let mean = signal.iter().sum::<f64>() / n as f64;
    let component = |bin: usize| -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, x) in signal.iter().enumerate() {
            let arg = -2.0 * PI * (bin * k) as f64 / n as f64;
            re += (x - mean) * arg.cos();
            im += (x - mean) * arg.sin();
        }
        re.hypot(im)
    };
    let half = p.samples_per_period / 2;
    let half_gap = if p.samples_per_period.is_multiple_of(2) {
        (0..n - half)
            .filter_map(|k| Some((samples[k].1? - samples[k + half].1?).abs()))
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    let beat_relative = peak.map_or(f64::NAN, |pk| component(beat_bin) / pk.magnitude);
    let matches = peak.is_some_and(|pk| (pk.frequency - expected).abs() <= pk.bin_width);

    let FloydRule::Beat { frame, .. } = &rule else {
        unreachable!()
    };
    let summary = json!({
        "levels": levels,
        "energies": [frame.lower.energy, frame.upper.energy],
        "beat_period": period,
        "expected_frequency": expected,
        "q_probe": q,
        "samples": n,
        "dt": dt,
        "singular_samples": singular,
        "peak": peak.map(|pk| json!({
            "frequency": pk.frequency,
            "bin": pk.bin,
            "bin_width": pk.bin_width,
            "magnitude": pk.magnitude,
        })),
        "peak_matches_beat": matches,
        "beat_bin_relative_magnitude": num(beat_relative),
        "half_period_max_gap": num(half_gap),
    });
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|(t, v)| vec![*t, q, v.unwrap_or(f64::NAN), if v.is_some() { 0.0 } else { 1.0 }])
        .collect();
    Ok(TaskOutput {
        summary,
        artifacts: vec![Artifact::new(
            "sweep",
            "beat_velocity.csv",
            csv(|b| write_table(b, &["t", "q", "v", "singular_flag"], &rows)),
        )],
    })
}

/// The velocity rules a trajectory task can run.
#[allow(clippy::large_enum_variant)]
enum Rule {
    Floyd(FloydRule),
    Bohm(BohmRule),
}

impl Rule {
    fn as_dyn(&self) -> &dyn VelocityRule {
        match self {
            Self::Floyd(r) => r,
            Self::Bohm(r) => r,
        }
    }
}

fn trajectory_rule(config: &ScenarioConfig, spec: &PotentialSpec, grid: &Grid) -> Result<Rule> {
    let p = &config.params;
    let bound = spec.spectrum_class() != SpectrumClass::Continuous;
    let energy = p.energy.unwrap_or(f64::NAN);
    if p.dynamics == Dynamics::Bohm {
        return Ok(Rule::Bohm(if bound {
            let e = eigenstate(spec, grid, p.level.unwrap_or(0))?;
            BohmRule::sampled(e.psi.to_complex(), spec.units)
        } else {
            BohmRule::scattering(spec, energy).context("trajectories: Bohm rule")?
        }));
    }
    let rule = match p.model.expect("validated") {
        EnergyDerivativeModel::ClassicalUnity => FloydRule::Classical(microstate_for(config, spec, grid)?),
        EnergyDerivativeModel::ContinuumLimit { d_e } => {
            FloydRule::continuum(spec, energy, Some(d_e)).context("trajectories: Floyd rule")?
        }
        EnergyDerivativeModel::DiscreteBeat { i, j, delta_alpha } => FloydRule::Beat {
            frame: frame_for(config, spec, grid, [i, j])?,
            delta_alpha,
        },
    };
    Ok(Rule::Floyd(rule))
}

fn run_summary(run: &TrajectoryResult, q0: f64, extra: Value) -> Value {
    let last = run.last();
    let mut v = json!({
        "q0": q0,
        "samples": run.samples.len(),
        "final": { "t": last.t, "q": last.q, "v": num(last.v), "t_q": num(last.t_q) },
        "events": serde_json::to_value(&run.events).expect("events serialize"),
        "rule": run.provenance,
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut v, extra) {
        map.extend(more);
    }
    v
}

fn trajectory(config: &ScenarioConfig, spec: &PotentialSpec, grid: &Grid) -> Result<TaskOutput> {
    let p = &config.params;
    let rule = trajectory_rule(config, spec, grid)?;
    let [t0, t1] = p.t_span;
    let runs: Vec<(TrajectoryResult, Value)> = p
        .q0
        .par_iter()
        .map(|&q0| {
            let run = integrate_trajectory(rule.as_dyn(), q0, t0, t1, &config.integrator)
                .context(&format!("trajectories: integrate from q0 = {q0}"))?;
            let extra = match &rule {
                Rule::Floyd(f) => json!({
                    "epoch_identity": epoch_identity_check(f, &run).ok().map(num),
                    "initial_kinematics": match microstate_initial_kinematics(f, q0, t0) {
                        Ok((q, v, a)) => json!([q, v, a]),
                        Err(e) => json!(e.to_string()),
                    },
                }),
                Rule::Bohm(_) => json!({}),
            };
            let summary = run_summary(&run, q0, extra);
            Ok((run, summary))
        })
        .collect::<Result<_>>()?;
    let summary = json!({
        "dynamics": p.dynamics,
        "model": p.model,
        "t_span": p.t_span,
        "runs": runs.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>(),
    });
    let artifacts = runs
        .iter()
        .enumerate()
        .map(|(k, (run, _))| Artifact::new("trajectory", format!("trajectory_{k:02}.csv"), csv(|b| run.write_csv(b))))
        .collect();
    Ok(TaskOutput { summary, artifacts })
}

/// Newtonian motion to the right at energy `E`.
struct ClassicalRule<'a> {
    spec: &'a PotentialSpec,
    energy: f64,
}

impl VelocityRule for ClassicalRule<'_> {
    fn kinematics(&self, q: f64, t: f64) -> qtraj_core::Result<Kinematics> {
        let kinetic = self.energy - self.spec.evaluate(q)?;
        if !(kinetic > 0.0) {
            return Err(qtraj_core::Error::SingularKinematics {
                q,
                t,
                reason: "classically forbidden".into(),
            });
        }
        let v = (2.0 * kinetic / self.spec.units.mass).sqrt();
        Ok(Kinematics {
            v,
            dtde: 1.0,
            energy_gradient: 1.0 / v,
        })
    }

    fn domain(&self) -> (f64, f64) {
        (self.spec.q_min, self.spec.q_max)
    }

    fn describe(&self) -> String {
        format!("classical({} E = {})", self.spec.family_name(), self.energy)
    }
}

fn compare(config: &ScenarioConfig, spec: &PotentialSpec) -> Result<TaskOutput> {
    let p = &config.params;
    let energy = p.energy.unwrap_or(f64::NAN);
    let [t0, t1] = p.t_span;
    let cfg = &config.integrator;
    let bohm = BohmRule::scattering(spec, energy).context("trajectories: Bohm rule")?;
    let floyd = FloydRule::continuum(spec, energy, p.d_e).context("trajectories: Floyd rule")?;
    let classical = ClassicalRule { spec, energy };
    let state = ScatteringState::new(spec, energy).context("schrodinger1d: scattering")?;

    struct Outcome {
        summary: Value,
        artifacts: Vec<Artifact>,
        sign_changes: Vec<Value>,
    }
    let outcomes: Vec<Outcome> = p
        .q0
        .par_iter()
        .enumerate()
        .map(|(k, &q0)| {
            let ctx = |what: &str| format!("trajectories: {what} from q0 = {q0}");
            let record = bohm_floyd_time_deformation(spec, energy, q0, t1 - t0, p.trim, cfg)
                .context(&ctx("time deformation"))?;
            let b = integrate_trajectory(&bohm, q0, t0, t1, cfg).context(&ctx("Bohm path"))?;
            let f = integrate_trajectory(&floyd, q0, t0, t1, cfg).context(&ctx("Floyd path"))?;
            let c = integrate_trajectory(&classical, q0, t0, t1, cfg).context(&ctx("classical path"))?;
            let table: Vec<Vec<f64>> = linspace(t0, t1, p.samples)
                .into_iter()
                .map(|t| {
                    let at = |r: &TrajectoryResult| r.position_at(t).unwrap_or(f64::NAN);
                    vec![t, at(&b), at(&f), at(&c)]
                })
                .collect();
            let summary = json!({
                "q0": q0,
                "dtde_sign_changes": serde_json::to_value(&record.dtde_sign_changes).expect("serializes"),
                "segments": serde_json::to_value(&record.segments).expect("serializes"),
                "max_discrepancy": num(record.max_discrepancy()),
                "floyd_epoch_identity": epoch_identity_check(&floyd, &f).ok().map(num),
                "bohm_epoch_identity": epoch_identity_check(&bohm, &b).ok().map(num),
                "bohm_final_q": b.last().q,
                "floyd_final_q": f.last().q,
                "classical_final_q": c.last().q,
                "floyd_events": serde_json::to_value(&f.events).expect("serializes"),
            });
            let artifacts = vec![
                Artifact::new(
                    "comparison",
                    format!("compare_{k:02}.csv"),
                    csv(|w| write_table(w, &["t", "q_bohm", "q_floyd", "q_classical"], &table)),
                ),
                Artifact::new("comparison", format!("deformation_{k:02}.json"), crate::registry::sorted_json(&record)),
                Artifact::new("trajectory", format!("bohm_{k:02}.csv"), csv(|w| b.write_csv(w))),
                Artifact::new("trajectory", format!("floyd_{k:02}.csv"), csv(|w| f.write_csv(w))),
                Artifact::new("trajectory", format!("classical_{k:02}.csv"), csv(|w| c.write_csv(w))),
            ];
            let sign_changes = record
                .dtde_sign_changes
                .iter()
                .map(|e| json!({ "q0": q0, "t": e.t, "q": e.q }))
                .collect();
            Ok(Outcome {
                summary,
                artifacts,
                sign_changes,
            })
        })
        .collect::<Result<_>>()?;

    let summary = json!({
        "energy": energy,
        "reflection": [state.r.re, state.r.im],
        "t_span": p.t_span,
        "trim": p.trim,
        "dtde_sign_changes": outcomes.iter().flat_map(|o| o.sign_changes.clone()).collect::<Vec<_>>(),
        "runs": outcomes.iter().map(|o| o.summary.clone()).collect::<Vec<_>>(),
    });
    let artifacts = outcomes.into_iter().flat_map(|o| o.artifacts).collect();
    Ok(TaskOutput { summary, artifacts })
}
