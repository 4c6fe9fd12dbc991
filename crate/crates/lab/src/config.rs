//! Scenario files: one TOML document per experiment.
//!
//! ```toml
//! task = "beat-scan"
//! seed = 7
//!
//! [potential]
//! family = "infinite_well"
//! width = 1.0
//!
//! [grid]
//! points = 2001
//!
//! [params]
//! levels = [1, 2]
//! coefficients = [2.0, 1.0, 0.0]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use qtraj_core::grid::Grid;
use qtraj_core::microstate::MicrostateCoefficients;
use qtraj_core::trajectory::IntegratorConfig;
use qtraj_core::variation::EnergyDerivativeModel;
use qtraj_core::{PotentialFamily, PotentialSpec, SpectrumClass, Units};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Solve,
    Microstate,
    DtdeSweep,
    Trajectory,
    Compare,
    BeatScan,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Microstate => "microstate",
            Self::DtdeSweep => "dtde-sweep",
            Self::Trajectory => "trajectory",
            Self::Compare => "compare",
            Self::BeatScan => "beat-scan",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Potential family plus an optional domain. Wells and tables bring their
/// own domain; the other families fall back to a symmetric default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSection {
    #[serde(flatten)]
    pub family: PotentialFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub points: usize,
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            points: 2001,
            q_min: None,
            q_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Floyd,
    Bohm,
}

/// Task parameters. Each task reads the fields it needs and ignores the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Number of levels to solve.
    pub n_max: usize,
    /// Eigenstate label in the family's numbering (wells start at 1).
    pub level: Option<usize>,
    /// Energy of an unbound state.
    pub energy: Option<f64>,
    /// Beat pair `[i, j]` with `i < j`.
    pub levels: Option<[usize; 2]>,
    pub coefficients: [f64; 3],
    pub q_ref: Option<f64>,
    /// Restrict microstates to this sub-interval of the grid.
    pub window: Option<[f64; 2]>,
    pub delta_alpha: f64,
    pub model: Option<EnergyDerivativeModel>,
    pub dynamics: Dynamics,
    pub q0: Vec<f64>,
    pub t_span: [f64; 2],
    pub q_probe: Option<f64>,
    pub samples: usize,
    pub periods: usize,
    pub samples_per_period: usize,
    pub d_e: Option<f64>,
    /// `|dT/dE|` below this is dropped from Bohm/Floyd comparisons.
    pub trim: f64,
    /// Seeded random `(q, t)` points reported by sweeps.
    pub check_points: usize,
    /// Also solve on halved grids and report the convergence order.
    pub convergence: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n_max: 5,
            level: None,
            energy: None,
            levels: None,
            coefficients: [1.0, 1.0, 0.0],
            q_ref: None,
            window: None,
            delta_alpha: 0.0,
            model: None,
            dynamics: Dynamics::Floyd,
            q0: Vec::new(),
            t_span: [0.0, 1.0],
            q_probe: None,
            samples: 512,
            periods: 16,
            samples_per_period: 64,
            d_e: None,
            trim: 0.05,
            check_points: 20,
            convergence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    #[serde(default)]
    pub units: Units,
    pub potential: PotentialSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Output root; the `--out` flag wins over this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "document".into());
            LabError::config(path, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Digest of the scenario itself: sorted-key JSON with the output root
    /// left out, so moving the output does not change the identity.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("json serializes");
        hex(&Sha256::digest(bytes))
    }

    /// The task to run: `requested` from the command line, which must agree
    /// with the file's `task` when both are present.
    pub fn resolve_task(&self, requested: Option<TaskKind>) -> Result<TaskKind> {
        match (requested, self.task) {
            (Some(a), Some(b)) if a != b => Err(LabError::config(
                "task",
                format!("file declares `{b}` but `{a}` was requested"),
            )),
            (Some(a), _) => Ok(a),
            (None, Some(b)) => Ok(b),
            (None, None) => Err(LabError::config("task", "no task given")),
        }
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        self.units
            .validate()
            .map_err(|e| LabError::config("units", e.to_string()))?;
        let p = &self.potential;
        let (lo, hi) = match &p.family {
            PotentialFamily::InfiniteWell { width } => (0.0, *width),
            PotentialFamily::Tabulated { nodes } => match (nodes.first(), nodes.last()) {
                (Some(a), Some(b)) => (a.0, b.0),
                _ => return Err(LabError::config("potential.nodes", "empty table")),
            },
            PotentialFamily::Harmonic { .. } => (-8.0, 8.0),
            PotentialFamily::Step { .. } => (-20.0, 20.0),
            PotentialFamily::Constant { .. } | PotentialFamily::FiniteWell { .. } => (-10.0, 10.0),
        };
        let (q_min, q_max) = (p.q_min.unwrap_or(lo), p.q_max.unwrap_or(hi));
        if matches!(p.family, PotentialFamily::InfiniteWell { .. }) && (q_min, q_max) != (lo, hi) {
            return Err(LabError::config(
                "potential.q_min",
                "an infinite well's domain is [0, width]",
            ));
        }
        PotentialSpec::new(p.family.clone(), q_min, q_max, self.units)
            .map_err(|e| LabError::config("potential", e.to_string()))
    }

    pub fn grid(&self, spec: &PotentialSpec) -> Result<Grid> {
        let g = &self.grid;
        Grid::new(
            g.q_min.unwrap_or(spec.q_min),
            g.q_max.unwrap_or(spec.q_max),
            g.points,
        )
        .map_err(|e| LabError::config("grid", e.to_string()))
    }

    pub fn coefficients(&self) -> Result<MicrostateCoefficients> {
        let [a, b, c] = self.params.coefficients;
        MicrostateCoefficients::new(a, b, c)
            .map_err(|e| LabError::config("params.coefficients", e.to_string()))
    }

    /// Checks everything that can be checked before any numerics run.
    pub fn validate(&self, task: TaskKind) -> Result<()> {
        let spec = self.potential_spec()?;
        self.grid(&spec)?;
        self.coefficients()?;
        self.integrator
            .validate()
            .map_err(|e| LabError::config("integrator", e.to_string()))?;
        let p = &self.params;
        let bound = spec.spectrum_class() != SpectrumClass::Continuous;
        let first = spec.first_quantum_number();
        if !(p.t_span[1] > p.t_span[0]) {
            return Err(LabError::config("params.t_span", "need t_span[1] > t_span[0]"));
        }
        if let Some(q) = p.q0.iter().find(|q| !spec.contains(**q)) {
            return Err(LabError::config(
                "params.q0",
                format!("{q} lies outside [{}, {}]", spec.q_min, spec.q_max),
            ));
        }
        if let Some(w) = p.window {
            if !(w[1] > w[0]) {
                return Err(LabError::config("params.window", "need window[1] > window[0]"));
            }
        }
        if let Some(level) = p.level {
            if level < first {
                return Err(LabError::config(
                    "params.level",
                    format!("{} levels start at {first}", spec.family_name()),
                ));
            }
        }
        let need_levels = || -> Result<()> {
            let [i, j] = self.beat_levels(&spec);
            if !bound {
                return Err(LabError::config("potential", "a beat needs bound states"));
            }
            if i < first || j <= i {
                return Err(LabError::config(
                    "params.levels",
                    format!("need {first} <= i < j, got [{i}, {j}]"),
                ));
            }
            Ok(())
        };
        let need_energy = || -> Result<f64> {
            p.energy
                .filter(|e| e.is_finite())
                .ok_or_else(|| LabError::config("params.energy", "required for an unbound system"))
        };
        match task {
            TaskKind::Solve => {
                if !bound {
                    return Err(LabError::config("potential", "no bound states to solve for"));
                }
                if p.n_max == 0 {
                    return Err(LabError::config("params.n_max", "must be at least 1"));
                }
            }
            TaskKind::Microstate => {
                if bound {
                    if p.level.is_none() {
                        return Err(LabError::config("params.level", "required for a bound system"));
                    }
                } else {
                    need_energy()?;
                }
            }
            TaskKind::DtdeSweep => {
                if bound {
                    need_levels()?;
                } else {
                    need_energy()?;
                }
            }
            TaskKind::BeatScan => {
                need_levels()?;
                if p.periods == 0 || p.samples_per_period < 4 {
                    return Err(LabError::config(
                        "params.samples_per_period",
                        "need periods >= 1 and samples_per_period >= 4",
                    ));
                }
            }
            TaskKind::Trajectory => {
                if p.q0.is_empty() {
                    return Err(LabError::config("params.q0", "at least one start point"));
                }
                match (p.dynamics, p.model) {
                    (Dynamics::Bohm, _) if bound && p.level.is_none() => {
                        return Err(LabError::config("params.level", "required for Bohm paths"));
                    }
                    (Dynamics::Bohm, _) if !bound => {
                        need_energy()?;
                    }
                    (Dynamics::Bohm, _) => {}
                    (Dynamics::Floyd, None) => {
                        return Err(LabError::config("params.model", "required for Floyd paths"));
                    }
                    (Dynamics::Floyd, Some(model)) => {
                        model
                            .validate()
                            .map_err(|e| LabError::config("params.model", e.to_string()))?;
                        match model {
                            EnergyDerivativeModel::ClassicalUnity if bound && p.level.is_none() => {
                                return Err(LabError::config("params.level", "required"));
                            }
                            EnergyDerivativeModel::ClassicalUnity if !bound => {
                                need_energy()?;
                            }
                            EnergyDerivativeModel::ContinuumLimit { .. } if bound => {
                                return Err(LabError::config(
                                    "params.model",
                                    "continuum_limit needs an unbound system",
                                ));
                            }
                            EnergyDerivativeModel::ContinuumLimit { .. } => {
                                need_energy()?;
                            }
                            EnergyDerivativeModel::DiscreteBeat { i, .. } if !bound || i < first => {
                                return Err(LabError::config(
                                    "params.model",
                                    format!("discrete_beat needs bound levels from {first}"),
                                ));
                            }
                            _ => {}
                        }
                    }
                }
            }
            TaskKind::Compare => {
                if bound {
                    return Err(LabError::config(
                        "potential",
                        "compare runs on unbound systems (Step or Constant)",
                    ));
                }
                need_energy()?;
                if p.q0.is_empty() {
                    return Err(LabError::config("params.q0", "at least one start point"));
                }
            }
        }
        Ok(())
    }

    /// `params.levels`, defaulting to the two lowest states.
    pub fn beat_levels(&self, spec: &PotentialSpec) -> [usize; 2] {
        let first = spec.first_quantum_number();
        self.params.levels.unwrap_or([first, first + 1])
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const WELL: &str = r#"
task = "solve"
[potential]
family = "infinite_well"
width = 1.0
[params]
n_max = 3
"#;

    #[test]
    fn parses_and_validates() {
        let c = ScenarioConfig::from_toml(WELL).unwrap();
        assert_eq!(c.task, Some(TaskKind::Solve));
        assert_eq!(c.params.n_max, 3);
        c.validate(TaskKind::Solve).unwrap();
        let spec = c.potential_spec().unwrap();
        assert_eq!((spec.q_min, spec.q_max), (0.0, 1.0));
    }

    #[test]
    fn hash_survives_reserialization() {
        let c = ScenarioConfig::from_toml(WELL).unwrap();
        let again = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        let mut moved = c.clone();
        moved.out = Some("elsewhere".into());
        assert_eq!(c.hash(), moved.hash());
        let mut reseeded = c.clone();
        reseeded.seed = 9;
        assert_ne!(c.hash(), reseeded.hash());
    }

    #[test]
    fn errors_name_the_field() {
        let bad = WELL.replace("n_max = 3", "coefficients = [1.0, 1.0, 3.0]");
        let c = ScenarioConfig::from_toml(&bad).unwrap();
        match c.validate(TaskKind::Solve) {
            Err(LabError::Config { path, .. }) => assert_eq!(path, "params.coefficients"),
            other => panic!("{other:?}"),
        }
        let typo = WELL.replace("n_max", "nmax");
        assert!(matches!(
            ScenarioConfig::from_toml(&typo),
            Err(LabError::Config { .. })
        ));
    }

    #[test]
    fn task_must_agree_with_file() {
        let c = ScenarioConfig::from_toml(WELL).unwrap();
        assert_eq!(c.resolve_task(None).unwrap(), TaskKind::Solve);
        assert!(c.resolve_task(Some(TaskKind::Compare)).is_err());
    }

    #[test]
    fn compare_rejects_bound_systems() {
        let c = ScenarioConfig::from_toml(WELL).unwrap();
        assert!(matches!(
            c.validate(TaskKind::Compare),
            Err(LabError::Config { path, .. }) if path == "potential"
        ));
    }
}
