//! Total-energy variational derivative of the kinetic energy.
//!
//! For a variation between two bound eigenstates `i < j` the derivative is
//!
//! ```text
//! dT/dE = W'_i / (m dE) [ dW' + hbar tan(dS/hbar + d_alpha) d/dq ln(R_j/R_i) ]
//! ```
//!
//! with `dS = dW - dE t`, which beats at `(E_j - E_i) / (2 pi hbar)`. In the
//! continuum it reduces to `(W'/m) d/dq (dW/dE)`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::grid::{self, Grid};
use crate::microstate::{build_microstate, Microstate, MicrostateCoefficients};
use crate::potential::{PotentialSpec, SpectrumClass, Units};
use crate::schrodinger::{
    find_bound_eigenvalues, ScatteringState, SolutionPair, DEFAULT_EIGEN_TOL,
};

/// `|cos|` below this is treated as a pole of the tangent.
pub const TAN_POLE_THRESHOLD: f64 = 1e-9;

/// Relative energy step of the continuum difference quotient.
pub const DEFAULT_RELATIVE_DE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyDerivativeModel {
    /// `dT/dE = 1`.
    ClassicalUnity,
    /// Difference quotient over neighbouring continuum energies.
    ContinuumLimit { d_e: f64 },
    /// Beat between eigenstates labelled `i` and `j` (the potential's own
    /// quantum numbers, so wells start at 1).
    DiscreteBeat {
        i: usize,
        j: usize,
        delta_alpha: f64,
    },
}

impl EnergyDerivativeModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::ClassicalUnity => Ok(()),
            Self::ContinuumLimit { d_e } if d_e > 0.0 && d_e.is_finite() => Ok(()),
            Self::ContinuumLimit { d_e } => {
                Err(Error::InvalidModel(format!("d_e must be > 0, got {d_e}")))
            }
            Self::DiscreteBeat { i, j, delta_alpha } => {
                if j <= i {
                    return Err(Error::InvalidModel(format!(
                        "beat needs j > i (E_j > E_i), got i = {i}, j = {j}"
                    )));
                }
                if !delta_alpha.is_finite() {
                    return Err(Error::InvalidModel("delta_alpha must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ClassicalUnity => "classical_unity",
            Self::ContinuumLimit { .. } => "continuum_limit",
            Self::DiscreteBeat { .. } => "discrete_beat",
        }
    }
}

/// Two microstates with identical coefficients at energies `E_i < E_j`,
/// with the difference fields the beat formula needs.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationFrame {
    pub lower: Microstate,
    pub upper: Microstate,
    pub delta_e: f64,
    /// `W_j - W_i`.
    pub delta_w: Vec<f64>,
    /// `W'_j - W'_i`.
    pub delta_w_prime: Vec<f64>,
    /// `ln(R_j / R_i)`.
    pub log_amp_ratio: Vec<f64>,
    /// `d/dq ln(R_j / R_i)`.
    pub log_amp_ratio_prime: Vec<f64>,
}

impl VariationFrame {
    pub fn new(lower: Microstate, upper: Microstate) -> Result<Self> {
        if lower.grid != upper.grid {
            return Err(Error::InvalidGrid(
                "frame microstates on different grids".into(),
            ));
        }
        if lower.coefficients != upper.coefficients {
            return Err(Error::InvalidModel(
                "frame microstates must share (a, b, c)".into(),
            ));
        }
        let delta_e = upper.energy - lower.energy;
        if delta_e == 0.0 {
            return Err(Error::DegenerateBeat {
                energy: lower.energy,
            });
        }
        if !(delta_e > 0.0) {
            return Err(Error::InvalidModel(format!(
                "frame needs E_j > E_i, got {} and {}",
                lower.energy, upper.energy
            )));
        }
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| y - x).collect::<Vec<f64>>();
        let delta_w = diff(&lower.w, &upper.w);
        let delta_w_prime = diff(&lower.w_prime, &upper.w_prime);
        // R ~ |W'|^{-1/2}; the normalization constants only shift the log.
        let log_amp_ratio: Vec<f64> = lower
            .r
            .iter()
            .zip(&upper.r)
            .map(|(ri, rj)| (rj / ri).ln())
            .collect();
        let log_amp_ratio_prime = grid::derivative(&log_amp_ratio, lower.grid.spacing());
        Ok(Self {
            lower,
            upper,
            delta_e,
            delta_w,
            delta_w_prime,
            log_amp_ratio,
            log_amp_ratio_prime,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.lower.grid
    }

    pub fn units(&self) -> Units {
        self.lower.spec.units
    }

    /// `2 pi hbar / dE`.
    pub fn beat_period(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.units().hbar / self.delta_e
    }

    fn check(&self, q: f64) -> Result<()> {
        let g = self.grid();
        if g.contains(q) {
            Ok(())
        } else {
            Err(Error::Domain {
                q,
                min: g.q_min(),
                max: g.q_max(),
            })
        }
    }

    /// Argument of the tangent, `dW/hbar - dE t/hbar + d_alpha`.
    pub fn phase(&self, q: f64, t: f64, delta_alpha: f64) -> f64 {
        let hbar = self.units().hbar;
        (self.interp(&self.delta_w, q) - self.delta_e * t) / hbar + delta_alpha
    }

    fn interp(&self, field: &[f64], q: f64) -> f64 {
        grid::interpolate(self.grid(), field, q)
    }

    /// Pieces of the beat formula at `(q, t)`.
    pub fn terms(&self, q: f64, t: f64, delta_alpha: f64) -> Result<BeatTerms> {
        self.check(q)?;
        Ok(BeatTerms {
            w_prime: self.interp(&self.lower.w_prime, q),
            delta_w_prime: self.interp(&self.delta_w_prime, q),
            log_ratio_prime: self.interp(&self.log_amp_ratio_prime, q),
            phase: self.phase(q, t, delta_alpha),
            delta_e: self.delta_e,
            units: self.units(),
        })
    }

    /// Frame with `W -> -W` in both microstates.
    pub fn sign_flipped(&self) -> Result<Self> {
        Self::new(self.lower.sign_flipped()?, self.upper.sign_flipped()?)
    }
}

/// Values entering the beat formula at one `(q, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatTerms {
    pub w_prime: f64,
    pub delta_w_prime: f64,
    pub log_ratio_prime: f64,
    pub phase: f64,
    pub delta_e: f64,
    pub units: Units,
}

impl BeatTerms {
    pub fn dtde(&self) -> std::result::Result<f64, f64> {
        let (s, c) = self.phase.sin_cos();
        if c.abs() < TAN_POLE_THRESHOLD {
            // Approached forward in time the phase decreases through the
            // pole, where tan -> -inf.
            return Err(-self.log_ratio_prime.signum() * self.w_prime.signum());
        }
        let hbar = self.units.hbar;
        Ok(self.w_prime / (self.units.mass * self.delta_e)
            * (self.delta_w_prime + hbar * s / c * self.log_ratio_prime))
    }

    /// `W'/(m dT/dE)` written without the tangent, so it passes smoothly
    /// through tan poles (where it vanishes). `None` where `dT/dE = 0`.
    pub fn velocity(&self) -> Option<f64> {
        let (s, c) = self.phase.sin_cos();
        let denom = self.delta_w_prime * c + self.units.hbar * self.log_ratio_prime * s;
        let v = self.delta_e * c / denom;
        if v.is_finite() {
            Some(v)
        } else {
            None
        }
    }
}

/// Beat-form `dT/dE` at `(q, t)`. At a tan pole the value is unbounded and
/// reported as [`Error::TanPole`].
pub fn delta_t_delta_e_discrete(
    frame: &VariationFrame,
    q: f64,
    t: f64,
    delta_alpha: f64,
) -> Result<f64> {
    frame
        .terms(q, t, delta_alpha)?
        .dtde()
        .map_err(|direction| Error::TanPole { q, t, direction })
}

/// Builds the frame for eigenstates labelled `i < j` of a bound potential,
/// both microstates with coefficients `coeffs`. `window` restricts the
/// microstates to a sub-interval (useful where `W'` underflows in tails).
pub fn beat_frame(
    spec: &PotentialSpec,
    grid: &Grid,
    labels: (usize, usize),
    coeffs: MicrostateCoefficients,
    window: Option<(f64, f64)>,
    q_ref: Option<f64>,
) -> Result<VariationFrame> {
    let (i, j) = labels;
    if i == j {
        return Err(Error::DegenerateBeat { energy: f64::NAN });
    }
    if j < i {
        return Err(Error::InvalidModel(format!(
            "beat needs j > i, got ({i}, {j})"
        )));
    }
    let first = spec.first_quantum_number();
    if i < first {
        return Err(Error::InvalidModel(format!(
            "{} levels start at {first}, got {i}",
            spec.family_name()
        )));
    }
    let eig = find_bound_eigenvalues(spec, grid, j - first + 1, DEFAULT_EIGEN_TOL)?;
    if eig.len() < j - first + 1 {
        return Err(Error::InvalidModel(format!(
            "level {j} not bound ({} levels found)",
            eig.len()
        )));
    }
    let make = |label: usize| -> Result<Microstate> {
        let mut pair = SolutionPair::from_eigen(&eig[label - first])?;
        if let Some((lo, hi)) = window {
            pair = pair.window(lo, hi)?;
        }
        let g = pair.grid();
        let anchor = q_ref.unwrap_or_else(|| g.q(g.midpoint_index()));
        build_microstate(spec, &pair, coeffs, anchor)
    };
    VariationFrame::new(make(i)?, make(j)?)
}

/// Continuum `dT/dE = (W'/m) dW'/dE`, with `W'` the phase gradient of the
/// scattering state (the single microstate of an unbound system) and the
/// energy derivative a central difference of step `d_e`.
pub fn delta_t_delta_e_continuum(
    spec: &PotentialSpec,
    energy: f64,
    d_e: f64,
    q: f64,
) -> Result<f64> {
    Ok(continuum_estimate(spec, energy, d_e, q)?.value)
}

/// Continuum estimate with its step-halving check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuumEstimate {
    /// Central difference at `d_e`.
    pub value: f64,
    /// Central difference at `d_e / 2`.
    pub half_step: f64,
    /// Richardson extrapolation of the two.
    pub extrapolated: f64,
}

impl ContinuumEstimate {
    pub fn richardson_gap(&self) -> f64 {
        (self.value - self.extrapolated).abs()
    }
}

pub fn continuum_estimate(
    spec: &PotentialSpec,
    energy: f64,
    d_e: f64,
    q: f64,
) -> Result<ContinuumEstimate> {
    if spec.spectrum_class() != SpectrumClass::Continuous {
        return Err(Error::Unsupported(format!(
            "{} is not a continuous-spectrum potential",
            spec.family_name()
        )));
    }
    if !(d_e > 0.0 && d_e < energy.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidModel(format!(
            "energy step {d_e} not small against {energy}"
        )));
    }
    if !spec.contains(q) {
        return Err(Error::Domain {
            q,
            min: spec.q_min,
            max: spec.q_max,
        });
    }
    let m = spec.units.mass;
    let w_prime = |e: f64| -> Result<f64> { Ok(ScatteringState::new(spec, e)?.phase_gradient(q)) };
    let centre = w_prime(energy)?;
    let quotient = |h: f64| -> Result<f64> {
        Ok(centre / m * (w_prime(energy + h)? - w_prime(energy - h)?) / (2.0 * h))
    };
    let value = quotient(d_e)?;
    let half_step = quotient(0.5 * d_e)?;
    Ok(ContinuumEstimate {
        value,
        half_step,
        extrapolated: (4.0 * half_step - value) / 3.0,
    })
}

/// `dQ/dE = 1 - dT/dE`.
pub fn delta_q_delta_e(dtde: f64) -> f64 {
    1.0 - dtde
}

/// `2 pi hbar / |E_j - E_i|`.
pub fn beat_period(e_i: f64, e_j: f64, units: Units) -> Result<f64> {
    if e_i == e_j {
        return Err(Error::DegenerateBeat { energy: e_i });
    }
    Ok(2.0 * std::f64::consts::PI * units.hbar / (e_j - e_i).abs())
}

/// `m_Q = m dT/dE`, the mass that restores `q' = p / m_Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantumMass {
    pub m_q: f64,
}

pub fn quantum_mass(mass: f64, dtde: f64) -> QuantumMass {
    QuantumMass { m_q: mass * dtde }
}

/// One row of a time sweep at fixed `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub t: f64,
    pub q: f64,
    /// `NaN` at poles.
    pub dtde: f64,
    /// Divergence direction at a pole, 0 elsewhere.
    pub pole_flag: f64,
}

pub fn time_sweep(
    frame: &VariationFrame,
    q: f64,
    times: &[f64],
    delta_alpha: f64,
) -> Result<Vec<SweepRow>> {
    times
        .iter()
        .map(
            |&t| match delta_t_delta_e_discrete(frame, q, t, delta_alpha) {
                Ok(dtde) => Ok(SweepRow {
                    t,
                    q,
                    dtde,
                    pole_flag: 0.0,
                }),
                Err(Error::TanPole { direction, .. }) => Ok(SweepRow {
                    t,
                    q,
                    dtde: f64::NAN,
                    pole_flag: if direction == 0.0 { 1.0 } else { direction },
                }),
                Err(e) => Err(e),
            },
        )
        .collect()
}

/// Columns `t, q, dTdE, dQdE, m_q, pole_flag`.
pub fn write_sweep<W: Write>(out: &mut W, rows: &[SweepRow], mass: f64) -> io::Result<()> {
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r.t,
                r.q,
                r.dtde,
                delta_q_delta_e(r.dtde),
                quantum_mass(mass, r.dtde).m_q,
                r.pole_flag,
            ]
        })
        .collect();
    write_table(out, &["t", "q", "dTdE", "dQdE", "m_q", "pole_flag"], &table)
}
