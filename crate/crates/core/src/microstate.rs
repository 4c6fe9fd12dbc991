//! Floydian microstates of the quantum stationary Hamilton-Jacobi equation
//!
//! ```text
//! (W')^2 / 2m + V - E = -(hbar^2 / 4m) {W; q}
//! ```
//!
//! whose general solution is `W' = sqrt(2m) / (a phi^2 + b theta^2 + c phi theta)`
//! for an independent pair `(phi, theta)` at energy `E`. The pair is rescaled
//! by one factor per (pair, coefficients) so that the equation holds; the
//! closed-form value `hbar |Wr| sqrt(ab - c^2/4)` of `sqrt(2m)/lambda^2` seeds a
//! residual minimization.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::grid::{self, Grid};
use crate::potential::PotentialSpec;
use crate::schrodinger::{RealWave, SolutionPair};

/// Nodes at each edge excluded from residual checks. The QSHJE is singular
/// where boundary values are applied.
pub const BOUNDARY_MARGIN: usize = 5;

/// Below this `|W'|` the Schwarzian is not evaluated.
pub const SINGULAR_W_PRIME: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrostateCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MicrostateCoefficients {
    /// Requires `a, b > 0` and `4ab - c^2 > 0`, so the quadratic form never
    /// vanishes and `W'` stays finite in the interior.
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let coeffs = Self { a, b, c };
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { a, b, c } = *self;
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidCoefficients(format!(
                "non-finite ({a}, {b}, {c})"
            )));
        }
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "need a, b > 0, got a = {a}, b = {b}"
            )));
        }
        if 4.0 * a * b - c * c <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "quadratic form not positive definite: 4ab - c^2 = {}",
                4.0 * a * b - c * c
            )));
        }
        Ok(())
    }

    /// `ab - c^2/4`.
    pub fn discriminant(&self) -> f64 {
        self.a * self.b - 0.25 * self.c * self.c
    }

    pub fn form(&self, phi: f64, theta: f64) -> f64 {
        self.a * phi * phi + self.b * theta * theta + self.c * phi * theta
    }

    pub fn form_derivative(&self, phi: f64, dphi: f64, theta: f64, dtheta: f64) -> f64 {
        2.0 * self.a * phi * dphi
            + 2.0 * self.b * theta * dtheta
            + self.c * (dphi * theta + phi * dtheta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicrostateOptions {
    /// Maximum admissible QSHJE residual after calibration; `None` uses
    /// `1e-6 max(1, |E|)`.
    pub residual_tolerance: Option<f64>,
    /// Fit the pair scale by residual minimization. When false the closed-form
    /// Wronskian scale is used as is.
    pub calibrate: bool,
}

impl Default for MicrostateOptions {
    fn default() -> Self {
        Self {
            residual_tolerance: None,
            calibrate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Microstate {
    pub coefficients: MicrostateCoefficients,
    pub energy: f64,
    pub spec: PotentialSpec,
    pub grid: Grid,
    /// Anchor of the reduced action, snapped to a grid node; `W(q_ref) = 0`.
    pub q_ref: f64,
    /// Factor `lambda` applied to the pair.
    pub pair_scale: f64,
    pub w_prime: Vec<f64>,
    pub w: Vec<f64>,
    /// Amplitude `R = C / sqrt(W')`, scaled so `max R = 1`.
    pub r: Vec<f64>,
    /// Schwarzian derivative `{W; q}`.
    pub schwarzian: Vec<f64>,
    /// Pair values, kept for the bi-polar decomposition and exports.
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Builds the microstate labelled by `coeffs` over `pair`.
pub fn build_microstate(
    spec: &PotentialSpec,
    pair: &SolutionPair,
    coeffs: MicrostateCoefficients,
    q_ref: f64,
) -> Result<Microstate> {
    build_microstate_with(spec, pair, coeffs, q_ref, MicrostateOptions::default())
}

pub fn build_microstate_with(
    spec: &PotentialSpec,
    pair: &SolutionPair,
    coeffs: MicrostateCoefficients,
    q_ref: f64,
    options: MicrostateOptions,
) -> Result<Microstate> {
    coeffs.validate()?;
    let u = spec.units;
    let seed = u.hbar * pair.wronskian.abs() * coeffs.discriminant().sqrt();
    let mut ms = assemble(spec, pair, coeffs, q_ref, seed)?;
    if options.calibrate {
        let scale = calibrate_scale(&ms, seed);
        ms = rescaled(ms, scale / seed, seed)?;
    }
    let tolerance = options
        .residual_tolerance
        .unwrap_or(1e-6 * ms.energy.abs().max(1.0));
    let residual = qshje_residual(&ms);
    if !(residual <= tolerance) {
        return Err(Error::CalibrationFailure {
            residual,
            tolerance,
        });
    }
    Ok(ms)
}

/// Microstate with an explicitly chosen `sqrt(2m)/lambda^2`, no calibration
/// and no residual check. Used to probe mis-scaled constructions.
pub fn build_microstate_scaled(
    spec: &PotentialSpec,
    pair: &SolutionPair,
    coeffs: MicrostateCoefficients,
    q_ref: f64,
    numerator: f64,
) -> Result<Microstate> {
    coeffs.validate()?;
    assemble(spec, pair, coeffs, q_ref, numerator)
}

/// `W' = numerator / form`, where `numerator = sqrt(2m) / lambda^2` and the
/// form is evaluated on the unscaled pair.
fn assemble(
    spec: &PotentialSpec,
    pair: &SolutionPair,
    coeffs: MicrostateCoefficients,
    q_ref: f64,
    numerator: f64,
) -> Result<Microstate> {
    let grid = *pair.grid();
    if grid.len() < 2 * BOUNDARY_MARGIN + 3 {
        return Err(Error::InvalidGrid("grid too small for a microstate".into()));
    }
    if !grid.contains(q_ref) {
        return Err(Error::Domain {
            q: q_ref,
            min: grid.q_min(),
            max: grid.q_max(),
        });
    }
    let w_prime: Vec<f64> = pair
        .phi
        .values
        .iter()
        .zip(&pair.theta.values)
        .map(|(&p, &t)| numerator / coeffs.form(p, t))
        .collect();
    if let Some(i) = w_prime.iter().position(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::SingularDerivative { q: grid.q(i) });
    }
    let anchor = grid.nearest_index(q_ref);
    let w = grid::cumulative_integral(&w_prime, grid.spacing(), anchor);
    let schwarzian = schwarzian(&grid, &w_prime)?;
    let r = amplitude(&w_prime);
    let two_m = 2.0 * spec.units.mass;
    Ok(Microstate {
        coefficients: coeffs,
        energy: pair.energy,
        spec: spec.clone(),
        grid,
        q_ref: grid.q(anchor),
        pair_scale: (two_m.sqrt() / numerator).sqrt(),
        w_prime,
        w,
        r,
        schwarzian,
        phi: pair.phi.values.clone(),
        theta: pair.theta.values.clone(),
    })
}

fn amplitude(w_prime: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = w_prime.iter().map(|v| 1.0 / v.abs().sqrt()).collect();
    let peak = raw.iter().copied().fold(0.0, f64::max);
    raw.into_iter().map(|x| x / peak).collect()
}

fn rescaled(mut ms: Microstate, factor: f64, seed: f64) -> Result<Microstate> {
    for v in &mut ms.w_prime {
        *v *= factor;
    }
    for v in &mut ms.w {
        *v *= factor;
    }
    let two_m = 2.0 * ms.spec.units.mass;
    ms.pair_scale = (two_m.sqrt() / (seed * factor)).sqrt();
    // Scale invariant up to rounding; recomputed so stored fields agree
    // bit for bit with a fresh evaluation.
    ms.schwarzian = schwarzian(&ms.grid, &ms.w_prime)?;
    ms.r = amplitude(&ms.w_prime);
    Ok(ms)
}

/// Golden-section search over `ln(numerator)` around the closed-form seed,
/// minimizing the max-abs residual. Only the kinetic term depends on the
/// scale, so the Schwarzian is reused.
fn calibrate_scale(ms: &Microstate, seed: f64) -> f64 {
    let residual_at = |log_factor: f64| {
        let f = log_factor.exp();
        residual_with(ms, f)
    };
    let (mut lo, mut hi) = (-0.2f64, 0.2f64);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (residual_at(x1), residual_at(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = residual_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = residual_at(x2);
        }
    }
    let best = 0.5 * (lo + hi);
    if residual_at(best) <= residual_at(0.0) {
        seed * best.exp()
    } else {
        seed
    }
}

fn residual_with(ms: &Microstate, factor: f64) -> f64 {
    residual_field_scaled(ms, factor)
        .into_iter()
        .skip(BOUNDARY_MARGIN)
        .take(ms.grid.len() - 2 * BOUNDARY_MARGIN)
        .fold(0.0, |m, r| m.max(r.abs()))
}

fn residual_field_scaled(ms: &Microstate, factor: f64) -> Vec<f64> {
    let u = ms.spec.units;
    let q_factor = u.hbar * u.hbar / (4.0 * u.mass);
    (0..ms.grid.len())
        .map(|i| {
            let p = factor * ms.w_prime[i];
            let v = ms.spec.value_unchecked(ms.grid.q(i));
            p * p / (2.0 * u.mass) + v - ms.energy + q_factor * ms.schwarzian[i]
        })
        .collect()
}

/// Schwarzian derivative `{W; q} = W'''/W' - (3/2)(W''/W')^2` from samples of
/// `W'`. With `u = ln|W'|` this is `u'' - u'^2 / 2`, evaluated with
/// fourth-order stencils; the form depends on `|W'|` only, so it is
/// unchanged by `W -> -W`.
pub fn schwarzian(grid: &Grid, w_prime: &[f64]) -> Result<Vec<f64>> {
    if w_prime.len() != grid.len() {
        return Err(Error::InvalidGrid(
            "field length does not match grid".into(),
        ));
    }
    if let Some(i) = w_prime.iter().position(|v| !(v.abs() >= SINGULAR_W_PRIME)) {
        return Err(Error::SingularDerivative { q: grid.q(i) });
    }
    let log: Vec<f64> = w_prime.iter().map(|v| v.abs().ln()).collect();
    let h = grid.spacing();
    let d1 = grid::derivative(&log, h);
    let d2 = grid::second_derivative(&log, h);
    Ok(d1.iter().zip(&d2).map(|(a, b)| b - 0.5 * a * a).collect())
}

/// `Q = (hbar^2 / 4m) {W; q}`.
pub fn quantum_potential_schwarzian(ms: &Microstate) -> Vec<f64> {
    let u = ms.spec.units;
    let f = u.hbar * u.hbar / (4.0 * u.mass);
    ms.schwarzian.iter().map(|s| f * s).collect()
}

/// Bohm quantum potential with the points where it is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmPotential {
    /// `NaN` at excluded points.
    pub values: Vec<f64>,
    pub excluded: Vec<usize>,
}

/// `Q = -(hbar^2 / 2m) R'' / R`, fourth-order central differences. Nodes of
/// `R` (non-positive samples) are excluded rather than divided by.
pub fn quantum_potential_bohm(grid: &Grid, r: &[f64], units: crate::Units) -> BohmPotential {
    let d2 = grid::second_derivative(r, grid.spacing());
    let f = -units.hbar * units.hbar / (2.0 * units.mass);
    let peak = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut excluded = Vec::new();
    let values = r
        .iter()
        .zip(&d2)
        .enumerate()
        .map(|(i, (ri, ddr))| {
            if *ri > 1e-300 && *ri > 1e-14 * peak {
                f * ddr / ri
            } else {
                excluded.push(i);
                f64::NAN
            }
        })
        .collect();
    BohmPotential { values, excluded }
}

/// Max-abs QSHJE residual over the interior, excluding the boundary margin.
pub fn qshje_residual(ms: &Microstate) -> f64 {
    residual_with(ms, 1.0)
}

impl Microstate {
    pub fn residual_field(&self) -> Vec<f64> {
        residual_field_scaled(self, 1.0)
    }

    /// `T = (W')^2 / 2m`.
    pub fn kinetic_energy(&self) -> Vec<f64> {
        let m = self.spec.units.mass;
        self.w_prime.iter().map(|p| p * p / (2.0 * m)).collect()
    }

    pub fn potential_samples(&self) -> Vec<f64> {
        self.grid
            .positions()
            .iter()
            .map(|&q| self.spec.value_unchecked(q))
            .collect()
    }

    pub fn quantum_potential(&self) -> Vec<f64> {
        quantum_potential_schwarzian(self)
    }

    pub fn bohm_potential(&self) -> BohmPotential {
        quantum_potential_bohm(&self.grid, &self.r, self.spec.units)
    }

    /// Microstate with `W -> -W`: same `|W'|`, so same Q and residual.
    pub fn sign_flipped(&self) -> Result<Self> {
        let w_prime: Vec<f64> = self.w_prime.iter().map(|v| -v).collect();
        let schwarzian = schwarzian(&self.grid, &w_prime)?;
        Ok(Self {
            w_prime,
            w: self.w.iter().map(|v| -v).collect(),
            schwarzian,
            ..self.clone()
        })
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        BOUNDARY_MARGIN..self.grid.len() - BOUNDARY_MARGIN
    }

    /// `W'` at an arbitrary position (cubic interpolation).
    pub fn w_prime_at(&self, q: f64) -> f64 {
        grid::interpolate(&self.grid, &self.w_prime, q)
    }

    pub fn w_at(&self, q: f64) -> f64 {
        grid::interpolate(&self.grid, &self.w, q)
    }

    pub fn contains(&self, q: f64) -> bool {
        self.grid.contains(q)
    }

    /// Columns `q, w_prime, w, r, q_schwarzian, q_bohm, residual`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let qs = self.quantum_potential();
        let qb = self.bohm_potential().values;
        let res = self.residual_field();
        let rows: Vec<Vec<f64>> = (0..self.grid.len())
            .map(|i| {
                vec![
                    self.grid.q(i),
                    self.w_prime[i],
                    self.w[i],
                    self.r[i],
                    qs[i],
                    qb[i],
                    res[i],
                ]
            })
            .collect();
        write_table(
            out,
            &[
                "q",
                "w_prime",
                "w",
                "r",
                "q_schwarzian",
                "q_bohm",
                "residual",
            ],
            &rows,
        )
    }
}

/// Scale and phase of the running waves `psi± = A± R exp(±iW/hbar)` that
/// reproduce a real wave function, `psi = 2|A| R cos(W/hbar + alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BipolarWave {
    pub amplitude_plus: f64,
    pub amplitude_minus: f64,
    pub phase_plus: f64,
    pub phase_minus: f64,
    pub energy: f64,
    /// Relative RMS misfit of the decomposition.
    pub misfit: f64,
}

impl BipolarWave {
    pub fn a_plus(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude_plus, self.phase_plus)
    }

    pub fn a_minus(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude_minus, self.phase_minus)
    }
}

/// Least-squares decomposition of a real wave function into the two running
/// waves of `ms`. For real functions the scales are equal and the phases
/// opposite (`A- = conj(A+)`).
pub fn bipolar_wave(ms: &Microstate, psi: &RealWave) -> BipolarWave {
    let hbar = ms.spec.units.hbar;
    let (mut scc, mut sss, mut scs, mut spc, mut sps, mut spp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in ms.interior() {
        let q = ms.grid.q(i);
        let p = grid::interpolate(&psi.grid, &psi.values, q);
        let c = ms.r[i] * (ms.w[i] / hbar).cos();
        let s = -ms.r[i] * (ms.w[i] / hbar).sin();
        scc += c * c;
        sss += s * s;
        scs += c * s;
        spc += p * c;
        sps += p * s;
        spp += p * p;
    }
    let det = scc * sss - scs * scs;
    let x = (spc * sss - sps * scs) / det;
    let y = (sps * scc - spc * scs) / det;
    let misfit_sq = (spp - x * spc - y * sps).max(0.0) / spp.max(f64::MIN_POSITIVE);
    let amplitude = 0.5 * x.hypot(y);
    let alpha = y.atan2(x);
    BipolarWave {
        amplitude_plus: amplitude,
        amplitude_minus: amplitude,
        phase_plus: alpha,
        phase_minus: -alpha,
        energy: ms.energy,
        misfit: misfit_sq.sqrt(),
    }
}
