//! Stationary Schrödinger equation in one dimension.
//!
//! `psi'' = k(q) psi` with `k = 2m (V - E) / hbar^2`, integrated with the
//! Numerov recurrence. Derivative fields are reconstructed with the
//! Numerov-consistent central formula
//! `psi'_i = (psi_{i+1} - psi_{i-1}) / 2h - h (k psi)_{i+1} - (k psi)_{i-1}) / 12`,
//! which is fourth order and uses only the three-point stencil.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::grid::{self, Grid};
use crate::potential::{bisect, PotentialFamily, PotentialSpec, SpectrumClass, Units};

pub const DEFAULT_EIGEN_TOL: f64 = 1e-10;

/// Values above this trigger rescaling (shooting) or an `Unbounded` error.
const RENORM_THRESHOLD: f64 = 1e150;
const OVERFLOW_LIMIT: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// From `q_min` towards `q_max`.
    Forward,
    /// From `q_max` towards `q_min`.
    Backward,
}

/// Real solution samples with their derivative on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealWave {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl RealWave {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
            derivs: self.derivs.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        grid::simpson(&sq, self.grid.spacing())
    }

    /// Sign changes of the samples, ignoring values below `1e-10` of the peak.
    pub fn node_count(&self) -> usize {
        let peak = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        count_sign_changes(self.values.iter().copied(), 1e-10 * peak)
    }

    pub fn to_complex(&self) -> WaveField {
        WaveField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
            derivs: self
                .derivs
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .chain(&self.derivs)
            .all(|v| v.is_finite())
    }
}

/// Complex wave function samples with derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub derivs: Vec<Complex64>,
}

impl WaveField {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let rows: Vec<Vec<f64>> = (0..self.grid.len())
            .map(|i| {
                let (v, d) = (self.values[i], self.derivs[i]);
                vec![self.grid.q(i), v.re, v.im, d.re, d.im]
            })
            .collect();
        write_table(out, &["q", "re", "im", "d_re", "d_im"], &rows)
    }

    /// `(psi, psi')` at an arbitrary position by cubic interpolation.
    pub fn sample(&self, q: f64) -> (Complex64, Complex64) {
        let part = |xs: &[Complex64], im: bool| -> f64 {
            let comp: Vec<f64> = xs.iter().map(|z| if im { z.im } else { z.re }).collect();
            grid::interpolate(&self.grid, &comp, q)
        };
        (
            Complex64::new(part(&self.values, false), part(&self.values, true)),
            Complex64::new(part(&self.derivs, false), part(&self.derivs, true)),
        )
    }
}

fn count_sign_changes(values: impl Iterator<Item = f64>, floor: f64) -> usize {
    let mut last = 0.0f64;
    let mut changes = 0;
    for v in values {
        if v.abs() <= floor {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            changes += 1;
        }
        last = v;
    }
    changes
}

fn check_grid(spec: &PotentialSpec, grid: &Grid) -> Result<()> {
    if !spec.contains(grid.q_min()) || !spec.contains(grid.q_max()) {
        return Err(Error::InvalidGrid(format!(
            "grid [{}, {}] exceeds potential domain [{}, {}]",
            grid.q_min(),
            grid.q_max(),
            spec.q_min,
            spec.q_max
        )));
    }
    Ok(())
}

/// Potential sampled on the grid. Piecewise-constant families are averaged
/// over each node's cell so a jump between nodes costs O(h^2), not O(h).
fn potential_samples(spec: &PotentialSpec, grid: &Grid) -> Vec<f64> {
    let jumps: Vec<f64> = match spec.family {
        PotentialFamily::FiniteWell { width, .. } => vec![-0.5 * width, 0.5 * width],
        PotentialFamily::Step { .. } => vec![0.0],
        _ => Vec::new(),
    };
    let h = grid.spacing();
    grid.positions()
        .iter()
        .map(|&q| {
            let (lo, hi) = (q - 0.5 * h, q + 0.5 * h);
            match jumps.iter().find(|&&x| x > lo && x < hi) {
                Some(&x) => {
                    let left = spec.value_unchecked(0.5 * (lo + x));
                    let right = spec.value_unchecked(0.5 * (x + hi));
                    ((x - lo) * left + (hi - x) * right) / h
                }
                None => spec.value_unchecked(q),
            }
        })
        .collect()
}

fn k_values(units: Units, potential: &[f64], energy: f64) -> Vec<f64> {
    let f = units.schrodinger_factor();
    potential.iter().map(|v| f * (v - energy)).collect()
}

/// Numerov propagation from `start` in one direction, writing into `out`.
/// With `renormalize` the already computed samples are rescaled when they
/// grow too large; otherwise growth past the overflow limit is an error
/// carrying the offending index.
#[allow(clippy::too_many_arguments)]
fn propagate(
    k: &[f64],
    h: f64,
    start: usize,
    value: f64,
    slope: f64,
    forward: bool,
    renormalize: bool,
    out: &mut [f64],
) -> std::result::Result<(), usize> {
    let n = k.len();
    let step: isize = if forward { 1 } else { -1 };
    let delta = if forward { h } else { -h };
    let idx = |j: isize| (start as isize + step * j) as usize;
    let steps = if forward { n - 1 - start } else { start };
    out[start] = value;
    if steps == 0 {
        return Ok(());
    }

    // First step by Taylor expansion through fourth order, with derivatives
    // of k from one-sided differences in the direction of travel.
    let k0 = k[start];
    let (dk, ddk) = if steps >= 2 {
        let (k1, k2) = (k[idx(1)], k[idx(2)]);
        (
            (-3.0 * k0 + 4.0 * k1 - k2) / (2.0 * delta),
            (k0 - 2.0 * k1 + k2) / (delta * delta),
        )
    } else {
        ((k[idx(1)] - k0) / delta, 0.0)
    };
    out[idx(1)] = value
        + delta * slope
        + delta.powi(2) / 2.0 * k0 * value
        + delta.powi(3) / 6.0 * (dk * value + k0 * slope)
        + delta.powi(4) / 24.0 * (ddk * value + 2.0 * dk * slope + k0 * k0 * value);

    for j in 1..steps as isize {
        let (prev, cur, next) = (idx(j - 1), idx(j), idx(j + 1));
        let v = numerov_step(k, h, out, prev, cur, next);
        out[next] = v;
        if !v.is_finite() || v.abs() > RENORM_THRESHOLD {
            if renormalize && v.is_finite() {
                let scale = 1.0 / v.abs();
                for jj in 0..=j + 1 {
                    out[idx(jj)] *= scale;
                }
            } else if !v.is_finite() || v.abs() > OVERFLOW_LIMIT {
                return Err(next);
            }
        }
    }
    Ok(())
}

/// One Numerov step in the `z = (1 - h^2 k / 12) y` form. Writing the
/// recurrence through `z` keeps the `h^2 k y` increment explicit; the
/// equivalent `(12 - 10c) y - c y_prev` form rounds `k` away once `c` is
/// within an ulp of one.
fn numerov_step(k: &[f64], h: f64, y: &[f64], prev: usize, cur: usize, next: usize) -> f64 {
    let h2 = h * h;
    let z = |i: usize| y[i] - h2 / 12.0 * k[i] * y[i];
    let z_next = 2.0 * z(cur) - z(prev) + h2 * k[cur] * y[cur];
    z_next / (1.0 - h2 / 12.0 * k[next])
}

/// Derivative field from Numerov samples, fourth order everywhere.
fn numerov_derivative(values: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let g: Vec<f64> = values.iter().zip(k).map(|(v, kk)| v * kk).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - values[i - 1]) / (2.0 * h) - h * (g[i + 1] - g[i - 1]) / 12.0;
    }
    d[0] = (values[1] - values[0]) / h - h * (7.0 * g[0] + 6.0 * g[1] - g[2]) / 24.0;
    d[n - 1] = (values[n - 1] - values[n - 2]) / h
        + h * (7.0 * g[n - 1] + 6.0 * g[n - 2] - g[n - 3]) / 24.0;
    d
}

/// Integrates from a grid edge with the given initial value and slope.
///
/// Overflow is reported as [`Error::Unbounded`]; for the non-normalizable
/// partner of a bound state this is legitimate and the caller decides.
pub fn numerov_integrate(
    spec: &PotentialSpec,
    energy: f64,
    grid: &Grid,
    value: f64,
    slope: f64,
    direction: Direction,
) -> Result<RealWave> {
    check_grid(spec, grid)?;
    let start = match direction {
        Direction::Forward => 0,
        Direction::Backward => grid.len() - 1,
    };
    integrate_from(spec, energy, grid, start, value, slope)
}

/// Integrates outwards in both directions from the node `anchor`.
pub fn integrate_from(
    spec: &PotentialSpec,
    energy: f64,
    grid: &Grid,
    anchor: usize,
    value: f64,
    slope: f64,
) -> Result<RealWave> {
    check_grid(spec, grid)?;
    let k = k_values(spec.units, &potential_samples(spec, grid), energy);
    integrate_with_k(grid, &k, anchor, value, slope)
}

fn integrate_with_k(
    grid: &Grid,
    k: &[f64],
    anchor: usize,
    value: f64,
    slope: f64,
) -> Result<RealWave> {
    let n = grid.len();
    let h = grid.spacing();
    if k.iter().any(|kk| h * h * kk / 12.0 >= 1.0) {
        return Err(Error::InvalidGrid(
            "spacing too coarse for the Numerov recurrence".into(),
        ));
    }
    let mut values = vec![0.0; n];
    let unbounded = |i: usize| Error::Unbounded { at: grid.q(i) };
    if anchor + 1 < n {
        propagate(k, h, anchor, value, slope, true, false, &mut values).map_err(unbounded)?;
        // Continue backwards with the same recurrence so both halves form a
        // single Numerov solution without a kink at the anchor.
        for i in (1..=anchor).rev() {
            let v = numerov_step(k, h, &values, i + 1, i, i - 1);
            if !v.is_finite() || v.abs() > OVERFLOW_LIMIT {
                return Err(unbounded(i - 1));
            }
            values[i - 1] = v;
        }
    } else {
        propagate(k, h, anchor, value, slope, false, false, &mut values).map_err(unbounded)?;
    }
    let derivs = numerov_derivative(&values, k, h);
    Ok(RealWave {
        grid: *grid,
        values,
        derivs,
    })
}

/// A bound eigenstate: normalized eigenfunction and an independent partner.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    /// Number of interior nodes (ground state is 0).
    pub index: usize,
    pub energy: f64,
    pub psi: RealWave,
    /// Non-normalizable companion at the same energy.
    pub partner: RealWave,
}

struct Shooter<'a> {
    spec: &'a PotentialSpec,
    grid: Grid,
    potential: Vec<f64>,
}

impl Shooter<'_> {
    fn k(&self, energy: f64) -> Vec<f64> {
        k_values(self.spec.units, &self.potential, energy)
    }

    fn shoot(&self, energy: f64, forward: bool) -> (Vec<f64>, Vec<f64>) {
        let k = self.k(energy);
        let n = k.len();
        let mut out = vec![0.0; n];
        let (start, slope) = if forward { (0, 1.0) } else { (n - 1, -1.0) };
        // Renormalization keeps the samples finite, so this cannot fail.
        let _ = propagate(
            &k,
            self.grid.spacing(),
            start,
            0.0,
            slope,
            forward,
            true,
            &mut out,
        );
        (out, k)
    }

    /// Eigenvalues strictly below `energy` (Sturm oscillation count).
    fn count_below(&self, energy: f64) -> usize {
        let (psi, _) = self.shoot(energy, true);
        count_sign_changes(psi.into_iter().skip(1), 0.0)
    }

    fn matching_index(&self, energy: f64) -> usize {
        let n = self.grid.len();
        let mid = self.grid.midpoint_index();
        if matches!(self.spec.family, PotentialFamily::InfiniteWell { .. }) {
            return mid;
        }
        let margin = (n / 10).max(3);
        match self.potential.iter().rposition(|&v| v <= energy) {
            Some(i) if i >= margin && i + margin < n => i,
            _ => mid,
        }
    }

    /// Normalized Wronskian of the outward and inward shots at `m`; vanishes
    /// exactly at eigenvalues.
    fn mismatch(&self, energy: f64, m: usize) -> f64 {
        let h = self.grid.spacing();
        let scale = self.grid.q_max() - self.grid.q_min();
        let (left, k) = self.shoot(energy, true);
        let (right, _) = self.shoot(energy, false);
        let dl = numerov_derivative(&left, &k, h)[m];
        let dr = numerov_derivative(&right, &k, h)[m];
        let nl = left[m].hypot(dl * scale);
        let nr = right[m].hypot(dr * scale);
        (dl * right[m] - left[m] * dr) / (nl * nr)
    }

    fn refine(&self, n: usize, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
        for _ in 0..200 {
            let (cl, ch) = (self.count_below(lo), self.count_below(hi));
            if cl == n && ch == n + 1 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) <= n {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if !(self.count_below(lo) == n && self.count_below(hi) == n + 1) {
            return Err(Error::NotConverged(format!(
                "could not isolate level {n} in [{lo}, {hi}]"
            )));
        }
        let m = self.matching_index(0.5 * (lo + hi));
        let (g_lo, g_hi) = (self.mismatch(lo, m), self.mismatch(hi, m));
        let energy = if g_lo.is_finite() && g_hi.is_finite() && (g_lo < 0.0) != (g_hi < 0.0) {
            // Run to float resolution: the glued eigenfunction kinks at the
            // matching point in proportion to the energy error. `tol` only
            // bounds the node-count fallback below.
            bisect(|e| self.mismatch(e, m), lo, hi, 0.0)
        } else {
            // Matching degenerate at this point: fall back to the node count,
            // which changes exactly at the eigenvalue.
            bisect(
                |e| if self.count_below(e) <= n { -1.0 } else { 1.0 },
                lo,
                hi,
                tol,
            )
        };
        Ok(energy)
    }

    fn eigenfunction(&self, energy: f64) -> RealWave {
        let n = self.grid.len();
        let h = self.grid.spacing();
        let m = self.matching_index(energy);
        let (left, k) = self.shoot(energy, true);
        let (right, _) = self.shoot(energy, false);
        let dl = numerov_derivative(&left, &k, h);
        let dr = numerov_derivative(&right, &k, h);
        let ratio = if right[m].abs() > 1e-8 * right[m].hypot(dr[m] * h * n as f64) {
            left[m] / right[m]
        } else {
            dl[m] / dr[m]
        };
        let mut values: Vec<f64> = left[..m].to_vec();
        values.extend(right[m..].iter().map(|v| v * ratio));
        let peak = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let first = values
            .iter()
            .find(|v| v.abs() > 1e-3 * peak)
            .copied()
            .unwrap_or(1.0);
        let derivs = numerov_derivative(&values, &k, h);
        let mut wave = RealWave {
            grid: self.grid,
            values,
            derivs,
        };
        let norm = wave.norm_squared().sqrt();
        wave = wave.scaled(first.signum() / norm);
        wave
    }
}

/// Partner with the same amplitude balance as `psi`: initial data at the
/// anchor rotated a quarter turn in the phase plane scaled by the local wave
/// number, so `W(psi, partner) = kappa psi^2 + psi'^2 / kappa > 0`.
fn balanced_partner(
    spec: &PotentialSpec,
    energy: f64,
    psi: &RealWave,
    anchor: usize,
) -> Result<RealWave> {
    let kappa = anchor_wave_number(spec, energy, &psi.grid, anchor);
    integrate_from(
        spec,
        energy,
        &psi.grid,
        anchor,
        -psi.derivs[anchor] / kappa,
        kappa * psi.values[anchor],
    )
}

fn anchor_wave_number(spec: &PotentialSpec, energy: f64, grid: &Grid, anchor: usize) -> f64 {
    let kappa = spec
        .units
        .wave_number(energy - spec.value_unchecked(grid.q(anchor)));
    let length = grid.q_max() - grid.q_min();
    if kappa * length < 1e-8 {
        1.0 / length
    } else {
        kappa
    }
}

/// Shooting eigensolver: brackets each level by node counting, then bisects
/// on the matching condition between outward and inward integrations.
/// Dirichlet conditions are imposed at both grid edges; for mixed spectra
/// only levels below the continuum threshold are returned.
pub fn find_bound_eigenvalues(
    spec: &PotentialSpec,
    grid: &Grid,
    n_max: usize,
    tol: f64,
) -> Result<Vec<EigenSolution>> {
    check_grid(spec, grid)?;
    if spec.spectrum_class() == SpectrumClass::Continuous {
        return Err(Error::Unsupported(format!(
            "{} has a continuous spectrum",
            spec.family_name()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::NotConverged(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    if n_max == 0 {
        return Ok(Vec::new());
    }
    let shooter = Shooter {
        spec,
        grid: *grid,
        potential: potential_samples(spec, grid),
    };
    let v_min = shooter
        .potential
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let length = grid.q_max() - grid.q_min();
    let u = spec.units;

    let (top, wanted) = match spec.asymptotic_level() {
        Some(threshold) => {
            let top = threshold - 1e-12 * threshold.abs().max(1.0);
            (top, shooter.count_below(top).min(n_max))
        }
        None => {
            let mut width = u.hbar * u.hbar / (2.0 * u.mass * length * length);
            let mut found = false;
            for _ in 0..200 {
                if shooter.count_below(v_min + width) >= n_max {
                    found = true;
                    break;
                }
                width *= 2.0;
            }
            if !found {
                return Err(Error::NotConverged(format!(
                    "no bracket for {n_max} levels below {}",
                    v_min + width
                )));
            }
            (v_min + width, n_max)
        }
    };

    let energies: Vec<Result<f64>> = (0..wanted)
        .into_par_iter()
        .map(|n| shooter.refine(n, v_min, top, tol))
        .collect();

    let mut out = Vec::with_capacity(wanted);
    for (n, energy) in energies.into_iter().enumerate() {
        let energy = energy?;
        let psi = shooter.eigenfunction(energy);
        let partner = balanced_partner(spec, energy, &psi, grid.midpoint_index())?;
        out.push(EigenSolution {
            index: n,
            energy,
            psi,
            partner,
        });
    }
    Ok(out)
}

/// Two independent real solutions at one energy.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub phi: RealWave,
    pub theta: RealWave,
    /// `phi theta' - phi' theta` at the grid midpoint.
    pub wronskian: f64,
    pub energy: f64,
}

impl SolutionPair {
    pub fn new(phi: RealWave, theta: RealWave, energy: f64) -> Result<Self> {
        if phi.grid != theta.grid {
            return Err(Error::InvalidGrid("pair members on different grids".into()));
        }
        if !phi.is_finite() || !theta.is_finite() {
            return Err(Error::Unbounded { at: f64::NAN });
        }
        let mid = phi.grid.midpoint_index();
        let wronskian = phi.values[mid] * theta.derivs[mid] - phi.derivs[mid] * theta.values[mid];
        // Compare against the phase-plane lengths at the same node, which
        // bounds |W| and does not depend on growth elsewhere.
        let length = phi.grid.q_max() - phi.grid.q_min();
        let scale = |w: &RealWave| w.values[mid].hypot(w.derivs[mid] * length);
        let bound = scale(&phi) * scale(&theta) / length;
        if !(wronskian.abs() >= 1e-12 * bound) || bound == 0.0 {
            return Err(Error::DegeneratePair { wronskian });
        }
        Ok(Self {
            phi,
            theta,
            wronskian,
            energy,
        })
    }

    pub fn from_eigen(eigen: &EigenSolution) -> Result<Self> {
        Self::new(eigen.psi.clone(), eigen.partner.clone(), eigen.energy)
    }

    pub fn grid(&self) -> &Grid {
        &self.phi.grid
    }

    /// The pair restricted to the nodes covering `[q_lo, q_hi]`. Keeps bound
    /// states away from tails where `W'` underflows.
    pub fn window(&self, q_lo: f64, q_hi: f64) -> Result<Self> {
        let g = self.grid();
        if !(q_lo < q_hi) || !g.contains(q_lo) || !g.contains(q_hi) {
            return Err(Error::Domain {
                q: if g.contains(q_lo) { q_hi } else { q_lo },
                min: g.q_min(),
                max: g.q_max(),
            });
        }
        let (lo, hi) = (g.nearest_index(q_lo), g.nearest_index(q_hi));
        let sub = Grid::new(g.q(lo), g.q(hi), hi - lo + 1)?;
        let cut = |w: &RealWave| RealWave {
            grid: sub,
            values: w.values[lo..=hi].to_vec(),
            derivs: w.derivs[lo..=hi].to_vec(),
        };
        Self::new(cut(&self.phi), cut(&self.theta), self.energy)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            phi: self.phi.scaled(factor),
            theta: self.theta.scaled(factor),
            wronskian: self.wronskian * factor * factor,
            energy: self.energy,
        }
    }

    pub fn wronskian_field(&self) -> Vec<f64> {
        (0..self.phi.values.len())
            .map(|i| {
                self.phi.values[i] * self.theta.derivs[i]
                    - self.phi.derivs[i] * self.theta.values[i]
            })
            .collect()
    }

    /// `max |W(q) - W(q_mid)| / |W(q_mid)|` over the grid.
    pub fn wronskian_drift(&self) -> f64 {
        self.wronskian_field()
            .iter()
            .map(|w| (w - self.wronskian).abs() / self.wronskian.abs())
            .fold(0.0, f64::max)
    }
}

/// Independent pair at energy `energy`.
///
/// * Propagating constant/step potentials: real and imaginary parts of the
///   right-moving scattering state, so `(cos kq, sin kq)` for a free particle.
/// * Bound families: `phi` shot from the left wall (the eigenfunction when
///   `energy` is an eigenvalue), `theta` its balanced partner.
/// * Otherwise: `phi` with unit value and zero slope at the midpoint.
pub fn solution_pair(spec: &PotentialSpec, energy: f64, grid: &Grid) -> Result<SolutionPair> {
    check_grid(spec, grid)?;
    if let Some(state) = propagating_state(spec, energy)? {
        let field = state.sample_grid(grid);
        let re = |z: &[Complex64]| z.iter().map(|c| c.re).collect::<Vec<f64>>();
        let im = |z: &[Complex64]| z.iter().map(|c| c.im).collect::<Vec<f64>>();
        let phi = RealWave {
            grid: *grid,
            values: re(&field.values),
            derivs: re(&field.derivs),
        };
        let theta = RealWave {
            grid: *grid,
            values: im(&field.values),
            derivs: im(&field.derivs),
        };
        return SolutionPair::new(phi, theta, energy);
    }
    let anchor = grid.midpoint_index();
    let phi = match spec.spectrum_class() {
        SpectrumClass::DiscreteBound | SpectrumClass::Mixed => {
            numerov_integrate(spec, energy, grid, 0.0, 1.0, Direction::Forward)?
        }
        SpectrumClass::Continuous => integrate_from(spec, energy, grid, anchor, 1.0, 0.0)?,
    };
    let theta = balanced_partner(spec, energy, &phi, anchor)?;
    SolutionPair::new(phi, theta, energy)
}

/// Right-moving scattering state when the energy lies above the potential on
/// both sides; `None` when there is no propagating solution.
fn propagating_state(spec: &PotentialSpec, energy: f64) -> Result<Option<ScatteringState>> {
    let above = match spec.family {
        PotentialFamily::Constant { value } => energy > value,
        PotentialFamily::Step { height } => energy > 0.0 && energy > height,
        _ => false,
    };
    if above {
        Ok(Some(ScatteringState::new(spec, energy)?))
    } else {
        Ok(None)
    }
}

/// Plane-wave solution of a step (`V = 0` left of the origin, `height`
/// right) or a constant potential, incident from the left:
/// `e^{i k1 q} + r e^{-i k1 q}` for `q < 0` and `t e^{i k2 q}` for `q >= 0`.
/// Below the step `k2` is imaginary and the right side is evanescent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringState {
    pub energy: f64,
    pub k_left: f64,
    pub k_right: Complex64,
    pub r: Complex64,
    pub t: Complex64,
    units: Units,
}

impl ScatteringState {
    pub fn new(spec: &PotentialSpec, energy: f64) -> Result<Self> {
        let u = spec.units;
        let (left_level, right_level) = match spec.family {
            PotentialFamily::Step { height } => (0.0, height),
            PotentialFamily::Constant { value } => (value, value),
            _ => {
                return Err(Error::Unsupported(format!(
                    "no plane-wave scattering state for {}",
                    spec.family_name()
                )))
            }
        };
        if !(energy > left_level) {
            return Err(Error::Unsupported(format!(
                "energy {energy} not above the incident-side level {left_level}"
            )));
        }
        let k1 = u.wave_number(energy - left_level);
        let excess = energy - right_level;
        let k2 = if excess >= 0.0 {
            Complex64::new(u.wave_number(excess), 0.0)
        } else {
            Complex64::new(0.0, u.wave_number(excess))
        };
        let k1c = Complex64::new(k1, 0.0);
        Ok(Self {
            energy,
            k_left: k1,
            k_right: k2,
            r: (k1c - k2) / (k1c + k2),
            t: 2.0 * k1c / (k1c + k2),
            units: u,
        })
    }

    /// `(psi, psi')` at `q`.
    pub fn evaluate(&self, q: f64) -> (Complex64, Complex64) {
        let i = Complex64::i();
        if q < 0.0 {
            let k1 = self.k_left;
            let inc = (i * k1 * q).exp();
            let refl = self.r * (-i * k1 * q).exp();
            (inc + refl, i * k1 * (inc - refl))
        } else {
            let wave = self.t * (i * self.k_right * q).exp();
            (wave, i * self.k_right * wave)
        }
    }

    pub fn sample_grid(&self, grid: &Grid) -> WaveField {
        let (values, derivs) = grid.positions().iter().map(|&q| self.evaluate(q)).unzip();
        WaveField {
            grid: *grid,
            values,
            derivs,
        }
    }

    /// Conserved probability current `hbar k1 (1 - |r|^2) / m`.
    pub fn current(&self) -> f64 {
        self.units.hbar * self.k_left * (1.0 - self.r.norm_sqr()) / self.units.mass
    }

    /// Gradient of the wave-function phase, `hbar Im(psi* psi') / |psi|^2`.
    pub fn phase_gradient(&self, q: f64) -> f64 {
        let (psi, d) = self.evaluate(q);
        self.units.hbar * (psi.conj() * d).im / psi.norm_sqr()
    }
}

/// Scattering state of a step (or constant) potential sampled on `grid`.
pub fn scattering_state(
    spec: &PotentialSpec,
    energy: f64,
    grid: &Grid,
) -> Result<(ScatteringState, WaveField)> {
    check_grid(spec, grid)?;
    let state = ScatteringState::new(spec, energy)?;
    Ok((state, state.sample_grid(grid)))
}

/// `j = (hbar/m) Im(psi* psi')`; finite at nodes of `psi`.
pub fn probability_current(psi: &WaveField, units: Units) -> Vec<f64> {
    psi.values
        .iter()
        .zip(&psi.derivs)
        .map(|(v, d)| units.hbar / units.mass * (v.conj() * d).im)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn free() -> PotentialSpec {
        PotentialSpec::constant(0.0, -10.0, 10.0).unwrap()
    }

    #[test]
    fn numerov_free_sine() {
        let spec = free();
        let grid = Grid::new(0.0, PI / 2.0, 2001).unwrap();
        let w = numerov_integrate(&spec, 0.5, &grid, 0.0, 1.0, Direction::Forward).unwrap();
        assert!((w.values[2000] - 1.0).abs() < 1e-8, "{}", w.values[2000]);
        assert!(w.derivs[2000].abs() < 1e-8);
    }

    #[test]
    fn numerov_zero_data_stays_zero() {
        let spec = PotentialSpec::harmonic(1.0, -8.0, 8.0).unwrap();
        let grid = Grid::new(-8.0, 8.0, 401).unwrap();
        let w = numerov_integrate(&spec, 0.7, &grid, 0.0, 0.0, Direction::Forward).unwrap();
        assert!(w.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn numerov_gaussian_ratio() {
        let spec = PotentialSpec::harmonic(1.0, -8.0, 8.0).unwrap();
        let grid = Grid::new(0.0, 1.0, 2001).unwrap();
        let w = numerov_integrate(&spec, 0.5, &grid, 1.0, 0.0, Direction::Forward).unwrap();
        let ratio = w.values[2000] / w.values[0];
        assert!((ratio - (-0.5f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn backward_integration_mirrors_forward() {
        let spec = free();
        let grid = Grid::new(-1.0, 0.0, 1001).unwrap();
        let w = numerov_integrate(&spec, 0.5, &grid, 0.0, -1.0, Direction::Backward).unwrap();
        // psi(q) = sin(q) with psi(0) = 0, psi'(0) = -1 => psi = -sin(q)... at q=-1: sin(1)
        assert!((w.values[0] - 1f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn overflow_is_flagged() {
        let spec = PotentialSpec::constant(0.0, 0.0, 400.0).unwrap();
        let grid = Grid::new(0.0, 400.0, 20001).unwrap();
        let err = numerov_integrate(&spec, -2.0, &grid, 1.0, 2.0, Direction::Forward).unwrap_err();
        assert!(matches!(err, Error::Unbounded { .. }));
    }

    #[test]
    fn infinite_well_levels() {
        let spec = PotentialSpec::infinite_well(1.0).unwrap();
        let grid = Grid::new(0.0, 1.0, 2001).unwrap();
        let eig = find_bound_eigenvalues(&spec, &grid, 3, DEFAULT_EIGEN_TOL).unwrap();
        for (n, e) in eig.iter().enumerate() {
            let exact = ((n + 1) as f64).powi(2) * PI * PI / 2.0;
            assert!(((e.energy - exact) / exact).abs() < 1e-5);
            assert_eq!(e.psi.node_count(), n);
            assert!((e.psi.norm_squared() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_levels() {
        let spec = PotentialSpec::harmonic(1.0, -8.0, 8.0).unwrap();
        let grid = Grid::new(-8.0, 8.0, 2001).unwrap();
        let eig = find_bound_eigenvalues(&spec, &grid, 3, DEFAULT_EIGEN_TOL).unwrap();
        let energies: Vec<f64> = eig.iter().map(|e| e.energy).collect();
        for (n, e) in energies.iter().enumerate() {
            assert!((e - (n as f64 + 0.5)).abs() < 1e-6, "{energies:?}");
        }
    }

    #[test]
    fn shallow_finite_well_has_single_bound_state() {
        // kappa ~ 0.79, so the box walls at +-15 shift the level by ~e^-23.
        let spec = PotentialSpec::finite_well(1.0, 1.0, -15.0, 15.0).unwrap();
        let grid = Grid::new(-15.0, 15.0, 6001).unwrap();
        let eig = find_bound_eigenvalues(&spec, &grid, 3, DEFAULT_EIGEN_TOL).unwrap();
        let oracle = spec.analytic_spectrum(3).unwrap();
        assert_eq!(eig.len(), 1);
        assert_eq!(oracle.len(), 1);
        assert!(
            (eig[0].energy - oracle[0]).abs() < 1e-4,
            "{} vs {}",
            eig[0].energy,
            oracle[0]
        );
    }

    #[test]
    fn continuous_spectrum_rejected() {
        let grid = Grid::new(-1.0, 1.0, 101).unwrap();
        let spec = PotentialSpec::step(1.0, -1.0, 1.0).unwrap();
        assert!(find_bound_eigenvalues(&spec, &grid, 2, 1e-10).is_err());
    }

    #[test]
    fn free_pair_is_cos_sin() {
        let spec = free();
        let grid = Grid::new(-5.0, 5.0, 1001).unwrap();
        let pair = solution_pair(&spec, 0.5, &grid).unwrap();
        for (i, q) in grid.positions().iter().enumerate() {
            assert!((pair.phi.values[i] - q.cos()).abs() < 1e-14);
            assert!((pair.theta.values[i] - q.sin()).abs() < 1e-14);
        }
        assert!((pair.wronskian - 1.0).abs() < 1e-12);
        assert!(pair.wronskian_drift() < 1e-10);
    }

    #[test]
    fn infinite_well_pair() {
        let spec = PotentialSpec::infinite_well(1.0).unwrap();
        let grid = Grid::new(0.0, 1.0, 2001).unwrap();
        let e1 = PI * PI / 2.0;
        let pair = solution_pair(&spec, e1, &grid).unwrap();
        for (i, q) in grid.positions().iter().enumerate() {
            assert!((pair.phi.values[i] - (PI * q).sin() / PI).abs() < 1e-9);
        }
        assert!(pair.theta.values[0].abs() > 0.1);
        assert!(pair.wronskian_drift() < 1e-6);
    }

    #[test]
    fn dependent_pair_rejected() {
        let spec = free();
        let grid = Grid::new(-5.0, 5.0, 101).unwrap();
        let pair = solution_pair(&spec, 0.5, &grid).unwrap();
        let err = SolutionPair::new(pair.phi.clone(), pair.phi.scaled(2.0), 0.5).unwrap_err();
        assert!(matches!(err, Error::DegeneratePair { .. }));
    }

    #[test]
    fn step_reflection_amplitude() {
        let spec = PotentialSpec::step(0.75, -20.0, 20.0).unwrap();
        let s = ScatteringState::new(&spec, 1.0).unwrap();
        let (k1, k2) = (2f64.sqrt(), 0.5f64.sqrt());
        assert!((s.r.re - (k1 - k2) / (k1 + k2)).abs() < 1e-10);
        assert!((s.r.re - 1.0 / 3.0).abs() < 1e-10);

        let flat = PotentialSpec::step(0.0, -20.0, 20.0).unwrap();
        let s = ScatteringState::new(&flat, 0.8).unwrap();
        assert!(s.r.norm() < 1e-15 && (s.t - 1.0).norm() < 1e-15);

        let edge = ScatteringState::new(&spec, 0.75).unwrap();
        assert!((edge.r - 1.0).norm() < 1e-15);
    }

    #[test]
    fn step_wave_is_continuous_at_origin() {
        let spec = PotentialSpec::step(0.75, -20.0, 20.0).unwrap();
        for e in [0.3, 0.75, 1.0, 3.0] {
            let s = ScatteringState::new(&spec, e).unwrap();
            let (a, da) = s.evaluate(-1e-13);
            let (b, db) = s.evaluate(0.0);
            assert!(
                (a - b).norm() < 1e-10 && (da - db).norm() < 1e-10,
                "E = {e}"
            );
        }
    }

    #[test]
    fn currents() {
        let grid = Grid::new(-1.0, 1.0, 51).unwrap();
        let k = 2.0;
        let plane = WaveField {
            grid,
            values: grid
                .positions()
                .iter()
                .map(|q| (Complex64::i() * k * q).exp())
                .collect(),
            derivs: grid
                .positions()
                .iter()
                .map(|q| Complex64::i() * k * (Complex64::i() * k * q).exp())
                .collect(),
        };
        let j = probability_current(&plane, Units::default());
        assert!(j.iter().all(|x| (x - 2.0).abs() < 1e-14));

        let real = RealWave {
            grid,
            values: grid.positions().iter().map(|q| q.sin()).collect(),
            derivs: grid.positions().iter().map(|q| q.cos()).collect(),
        };
        assert!(probability_current(&real.to_complex(), Units::default())
            .iter()
            .all(|x| *x == 0.0));
    }

    #[test]
    fn step_flux_is_conserved() {
        let spec = PotentialSpec::step(0.75, -20.0, 20.0).unwrap();
        let grid = Grid::new(-20.0, 20.0, 4001).unwrap();
        let (state, field) = scattering_state(&spec, 1.0, &grid).unwrap();
        let j = probability_current(&field, spec.units);
        for x in &j {
            assert!((x - state.current()).abs() < 1e-8);
        }
    }
}
