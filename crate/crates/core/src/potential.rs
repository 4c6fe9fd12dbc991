//! Physical units and the catalog of one-dimensional potentials.
//!
//! Every potential carries its own [`Units`] so that downstream solvers never
//! have to thread `hbar` and `mass` separately.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Action and mass units. Natural units (`hbar = mass = 1`) by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

impl Units {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        let units = Self { hbar, mass };
        units.validate()?;
        Ok(units)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::InvalidUnits(format!(
                "hbar must be > 0, got {}",
                self.hbar
            )));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidUnits(format!(
                "mass must be > 0, got {}",
                self.mass
            )));
        }
        Ok(())
    }

    /// Local wave number `sqrt(2m|E - V|)/hbar`.
    pub fn wave_number(&self, kinetic: f64) -> f64 {
        (2.0 * self.mass * kinetic.abs()).sqrt() / self.hbar
    }

    /// Coefficient `2m/hbar^2` of `(V - E)` in `psi'' = 2m(V - E) psi / hbar^2`.
    pub fn schrodinger_factor(&self) -> f64 {
        2.0 * self.mass / (self.hbar * self.hbar)
    }
}

/// Potential families with their parameters.
///
/// * `FiniteWell`: `V = 0` for `|q| < width/2`, `V = depth` outside.
/// * `Step`: `V = 0` for `q < 0`, `V = height` for `q >= 0`.
/// * `InfiniteWell`: `V = 0` on the domain, whose edges are the walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialFamily {
    Constant { value: f64 },
    InfiniteWell { width: f64 },
    FiniteWell { width: f64, depth: f64 },
    Harmonic { omega: f64 },
    Step { height: f64 },
    Tabulated { nodes: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumClass {
    DiscreteBound,
    Continuous,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: PotentialFamily,
    pub q_min: f64,
    pub q_max: f64,
    pub units: Units,
}

impl PotentialSpec {
    pub fn new(family: PotentialFamily, q_min: f64, q_max: f64, units: Units) -> Result<Self> {
        let spec = Self {
            family,
            q_min,
            q_max,
            units,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(value: f64, q_min: f64, q_max: f64) -> Result<Self> {
        Self::new(
            PotentialFamily::Constant { value },
            q_min,
            q_max,
            Units::default(),
        )
    }

    /// Infinite well of width `width` occupying `[0, width]`.
    pub fn infinite_well(width: f64) -> Result<Self> {
        Self::new(
            PotentialFamily::InfiniteWell { width },
            0.0,
            width,
            Units::default(),
        )
    }

    pub fn finite_well(width: f64, depth: f64, q_min: f64, q_max: f64) -> Result<Self> {
        Self::new(
            PotentialFamily::FiniteWell { width, depth },
            q_min,
            q_max,
            Units::default(),
        )
    }

    pub fn harmonic(omega: f64, q_min: f64, q_max: f64) -> Result<Self> {
        Self::new(
            PotentialFamily::Harmonic { omega },
            q_min,
            q_max,
            Units::default(),
        )
    }

    pub fn step(height: f64, q_min: f64, q_max: f64) -> Result<Self> {
        Self::new(
            PotentialFamily::Step { height },
            q_min,
            q_max,
            Units::default(),
        )
    }

    /// Tabulated potential; the domain is the span of the table.
    pub fn tabulated(nodes: Vec<(f64, f64)>) -> Result<Self> {
        let (q_min, q_max) = match (nodes.first(), nodes.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => return Err(Error::InvalidPotential("empty table".into())),
        };
        Self::new(
            PotentialFamily::Tabulated { nodes },
            q_min,
            q_max,
            Units::default(),
        )
    }

    pub fn with_units(mut self, units: Units) -> Result<Self> {
        self.units = units;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.units.validate()?;
        if self.q_min.is_nan() || self.q_max.is_nan() || self.q_min >= self.q_max {
            return Err(Error::InvalidPotential(format!(
                "domain [{}, {}] is empty",
                self.q_min, self.q_max
            )));
        }
        let finite_domain = self.q_min.is_finite() && self.q_max.is_finite();
        match &self.family {
            PotentialFamily::Constant { value } => check_finite("value", *value)?,
            PotentialFamily::Step { height } => check_finite("height", *height)?,
            PotentialFamily::InfiniteWell { width } => {
                check_positive("width", *width)?;
                if !finite_domain || ((self.q_max - self.q_min) - width).abs() > 1e-12 * width {
                    return Err(Error::InvalidPotential(format!(
                        "infinite well of width {width} needs a domain of that width, got [{}, {}]",
                        self.q_min, self.q_max
                    )));
                }
            }
            PotentialFamily::FiniteWell { width, depth } => {
                check_positive("width", *width)?;
                check_positive("depth", *depth)?;
                if !finite_domain {
                    return Err(Error::InvalidPotential(
                        "finite well needs a finite domain".into(),
                    ));
                }
            }
            PotentialFamily::Harmonic { omega } => {
                check_positive("omega", *omega)?;
                if !finite_domain {
                    return Err(Error::InvalidPotential(
                        "harmonic well needs a finite domain".into(),
                    ));
                }
            }
            PotentialFamily::Tabulated { nodes } => {
                if nodes.len() < 2 {
                    return Err(Error::InvalidPotential(
                        "table needs at least two nodes".into(),
                    ));
                }
                for (q, v) in nodes {
                    check_finite("table position", *q)?;
                    check_finite("table value", *v)?;
                }
                if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidPotential(
                        "table positions must be strictly increasing".into(),
                    ));
                }
                if self.q_min < nodes[0].0 || self.q_max > nodes[nodes.len() - 1].0 {
                    return Err(Error::InvalidPotential("domain exceeds table span".into()));
                }
            }
        }
        Ok(())
    }

    pub fn spectrum_class(&self) -> SpectrumClass {
        match self.family {
            PotentialFamily::InfiniteWell { .. }
            | PotentialFamily::Harmonic { .. }
            | PotentialFamily::Tabulated { .. } => SpectrumClass::DiscreteBound,
            PotentialFamily::Constant { .. } | PotentialFamily::Step { .. } => {
                SpectrumClass::Continuous
            }
            PotentialFamily::FiniteWell { .. } => SpectrumClass::Mixed,
        }
    }

    /// Label of the ground state in the family's customary numbering:
    /// wells count from 1, everything else from 0.
    pub fn first_quantum_number(&self) -> usize {
        match self.family {
            PotentialFamily::InfiniteWell { .. } | PotentialFamily::FiniteWell { .. } => 1,
            _ => 0,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            PotentialFamily::Constant { .. } => "Constant",
            PotentialFamily::InfiniteWell { .. } => "InfiniteWell",
            PotentialFamily::FiniteWell { .. } => "FiniteWell",
            PotentialFamily::Harmonic { .. } => "Harmonic",
            PotentialFamily::Step { .. } => "Step",
            PotentialFamily::Tabulated { .. } => "Tabulated",
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        let slack = 1e-12 * (1.0 + q.abs());
        q >= self.q_min - slack && q <= self.q_max + slack
    }

    /// `V(q)`. Positions outside the domain are an error.
    pub fn evaluate(&self, q: f64) -> Result<f64> {
        if !self.contains(q) {
            return Err(Error::Domain {
                q,
                min: self.q_min,
                max: self.q_max,
            });
        }
        Ok(self.value_unchecked(q))
    }

    /// `V(q)` without the domain check; tabulated values are clamped.
    pub(crate) fn value_unchecked(&self, q: f64) -> f64 {
        match &self.family {
            PotentialFamily::Constant { value } => *value,
            PotentialFamily::InfiniteWell { .. } => 0.0,
            PotentialFamily::FiniteWell { width, depth } => {
                if q.abs() < 0.5 * width {
                    0.0
                } else {
                    *depth
                }
            }
            PotentialFamily::Harmonic { omega } => 0.5 * self.units.mass * omega * omega * q * q,
            PotentialFamily::Step { height } => {
                if q < 0.0 {
                    0.0
                } else {
                    *height
                }
            }
            PotentialFamily::Tabulated { nodes } => interpolate_table(nodes, q),
        }
    }

    /// Closed-form (or transcendental-root) spectrum; `None` when the family
    /// has no discrete spectrum to offer. Returns at most `n_max` levels.
    pub fn analytic_spectrum(&self, n_max: usize) -> Option<Vec<f64>> {
        let u = self.units;
        match &self.family {
            PotentialFamily::InfiniteWell { width } => Some(
                (1..=n_max)
                    .map(|n| {
                        let n = n as f64;
                        n * n * PI * PI * u.hbar * u.hbar / (2.0 * u.mass * width * width)
                    })
                    .collect(),
            ),
            PotentialFamily::Harmonic { omega } => Some(
                (0..n_max)
                    .map(|n| (n as f64 + 0.5) * u.hbar * omega)
                    .collect(),
            ),
            PotentialFamily::FiniteWell { width, depth } => {
                Some(finite_well_levels(*width, *depth, u, n_max))
            }
            _ => None,
        }
    }

    /// Potential value approached at the domain edges, used as the
    /// continuum threshold for mixed spectra.
    pub fn asymptotic_level(&self) -> Option<f64> {
        match &self.family {
            PotentialFamily::FiniteWell { depth, .. } => Some(*depth),
            _ => None,
        }
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPotential(format!(
            "{name} must be > 0, got {x}"
        )))
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidPotential(format!(
            "{name} must be finite, got {x}"
        )))
    }
}

fn interpolate_table(nodes: &[(f64, f64)], q: f64) -> f64 {
    let last = nodes.len() - 1;
    if q <= nodes[0].0 {
        return nodes[0].1;
    }
    if q >= nodes[last].0 {
        return nodes[last].1;
    }
    let k = nodes.partition_point(|&(x, _)| x <= q);
    let (x0, v0) = nodes[k - 1];
    let (x1, v1) = nodes[k];
    if q == x0 {
        return v0;
    }
    v0 + (v1 - v0) * (q - x0) / (x1 - x0)
}

/// Bound levels of the finite square well, `V = 0` inside `|q| < width/2` and
/// `depth` outside. In the scaled variable `z = k width / 2` the k-th level
/// lies in `(k pi/2, (k+1) pi/2)` and exists when `z0 > k pi/2`.
fn finite_well_levels(width: f64, depth: f64, u: Units, n_max: usize) -> Vec<f64> {
    let z0 = 0.5 * width * (2.0 * u.mass * depth).sqrt() / u.hbar;
    let mut levels = Vec::new();
    for k in 0..n_max {
        let lo = k as f64 * PI / 2.0;
        if z0 <= lo {
            break;
        }
        let hi = ((k + 1) as f64 * PI / 2.0).min(z0);
        let outside = |z: f64| (z0 * z0 - z * z).max(0.0).sqrt();
        // Multiplied through by cos or sin so neither branch has poles.
        let f = |z: f64| {
            if k % 2 == 0 {
                z * z.sin() - outside(z) * z.cos()
            } else {
                -z * z.cos() - outside(z) * z.sin()
            }
        };
        let z = bisect(f, lo, hi, 1e-12);
        let kk = 2.0 * z / width;
        levels.push(u.hbar * u.hbar * kk * kk / (2.0 * u.mass));
    }
    levels
}

/// Bisection on a bracketed sign change of `f`; stops when the bracket is
/// narrower than `tol`.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_catalog() {
        let free = PotentialSpec::constant(0.0, -10.0, 10.0).unwrap();
        assert_eq!(free.evaluate(0.3).unwrap(), 0.0);

        let ho = PotentialSpec::harmonic(1.0, -8.0, 8.0).unwrap();
        assert!((ho.evaluate(2.0).unwrap() - 2.0).abs() < 1e-15);

        let step = PotentialSpec::step(1.0, -5.0, 5.0).unwrap();
        assert_eq!(step.evaluate(-0.5).unwrap(), 0.0);
        assert_eq!(step.evaluate(0.5).unwrap(), 1.0);
    }

    #[test]
    fn outside_domain_is_error() {
        let well = PotentialSpec::infinite_well(1.0).unwrap();
        assert!(matches!(well.evaluate(1.5), Err(Error::Domain { .. })));
        assert!(well.evaluate(1.0).is_ok());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(PotentialSpec::infinite_well(0.0).is_err());
        assert!(PotentialSpec::harmonic(-1.0, -1.0, 1.0).is_err());
        assert!(PotentialSpec::tabulated(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(PotentialSpec::harmonic(1.0, f64::NEG_INFINITY, 1.0).is_err());
        assert!(Units::new(0.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_spectra() {
        let well = PotentialSpec::infinite_well(1.0).unwrap();
        let e = well.analytic_spectrum(1).unwrap();
        assert!((e[0] - 4.934_802_200_544_679).abs() < 1e-12);

        let ho = PotentialSpec::harmonic(1.0, -8.0, 8.0).unwrap();
        assert_eq!(ho.analytic_spectrum(1).unwrap(), vec![0.5]);

        let free = PotentialSpec::constant(0.0, -1.0, 1.0).unwrap();
        assert!(free.analytic_spectrum(3).is_none());
    }

    #[test]
    fn finite_well_roots_satisfy_matching() {
        let well = PotentialSpec::finite_well(2.0, 10.0, -6.0, 6.0).unwrap();
        let levels = well.analytic_spectrum(10).unwrap();
        assert!(!levels.is_empty() && levels.len() < 10);
        for (n, e) in levels.iter().enumerate() {
            let k = (2.0 * e).sqrt();
            let kappa = (2.0 * (10.0 - e)).sqrt();
            let mismatch = if n % 2 == 0 {
                k * (k * 1.0).tan() - kappa
            } else {
                -k / (k * 1.0).tan() - kappa
            };
            assert!(mismatch.abs() < 1e-8, "level {n}: {mismatch}");
        }
        // z0 = sqrt(20) = 4.47, so levels exist for k pi/2 < z0: k = 0, 1, 2.
        assert_eq!(levels.len(), 3);
    }

    #[test]
    fn shallow_finite_well_has_one_level() {
        let well = PotentialSpec::finite_well(1.0, 1.0, -5.0, 5.0).unwrap();
        assert_eq!(well.analytic_spectrum(5).unwrap().len(), 1);
    }

    #[test]
    fn spectrum_classes() {
        assert_eq!(
            PotentialSpec::infinite_well(1.0).unwrap().spectrum_class(),
            SpectrumClass::DiscreteBound
        );
        assert_eq!(
            PotentialSpec::step(1.0, -1.0, 1.0)
                .unwrap()
                .spectrum_class(),
            SpectrumClass::Continuous
        );
        assert_eq!(
            PotentialSpec::finite_well(1.0, 1.0, -2.0, 2.0)
                .unwrap()
                .spectrum_class(),
            SpectrumClass::Mixed
        );
    }

    #[test]
    fn tabulated_is_piecewise_linear() {
        let table = PotentialSpec::tabulated(vec![(0.0, 0.0), (1.0, 2.0), (3.0, 0.0)]).unwrap();
        assert_eq!(table.evaluate(0.5).unwrap(), 1.0);
        assert_eq!(table.evaluate(2.0).unwrap(), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn table_nodes_reproduced(values in proptest::collection::vec(-5.0f64..5.0, 2..20)) {
                let nodes: Vec<(f64, f64)> = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (i as f64 * 0.37 - 1.0, *v))
                    .collect();
                let table = PotentialSpec::tabulated(nodes.clone()).unwrap();
                for (q, v) in nodes {
                    prop_assert_eq!(table.evaluate(q).unwrap(), v);
                }
            }

            #[test]
            fn discrete_spectra_increase(width in 0.2f64..5.0, omega in 0.1f64..5.0, n in 2usize..12) {
                let well = PotentialSpec::infinite_well(width).unwrap();
                let ho = PotentialSpec::harmonic(omega, -10.0, 10.0).unwrap();
                for spectrum in [well.analytic_spectrum(n).unwrap(), ho.analytic_spectrum(n).unwrap()] {
                    prop_assert!(spectrum.windows(2).all(|w| w[1] > w[0]));
                }
            }
        }
    }
}
