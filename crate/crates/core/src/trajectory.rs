//! Classical, Bohmian and Floydian trajectories, quantum time and the epoch
//! relations.
//!
//! Bohm trajectories follow `q' = S'/m` with `S` the wave-function phase.
//! Floyd trajectories follow `q' = W'/(m dT/dE)`, which makes the epoch
//! constant. Along a Bohm path the quantum time `t_Q` advances at `dT/dE`,
//! and the Bohm path reparameterized by `t_Q` is the Floyd path.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::microstate::Microstate;
use crate::potential::{PotentialSpec, Units};
use crate::schrodinger::{ScatteringState, WaveField};
use crate::variation::{delta_q_delta_e, VariationFrame, DEFAULT_RELATIVE_DE};

/// Velocity and energy derivative at one point of a flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub v: f64,
    /// `dT/dE`; `NaN` where unbounded (tan pole).
    pub dtde: f64,
    /// `d/dq (dW/dE)`, the gradient of the energy derivative of the action.
    pub energy_gradient: f64,
}

/// Right-hand side `q' = v(q, t)` of a trajectory.
pub trait VelocityRule: Sync {
    fn kinematics(&self, q: f64, t: f64) -> Result<Kinematics>;

    /// Interval the rule is defined on.
    fn domain(&self) -> (f64, f64);

    /// Argument of the beat tangent, for rules that have one.
    fn pole_phase(&self, _q: f64, _t: f64) -> Option<f64> {
        None
    }

    fn describe(&self) -> String;
}

/// Uniform motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantVelocity {
    pub v: f64,
}

impl VelocityRule for ConstantVelocity {
    fn kinematics(&self, _q: f64, _t: f64) -> Result<Kinematics> {
        Ok(Kinematics {
            v: self.v,
            dtde: 1.0,
            energy_gradient: 1.0 / self.v,
        })
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn describe(&self) -> String {
        format!("uniform v = {}", self.v)
    }
}

/// Runs `rule` backwards in time from `t_end`: `q'(s) = -v(q, t_end - s)`.
pub struct Reversed<'a, R: VelocityRule + ?Sized> {
    pub rule: &'a R,
    pub t_end: f64,
}

impl<R: VelocityRule + ?Sized> VelocityRule for Reversed<'_, R> {
    fn kinematics(&self, q: f64, s: f64) -> Result<Kinematics> {
        let k = self.rule.kinematics(q, self.t_end - s)?;
        Ok(Kinematics { v: -k.v, ..k })
    }

    fn domain(&self) -> (f64, f64) {
        self.rule.domain()
    }

    fn describe(&self) -> String {
        format!("reversed({})", self.rule.describe())
    }
}

fn check_domain(domain: (f64, f64), q: f64) -> Result<()> {
    if q >= domain.0 && q <= domain.1 {
        Ok(())
    } else {
        Err(Error::Domain {
            q,
            min: domain.0,
            max: domain.1,
        })
    }
}

/// Bohm flow `v = (hbar/m) Im(psi'/psi)` of a wave function.
#[derive(Debug, Clone, PartialEq)]
pub enum BohmRule {
    /// Wave function sampled on a grid. `dT/dE = (p/m) dp/dE` needs an
    /// energy family, which a single sampled state lacks; it is exact (zero)
    /// where the phase is constant and `NaN` otherwise.
    Sampled { wave: WaveField, units: Units },
    /// Plane-wave scattering state, with `dT/dE` from the energy difference
    /// quotient of step `d_e`.
    Scattering {
        spec: PotentialSpec,
        state: ScatteringState,
        d_e: f64,
    },
}

impl BohmRule {
    pub fn sampled(wave: WaveField, units: Units) -> Self {
        Self::Sampled { wave, units }
    }

    pub fn scattering(spec: &PotentialSpec, energy: f64) -> Result<Self> {
        Ok(Self::Scattering {
            spec: spec.clone(),
            state: ScatteringState::new(spec, energy)?,
            d_e: DEFAULT_RELATIVE_DE * energy.abs(),
        })
    }
}

/// `(1/m) dS/dq` from a sampled wave function at `q`.
pub fn bohm_velocity(wave: &WaveField, units: Units, q: f64) -> Result<f64> {
    check_domain((wave.grid.q_min(), wave.grid.q_max()), q)?;
    let (psi, dpsi) = wave.sample(q);
    if psi.norm_sqr() == 0.0 {
        return Err(Error::SingularKinematics {
            q,
            t: f64::NAN,
            reason: "node of the wave function".into(),
        });
    }
    Ok(units.hbar / units.mass * (dpsi / psi).im)
}

/// Phase gradient of the scattering state and its energy derivative.
fn scattering_gradients(
    spec: &PotentialSpec,
    state: &ScatteringState,
    d_e: f64,
    q: f64,
) -> Result<(f64, f64)> {
    let w_prime = state.phase_gradient(q);
    let at = |e: f64| -> Result<f64> { Ok(ScatteringState::new(spec, e)?.phase_gradient(q)) };
    let dw_de = (at(state.energy + d_e)? - at(state.energy - d_e)?) / (2.0 * d_e);
    Ok((w_prime, dw_de))
}

impl VelocityRule for BohmRule {
    fn kinematics(&self, q: f64, _t: f64) -> Result<Kinematics> {
        match self {
            Self::Sampled { wave, units } => {
                let v = bohm_velocity(wave, *units, q)?;
                let dtde = if v == 0.0 { 0.0 } else { f64::NAN };
                Ok(Kinematics {
                    v,
                    dtde,
                    energy_gradient: f64::NAN,
                })
            }
            Self::Scattering { spec, state, d_e } => {
                check_domain(self.domain(), q)?;
                let (w_prime, dw_de) = scattering_gradients(spec, state, *d_e, q)?;
                let m = spec.units.mass;
                Ok(Kinematics {
                    v: w_prime / m,
                    dtde: w_prime / m * dw_de,
                    energy_gradient: dw_de,
                })
            }
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            Self::Sampled { wave, .. } => (wave.grid.q_min(), wave.grid.q_max()),
            Self::Scattering { spec, .. } => (spec.q_min, spec.q_max),
        }
    }

    fn describe(&self) -> String {
        match self {
            Self::Sampled { .. } => "bohm(sampled wave)".into(),
            Self::Scattering { spec, state, .. } => {
                format!("bohm({} E = {})", spec.family_name(), state.energy)
            }
        }
    }
}

/// Floyd flow `v = W'/(m dT/dE)` for the three energy-derivative models.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum FloydRule {
    /// `dT/dE = 1`: `v = W'/m`.
    Classical(Microstate),
    /// Beat between two microstates; explicitly time dependent.
    Beat {
        frame: VariationFrame,
        delta_alpha: f64,
    },
    /// Unbound system: `v = 1 / (dW'/dE)` from the energy difference quotient.
    Continuum {
        spec: PotentialSpec,
        state: ScatteringState,
        d_e: f64,
    },
}

impl FloydRule {
    pub fn continuum(spec: &PotentialSpec, energy: f64, d_e: Option<f64>) -> Result<Self> {
        let d_e = d_e.unwrap_or(DEFAULT_RELATIVE_DE * energy.abs());
        if !(d_e > 0.0) {
            return Err(Error::InvalidModel(format!(
                "energy step must be > 0, got {d_e}"
            )));
        }
        Ok(Self::Continuum {
            spec: spec.clone(),
            state: ScatteringState::new(spec, energy)?,
            d_e,
        })
    }

    pub fn units(&self) -> Units {
        match self {
            Self::Classical(ms) => ms.spec.units,
            Self::Beat { frame, .. } => frame.units(),
            Self::Continuum { spec, .. } => spec.units,
        }
    }
}

impl VelocityRule for FloydRule {
    fn kinematics(&self, q: f64, t: f64) -> Result<Kinematics> {
        check_domain(self.domain(), q)?;
        let m = self.units().mass;
        match self {
            Self::Classical(ms) => {
                let w_prime = ms.w_prime_at(q);
                Ok(Kinematics {
                    v: w_prime / m,
                    dtde: 1.0,
                    energy_gradient: m / w_prime,
                })
            }
            Self::Beat { frame, delta_alpha } => {
                let terms = frame.terms(q, t, *delta_alpha)?;
                let v = terms.velocity().ok_or(Error::SingularVelocity { q, t })?;
                let dtde = terms.dtde().unwrap_or(f64::NAN);
                Ok(Kinematics {
                    v,
                    dtde,
                    energy_gradient: m * dtde / terms.w_prime,
                })
            }
            Self::Continuum { spec, state, d_e } => {
                let (w_prime, dw_de) = scattering_gradients(spec, state, *d_e, q)?;
                let v = 1.0 / dw_de;
                if !v.is_finite() {
                    return Err(Error::SingularVelocity { q, t });
                }
                Ok(Kinematics {
                    v,
                    dtde: w_prime / m * dw_de,
                    energy_gradient: dw_de,
                })
            }
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            Self::Classical(ms) => (ms.grid.q_min(), ms.grid.q_max()),
            Self::Beat { frame, .. } => (frame.grid().q_min(), frame.grid().q_max()),
            Self::Continuum { spec, .. } => (spec.q_min, spec.q_max),
        }
    }

    fn pole_phase(&self, q: f64, t: f64) -> Option<f64> {
        match self {
            Self::Beat { frame, delta_alpha } => Some(frame.phase(q, t, *delta_alpha)),
            _ => None,
        }
    }

    fn describe(&self) -> String {
        match self {
            Self::Classical(ms) => format!(
                "floyd(classical_unity, E = {}, {:?})",
                ms.energy, ms.coefficients
            ),
            Self::Beat { frame, delta_alpha } => format!(
                "floyd(discrete_beat, E = {} -> {}, {:?}, delta_alpha = {delta_alpha})",
                frame.lower.energy, frame.upper.energy, frame.lower.coefficients
            ),
            Self::Continuum { spec, state, d_e } => format!(
                "floyd(continuum_limit, {} E = {}, dE = {d_e})",
                spec.family_name(),
                state.energy
            ),
        }
    }
}

/// Floyd velocity at `(q, t)`.
pub fn floyd_velocity(rule: &FloydRule, q: f64, t: f64) -> Result<f64> {
    Ok(rule.kinematics(q, t)?.v)
}

/// `d tau/dt = dQ/dE` at `(q, t)` under the rule's energy derivative.
pub fn epoch_rate(rule: &dyn VelocityRule, q: f64, t: f64) -> Result<f64> {
    Ok(delta_q_delta_e(rule.kinematics(q, t)?.dtde))
}

/// `(q0, q'0, q''0)` of the Floyd trajectory through `(q0, t0)`. The
/// acceleration `dv/dt + v dv/dq` uses central differences.
pub fn microstate_initial_kinematics(
    rule: &FloydRule,
    q0: f64,
    t0: f64,
) -> Result<(f64, f64, f64)> {
    let singular = |reason: &str| Error::SingularKinematics {
        q: q0,
        t: t0,
        reason: reason.into(),
    };
    if let Some(phase) = rule.pole_phase(q0, t0) {
        if phase.cos().abs() < crate::variation::TAN_POLE_THRESHOLD {
            return Err(singular("dT/dE unbounded (tan pole)"));
        }
    }
    let k = match rule.kinematics(q0, t0) {
        Ok(k) => k,
        Err(Error::SingularVelocity { .. }) => return Err(singular("dT/dE vanishes")),
        Err(e) => return Err(e),
    };
    if k.dtde == 0.0 || !k.v.is_finite() {
        return Err(singular("dT/dE vanishes"));
    }
    let (lo, hi) = rule.domain();
    let hq = 1e-5 * (hi - lo).min(1.0);
    let ht = 1e-5;
    let v = |q: f64, t: f64| -> Result<f64> { Ok(rule.kinematics(q, t)?.v) };
    let dv_dt = (v(q0, t0 + ht)? - v(q0, t0 - ht)?) / (2.0 * ht);
    let (qa, qb) = ((q0 - hq).max(lo), (q0 + hq).min(hi));
    let dv_dq = (v(qb, t0)? - v(qa, t0)?) / (qb - qa);
    Ok((q0, k.v, dv_dt + k.v * dv_dq))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Rk4 { dt: f64 },
    Rk45 { atol: f64, rtol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_steps: usize,
    /// Largest step the adaptive method may take; also the sampling bound.
    pub max_dt: f64,
    /// Steps below this end the integration with an event.
    pub min_dt: f64,
    /// `|v|` above this is reported as a singular velocity.
    pub velocity_cap: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45 {
                atol: 1e-9,
                rtol: 1e-9,
            },
            max_steps: 1_000_000,
            max_dt: 0.05,
            min_dt: 1e-13,
            velocity_cap: 1e6,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        Self {
            method: Method::Rk4 { dt },
            max_dt: dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { dt } => dt > 0.0,
            Method::Rk45 { atol, rtol } => atol > 0.0 && rtol >= 0.0,
        };
        if !ok
            || !(self.max_dt > 0.0)
            || !(self.min_dt > 0.0)
            || self.max_steps == 0
            || !(self.velocity_cap > 0.0)
        {
            return Err(Error::InvalidModel(format!(
                "bad integrator config {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryState {
    pub t: f64,
    pub q: f64,
    pub v: f64,
    pub t_q: f64,
    pub dtde: f64,
}

impl TrajectoryState {
    pub fn dqde(&self) -> f64 {
        delta_q_delta_e(self.dtde)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// The beat tangent crossed a pole; integration continues.
    TanPole {
        direction: f64,
    },
    /// `dT/dE` changed sign between samples.
    #[serde(rename = "dtde_zero")]
    DTdEZero,
    SingularVelocity,
    DomainExit,
    StepUnderflow,
}

impl EventKind {
    pub fn code(&self) -> f64 {
        match self {
            Self::TanPole { .. } => 1.0,
            Self::DTdEZero => 2.0,
            Self::SingularVelocity => 3.0,
            Self::DomainExit => 4.0,
            Self::StepUnderflow => 5.0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            Self::SingularVelocity | Self::DomainExit | Self::StepUnderflow
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryEvent {
    pub t: f64,
    pub q: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryResult {
    /// Strictly increasing in `t`.
    pub samples: Vec<TrajectoryState>,
    pub events: Vec<TrajectoryEvent>,
    pub provenance: String,
}

impl TrajectoryResult {
    pub fn last(&self) -> &TrajectoryState {
        self.samples
            .last()
            .expect("a trajectory has at least its initial sample")
    }

    pub fn terminated_by(&self) -> Option<EventKind> {
        self.events
            .iter()
            .find(|e| e.kind.is_terminal())
            .map(|e| e.kind)
    }

    pub fn has_event(&self, pred: impl Fn(&EventKind) -> bool) -> bool {
        self.events.iter().any(|e| pred(&e.kind))
    }

    /// Position at time `t` by cubic Hermite interpolation on the samples.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        hermite(&self.samples, |s| s.t, |s| s.v, t)
    }

    /// Columns `t, q, v, t_q, dTdE, dQdE, event_flag`; the flag carries the
    /// code of an event located in the step ending at that sample.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let mut flags = vec![0.0; self.samples.len()];
        for e in &self.events {
            let i = self
                .samples
                .partition_point(|s| s.t < e.t)
                .min(self.samples.len() - 1);
            flags[i] = e.kind.code();
        }
        let rows: Vec<Vec<f64>> = self
            .samples
            .iter()
            .zip(&flags)
            .map(|(s, f)| vec![s.t, s.q, s.v, s.t_q, s.dtde, s.dqde(), *f])
            .collect();
        write_table(
            out,
            &["t", "q", "v", "t_q", "dTdE", "dQdE", "event_flag"],
            &rows,
        )
    }
}

/// Cubic Hermite interpolation of `q` against a monotone key.
fn hermite<S>(
    samples: &[S],
    key: impl Fn(&S) -> f64,
    slope: impl Fn(&S) -> f64,
    x: f64,
) -> Option<f64>
where
    S: HasQ,
{
    let n = samples.len();
    if n == 0 {
        return None;
    }
    let increasing = n < 2 || key(&samples[n - 1]) >= key(&samples[0]);
    let (first, last) = (key(&samples[0]), key(&samples[n - 1]));
    let (lo, hi) = if increasing {
        (first, last)
    } else {
        (last, first)
    };
    let slack = 1e-12 * (1.0 + x.abs());
    if x < lo - slack || x > hi + slack {
        return None;
    }
    if n == 1 {
        return Some(samples[0].q());
    }
    let i = if increasing {
        samples.partition_point(|s| key(s) < x)
    } else {
        samples.partition_point(|s| key(s) > x)
    }
    .clamp(1, n - 1);
    let (a, b) = (&samples[i - 1], &samples[i]);
    let h = key(b) - key(a);
    if h == 0.0 {
        return Some(a.q());
    }
    let s = (x - key(a)) / h;
    let (h00, h10, h01, h11) = (
        (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
        s * (1.0 - s) * (1.0 - s),
        s * s * (3.0 - 2.0 * s),
        s * s * (s - 1.0),
    );
    Some(h00 * a.q() + h10 * h * slope(a) + h01 * b.q() + h11 * h * slope(b))
}

trait HasQ {
    fn q(&self) -> f64;
}

impl HasQ for TrajectoryState {
    fn q(&self) -> f64 {
        self.q
    }
}

enum StepFailure {
    /// A stage could not be evaluated or exceeded the velocity cap.
    Singular(Error),
}

fn stage(
    rule: &dyn VelocityRule,
    q: f64,
    t: f64,
    cap: f64,
) -> std::result::Result<f64, StepFailure> {
    match rule.kinematics(q, t) {
        Ok(k) if k.v.is_finite() && k.v.abs() <= cap => Ok(k.v),
        Ok(_) => Err(StepFailure::Singular(Error::SingularVelocity { q, t })),
        Err(e) => Err(StepFailure::Singular(e)),
    }
}

fn rk4_step(
    rule: &dyn VelocityRule,
    q: f64,
    t: f64,
    dt: f64,
    cap: f64,
) -> std::result::Result<f64, StepFailure> {
    let k1 = stage(rule, q, t, cap)?;
    let k2 = stage(rule, q + 0.5 * dt * k1, t + 0.5 * dt, cap)?;
    let k3 = stage(rule, q + 0.5 * dt * k2, t + 0.5 * dt, cap)?;
    let k4 = stage(rule, q + dt * k3, t + dt, cap)?;
    Ok(q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Dormand-Prince 5(4) step: fifth-order solution and error estimate.
fn dopri_step(
    rule: &dyn VelocityRule,
    q: f64,
    t: f64,
    dt: f64,
    cap: f64,
) -> std::result::Result<(f64, f64), StepFailure> {
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [&[f64]; 6] = [
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
        ],
        &[
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
        ],
        &[
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut k = [0.0; 7];
    k[0] = stage(rule, q, t, cap)?;
    for s in 0..6 {
        let incr: f64 = A[s].iter().zip(&k).map(|(a, kk)| a * kk).sum();
        k[s + 1] = stage(rule, q + dt * incr, t + C[s] * dt, cap)?;
    }
    let q5 = q + dt * A[5].iter().zip(&k).map(|(a, kk)| a * kk).sum::<f64>();
    let err = dt * E.iter().zip(&k).map(|(e, kk)| e * kk).sum::<f64>();
    Ok((q5, err.abs()))
}

/// Simpson increment of `t_Q` over one step, with the midpoint position from
/// the cubic Hermite through both ends. Falls back to the trapezoid when the
/// midpoint is singular.
fn quantum_time_step(
    rule: &dyn VelocityRule,
    prev: &TrajectoryState,
    q1: f64,
    v1: f64,
    dtde1: f64,
    h: f64,
) -> f64 {
    let trapezoid = 0.5 * h * (prev.dtde + dtde1);
    if !(prev.dtde.is_finite() && dtde1.is_finite()) {
        return trapezoid;
    }
    let qm = 0.5 * (prev.q + q1) + h * (prev.v - v1) / 8.0;
    match rule.kinematics(qm, prev.t + 0.5 * h) {
        Ok(k) if k.dtde.is_finite() => h / 6.0 * (prev.dtde + 4.0 * k.dtde + dtde1),
        _ => trapezoid,
    }
}

/// Integrates `q' = v(q, t)` from `(q0, t0)` to `t1`. Singular velocities,
/// domain exits and step underflow end the run with an event; tan-pole and
/// `dT/dE` sign crossings are recorded and integration continues.
pub fn integrate_trajectory(
    rule: &dyn VelocityRule,
    q0: f64,
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
) -> Result<TrajectoryResult> {
    config.validate()?;
    if !(t1 > t0) {
        return Err(Error::InvalidModel(format!(
            "need t1 > t0, got [{t0}, {t1}]"
        )));
    }
    check_domain(rule.domain(), q0)?;
    let k0 = rule.kinematics(q0, t0)?;
    let mut samples = vec![TrajectoryState {
        t: t0,
        q: q0,
        v: k0.v,
        t_q: t0,
        dtde: k0.dtde,
    }];
    let mut events = Vec::new();
    let cap = config.velocity_cap;
    if !(k0.v.abs() <= cap) {
        events.push(TrajectoryEvent {
            t: t0,
            q: q0,
            kind: EventKind::SingularVelocity,
        });
        return Ok(finish(samples, events, rule));
    }

    let (mut t, mut q) = (t0, q0);
    let mut dt = match config.method {
        Method::Rk4 { dt } => dt,
        Method::Rk45 { .. } => config.max_dt.min(t1 - t0) * 0.1,
    };
    let mut steps = 0;
    while t < t1 {
        if steps >= config.max_steps {
            events.push(TrajectoryEvent {
                t,
                q,
                kind: EventKind::StepUnderflow,
            });
            break;
        }
        steps += 1;
        let h = dt.min(t1 - t).min(config.max_dt);
        let attempt = match config.method {
            Method::Rk4 { .. } => rk4_step(rule, q, t, h, cap).map(|q1| (q1, true, h)),
            Method::Rk45 { atol, rtol } => dopri_step(rule, q, t, h, cap).map(|(q1, err)| {
                let tol = atol + rtol * q.abs().max(q1.abs());
                let ratio = err / tol;
                let factor = if ratio == 0.0 {
                    5.0
                } else {
                    (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
                };
                (q1, ratio <= 1.0, h * factor)
            }),
        };
        let failure = match attempt {
            Ok((q1, accepted, next_dt)) => {
                if accepted {
                    match rule.kinematics(q1, t + h) {
                        Ok(k) if k.v.abs() <= cap => {
                            let prev = *samples.last().unwrap();
                            let state = TrajectoryState {
                                t: t + h,
                                q: q1,
                                v: k.v,
                                t_q: prev.t_q + quantum_time_step(rule, &prev, q1, k.v, k.dtde, h),
                                dtde: k.dtde,
                            };
                            record_crossings(rule, &prev, &state, &mut events);
                            samples.push(state);
                            t += h;
                            q = q1;
                            if matches!(config.method, Method::Rk45 { .. }) {
                                dt = next_dt;
                            }
                            continue;
                        }
                        Ok(_) => Some(Error::SingularVelocity { q: q1, t: t + h }),
                        Err(e) => Some(e),
                    }
                } else {
                    dt = next_dt;
                    None
                }
            }
            Err(StepFailure::Singular(e)) => Some(e),
        };
        if let Some(err) = failure {
            // Retry with a smaller step; give up once it underflows.
            dt = 0.25 * h;
            if dt < config.min_dt {
                let kind = match err {
                    Error::Domain { .. } => EventKind::DomainExit,
                    Error::SingularVelocity { .. } => EventKind::SingularVelocity,
                    _ => EventKind::StepUnderflow,
                };
                events.push(TrajectoryEvent { t, q, kind });
                break;
            }
        } else if dt < config.min_dt {
            events.push(TrajectoryEvent {
                t,
                q,
                kind: EventKind::StepUnderflow,
            });
            break;
        }
    }
    Ok(finish(samples, events, rule))
}

fn finish(
    samples: Vec<TrajectoryState>,
    events: Vec<TrajectoryEvent>,
    rule: &dyn VelocityRule,
) -> TrajectoryResult {
    TrajectoryResult {
        samples,
        events,
        provenance: rule.describe(),
    }
}

fn record_crossings(
    rule: &dyn VelocityRule,
    a: &TrajectoryState,
    b: &TrajectoryState,
    events: &mut Vec<TrajectoryEvent>,
) {
    let pole = match (rule.pole_phase(a.q, a.t), rule.pole_phase(b.q, b.t)) {
        (Some(pa), Some(pb)) => {
            let (ka, kb) = (
                ((pa - std::f64::consts::FRAC_PI_2) / std::f64::consts::PI).floor(),
                ((pb - std::f64::consts::FRAC_PI_2) / std::f64::consts::PI).floor(),
            );
            if ka != kb {
                let target = std::f64::consts::FRAC_PI_2 + ka.max(kb) * std::f64::consts::PI;
                let s = ((target - pa) / (pb - pa)).clamp(0.0, 1.0);
                events.push(TrajectoryEvent {
                    t: a.t + s * (b.t - a.t),
                    q: a.q + s * (b.q - a.q),
                    kind: EventKind::TanPole {
                        direction: if pb < pa { -1.0 } else { 1.0 },
                    },
                });
                true
            } else {
                false
            }
        }
        _ => false,
    };
    if !pole && a.dtde.is_finite() && b.dtde.is_finite() && (a.dtde > 0.0) != (b.dtde > 0.0) {
        let s = a.dtde / (a.dtde - b.dtde);
        events.push(TrajectoryEvent {
            t: a.t + s * (b.t - a.t),
            q: a.q + s * (b.q - a.q),
            kind: EventKind::DTdEZero,
        });
    }
}

/// Recomputes `t_Q = t_Q(t0) + int (1 - dQ/dE) dt` along the samples with
/// the trapezoid rule, `dQ/dE` supplied per `(q, t)`.
pub fn quantum_time_along(
    result: &TrajectoryResult,
    dqde: impl Fn(f64, f64) -> f64,
) -> TrajectoryResult {
    let mut out = result.clone();
    let rates: Vec<f64> = out.samples.iter().map(|s| 1.0 - dqde(s.q, s.t)).collect();
    for i in 1..out.samples.len() {
        let dt = out.samples[i].t - out.samples[i - 1].t;
        out.samples[i].t_q = out.samples[i - 1].t_q + 0.5 * dt * (rates[i - 1] + rates[i]);
    }
    out
}

/// Largest step residual of `t - t0 = dW/dE` along a trajectory: over each
/// step, `|(1/dt) int d/dq(dW/dE) dq - 1|` by Simpson's rule with the midpoint
/// from the cubic Hermite through the ends. Zero for a Floyd path; the step
/// average of `|dQ/dE|` for a Bohm path.
pub fn epoch_identity_check(rule: &dyn VelocityRule, trajectory: &TrajectoryResult) -> Result<f64> {
    let s = &trajectory.samples;
    if s.len() < 2 {
        return Err(Error::InvalidModel("need at least two samples".into()));
    }
    let mut worst = 0.0f64;
    for w in s.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.t - a.t;
        let qm = 0.5 * (a.q + b.q) + h * (a.v - b.v) / 8.0;
        let g = |q: f64, t: f64| rule.kinematics(q, t).map(|k| k.energy_gradient);
        let integral =
            (b.q - a.q) / 6.0 * (g(a.q, a.t)? + 4.0 * g(qm, a.t + 0.5 * h)? + g(b.q, b.t)?);
        worst = worst.max((integral / h - 1.0).abs());
    }
    Ok(worst)
}

/// Floyd path against the Bohm path reparameterized by quantum time on one
/// monotone segment of `t_Q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentComparison {
    pub t_start: f64,
    pub t_end: f64,
    pub t_q_start: f64,
    pub t_q_end: f64,
    pub q_start: f64,
    pub q_end: f64,
    /// Sign of `dT/dE` on the segment.
    pub dtde_sign: f64,
    pub max_discrepancy: f64,
    pub floyd_events: Vec<TrajectoryEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeformationRecord {
    pub energy: f64,
    pub q0: f64,
    pub span: f64,
    pub dtde_sign_changes: Vec<TrajectoryEvent>,
    pub segments: Vec<SegmentComparison>,
    pub bohm_events: Vec<TrajectoryEvent>,
}

impl DeformationRecord {
    pub fn max_discrepancy(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.max_discrepancy)
            .fold(0.0, f64::max)
    }
}

/// Integrates the Bohm trajectory of an unbound state over `[0, span]`,
/// splits it where `dT/dE` changes sign, and on each segment runs the Floyd
/// trajectory in ordinary time against the Bohm path read at `t_Q`.
/// Segment ends where `|dT/dE| < trim` are dropped (the reparameterization
/// is singular there).
pub fn bohm_floyd_time_deformation(
    spec: &PotentialSpec,
    energy: f64,
    q0: f64,
    span: f64,
    trim: f64,
    config: &IntegratorConfig,
) -> Result<DeformationRecord> {
    let bohm = BohmRule::scattering(spec, energy)?;
    let floyd = FloydRule::continuum(spec, energy, None)?;
    let path = integrate_trajectory(&bohm, q0, 0.0, span, config)?;
    let s = &path.samples;
    let dtde_sign_changes: Vec<TrajectoryEvent> = path
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::DTdEZero))
        .copied()
        .collect();

    let mut segments = Vec::new();
    let mut start = 0;
    for i in 1..=s.len() {
        let boundary = i == s.len() || (s[i].dtde > 0.0) != (s[start].dtde > 0.0);
        if !boundary {
            continue;
        }
        let kept: Vec<TrajectoryState> = s[start..i]
            .iter()
            .filter(|x| x.dtde.abs() >= trim)
            .copied()
            .collect();
        start = i;
        if kept.len() < 4 {
            continue;
        }
        segments.push(compare_segment(&floyd, &kept, config)?);
    }
    Ok(DeformationRecord {
        energy,
        q0,
        span,
        dtde_sign_changes,
        segments,
        bohm_events: path.events.clone(),
    })
}

fn compare_segment(
    floyd: &FloydRule,
    bohm: &[TrajectoryState],
    config: &IntegratorConfig,
) -> Result<SegmentComparison> {
    let sign = bohm[0].dtde.signum();
    let (first, last) = (&bohm[0], &bohm[bohm.len() - 1]);
    // Walk in increasing t_Q so the Floyd run goes forward in time, and stop
    // the integrator at every Bohm sample instead of interpolating.
    let mut ordered: Vec<&TrajectoryState> = bohm.iter().collect();
    if last.t_q < first.t_q {
        ordered.reverse();
    }
    let mut q = ordered[0].q;
    let mut worst = 0.0f64;
    let mut floyd_events = Vec::new();
    for pair in ordered.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.t_q <= a.t_q {
            continue;
        }
        let run = integrate_trajectory(floyd, q, a.t_q, b.t_q, config)?;
        floyd_events.extend(run.events.iter().copied());
        if run.events.iter().any(|e| e.kind.is_terminal()) {
            break;
        }
        q = run.last().q;
        worst = worst.max((q - b.q).abs());
    }
    Ok(SegmentComparison {
        t_start: first.t,
        t_end: last.t,
        t_q_start: first.t_q,
        t_q_end: last.t_q,
        q_start: first.q,
        q_end: last.q,
        dtde_sign: sign,
        max_discrepancy: worst,
        floyd_events,
    })
}
