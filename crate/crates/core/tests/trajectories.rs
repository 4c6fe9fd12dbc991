use qtraj_core::grid::Grid;
use qtraj_core::microstate::{build_microstate, MicrostateCoefficients};
use qtraj_core::schrodinger::{
    find_bound_eigenvalues, solution_pair, ScatteringState, SolutionPair,
};
use qtraj_core::trajectory::{
    bohm_floyd_time_deformation, epoch_identity_check, epoch_rate, floyd_velocity,
    integrate_trajectory, microstate_initial_kinematics, BohmRule, ConstantVelocity, EventKind,
    FloydRule, IntegratorConfig, Reversed, VelocityRule,
};
use qtraj_core::variation::{beat_frame, delta_t_delta_e_continuum};
use qtraj_core::{Error, PotentialSpec};

fn free() -> PotentialSpec {
    PotentialSpec::constant(0.0, -10.0, 10.0).unwrap()
}

fn step() -> PotentialSpec {
    PotentialSpec::step(0.75, -20.0, 20.0).unwrap()
}

/// Short steps, so finite differences along the recorded path are accurate.
fn fine() -> IntegratorConfig {
    IntegratorConfig {
        max_dt: 0.005,
        ..IntegratorConfig::default()
    }
}

fn well_rule(c: (f64, f64, f64)) -> FloydRule {
    let spec = PotentialSpec::infinite_well(1.0).unwrap();
    let grid = Grid::new(0.0, 1.0, 2001).unwrap();
    let eig = find_bound_eigenvalues(&spec, &grid, 1, 1e-10).unwrap();
    let pair = SolutionPair::from_eigen(&eig[0]).unwrap();
    let coeffs = MicrostateCoefficients::new(c.0, c.1, c.2).unwrap();
    FloydRule::Classical(build_microstate(&spec, &pair, coeffs, 0.5).unwrap())
}

fn beat_rule() -> FloydRule {
    let spec = PotentialSpec::infinite_well(1.0).unwrap();
    let grid = Grid::new(0.0, 1.0, 2001).unwrap();
    let coeffs = MicrostateCoefficients::new(2.0, 1.0, 0.0).unwrap();
    let frame = beat_frame(&spec, &grid, (1, 2), coeffs, None, None).unwrap();
    FloydRule::Beat {
        frame,
        delta_alpha: 0.0,
    }
}

#[test]
fn free_particle_paths_coincide() {
    let e: f64 = 0.5;
    let v = (2.0 * e).sqrt();
    let config = IntegratorConfig::default();
    let floyd = FloydRule::continuum(&free(), e, None).unwrap();
    let bohm = BohmRule::scattering(&free(), e).unwrap();
    let classical = ConstantVelocity { v };
    let runs: Vec<_> = [&floyd as &dyn VelocityRule, &bohm, &classical]
        .iter()
        .map(|r| integrate_trajectory(*r, 0.0, 0.0, 1.0, &config).unwrap())
        .collect();
    for run in &runs {
        assert!(run.events.is_empty());
        for s in &run.samples {
            assert!((s.q - v * s.t).abs() < 1e-8);
        }
    }
    for q in [-2.0, 0.0, 3.3] {
        assert!((delta_t_delta_e_continuum(&free(), e, 1e-5 * e, q).unwrap() - 1.0).abs() < 1e-6);
        assert!(epoch_rate(&floyd, q, 0.0).unwrap().abs() < 1e-6);
    }
    assert!(epoch_identity_check(&floyd, &runs[0]).unwrap() < 1e-6);
}

#[test]
fn free_particle_initial_kinematics() {
    let e: f64 = 0.5;
    let spec = free();
    let grid = Grid::new(-10.0, 10.0, 2001).unwrap();
    let pair = solution_pair(&spec, e, &grid).unwrap();
    let ms = build_microstate(
        &spec,
        &pair,
        MicrostateCoefficients::new(1.0, 1.0, 0.0).unwrap(),
        0.0,
    )
    .unwrap();
    let rule = FloydRule::Classical(ms);
    for q0 in [-3.0, 0.0, 4.0] {
        let (q, v, a) = microstate_initial_kinematics(&rule, q0, 0.0).unwrap();
        assert_eq!(q, q0);
        assert!((v - 1.0).abs() < 1e-10);
        assert!(a.abs() < 1e-6);
    }
}

#[test]
fn real_bound_state_bohm_paths_stand_still() {
    let spec = PotentialSpec::harmonic(1.0, -8.0, 8.0).unwrap();
    let grid = Grid::new(-8.0, 8.0, 1601).unwrap();
    let eig = find_bound_eigenvalues(&spec, &grid, 2, 1e-10).unwrap();
    for state in &eig {
        let rule = BohmRule::sampled(state.psi.to_complex(), spec.units);
        for q0 in [-1.3, 0.4, 2.0] {
            let run =
                integrate_trajectory(&rule, q0, 0.0, 5.0, &IntegratorConfig::default()).unwrap();
            assert!(run.samples.iter().all(|s| s.q == q0 && s.v == 0.0));
            assert!(run.samples.iter().all(|s| s.dqde() == 1.0));
            assert!(run.samples.iter().all(|s| s.t_q == 0.0));
        }
    }
}

#[test]
fn step_interference_region_changes_sign() {
    let spec = step();
    let values: Vec<f64> = (0..400)
        .map(|i| delta_t_delta_e_continuum(&spec, 1.0, 1e-5, -0.05 * i as f64 - 0.01).unwrap())
        .collect();
    assert!(values.windows(2).any(|w| (w[0] > 0.0) != (w[1] > 0.0)));
    let s = ScatteringState::new(&spec, 1.0).unwrap();
    let (k1, k2) = (2f64.sqrt(), 0.5f64.sqrt());
    assert!((s.r.re - (k1 - k2) / (k1 + k2)).abs() < 1e-10 && s.r.im.abs() < 1e-10);
}

#[test]
fn floyd_path_hits_infinite_velocity_in_step_interference() {
    let floyd = FloydRule::continuum(&step(), 1.0, None).unwrap();
    let run = integrate_trajectory(&floyd, -2.5, 0.0, 5.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(run.terminated_by(), Some(EventKind::SingularVelocity));
    assert!(run.last().v.abs() > 1e3);
}

#[test]
fn bohm_path_by_quantum_time_is_the_floyd_path() {
    let record = bohm_floyd_time_deformation(&step(), 1.0, -3.2, 3.0, 0.05, &fine()).unwrap();
    assert!(!record.dtde_sign_changes.is_empty());
    assert!(record.segments.len() >= 2);
    for seg in &record.segments {
        assert!(seg.max_discrepancy < 1e-4, "{seg:?}");
    }
    let positive = record.segments.iter().find(|s| s.dtde_sign > 0.0).unwrap();
    let floyd = FloydRule::continuum(&step(), 1.0, None).unwrap();
    // Stop short of the segment end, where the velocity diverges and the
    // step quadrature in the check loses accuracy.
    let run = integrate_trajectory(
        &floyd,
        positive.q_start,
        0.0,
        0.99 * (positive.t_q_end - positive.t_q_start),
        &fine(),
    )
    .unwrap();
    assert!(epoch_identity_check(&floyd, &run).unwrap() < 1e-3);

    let free_record =
        bohm_floyd_time_deformation(&free(), 0.5, 0.0, 2.0, 0.05, &IntegratorConfig::default())
            .unwrap();
    assert_eq!(free_record.segments.len(), 1);
    assert!(free_record.max_discrepancy() < 1e-8);
}

#[test]
fn bohm_epoch_residual_tracks_quantum_term() {
    let spec = step();
    let bohm = BohmRule::scattering(&spec, 1.0).unwrap();
    let run = integrate_trajectory(&bohm, -3.2, 0.0, 0.3, &fine()).unwrap();
    let residual = epoch_identity_check(&bohm, &run).unwrap();
    // The check skips the end samples, which have no centred stencil.
    let inner = &run.samples[1..run.samples.len() - 1];
    let worst_dqde = inner.iter().map(|s| s.dqde().abs()).fold(0.0, f64::max);
    assert!(residual > 1e-2);
    assert!((residual - worst_dqde).abs() < 1e-3 * worst_dqde);
}

#[test]
fn step_bohm_paths_do_not_cross() {
    let bohm = BohmRule::scattering(&step(), 1.0).unwrap();
    let config = IntegratorConfig::default();
    let a = integrate_trajectory(&bohm, -3.0, 0.0, 3.0, &config).unwrap();
    let b = integrate_trajectory(&bohm, -2.9, 0.0, 3.0, &config).unwrap();
    for t in (0..=30).map(|i| 0.1 * i as f64) {
        assert!(b.position_at(t).unwrap() > a.position_at(t).unwrap());
    }
}

#[test]
fn well_microstate_trajectories_can_cross() {
    let (fast, slow) = (well_rule((2.0, 1.0, 0.0)), well_rule((1.0, 1.0, 0.0)));
    let config = IntegratorConfig::default();
    let period = 4.0 / (3.0 * std::f64::consts::PI);
    let a = integrate_trajectory(&fast, 0.4, 0.0, period, &config).unwrap();
    let b = integrate_trajectory(&slow, 0.3, 0.0, period, &config).unwrap();
    let gap = |t: f64| {
        a.position_at(t)
            .and_then(|qa| b.position_at(t).map(|qb| qa - qb))
    };
    let end = a.last().t.min(b.last().t);
    let g0 = gap(0.0).unwrap();
    let crossed =
        (1..=200).any(|i| gap(end * i as f64 / 200.0).is_some_and(|g| g.signum() != g0.signum()));
    assert!(crossed);
}

#[test]
fn integration_reverses() {
    let rule = well_rule((2.0, 1.0, 0.3));
    let config = IntegratorConfig::default();
    let fwd = integrate_trajectory(&rule, 0.3, 0.0, 0.05, &config).unwrap();
    let back = integrate_trajectory(
        &Reversed {
            rule: &rule,
            t_end: 0.05,
        },
        fwd.last().q,
        0.0,
        0.05,
        &config,
    )
    .unwrap();
    assert!((back.last().q - 0.3).abs() < 1e-8);
}

#[test]
fn beat_velocity_is_periodic_and_half_periodic() {
    let rule = beat_rule();
    let FloydRule::Beat { frame, .. } = &rule else {
        unreachable!()
    };
    let period = frame.beat_period();
    for (q, t) in [(0.3, 0.02), (0.7, 0.13)] {
        let v = floyd_velocity(&rule, q, t).unwrap();
        assert!(
            (floyd_velocity(&rule, q, t + period).unwrap() - v).abs() < 1e-8 * v.abs().max(1.0)
        );
        // The tangent repeats every half beat, so the velocity field does too.
        assert!(
            (floyd_velocity(&rule, q, t + 0.5 * period).unwrap() - v).abs()
                < 1e-8 * v.abs().max(1.0)
        );
    }
}

#[test]
fn beat_kinematics_singular_at_tan_pole() {
    let rule = beat_rule();
    let FloydRule::Beat { frame, .. } = &rule else {
        unreachable!()
    };
    let q = 0.3;
    let t = (frame.phase(q, 0.0, 0.0) - std::f64::consts::FRAC_PI_2) / frame.delta_e;
    assert!(matches!(
        microstate_initial_kinematics(&rule, q, t),
        Err(Error::SingularKinematics { .. })
    ));
}

#[test]
fn classical_unity_velocity_follows_w_prime() {
    let rule = well_rule((2.0, 1.0, 0.0));
    let FloydRule::Classical(ms) = &rule else {
        unreachable!()
    };
    for q in [0.1, 0.5, 0.9] {
        assert!((floyd_velocity(&rule, q, 0.0).unwrap() - ms.w_prime_at(q)).abs() < 1e-12);
    }
}
