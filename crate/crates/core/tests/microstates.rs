use qtraj_core::grid::Grid;
use qtraj_core::microstate::{
    build_microstate, qshje_residual, Microstate, MicrostateCoefficients,
};
use qtraj_core::schrodinger::{find_bound_eigenvalues, solution_pair, SolutionPair};
use qtraj_core::PotentialSpec;

const COEFFS: [(f64, f64, f64); 3] = [(1.0, 1.0, 0.0), (2.0, 1.0, 0.0), (1.0, 1.0, 0.5)];

fn coeffs(c: (f64, f64, f64)) -> MicrostateCoefficients {
    MicrostateCoefficients::new(c.0, c.1, c.2).unwrap()
}

fn well_microstates(level: usize) -> Vec<Microstate> {
    let spec = PotentialSpec::infinite_well(1.0).unwrap();
    let grid = Grid::new(0.0, 1.0, 2001).unwrap();
    let eig = find_bound_eigenvalues(&spec, &grid, level, 1e-10).unwrap();
    let pair = SolutionPair::from_eigen(&eig[level - 1]).unwrap();
    COEFFS
        .iter()
        .map(|&c| build_microstate(&spec, &pair, coeffs(c), 0.5).unwrap())
        .collect()
}

fn harmonic_ground() -> Microstate {
    let spec = PotentialSpec::harmonic(1.0, -8.0, 8.0).unwrap();
    let grid = Grid::new(-8.0, 8.0, 3201).unwrap();
    let eig = find_bound_eigenvalues(&spec, &grid, 1, 1e-10).unwrap();
    let pair = SolutionPair::from_eigen(&eig[0])
        .unwrap()
        .window(-4.0, 4.0)
        .unwrap();
    build_microstate(&spec, &pair, coeffs((1.0, 1.0, 0.0)), 0.0).unwrap()
}

fn free_particle() -> Microstate {
    let spec = PotentialSpec::constant(0.0, -10.0, 10.0).unwrap();
    let grid = Grid::new(-10.0, 10.0, 2001).unwrap();
    let pair = solution_pair(&spec, 0.5, &grid).unwrap();
    build_microstate(&spec, &pair, coeffs((1.0, 1.0, 0.0)), 0.0).unwrap()
}

fn all() -> Vec<Microstate> {
    let mut v = vec![free_particle(), harmonic_ground()];
    v.extend(well_microstates(1));
    v.extend(well_microstates(2));
    v
}

#[test]
fn every_microstate_satisfies_the_qshje() {
    for ms in all() {
        let r = qshje_residual(&ms);
        assert!(
            r < 1e-6,
            "E = {} {:?}: residual {r:e}",
            ms.energy,
            ms.coefficients
        );
    }
}

#[test]
fn free_particle_residual_is_tiny() {
    assert!(qshje_residual(&free_particle()) < 1e-10);
}

#[test]
fn ground_state_microstates_differ_but_all_balance() {
    let states = well_microstates(1);
    for (k, a) in states.iter().enumerate() {
        for b in &states[k + 1..] {
            let gap = a
                .w_prime
                .iter()
                .zip(&b.w_prime)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(gap > 1e-3);
        }
        let (t, q, v) = (
            a.kinetic_energy(),
            a.quantum_potential(),
            a.potential_samples(),
        );
        for i in a.interior() {
            assert!((t[i] + q[i] + v[i] - a.energy).abs() < 1e-6);
        }
    }
    // The balance between kinetic and quantum terms shifts between microstates.
    let (t0, t1) = (states[0].kinetic_energy(), states[1].kinetic_energy());
    assert!(t0.iter().zip(&t1).any(|(a, b)| (a - b).abs() > 1e-3));
}

#[test]
fn bohm_and_schwarzian_potentials_agree() {
    for ms in all() {
        let qs = ms.quantum_potential();
        let qb = ms.bohm_potential();
        assert!(qb.excluded.is_empty());
        let worst = ms
            .interior()
            .map(|i| (qs[i] - qb.values[i]).abs())
            .fold(0.0, f64::max);
        assert!(
            worst < 1e-5,
            "E = {} {:?}: {worst:e}",
            ms.energy,
            ms.coefficients
        );
    }
}

#[test]
fn amplitude_times_derivative_is_constant() {
    for ms in all() {
        let c: Vec<f64> =
            ms.r.iter()
                .zip(&ms.w_prime)
                .map(|(r, w)| r * r * w)
                .collect();
        let c0 = c[0];
        assert!(c.iter().all(|x| ((x - c0) / c0).abs() < 1e-6));
    }
}

#[test]
fn harmonic_quantum_potential_matches_energy_balance() {
    let ms = harmonic_ground();
    let (t, q, v) = (
        ms.kinetic_energy(),
        ms.quantum_potential(),
        ms.potential_samples(),
    );
    for i in ms.interior() {
        assert!((q[i] - (ms.energy - v[i] - t[i])).abs() < 1e-6);
    }
}

#[test]
fn csv_export_has_schema_header() {
    let ms = well_microstates(1).remove(0);
    let mut buf = Vec::new();
    ms.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let (cols, rows) = qtraj_core::export::read_table(&text).unwrap();
    assert_eq!(
        cols,
        [
            "q",
            "w_prime",
            "w",
            "r",
            "q_schwarzian",
            "q_bohm",
            "residual"
        ]
    );
    assert_eq!(rows.len(), 2001);
}
