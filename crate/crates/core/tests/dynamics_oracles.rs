//! Closed-form oracles for the unitary propagator: ballistic spreading,
//! Ehrenfest drift, harmonic-oscillator recurrence, second-order
//! convergence, and long-run conservation laws.

use approx::{assert_abs_diff_eq, assert_relative_eq};
use collapse_core::propagator::{energy_expectation, evolve_unitary};
use collapse_core::{make_gaussian_packet, HamiltonianSpec, LatticeGrid, WaveFunction};

fn grid() -> LatticeGrid {
    LatticeGrid::new(256, 0.1, -12.8).unwrap()
}

fn l2_distance(a: &WaveFunction, b: &WaveFunction) -> f64 {
    let dx = a.grid().dx();
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
        * dx.sqrt()
}

#[test]
fn free_packet_spreads_ballistically() {
    // Var(t) = sigma^2 + (hbar t / 2 m sigma)^2 for a free Gaussian.
    let g = grid();
    let h = HamiltonianSpec::free(1.0, &g).unwrap();
    let psi = make_gaussian_packet(&g, 0.0, 1.0, 0.0).unwrap();
    for (t, expected) in [(1.0, 1.25), (2.0, 2.0)] {
        let out = evolve_unitary(&psi, &h, 1.0, t, 2e-3).unwrap();
        assert_relative_eq!(out.position_variance(), expected, max_relative = 1e-3);
        assert_abs_diff_eq!(out.mean_position(), 0.0, epsilon = 1e-8);
    }
}

#[test]
fn boosted_packet_drifts_at_group_velocity() {
    // Ehrenfest: <x>(t) = hbar k0 t / m.
    let g = grid();
    let h = HamiltonianSpec::free(1.0, &g).unwrap();
    let psi = make_gaussian_packet(&g, -3.0, 1.0, 4.0).unwrap();
    let out = evolve_unitary(&psi, &h, 1.0, 1.5, 1e-3).unwrap();
    assert_abs_diff_eq!(out.mean_position(), -3.0 + 6.0, epsilon = 1e-4);
}

#[test]
fn coherent_state_oscillates_with_period_two_pi() {
    // A displaced ground-state packet (sigma^2 = hbar / 2 m omega) swings
    // as <x>(t) = x0 cos(omega t) and returns exactly after one period.
    let g = grid();
    let h = HamiltonianSpec::harmonic(1.0, 1.0, &g).unwrap();
    let sigma = (0.5f64).sqrt();
    let psi = make_gaussian_packet(&g, 2.0, sigma, 0.0).unwrap();
    let half = evolve_unitary(&psi, &h, 1.0, std::f64::consts::PI, 1e-3).unwrap();
    assert_abs_diff_eq!(half.mean_position(), -2.0, epsilon = 1e-2);
    let full = evolve_unitary(&half, &h, 1.0, std::f64::consts::PI, 1e-3).unwrap();
    assert_abs_diff_eq!(full.mean_position(), 2.0, epsilon = 1e-2);
    // Shape recurrence up to a global phase.
    let fidelity = psi.inner(&full).unwrap().norm();
    assert_abs_diff_eq!(fidelity, 1.0, epsilon = 1e-4);
}

#[test]
fn splitting_error_converges_at_second_order() {
    let g = grid();
    let h = HamiltonianSpec::harmonic(1.0, 1.0, &g).unwrap();
    let psi = make_gaussian_packet(&g, 2.0, 1.0, 0.0).unwrap();
    let t = 0.5;
    let reference = evolve_unitary(&psi, &h, 1.0, t, 2.5e-4).unwrap();
    let coarse = evolve_unitary(&psi, &h, 1.0, t, 4e-3).unwrap();
    let fine = evolve_unitary(&psi, &h, 1.0, t, 2e-3).unwrap();
    let ratio = l2_distance(&coarse, &reference) / l2_distance(&fine, &reference);
    // Order 2: halving dt cuts the error by 4 (loose band for the
    // reference's own error).
    assert!(
        (3.3..=4.7).contains(&ratio),
        "convergence ratio {ratio} outside the second-order band"
    );
}

#[test]
fn long_run_conserves_norm_and_energy() {
    let g = grid();
    let h = HamiltonianSpec::harmonic(1.0, 1.0, &g).unwrap();
    let psi = make_gaussian_packet(&g, 2.0, 1.0, 0.0).unwrap();
    let e0 = energy_expectation(&psi, &h, 1.0).unwrap();
    let mut state = psi;
    // 20000 steps of dt = 5e-4, checked every quarter.
    for _ in 0..4 {
        state = evolve_unitary(&state, &h, 1.0, 2.5, 5e-4).unwrap();
        assert_abs_diff_eq!(state.norm_squared(), 1.0, epsilon = 1e-10);
        let e = energy_expectation(&state, &h, 1.0).unwrap();
        assert_relative_eq!(e, e0, max_relative = 1e-6);
    }
}
