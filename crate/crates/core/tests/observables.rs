mod common;

use alqst_core::models::{named_state, NamedState};
use alqst_core::observables::{
    center_bond, density_vector, domain_wall_density, fit_decay, greens_function, greens_function_complex, greens_len,
    nn_correlator, reconstructed_state, relative_diff, DecayLaw, ObservableReport,
};
use alqst_core::quantum::{rotate_state, Axis, BasisConfig, GateFamily, StateVector, C64};
use common::{random_state, random_wavefunction, site_op, spin, to_dvector, CMat};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `½(1 − 4 S^x_j S^x_{j+1})` for the 1-indexed bond `j`.
fn wall_projector(j: usize, l: usize) -> CMat {
    let sx = spin(Axis::X);
    let xx = site_op(&sx, j - 1, l) * site_op(&sx, j, l);
    (CMat::identity(1 << l, 1 << l) - xx * c(4.0)) * c(0.5)
}

fn dense_greens(state: &StateVector, d: usize) -> C64 {
    let l = state.num_qubits();
    let center = if l % 2 == 0 { l / 2 } else { l / 2 + 1 };
    let mut op = wall_projector(center, l);
    for j in center + 1..=center + d {
        op *= site_op(&spin(Axis::Z), j - 1, l) * c(2.0);
    }
    op *= wall_projector(center + d, l);
    let v = to_dvector(state);
    (v.adjoint() * op * &v)[(0, 0)]
}

fn dense_expectation(op: &CMat, state: &StateVector) -> C64 {
    let v = to_dvector(state);
    (v.adjoint() * op * &v)[(0, 0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn correlators_match_dense_operators(l in 2usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(l, &mut rng);
        for axis in Axis::ALL {
            let mut op = CMat::zeros(1 << l, 1 << l);
            for i in 0..l - 1 {
                op += site_op(&spin(axis), i, l) * site_op(&spin(axis), i + 1, l);
            }
            let want = dense_expectation(&op, &s).re;
            prop_assert!((nn_correlator(&s, axis).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn densities_match_dense_projectors(l in 2usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(l, &mut rng);
        for j in 1..l {
            let want = dense_expectation(&wall_projector(j, l), &s).re;
            prop_assert!((domain_wall_density(&s, j).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn greens_function_matches_dense_string(l in 3usize..=7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(l, &mut rng);
        let center = if l % 2 == 0 { l / 2 } else { l / 2 + 1 };
        prop_assert_eq!(center_bond(l), center);
        prop_assert_eq!(greens_len(l), l - center);
        for d in 0..greens_len(l) {
            let want = dense_greens(&s, d);
            prop_assert!((greens_function_complex(&s, d).unwrap() - want).norm() < 1e-12);
            prop_assert!((greens_function(&s, d).unwrap() - want.re).abs() < 1e-12);
        }
        prop_assert!(greens_function(&s, greens_len(l)).is_err());
    }
}

#[test]
fn zero_distance_green_function_is_center_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..20 {
        let l = 3 + k % 6;
        let s = random_state(l, &mut rng);
        let c0 = greens_function(&s, 0).unwrap();
        let n = domain_wall_density(&s, center_bond(l)).unwrap();
        assert!((c0 - n).abs() <= 1e-10, "L={l}: {c0} vs {n}");
    }
}

#[test]
fn real_states_have_real_green_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let l = 6;
    let amps: Vec<C64> = (0..1 << l).map(|_| c(rand::Rng::gen_range(&mut rng, -1.0..1.0))).collect();
    let mut s = StateVector::new(l, amps).unwrap();
    s.normalize().unwrap();
    for d in 0..greens_len(l) {
        assert!(greens_function_complex(&s, d).unwrap().im.abs() < 1e-14);
    }
}

#[test]
fn product_states_have_trivial_densities() {
    for l in [4, 7] {
        let x = named_state(NamedState::XSpins, l).unwrap();
        assert!(density_vector(&x).unwrap().iter().all(|n| n.abs() < 1e-12));
        let z = named_state(NamedState::ZSpins, l).unwrap();
        assert!(density_vector(&z).unwrap().iter().all(|n| (n - 0.5).abs() < 1e-12));
    }
}

#[test]
fn reconstructed_state_undoes_the_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let wf = random_wavefunction(3, 3, 0.6, &mut rng);
    let frame: BasisConfig = "xzy".parse().unwrap();
    for family in [GateFamily::HadamardK, GateFamily::Rxy] {
        let log_z = wf.log_partition().unwrap();
        let state = reconstructed_state(&wf, log_z, &frame, family).unwrap();
        let back = rotate_state(&state, &frame, family).unwrap();
        for (a, b) in back.amplitudes().iter().zip(wf.amplitudes(log_z)) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn report_of_target_against_itself() {
    let ghz = named_state(NamedState::Ghz, 5).unwrap();
    let r = ObservableReport::compute(&ghz, Some(&ghz)).unwrap();
    assert!((r.rescaled_fidelity.unwrap() - 1.0).abs() < 1e-12);
    assert!((r.correlators[&Axis::Z] - 1.0).abs() < 1e-12);
    assert_eq!(r.density_vector.len(), 4);
    assert!((r.k_f - std::f64::consts::PI * r.n_tot).abs() < 1e-15);
    assert_eq!(relative_diff(&r.density_vector, &r.density_vector).unwrap(), 0.0);
}

#[test]
fn decay_fit_separates_laws_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut noisy = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..10)
            .map(|d| f(d as f64) * (1.0 + 0.01 * rand::Rng::gen_range(&mut rng, -1.0..1.0)))
            .collect()
    };
    let power = noisy(&|d: f64| 0.5 * (d.max(1.0)).powf(-1.5));
    let expo = noisy(&|d: f64| 0.5 * (-0.8 * d).exp());
    assert_eq!(fit_decay(&power).unwrap().preferred, DecayLaw::PowerLaw);
    assert_eq!(fit_decay(&expo).unwrap().preferred, DecayLaw::Exponential);
}
