mod common;

use alqst_core::quantum::{born_sample, Axis, BasisConfig, GateFamily, Snapshot, SnapshotPool};
use alqst_core::rbm::{
    gradient, kl_divergence, rotated_psi, train, ComplexRbmWavefunction,
    EmpiricalDistribution, GradientOptions, NegativePhase, RbmCheckpoint, RbmParams, TrainConfig,
};
use common::{
    brute_amplitudes, brute_rotated, brute_unnormalized, finite_difference, max_relative_error, mixed_pool, random_config,
    random_state, random_wavefunction,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FAMILIES: [GateFamily; 2] = [GateFamily::HadamardK, GateFamily::Rxy];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_function_matches_enumeration(n in 1usize..=6, h in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = RbmParams::random(n, h, 1.0, &mut rng);
        let z: f64 = (0..1usize << n).map(|x| brute_unnormalized(&p, x)).sum();
        prop_assert!((p.log_partition_exact().unwrap() - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn amplitudes_match_closed_form(n in 1usize..=5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wf = random_wavefunction(n, n, 0.8, &mut rng);
        let lib = wf.amplitudes(wf.log_partition().unwrap());
        for (a, b) in lib.iter().zip(brute_amplitudes(&wf)) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rotated_amplitudes_match_dense_rotation(n in 1usize..=4, seed in any::<u64>(), fam in 0usize..2) {
        let family = FAMILIES[fam];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wf = random_wavefunction(n, n, 0.8, &mut rng);
        let frame = random_config(n, &mut rng);
        let config = random_config(n, &mut rng);
        let log_z = wf.log_partition().unwrap();
        let oracle = brute_rotated(&wf, &frame, &config, family);
        for (x, want) in oracle.iter().enumerate() {
            let got = rotated_psi(&wf, &frame, &config, x, family, log_z);
            prop_assert!((got - want).norm() < 1e-10);
        }
    }

    #[test]
    fn rotated_distribution_is_normalized(n in 1usize..=4, seed in any::<u64>(), fam in 0usize..2) {
        let family = FAMILIES[fam];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wf = random_wavefunction(n, n, 1.0, &mut rng);
        let frame = random_config(n, &mut rng);
        let log_z = wf.log_partition().unwrap();
        for c in 0..3usize.pow(n as u32) {
            let config = BasisConfig::from_index(n, c);
            let total: f64 = (0..1usize << n)
                .map(|x| rotated_psi(&wf, &frame, &config, x, family, log_z).norm_sqr())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-8, "{config}: {total}");
        }
    }

    #[test]
    fn kl_is_non_negative(n in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wf = random_wavefunction(n, n, 0.5, &mut rng);
        let frame = BasisConfig::uniform(n, Axis::Z);
        let target = random_state(n, &mut rng);
        let mut pool = SnapshotPool::new(n);
        for _ in 0..3 {
            let config = random_config(n, &mut rng);
            pool.extend(born_sample(&target, &config, 30, GateFamily::Rxy, &mut rng).unwrap()).unwrap();
        }
        let q = EmpiricalDistribution::from_pool(&pool);
        prop_assert!(kl_divergence(&q, &wf, &frame, GateFamily::Rxy, wf.log_partition().unwrap()) >= -1e-12);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let exact = GradientOptions {
        negative_phase: NegativePhase::Exact,
        rotated_updates_amplitude: true,
    };
    for (n, seed) in [(2, 1u64), (3, 2), (3, 3), (4, 4)] {
        for family in FAMILIES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let wf = random_wavefunction(n, n, 0.7, &mut rng);
            let frame = random_config(n, &mut rng);
            let snaps = mixed_pool(n, family, &mut rng);
            let g = gradient(&wf, &snaps, &frame, family, exact, &mut rng).unwrap();
            let amp = max_relative_error(&g.amplitude, &finite_difference(&wf, &snaps, &frame, family, false));
            let phase = max_relative_error(&g.phase, &finite_difference(&wf, &snaps, &frame, family, true));
            assert!(amp < 1e-4 && phase < 1e-4, "n={n} {family:?}: amplitude {amp:e}, phase {phase:e}");
        }
    }
}

#[test]
fn reference_only_amplitude_gradient_matches_finite_differences() {
    let opts = GradientOptions {
        negative_phase: NegativePhase::Exact,
        rotated_updates_amplitude: false,
    };
    let n = 3;
    let family = GateFamily::Rxy;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let wf = random_wavefunction(n, n, 0.7, &mut rng);
    let frame = BasisConfig::uniform(n, Axis::Z);
    let snaps = mixed_pool(n, family, &mut rng);
    let g = gradient(&wf, &snaps, &frame, family, opts, &mut rng).unwrap();
    let in_frame: Vec<Snapshot> = snaps.iter().filter(|s| s.config == frame).cloned().collect();
    let amp = max_relative_error(&g.amplitude, &finite_difference(&wf, &in_frame, &frame, family, false));
    let phase = max_relative_error(&g.phase, &finite_difference(&wf, &snaps, &frame, family, true));
    assert!(amp < 1e-4 && phase < 1e-4, "amplitude {amp:e}, phase {phase:e}");
}

#[test]
fn long_gibbs_chains_reach_model_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = RbmParams::random(3, 3, 1.0, &mut rng);
    let exact = p.exact_distribution().unwrap();
    let chains = 20_000;
    let ends = p.gibbs_chains(&vec![0; chains], 50, &mut rng);
    let mut freq = vec![0.0; 8];
    for x in ends {
        freq[x] += 1.0 / chains as f64;
    }
    let tv: f64 = exact.iter().zip(&freq).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn cd_and_exact_training_agree_on_a_product_state() {
    let n = 3;
    let target = alqst_core::models::named_state(alqst_core::models::NamedState::ZSpins, n).unwrap();
    let frame = BasisConfig::uniform(n, Axis::Z);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pool = SnapshotPool::from_snapshots(n, born_sample(&target, &frame, 200, GateFamily::HadamardK, &mut rng).unwrap()).unwrap();
    let init = ComplexRbmWavefunction::random(n, n, 0.05, &mut rng);
    for exact in [true, false] {
        let cfg = TrainConfig {
            epochs: 300,
            cd_steps: 20,
            exact_negative_phase: exact,
            ..TrainConfig::default()
        };
        let wf = train(&init, &pool, &frame, GateFamily::HadamardK, &cfg, |_, _| {}).unwrap();
        let probs = wf.amplitude.exact_distribution().unwrap();
        assert!(probs[(1 << n) - 1] > 0.9, "exact={exact}: {}", probs[(1 << n) - 1]);
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let target = random_state(n, &mut rng);
    let frame = BasisConfig::uniform(n, Axis::Z);
    let mut pool = SnapshotPool::new(n);
    for c in ["zzz", "xzz", "zyx"] {
        let config: BasisConfig = c.parse().unwrap();
        pool.extend(born_sample(&target, &config, 40, GateFamily::Rxy, &mut rng).unwrap()).unwrap();
    }
    let init = ComplexRbmWavefunction::random(n, n, 0.1, &mut rng);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 16,
        cd_steps: 5,
        ..TrainConfig::default()
    };
    let a = train(&init, &pool, &frame, GateFamily::Rxy, &cfg, |_, _| {}).unwrap();
    let b = train(&init, &pool, &frame, GateFamily::Rxy, &cfg, |_, _| {}).unwrap();
    assert_eq!(a, b);
    let c = train(&init, &pool, &frame, GateFamily::Rxy, &TrainConfig { seed: 1, ..cfg }, |_, _| {}).unwrap();
    assert_ne!(a, c);
}

#[test]
fn checkpoint_file_restores_amplitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let wf = random_wavefunction(4, 3, 0.5, &mut rng);
    let frame: BasisConfig = "xxxx".parse().unwrap();
    let ck = RbmCheckpoint::new(&wf, 7, 123, frame.clone(), GateFamily::HadamardK);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("member.json");
    std::fs::write(&path, ck.to_json().unwrap()).unwrap();
    let back = RbmCheckpoint::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back.frame, frame);
    assert_eq!((back.seed, back.epoch), (7, 123));
    let restored = back.wavefunction().unwrap();
    let log_z = wf.log_partition().unwrap();
    assert_eq!(restored.amplitudes(log_z), wf.amplitudes(log_z));

    let mut broken = back.clone();
    broken.num_visible = 5;
    assert!(broken.wavefunction().is_err());
}
