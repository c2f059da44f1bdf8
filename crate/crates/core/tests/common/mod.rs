//! Dense brute-force oracles shared by the integration tests. Nothing here
//! reuses the library's kernels: operators are built from Kronecker products
//! and RBM amplitudes from the closed-form marginal.

#![allow(dead_code)]

use alqst_core::models::{KcsSpec, XxzSpec};
use alqst_core::quantum::{Axis, BasisConfig, GateFamily, StateVector, C64};
use alqst_core::quantum::{born_sample, Snapshot};
use alqst_core::rbm::{negative_log_likelihood, ComplexRbmWavefunction, RbmParams};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

pub type CMat = DMatrix<C64>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn spin(axis: Axis) -> CMat {
    let h = 0.5;
    match axis {
        Axis::X => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(h, 0.0), c(h, 0.0), c(0.0, 0.0)]),
        Axis::Y => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -h), c(0.0, h), c(0.0, 0.0)]),
        Axis::Z => CMat::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-h, 0.0)]),
    }
}

/// `op` on `site` of an `l`-site chain; site 0 is the leftmost tensor factor.
pub fn site_op(op: &CMat, site: usize, l: usize) -> CMat {
    let mut out = CMat::identity(1, 1);
    for s in 0..l {
        let factor = if s == site { op.clone() } else { CMat::identity(2, 2) };
        out = out.kronecker(&factor);
    }
    out
}

/// Kronecker product of single-site operators on distinct sites, identity
/// elsewhere. Avoids dense matrix products so L=10 stays cheap.
pub fn product_op(ops: &[(CMat, usize)], l: usize) -> CMat {
    let mut out = CMat::identity(1, 1);
    for s in 0..l {
        let factor = ops
            .iter()
            .find(|(_, site)| *site == s)
            .map(|(op, _)| op.clone())
            .unwrap_or_else(|| CMat::identity(2, 2));
        out = out.kronecker(&factor);
    }
    out
}

pub fn dense_xxz(spec: &XxzSpec) -> CMat {
    let l = spec.sites;
    let dim = 1 << l;
    let mut h = CMat::zeros(dim, dim);
    for i in 0..l - 1 {
        for (axis, scale) in [(Axis::X, 1.0), (Axis::Y, 1.0), (Axis::Z, 1.0 + spec.delta)] {
            let term = product_op(&[(spin(axis), i), (spin(axis), i + 1)], l);
            h += term * c(spec.coupling * scale, 0.0);
        }
    }
    h
}

/// Direct transcription of the KCS Hamiltonian with 1-based site ranges.
pub fn dense_kcs(spec: &KcsSpec) -> CMat {
    let l = spec.sites;
    let dim = 1 << l;
    let x = || spin(Axis::X);
    let z = || spin(Axis::Z);
    let mut h = CMat::zeros(dim, dim);
    for j in 2..=l - 1 {
        let xzx = product_op(&[(x(), j - 2), (z(), j - 1), (x(), j)], l);
        let zj = product_op(&[(z(), j - 1)], l);
        h += (xzx * c(4.0, 0.0) - zj) * c(spec.t, 0.0);
    }
    for j in 1..=l {
        h -= product_op(&[(x(), j - 1)], l) * c(2.0 * spec.h, 0.0);
    }
    for j in 2..=l {
        h += product_op(&[(x(), j - 2), (x(), j - 1)], l) * c(spec.mu, 0.0);
    }
    h
}

pub fn real_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn lowest_energy(m: &CMat) -> f64 {
    let eig = SymmetricEigen::new(real_part(m));
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn to_dvector(s: &StateVector) -> DVector<C64> {
    DVector::from_column_slice(s.amplitudes())
}

pub fn expectation(op: &CMat, s: &StateVector) -> f64 {
    let v = to_dvector(s);
    (v.adjoint() * op * &v)[(0, 0)].re
}

pub fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
    let amps: Vec<C64> = (0..1usize << n)
        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::new(n, amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

/// Gate matrices written out independently of the library.
pub fn gate(axis: Axis, family: GateFamily) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let m = |e: [C64; 4]| CMat::from_row_slice(2, 2, &e.map(|z| z * s));
    match (axis, family) {
        (Axis::Z, _) => CMat::identity(2, 2),
        (Axis::X, GateFamily::HadamardK) => m([c(1., 0.), c(1., 0.), c(1., 0.), c(-1., 0.)]),
        (Axis::Y, GateFamily::HadamardK) => m([c(1., 0.), c(1., 0.), c(0., 1.), c(0., -1.)]),
        (Axis::X, GateFamily::Rxy) => m([c(0., 1.), c(0., -1.), c(1., 0.), c(1., 0.)]),
        (Axis::Y, GateFamily::Rxy) => m([c(1., 0.), c(0., -1.), c(0., -1.), c(1., 0.)]),
    }
}

/// `⊗_q U_q` over the whole register.
pub fn config_unitary(config: &BasisConfig, family: GateFamily) -> CMat {
    let mut out = CMat::identity(1, 1);
    for &a in config.axes() {
        out = out.kronecker(&gate(a, family));
    }
    out
}

/// `p̃(v) = exp(b·v) Π_i (1 + exp(c_i + W_i·v))`, with `v` the bits of `x`
/// (qubit 0 = most significant).
pub fn brute_unnormalized(p: &RbmParams, x: usize) -> f64 {
    let n = p.num_visible;
    let v: Vec<f64> = (0..n).map(|q| ((x >> (n - 1 - q)) & 1) as f64).collect();
    let mut out = v.iter().zip(&p.visible_bias).map(|(a, b)| a * b).sum::<f64>().exp();
    for i in 0..p.num_hidden {
        let field: f64 = p.hidden_bias[i] + (0..n).map(|j| p.weights[i * n + j] * v[j]).sum::<f64>();
        out *= 1.0 + field.exp();
    }
    out
}

/// Normalized frame amplitudes `sqrt(p̃_λ/Z) · exp(i ln p̃_μ / 2)`.
pub fn brute_amplitudes(wf: &ComplexRbmWavefunction) -> Vec<C64> {
    let dim = 1usize << wf.num_qubits();
    let pl: Vec<f64> = (0..dim).map(|x| brute_unnormalized(&wf.amplitude, x)).collect();
    let z: f64 = pl.iter().sum();
    (0..dim)
        .map(|x| {
            let theta = brute_unnormalized(&wf.phase, x).ln();
            C64::from_polar((pl[x] / z).sqrt(), theta / 2.0)
        })
        .collect()
}

/// Amplitudes seen when measuring the frame-`frame` wavefunction in `config`:
/// `U_config · U_frame† · ψ`.
pub fn brute_rotated(wf: &ComplexRbmWavefunction, frame: &BasisConfig, config: &BasisConfig, family: GateFamily) -> Vec<C64> {
    let psi = DVector::from_vec(brute_amplitudes(wf));
    let u = config_unitary(config, family) * config_unitary(frame, family).adjoint();
    (u * psi).iter().cloned().collect()
}

pub fn random_wavefunction(n: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> ComplexRbmWavefunction {
    ComplexRbmWavefunction::random(n, hidden, scale, rng)
}

pub fn random_config(n: usize, rng: &mut impl Rng) -> BasisConfig {
    BasisConfig::new((0..n).map(|_| Axis::ALL[rng.gen_range(0..3)]).collect()).unwrap()
}

/// Checks the twice-in-a-row rule on a query log: after two consecutive
/// reference queries the next entries (as far as the log goes) are the two
/// other uniform bases, marked forced.
pub fn check_forced_rule(state: &alqst_core::committee::LearnerState) -> Result<(), String> {
    use alqst_core::committee::QueryRule;
    let reference = &state.reference;
    let n = reference.len();
    let others: Vec<BasisConfig> = BasisConfig::uniform_set(n).into_iter().filter(|b| b != reference).collect();
    let log = &state.query_log;
    let mut streak = 0;
    let mut i = 0;
    while i < log.len() {
        let q = &log[i];
        if q.rule == QueryRule::Forced {
            return Err(format!("query {} forced without two reference queries before it", q.query));
        }
        if q.config == *reference {
            streak += 1;
        } else {
            streak = 0;
        }
        i += 1;
        if streak == 2 {
            for want in &others {
                match log.get(i) {
                    None => return Ok(()),
                    Some(f) if f.rule == QueryRule::Forced && f.config == *want => i += 1,
                    Some(f) => return Err(format!("query {} should be forced {want}, got {} {:?}", f.query, f.config, f.rule)),
                }
            }
            streak = 0;
        }
    }
    Ok(())
}

/// Added counts follow the oversampling rule.
pub fn check_added_counts(state: &alqst_core::committee::LearnerState, n_per_query: usize, multiplier: usize) -> Result<(), String> {
    for q in &state.query_log {
        let want = if q.config == state.reference { n_per_query * multiplier } else { n_per_query };
        if q.added != want {
            return Err(format!("query {} added {} (expected {want})", q.query, q.added));
        }
    }
    Ok(())
}

pub fn mixed_pool(n: usize, family: GateFamily, rng: &mut impl Rng) -> Vec<Snapshot> {
    let target = random_state(n, rng);
    let mut out = Vec::new();
    for config in ["z", "x", "y", "xz", "zy"].iter().map(|c| c.repeat(n).chars().take(n).collect::<String>()) {
        let config: BasisConfig = config.parse().unwrap();
        out.extend(born_sample(&target, &config, 7, family, rng).unwrap());
    }
    out
}

pub fn perturbed(wf: &ComplexRbmWavefunction, phase: bool, k: usize, delta: f64) -> ComplexRbmWavefunction {
    let mut out = wf.clone();
    let params = if phase { &mut out.phase } else { &mut out.amplitude };
    *params.iter_mut().nth(k).unwrap() += delta;
    out
}

/// Central difference of the mean NLL with respect to every parameter of one
/// RBM.
pub fn finite_difference(wf: &ComplexRbmWavefunction, snaps: &[Snapshot], frame: &BasisConfig, family: GateFamily, phase: bool) -> Vec<f64> {
    let h = 1e-5;
    let count = if phase { wf.phase.num_params() } else { wf.amplitude.num_params() };
    (0..count)
        .map(|k| {
            let up = negative_log_likelihood(&perturbed(wf, phase, k, h), snaps, frame, family).unwrap();
            let down = negative_log_likelihood(&perturbed(wf, phase, k, -h), snaps, frame, family).unwrap();
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_relative_error(analytic: &RbmParams, numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3))
        .fold(0.0, f64::max)
}
