//! Target states: closed-form multi-qubit states and ground states of the XXZ
//! and kinetically constrained spin chains.
//!
//! Spin operators act on qubits with `S^z|0⟩ = +½|0⟩`. Both Hamiltonians are
//! real in the computational basis, so their matrix-free kernels act on real
//! vectors; complex inputs are handled by applying the kernel to the real and
//! imaginary parts separately. Chains have open boundaries.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::{lowest_eigenpair, LanczosOptions};
use crate::quantum::{bit_of, qubit_mask, StateVector, C64, MAX_QUBITS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedState {
    Ghz,
    GhzPhi,
    ZSpins,
    XSpins,
}

impl NamedState {
    pub fn name(self) -> &'static str {
        match self {
            NamedState::Ghz => "ghz",
            NamedState::GhzPhi => "ghz_phi",
            NamedState::ZSpins => "z_spins",
            NamedState::XSpins => "x_spins",
        }
    }
}

impl fmt::Display for NamedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NamedState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ghz" => Ok(NamedState::Ghz),
            "ghz_phi" => Ok(NamedState::GhzPhi),
            "z_spins" => Ok(NamedState::ZSpins),
            "x_spins" => Ok(NamedState::XSpins),
            other => Err(Error::InvalidArgument(format!("unknown named state {other:?}"))),
        }
    }
}

pub fn named_state(kind: NamedState, num_qubits: usize) -> Result<StateVector> {
    let all_ones = (1usize << num_qubits.min(usize::BITS as usize - 1)) - 1;
    match kind {
        NamedState::Ghz | NamedState::GhzPhi => {
            let top = if kind == NamedState::Ghz {
                C64::new(FRAC_1_SQRT_2, 0.0)
            } else {
                C64::new(0.0, FRAC_1_SQRT_2)
            };
            let mut s = StateVector::basis_state(num_qubits, 0)?;
            s.amplitudes_mut()[0] = C64::new(FRAC_1_SQRT_2, 0.0);
            s.amplitudes_mut()[all_ones] = top;
            Ok(s)
        }
        NamedState::ZSpins => StateVector::basis_state(num_qubits, all_ones),
        NamedState::XSpins => {
            let a = (0.5f64).powf(num_qubits as f64 / 2.0);
            StateVector::from_fn(num_qubits, |_| C64::new(a, 0.0))
        }
    }
}

/// `H = Σ_⟨i,i+1⟩ J(S^x S^x + S^y S^y) + J(1+Δ) S^z S^z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XxzSpec {
    pub sites: usize,
    #[serde(rename = "j")]
    pub coupling: f64,
    pub delta: f64,
}

/// `H = t Σ_{j=2}^{L-1} (4 S^x_{j-1} S^x_{j+1} − 1) S^z_j − h Σ_j 2 S^x_j + μ Σ_{j=2}^{L} S^x_{j-1} S^x_j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KcsSpec {
    pub sites: usize,
    pub t: f64,
    pub h: f64,
    pub mu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Hamiltonian {
    Xxz(XxzSpec),
    Kcs(KcsSpec),
}

impl From<XxzSpec> for Hamiltonian {
    fn from(spec: XxzSpec) -> Self {
        Hamiltonian::Xxz(spec)
    }
}

impl From<KcsSpec> for Hamiltonian {
    fn from(spec: KcsSpec) -> Self {
        Hamiltonian::Kcs(spec)
    }
}

impl Hamiltonian {
    pub fn sites(&self) -> usize {
        match self {
            Hamiltonian::Xxz(s) => s.sites,
            Hamiltonian::Kcs(s) => s.sites,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (min, l) = match self {
            Hamiltonian::Xxz(s) => (2, s.sites),
            Hamiltonian::Kcs(s) => (3, s.sites),
        };
        if l < min {
            return Err(Error::InvalidArgument(format!("chain needs at least {min} sites, got {l}")));
        }
        if l > MAX_QUBITS {
            return Err(Error::Capacity {
                what: "sites",
                value: l,
                max: MAX_QUBITS,
            });
        }
        Ok(())
    }

    /// `out ← H · input` on a real vector of length `2^L`.
    pub fn apply_real(&self, input: &[f64], out: &mut [f64]) {
        match self {
            Hamiltonian::Xxz(s) => apply_xxz(s, input, out),
            Hamiltonian::Kcs(s) => apply_kcs(s, input, out),
        }
    }
}

// Row-oriented (gather) kernels: every output entry is a fixed-order sum over
// its incoming terms, so the parallel split cannot change the result.

fn apply_xxz(spec: &XxzSpec, input: &[f64], out: &mut [f64]) {
    let l = spec.sites;
    let zz = spec.coupling * (1.0 + spec.delta) / 4.0;
    let flip = spec.coupling / 2.0;
    out.par_iter_mut().enumerate().for_each(|(x, o)| {
        let mut acc = 0.0;
        for i in 0..l - 1 {
            let aligned = bit_of(x, l, i) == bit_of(x, l, i + 1);
            if aligned {
                acc += zz * input[x];
            } else {
                acc -= zz * input[x];
                acc += flip * input[x ^ qubit_mask(l, i) ^ qubit_mask(l, i + 1)];
            }
        }
        *o = acc;
    });
}

fn apply_kcs(spec: &KcsSpec, input: &[f64], out: &mut [f64]) {
    let l = spec.sites;
    let sz = |x: usize, q: usize| 0.5 - bit_of(x, l, q) as f64;
    out.par_iter_mut().enumerate().for_each(|(x, o)| {
        let mut acc = 0.0;
        // Kinetic term on interior sites q = 1..=L-2 (0-based).
        for q in 1..l - 1 {
            let z = sz(x, q);
            let pair = x ^ qubit_mask(l, q - 1) ^ qubit_mask(l, q + 1);
            acc += spec.t * (z * input[pair] - z * input[x]);
        }
        for q in 0..l {
            acc -= spec.h * input[x ^ qubit_mask(l, q)];
        }
        for q in 1..l {
            acc += 0.25 * spec.mu * input[x ^ qubit_mask(l, q - 1) ^ qubit_mask(l, q)];
        }
        *o = acc;
    });
}

/// `H · v` for a complex state, unnormalized.
pub fn apply_hamiltonian(hamiltonian: &Hamiltonian, v: &StateVector) -> Result<StateVector> {
    hamiltonian.validate()?;
    if v.num_qubits() != hamiltonian.sites() {
        return Err(Error::DimensionMismatch {
            expected: 1 << hamiltonian.sites(),
            actual: v.dim(),
        });
    }
    let re: Vec<f64> = v.amplitudes().iter().map(|a| a.re).collect();
    let im: Vec<f64> = v.amplitudes().iter().map(|a| a.im).collect();
    let mut h_re = vec![0.0; re.len()];
    let mut h_im = vec![0.0; im.len()];
    hamiltonian.apply_real(&re, &mut h_re);
    hamiltonian.apply_real(&im, &mut h_im);
    StateVector::new(
        v.num_qubits(),
        h_re.into_iter().zip(h_im).map(|(r, i)| C64::new(r, i)).collect(),
    )
}

/// `⟨v|H|v⟩`.
pub fn energy(hamiltonian: &Hamiltonian, v: &StateVector) -> Result<f64> {
    Ok(v.inner(&apply_hamiltonian(hamiltonian, v)?)?.re)
}

#[derive(Clone, Debug)]
pub struct GroundStateResult {
    pub energy: f64,
    pub state: StateVector,
    /// `‖H|ψ⟩ − E|ψ⟩‖`.
    pub residual_norm: f64,
    /// `⟨S^z_tot⟩` of the returned vector; identifies the sector picked in a
    /// degenerate ground space.
    pub sz_total: f64,
    pub matvecs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_matvecs: usize,
    pub krylov_dim: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_matvecs: 20_000,
            krylov_dim: 30,
        }
    }
}

/// Lowest eigenpair by thick-restart Lanczos from a random start vector.
pub fn ground_state(
    hamiltonian: &Hamiltonian,
    options: SolverOptions,
    rng: &mut impl Rng,
) -> Result<GroundStateResult> {
    hamiltonian.validate()?;
    let l = hamiltonian.sites();
    let start: Vec<f64> = (0..1usize << l).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pair = lowest_eigenpair(
        |x, y| hamiltonian.apply_real(x, y),
        start,
        LanczosOptions {
            krylov_dim: options.krylov_dim,
            keep: options.krylov_dim * 2 / 5,
            tol: options.tol,
            max_matvecs: options.max_matvecs,
        },
    )?;
    let mut vector = pair.vector;
    let mut energy = pair.value;
    let mut residual_norm = pair.residual;
    if let Hamiltonian::Kcs(spec) = hamiltonian {
        if spec.h == 0.0 {
            (energy, residual_norm) = pin_first_spin(hamiltonian, &mut vector);
        }
    }
    let state = StateVector::new(l, vector.iter().map(|&x| C64::new(x, 0.0)).collect())?;
    let sz_total = vector
        .iter()
        .enumerate()
        .map(|(x, a)| a * a * (0..l).map(|q| 0.5 - bit_of(x, l, q) as f64).sum::<f64>())
        .sum();
    Ok(GroundStateResult {
        energy,
        state,
        residual_norm,
        sz_total,
        matvecs: pair.matvecs,
    })
}

/// Without a field, the KCS first-site `S^x` commutes with H and the ground
/// space is degenerate across its two values. Projects onto `S^x_1 = +1/2`
/// (falling back to `-1/2`) so the returned member is deterministic and
/// edge-polarized. Returns the Rayleigh quotient and residual afterwards.
fn pin_first_spin(hamiltonian: &Hamiltonian, v: &mut [f64]) -> (f64, f64) {
    let l = hamiltonian.sites();
    let flip = qubit_mask(l, 0);
    let project = |sign: f64| -> Vec<f64> { (0..v.len()).map(|x| 0.5 * (v[x] + sign * v[x ^ flip])).collect() };
    let norm = |w: &[f64]| w.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut w = project(1.0);
    if norm(&w) < 1e-6 {
        w = project(-1.0);
    }
    let n = norm(&w);
    for (dst, src) in v.iter_mut().zip(&w) {
        *dst = src / n;
    }
    let mut hv = vec![0.0; v.len()];
    hamiltonian.apply_real(v, &mut hv);
    let e: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
    let r = hv.iter().zip(v.iter()).map(|(h, a)| (h - e * a).powi(2)).sum::<f64>().sqrt();
    (e, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn named_states() {
        let s = FRAC_1_SQRT_2;
        let ghz = named_state(NamedState::Ghz, 5).unwrap();
        assert_abs_diff_eq!(ghz.amplitudes()[0].re, s);
        assert_abs_diff_eq!(ghz.amplitudes()[31].re, s);
        assert_abs_diff_eq!(ghz.norm_sqr(), 1.0, epsilon = 1e-15);
        assert!(ghz.amplitudes()[1..31].iter().all(|a| a.norm() == 0.0));

        let phi = named_state(NamedState::GhzPhi, 5).unwrap();
        assert_abs_diff_eq!(phi.amplitudes()[0].re, s);
        assert_abs_diff_eq!(phi.amplitudes()[31].im, s);
        assert_abs_diff_eq!(phi.amplitudes()[31].re, 0.0);

        let x = named_state(NamedState::XSpins, 2).unwrap();
        assert!(x.amplitudes().iter().all(|a| (a.re - 0.5).abs() < 1e-15 && a.im == 0.0));

        let z = named_state(NamedState::ZSpins, 3).unwrap();
        assert_eq!(z.amplitudes()[7].re, 1.0);
        assert!("bell".parse::<NamedState>().is_err());
    }

    #[test]
    fn singlet_is_eigenstate() {
        let h = Hamiltonian::Xxz(XxzSpec {
            sites: 2,
            coupling: 1.3,
            delta: 0.0,
        });
        let singlet = StateVector::new(
            2,
            vec![
                C64::new(0.0, 0.0),
                C64::new(FRAC_1_SQRT_2, 0.0),
                C64::new(-FRAC_1_SQRT_2, 0.0),
                C64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let hv = apply_hamiltonian(&h, &singlet).unwrap();
        for (a, b) in hv.amplitudes().iter().zip(singlet.amplitudes()) {
            assert_abs_diff_eq!(a.re, -0.75 * 1.3 * b.re, epsilon = 1e-14);
        }
    }

    #[test]
    fn xxz_diagonal_element() {
        let (j, delta) = (1.0, 7.0);
        let h = Hamiltonian::Xxz(XxzSpec {
            sites: 2,
            coupling: j,
            delta,
        });
        let v = StateVector::basis_state(2, 0b01).unwrap();
        assert_abs_diff_eq!(energy(&h, &v).unwrap(), -j * (1.0 + delta) / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn two_site_ground_energy() {
        let h = Hamiltonian::Xxz(XxzSpec {
            sites: 2,
            coupling: 1.0,
            delta: 0.0,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gs = ground_state(&h, SolverOptions::default(), &mut rng).unwrap();
        assert_abs_diff_eq!(gs.energy, -0.75, epsilon = 1e-12);
        assert!(gs.residual_norm <= 1e-8);
    }

    #[test]
    fn dimension_and_size_checks() {
        let h = Hamiltonian::Kcs(KcsSpec {
            sites: 4,
            t: 1.0,
            h: 0.0,
            mu: 0.0,
        });
        let v = StateVector::basis_state(3, 0).unwrap();
        assert!(matches!(apply_hamiltonian(&h, &v), Err(Error::DimensionMismatch { .. })));
        let tiny = Hamiltonian::Kcs(KcsSpec {
            sites: 2,
            t: 1.0,
            h: 0.0,
            mu: 0.0,
        });
        assert!(tiny.validate().is_err());
        let huge = Hamiltonian::Xxz(XxzSpec {
            sites: 21,
            coupling: 1.0,
            delta: 0.0,
        });
        assert!(matches!(huge.validate(), Err(Error::Capacity { .. })));
    }

    #[test]
    fn kcs_kinetic_term_moves_walls_only() {
        // Without field and Ising terms the uniform +x state has no domain
        // walls, so only the diagonal −t S^z part and the pair flip cancel.
        let h = Hamiltonian::Kcs(KcsSpec {
            sites: 4,
            t: 1.0,
            h: 0.0,
            mu: 0.0,
        });
        let x = named_state(NamedState::XSpins, 4).unwrap();
        let hx = apply_hamiltonian(&h, &x).unwrap();
        assert!(hx.norm_sqr() < 1e-24);
    }
}
