//! Exact expectation values on dense states: spin correlators, domain-wall
//! densities, the string-ordered Green's function and decay-law fits.
//!
//! Sites and bonds are 1-indexed in the public API (bond `j` joins sites `j`
//! and `j+1`), matching how chain observables are usually tabulated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    bit_of, fidelity, qubit_mask, rescaled_fidelity, unrotate_state, Axis, BasisConfig, GateFamily, StateVector,
    C64,
};
use crate::rbm::ComplexRbmWavefunction;

fn require_sites(state: &StateVector, min: usize) -> Result<usize> {
    let l = state.num_qubits();
    if l < min {
        return Err(Error::InvalidArgument(format!("need at least {min} sites, got {l}")));
    }
    Ok(l)
}

/// `⟨ψ| σ^α_a σ^α_b |ψ⟩` for 0-based sites `a ≠ b`.
fn pauli_pair(state: &StateVector, axis: Axis, a: usize, b: usize) -> f64 {
    let l = state.num_qubits();
    let amps = state.amplitudes();
    let flip = qubit_mask(l, a) | qubit_mask(l, b);
    let mut acc = C64::new(0.0, 0.0);
    for (x, amp) in amps.iter().enumerate() {
        let parallel = bit_of(x, l, a) == bit_of(x, l, b);
        match axis {
            Axis::Z => {
                let s = if parallel { 1.0 } else { -1.0 };
                acc += amp.norm_sqr() * s;
            }
            Axis::X => acc += amp.conj() * amps[x ^ flip],
            Axis::Y => {
                // σ^y σ^y flips both bits with sign −1 (parallel) or +1 (antiparallel).
                let s = if parallel { -1.0 } else { 1.0 };
                acc += amp.conj() * amps[x ^ flip] * s;
            }
        }
    }
    acc.re
}

/// `Σ_{i=1}^{L-1} ⟨S^α_i S^α_{i+1}⟩` with spin-½ operators.
pub fn nn_correlator(state: &StateVector, axis: Axis) -> Result<f64> {
    let l = require_sites(state, 2)?;
    Ok((0..l - 1).map(|i| 0.25 * pauli_pair(state, axis, i, i + 1)).sum())
}

fn check_bond(l: usize, bond: usize) -> Result<()> {
    if bond == 0 || bond >= l {
        return Err(Error::InvalidArgument(format!("bond {bond} outside 1..={}", l - 1)));
    }
    Ok(())
}

/// `⟨½(1 − 4 S^x_j S^x_{j+1})⟩` for the 1-indexed bond `j`.
pub fn domain_wall_density(state: &StateVector, bond: usize) -> Result<f64> {
    let l = require_sites(state, 2)?;
    check_bond(l, bond)?;
    Ok(0.5 * (1.0 - pauli_pair(state, Axis::X, bond - 1, bond)))
}

/// Domain-wall density on every bond `1..L-1`.
pub fn density_vector(state: &StateVector) -> Result<Vec<f64>> {
    let l = require_sites(state, 2)?;
    (1..l).map(|j| domain_wall_density(state, j)).collect()
}

/// Bond-averaged domain-wall density.
pub fn total_density(state: &StateVector) -> Result<f64> {
    let n = density_vector(state)?;
    Ok(n.iter().sum::<f64>() / n.len() as f64)
}

/// 1-indexed center bond: `L/2` for even `L`, `(L+1)/2` for odd `L`.
pub fn center_bond(num_sites: usize) -> usize {
    num_sites.div_ceil(2)
}

/// Number of valid Green's-function distances, `⌊L/2⌋`.
pub fn greens_len(num_sites: usize) -> usize {
    num_sites / 2
}

/// `out ← ½(1 − σ^x_j σ^x_{j+1}) v` for the 1-indexed bond `j`.
fn apply_wall_projector(v: &[C64], l: usize, bond: usize) -> Vec<C64> {
    let flip = qubit_mask(l, bond - 1) | qubit_mask(l, bond);
    (0..v.len()).map(|x| 0.5 * (v[x] - v[x ^ flip])).collect()
}

/// Full complex expectation `⟨P_c Π_{j=c+1}^{c+d} σ^z_j P_{c+d}⟩` with `P` the
/// domain-wall projector and `c` the center bond. The string is not Hermitian
/// for `d ≥ 1`; on real states the imaginary part vanishes.
pub fn greens_function_complex(state: &StateVector, d: usize) -> Result<C64> {
    let l = require_sites(state, 3)?;
    if d >= greens_len(l) {
        return Err(Error::InvalidArgument(format!(
            "distance {d} outside 0..{}",
            greens_len(l)
        )));
    }
    let c = center_bond(l);
    let far = apply_wall_projector(state.amplitudes(), l, c + d);
    // σ^z on 1-indexed sites c+1..=c+d, i.e. 0-based c..c+d.
    let string: Vec<C64> = far
        .iter()
        .enumerate()
        .map(|(x, a)| {
            let ones = (c..c + d).filter(|&q| bit_of(x, l, q) == 1).count();
            if ones % 2 == 1 {
                -a
            } else {
                *a
            }
        })
        .collect();
    let near = apply_wall_projector(&string, l, c);
    Ok(state
        .amplitudes()
        .iter()
        .zip(&near)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Real part of [`greens_function_complex`], i.e. the expectation of the
/// operator's Hermitian part.
pub fn greens_function(state: &StateVector, d: usize) -> Result<f64> {
    Ok(greens_function_complex(state, d)?.re)
}

/// `c(d)` for `d = 0..⌊L/2⌋-1`.
pub fn greens_vector(state: &StateVector) -> Result<Vec<f64>> {
    let l = require_sites(state, 3)?;
    (0..greens_len(l)).map(|d| greens_function(state, d)).collect()
}

/// `‖v − target‖ / ‖target‖`.
pub fn relative_diff(v: &[f64], target: &[f64]) -> Result<f64> {
    if v.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            actual: v.len(),
        });
    }
    let norm_t = target.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm_t == 0.0 {
        return Err(Error::InvalidArgument("target has zero norm".into()));
    }
    let diff = v.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(diff / norm_t)
}

/// Dense `ψ(x)` of the wavefunction in its own frame.
pub fn rbm_to_statevector(wf: &ComplexRbmWavefunction, log_z: f64) -> Result<StateVector> {
    wf.to_statevector(log_z)
}

/// The wavefunction mapped back to the computational basis.
pub fn reconstructed_state(
    wf: &ComplexRbmWavefunction,
    log_z: f64,
    frame: &BasisConfig,
    family: GateFamily,
) -> Result<StateVector> {
    unrotate_state(&rbm_to_statevector(wf, log_z)?, frame, family)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayLaw {
    PowerLaw,
    Exponential,
}

/// Fits `ln c` against `ln d` (power law) and against `d` (exponential) over
/// `d ≥ 1` with `c(d) > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub power_law: LinearFit,
    pub exponential: LinearFit,
    pub points: usize,
    pub preferred: DecayLaw,
}

pub fn fit_decay(c: &[f64]) -> Option<DecayFit> {
    let (d, lc): (Vec<f64>, Vec<f64>) = c
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &v)| v > 0.0)
        .map(|(d, &v)| (d as f64, v.ln()))
        .unzip();
    let ln_d: Vec<f64> = d.iter().map(|x| x.ln()).collect();
    let power_law = linear_fit(&ln_d, &lc)?;
    let exponential = linear_fit(&d, &lc)?;
    let preferred = if power_law.r_squared > exponential.r_squared {
        DecayLaw::PowerLaw
    } else {
        DecayLaw::Exponential
    };
    Some(DecayFit {
        power_law,
        exponential,
        points: d.len(),
        preferred,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub rescaled_fidelity: Option<f64>,
    pub kl: Option<f64>,
    pub correlators: BTreeMap<Axis, f64>,
    pub density_vector: Vec<f64>,
    pub n_tot: f64,
    pub greens: Vec<f64>,
    pub k_f: f64,
    pub decay: Option<DecayFit>,
}

impl ObservableReport {
    /// All observables of `state`; the fidelity is filled in when a target is
    /// given. Green's-function entries are empty for chains shorter than 3.
    pub fn compute(state: &StateVector, target: Option<&StateVector>) -> Result<Self> {
        require_sites(state, 2)?;
        let correlators = Axis::ALL
            .iter()
            .map(|&a| Ok((a, nn_correlator(state, a)?)))
            .collect::<Result<_>>()?;
        let density_vector = density_vector(state)?;
        let n_tot = density_vector.iter().sum::<f64>() / density_vector.len() as f64;
        let greens = if state.num_qubits() >= 3 {
            greens_vector(state)?
        } else {
            Vec::new()
        };
        let rescaled = match target {
            Some(t) => Some(rescaled_fidelity(fidelity(state, t)?, state.num_qubits())),
            None => None,
        };
        Ok(ObservableReport {
            rescaled_fidelity: rescaled,
            kl: None,
            correlators,
            decay: fit_decay(&greens),
            density_vector,
            n_tot,
            greens,
            k_f: std::f64::consts::PI * n_tot,
        })
    }

    /// Plot-ready `j,n_j` rows.
    pub fn density_csv(&self) -> String {
        let mut out = String::from("j,n_j\n");
        for (i, n) in self.density_vector.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, n));
        }
        out
    }

    /// Plot-ready `d,c_d` rows.
    pub fn greens_csv(&self) -> String {
        let mut out = String::from("d,c_d\n");
        for (d, c) in self.greens.iter().enumerate() {
            out.push_str(&format!("{d},{c}\n"));
        }
        out
    }
}
