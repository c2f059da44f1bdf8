//! Complex RBM wavefunctions `ψ(x) = √(p_λ(x)/Z_λ) · exp(i θ_μ(x)/2)` with
//! `θ_μ = ln p_μ`, their contrastive-divergence training against snapshot
//! pools, and the KL-divergence diagnostic.
//!
//! A wavefunction is always expressed in a *frame*: the basis configuration
//! whose outcomes it models directly (the reference basis). Snapshots taken
//! in any other configuration are related to the frame qubit by qubit through
//! `U_config · U_frame†`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    bit_of, qubit_mask, relative_gate, BasisConfig, GateFamily, Mat2, Snapshot, SnapshotPool, StateVector, C64,
    MAX_QUBITS,
};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Writes the bits of `index` (qubit 0 first) into `out` as 0.0/1.0.
pub fn visible_from_index(index: usize, out: &mut [f64]) {
    let n = out.len();
    for (q, v) in out.iter_mut().enumerate() {
        *v = bit_of(index, n, q) as f64;
    }
}

fn index_from_visible(v: &[f64]) -> usize {
    v.iter().fold(0, |acc, &b| (acc << 1) | (b > 0.5) as usize)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Binary RBM parameters. `weights` is the row-major `hidden × visible` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub num_visible: usize,
    pub num_hidden: usize,
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(num_visible: usize, num_hidden: usize) -> Self {
        RbmParams {
            num_visible,
            num_hidden,
            weights: vec![0.0; num_visible * num_hidden],
            visible_bias: vec![0.0; num_visible],
            hidden_bias: vec![0.0; num_hidden],
        }
    }

    /// Weights i.i.d. uniform in `[−scale, scale]`, biases zero.
    pub fn random(num_visible: usize, num_hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = RbmParams::zeros(num_visible, num_hidden);
        if scale > 0.0 {
            p.weights.iter_mut().for_each(|w| *w = rng.gen_range(-scale..=scale));
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let shapes_ok = self.weights.len() == self.num_visible * self.num_hidden
            && self.visible_bias.len() == self.num_visible
            && self.hidden_bias.len() == self.num_hidden;
        if !shapes_ok {
            return Err(Error::InvalidArgument(format!(
                "inconsistent RBM shapes for {}x{}",
                self.num_hidden, self.num_visible
            )));
        }
        if !self.iter().all(f64::is_finite) {
            return Err(Error::InvalidArgument("non-finite RBM parameter".into()));
        }
        Ok(())
    }

    /// All parameters in a fixed order: weights, visible bias, hidden bias.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .copied()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .chain(self.visible_bias.iter_mut())
            .chain(self.hidden_bias.iter_mut())
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.visible_bias.len() + self.hidden_bias.len()
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, other: &RbmParams, alpha: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.iter_mut().for_each(|a| *a *= alpha);
    }

    #[inline]
    fn hidden_field(&self, hidden: usize, v: &[f64]) -> f64 {
        let row = &self.weights[hidden * self.num_visible..(hidden + 1) * self.num_visible];
        self.hidden_bias[hidden] + row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>()
    }

    /// `ln p̃(v) = Σ_j b_j v_j + Σ_i ln(1 + exp(Σ_j W_ij v_j + c_i))`.
    pub fn log_unnormalized_prob(&self, v: &[f64]) -> f64 {
        let visible: f64 = self.visible_bias.iter().zip(v).map(|(b, x)| b * x).sum();
        visible + (0..self.num_hidden).map(|i| softplus(self.hidden_field(i, v))).sum::<f64>()
    }

    /// Marginal `p̃(v)` without the `1/Z` normalization.
    pub fn unnormalized_prob(&self, v: &[f64]) -> f64 {
        self.log_unnormalized_prob(v).exp()
    }

    pub fn log_unnormalized_prob_index(&self, index: usize) -> f64 {
        let mut v = vec![0.0; self.num_visible];
        visible_from_index(index, &mut v);
        self.log_unnormalized_prob(&v)
    }

    /// `ln Z` by full enumeration of the `2^V` visible configurations.
    pub fn log_partition_exact(&self) -> Result<f64> {
        if self.num_visible > MAX_QUBITS {
            return Err(Error::Capacity {
                what: "visible units",
                value: self.num_visible,
                max: MAX_QUBITS,
            });
        }
        let logs = self.log_probs_unnormalized();
        Ok(log_sum_exp(logs.iter().copied()))
    }

    pub fn partition_exact(&self) -> Result<f64> {
        Ok(self.log_partition_exact()?.exp())
    }

    fn log_probs_unnormalized(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.num_visible];
        (0..1usize << self.num_visible)
            .map(|x| {
                visible_from_index(x, &mut v);
                self.log_unnormalized_prob(&v)
            })
            .collect()
    }

    /// Normalized `p(v)` over all visible configurations.
    pub fn exact_distribution(&self) -> Result<Vec<f64>> {
        let log_z = self.log_partition_exact()?;
        Ok(self
            .log_probs_unnormalized()
            .into_iter()
            .map(|l| (l - log_z).exp())
            .collect())
    }

    /// `grad += scale · ∂ ln p̃(v) / ∂θ`.
    fn accumulate_log_prob_grad(&self, v: &[f64], scale: f64, grad: &mut RbmParams) {
        let nv = self.num_visible;
        for (g, x) in grad.visible_bias.iter_mut().zip(v) {
            *g += scale * x;
        }
        for i in 0..self.num_hidden {
            let s = scale * sigmoid(self.hidden_field(i, v));
            grad.hidden_bias[i] += s;
            let row = &mut grad.weights[i * nv..(i + 1) * nv];
            for (g, x) in row.iter_mut().zip(v) {
                *g += s * x;
            }
        }
    }

    fn sample_hidden(&self, v: &[f64], h: &mut [f64], rng: &mut impl Rng) {
        for (i, hi) in h.iter_mut().enumerate() {
            let p = sigmoid(self.hidden_field(i, v));
            *hi = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        }
    }

    fn sample_visible(&self, h: &[f64], v: &mut [f64], rng: &mut impl Rng) {
        let nv = self.num_visible;
        for (j, vj) in v.iter_mut().enumerate() {
            let mut field = self.visible_bias[j];
            for (i, hi) in h.iter().enumerate() {
                field += self.weights[i * nv + j] * hi;
            }
            *vj = if rng.gen::<f64>() < sigmoid(field) { 1.0 } else { 0.0 };
        }
    }

    /// Runs `k` block-Gibbs steps `h ~ p(h|v)`, `v ~ p(v|h)` from each starting
    /// configuration and returns the final visible configurations.
    pub fn gibbs_chains(&self, starts: &[usize], k: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut v = vec![0.0; self.num_visible];
        let mut h = vec![0.0; self.num_hidden];
        starts
            .iter()
            .map(|&start| {
                visible_from_index(start, &mut v);
                for _ in 0..k {
                    self.sample_hidden(&v, &mut h, rng);
                    self.sample_visible(&h, &mut v, rng);
                }
                index_from_visible(&v)
            })
            .collect()
    }
}

/// Contrastive-divergence negative samples: `k` Gibbs steps started from the
/// data batch.
pub fn cd_k_negative_samples(
    params: &RbmParams,
    batch: &[usize],
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("CD steps must be >= 1".into()));
    }
    Ok(params.gibbs_chains(batch, k, rng))
}

/// Amplitude RBM (λ) and phase RBM (μ) over the same `N` visible units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexRbmWavefunction {
    pub amplitude: RbmParams,
    pub phase: RbmParams,
}

impl ComplexRbmWavefunction {
    pub fn new(amplitude: RbmParams, phase: RbmParams) -> Result<Self> {
        amplitude.validate()?;
        phase.validate()?;
        if amplitude.num_visible != phase.num_visible {
            return Err(Error::DimensionMismatch {
                expected: amplitude.num_visible,
                actual: phase.num_visible,
            });
        }
        Ok(ComplexRbmWavefunction { amplitude, phase })
    }

    pub fn zeros(num_qubits: usize, num_hidden: usize) -> Self {
        ComplexRbmWavefunction {
            amplitude: RbmParams::zeros(num_qubits, num_hidden),
            phase: RbmParams::zeros(num_qubits, num_hidden),
        }
    }

    pub fn random(num_qubits: usize, num_hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let amplitude = RbmParams::random(num_qubits, num_hidden, scale, rng);
        let phase = RbmParams::random(num_qubits, num_hidden, scale, rng);
        ComplexRbmWavefunction { amplitude, phase }
    }

    pub fn num_qubits(&self) -> usize {
        self.amplitude.num_visible
    }

    /// `ln Z_λ` of the amplitude RBM.
    pub fn log_partition(&self) -> Result<f64> {
        self.amplitude.log_partition_exact()
    }

    /// `ln ψ̃(x) = ½ ln p̃_λ(x) + i ½ ln p̃_μ(x)` (no normalization).
    pub fn log_psi_unnormalized(&self, v: &[f64]) -> C64 {
        C64::new(
            0.5 * self.amplitude.log_unnormalized_prob(v),
            0.5 * self.phase.log_unnormalized_prob(v),
        )
    }

    /// `ψ(x)` with the amplitude normalized by `ln Z_λ`.
    pub fn psi(&self, x: usize, log_z: f64) -> C64 {
        let mut v = vec![0.0; self.num_qubits()];
        visible_from_index(x, &mut v);
        (self.log_psi_unnormalized(&v) - 0.5 * log_z).exp()
    }

    /// Dense amplitudes over all `2^N` basis states of the frame.
    pub fn amplitudes(&self, log_z: f64) -> Vec<C64> {
        let mut v = vec![0.0; self.num_qubits()];
        (0..1usize << self.num_qubits())
            .map(|x| {
                visible_from_index(x, &mut v);
                (self.log_psi_unnormalized(&v) - 0.5 * log_z).exp()
            })
            .collect()
    }

    /// The wavefunction as a dense state in its own frame.
    pub fn to_statevector(&self, log_z: f64) -> Result<StateVector> {
        if self.num_qubits() > MAX_QUBITS {
            return Err(Error::Capacity {
                what: "qubits",
                value: self.num_qubits(),
                max: MAX_QUBITS,
            });
        }
        StateVector::new(self.num_qubits(), self.amplitudes(log_z))
    }
}

/// Gates relating `frame` to `config` on the qubits where they differ.
pub fn frame_gates(frame: &BasisConfig, config: &BasisConfig, family: GateFamily) -> Vec<(usize, Mat2)> {
    config
        .differing_qubits(frame)
        .into_iter()
        .filter_map(|q| relative_gate(config.axis(q), frame.axis(q), family).map(|m| (q, m)))
        .collect()
}

/// Expansion of `⟨outcome| ⊗_q G_q` over the rotated qubits: pairs of frame
/// basis index `x'` and matrix element.
fn rotated_terms(gates: &[(usize, Mat2)], outcome: usize, num_qubits: usize) -> Vec<(usize, C64)> {
    let r = gates.len();
    let mut terms = Vec::with_capacity(1 << r);
    for assignment in 0..1usize << r {
        let mut x = outcome;
        let mut coef = C64::new(1.0, 0.0);
        for (k, (q, m)) in gates.iter().enumerate() {
            let a = (assignment >> k) & 1;
            let sigma = bit_of(outcome, num_qubits, *q);
            coef *= m[sigma][a];
            let mask = qubit_mask(num_qubits, *q);
            x = if a == 1 { x | mask } else { x & !mask };
        }
        if coef.norm_sqr() > 0.0 {
            terms.push((x, coef));
        }
    }
    terms
}

/// Amplitude of `outcome` when the frame-`frame` wavefunction is measured in
/// `config`: `Σ_{x'} [⊗_q G_q]_{outcome, x'} ψ(x')`, summing only over the
/// qubits where `config` differs from `frame`.
pub fn rotated_psi(
    wf: &ComplexRbmWavefunction,
    frame: &BasisConfig,
    config: &BasisConfig,
    outcome: usize,
    family: GateFamily,
    log_z: f64,
) -> C64 {
    let gates = frame_gates(frame, config, family);
    rotated_terms(&gates, outcome, wf.num_qubits())
        .into_iter()
        .map(|(x, coef)| coef * wf.psi(x, log_z))
        .sum()
}

/// How the `ln Z_λ` gradient (model expectation) is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NegativePhase {
    /// `k`-step contrastive divergence chains started from the batch.
    ContrastiveDivergence { k: usize },
    /// Exact enumeration over all visible configurations.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub amplitude: RbmParams,
    pub phase: RbmParams,
}

#[derive(Clone, Copy, Debug)]
pub struct GradientOptions {
    pub negative_phase: NegativePhase,
    /// Whether snapshots outside the frame also update the amplitude RBM.
    pub rotated_updates_amplitude: bool,
}

/// Gradient of the mean negative log-likelihood
/// `−(1/B) Σ ln |rotated_psi(b, σ)|²` over `snapshots`.
pub fn gradient(
    wf: &ComplexRbmWavefunction,
    snapshots: &[Snapshot],
    frame: &BasisConfig,
    family: GateFamily,
    options: GradientOptions,
    rng: &mut impl Rng,
) -> Result<Gradient> {
    let n = wf.num_qubits();
    if snapshots.is_empty() {
        return Err(Error::EmptyPool);
    }
    if frame.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: frame.len(),
        });
    }
    if let Some(bad) = snapshots.iter().find(|s| s.num_qubits() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: bad.num_qubits(),
        });
    }

    let mut grad_amp = RbmParams::zeros(n, wf.amplitude.num_hidden);
    let mut grad_phase = RbmParams::zeros(n, wf.phase.num_hidden);
    let mut v = vec![0.0; n];
    let mut amplitude_samples = 0usize;
    let inv_b = 1.0 / snapshots.len() as f64;

    let mut gate_cache: BTreeMap<&BasisConfig, Vec<(usize, Mat2)>> = BTreeMap::new();
    for snap in snapshots {
        let gates = gate_cache
            .entry(&snap.config)
            .or_insert_with(|| frame_gates(frame, &snap.config, family));
        if gates.is_empty() {
            visible_from_index(snap.outcome, &mut v);
            wf.amplitude.accumulate_log_prob_grad(&v, -1.0, &mut grad_amp);
            amplitude_samples += 1;
            continue;
        }
        let terms = rotated_terms(gates, snap.outcome, n);
        let logs: Vec<C64> = terms
            .iter()
            .map(|&(x, _)| {
                visible_from_index(x, &mut v);
                wf.log_psi_unnormalized(&v)
            })
            .collect();
        let shift = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let weighted: Vec<C64> = terms
            .iter()
            .zip(&logs)
            .map(|(&(_, coef), l)| coef * (l - shift).exp())
            .collect();
        let total: C64 = weighted.iter().sum();
        if total.norm_sqr() == 0.0 {
            // Outcome impossible under the model; no finite gradient.
            continue;
        }
        let update_amp = options.rotated_updates_amplitude;
        if update_amp {
            amplitude_samples += 1;
        }
        for (&(x, _), w) in terms.iter().zip(&weighted) {
            let w = w / total;
            visible_from_index(x, &mut v);
            if update_amp {
                wf.amplitude.accumulate_log_prob_grad(&v, -w.re, &mut grad_amp);
            }
            wf.phase.accumulate_log_prob_grad(&v, w.im, &mut grad_phase);
        }
    }

    grad_phase.scale(inv_b);
    if amplitude_samples > 0 {
        let amp_norm = if options.rotated_updates_amplitude {
            inv_b
        } else {
            1.0 / amplitude_samples as f64
        };
        grad_amp.scale(amp_norm);
        // Each sample's loss carries +ln Z_λ; its gradient is the model
        // expectation of ∂ ln p̃_λ.
        let weight = amplitude_samples as f64 * amp_norm;
        match options.negative_phase {
            NegativePhase::Exact => {
                let probs = wf.amplitude.exact_distribution()?;
                for (x, p) in probs.iter().enumerate() {
                    visible_from_index(x, &mut v);
                    wf.amplitude.accumulate_log_prob_grad(&v, weight * p, &mut grad_amp);
                }
            }
            NegativePhase::ContrastiveDivergence { k } => {
                let starts: Vec<usize> = snapshots.iter().map(|s| s.outcome).collect();
                let negatives = cd_k_negative_samples(&wf.amplitude, &starts, k, rng)?;
                let scale = weight / negatives.len() as f64;
                for &x in &negatives {
                    visible_from_index(x, &mut v);
                    wf.amplitude.accumulate_log_prob_grad(&v, scale, &mut grad_amp);
                }
            }
        }
    }

    Ok(Gradient {
        amplitude: grad_amp,
        phase: grad_phase,
    })
}

/// Exact mean negative log-likelihood `−(1/B) Σ ln |rotated_psi|²`.
pub fn negative_log_likelihood(
    wf: &ComplexRbmWavefunction,
    snapshots: &[Snapshot],
    frame: &BasisConfig,
    family: GateFamily,
) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(Error::EmptyPool);
    }
    let log_z = wf.log_partition()?;
    let total: f64 = snapshots
        .iter()
        .map(|s| -rotated_psi(wf, frame, &s.config, s.outcome, family, log_z).norm_sqr().ln())
        .sum();
    Ok(total / snapshots.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub cd_steps: usize,
    pub batch_size: usize,
    /// Weight initialization half-width; `None` means `0.1/√N`.
    pub init_scale: Option<f64>,
    /// Hidden units per RBM; `None` means `N`.
    pub hidden_units: Option<usize>,
    pub seed: u64,
    /// Estimate the partition-function gradient exactly instead of by CD.
    pub exact_negative_phase: bool,
    pub rotated_updates_amplitude: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            learning_rate: 0.07,
            cd_steps: 100,
            batch_size: 100,
            init_scale: None,
            hidden_units: None,
            seed: 0,
            exact_negative_phase: false,
            rotated_updates_amplitude: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.cd_steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("cd_steps and batch_size must be >= 1".into()));
        }
        if matches!(self.init_scale, Some(s) if !(s > 0.0)) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        if self.hidden_units == Some(0) {
            return Err(Error::Config("hidden_units must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolved_init_scale(&self, num_qubits: usize) -> f64 {
        self.init_scale.unwrap_or(0.1 / (num_qubits as f64).sqrt())
    }

    pub fn resolved_hidden_units(&self, num_qubits: usize) -> usize {
        self.hidden_units.unwrap_or(num_qubits)
    }

    pub fn gradient_options(&self) -> GradientOptions {
        GradientOptions {
            negative_phase: if self.exact_negative_phase {
                NegativePhase::Exact
            } else {
                NegativePhase::ContrastiveDivergence { k: self.cd_steps }
            },
            rotated_updates_amplitude: self.rotated_updates_amplitude,
        }
    }
}

/// Minibatch gradient descent on `pool`. `callback(epoch, wf)` runs after
/// every epoch. Deterministic for a fixed `cfg.seed`.
pub fn train<F>(
    wf_init: &ComplexRbmWavefunction,
    pool: &SnapshotPool,
    frame: &BasisConfig,
    family: GateFamily,
    cfg: &TrainConfig,
    mut callback: F,
) -> Result<ComplexRbmWavefunction>
where
    F: FnMut(usize, &ComplexRbmWavefunction),
{
    cfg.validate()?;
    let mut wf = wf_init.clone();
    if cfg.epochs == 0 {
        return Ok(wf);
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if pool.num_qubits() != wf.num_qubits() {
        return Err(Error::DimensionMismatch {
            expected: wf.num_qubits(),
            actual: pool.num_qubits(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let options = cfg.gradient_options();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut batch: Vec<Snapshot> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pool.snapshots()[i].clone()));
            let grad = gradient(&wf, &batch, frame, family, options, &mut rng)?;
            wf.amplitude.add_scaled(&grad.amplitude, -cfg.learning_rate);
            wf.phase.add_scaled(&grad.phase, -cfg.learning_rate);
        }
        callback(epoch, &wf);
    }
    Ok(wf)
}

/// Empirical outcome frequencies `q(x)` per basis configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    pub frequencies: BTreeMap<BasisConfig, BTreeMap<usize, f64>>,
}

impl EmpiricalDistribution {
    pub fn from_pool(pool: &SnapshotPool) -> Self {
        let mut counts: BTreeMap<BasisConfig, BTreeMap<usize, usize>> = BTreeMap::new();
        for s in pool.snapshots() {
            *counts
                .entry(s.config.clone())
                .or_default()
                .entry(s.outcome)
                .or_insert(0) += 1;
        }
        let frequencies = counts
            .into_iter()
            .map(|(config, outcomes)| {
                let total: usize = outcomes.values().sum();
                let freqs = outcomes
                    .into_iter()
                    .map(|(x, c)| (x, c as f64 / total as f64))
                    .collect();
                (config, freqs)
            })
            .collect();
        EmpiricalDistribution { frequencies }
    }
}

/// `Σ_configs Σ_x q(x) ln(q(x)/p(x))` with `p = |rotated_psi|²`. Returns
/// `+∞` when the model assigns zero probability to an observed outcome.
pub fn kl_divergence(
    q: &EmpiricalDistribution,
    wf: &ComplexRbmWavefunction,
    frame: &BasisConfig,
    family: GateFamily,
    log_z: f64,
) -> f64 {
    let mut kl = 0.0;
    for (config, outcomes) in &q.frequencies {
        for (&x, &qx) in outcomes {
            let p = rotated_psi(wf, frame, config, x, family, log_z).norm_sqr();
            if p == 0.0 {
                return f64::INFINITY;
            }
            kl += qx * (qx / p).ln();
        }
    }
    kl
}

/// JSON checkpoint of a trained wavefunction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmCheckpoint {
    pub num_visible: usize,
    pub num_hidden: usize,
    pub amplitude: RbmParams,
    pub phase: RbmParams,
    pub seed: u64,
    pub epoch: usize,
    pub frame: BasisConfig,
    pub gate_family: GateFamily,
}

impl RbmCheckpoint {
    pub fn new(wf: &ComplexRbmWavefunction, seed: u64, epoch: usize, frame: BasisConfig, gate_family: GateFamily) -> Self {
        RbmCheckpoint {
            num_visible: wf.num_qubits(),
            num_hidden: wf.amplitude.num_hidden,
            amplitude: wf.amplitude.clone(),
            phase: wf.phase.clone(),
            seed,
            epoch,
            frame,
            gate_family,
        }
    }

    pub fn wavefunction(&self) -> Result<ComplexRbmWavefunction> {
        if self.amplitude.num_visible != self.num_visible || self.frame.len() != self.num_visible {
            return Err(Error::DimensionMismatch {
                expected: self.num_visible,
                actual: self.amplitude.num_visible,
            });
        }
        ComplexRbmWavefunction::new(self.amplitude.clone(), self.phase.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_params_prob() {
        let p = RbmParams::zeros(4, 3);
        for x in 0..16 {
            assert_abs_diff_eq!(p.log_unnormalized_prob_index(x).exp(), 8.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(RbmParams::zeros(3, 2).partition_exact().unwrap(), 32.0, epsilon = 1e-10);
    }

    #[test]
    fn single_bias_factor() {
        let mut p = RbmParams::zeros(3, 2);
        p.visible_bias[0] = 3f64.ln();
        assert_abs_diff_eq!(p.unnormalized_prob(&[1.0, 0.0, 1.0]), 12.0, epsilon = 1e-12);
        let mut q = RbmParams::zeros(2, 1);
        q.visible_bias[0] = 3f64.ln();
        assert_abs_diff_eq!(q.partition_exact().unwrap(), 16.0, epsilon = 1e-12);
    }

    #[test]
    fn partition_capacity() {
        let p = RbmParams::zeros(21, 1);
        assert!(matches!(p.log_partition_exact(), Err(Error::Capacity { .. })));
    }

    #[test]
    fn cd_rejects_zero_steps() {
        let p = RbmParams::zeros(2, 2);
        assert!(cd_k_negative_samples(&p, &[0, 1], 0, &mut rng(0)).is_err());
    }

    #[test]
    fn zero_phase_is_global() {
        let mut r = rng(4);
        let mut wf = ComplexRbmWavefunction::random(3, 3, 0.5, &mut r);
        wf.phase = RbmParams::zeros(3, 3);
        let log_z = wf.log_partition().unwrap();
        let amps = wf.amplitudes(log_z);
        let phase0 = amps[0].arg();
        assert!(amps.iter().all(|a| (a.arg() - phase0).abs() < 1e-12));
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_only_pool_has_no_phase_gradient() {
        let mut r = rng(5);
        let wf = ComplexRbmWavefunction::random(3, 3, 0.3, &mut r);
        let frame: BasisConfig = "zzz".parse().unwrap();
        let snaps: Vec<Snapshot> = (0..8).map(|x| Snapshot::new(frame.clone(), x).unwrap()).collect();
        for negative_phase in [NegativePhase::Exact, NegativePhase::ContrastiveDivergence { k: 3 }] {
            let opts = GradientOptions {
                negative_phase,
                rotated_updates_amplitude: true,
            };
            let g = gradient(&wf, &snaps, &frame, GateFamily::HadamardK, opts, &mut r).unwrap();
            assert!(g.phase.iter().all(|x| x == 0.0));
        }
    }

    #[test]
    fn gradient_validates_inputs() {
        let wf = ComplexRbmWavefunction::zeros(3, 3);
        let frame: BasisConfig = "zzz".parse().unwrap();
        let opts = TrainConfig::default().gradient_options();
        assert!(matches!(
            gradient(&wf, &[], &frame, GateFamily::Rxy, opts, &mut rng(0)),
            Err(Error::EmptyPool)
        ));
        let wrong = [Snapshot::new("zz".parse().unwrap(), 0).unwrap()];
        assert!(matches!(
            gradient(&wf, &wrong, &frame, GateFamily::Rxy, opts, &mut rng(0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_epochs_is_noop() {
        let mut r = rng(6);
        let wf = ComplexRbmWavefunction::random(2, 2, 0.1, &mut r);
        let pool = SnapshotPool::new(2);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&wf, &pool, &"zz".parse().unwrap(), GateFamily::HadamardK, &cfg, |_, _| {}).unwrap();
        assert_eq!(out, wf);
    }

    #[test]
    fn kl_closed_form() {
        // Uniform single-qubit model, one observed outcome: KL = ln 2.
        let wf = ComplexRbmWavefunction::zeros(1, 1);
        let frame: BasisConfig = "z".parse().unwrap();
        let pool = SnapshotPool::from_snapshots(1, vec![Snapshot::new(frame.clone(), 0).unwrap()]).unwrap();
        let q = EmpiricalDistribution::from_pool(&pool);
        let log_z = wf.log_partition().unwrap();
        assert_abs_diff_eq!(
            kl_divergence(&q, &wf, &frame, GateFamily::HadamardK, log_z),
            2f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn checkpoint_json_roundtrip() {
        let mut r = rng(8);
        let wf = ComplexRbmWavefunction::random(3, 2, 0.1, &mut r);
        let ck = RbmCheckpoint::new(&wf, 42, 17, "xxx".parse().unwrap(), GateFamily::Rxy);
        let json = ck.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["amplitude"]["weights"].as_array().unwrap().len(), 6);
        assert_eq!(value["frame"], "xxx");
        let back = RbmCheckpoint::from_json(&json).unwrap();
        assert_eq!(back.wavefunction().unwrap(), wf);
        assert_eq!(back.epoch, 17);
    }
}
