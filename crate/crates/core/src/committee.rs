//! Query-by-committee state tomography: bootstrap measurements, reference
//! basis selection, committee training from fixed initial parameters,
//! disagreement scoring, stopping rules and the random-configuration baseline.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::hash::{Hash, Hasher};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{Error, Result};
use crate::observables::{density_vector, greens_vector, nn_correlator, reconstructed_state, relative_diff};
use crate::quantum::{
    change_frame, fidelity, relative_gate, rescaled_fidelity, Axis, BasisConfig, GateFamily, SnapshotPool, StateVector, C64,
};
use crate::rbm::{kl_divergence, train, ComplexRbmWavefunction, EmpiricalDistribution, TrainConfig};
use crate::source::MeasurementSource;

/// Independent sub-seed for a named purpose.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng.next_u64()
}

const SEED_COMMITTEE: u64 = 1;
const SEED_CANDIDATES: u64 = 2;
const SEED_BASELINE: u64 = 3;
/// Sub-seed tag reserved for the simulated measurement source.
pub const SEED_SOURCE: u64 = 4;

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// One wavefunction per member, each restarting from the same stored
/// parameters every time the committee is trained.
#[derive(Clone, Debug)]
pub struct Committee {
    members: Vec<ComplexRbmWavefunction>,
    initial: Vec<ComplexRbmWavefunction>,
    member_seeds: Vec<u64>,
}

impl Committee {
    pub fn new(num_qubits: usize, size: usize, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("committee needs at least one member".into()));
        }
        if num_qubits == 0 {
            return Err(Error::InvalidArgument("committee needs at least one qubit".into()));
        }
        cfg.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let member_seeds: Vec<u64> = (0..size).map(|_| master.next_u64()).collect();
        let hidden = cfg.resolved_hidden_units(num_qubits);
        let scale = cfg.resolved_init_scale(num_qubits);
        let initial: Vec<ComplexRbmWavefunction> = member_seeds
            .iter()
            .map(|&s| ComplexRbmWavefunction::random(num_qubits, hidden, scale, &mut ChaCha8Rng::seed_from_u64(s)))
            .collect();
        Ok(Committee {
            members: initial.clone(),
            initial,
            member_seeds,
        })
    }

    /// Committee from explicit member wavefunctions (used as-is, also as the
    /// restart point).
    pub fn from_members(members: Vec<ComplexRbmWavefunction>) -> Result<Self> {
        let n = members.first().ok_or_else(|| Error::Config("empty committee".into()))?.num_qubits();
        if let Some(bad) = members.iter().find(|m| m.num_qubits() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: bad.num_qubits(),
            });
        }
        Ok(Committee {
            member_seeds: (0..members.len() as u64).collect(),
            initial: members.clone(),
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_qubits(&self) -> usize {
        self.members[0].num_qubits()
    }

    pub fn members(&self) -> &[ComplexRbmWavefunction] {
        &self.members
    }

    pub fn initial_params(&self) -> &[ComplexRbmWavefunction] {
        &self.initial
    }

    pub fn member_seeds(&self) -> &[u64] {
        &self.member_seeds
    }

    pub fn reset(&mut self) {
        self.members = self.initial.clone();
    }

    /// Hash of the bit patterns of all initial parameters.
    pub fn initial_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for m in &self.initial {
            for x in m.amplitude.iter().chain(m.phase.iter()) {
                x.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    fn training_seed(member_seed: u64) -> u64 {
        derive_seed(member_seed, 1)
    }

    /// Resets every member to its initial parameters and trains it on `pool`.
    /// Members train in parallel; each is deterministic in its own seed.
    pub fn train<F>(
        &mut self,
        pool: &SnapshotPool,
        frame: &BasisConfig,
        family: GateFamily,
        cfg: &TrainConfig,
        observer: F,
    ) -> Result<()>
    where
        F: Fn(usize, usize, &ComplexRbmWavefunction) + Sync,
    {
        let trained: Vec<Result<ComplexRbmWavefunction>> = self
            .initial
            .par_iter()
            .zip(self.member_seeds.par_iter())
            .enumerate()
            .map(|(i, (init, &seed))| {
                let member_cfg = TrainConfig {
                    seed: Self::training_seed(seed),
                    ..cfg.clone()
                };
                train(init, pool, frame, family, &member_cfg, |epoch, wf| observer(i, epoch, wf))
            })
            .collect();
        self.members = trained.into_iter().collect::<Result<_>>()?;
        Ok(())
    }

    /// Normalized amplitude vectors of every member in the training frame.
    pub fn member_amplitudes(&self) -> Result<Vec<Vec<C64>>> {
        self.members
            .iter()
            .map(|m| Ok(m.amplitudes(m.log_partition()?)))
            .collect()
    }

    pub fn member_states(&self) -> Result<Vec<StateVector>> {
        self.members
            .iter()
            .map(|m| m.to_statevector(m.log_partition()?))
            .collect()
    }
}

/// How step-2 reference candidates are compared across members.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceScore {
    /// Variance of `|ψ_i(x)|`.
    Amplitude,
    /// Variance of `|ψ_i(x)|²`.
    Probability,
    /// Expected variance of `√(k/M)` when every member draws an `M`-sample
    /// outcome histogram, `M` being the basis's bootstrap count.
    #[default]
    Sampled,
}

/// Mean and variance of `√(k/M)` for `k ~ Binomial(M, p)`.
fn sampled_amplitude_moments(p: f64, m: usize) -> (f64, f64) {
    let p = p.clamp(0.0, 1.0);
    let dist = Binomial::new(p, m as u64).expect("p clamped to [0, 1]");
    let mean: f64 = (0..=m as u64)
        .map(|k| dist.pmf(k) * (k as f64 / m as f64).sqrt())
        .sum();
    (mean, (p - mean * mean).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSelection {
    pub reference: BasisConfig,
    /// Score per candidate in the order z, x, y; `None` for a basis skipped
    /// because its outcome statistics duplicate an earlier one.
    pub scores: Vec<(BasisConfig, Option<f64>)>,
}

/// True when measuring along `b` yields the same outcome distribution as
/// along `a` for every state, i.e. `U_b U_a†` is diagonal.
pub fn same_statistics(a: Axis, b: Axis, family: GateFamily) -> bool {
    match relative_gate(b, a, family) {
        None => true,
        Some(m) => m[0][1].norm() < 1e-12 && m[1][0].norm() < 1e-12,
    }
}

/// Σ_x spread across members of the entries of their state vectors; `samples`
/// is the histogram size used by [`ReferenceScore::Sampled`].
pub fn amplitude_spread(states: &[Vec<C64>], score: ReferenceScore, samples: usize) -> f64 {
    let dim = states.first().map_or(0, Vec::len);
    let k = states.len() as f64;
    (0..dim)
        .map(|x| match score {
            ReferenceScore::Amplitude => population_variance(states.iter().map(|s| s[x].norm())),
            ReferenceScore::Probability => population_variance(states.iter().map(|s| s[x].norm_sqr())),
            ReferenceScore::Sampled => {
                let moments: Vec<(f64, f64)> = states
                    .iter()
                    .map(|s| sampled_amplitude_moments(s[x].norm_sqr(), samples.max(1)))
                    .collect();
                let noise = moments.iter().map(|m| m.1).sum::<f64>() / k;
                population_variance(moments.iter().map(|m| m.0)) + (k - 1.0) / k * noise
            }
        })
        .sum()
}

/// Trains a fresh committee on each uniform basis's bootstrap snapshots alone
/// and returns the basis with the least member spread (ties: z, x, y).
pub fn select_reference<F>(
    bootstrap: &SnapshotPool,
    committee_factory: F,
    family: GateFamily,
    cfg: &TrainConfig,
    score: ReferenceScore,
) -> Result<ReferenceSelection>
where
    F: Fn() -> Result<Committee>,
{
    let n = bootstrap.num_qubits();
    let mut scores: Vec<(BasisConfig, Option<f64>)> = Vec::with_capacity(3);
    for basis in BasisConfig::uniform_set(n) {
        let axis = basis.axis(0);
        let duplicate = scores
            .iter()
            .any(|(b, s)| s.is_some() && same_statistics(b.axis(0), axis, family));
        if duplicate {
            scores.push((basis, None));
            continue;
        }
        let sub = bootstrap.filter_config(&basis);
        if sub.is_empty() {
            return Err(Error::InvalidArgument(format!("bootstrap pool has no {basis} snapshots")));
        }
        let mut committee = committee_factory()?;
        committee.train(&sub, &basis, family, cfg, |_, _, _| {})?;
        let spread = amplitude_spread(&committee.member_amplitudes()?, score, sub.len());
        scores.push((basis, Some(spread)));
    }
    let (reference, _) = scores
        .iter()
        .filter_map(|(b, s)| s.map(|s| (b, s)))
        .fold(None::<(&BasisConfig, f64)>, |best, (b, s)| match best {
            Some((_, bs)) if bs <= s => best,
            _ => Some((b, s)),
        })
        .expect("the z basis is always scored");
    Ok(ReferenceSelection {
        reference: reference.clone(),
        scores,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub amplitude: f64,
    pub phase: f64,
}

impl Disagreement {
    /// Amplitude wins ties.
    pub fn prefers_amplitude(&self) -> bool {
        self.amplitude >= self.phase
    }
}

/// Amplitude score `Σ_x Var_i |ψ_i(x)|` and phase score `Σ_x CircVar_i` of
/// phases measured relative to the component with the largest mean amplitude.
pub fn disagreement_amplitude_vs_phase(states: &[Vec<C64>]) -> Disagreement {
    let dim = states.first().map_or(0, Vec::len);
    let k = states.len() as f64;
    let amplitude = amplitude_spread(states, ReferenceScore::Amplitude, 0);
    let mean_amp = |x: usize| states.iter().map(|s| s[x].norm()).sum::<f64>() / k;
    let anchor = (0..dim).fold(0, |best, x| if mean_amp(x) > mean_amp(best) { x } else { best });
    let phase = (0..dim)
        .map(|x| {
            let resultant: C64 = states
                .iter()
                .map(|s| C64::from_polar(1.0, s[x].arg() - s[anchor].arg()))
                .sum();
            1.0 - resultant.norm() / k
        })
        .sum();
    Disagreement { amplitude, phase }
}

/// `Σ_outcomes Var_i p_i^b(outcome)` for each candidate configuration `b`.
pub fn query_scores(
    states: &[StateVector],
    frame: &BasisConfig,
    candidates: &[BasisConfig],
    family: GateFamily,
) -> Result<Vec<f64>> {
    candidates
        .par_iter()
        .map(|b| {
            let probs: Vec<Vec<f64>> = states
                .iter()
                .map(|s| Ok(change_frame(s, frame, b, family)?.probabilities()))
                .collect::<Result<_>>()?;
            let dim = probs[0].len();
            Ok((0..dim)
                .map(|x| population_variance(probs.iter().map(move |p| p[x])))
                .sum())
        })
        .collect()
}

/// Candidate with the largest score; ties go to the lexicographically
/// smallest configuration.
pub fn select_query_config(
    states: &[StateVector],
    frame: &BasisConfig,
    candidates: &[BasisConfig],
    family: GateFamily,
) -> Result<(BasisConfig, f64)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate configurations".into()));
    }
    let scores = query_scores(states, frame, candidates, family)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        best = match best {
            Some((j, bs)) if bs > s || (bs == s && candidates[j] <= candidates[i]) => Some((j, bs)),
            _ => Some((i, s)),
        };
    }
    let (i, s) = best.expect("nonempty");
    Ok((candidates[i].clone(), s))
}

/// All `3^N` configurations when that fits under `cap`, otherwise a random
/// `cap`-sized subset that always includes the three uniform bases. Sorted.
pub fn candidate_configs(num_qubits: usize, cap: usize, rng: &mut impl Rng) -> Result<Vec<BasisConfig>> {
    if cap < 3 {
        return Err(Error::Config("candidate_cap must be >= 3".into()));
    }
    let total = 3usize.checked_pow(num_qubits as u32);
    if let Some(total) = total.filter(|&t| t <= cap) {
        return Ok((0..total).map(|i| BasisConfig::from_index(num_qubits, i)).collect());
    }
    let mut set: BTreeSet<BasisConfig> = BasisConfig::uniform_set(num_qubits).into_iter().collect();
    while set.len() < cap {
        set.insert(random_config(num_qubits, rng));
    }
    Ok(set.into_iter().collect())
}

fn random_config(num_qubits: usize, rng: &mut impl Rng) -> BasisConfig {
    BasisConfig::new((0..num_qubits).map(|_| Axis::ALL[rng.gen_range(0..3)]).collect()).expect("nonempty")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingRule {
    /// Every member reaches rescaled fidelity `threshold`.
    Fidelity { threshold: f64 },
    /// Every member reproduces each summed nearest-neighbour correlator with
    /// the target's sign and at least `fraction` of its magnitude.
    XxzCorrelator { fraction: f64 },
    /// Every member has relative density and Green's-function errors at or
    /// below the thresholds.
    KcsObservables { density: f64, greens: f64 },
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        let values: &[f64] = match self {
            StoppingRule::Fidelity { threshold } => &[*threshold],
            StoppingRule::XxzCorrelator { fraction } => &[*fraction],
            StoppingRule::KcsObservables { density, greens } => &[*density, *greens],
        };
        if values.iter().all(|&v| v > 0.0 && v <= 1.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("stopping thresholds must lie in (0, 1]: {self:?}")))
        }
    }

    fn member_meets(&self, m: &MemberMetrics, target: &TargetSummary) -> bool {
        match *self {
            StoppingRule::Fidelity { threshold } => m.rescaled_fidelity.is_some_and(|f| f >= threshold),
            StoppingRule::XxzCorrelator { fraction } => {
                !target.correlators.is_empty()
                    && target.correlators.iter().all(|(axis, &t)| {
                        let v = m.correlators.get(axis).copied().unwrap_or(0.0);
                        v * t > 0.0 && v.abs() >= fraction * t.abs()
                    })
            }
            StoppingRule::KcsObservables { density, greens } => {
                m.density_error.is_some_and(|e| e <= density) && m.greens_error.is_some_and(|e| e <= greens)
            }
        }
    }

    /// True when every member satisfies the rule. Never met without a target.
    pub fn is_met(&self, members: &[MemberMetrics], target: Option<&TargetSummary>) -> bool {
        match target {
            Some(t) => !members.is_empty() && members.iter().all(|m| self.member_meets(m, t)),
            None => false,
        }
    }
}

/// Exact reference values the members are compared against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    #[serde(skip)]
    pub state: Option<StateVector>,
    pub correlators: BTreeMap<Axis, f64>,
    pub density: Vec<f64>,
    pub greens: Vec<f64>,
}

impl TargetSummary {
    pub fn new(state: &StateVector) -> Result<Self> {
        let l = state.num_qubits();
        let mut correlators = BTreeMap::new();
        let mut density = Vec::new();
        let mut greens = Vec::new();
        if l >= 2 {
            for axis in Axis::ALL {
                correlators.insert(axis, nn_correlator(state, axis)?);
            }
            density = density_vector(state)?;
        }
        if l >= 3 {
            greens = greens_vector(state)?;
        }
        Ok(TargetSummary {
            state: Some(state.clone()),
            correlators,
            density,
            greens,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub rescaled_fidelity: Option<f64>,
    pub kl: f64,
    pub correlators: BTreeMap<Axis, f64>,
    pub density: Vec<f64>,
    pub greens: Vec<f64>,
    pub density_error: Option<f64>,
    pub greens_error: Option<f64>,
}

fn error_against(v: &[f64], target: &[f64]) -> Option<f64> {
    if target.is_empty() {
        None
    } else {
        relative_diff(v, target).ok()
    }
}

/// Fidelity, KL over `pool` and chain observables of one member.
pub fn evaluate_member(
    wf: &ComplexRbmWavefunction,
    frame: &BasisConfig,
    family: GateFamily,
    pool: &SnapshotPool,
    target: Option<&TargetSummary>,
) -> Result<MemberMetrics> {
    let log_z = wf.log_partition()?;
    let state = reconstructed_state(wf, log_z, frame, family)?;
    let kl = if pool.is_empty() {
        0.0
    } else {
        kl_divergence(&EmpiricalDistribution::from_pool(pool), wf, frame, family, log_z)
    };
    let l = state.num_qubits();
    let mut correlators = BTreeMap::new();
    let mut density = Vec::new();
    let mut greens = Vec::new();
    if l >= 2 {
        for axis in Axis::ALL {
            correlators.insert(axis, nn_correlator(&state, axis)?);
        }
        density = density_vector(&state)?;
    }
    if l >= 3 {
        greens = greens_vector(&state)?;
    }
    let rescaled_fidelity = match target.and_then(|t| t.state.as_ref()) {
        Some(t) => Some(rescaled_fidelity(fidelity(&state, t)?, l)),
        None => None,
    };
    Ok(MemberMetrics {
        rescaled_fidelity,
        kl,
        density_error: target.and_then(|t| error_against(&density, &t.density)),
        greens_error: target.and_then(|t| error_against(&greens, &t.greens)),
        correlators,
        density,
        greens,
    })
}

pub fn evaluate_committee(
    committee: &Committee,
    frame: &BasisConfig,
    family: GateFamily,
    pool: &SnapshotPool,
    target: Option<&TargetSummary>,
) -> Result<Vec<MemberMetrics>> {
    committee
        .members()
        .iter()
        .map(|m| evaluate_member(m, frame, family, pool, target))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryPolicy {
    pub n_per_query: usize,
    pub reference_multiplier: usize,
    pub max_queries: usize,
    pub candidate_cap: usize,
    pub bootstrap_per_basis: usize,
    pub stop: StoppingRule,
    #[serde(default)]
    pub reference_score: ReferenceScore,
    /// Training epochs for the step-2 committees; `None` uses the full
    /// training length.
    #[serde(default)]
    pub reference_epochs: Option<usize>,
}

impl Default for QueryPolicy {
    fn default() -> Self {
        QueryPolicy {
            n_per_query: 1,
            reference_multiplier: 3,
            max_queries: 30,
            candidate_cap: 256,
            bootstrap_per_basis: 100,
            stop: StoppingRule::Fidelity { threshold: 0.9 },
            reference_score: ReferenceScore::Sampled,
            reference_epochs: None,
        }
    }
}

impl QueryPolicy {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_per_query", self.n_per_query),
            ("reference_multiplier", self.reference_multiplier),
            ("max_queries", self.max_queries),
            ("bootstrap_per_basis", self.bootstrap_per_basis),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.reference_epochs == Some(0) {
            return Err(Error::Config("reference_epochs must be >= 1".into()));
        }
        if self.candidate_cap < 3 {
            return Err(Error::Config("candidate_cap must be >= 3".into()));
        }
        self.stop.validate()
    }
}

/// How a query's configuration was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryRule {
    /// Members disagree more on amplitudes: reference basis requested.
    #[serde(rename = "4a")]
    Amplitude,
    /// Configuration with the largest outcome-probability variance.
    #[serde(rename = "4b")]
    Committee,
    /// Uniform basis injected after the reference was chosen twice in a row.
    #[serde(rename = "forced")]
    Forced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: usize,
    pub config: BasisConfig,
    pub added: usize,
    pub rule: QueryRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub n_tot: usize,
    pub n_config: usize,
    pub members: Vec<MemberMetrics>,
    pub stop_met: bool,
    pub disagreement: Option<Disagreement>,
}

#[derive(Clone, Debug)]
pub struct LearnerState {
    pub reference: BasisConfig,
    pub reference_selection: ReferenceSelection,
    pub pool: SnapshotPool,
    pub bootstrap_size: usize,
    pub query_log: Vec<QueryRecord>,
    pub cycles: Vec<CycleRecord>,
}

impl LearnerState {
    pub fn n_tot(&self) -> usize {
        self.pool.len()
    }

    pub fn n_queries(&self) -> usize {
        self.query_log.len()
    }

    pub fn n_config(&self) -> usize {
        self.pool.configs().len()
    }

    /// Pool size equals bootstrap plus every logged addition.
    pub fn accounting_consistent(&self) -> bool {
        self.pool.len() == self.bootstrap_size + self.query_log.iter().map(|q| q.added).sum::<usize>()
    }

    pub fn query_log_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.query_log)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub policy: QueryPolicy,
    pub train: TrainConfig,
    pub family: GateFamily,
    pub n_rbm: usize,
    pub seed: u64,
}

/// Per-epoch progress of one member during one training cycle.
pub struct TrainEvent<'a> {
    pub cycle: usize,
    pub member: usize,
    pub epoch: usize,
    pub pool: &'a SnapshotPool,
    pub frame: &'a BasisConfig,
    pub wf: &'a ComplexRbmWavefunction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Halt {
    StopRuleMet,
    QueryCap,
}

pub struct ActiveLearner {
    config: LearnerConfig,
    committee: Committee,
    state: LearnerState,
    target: Option<TargetSummary>,
    candidate_rng: ChaCha8Rng,
    forced: VecDeque<BasisConfig>,
    last_was_reference: bool,
    halted: Option<Halt>,
}

impl ActiveLearner {
    /// Bootstrap in the three uniform bases, then choose the reference. Only
    /// the reference-basis bootstrap snapshots are kept in the pool.
    pub fn start(source: &mut dyn MeasurementSource, config: LearnerConfig) -> Result<Self> {
        config.policy.validate()?;
        config.train.validate()?;
        let n = source.num_qubits();
        let bootstrap = bootstrap(source, config.policy.bootstrap_per_basis)?;
        let committee_seed = derive_seed(config.seed, SEED_COMMITTEE);
        let factory = || Committee::new(n, config.n_rbm, &config.train, committee_seed);
        let reference_train = TrainConfig {
            epochs: config.policy.reference_epochs.unwrap_or(config.train.epochs),
            ..config.train.clone()
        };
        let selection = select_reference(
            &bootstrap,
            factory,
            config.family,
            &reference_train,
            config.policy.reference_score,
        )?;
        let pool = bootstrap.filter_config(&selection.reference);
        let target = source.target().map(TargetSummary::new).transpose()?;
        Ok(ActiveLearner {
            committee: factory()?,
            state: LearnerState {
                reference: selection.reference.clone(),
                reference_selection: selection,
                bootstrap_size: pool.len(),
                pool,
                query_log: Vec::new(),
                cycles: Vec::new(),
            },
            target,
            candidate_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_CANDIDATES)),
            forced: VecDeque::new(),
            last_was_reference: false,
            halted: None,
            config,
        })
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn committee(&self) -> &Committee {
        &self.committee
    }

    pub fn target(&self) -> Option<&TargetSummary> {
        self.target.as_ref()
    }

    pub fn halted(&self) -> Option<Halt> {
        self.halted
    }

    pub fn into_parts(self) -> (LearnerState, Committee) {
        (self.state, self.committee)
    }

    /// One learning cycle: retrain from the initial parameters, check the
    /// stopping rule, and otherwise query one more configuration.
    pub fn cycle<F>(&mut self, source: &mut dyn MeasurementSource, observer: &F) -> Result<Option<Halt>>
    where
        F: Fn(TrainEvent<'_>) + Sync,
    {
        if self.halted.is_some() {
            return Ok(self.halted);
        }
        let cycle = self.state.cycles.len();
        let reference = self.state.reference.clone();
        let family = self.config.family;
        {
            let pool = &self.state.pool;
            let frame = &reference;
            self.committee.train(pool, frame, family, &self.config.train, |member, epoch, wf| {
                observer(TrainEvent {
                    cycle,
                    member,
                    epoch,
                    pool,
                    frame,
                    wf,
                })
            })?;
        }
        let members = evaluate_committee(&self.committee, &reference, family, &self.state.pool, self.target.as_ref())?;
        let stop_met = self.config.policy.stop.is_met(&members, self.target.as_ref());
        let mut record = CycleRecord {
            cycle,
            n_tot: self.state.n_tot(),
            n_config: self.state.n_config(),
            members,
            stop_met,
            disagreement: None,
        };
        if stop_met || self.state.n_queries() >= self.config.policy.max_queries {
            self.state.cycles.push(record);
            self.halted = Some(if stop_met { Halt::StopRuleMet } else { Halt::QueryCap });
            return Ok(self.halted);
        }

        let (config, rule) = match self.forced.pop_front() {
            Some(c) => (c, QueryRule::Forced),
            None => {
                let amplitudes = self.committee.member_amplitudes()?;
                let d = disagreement_amplitude_vs_phase(&amplitudes);
                record.disagreement = Some(d);
                if d.prefers_amplitude() {
                    (reference.clone(), QueryRule::Amplitude)
                } else {
                    let candidates =
                        candidate_configs(reference.len(), self.config.policy.candidate_cap, &mut self.candidate_rng)?;
                    let states = self.committee.member_states()?;
                    (select_query_config(&states, &reference, &candidates, family)?.0, QueryRule::Committee)
                }
            }
        };
        self.state.cycles.push(record);

        let is_reference = config == reference;
        let policy = &self.config.policy;
        let added = if is_reference {
            policy.reference_multiplier * policy.n_per_query
        } else {
            policy.n_per_query
        };
        let snapshots = source.measure(&config, added)?;
        self.state.pool.extend(snapshots)?;
        self.state.query_log.push(QueryRecord {
            query: self.state.query_log.len() + 1,
            config,
            added,
            rule,
        });
        if is_reference && self.last_was_reference && self.forced.is_empty() {
            self.forced.extend(
                BasisConfig::uniform_set(reference.len())
                    .into_iter()
                    .filter(|b| *b != reference),
            );
            self.last_was_reference = false;
        } else {
            self.last_was_reference = is_reference;
        }
        Ok(None)
    }

    /// Runs cycles until the stopping rule is met or the query cap is hit.
    pub fn run<F>(&mut self, source: &mut dyn MeasurementSource, observer: &F) -> Result<Halt>
    where
        F: Fn(TrainEvent<'_>) + Sync,
    {
        loop {
            if let Some(h) = self.cycle(source, observer)? {
                return Ok(h);
            }
        }
    }
}

/// `per_basis` snapshots in each of zz…z, xx…x, yy…y.
pub fn bootstrap(source: &mut dyn MeasurementSource, per_basis: usize) -> Result<SnapshotPool> {
    if per_basis == 0 {
        return Err(Error::InvalidArgument("per_basis must be >= 1".into()));
    }
    let n = source.num_qubits();
    let mut pool = SnapshotPool::new(n);
    for basis in BasisConfig::uniform_set(n) {
        pool.extend(source.measure(&basis, per_basis)?)?;
    }
    Ok(pool)
}

/// Outcome of a complete active-learning run.
pub struct AlOutcome {
    pub state: LearnerState,
    pub committee: Committee,
    pub halt: Halt,
}

pub fn al_loop<F>(source: &mut dyn MeasurementSource, config: LearnerConfig, observer: &F) -> Result<AlOutcome>
where
    F: Fn(TrainEvent<'_>) + Sync,
{
    let mut learner = ActiveLearner::start(source, config)?;
    let halt = learner.run(source, observer)?;
    let (state, committee) = learner.into_parts();
    Ok(AlOutcome {
        state,
        committee,
        halt,
    })
}

/// Sample split of an active-learning run: the reference-basis count and the
/// count of every other configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub reference_count: usize,
    pub other_counts: Vec<usize>,
}

impl Budget {
    pub fn from_state(state: &LearnerState) -> Self {
        let counts = state.pool.counts_by_config();
        Budget {
            reference_count: counts.get(&state.reference).copied().unwrap_or(0),
            other_counts: counts
                .iter()
                .filter(|(c, _)| **c != state.reference)
                .map(|(_, &n)| n)
                .collect(),
        }
    }

    pub fn n_tot(&self) -> usize {
        self.reference_count + self.other_counts.iter().sum::<usize>()
    }

    pub fn n_config(&self) -> usize {
        usize::from(self.reference_count > 0) + self.other_counts.len()
    }
}

pub struct BaselineOutcome {
    pub pool: SnapshotPool,
    pub frame: BasisConfig,
    pub committee: Committee,
    pub members: Vec<MemberMetrics>,
}

/// Same budget as an active-learning run, reference fixed to zz…z and every
/// other configuration drawn uniformly at random (distinct, never zz…z).
pub fn baseline_pool(
    source: &mut dyn MeasurementSource,
    budget: &Budget,
    rng: &mut impl Rng,
) -> Result<(SnapshotPool, BasisConfig)> {
    let n = source.num_qubits();
    if budget.n_tot() == 0 {
        return Err(Error::EmptyPool);
    }
    let frame = BasisConfig::uniform(n, Axis::Z);
    let available = 3usize.checked_pow(n as u32).map_or(usize::MAX, |t| t - 1);
    if budget.other_counts.len() > available {
        return Err(Error::BudgetParity(format!(
            "{} random configurations requested but only {available} exist",
            budget.other_counts.len()
        )));
    }
    let mut chosen: BTreeSet<BasisConfig> = BTreeSet::new();
    let mut configs = Vec::with_capacity(budget.other_counts.len());
    while configs.len() < budget.other_counts.len() {
        let c = random_config(n, rng);
        if c != frame && chosen.insert(c.clone()) {
            configs.push(c);
        }
    }
    let mut pool = SnapshotPool::new(n);
    if budget.reference_count > 0 {
        pool.extend(source.measure(&frame, budget.reference_count)?)?;
    }
    for (c, &count) in configs.iter().zip(&budget.other_counts) {
        if count > 0 {
            pool.extend(source.measure(c, count)?)?;
        }
    }
    if pool.len() != budget.n_tot() || pool.configs().len() != budget.n_config() {
        return Err(Error::BudgetParity(format!(
            "baseline pool has {} samples in {} configs, budget is {} in {}",
            pool.len(),
            pool.configs().len(),
            budget.n_tot(),
            budget.n_config()
        )));
    }
    Ok((pool, frame))
}

/// Trains an identically configured committee once on a budget-matched pool
/// of random configurations.
pub fn baseline_run<F>(
    source: &mut dyn MeasurementSource,
    budget: &Budget,
    config: &LearnerConfig,
    observer: &F,
) -> Result<BaselineOutcome>
where
    F: Fn(TrainEvent<'_>) + Sync,
{
    config.train.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_BASELINE));
    let (pool, frame) = baseline_pool(source, budget, &mut rng)?;
    let n = source.num_qubits();
    let mut committee = Committee::new(n, config.n_rbm, &config.train, derive_seed(config.seed, SEED_COMMITTEE))?;
    committee.train(&pool, &frame, config.family, &config.train, |member, epoch, wf| {
        observer(TrainEvent {
            cycle: 0,
            member,
            epoch,
            pool: &pool,
            frame: &frame,
            wf,
        })
    })?;
    let target = source.target().map(TargetSummary::new).transpose()?;
    let members = evaluate_committee(&committee, &frame, config.family, &pool, target.as_ref())?;
    Ok(BaselineOutcome {
        pool,
        frame,
        committee,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_variance_basics() {
        assert_eq!(population_variance([1.0, 0.0].into_iter()), 0.25);
        assert_eq!(population_variance([3.0].into_iter()), 0.0);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let s = StateVector::basis_state(1, 0).unwrap();
        let frame: BasisConfig = "z".parse().unwrap();
        let cands: Vec<BasisConfig> = ["z", "y", "x"].iter().map(|c| c.parse().unwrap()).collect();
        let (best, score) = select_query_config(&[s.clone(), s], &frame, &cands, GateFamily::Rxy).unwrap();
        assert_eq!(best.to_string(), "x");
        assert_eq!(score, 0.0);
    }

    #[test]
    fn stopping_rule_validation() {
        assert!(StoppingRule::Fidelity { threshold: 0.0 }.validate().is_err());
        assert!(StoppingRule::KcsObservables { density: 0.2, greens: 1.5 }.validate().is_err());
        assert!(StoppingRule::XxzCorrelator { fraction: 2.0 / 3.0 }.validate().is_ok());
    }

    #[test]
    fn query_log_json_shape() {
        let rec = QueryRecord {
            query: 1,
            config: "xzzxx".parse().unwrap(),
            added: 1,
            rule: QueryRule::Committee,
        };
        assert_eq!(
            serde_json::to_string(&rec).unwrap(),
            r#"{"query":1,"config":"xzzxx","added":1,"rule":"4b"}"#
        );
    }
}
