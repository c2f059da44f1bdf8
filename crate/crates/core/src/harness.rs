//! Declarative experiment runs: a TOML config in, a run directory of JSON and
//! CSV files out.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json            resolved config, version, fixed conventions, status
//! summary.json             per-run member statistics and across-seed aggregates
//! al/learning_curve.csv    all seeds, sorted by (seed, epoch, member)
//! al/seed-<s>/             query_log.json, cycles.json, observables.json,
//!                          learning_curve.csv, checkpoints/member-<i>.json
//! baseline/...             same shape, without query log and cycles
//! sweep.csv                sweep mode only
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::committee::{
    al_loop, baseline_run, derive_seed, Budget, Committee, Halt, LearnerConfig, MemberMetrics, QueryPolicy,
    StoppingRule, TargetSummary, TrainEvent, SEED_SOURCE,
};
use crate::error::{Error, Result};
use crate::models::{ground_state, named_state, Hamiltonian, KcsSpec, NamedState, SolverOptions, XxzSpec};
use crate::observables::{fit_decay, reconstructed_state, DecayFit};
use crate::quantum::{fidelity, rescaled_fidelity, BasisConfig, GateFamily, SnapshotPool, StateVector};
use crate::rbm::{kl_divergence, EmpiricalDistribution, RbmCheckpoint, TrainConfig};
use crate::source::{MeasurementSource, ReplaySource, SimulatorSource};

/// Seed purpose tag for the baseline's own measurement stream.
pub const SEED_BASELINE_SOURCE: u64 = 5;

pub const EXIT_STOP_MET: i32 = 0;
pub const EXIT_QUERY_CAP: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Named {
        state: NamedState,
        qubits: usize,
    },
    Xxz(XxzSpec),
    Kcs(KcsSpec),
    /// Recorded snapshots, replayed without repetition. `state` optionally
    /// names a binary state file used only for diagnostics.
    Snapshots {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state: Option<PathBuf>,
    },
}

impl TargetSpec {
    /// Gate family and query policy used when the config leaves them out.
    pub fn defaults(&self) -> (GateFamily, QueryPolicy) {
        let base = QueryPolicy::default();
        match self {
            TargetSpec::Named { state, .. } => {
                let (family, boot) = match state {
                    NamedState::ZSpins | NamedState::XSpins => (GateFamily::HadamardK, 4),
                    NamedState::Ghz | NamedState::GhzPhi => (GateFamily::Rxy, 100),
                };
                (
                    family,
                    QueryPolicy {
                        bootstrap_per_basis: boot,
                        ..base
                    },
                )
            }
            TargetSpec::Xxz(_) => (
                GateFamily::Rxy,
                QueryPolicy {
                    n_per_query: 50,
                    bootstrap_per_basis: 500,
                    stop: StoppingRule::XxzCorrelator { fraction: 2.0 / 3.0 },
                    ..base
                },
            ),
            TargetSpec::Kcs(_) => (
                GateFamily::HadamardK,
                QueryPolicy {
                    n_per_query: 2,
                    bootstrap_per_basis: 200,
                    stop: StoppingRule::KcsObservables {
                        density: 0.2,
                        greens: 0.2,
                    },
                    ..base
                },
            ),
            TargetSpec::Snapshots { .. } => (GateFamily::HadamardK, base),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Al,
    Baseline,
    Compare,
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Total samples vary, configuration count fixed.
    NSamples,
    /// Configuration count varies, samples per configuration fixed.
    NConfigs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    /// Configuration count (n_samples axis, default 6) or samples per
    /// configuration (n_configs axis, default 20).
    #[serde(default)]
    pub fixed: Option<usize>,
}

impl SweepSpec {
    pub fn resolved_fixed(&self) -> usize {
        self.fixed.unwrap_or(match self.axis {
            SweepAxis::NSamples => 6,
            SweepAxis::NConfigs => 20,
        })
    }

    /// Budget of one grid point: the reference takes the remainder.
    pub fn budget(&self, value: usize) -> Result<Budget> {
        let fixed = self.resolved_fixed();
        let (configs, total) = match self.axis {
            SweepAxis::NSamples => (fixed, value),
            SweepAxis::NConfigs => (value, value * fixed),
        };
        if configs == 0 || total < configs {
            return Err(Error::Config(format!(
                "sweep point {value}: {total} samples cannot cover {configs} configurations"
            )));
        }
        let per = total / configs;
        Ok(Budget {
            reference_count: total - per * (configs - 1),
            other_counts: vec![per; configs - 1],
        })
    }
}

/// Fully resolved experiment description; every default is explicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub gate_family: GateFamily,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub n_rbm: usize,
    pub policy: QueryPolicy,
    pub train: TrainConfig,
    pub solver: SolverOptions,
    /// Seed of the ground-state solver's start vector.
    pub solver_seed: u64,
    /// Learning-curve rows are written every this many epochs.
    pub curve_interval: usize,
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    target: TargetSpec,
    gate_family: Option<GateFamily>,
    mode: Option<Mode>,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
    n_rbm: Option<usize>,
    policy: Option<toml::Table>,
    train: Option<toml::Table>,
    solver: Option<toml::Table>,
    solver_seed: Option<u64>,
    curve_interval: Option<usize>,
    workers: Option<usize>,
    sweep: Option<SweepSpec>,
}

/// Overlays the keys of `overrides` on the serialized `base`.
fn overlay<T>(base: &T, overrides: Option<toml::Table>, section: &str) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(format!("[{section}]: {e}")))?;
    if let Some(o) = overrides {
        table.extend(o);
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("[{section}]: {e}")))
}

impl ExperimentConfig {
    /// Parses a TOML config. Relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let (family, policy) = raw.target.defaults();
        let resolve = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        let target = match raw.target {
            TargetSpec::Snapshots { path, state } => TargetSpec::Snapshots {
                path: resolve(path),
                state: state.map(resolve),
            },
            t => t,
        };
        let cfg = ExperimentConfig {
            target,
            gate_family: raw.gate_family.unwrap_or(family),
            mode: raw.mode.unwrap_or(Mode::Compare),
            seeds: raw.seeds.unwrap_or_else(|| vec![0]),
            output_dir: resolve(raw.output_dir.unwrap_or_else(|| PathBuf::from("runs"))),
            n_rbm: raw.n_rbm.unwrap_or(4),
            policy: overlay(&policy, raw.policy, "policy")?,
            train: overlay(&TrainConfig::default(), raw.train, "train")?,
            solver: overlay(&SolverOptions::default(), raw.solver, "solver")?,
            solver_seed: raw.solver_seed.unwrap_or(0),
            curve_interval: raw.curve_interval.unwrap_or(1),
            workers: raw.workers.unwrap_or(1),
            sweep: raw.sweep,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.n_rbm == 0 || self.curve_interval == 0 || self.workers == 0 {
            return Err(Error::Config("n_rbm, curve_interval and workers must be >= 1".into()));
        }
        self.policy.validate()?;
        self.train.validate()?;
        match (&self.target, self.mode) {
            (TargetSpec::Snapshots { path, state }, _) => {
                for p in std::iter::once(path).chain(state) {
                    if !p.is_file() {
                        return Err(Error::Config(format!("file not found: {}", p.display())));
                    }
                }
            }
            (TargetSpec::Named { qubits, .. }, _) if *qubits == 0 => {
                return Err(Error::Config("qubits must be >= 1".into()));
            }
            (TargetSpec::Xxz(s), _) => Hamiltonian::Xxz(*s).validate()?,
            (TargetSpec::Kcs(s), _) => Hamiltonian::Kcs(*s).validate()?,
            _ => {}
        }
        match (&self.sweep, self.mode) {
            (None, Mode::Sweep) => Err(Error::Config("mode = \"sweep\" needs a [sweep] table".into())),
            (Some(s), Mode::Sweep) if s.values.is_empty() => Err(Error::Config("sweep values must not be empty".into())),
            (Some(s), Mode::Sweep) => s.values.iter().try_for_each(|&v| s.budget(v).map(|_| ())),
            _ => Ok(()),
        }
    }

    fn learner_config(&self, seed: u64) -> LearnerConfig {
        LearnerConfig {
            policy: self.policy.clone(),
            train: self.train.clone(),
            family: self.gate_family,
            n_rbm: self.n_rbm,
            seed,
        }
    }
}

/// Solver diagnostics for Hamiltonian targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundInfo {
    pub energy: f64,
    pub residual_norm: f64,
    pub sz_total: f64,
    pub matvecs: usize,
}

/// A target ready to hand out measurement sources.
#[derive(Clone, Debug)]
pub struct PreparedTarget {
    pub num_qubits: usize,
    pub state: Option<StateVector>,
    pub snapshots: Option<SnapshotPool>,
    pub ground: Option<GroundInfo>,
}

impl PreparedTarget {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let from_state = |state: StateVector, ground| PreparedTarget {
            num_qubits: state.num_qubits(),
            state: Some(state),
            snapshots: None,
            ground,
        };
        let hamiltonian = match &cfg.target {
            TargetSpec::Named { state, qubits } => return Ok(from_state(named_state(*state, *qubits)?, None)),
            TargetSpec::Snapshots { path, state } => {
                let pool = ingest_snapshots(path)?;
                let state = state.as_ref().map(StateVector::read_file).transpose()?;
                if let Some(s) = &state {
                    if s.num_qubits() != pool.num_qubits() {
                        return Err(Error::DimensionMismatch {
                            expected: pool.num_qubits(),
                            actual: s.num_qubits(),
                        });
                    }
                }
                return Ok(PreparedTarget {
                    num_qubits: pool.num_qubits(),
                    state,
                    snapshots: Some(pool),
                    ground: None,
                });
            }
            TargetSpec::Xxz(s) => Hamiltonian::Xxz(*s),
            TargetSpec::Kcs(s) => Hamiltonian::Kcs(*s),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.solver_seed);
        let gs = ground_state(&hamiltonian, cfg.solver, &mut rng)?;
        let info = GroundInfo {
            energy: gs.energy,
            residual_norm: gs.residual_norm,
            sz_total: gs.sz_total,
            matvecs: gs.matvecs,
        };
        Ok(from_state(gs.state, Some(info)))
    }

    /// A fresh source: replay restarts at the file's first snapshot, the
    /// simulator is seeded from `seed`.
    pub fn source(&self, family: GateFamily, seed: u64) -> Result<Box<dyn MeasurementSource + Send>> {
        match (&self.snapshots, &self.state) {
            (Some(pool), state) => {
                let mut replay = ReplaySource::new(pool.clone());
                if let Some(s) = state {
                    replay = replay.with_target(s.clone())?;
                }
                Ok(Box::new(replay))
            }
            (None, Some(state)) => Ok(Box::new(SimulatorSource::new(state.clone(), family, seed))),
            (None, None) => Err(Error::Config("target has neither a state nor snapshots".into())),
        }
    }
}

/// Reads a snapshot file; parse errors carry the offending line number.
pub fn ingest_snapshots(path: impl AsRef<Path>) -> Result<SnapshotPool> {
    SnapshotPool::read_file(path)
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stats { mean, std, n })
    }

    pub fn sem(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Al,
    Baseline,
}

impl RunKind {
    fn dir(self) -> &'static str {
        match self {
            RunKind::Al => "al",
            RunKind::Baseline => "baseline",
        }
    }
}

/// Final state of one committee run, summarized over its members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub kind: RunKind,
    pub reference: BasisConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halt: Option<Halt>,
    pub stop_met: bool,
    pub n_tot: usize,
    pub n_queries: usize,
    pub n_config: usize,
    pub rescaled_fidelity: Option<Stats>,
    pub kl: Option<Stats>,
    pub density_error: Option<Stats>,
    pub greens_error: Option<Stats>,
}

impl RunSummary {
    fn new(seed: u64, kind: RunKind, reference: BasisConfig, members: &[MemberMetrics]) -> Self {
        let collect = |f: &dyn Fn(&MemberMetrics) -> Option<f64>| Stats::of(&members.iter().filter_map(f).collect::<Vec<_>>());
        RunSummary {
            seed,
            kind,
            reference,
            halt: None,
            stop_met: false,
            n_tot: 0,
            n_queries: 0,
            n_config: 0,
            rescaled_fidelity: collect(&|m| m.rescaled_fidelity),
            kl: collect(&|m| Some(m.kl)),
            density_error: collect(&|m| m.density_error),
            greens_error: collect(&|m| m.greens_error),
        }
    }
}

/// Across-seed aggregate of the per-run member means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub sem: f64,
    pub median: f64,
    pub n: usize,
}

fn aggregate(runs: &[&RunSummary], pick: impl Fn(&RunSummary) -> Option<Stats>) -> Option<Aggregate> {
    let means: Vec<f64> = runs.iter().filter_map(|r| pick(r).map(|s| s.mean)).collect();
    let s = Stats::of(&means)?;
    Some(Aggregate {
        mean: s.mean,
        sem: s.sem(),
        median: median(&means)?,
        n: s.n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub runs: Vec<RunSummary>,
    pub aggregate: BTreeMap<RunKind, BTreeMap<String, Aggregate>>,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    pub n_tot: usize,
    pub n_config: usize,
    pub mean: f64,
    pub std: f64,
    pub sem: f64,
}

/// What `run` hands back besides the files it wrote.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: Summary,
    pub sweep: Vec<SweepPoint>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub conventions: BTreeMap<String, serde_json::Value>,
    pub num_qubits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_state: Option<GroundInfo>,
}

/// Fixed choices that no config key controls, recorded for every run.
pub fn conventions() -> BTreeMap<String, serde_json::Value> {
    use serde_json::json;
    [
        ("qubit_order", json!("qubit 0 is the most significant bit")),
        ("spin_up", json!("bit 0 is S^z = +1/2")),
        ("boundary_conditions", json!("open")),
        ("ground_state_solver", json!("thick-restart Lanczos")),
        ("kcs_h0_ground_state", json!("projected onto first-site S^x = +1/2")),
        ("training_pool", json!("reference-basis bootstrap only; other bootstrap bases discarded")),
        ("stopping_rule_scope", json!("every committee member must satisfy it")),
        ("variance", json!("population variance over members")),
        ("phase_gauge", json!("relative to the largest mean-amplitude basis state; circular variance")),
        ("arbitration_tie", json!("amplitude wins ties")),
        ("query_tie", json!("lexicographically smallest configuration")),
        ("reference_tie", json!("first of z, x, y")),
        ("reference_duplicates", json!("bases with statistics identical to an earlier one are skipped")),
        ("forced_queries", json!("the two other uniform bases, one per cycle, after two consecutive reference picks")),
        ("baseline_reference", json!("zz...z with distinct random non-reference configurations")),
        ("greens_function", json!("real part")),
        ("member_statistics", json!("mean and sample standard deviation over members")),
        ("seed_statistics", json!("mean and standard error of the per-seed means")),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

struct CurveRow {
    seed: u64,
    epoch: usize,
    member: usize,
    infidelity: Option<f64>,
    kl: f64,
    n_samples: usize,
}

const CURVE_HEADER: &str = "seed,epoch,member,one_minus_rescaled_fidelity,kl,n_samples\n";

fn curve_csv(rows: &mut [CurveRow]) -> String {
    rows.sort_by_key(|r| (r.seed, r.epoch, r.member));
    let mut out = String::from(CURVE_HEADER);
    for r in rows.iter() {
        let inf = r.infidelity.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{},{}\n", r.seed, r.epoch, r.member, inf, r.kl, r.n_samples));
    }
    out
}

/// Observer that records a learning-curve row every `interval` epochs.
struct CurveRecorder<'a> {
    seed: u64,
    epochs: usize,
    interval: usize,
    family: GateFamily,
    target: Option<&'a StateVector>,
    rows: Mutex<Vec<CurveRow>>,
}

impl CurveRecorder<'_> {
    fn observe(&self, e: &TrainEvent<'_>) {
        if (e.epoch + 1) % self.interval != 0 && e.epoch + 1 != self.epochs {
            return;
        }
        let Ok(log_z) = e.wf.log_partition() else { return };
        let l = e.wf.num_qubits();
        let infidelity = self.target.and_then(|t| {
            let s = reconstructed_state(e.wf, log_z, e.frame, self.family).ok()?;
            Some(1.0 - rescaled_fidelity(fidelity(&s, t).ok()?, l))
        });
        let kl = kl_divergence(&EmpiricalDistribution::from_pool(e.pool), e.wf, e.frame, self.family, log_z);
        self.rows.lock().expect("curve lock").push(CurveRow {
            seed: self.seed,
            epoch: e.cycle * self.epochs + e.epoch + 1,
            member: e.member,
            infidelity,
            kl,
            n_samples: e.pool.len(),
        });
    }

    fn into_rows(self) -> Vec<CurveRow> {
        self.rows.into_inner().expect("curve lock")
    }
}

#[derive(Serialize)]
struct MemberObservables<'a> {
    member: usize,
    metrics: &'a MemberMetrics,
    decay: Option<DecayFit>,
}

#[derive(Serialize)]
struct ObservablesFile<'a> {
    seed: u64,
    kind: RunKind,
    frame: &'a BasisConfig,
    target: Option<&'a TargetSummary>,
    target_decay: Option<DecayFit>,
    members: Vec<MemberObservables<'a>>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct SeedOutput {
    runs: Vec<RunSummary>,
    curves: BTreeMap<RunKind, Vec<CurveRow>>,
}

#[allow(clippy::too_many_arguments)]
fn write_committee_outputs(
    dir: &Path,
    seed: u64,
    kind: RunKind,
    committee: &Committee,
    frame: &BasisConfig,
    members: &[MemberMetrics],
    target: Option<&TargetSummary>,
    cfg: &ExperimentConfig,
) -> Result<()> {
    let file = ObservablesFile {
        seed,
        kind,
        frame,
        target,
        target_decay: target.and_then(|t| fit_decay(&t.greens)),
        members: members
            .iter()
            .enumerate()
            .map(|(i, m)| MemberObservables {
                member: i,
                metrics: m,
                decay: fit_decay(&m.greens),
            })
            .collect(),
    };
    write_json(&dir.join("observables.json"), &file)?;
    for (i, (wf, &s)) in committee.members().iter().zip(committee.member_seeds()).enumerate() {
        let ck = RbmCheckpoint::new(wf, s, cfg.train.epochs, frame.clone(), cfg.gate_family);
        write_text(&dir.join(format!("checkpoints/member-{i}.json")), &ck.to_json()?)?;
    }
    Ok(())
}

fn run_al_seed(
    cfg: &ExperimentConfig,
    target: &PreparedTarget,
    seed: u64,
    root: &Path,
) -> Result<(RunSummary, Vec<CurveRow>, Budget)> {
    let dir = root.join("al").join(format!("seed-{seed}"));
    let mut source = target.source(cfg.gate_family, derive_seed(seed, SEED_SOURCE))?;
    let recorder = CurveRecorder {
        seed,
        epochs: cfg.train.epochs,
        interval: cfg.curve_interval,
        family: cfg.gate_family,
        target: target.state.as_ref(),
        rows: Mutex::new(Vec::new()),
    };
    let out = al_loop(source.as_mut(), cfg.learner_config(seed), &|e: TrainEvent| recorder.observe(&e))?;
    if !out.state.accounting_consistent() {
        return Err(Error::BudgetParity(format!("seed {seed}: N_tot bookkeeping mismatch")));
    }
    let target_summary = source.target().map(TargetSummary::new).transpose()?;
    let last = out.state.cycles.last().expect("at least one cycle");
    write_text(&dir.join("query_log.json"), &(out.state.query_log_json()? + "\n"))?;
    write_json(&dir.join("cycles.json"), &out.state.cycles)?;
    write_json(&dir.join("reference_selection.json"), &out.state.reference_selection)?;
    write_committee_outputs(
        &dir,
        seed,
        RunKind::Al,
        &out.committee,
        &out.state.reference,
        &last.members,
        target_summary.as_ref(),
        cfg,
    )?;
    let mut rows = recorder.into_rows();
    write_text(&dir.join("learning_curve.csv"), &curve_csv(&mut rows))?;
    let mut summary = RunSummary::new(seed, RunKind::Al, out.state.reference.clone(), &last.members);
    summary.halt = Some(out.halt);
    summary.stop_met = out.halt == Halt::StopRuleMet;
    summary.n_tot = out.state.n_tot();
    summary.n_queries = out.state.n_queries();
    summary.n_config = out.state.n_config();
    Ok((summary, rows, Budget::from_state(&out.state)))
}

fn run_baseline_seed(
    cfg: &ExperimentConfig,
    target: &PreparedTarget,
    seed: u64,
    budget: &Budget,
    root: &Path,
) -> Result<(RunSummary, Vec<CurveRow>)> {
    let dir = root.join("baseline").join(format!("seed-{seed}"));
    let mut source = target.source(cfg.gate_family, derive_seed(seed, SEED_BASELINE_SOURCE))?;
    let recorder = CurveRecorder {
        seed,
        epochs: cfg.train.epochs,
        interval: cfg.curve_interval,
        family: cfg.gate_family,
        target: target.state.as_ref(),
        rows: Mutex::new(Vec::new()),
    };
    let out = baseline_run(source.as_mut(), budget, &cfg.learner_config(seed), &|e: TrainEvent| recorder.observe(&e))?;
    let target_summary = source.target().map(TargetSummary::new).transpose()?;
    write_json(&dir.join("budget.json"), budget)?;
    write_committee_outputs(
        &dir,
        seed,
        RunKind::Baseline,
        &out.committee,
        &out.frame,
        &out.members,
        target_summary.as_ref(),
        cfg,
    )?;
    let mut rows = recorder.into_rows();
    write_text(&dir.join("learning_curve.csv"), &curve_csv(&mut rows))?;
    let mut summary = RunSummary::new(seed, RunKind::Baseline, out.frame.clone(), &out.members);
    summary.stop_met = cfg.policy.stop.is_met(&out.members, target_summary.as_ref());
    summary.n_tot = out.pool.len();
    summary.n_config = out.pool.configs().len();
    Ok((summary, rows))
}

/// Budget for a stand-alone baseline: the bootstrap size in the reference
/// basis alone.
fn standalone_budget(cfg: &ExperimentConfig) -> Budget {
    Budget {
        reference_count: cfg.policy.bootstrap_per_basis,
        other_counts: Vec::new(),
    }
}

fn run_seed(cfg: &ExperimentConfig, target: &PreparedTarget, seed: u64, root: &Path) -> Result<SeedOutput> {
    let mut runs = Vec::new();
    let mut curves = BTreeMap::new();
    let mut al_budget = None;
    if matches!(cfg.mode, Mode::Al | Mode::Compare) {
        let (s, rows, budget) = run_al_seed(cfg, target, seed, root)?;
        al_budget = Some(budget);
        runs.push(s);
        curves.insert(RunKind::Al, rows);
    }
    if matches!(cfg.mode, Mode::Baseline | Mode::Compare) {
        let budget = al_budget.unwrap_or_else(|| standalone_budget(cfg));
        let (s, rows) = run_baseline_seed(cfg, target, seed, &budget, root)?;
        if let Some(al) = runs.first() {
            if al.n_tot != s.n_tot || al.n_config != s.n_config {
                return Err(Error::BudgetParity(format!(
                    "seed {seed}: AL used {} samples in {} configs, baseline {} in {}",
                    al.n_tot, al.n_config, s.n_tot, s.n_config
                )));
            }
        }
        runs.push(s);
        curves.insert(RunKind::Baseline, rows);
    }
    Ok(SeedOutput { runs, curves })
}

fn sweep_points(cfg: &ExperimentConfig, target: &PreparedTarget, spec: &SweepSpec, root: &Path) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let budget = spec.budget(value)?;
        let point_root = root.join("sweep").join(format!("value-{value}"));
        let per_seed: Vec<Result<f64>> = cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let (s, _) = run_baseline_seed(cfg, target, seed, &budget, &point_root)?;
                s.rescaled_fidelity
                    .map(|f| f.mean)
                    .ok_or_else(|| Error::Config("sweeps need a target state for fidelities".into()))
            })
            .collect();
        let means = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
        let s = Stats::of(&means).expect("seeds nonempty");
        points.push(SweepPoint {
            value,
            n_tot: budget.n_tot(),
            n_config: budget.n_config(),
            mean: s.mean,
            std: s.std,
            sem: s.sem(),
        });
    }
    Ok(points)
}

fn sweep_csv(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let name = match axis {
        SweepAxis::NSamples => "n_samples",
        SweepAxis::NConfigs => "n_configs",
    };
    let mut out = format!("{name},n_tot,n_config,mean_rescaled_fidelity,std,sem\n");
    for p in points {
        out.push_str(&format!("{},{},{},{},{},{}\n", p.value, p.n_tot, p.n_config, p.mean, p.std, p.sem));
    }
    out
}

fn summarize(mode: Mode, runs: Vec<RunSummary>) -> Summary {
    let mut agg = BTreeMap::new();
    for kind in [RunKind::Al, RunKind::Baseline] {
        let of_kind: Vec<&RunSummary> = runs.iter().filter(|r| r.kind == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        let mut m = BTreeMap::new();
        let metrics: [(&str, fn(&RunSummary) -> Option<Stats>); 4] = [
            ("rescaled_fidelity", |r| r.rescaled_fidelity),
            ("kl", |r| r.kl),
            ("density_error", |r| r.density_error),
            ("greens_error", |r| r.greens_error),
        ];
        for (name, pick) in metrics {
            if let Some(a) = aggregate(&of_kind, pick) {
                m.insert(name.to_string(), a);
            }
        }
        let n_tot: Vec<f64> = of_kind.iter().map(|r| r.n_tot as f64).collect();
        if let Some(s) = Stats::of(&n_tot) {
            m.insert(
                "n_tot".into(),
                Aggregate {
                    mean: s.mean,
                    sem: s.sem(),
                    median: median(&n_tot).unwrap_or(s.mean),
                    n: s.n,
                },
            );
        }
        agg.insert(kind, m);
    }
    let deciding = match mode {
        Mode::Al | Mode::Compare => RunKind::Al,
        Mode::Baseline => RunKind::Baseline,
        Mode::Sweep => RunKind::Baseline,
    };
    let all_met = runs.iter().filter(|r| r.kind == deciding).all(|r| r.stop_met);
    Summary {
        mode,
        runs,
        aggregate: agg,
        exit_code: if mode == Mode::Sweep || all_met { EXIT_STOP_MET } else { EXIT_QUERY_CAP },
    }
}

/// Executes the configured mode for every seed and writes the run directory.
/// On failure the manifest is rewritten with status `aborted`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let root = cfg.output_dir.clone();
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        status: RunStatus::Running,
        error: None,
        config: cfg.clone(),
        conventions: conventions(),
        num_qubits: 0,
        ground_state: None,
    };
    let result = PreparedTarget::build(cfg).and_then(|target| {
        manifest.num_qubits = target.num_qubits;
        manifest.ground_state = target.ground.clone();
        write_json(&root.join("manifest.json"), &manifest)?;
        execute(cfg, &target, &root)
    });
    match result {
        Ok(report) => {
            manifest.status = RunStatus::Complete;
            write_json(&root.join("manifest.json"), &manifest)?;
            Ok(report)
        }
        Err(e) => {
            manifest.status = RunStatus::Aborted;
            manifest.error = Some(e.to_string());
            write_json(&root.join("manifest.json"), &manifest)?;
            Err(e)
        }
    }
}

fn execute(cfg: &ExperimentConfig, target: &PreparedTarget, root: &Path) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    if cfg.mode == Mode::Sweep {
        let spec = cfg.sweep.as_ref().expect("validated");
        let points = pool.install(|| sweep_points(cfg, target, spec, root))?;
        write_text(&root.join("sweep.csv"), &sweep_csv(spec.axis, &points))?;
        let summary = summarize(cfg.mode, Vec::new());
        write_json(&root.join("summary.json"), &summary)?;
        return Ok(RunReport {
            dir: root.to_path_buf(),
            summary,
            sweep: points,
        });
    }
    let outputs: Vec<Result<SeedOutput>> =
        pool.install(|| cfg.seeds.par_iter().map(|&seed| run_seed(cfg, target, seed, root)).collect());
    let mut runs = Vec::new();
    let mut curves: BTreeMap<RunKind, Vec<CurveRow>> = BTreeMap::new();
    for out in outputs {
        let out = out?;
        runs.extend(out.runs);
        for (k, rows) in out.curves {
            curves.entry(k).or_default().extend(rows);
        }
    }
    for (kind, mut rows) in curves {
        write_text(&root.join(kind.dir()).join("learning_curve.csv"), &curve_csv(&mut rows))?;
    }
    let summary = summarize(cfg.mode, runs);
    write_json(&root.join("summary.json"), &summary)?;
    Ok(RunReport {
        dir: root.to_path_buf(),
        summary,
        sweep: Vec::new(),
    })
}
