//! Dense statevector arithmetic: basis configurations, single-qubit rotation
//! gates, basis changes, Born-rule sampling and overlaps.
//!
//! Bit ordering: qubit 0 is the most significant bit of a basis-state index,
//! so the index of outcome `"01011"` is `0b01011`. The same convention is
//! used by every file format in the crate.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest supported qubit count for dense vectors (2^20 amplitudes, 16 MiB).
pub const MAX_QUBITS: usize = 20;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Value (0 or 1) of `qubit` in basis index `index` of an `n`-qubit register.
#[inline]
pub fn bit_of(index: usize, num_qubits: usize, qubit: usize) -> usize {
    (index >> (num_qubits - 1 - qubit)) & 1
}

/// Bit mask selecting `qubit` in an `n`-qubit basis index.
#[inline]
pub fn qubit_mask(num_qubits: usize, qubit: usize) -> usize {
    1 << (num_qubits - 1 - qubit)
}

pub fn format_bits(index: usize, num_qubits: usize) -> String {
    (0..num_qubits)
        .map(|q| if bit_of(index, num_qubits, q) == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_bits(text: &str) -> Result<usize> {
    if text.is_empty() || text.len() > MAX_QUBITS {
        return Err(Error::InvalidArgument(format!(
            "bitstring length must be in 1..={MAX_QUBITS}, got {:?}",
            text
        )));
    }
    text.chars().try_fold(0usize, |acc, c| match c {
        '0' => Ok(acc << 1),
        '1' => Ok((acc << 1) | 1),
        other => Err(Error::InvalidArgument(format!(
            "invalid bit character {other:?}"
        ))),
    })
}

fn check_qubits(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 {
        return Err(Error::InvalidArgument("qubit count must be >= 1".into()));
    }
    if num_qubits > MAX_QUBITS {
        return Err(Error::Capacity {
            what: "qubits",
            value: num_qubits,
            max: MAX_QUBITS,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn symbol(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Axis> {
        match c {
            'x' => Some(Axis::X),
            'y' => Some(Axis::Y),
            'z' => Some(Axis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (chars.next().and_then(Axis::from_symbol), chars.next()) {
            (Some(axis), None) => Ok(axis),
            _ => Err(Error::InvalidArgument(format!("unknown axis {s:?}"))),
        }
    }
}

/// Per-qubit measurement axes. Ordering is the lexicographic order of the
/// canonical text form (`x < y < z` per position).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BasisConfig(Vec<Axis>);

impl BasisConfig {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        check_qubits(axes.len())?;
        Ok(BasisConfig(axes))
    }

    pub fn uniform(num_qubits: usize, axis: Axis) -> Self {
        BasisConfig(vec![axis; num_qubits])
    }

    /// The three uniform configurations in the fixed order `z…z, x…x, y…y`.
    pub fn uniform_set(num_qubits: usize) -> [BasisConfig; 3] {
        [
            BasisConfig::uniform(num_qubits, Axis::Z),
            BasisConfig::uniform(num_qubits, Axis::X),
            BasisConfig::uniform(num_qubits, Axis::Y),
        ]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.0
    }

    pub fn axis(&self, qubit: usize) -> Axis {
        self.0[qubit]
    }

    pub fn is_uniform(&self, axis: Axis) -> bool {
        self.0.iter().all(|&a| a == axis)
    }

    /// Qubits whose axis differs from `frame`.
    pub fn differing_qubits(&self, frame: &BasisConfig) -> Vec<usize> {
        self.0
            .iter()
            .zip(&frame.0)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(q, _)| q)
            .collect()
    }

    /// Mixed-radix enumeration over `{x, y, z}^n`, in lexicographic order.
    pub fn from_index(num_qubits: usize, mut index: usize) -> Self {
        let mut axes = vec![Axis::X; num_qubits];
        for slot in axes.iter_mut().rev() {
            *slot = Axis::ALL[index % 3];
            index /= 3;
        }
        BasisConfig(axes)
    }
}

impl fmt::Display for BasisConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for axis in &self.0 {
            write!(f, "{}", axis.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for BasisConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .chars()
            .map(|c| {
                Axis::from_symbol(c)
                    .ok_or_else(|| Error::InvalidArgument(format!("invalid axis character {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        BasisConfig::new(axes)
    }
}

impl TryFrom<String> for BasisConfig {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<BasisConfig> for String {
    fn from(value: BasisConfig) -> Self {
        value.to_string()
    }
}

/// One projective measurement outcome tagged with its basis configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Snapshot {
    pub config: BasisConfig,
    /// Outcome as a basis index (qubit 0 = most significant bit).
    pub outcome: usize,
}

impl Snapshot {
    pub fn new(config: BasisConfig, outcome: usize) -> Result<Self> {
        if outcome >> config.len() != 0 {
            return Err(Error::InvalidArgument(format!(
                "outcome {outcome} does not fit in {} bits",
                config.len()
            )));
        }
        Ok(Snapshot { config, outcome })
    }

    pub fn num_qubits(&self) -> usize {
        self.config.len()
    }

    pub fn outcome_string(&self) -> String {
        format_bits(self.outcome, self.config.len())
    }
}

impl fmt::Display for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.config, self.outcome_string())
    }
}

/// The training dataset: snapshots that all share one qubit count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotPool {
    num_qubits: usize,
    snapshots: Vec<Snapshot>,
}

impl SnapshotPool {
    pub fn new(num_qubits: usize) -> Self {
        SnapshotPool {
            num_qubits,
            snapshots: Vec::new(),
        }
    }

    pub fn from_snapshots(num_qubits: usize, snapshots: Vec<Snapshot>) -> Result<Self> {
        let mut pool = SnapshotPool::new(num_qubits);
        pool.extend(snapshots)?;
        Ok(pool)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn push(&mut self, snapshot: Snapshot) -> Result<()> {
        if snapshot.num_qubits() != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                actual: snapshot.num_qubits(),
            });
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn extend(&mut self, snapshots: impl IntoIterator<Item = Snapshot>) -> Result<()> {
        for s in snapshots {
            self.push(s)?;
        }
        Ok(())
    }

    pub fn configs(&self) -> BTreeSet<BasisConfig> {
        self.snapshots.iter().map(|s| s.config.clone()).collect()
    }

    pub fn counts_by_config(&self) -> BTreeMap<BasisConfig, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.snapshots {
            *counts.entry(s.config.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Sub-pool holding only the snapshots measured in `config`.
    pub fn filter_config(&self, config: &BasisConfig) -> SnapshotPool {
        SnapshotPool {
            num_qubits: self.num_qubits,
            snapshots: self
                .snapshots
                .iter()
                .filter(|s| &s.config == config)
                .cloned()
                .collect(),
        }
    }

    /// Text form: header `N <n>`, then one `<config> <outcome>` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("N {}\n", self.num_qubits);
        for s in &self.snapshots {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header.strip_suffix('\r').unwrap_or(header);
        let num_qubits = header
            .strip_prefix("N ")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| (1..=MAX_QUBITS).contains(&n))
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("expected header `N <1..={MAX_QUBITS}>`, got {header:?}"),
            })?;
        let mut pool = SnapshotPool::new(num_qubits);
        for (i, raw) in lines {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let (config, outcome) = line
                .split_once(' ')
                .ok_or_else(|| parse_err(format!("expected `<config> <outcome>`, got {line:?}")))?;
            if config.len() != num_qubits || outcome.len() != num_qubits {
                return Err(parse_err(format!(
                    "expected {num_qubits} axis letters and {num_qubits} bits, got {line:?}"
                )));
            }
            let config: BasisConfig = config.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let outcome = parse_bits(outcome).map_err(|e| parse_err(e.to_string()))?;
            pool.snapshots.push(Snapshot { config, outcome });
        }
        Ok(pool)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SnapshotPool::from_text(&text)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateFamily {
    /// Hadamard for x and `K = (1/√2)[[1,1],[i,−i]]` for y.
    HadamardK,
    /// `R_x = (1/√2)[[i,−i],[1,1]]` and `R_y = (1/√2)[[1,−i],[−i,1]]`.
    Rxy,
}

impl GateFamily {
    pub fn name(self) -> &'static str {
        match self {
            GateFamily::HadamardK => "hadamard_k",
            GateFamily::Rxy => "rxy",
        }
    }
}

impl fmt::Display for GateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard_k" => Ok(GateFamily::HadamardK),
            "rxy" => Ok(GateFamily::Rxy),
            other => Err(Error::InvalidArgument(format!("unknown gate family {other:?}"))),
        }
    }
}

pub type Mat2 = [[C64; 2]; 2];

pub const IDENTITY: Mat2 = [[ONE, ZERO], [ZERO, ONE]];

/// Single-qubit basis change applied to the ket before a computational-basis
/// readout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationGate {
    pub axis: Axis,
    pub matrix: Mat2,
}

impl RotationGate {
    pub fn new(axis: Axis, family: GateFamily) -> Self {
        let s = FRAC_1_SQRT_2;
        let r = |x: f64| C64::new(x * s, 0.0);
        let i = |x: f64| C64::new(0.0, x * s);
        let matrix = match (axis, family) {
            (Axis::Z, _) => IDENTITY,
            (Axis::X, GateFamily::HadamardK) => [[r(1.0), r(1.0)], [r(1.0), r(-1.0)]],
            (Axis::Y, GateFamily::HadamardK) => [[r(1.0), r(1.0)], [i(1.0), i(-1.0)]],
            (Axis::X, GateFamily::Rxy) => [[i(1.0), i(-1.0)], [r(1.0), r(1.0)]],
            (Axis::Y, GateFamily::Rxy) => [[r(1.0), i(-1.0)], [i(-1.0), r(1.0)]],
        };
        RotationGate { axis, matrix }
    }

    /// Gate lookup by textual axis and family names.
    pub fn from_names(axis: &str, family: &str) -> Result<Self> {
        Ok(RotationGate::new(axis.parse()?, family.parse()?))
    }

    /// Max-norm distance of `U†U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let product = mat_mul(&adjoint(&self.matrix), &self.matrix);
        let mut err: f64 = 0.0;
        for (r, row) in product.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let expected = if r == c { ONE } else { ZERO };
                err = err.max((v - expected).norm());
            }
        }
        err
    }
}

pub fn adjoint(m: &Mat2) -> Mat2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

/// Gate taking a state expressed in the `frame` axis to the `target` axis:
/// `U_target · U_frame†`. `None` when the axes agree.
pub fn relative_gate(target: Axis, frame: Axis, family: GateFamily) -> Option<Mat2> {
    if target == frame {
        return None;
    }
    let t = RotationGate::new(target, family).matrix;
    let f = RotationGate::new(frame, family).matrix;
    Some(mat_mul(&t, &adjoint(&f)))
}

/// Applies a 2×2 matrix to one qubit of a dense amplitude vector in place.
pub fn apply_single_qubit(amps: &mut [C64], num_qubits: usize, qubit: usize, m: &Mat2) {
    let mask = qubit_mask(num_qubits, qubit);
    for i0 in 0..amps.len() {
        if i0 & mask != 0 {
            continue;
        }
        let i1 = i0 | mask;
        let (a0, a1) = (amps[i0], amps[i1]);
        amps[i0] = m[0][0] * a0 + m[0][1] * a1;
        amps[i1] = m[1][0] * a0 + m[1][1] * a1;
    }
}

/// Dense normalized complex amplitude vector over `2^N` basis states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(num_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_qubits(num_qubits)?;
        if amplitudes.len() != 1 << num_qubits {
            return Err(Error::DimensionMismatch {
                expected: 1 << num_qubits,
                actual: amplitudes.len(),
            });
        }
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn basis_state(num_qubits: usize, index: usize) -> Result<Self> {
        check_qubits(num_qubits)?;
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        *amplitudes.get_mut(index).ok_or_else(|| {
            Error::InvalidArgument(format!("basis index {index} out of range"))
        })? = ONE;
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn from_fn(num_qubits: usize, f: impl FnMut(usize) -> C64) -> Result<Self> {
        check_qubits(num_qubits)?;
        StateVector::new(num_qubits, (0..1usize << num_qubits).map(f).collect())
    }

    /// Random normalized state with Gaussian-distributed components.
    pub fn random(num_qubits: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut gauss = || -> f64 { rng.sample(StandardNormal) };
        let mut s = StateVector::from_fn(num_qubits, |_| C64::new(gauss(), gauss()))?;
        s.normalize()?;
        Ok(s)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero or non-finite vector".into()));
        }
        let inv = 1.0 / norm;
        self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Little-endian `u64` qubit count followed by interleaved `(re, im)` f64 pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * self.dim());
        out.extend_from_slice(&(self.num_qubits as u64).to_le_bytes());
        for a in &self.amplitudes {
            out.extend_from_slice(&a.re.to_le_bytes());
            out.extend_from_slice(&a.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header: [u8; 8] = bytes
            .get(..8)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| Error::InvalidArgument("state file shorter than its header".into()))?;
        let n = u64::from_le_bytes(header) as usize;
        check_qubits(n)?;
        let body = &bytes[8..];
        if body.len() != 16 << n {
            return Err(Error::DimensionMismatch {
                expected: 16 << n,
                actual: body.len(),
            });
        }
        let amplitudes = body
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        StateVector::new(n, amplitudes)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        StateVector::from_bytes(&bytes)
    }
}

fn check_config(state: &StateVector, config: &BasisConfig) -> Result<()> {
    if config.len() != state.num_qubits() {
        return Err(Error::DimensionMismatch {
            expected: state.num_qubits(),
            actual: config.len(),
        });
    }
    Ok(())
}

/// Re-expresses a state given in the `from` frame in the `to` frame, qubit by
/// qubit. Qubits whose axes agree are untouched.
pub fn change_frame(
    state: &StateVector,
    from: &BasisConfig,
    to: &BasisConfig,
    family: GateFamily,
) -> Result<StateVector> {
    check_config(state, from)?;
    check_config(state, to)?;
    let mut out = state.clone();
    let n = state.num_qubits();
    for q in 0..n {
        if let Some(m) = relative_gate(to.axis(q), from.axis(q), family) {
            apply_single_qubit(&mut out.amplitudes, n, q, &m);
        }
    }
    Ok(out)
}

/// `(⊗_j U_{config_j}) |state⟩`.
pub fn rotate_state(state: &StateVector, config: &BasisConfig, family: GateFamily) -> Result<StateVector> {
    change_frame(state, &BasisConfig::uniform(state.num_qubits(), Axis::Z), config, family)
}

/// Inverse of [`rotate_state`]: applies `U†` on every rotated qubit.
pub fn unrotate_state(state: &StateVector, config: &BasisConfig, family: GateFamily) -> Result<StateVector> {
    change_frame(state, config, &BasisConfig::uniform(state.num_qubits(), Axis::Z), family)
}

/// Outcome distribution of measuring `state` in `config`.
pub fn born_probabilities(state: &StateVector, config: &BasisConfig, family: GateFamily) -> Result<Vec<f64>> {
    Ok(rotate_state(state, config, family)?.probabilities())
}

pub fn born_sample(
    state: &StateVector,
    config: &BasisConfig,
    n: usize,
    family: GateFamily,
    rng: &mut impl Rng,
) -> Result<Vec<Snapshot>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let probs = born_probabilities(state, config, family)?;
    let dist = WeightedIndex::new(&probs)
        .map_err(|e| Error::InvalidArgument(format!("cannot sample from state: {e}")))?;
    Ok((0..n)
        .map(|_| Snapshot {
            config: config.clone(),
            outcome: dist.sample(rng),
        })
        .collect())
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// `f^(1/N)`.
pub fn rescaled_fidelity(f: f64, num_qubits: usize) -> f64 {
    f.max(0.0).powf(1.0 / num_qubits as f64)
}
