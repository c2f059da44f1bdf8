//! Where snapshots come from: a simulator sampling a known state, or a
//! recorded snapshot file replayed without repetition.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quantum::{born_sample, BasisConfig, GateFamily, Snapshot, SnapshotPool, StateVector};

pub trait MeasurementSource {
    fn num_qubits(&self) -> usize;

    /// Draws `n` fresh snapshots in `config`.
    fn measure(&mut self, config: &BasisConfig, n: usize) -> Result<Vec<Snapshot>>;

    /// The exact target state, when known.
    fn target(&self) -> Option<&StateVector>;
}

/// Born-rule sampling from a dense target state.
#[derive(Clone, Debug)]
pub struct SimulatorSource {
    state: StateVector,
    family: GateFamily,
    rng: ChaCha8Rng,
}

impl SimulatorSource {
    pub fn new(state: StateVector, family: GateFamily, seed: u64) -> Self {
        SimulatorSource {
            state,
            family,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl MeasurementSource for SimulatorSource {
    fn num_qubits(&self) -> usize {
        self.state.num_qubits()
    }

    fn measure(&mut self, config: &BasisConfig, n: usize) -> Result<Vec<Snapshot>> {
        born_sample(&self.state, config, n, self.family, &mut self.rng)
    }

    fn target(&self) -> Option<&StateVector> {
        Some(&self.state)
    }
}

/// Serves recorded snapshots per configuration in file order, each at most once.
#[derive(Clone, Debug)]
pub struct ReplaySource {
    num_qubits: usize,
    queues: BTreeMap<BasisConfig, VecDeque<usize>>,
    target: Option<StateVector>,
}

impl ReplaySource {
    pub fn new(pool: SnapshotPool) -> Self {
        let num_qubits = pool.num_qubits();
        let mut queues: BTreeMap<BasisConfig, VecDeque<usize>> = BTreeMap::new();
        for s in pool.snapshots() {
            queues.entry(s.config.clone()).or_default().push_back(s.outcome);
        }
        ReplaySource {
            num_qubits,
            queues,
            target: None,
        }
    }

    /// Attaches a known target for diagnostics only.
    pub fn with_target(mut self, target: StateVector) -> Result<Self> {
        if target.num_qubits() != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                actual: target.num_qubits(),
            });
        }
        self.target = Some(target);
        Ok(self)
    }

    pub fn remaining(&self, config: &BasisConfig) -> usize {
        self.queues.get(config).map_or(0, VecDeque::len)
    }
}

impl MeasurementSource for ReplaySource {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    fn measure(&mut self, config: &BasisConfig, n: usize) -> Result<Vec<Snapshot>> {
        if config.len() != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                actual: config.len(),
            });
        }
        let available = self.remaining(config);
        if available < n {
            return Err(Error::SourceExhausted {
                config: config.to_string(),
                requested: n,
                available,
            });
        }
        let queue = self.queues.get_mut(config).expect("checked above");
        Ok(queue
            .drain(..n)
            .map(|outcome| Snapshot {
                config: config.clone(),
                outcome,
            })
            .collect())
    }

    fn target(&self) -> Option<&StateVector> {
        self.target.as_ref()
    }
}
