//! Value-based agents: ε-greedy selection over the shaped action set,
//! tabular Q-Learning updates, and the DQN update with replay memory and a
//! soft-updated target network.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nnet::{soft_update, Adam, CheckpointMeta, Gradients, Mlp};
use crate::{Error, Result};

/// DQN hyperparameters (the grid-search axes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_decay_episodes: usize,
    pub soft_update_rate: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
}

impl Hyperparameters {
    /// The best-performing configuration from the search.
    pub fn champion() -> Self {
        Self {
            learning_rate: 1e-3,
            discount: 0.999,
            epsilon_decay_episodes: 1500,
            soft_update_rate: 1e-3,
            buffer_size: 5000,
            batch_size: 64,
            hidden_dim: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.discount >= 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidConfig(format!("discount must be in [0, 1], got {}", self.discount)));
        }
        if !(self.soft_update_rate > 0.0 && self.soft_update_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!("soft_update_rate must be in (0, 1], got {}", self.soft_update_rate)));
        }
        for (name, v) in [
            ("epsilon_decay_episodes", self.epsilon_decay_episodes),
            ("buffer_size", self.buffer_size),
            ("batch_size", self.batch_size),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.batch_size > self.buffer_size {
            return Err(Error::InvalidConfig("batch_size cannot exceed buffer_size".into()));
        }
        Ok(())
    }
}

/// Tabular-agent parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlParams {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_decay_episodes: usize,
}

impl Default for QlParams {
    fn default() -> Self {
        // A near-undiscounted objective keeps the greedy policy aligned with
        // the episode return the reports measure; the high learning rate is
        // safe in a deterministic task and settles the policy quickly.
        Self { learning_rate: 0.3, discount: 0.99, epsilon_decay_episodes: 150 }
    }
}

/// Linear exploration schedule from 1 to 0 over `decay_episodes`.
pub fn epsilon(episode: usize, decay_episodes: usize) -> f64 {
    if decay_episodes == 0 {
        return 0.0;
    }
    (1.0 - episode as f64 / decay_episodes as f64).max(0.0)
}

/// ε-greedy selection restricted to the shaped set. With probability `eps`
/// a uniform shaped action is taken; otherwise the shaped argmax, ties
/// broken uniformly at random. Panics on an empty shaped set: the
/// environment must have terminated the episode first.
pub fn select_action<R: Rng>(values: &[f64], shaped: &[usize], eps: f64, rng: &mut R) -> usize {
    assert!(!shaped.is_empty(), "select_action called with an empty shaped set");
    if eps > 0.0 && rng.gen::<f64>() < eps {
        return shaped[rng.gen_range(0..shaped.len())];
    }
    let best = shaped.iter().map(|&a| values[a]).fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = shaped.iter().copied().filter(|&a| values[a] == best).collect();
    ties[rng.gen_range(0..ties.len())]
}

/// Largest value among unmasked next-state actions, if any.
pub fn masked_max(values: &[f64], mask: u64) -> Option<f64> {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1u64 << i) != 0)
        .map(|(_, &v)| v)
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

pub fn mask_from_shaped(shaped: &[usize]) -> u64 {
    shaped.iter().fold(0u64, |m, &a| m | (1u64 << a))
}

// ---------------------------------------------------------------------------
// Tabular Q-Learning
// ---------------------------------------------------------------------------

/// Action-value table over grid cells; unseen states read as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_actions: usize,
    entries: BTreeMap<(u8, u8), Vec<f64>>,
}

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        Self { n_actions, entries: BTreeMap::new() }
    }

    pub fn value(&self, cell: (u8, u8), action: usize) -> f64 {
        self.entries.get(&cell).map_or(0.0, |v| v[action])
    }

    pub fn action_values(&self, cell: (u8, u8)) -> Vec<f64> {
        self.entries.get(&cell).cloned().unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    pub fn states(&self) -> usize {
        self.entries.len()
    }

    fn row_mut(&mut self, cell: (u8, u8)) -> &mut Vec<f64> {
        let n = self.n_actions;
        self.entries.entry(cell).or_insert_with(|| vec![0.0; n])
    }
}

/// One tabular backup:
/// `Q(s,a) += lr · (r + γ·max_{a'∈shaped} Q(s',a') − Q(s,a))`,
/// with a zero bootstrap on terminal transitions.
#[allow(clippy::too_many_arguments)]
pub fn ql_update(
    table: &mut QTable,
    s: (u8, u8),
    action: usize,
    reward: f64,
    s_next: (u8, u8),
    shaped_next: &[usize],
    done: bool,
    lr: f64,
    gamma: f64,
) {
    let bootstrap = if done || shaped_next.is_empty() {
        0.0
    } else {
        shaped_next.iter().map(|&a| table.value(s_next, a)).fold(f64::NEG_INFINITY, f64::max)
    };
    let q = table.value(s, action);
    table.row_mut(s)[action] = q + lr * (reward + gamma * bootstrap - q);
}

#[derive(Serialize, Deserialize)]
struct QTableCheckpoint {
    version: u32,
    params: QlParams,
    seed: u64,
    n_actions: usize,
    entries: Vec<(u8, u8, Vec<f64>)>,
}

impl QTable {
    pub fn save(&self, path: &Path, params: &QlParams, seed: u64) -> Result<()> {
        let file = QTableCheckpoint {
            version: 1,
            params: *params,
            seed,
            n_actions: self.n_actions,
            entries: self.entries.iter().map(|(&(c, r), v)| (c, r, v.clone())).collect(),
        };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(QTable, QlParams, u64)> {
        let file: QTableCheckpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if file.version != 1 {
            return Err(Error::Checkpoint(format!("unsupported table version {}", file.version)));
        }
        let mut table = QTable::new(file.n_actions);
        for (c, r, v) in file.entries {
            if v.len() != file.n_actions {
                return Err(Error::Checkpoint("row width does not match action count".into()));
            }
            table.entries.insert((c, r), v);
        }
        Ok((table, file.params, file.seed))
    }
}

// ---------------------------------------------------------------------------
// Replay memory
// ---------------------------------------------------------------------------

/// One stored interaction. States are normalized to `[-1, 1]²`; the mask
/// records the shaped action set of the next state so bootstrapping never
/// flows through physically infeasible actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: [f64; 2],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; 2],
    pub done: bool,
    pub next_mask: u64,
}

/// Fixed-capacity ring buffer with FIFO eviction.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { capacity, data: Vec::with_capacity(capacity.min(1 << 20)), head: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.data[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    /// Uniform minibatch indices (with replacement).
    pub fn sample_indices<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.data.len())).collect()
    }
}

// ---------------------------------------------------------------------------
// DQN agent
// ---------------------------------------------------------------------------

/// Online/target network pair with replay memory and optimizer state.
pub struct DqnAgent {
    pub hp: Hyperparameters,
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
    pub buffer: ReplayBuffer,
    pub seed: u64,
    hidden_scratch: Vec<f64>,
    out_scratch: Vec<f64>,
}

impl DqnAgent {
    pub fn new(hp: Hyperparameters, seed: u64) -> Result<Self> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Mlp::new(2, hp.hidden_dim, crate::env::DQN_ACTION_COUNT, &mut rng);
        let target = online.clone();
        let optimizer = Adam::new(&online, hp.learning_rate);
        let buffer = ReplayBuffer::new(hp.buffer_size);
        Ok(Self { hp, online, target, optimizer, buffer, seed, hidden_scratch: Vec::new(), out_scratch: Vec::new() })
    }

    /// Online Q-values for a normalized state.
    pub fn q_values(&mut self, state: [f64; 2]) -> Vec<f64> {
        self.online.forward(&state)
    }

    /// One DQN training step: uniform minibatch, masked target bootstrap,
    /// mean-squared error on the chosen-action values, one optimizer step,
    /// then a soft target update. Returns `None` (no-op) while the buffer
    /// holds fewer than `batch_size` transitions.
    pub fn dqn_update<R: Rng>(&mut self, rng: &mut R) -> Option<f64> {
        if self.buffer.len() < self.hp.batch_size {
            return None;
        }
        let batch = self.buffer.sample_indices(rng, self.hp.batch_size);
        let inv_b = 1.0 / self.hp.batch_size as f64;
        let mut grads = Gradients::zeros_like(&self.online);
        let mut d_out = vec![0.0; self.online.output_dim];
        let mut loss = 0.0;

        for &idx in &batch {
            let t = *self.buffer.get(idx);
            let y = if t.done {
                t.reward
            } else {
                self.target.forward_into(&t.next_state, &mut self.hidden_scratch, &mut self.out_scratch);
                let bootstrap = masked_max(&self.out_scratch, t.next_mask).unwrap_or(0.0);
                t.reward + self.hp.discount * bootstrap
            };
            self.online.forward_into(&t.state, &mut self.hidden_scratch, &mut self.out_scratch);
            let diff = self.out_scratch[t.action] - y;
            loss += diff * diff * inv_b;
            d_out.iter_mut().for_each(|g| *g = 0.0);
            d_out[t.action] = 2.0 * diff * inv_b;
            self.online.backward_into(&t.state, &self.hidden_scratch, &d_out, &mut grads);
        }

        self.optimizer.optimize_step(&mut self.online, &grads);
        soft_update(&mut self.target, &self.online, self.hp.soft_update_rate).expect("same architecture");
        Some(loss)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.online.save(path, &CheckpointMeta { seed: self.seed, hyperparameters: self.hp })
    }

    /// Restores an agent for further training or evaluation. The target
    /// network restarts aligned with the online network.
    pub fn load(path: &Path) -> Result<Self> {
        let (online, meta) = Mlp::load(path)?;
        if online.output_dim != crate::env::DQN_ACTION_COUNT || online.input_dim != 2 {
            return Err(Error::ArchitectureMismatch(format!(
                "checkpoint is {}x{}x{}, expected 2x{}x{}",
                online.input_dim,
                online.hidden_dim,
                online.output_dim,
                meta.hyperparameters.hidden_dim,
                crate::env::DQN_ACTION_COUNT
            )));
        }
        if online.hidden_dim != meta.hyperparameters.hidden_dim {
            return Err(Error::ArchitectureMismatch("hidden width differs from stored hyperparameters".into()));
        }
        let optimizer = Adam::new(&online, meta.hyperparameters.learning_rate);
        let buffer = ReplayBuffer::new(meta.hyperparameters.buffer_size);
        Ok(Self {
            hp: meta.hyperparameters,
            target: online.clone(),
            online,
            optimizer,
            buffer,
            seed: meta.seed,
            hidden_scratch: Vec::new(),
            out_scratch: Vec::new(),
        })
    }
}
