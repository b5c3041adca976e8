//! Minimal fully-connected network with backpropagation and an
//! adaptive-moment optimizer, sized for the Q-function of this task:
//! linear → ReLU → linear. Parameters are 64-bit floats throughout.
//!
//! The output layer is linear (not rectified) so the network can represent
//! the task's negative action values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::env::Workspace;
use crate::kinematics::Point2;
use crate::{Error, Result};

/// A two-layer perceptron with a rectified hidden layer.
///
/// Weight layout is row-major by output neuron: `w1[h * input_dim + i]`,
/// `w2[o * hidden_dim + h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Mlp {
    /// Fresh network: He-style uniform init for the hidden layer, small
    /// uniform weights on the output layer so early value estimates start
    /// near zero. Identical seeds give bit-identical parameters.
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(input_dim > 0 && hidden_dim > 0 && output_dim > 0);
        let limit = (6.0 / input_dim as f64).sqrt();
        let w1 = (0..hidden_dim * input_dim).map(|_| rng.gen_range(-limit..limit)).collect();
        let w2 = (0..output_dim * hidden_dim).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; output_dim],
        }
    }

    pub fn from_seed(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(input_dim, hidden_dim, output_dim, &mut rng)
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.input_dim == other.input_dim
            && self.hidden_dim == other.hidden_dim
            && self.output_dim == other.output_dim
    }

    /// Forward pass writing the rectified hidden activations and the output
    /// into caller-provided buffers (resized as needed).
    pub fn forward_into(&self, input: &[f64], hidden: &mut Vec<f64>, output: &mut Vec<f64>) {
        assert_eq!(input.len(), self.input_dim);
        hidden.resize(self.hidden_dim, 0.0);
        output.resize(self.output_dim, 0.0);
        for h in 0..self.hidden_dim {
            let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
            let pre: f64 = self.b1[h] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            hidden[h] = pre.max(0.0);
        }
        for o in 0..self.output_dim {
            let row = &self.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            output[o] = self.b2[o] + row.iter().zip(hidden.iter()).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut hidden = Vec::new();
        let mut output = Vec::new();
        self.forward_into(input, &mut hidden, &mut output);
        output
    }

    /// Backpropagates `d_output` (gradient of the loss w.r.t. the network
    /// output) through the cached activations of one sample, accumulating
    /// into `grads`.
    pub fn backward_into(&self, input: &[f64], hidden: &[f64], d_output: &[f64], grads: &mut Gradients) {
        debug_assert_eq!(hidden.len(), self.hidden_dim);
        debug_assert_eq!(d_output.len(), self.output_dim);
        let mut d_hidden = vec![0.0; self.hidden_dim];
        for o in 0..self.output_dim {
            let g = d_output[o];
            if g == 0.0 {
                continue;
            }
            grads.b2[o] += g;
            let row = &self.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            let grow = &mut grads.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            for h in 0..self.hidden_dim {
                grow[h] += g * hidden[h];
                d_hidden[h] += g * row[h];
            }
        }
        for h in 0..self.hidden_dim {
            // ReLU gate: units that were clamped pass no gradient.
            if hidden[h] <= 0.0 || d_hidden[h] == 0.0 {
                continue;
            }
            let g = d_hidden[h];
            grads.b1[h] += g;
            let grow = &mut grads.w1[h * self.input_dim..(h + 1) * self.input_dim];
            for i in 0..self.input_dim {
                grow[i] += g * input[i];
            }
        }
    }

    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        let file = Checkpoint { version: CHECKPOINT_VERSION, meta: meta.clone(), net: self.clone() };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Mlp, CheckpointMeta)> {
        let bytes = std::fs::read(path)?;
        let file: Checkpoint = serde_json::from_slice(&bytes)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", file.version)));
        }
        let n = &file.net;
        if n.w1.len() != n.hidden_dim * n.input_dim
            || n.w2.len() != n.output_dim * n.hidden_dim
            || n.b1.len() != n.hidden_dim
            || n.b2.len() != n.output_dim
        {
            return Err(Error::Checkpoint("parameter array sizes do not match dims".into()));
        }
        Ok((file.net, file.meta))
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Provenance stored alongside network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub hyperparameters: crate::agents::Hyperparameters,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    meta: CheckpointMeta,
    net: Mlp,
}

/// Parameter gradients with the same layout as [`Mlp`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            w1: vec![0.0; net.w1.len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.len()],
            b2: vec![0.0; net.b2.len()],
        }
    }

    pub fn clear(&mut self) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Adaptive-moment gradient descent with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let n = net.w1.len() + net.b1.len() + net.w2.len() + net.b2.len();
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// One update over all parameters.
    pub fn optimize_step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, b1, b2, eps) = (self.learning_rate, self.beta1, self.beta2, self.eps);
        let mut k = 0usize;
        let mut apply = |params: &mut [f64], gs: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (p, &g) in params.iter_mut().zip(gs) {
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
                k += 1;
            }
        };
        apply(&mut net.w1, &grads.w1, &mut self.m, &mut self.v);
        apply(&mut net.b1, &grads.b1, &mut self.m, &mut self.v);
        apply(&mut net.w2, &grads.w2, &mut self.m, &mut self.v);
        apply(&mut net.b2, &grads.b2, &mut self.m, &mut self.v);
    }
}

/// Blends online parameters into the target network:
/// `θ_t ← τ·θ_o + (1−τ)·θ_t`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::ArchitectureMismatch(format!(
            "target {}x{}x{} vs online {}x{}x{}",
            target.input_dim, target.hidden_dim, target.output_dim,
            online.input_dim, online.hidden_dim, online.output_dim
        )));
    }
    let blend = |t: &mut Vec<f64>, o: &Vec<f64>| {
        for (t, &o) in t.iter_mut().zip(o) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    };
    blend(&mut target.w1, &online.w1);
    blend(&mut target.b1, &online.b1);
    blend(&mut target.w2, &online.w2);
    blend(&mut target.b2, &online.b2);
    Ok(())
}

/// Maps a lift-area-local object position onto `[-1, 1]²`.
pub fn normalize_state(obj: Point2, ws: &Workspace) -> [f64; 2] {
    [obj.x / ws.width * 2.0 - 1.0, obj.z / ws.height * 2.0 - 1.0]
}
