//! Dense actor-critic network with a shared tanh trunk, a categorical policy
//! head and a scalar value head. All parameters live in one flat vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>, actions: usize) -> Self {
        Self {
            input,
            hidden,
            actions,
        }
    }

    /// Trunk layers as `(fan_in, fan_out)`.
    fn trunk(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut prev = self.input;
        self.hidden.iter().map(move |&h| {
            let l = (prev, h);
            prev = h;
            l
        })
    }

    fn last_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    pub fn param_count(&self) -> usize {
        let trunk: usize = self.trunk().map(|(i, o)| i * o + o).sum();
        let h = self.last_width();
        trunk + self.actions * h + self.actions + h + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Expert,
    Learner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights {
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub role: Role,
}

/// Forward-pass result with the activations kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub value: f64,
    /// activations[0] is the input; activations[l + 1] the output of trunk layer l.
    activations: Vec<Vec<f64>>,
}

impl Forward {
    pub fn argmax(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl PolicyWeights {
    pub fn from_params(arch: Architecture, params: Vec<f64>, role: Role) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::Config(format!(
                "parameter count {} does not match architecture ({})",
                params.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, params, role })
    }

    pub fn zeros(arch: Architecture, role: Role) -> Self {
        let params = vec![0.0; arch.param_count()];
        Self { arch, params, role }
    }

    /// Glorot-uniform trunk, near-zero policy head (almost uniform initial
    /// policy), unit-scale value head; biases zero.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, role: Role, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(arch.param_count());
        let mut layer = |params: &mut Vec<f64>, fan_in: usize, fan_out: usize, gain: f64| {
            let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-limit..limit));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        };
        for (i, o) in arch.trunk() {
            layer(&mut params, i, o, 1.0);
        }
        let h = arch.last_width();
        layer(&mut params, h, arch.actions, 0.01);
        layer(&mut params, h, 1, 1.0);
        debug_assert_eq!(params.len(), arch.param_count());
        Self { arch, params, role }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn forward(&self, state: &[f64]) -> Result<Forward> {
        if state.len() != self.arch.input {
            return Err(Error::Config(format!(
                "state length {} does not match network input {}",
                state.len(),
                self.arch.input
            )));
        }
        let p = &self.params;
        let mut off = 0;
        let mut activations = Vec::with_capacity(self.arch.hidden.len() + 1);
        activations.push(state.to_vec());
        for (fan_in, fan_out) in self.arch.trunk() {
            let x = activations.last().expect("input pushed");
            let w = &p[off..off + fan_in * fan_out];
            let b = &p[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let y: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let row = &w[j * fan_in..(j + 1) * fan_in];
                    (b[j] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()).tanh()
                })
                .collect();
            off += fan_in * fan_out + fan_out;
            activations.push(y);
        }
        let h = activations.last().expect("non-empty");
        let width = h.len();
        let n = self.arch.actions;
        let wp = &p[off..off + n * width];
        let bp = &p[off + n * width..off + n * width + n];
        off += n * width + n;
        let logits: Vec<f64> = (0..n)
            .map(|a| bp[a] + wp[a * width..(a + 1) * width].iter().zip(h).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        let wv = &p[off..off + width];
        let value = p[off + width] + wv.iter().zip(h).map(|(w, x)| w * x).sum::<f64>();

        if logits.iter().any(|z| !z.is_finite()) || !value.is_finite() {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        let probs = softmax(&logits);
        Ok(Forward {
            logits,
            probs,
            value,
            activations,
        })
    }

    /// Accumulates `d loss / d params` into `grad` given the loss gradient
    /// with respect to the logits and the value output of one forward pass.
    pub fn backward(&self, fwd: &Forward, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        let p = &self.params;
        let layers: Vec<(usize, usize)> = self.arch.trunk().collect();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut off = 0;
        for &(i, o) in &layers {
            offsets.push(off);
            off += i * o + o;
        }
        let h = fwd.activations.last().expect("non-empty");
        let width = h.len();
        let n = self.arch.actions;

        // heads
        let mut dh = vec![0.0; width];
        for a in 0..n {
            let g = dlogits[a];
            if g == 0.0 {
                continue;
            }
            let row = off + a * width;
            for k in 0..width {
                grad[row + k] += g * h[k];
                dh[k] += g * p[row + k];
            }
            grad[off + n * width + a] += g;
        }
        let voff = off + n * width + n;
        for k in 0..width {
            grad[voff + k] += dvalue * h[k];
            dh[k] += dvalue * p[voff + k];
        }
        grad[voff + width] += dvalue;

        // trunk, last layer first
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate().rev() {
            let y = &fwd.activations[l + 1];
            let x = &fwd.activations[l];
            let base = offsets[l];
            let mut dx = vec![0.0; fan_in];
            for j in 0..fan_out {
                let dz = dh[j] * (1.0 - y[j] * y[j]);
                if dz == 0.0 {
                    continue;
                }
                let row = base + j * fan_in;
                for i in 0..fan_in {
                    grad[row + i] += dz * x[i];
                    dx[i] += dz * p[row + i];
                }
                grad[base + fan_in * fan_out + j] += dz;
            }
            dh = dx;
        }
    }
}
