//! Two-layer perceptron with batch normalization over a flow series:
//! `p = sigmoid(w2 . relu(bn(W1 x + b1)) + b2)`, trained with binary
//! cross-entropy and hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clamp used inside the loss.
pub const PROB_EPS: f64 = 1e-7;
/// Variance floor inside batch normalization.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with the current batch statistics and update running stats.
    Train,
    /// Normalize with running statistics only.
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input_len: usize,
    pub hidden: usize,
    /// `hidden x input_len`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradient of the loss with respect to the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with `p` clamped to `[eps, 1 - eps]`; `true`
/// labels mean normal speed (`y = 1`).
pub fn bce(probs: &[f64], normal: &[bool]) -> f64 {
    let sum: f64 = probs
        .iter()
        .zip(normal)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    sum / probs.len() as f64
}

impl MlpParams {
    pub fn zeros(input_len: usize, hidden: usize) -> Self {
        MlpParams {
            input_len,
            hidden,
            w1: vec![0.0; hidden * input_len],
            b1: vec![0.0; hidden],
            bn_gamma: vec![1.0; hidden],
            bn_beta: vec![0.0; hidden],
            bn_running_mean: vec![0.0; hidden],
            bn_running_var: vec![1.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights scaled by `scale`, zero biases, identity
    /// batch norm.
    pub fn init(input_len: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = MlpParams::zeros(input_len, hidden);
        let a1 = scale * (6.0 / (input_len + hidden) as f64).sqrt();
        let a2 = scale * (6.0 / (hidden + 1) as f64).sqrt();
        for w in &mut p.w1 {
            *w = rng.gen_range(-a1..=a1);
        }
        for w in &mut p.w2 {
            *w = rng.gen_range(-a2..=a2);
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().all(f64::is_finite)
            && self.bn_running_mean.iter().chain(&self.bn_running_var).all(|v| v.is_finite())
    }

    fn trainable(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.bn_gamma)
            .chain(&self.bn_beta)
            .chain(&self.w2)
            .copied()
            .chain(std::iter::once(self.b2))
    }

    /// Number of trainable scalars.
    pub fn n_trainable(&self) -> usize {
        self.w1.len() + 3 * self.hidden + self.w2.len() + 1
    }

    /// Flat view of the trainable parameters, in a fixed order shared with
    /// [`MlpGrad::flatten`] and [`MlpParams::set_trainable`].
    pub fn trainable_vec(&self) -> Vec<f64> {
        self.trainable().collect()
    }

    pub fn set_trainable(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_trainable());
        let mut it = flat.iter().copied();
        for slot in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.bn_gamma.iter_mut())
            .chain(self.bn_beta.iter_mut())
            .chain(self.w2.iter_mut())
        {
            *slot = it.next().unwrap();
        }
        self.b2 = it.next().unwrap();
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len {
            return Err(Error::DimensionMismatch {
                expected: format!("series of length {}", self.input_len),
                actual: x.len().to_string(),
            });
        }
        Ok(())
    }

    fn pre_activation(&self, x: &[f64], j: usize) -> f64 {
        let row = &self.w1[j * self.input_len..(j + 1) * self.input_len];
        row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j]
    }

    /// Inference-mode probability of normal speed.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut s = self.b2;
        for j in 0..self.hidden {
            let z = self.pre_activation(x, j);
            let zh = (z - self.bn_running_mean[j]) / (self.bn_running_var[j] + BN_EPS).sqrt();
            let y = self.bn_gamma[j] * zh + self.bn_beta[j];
            s += self.w2[j] * y.max(0.0);
        }
        Ok(sigmoid(s))
    }

    /// Batch forward pass. In train mode the batch statistics are used and
    /// the running statistics updated with momentum `bn_momentum`.
    pub fn forward(&mut self, batch: &[&[f64]], mode: Mode, bn_momentum: f64) -> Result<Vec<f64>> {
        match mode {
            Mode::Infer => batch.iter().map(|x| self.predict(x)).collect(),
            Mode::Train => {
                let cache = self.forward_train(batch)?;
                self.update_running_stats(&cache, bn_momentum);
                Ok(cache.p)
            }
        }
    }

    fn update_running_stats(&mut self, cache: &TrainCache, momentum: f64) {
        let b = cache.p.len() as f64;
        let unbias = if b > 1.0 { b / (b - 1.0) } else { 1.0 };
        for j in 0..self.hidden {
            self.bn_running_mean[j] = momentum * self.bn_running_mean[j] + (1.0 - momentum) * cache.mean[j];
            self.bn_running_var[j] = momentum * self.bn_running_var[j] + (1.0 - momentum) * cache.var[j] * unbias;
        }
    }

    fn forward_train(&self, batch: &[&[f64]]) -> Result<TrainCache> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for x in batch {
            self.check_input(x)?;
        }
        let (n, h) = (batch.len(), self.hidden);
        let nf = n as f64;
        let mut z = vec![0.0; n * h];
        for (i, x) in batch.iter().enumerate() {
            for j in 0..h {
                z[i * h + j] = self.pre_activation(x, j);
            }
        }
        let mut mean = vec![0.0; h];
        let mut var = vec![0.0; h];
        for j in 0..h {
            mean[j] = (0..n).map(|i| z[i * h + j]).sum::<f64>() / nf;
            var[j] = (0..n).map(|i| (z[i * h + j] - mean[j]).powi(2)).sum::<f64>() / nf;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut zhat = vec![0.0; n * h];
        let mut act = vec![0.0; n * h];
        let mut p = vec![0.0; n];
        for i in 0..n {
            let mut s = self.b2;
            for j in 0..h {
                let k = i * h + j;
                zhat[k] = (z[k] - mean[j]) * inv_std[j];
                let y = self.bn_gamma[j] * zhat[k] + self.bn_beta[j];
                act[k] = y;
                s += self.w2[j] * y.max(0.0);
            }
            p[i] = sigmoid(s);
        }
        Ok(TrainCache { mean, var, inv_std, zhat, act, p })
    }

    /// Train-mode loss (batch statistics), leaving running stats untouched.
    pub fn loss(&self, batch: &[&[f64]], normal: &[bool]) -> Result<f64> {
        Ok(bce(&self.forward_train(batch)?.p, normal))
    }

    /// Exact gradient of the train-mode loss, including the dependence of
    /// the batch statistics on every example.
    pub fn grad(&self, batch: &[&[f64]], normal: &[bool]) -> Result<(f64, MlpGrad)> {
        let cache = self.forward_train(batch)?;
        Ok((bce(&cache.p, normal), self.backward(batch, normal, &cache)))
    }

    fn backward(&self, batch: &[&[f64]], normal: &[bool], c: &TrainCache) -> MlpGrad {
        let (n, h, t) = (batch.len(), self.hidden, self.input_len);
        let nf = n as f64;
        let mut g = MlpGrad {
            w1: vec![0.0; h * t],
            b1: vec![0.0; h],
            bn_gamma: vec![0.0; h],
            bn_beta: vec![0.0; h],
            w2: vec![0.0; h],
            b2: 0.0,
        };
        // d loss / d logit; zero where the probability clamp is active
        let ds: Vec<f64> =
            c.p.iter()
                .zip(normal)
                .map(
                    |(&p, &y)| {
                        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                            0.0
                        } else {
                            (p - if y { 1.0 } else { 0.0 }) / nf
                        }
                    },
                )
                .collect();
        let mut dzhat = vec![0.0; n * h];
        for i in 0..n {
            g.b2 += ds[i];
            for j in 0..h {
                let k = i * h + j;
                let relu = c.act[k].max(0.0);
                g.w2[j] += ds[i] * relu;
                let dy = if c.act[k] > 0.0 { ds[i] * self.w2[j] } else { 0.0 };
                g.bn_gamma[j] += dy * c.zhat[k];
                g.bn_beta[j] += dy;
                dzhat[k] = dy * self.bn_gamma[j];
            }
        }
        for j in 0..h {
            let m1 = (0..n).map(|i| dzhat[i * h + j]).sum::<f64>() / nf;
            let m2 = (0..n).map(|i| dzhat[i * h + j] * c.zhat[i * h + j]).sum::<f64>() / nf;
            for (i, x) in batch.iter().enumerate() {
                let k = i * h + j;
                let dz = c.inv_std[j] * (dzhat[k] - m1 - c.zhat[k] * m2);
                g.b1[j] += dz;
                let row = &mut g.w1[j * t..(j + 1) * t];
                for (w, &v) in row.iter_mut().zip(x.iter()) {
                    *w += dz * v;
                }
            }
        }
        g
    }
}

impl MlpGrad {
    pub fn flatten(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.bn_gamma)
            .chain(&self.bn_beta)
            .chain(&self.w2)
            .copied()
            .chain(std::iter::once(self.b2))
            .collect()
    }
}

struct TrainCache {
    mean: Vec<f64>,
    var: Vec<f64>,
    inv_std: Vec<f64>,
    zhat: Vec<f64>,
    /// Batch-norm output before the ReLU.
    act: Vec<f64>,
    p: Vec<f64>,
}
