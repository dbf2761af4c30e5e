use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpParams, Mode};
use super::{evaluate, Evaluation};
use crate::error::{Error, Result};

/// A featurized example: a flow series with its class and pairing id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub x: Vec<f64>,
    pub normal: bool,
    pub pair_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_pairs: usize,
    pub steps: usize,
    pub seed: u64,
    pub bn_momentum: f64,
    pub weight_init_scale: f64,
    pub hidden: usize,
    /// Validation cadence in steps.
    pub eval_every: usize,
    /// Draw whole (normal, sped-up) pairs into each batch.
    pub same_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            momentum: 0.9,
            batch_pairs: 16,
            steps: 10_000,
            seed: 0,
            bn_momentum: 0.99,
            weight_init_scale: 1.0,
            hidden: 64,
            eval_every: 100,
            same_batch: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    /// Mean training loss since the previous entry.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the step with the best validation accuracy.
    pub params: MlpParams,
    pub best_step: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<HistoryEntry>,
}

/// Cycles through shuffled units (pairs or single examples) epoch by epoch.
struct BatchStream {
    units: Vec<Vec<usize>>,
    order: Vec<usize>,
    pos: usize,
}

impl BatchStream {
    fn new(data: &[LabeledSeries], same_batch: bool) -> Self {
        let units: Vec<Vec<usize>> = if same_batch {
            let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (i, e) in data.iter().enumerate() {
                groups.entry(e.pair_id).or_default().push(i);
            }
            groups.into_values().collect()
        } else {
            (0..data.len()).map(|i| vec![i]).collect()
        };
        let order = (0..units.len()).collect();
        BatchStream { units, order, pos: usize::MAX }
    }

    fn next(&mut self, n_units: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::new();
        for _ in 0..n_units {
            if self.pos >= self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.extend_from_slice(&self.units[self.order[self.pos]]);
            self.pos += 1;
        }
        out
    }
}

pub fn evaluate_params(params: &MlpParams, data: &[LabeledSeries]) -> Result<Evaluation> {
    let scored = data.iter().map(|e| Ok((params.predict(&e.x)?, e.normal))).collect::<Result<Vec<_>>>()?;
    evaluate(scored)
}

/// Mini-batch SGD with momentum. Deterministic in `cfg.seed`; returns the
/// parameters with the best validation accuracy (earliest on ties).
pub fn train(cfg: &TrainConfig, train_set: &[LabeledSeries], val_set: &[LabeledSeries]) -> Result<TrainOutcome> {
    train_from(cfg, None, train_set, val_set)
}

/// [`train`] starting from `init` instead of a fresh initialization. The
/// initial parameters must match the series length and `cfg.hidden`.
pub fn train_from(
    cfg: &TrainConfig,
    init: Option<MlpParams>,
    train_set: &[LabeledSeries],
    val_set: &[LabeledSeries],
) -> Result<TrainOutcome> {
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) || cfg.steps == 0 {
        return Err(Error::invalid("learning rate must be finite and >= 0, steps >= 1"));
    }
    if cfg.batch_pairs == 0 || cfg.hidden == 0 || cfg.eval_every == 0 {
        return Err(Error::invalid("batch_pairs, hidden and eval_every must be >= 1"));
    }
    let input_len = train_set.first().map(|e| e.x.len()).ok_or_else(|| Error::invalid("empty training set"))?;
    if val_set.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fresh = MlpParams::init(input_len, cfg.hidden, cfg.weight_init_scale, &mut rng);
    let mut params = match init {
        Some(p) if p.input_len != input_len || p.hidden != cfg.hidden => {
            return Err(Error::Checkpoint(format!(
                "initial parameters are {}x{}, training expects T = {input_len}, H = {}",
                p.input_len, p.hidden, cfg.hidden
            )));
        }
        Some(p) => p,
        None => fresh,
    };
    let mut velocity = vec![0.0; params.n_trainable()];
    let units_per_batch = if cfg.same_batch { cfg.batch_pairs } else { 2 * cfg.batch_pairs };
    let mut stream = BatchStream::new(train_set, cfg.same_batch);

    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut history = Vec::new();
    let mut loss_acc = 0.0;
    let mut loss_n = 0usize;

    for step in 1..=cfg.steps {
        let idx = stream.next(units_per_batch, &mut rng);
        let batch: Vec<&[f64]> = idx.iter().map(|&i| train_set[i].x.as_slice()).collect();
        let labels: Vec<bool> = idx.iter().map(|&i| train_set[i].normal).collect();

        let (loss, grad) = params.grad(&batch, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        params.forward(&batch, Mode::Train, cfg.bn_momentum)?;

        let mut flat = params.trainable_vec();
        for ((w, v), g) in flat.iter_mut().zip(velocity.iter_mut()).zip(grad.flatten()) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *w += *v;
        }
        params.set_trainable(&flat);
        if !params.is_finite() {
            return Err(Error::Diverged { step, loss: f64::NAN });
        }
        loss_acc += loss;
        loss_n += 1;

        if step % cfg.eval_every == 0 || step == cfg.steps {
            let acc = evaluate_params(&params, val_set)?.accuracy;
            history.push(HistoryEntry { step, train_loss: loss_acc / loss_n as f64, val_accuracy: acc });
            loss_acc = 0.0;
            loss_n = 0;
            if acc > best.2 {
                best = (params.clone(), step, acc);
            }
        }
    }
    Ok(TrainOutcome { params: best.0, best_step: best.1, best_val_accuracy: best.2, history })
}
