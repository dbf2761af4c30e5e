//! JSON checkpoints with explicit shapes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use crate::error::{Error, Result};
use crate::flow::FlowConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn new(shape: Vec<usize>, data: &[f64]) -> Self {
        Tensor { shape, data: data.to_vec() }
    }

    fn take(self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        if self.shape != shape || self.data.len() != shape.iter().product::<usize>() {
            return Err(Error::Checkpoint(format!(
                "{name}: expected shape {shape:?}, found {:?} with {} values",
                self.shape,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("{name} holds non-finite values")));
        }
        Ok(self.data)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Wire {
    format_version: u32,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "H")]
    h: usize,
    flow: FlowConfig,
    w1: Tensor,
    b1: Tensor,
    bn_gamma: Tensor,
    bn_beta: Tensor,
    bn_running_mean: Tensor,
    bn_running_var: Tensor,
    w2: Tensor,
    b2: f64,
}

/// A trained mean-flow model together with its flow settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub flow: FlowConfig,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let (t, h) = (p.input_len, p.hidden);
        let wire = Wire {
            format_version: CHECKPOINT_VERSION,
            t,
            h,
            flow: self.flow,
            w1: Tensor::new(vec![h, t], &p.w1),
            b1: Tensor::new(vec![h], &p.b1),
            bn_gamma: Tensor::new(vec![h], &p.bn_gamma),
            bn_beta: Tensor::new(vec![h], &p.bn_beta),
            bn_running_mean: Tensor::new(vec![h], &p.bn_running_mean),
            bn_running_var: Tensor::new(vec![h], &p.bn_running_var),
            w2: Tensor::new(vec![h], &p.w2),
            b2: p.b2,
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    /// Parses a checkpoint; with `expected_t` set, refuses a model trained on
    /// a different clip length.
    pub fn from_json(text: &str, expected_t: Option<usize>) -> Result<Self> {
        let w: Wire = serde_json::from_str(text)?;
        if w.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format_version {}", w.format_version)));
        }
        if let Some(t) = expected_t {
            if t != w.t {
                return Err(Error::Checkpoint(format!("checkpoint was trained with T = {}, expected T = {t}", w.t)));
            }
        }
        if w.t == 0 || w.h == 0 || w.t.checked_mul(w.h).is_none() {
            return Err(Error::Checkpoint(format!("degenerate shape T = {}, H = {}", w.t, w.h)));
        }
        if w.flow.block_size == 0 || w.flow.search_radius == 0 {
            return Err(Error::Checkpoint("flow block size and radius must be >= 1".into()));
        }
        let (t, h) = (w.t, w.h);
        let params = MlpParams {
            input_len: t,
            hidden: h,
            w1: w.w1.take("w1", &[h, t])?,
            b1: w.b1.take("b1", &[h])?,
            bn_gamma: w.bn_gamma.take("bn_gamma", &[h])?,
            bn_beta: w.bn_beta.take("bn_beta", &[h])?,
            bn_running_mean: w.bn_running_mean.take("bn_running_mean", &[h])?,
            bn_running_var: w.bn_running_var.take("bn_running_var", &[h])?,
            w2: w.w2.take("w2", &[h])?,
            b2: w.b2,
        };
        if params.bn_running_var.iter().any(|&v| v < 0.0) {
            return Err(Error::Checkpoint("negative running variance".into()));
        }
        if !params.b2.is_finite() {
            return Err(Error::Checkpoint("b2 is not finite".into()));
        }
        Ok(Checkpoint { params, flow: w.flow })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_json()?).map_err(|e| Error::file(path, e))
}

pub fn load_checkpoint(path: &Path, expected_t: Option<usize>) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Checkpoint::from_json(&text, expected_t)
}
