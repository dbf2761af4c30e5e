//! Run configuration: one JSON document, every field defaulted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vidspeed::dataset::SceneConfig;
use vidspeed::flow::FlowConfig;
use vidspeed::model::TrainConfig;
use vidspeed::retime::RetimeParams;
use vidspeed::sampler::{BatchMode, SamplerConfig};
use vidspeed::speediness::StackParams;

use crate::error::CliError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "VIDSPEED_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stream (sources, sampling, training) derives from it.
    pub seed: u64,
    pub data: DataConfig,
    pub sampling: SamplingConfig,
    pub flow: FlowConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub speediness: SpeedinessConfig,
    pub retime: RetimeParams,
    pub ablation: Ablation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_sources: usize,
    pub val_sources: usize,
    pub test_sources: usize,
    pub scene: SceneConfig,
    /// Frames per segment of the demo videos.
    pub demo_segment: usize,
    /// Segments in each demo video.
    pub demo_segments: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_sources: 100,
            val_sources: 25,
            test_sources: 25,
            scene: SceneConfig::default(),
            demo_segment: 160,
            demo_segments: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Clip length `T`.
    pub clip_len: usize,
    pub max_redraws: usize,
    /// Pairs drawn from every source when featurizing a split.
    pub pairs_per_source: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { clip_len: 16, max_redraws: 8, pairs_per_source: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_pairs: usize,
    pub steps: usize,
    pub bn_momentum: f64,
    pub weight_init_scale: f64,
    pub hidden: usize,
    pub eval_every: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            batch_pairs: t.batch_pairs,
            steps: t.steps,
            bn_momentum: t.bn_momentum,
            weight_init_scale: t.weight_init_scale,
            hidden: t.hidden,
            eval_every: t.eval_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Resize test clips to this side instead of a random size.
    pub fixed_side: Option<usize>,
    /// Output of the constant baseline row.
    pub constant_p: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { fixed_side: None, constant_p: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedinessConfig {
    pub stack: StackParams,
    /// Threshold for exported curves and slow-motion flags.
    pub rho: f64,
}

impl Default for SpeedinessConfig {
    fn default() -> Self {
        SpeedinessConfig { stack: StackParams::default(), rho: 0.5 }
    }
}

/// The three training toggles of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub spatial_aug: bool,
    pub temporal_aug: bool,
    pub same_batch: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation { spatial_aug: true, temporal_aug: true, same_batch: true }
    }
}

impl Ablation {
    /// All eight combinations, all-on first.
    pub fn grid() -> Vec<Ablation> {
        let mut out = Vec::with_capacity(8);
        for same_batch in [true, false] {
            for temporal_aug in [true, false] {
                for spatial_aug in [true, false] {
                    out.push(Ablation { spatial_aug, temporal_aug, same_batch });
                }
            }
        }
        out
    }

    pub fn mode(&self) -> BatchMode {
        if self.same_batch {
            BatchMode::SameBatch
        } else {
            BatchMode::Independent
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or the file named by [`CONFIG_ENV`] when `path` is
    /// `None`, or falls back to the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text)
            }
            None => Ok(RunConfig::default()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn sampler(&self, ablation: Ablation) -> SamplerConfig {
        SamplerConfig {
            clip_len: self.sampling.clip_len,
            temporal_aug: ablation.temporal_aug,
            spatial_aug: ablation.spatial_aug,
            max_redraws: self.sampling.max_redraws,
        }
    }

    pub fn train_config(&self, ablation: Ablation) -> TrainConfig {
        let m = &self.model;
        TrainConfig {
            learning_rate: m.learning_rate,
            momentum: m.momentum,
            batch_pairs: m.batch_pairs,
            steps: m.steps,
            seed: self.seed,
            bn_momentum: m.bn_momentum,
            weight_init_scale: m.weight_init_scale,
            hidden: m.hidden,
            eval_every: m.eval_every,
            same_batch: ablation.same_batch,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::config(msg));
        if self.sampling.clip_len < 2 || self.sampling.pairs_per_source == 0 {
            return bad("sampling.clip_len must be >= 2 and pairs_per_source >= 1".into());
        }
        if self.data.scene.frames < 3 * self.sampling.clip_len {
            return bad(format!(
                "data.scene.frames ({}) must hold a 3T window of {} frames",
                self.data.scene.frames,
                3 * self.sampling.clip_len
            ));
        }
        if self.data.demo_segment == 0 || self.data.demo_segments == 0 {
            return bad("demo segment length and count must be >= 1".into());
        }
        self.data.scene.validate().map_err(|e| CliError::config(format!("data.scene: {e}")))?;
        if self.flow.block_size == 0 || self.flow.search_radius == 0 {
            return bad("flow.block_size and flow.search_radius must be >= 1".into());
        }
        let m = &self.model;
        if !(m.learning_rate.is_finite() && m.learning_rate >= 0.0) || !(0.0..1.0).contains(&m.momentum) {
            return bad("model.learning_rate must be >= 0 and model.momentum in [0, 1)".into());
        }
        if m.steps == 0 || m.batch_pairs == 0 || m.hidden == 0 || m.eval_every == 0 {
            return bad("model.steps, batch_pairs, hidden and eval_every must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&m.bn_momentum) || !(m.weight_init_scale.is_finite() && m.weight_init_scale > 0.0) {
            return bad("model.bn_momentum must be in [0, 1] and weight_init_scale > 0".into());
        }
        if !(0.0..=1.0).contains(&self.eval.constant_p) {
            return bad("eval.constant_p must be in [0, 1]".into());
        }
        if let Some(side) = self.eval.fixed_side {
            if side < vidspeed::media::MIN_DIM || side < self.flow.block_size {
                return bad(format!("eval.fixed_side {side} is too small"));
            }
        }
        let s = &self.speediness;
        if !(s.rho > 0.0 && s.rho < 1.0) {
            return bad(format!("speediness.rho must be in (0, 1), got {}", s.rho));
        }
        if !(s.stack.base.is_finite() && s.stack.base > 1.0) || s.stack.stride == 0 {
            return bad("speediness.stack.base must exceed 1 and stride must be >= 1".into());
        }
        if s.stack.window != self.sampling.clip_len {
            return bad(format!(
                "speediness.stack.window ({}) must equal sampling.clip_len ({})",
                s.stack.window, self.sampling.clip_len
            ));
        }
        self.retime.validate().map_err(|e| CliError::config(format!("retime: {e}")))?;
        Ok(())
    }
}
