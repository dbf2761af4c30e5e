//! The synthetic benchmark: random scenes rendered on demand from a seed,
//! sampled into training examples and featurized into flow series.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{mean_flow_series, FlowConfig};
use crate::media::{generate_clip, Background, Clip, MotionSpec, ObjectTrack, Path, Shape, SpeedSegment};
use crate::model::LabeledSeries;
use crate::sampler::{resize_clip, BatchMode, Sampler, SamplerConfig, TrainExample};

/// Ranges the random scene generator draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub objects: (usize, usize),
    /// Object diameter / side, px.
    pub object_size: (f64, f64),
    /// Natural object speed, px/frame.
    pub object_speed: (f64, f64),
    /// Background texture motion, px/frame.
    pub drift_speed: (f64, f64),
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 112,
            height: 112,
            frames: 48,
            objects: (2, 4),
            object_size: (12.0, 28.0),
            object_speed: (0.6, 1.6),
            drift_speed: (0.4, 1.2),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.object_size, self.object_speed, self.drift_speed];
        if ranges.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo <= hi)) {
            return Err(Error::invalid("scene ranges must be finite, non-negative and ordered"));
        }
        if self.objects.0 > self.objects.1 {
            return Err(Error::invalid("object count range is reversed"));
        }
        let margin = 2.0 * self.object_size.1 + 4.0;
        if (self.width.min(self.height) as f64) < margin {
            return Err(Error::invalid(format!(
                "{}x{} frames are too small for objects up to {} px",
                self.width, self.height, self.object_size.1
            )));
        }
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// A scene of objects on circular paths over a drifting noise texture.
/// Circular paths keep every object inside the frame for any duration.
pub fn random_scene(cfg: &SceneConfig, rng: &mut impl Rng) -> MotionSpec {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let n = rng.gen_range(cfg.objects.0..=cfg.objects.1);
    let objects = (0..n)
        .map(|_| {
            let size = draw(rng, cfg.object_size);
            let half = size / 2.0 + 1.0;
            let max_r = (w.min(h) / 2.0 - half) * 0.9;
            let radius = rng.gen_range(max_r * 0.3..max_r);
            let center =
                [rng.gen_range(half + radius..=w - half - radius), rng.gen_range(half + radius..=h - half - radius)];
            let speed = draw(rng, cfg.object_speed);
            ObjectTrack {
                shape: if rng.gen_bool(0.5) { Shape::Disc } else { Shape::Square },
                size,
                intensity: if rng.gen_bool(0.5) { rng.gen_range(0.0..0.2) } else { rng.gen_range(0.8..1.0) },
                path: Path::Circular { center, radius, start_angle: rng.gen_range(0.0..std::f64::consts::TAU) },
                speed_profile: vec![SpeedSegment { frames: 1, speed }],
            }
        })
        .collect();
    let drift = draw(rng, cfg.drift_speed);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    MotionSpec {
        objects,
        background: Background::Noise { base: 0.5, amplitude: 0.6, cell: rng.gen_range(4.0..10.0) },
        camera_pan: [0.0, 0.0],
        camera_segments: Vec::new(),
        texture_drift: [drift * angle.cos(), drift * angle.sin()],
    }
}

/// Renders the source video for `seed`; identical for identical inputs.
pub fn generate_source(cfg: &SceneConfig, seed: u64) -> Result<Clip> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_scene(cfg, &mut rng);
    generate_clip(&spec, cfg.frames, cfg.width, cfg.height, seed)
}

/// A random scene played at a different rate per segment: each
/// `(frames, rate)` runs the objects at `rate` times their natural speed
/// (0 freezes them, 0.5 is 2x slow motion). The texture stays put. Returns
/// the clip and the world time elapsed per frame step.
pub fn segmented_video(cfg: &SceneConfig, segments: &[(usize, f64)], seed: u64) -> Result<(Clip, Vec<f64>)> {
    cfg.validate()?;
    if segments.iter().any(|&(n, r)| n == 0 || !(r.is_finite() && r >= 0.0)) {
        return Err(Error::invalid("segments need >= 1 frame and a finite rate >= 0"));
    }
    let n: usize = segments.iter().map(|s| s.0).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = random_scene(cfg, &mut rng);
    spec.texture_drift = [0.0, 0.0];
    for o in &mut spec.objects {
        let natural = o.speed_at(0);
        o.speed_profile =
            segments.iter().map(|&(frames, rate)| SpeedSegment { frames, speed: natural * rate }).collect();
    }
    let world_step = segments.iter().flat_map(|&(frames, rate)| std::iter::repeat_n(rate, frames)).collect();
    Ok((generate_clip(&spec, n, cfg.width, cfg.height, seed)?, world_step))
}

pub fn featurize(example: &TrainExample, flow: FlowConfig) -> Result<LabeledSeries> {
    Ok(LabeledSeries {
        x: mean_flow_series(&example.clip, flow)?.0,
        normal: example.label.class.is_normal(),
        pair_id: example.pair_id,
    })
}

/// How one split is sampled from its sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub sampler: SamplerConfig,
    pub mode: BatchMode,
    /// Pairs (or example pairs, in independent mode) per source.
    pub pairs_per_source: usize,
    /// Resize every clip to this side instead of random spatial
    /// augmentation; used to build test sets at a fixed scale.
    pub fixed_side: Option<usize>,
    pub seed: u64,
}

/// Samples each source in turn and hands every example to `sink`. Pair ids
/// stay unique across the split.
pub fn for_each_example(
    sources: impl IntoIterator<Item = Result<Clip>>,
    spec: &SplitSpec,
    mut sink: impl FnMut(TrainExample) -> Result<()>,
) -> Result<()> {
    let mut cfg = spec.sampler;
    if spec.fixed_side.is_some() {
        cfg.spatial_aug = false;
    }
    let mut sampler = Sampler::new(cfg, spec.seed);
    for source in sources {
        let source = source?;
        let batch = sampler.make_batch(std::slice::from_ref(&source), spec.pairs_per_source, spec.mode)?;
        for mut ex in batch.examples {
            if let Some(side) = spec.fixed_side {
                ex.clip = resize_clip(&ex.clip, side)?;
            }
            sink(ex)?;
        }
    }
    Ok(())
}

/// Generates the sources `seeds` one at a time, samples and featurizes them.
pub fn featurized_split(
    scene: &SceneConfig,
    seeds: Range<u64>,
    spec: &SplitSpec,
    flow: FlowConfig,
) -> Result<Vec<LabeledSeries>> {
    let mut out = Vec::new();
    for_each_example(seeds.map(|s| generate_source(scene, s)), spec, |ex| {
        out.push(featurize(&ex, flow)?);
        Ok(())
    })?;
    Ok(out)
}
