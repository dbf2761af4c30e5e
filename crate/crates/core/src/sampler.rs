//! Self-supervised example construction: stochastic temporal sampling of
//! normal-speed and sped-up clips, random spatial rescaling, and batches that
//! pair both versions of the same source window.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{self, resize_bilinear, Clip};

/// Sampling rate range for normal-speed clips.
pub const NORMAL_RANGE: (f64, f64) = (1.0, 1.2);
/// Sampling rate range for sped-up clips.
pub const SPED_UP_RANGE: (f64, f64) = (1.7, 2.2);
/// Spatial augmentation side length range (inclusive).
pub const RESIZE_RANGE: (usize, usize) = (64, 336);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedClass {
    Normal,
    SpedUp,
}

impl SpeedClass {
    pub fn range(self) -> (f64, f64) {
        match self {
            SpeedClass::Normal => NORMAL_RANGE,
            SpeedClass::SpedUp => SPED_UP_RANGE,
        }
    }

    /// Factor used when temporal augmentation is disabled.
    pub fn nominal_factor(self) -> f64 {
        match self {
            SpeedClass::Normal => 1.0,
            SpeedClass::SpedUp => 2.0,
        }
    }

    pub fn is_normal(self) -> bool {
        self == SpeedClass::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedLabel {
    pub class: SpeedClass,
    pub factor: f64,
}

impl SpeedLabel {
    pub fn new(class: SpeedClass, factor: f64) -> Result<Self> {
        let (lo, hi) = class.range();
        if !(lo..=hi).contains(&factor) {
            return Err(Error::invalid(format!("factor {factor} outside {class:?} range [{lo}, {hi}]")));
        }
        Ok(SpeedLabel { class, factor })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Every source window contributes a normal and a sped-up clip.
    SameBatch,
    /// Each example has its own source, window and coin-flip class.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Clip length `T`.
    pub clip_len: usize,
    pub temporal_aug: bool,
    pub spatial_aug: bool,
    /// Redraws of the drop pattern before giving up.
    pub max_redraws: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { clip_len: 16, temporal_aug: true, spatial_aug: true, max_redraws: 8 }
    }
}

impl SamplerConfig {
    pub fn window_len(&self) -> usize {
        3 * self.clip_len
    }
}

#[derive(Debug, Clone)]
pub struct TrainExample {
    pub clip: Clip,
    pub label: SpeedLabel,
    pub pair_id: u64,
    pub source_id: String,
    pub window_start: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub examples: Vec<TrainExample>,
}

pub fn draw_factor(class: SpeedClass, rng: &mut impl Rng) -> f64 {
    let (lo, hi) = class.range();
    rng.gen_range(lo..=hi)
}

/// Keeps each of `n` frames independently with probability `1 / factor`.
pub fn drop_frames(n: usize, factor: f64, rng: &mut impl Rng) -> Vec<usize> {
    let keep = 1.0 / factor;
    (0..n).filter(|_| rng.gen::<f64>() < keep).collect()
}

/// Uniform start of a `3T` window in a source of `len` frames.
pub fn choose_window(len: usize, cfg: &SamplerConfig, rng: &mut impl Rng) -> Result<usize> {
    let w = cfg.window_len();
    if len < w {
        return Err(Error::invalid(format!("source has {len} frames, need {w}")));
    }
    Ok(rng.gen_range(0..=len - w))
}

/// Builds a `T`-frame clip from the `3T` window at `window_start`.
///
/// With temporal augmentation the frames of the window are dropped i.i.d.
/// with probability `1 - 1/f` and `T` consecutive survivors are kept from a
/// uniform offset. Without it the window is strided deterministically by the
/// class's nominal factor.
pub fn sample_from_window(
    source: &Clip,
    window_start: usize,
    class: SpeedClass,
    factor: Option<f64>,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<(Clip, f64)> {
    let t = cfg.clip_len;
    let w = cfg.window_len();
    if window_start + w > source.len() {
        return Err(Error::invalid("window exceeds source"));
    }
    if !cfg.temporal_aug {
        let f = factor.unwrap_or_else(|| class.nominal_factor());
        let span = ((t - 1) as f64 * f).round() as usize + 1;
        if span > w {
            return Err(Error::invalid(format!("stride {f} does not fit {t} frames into {w}")));
        }
        let start = window_start + rng.gen_range(0..=w - span);
        let idx: Vec<usize> = (0..t).map(|j| start + (j as f64 * f).round() as usize).collect();
        return Ok((source.select(&idx)?, f));
    }
    let f = factor.unwrap_or_else(|| draw_factor(class, rng));
    if !(f.is_finite() && f >= 1.0) {
        return Err(Error::invalid(format!("skip factor must be >= 1, got {f}")));
    }
    for _ in 0..=cfg.max_redraws {
        let survivors = drop_frames(w, f, rng);
        if survivors.len() < t {
            continue;
        }
        let start = rng.gen_range(0..=survivors.len() - t);
        let idx: Vec<usize> = survivors[start..start + t].iter().map(|&i| window_start + i).collect();
        return Ok((source.select(&idx)?, f));
    }
    Err(Error::SamplingExhausted { needed: t, attempts: cfg.max_redraws + 1 })
}

/// Picks a random `3T` window and samples one clip of `class` from it.
/// Returns the clip, its factor and the window start.
pub fn temporal_sample(
    source: &Clip,
    class: SpeedClass,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<(Clip, f64, usize)> {
    let start = choose_window(source.len(), cfg, rng)?;
    let (clip, f) = sample_from_window(source, start, class, None, cfg, rng)?;
    Ok((clip, f, start))
}

pub fn resize_clip(clip: &Clip, side: usize) -> Result<Clip> {
    clip.map_frames(|f| resize_bilinear(f, side, side))
}

/// Resizes every frame of `clip` to a common `N x N`, `N` uniform in
/// `[64, 336]`.
pub fn spatial_augment(clip: &Clip, rng: &mut impl Rng) -> Result<Clip> {
    let side = rng.gen_range(RESIZE_RANGE.0..=RESIZE_RANGE.1);
    resize_clip(clip, side)
}

/// Seeded stateful front end over the sampling primitives. Pair ids are
/// unique across all batches drawn from one sampler.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub cfg: SamplerConfig,
    rng: ChaCha8Rng,
    next_pair: u64,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig, seed: u64) -> Self {
        Sampler { cfg, rng: ChaCha8Rng::seed_from_u64(seed), next_pair: 0 }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn example(&mut self, source: &Clip, start: usize, class: SpeedClass, pair_id: u64) -> Result<TrainExample> {
        let (mut clip, factor) = sample_from_window(source, start, class, None, &self.cfg, &mut self.rng)?;
        if self.cfg.spatial_aug {
            clip = spatial_augment(&clip, &mut self.rng)?;
        }
        Ok(TrainExample {
            clip,
            label: SpeedLabel { class, factor },
            pair_id,
            source_id: source.source_id().to_string(),
            window_start: start,
        })
    }

    /// Draws `batch_pairs` pairs (same-batch) or `2 * batch_pairs`
    /// independent examples. Sources shorter than `3T` are skipped.
    pub fn make_batch(&mut self, sources: &[Clip], batch_pairs: usize, mode: BatchMode) -> Result<Batch> {
        let usable: Vec<&Clip> = sources.iter().filter(|s| s.len() >= self.cfg.window_len()).collect();
        if usable.is_empty() {
            return Err(Error::NoUsableSource(format!(
                "none of {} sources has {} frames",
                sources.len(),
                self.cfg.window_len()
            )));
        }
        let mut examples = Vec::with_capacity(2 * batch_pairs);
        match mode {
            BatchMode::SameBatch => {
                for _ in 0..batch_pairs {
                    let src = *usable.choose(&mut self.rng).unwrap();
                    let start = choose_window(src.len(), &self.cfg, &mut self.rng)?;
                    let id = self.next_pair;
                    self.next_pair += 1;
                    examples.push(self.example(src, start, SpeedClass::Normal, id)?);
                    examples.push(self.example(src, start, SpeedClass::SpedUp, id)?);
                }
            }
            BatchMode::Independent => {
                for _ in 0..2 * batch_pairs {
                    let src = *usable.choose(&mut self.rng).unwrap();
                    let start = choose_window(src.len(), &self.cfg, &mut self.rng)?;
                    let class = if self.rng.gen_bool(0.5) { SpeedClass::Normal } else { SpeedClass::SpedUp };
                    let id = self.next_pair;
                    self.next_pair += 1;
                    examples.push(self.example(src, start, class, id)?);
                }
            }
        }
        Ok(Batch { examples })
    }
}

/// Sidecar metadata stored next to a cached example clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub label: SpeedClass,
    pub factor: f64,
    pub pair_id: u64,
    pub source_id: String,
    pub window_start: usize,
}

/// Writes `<dir>/<stem>.spdv` and `<dir>/<stem>.json`.
pub fn write_example(dir: &Path, stem: &str, ex: &TrainExample) -> Result<()> {
    media::save_video(&ex.clip, dir.join(format!("{stem}.spdv")))?;
    let meta = ExampleMeta {
        label: ex.label.class,
        factor: ex.label.factor,
        pair_id: ex.pair_id,
        source_id: ex.source_id.clone(),
        window_start: ex.window_start,
    };
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::file(path, e))
}

pub fn read_example(dir: &Path, stem: &str) -> Result<TrainExample> {
    let path = dir.join(format!("{stem}.json"));
    let bytes = std::fs::read(&path).map_err(|e| Error::file(&path, e))?;
    let meta: ExampleMeta = serde_json::from_slice(&bytes)?;
    let clip = media::load_video(dir.join(format!("{stem}.spdv")))?;
    Ok(TrainExample {
        clip,
        label: SpeedLabel { class: meta.label, factor: meta.factor },
        pair_id: meta.pair_id,
        source_id: meta.source_id,
        window_start: meta.window_start,
    })
}

/// Parses a manifest: one video path per line, blank lines and `#`
/// comments ignored, relative paths resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Vec<PathBuf> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(parse_manifest(&text, path.parent().unwrap_or(Path::new("."))))
}
