use std::sync::Arc;

use crate::error::{Error, Result};

/// Smallest admissible frame width or height.
pub const MIN_DIM: usize = 8;

/// A single luma frame, row-major, 8 bits per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    luma: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, luma: Vec<u8>) -> Result<Self> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::invalid(format!("frame {width}x{height} is smaller than {MIN_DIM}x{MIN_DIM}")));
        }
        if luma.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} luma samples", width * height),
                actual: luma.len().to_string(),
            });
        }
        Ok(Frame { width, height, luma })
    }

    /// Builds a frame from intensities in `[0, 1]`; values are clamped and
    /// quantized to 8 bits.
    pub fn from_intensities(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let luma = values.iter().map(|&v| quantize(v)).collect();
        Frame::new(width, height, luma)
    }

    pub fn filled(width: usize, height: usize, intensity: f64) -> Result<Self> {
        Frame::new(width, height, vec![quantize(intensity); width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn luma(&self) -> &[u8] {
        &self.luma
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.luma[y * self.width + x]
    }

    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        f64::from(self.get(x, y)) / 255.0
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// An ordered run of equally sized frames with a frame rate.
///
/// Besides the pixels, a clip remembers for every frame the index of the
/// frame it was taken from in the original source video. Subsampling,
/// windowing and rendering keep that provenance up to date, which is what
/// ground-truth predictors read.
#[derive(Debug, Clone)]
pub struct Clip {
    frames: Vec<Arc<Frame>>,
    source_index: Vec<usize>,
    fps: f64,
    source_id: String,
}

impl Clip {
    pub fn new(frames: Vec<Frame>, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        let n = frames.len();
        Clip::from_shared(frames.into_iter().map(Arc::new).collect(), (0..n).collect(), fps, source_id)
    }

    pub(crate) fn from_shared(
        frames: Vec<Arc<Frame>>,
        source_index: Vec<usize>,
        fps: f64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::invalid(format!("a clip needs at least 2 frames, got {}", frames.len())));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        let first = &frames[0];
        if let Some(bad) = frames.iter().find(|f| !f.same_dims(first)) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", first.width(), first.height()),
                actual: format!("{}x{}", bad.width(), bad.height()),
            });
        }
        debug_assert_eq!(frames.len(), source_index.len());
        Ok(Clip { frames, source_index, fps, source_id: source_id.into() })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn set_source_id(&mut self, id: impl Into<String>) {
        self.source_id = id.into();
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &Frame> {
        self.frames.iter().map(|f| f.as_ref())
    }

    /// Index of each frame in the original source video.
    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    /// Picks frames by index (repeats allowed), keeping provenance.
    pub fn select(&self, indices: &[usize]) -> Result<Clip> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("frame index {bad} out of range for {} frames", self.len())));
        }
        Clip::from_shared(
            indices.iter().map(|&i| Arc::clone(&self.frames[i])).collect(),
            indices.iter().map(|&i| self.source_index[i]).collect(),
            self.fps,
            self.source_id.clone(),
        )
    }

    /// Contiguous sub-clip `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Clip> {
        if start + len > self.len() {
            return Err(Error::invalid(format!(
                "window [{start}, {}) exceeds clip of {} frames",
                start + len,
                self.len()
            )));
        }
        let idx: Vec<usize> = (start..start + len).collect();
        self.select(&idx)
    }

    /// Applies `f` to every frame, keeping provenance and frame rate.
    pub fn map_frames(&self, mut f: impl FnMut(&Frame) -> Result<Frame>) -> Result<Clip> {
        let frames = self.frames.iter().map(|fr| f(fr).map(Arc::new)).collect::<Result<Vec<_>>>()?;
        Clip::from_shared(frames, self.source_index.clone(), self.fps, self.source_id.clone())
    }

    /// Concatenates clips of identical dimensions; provenance of later parts
    /// is offset so that it stays monotone.
    pub fn concat(parts: &[Clip]) -> Result<Clip> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let mut frames = Vec::new();
        let mut index = Vec::new();
        let mut offset = 0;
        for p in parts {
            frames.extend(p.frames.iter().cloned());
            index.extend(p.source_index.iter().map(|&i| i + offset));
            offset += p.source_index.iter().max().map_or(0, |m| m + 1);
        }
        Clip::from_shared(frames, index, first.fps, first.source_id.clone())
    }
}

impl PartialEq for Clip {
    fn eq(&self, other: &Self) -> bool {
        self.fps == other.fps
            && self.frames.len() == other.frames.len()
            && self.frames.iter().zip(&other.frames).all(|(a, b)| a == b)
    }
}

/// Indices chosen by [`subsample`]: `round((j + phase) * factor)` clipped to
/// the valid range, for `j < floor(len / factor)`.
pub fn subsample_indices(len: usize, factor: f64, phase: f64) -> Result<Vec<usize>> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(Error::invalid(format!("subsample factor must be >= 1, got {factor}")));
    }
    if !(0.0..1.0).contains(&phase) {
        return Err(Error::invalid(format!("phase must lie in [0, 1), got {phase}")));
    }
    if len < factor.ceil() as usize {
        return Err(Error::invalid(format!("{len} frames cannot be subsampled by {factor}")));
    }
    let out_len = (len as f64 / factor).floor() as usize;
    Ok((0..out_len).map(|j| (((j as f64 + phase) * factor).round() as usize).min(len - 1)).collect())
}

/// Speeds a clip up by nearest-frame selection. Frame rate metadata is left
/// unchanged: the result plays `factor` times faster.
pub fn subsample(clip: &Clip, factor: f64, phase: f64) -> Result<Clip> {
    let idx = subsample_indices(clip.len(), factor, phase)?;
    clip.select(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> Clip {
        let frames = (0..n).map(|i| Frame::filled(8, 8, i as f64 / 255.0).unwrap()).collect();
        Clip::new(frames, 25.0, "n").unwrap()
    }

    fn ids(c: &Clip) -> Vec<u8> {
        c.frames().map(|f| f.get(0, 0)).collect()
    }

    #[test]
    fn frame_rejects_tiny_dims() {
        assert!(Frame::new(7, 8, vec![0; 56]).is_err());
        assert!(Frame::new(8, 8, vec![0; 63]).is_err());
    }

    #[test]
    fn clip_rejects_mixed_dims_and_single_frame() {
        let a = Frame::filled(8, 8, 0.0).unwrap();
        let b = Frame::filled(16, 8, 0.0).unwrap();
        assert!(Clip::new(vec![a.clone(), b], 25.0, "x").is_err());
        assert!(Clip::new(vec![a.clone()], 25.0, "x").is_err());
        assert!(Clip::new(vec![a.clone(), a], 0.0, "x").is_err());
    }

    #[test]
    fn subsample_identity() {
        let c = numbered(10);
        for phase in [0.0, 0.3, 0.49] {
            assert_eq!(ids(&subsample(&c, 1.0, phase).unwrap()), ids(&c));
        }
    }

    #[test]
    fn subsample_integer_stride() {
        let c = numbered(10);
        assert_eq!(ids(&subsample(&c, 2.0, 0.0).unwrap()), vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn subsample_fractional_factor() {
        // round(j * 1.25), j = 0..8: 0, 1.25, 2.5, 3.75, 5, 6.25, 7.5, 8.75
        assert_eq!(subsample_indices(10, 1.25, 0.0).unwrap(), vec![0, 1, 3, 4, 5, 6, 8, 9]);
    }

    #[test]
    fn subsample_keeps_fps_and_provenance() {
        let c = numbered(12);
        let s = subsample(&c, 3.0, 0.0).unwrap();
        assert_eq!(s.fps(), 25.0);
        assert_eq!(s.source_index(), &[0, 3, 6, 9]);
        let s2 = subsample(&s, 2.0, 0.0).unwrap();
        assert_eq!(s2.source_index(), &[0, 6]);
    }

    #[test]
    fn subsample_rejects_slowdown() {
        assert!(subsample(&numbered(10), 0.5, 0.0).is_err());
        assert!(subsample(&numbered(10), 2.0, 1.0).is_err());
    }

    #[test]
    fn subsample_clips_to_range() {
        // phase pushes the last index past the end
        let idx = subsample_indices(10, 2.0, 0.9).unwrap();
        assert_eq!(idx.len(), 5);
        assert_eq!(*idx.last().unwrap(), 9);
    }

    proptest::proptest! {
        #[test]
        fn subsample_composition_length(len in 8usize..400, a in 1usize..5, b in 1usize..5) {
            let c = numbered(len.min(255));
            let len = c.len();
            proptest::prop_assume!(len >= 2 * a * b);
            let once = subsample(&c, (a * b) as f64, 0.0).unwrap();
            let twice = subsample(&subsample(&c, a as f64, 0.0).unwrap(), b as f64, 0.0).unwrap();
            proptest::prop_assert!((once.len() as i64 - twice.len() as i64).abs() <= 1);
        }
    }
}
