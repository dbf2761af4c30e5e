//! Multi-rate speediness estimation.
//!
//! A video is sped up by `X^i` for `i = 0..=k`; a predictor scans each
//! variant with a sliding window; the per-variant curves are stretched back
//! to the original timeline, thresholded, and reduced to the largest speedup
//! at every frame that still looks like normal speed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{subsample, Clip};
use crate::model::Predictor;

/// The nine thresholds swept during threshold selection.
pub const RHO_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Min-max over the video.
    PerVideo,
    /// `(V - 1) / (X^k - 1)`, comparable across videos.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackParams {
    /// Base factor `X`.
    pub base: f64,
    /// Largest exponent `k`.
    pub max_exponent: usize,
    /// Window length `T`.
    pub window: usize,
    pub stride: usize,
    pub normalization: Normalization,
    /// Rate index whose prediction decides slow motion (`X^3 ~ 1.95`).
    pub slow_motion_index: usize,
}

impl Default for StackParams {
    fn default() -> Self {
        StackParams {
            base: 1.25,
            max_exponent: 10,
            window: 16,
            stride: 1,
            normalization: Normalization::PerVideo,
            slow_motion_index: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateVariant {
    pub index: usize,
    pub factor: f64,
    pub clip: Clip,
}

#[derive(Debug, Clone)]
pub struct RateStack {
    pub base: f64,
    pub requested_exponent: usize,
    pub variants: Vec<RateVariant>,
}

impl RateStack {
    /// Largest exponent actually built.
    pub fn max_exponent(&self) -> usize {
        self.variants.len() - 1
    }

    pub fn factors(&self) -> Vec<f64> {
        self.variants.iter().map(|v| v.factor).collect()
    }
}

/// Builds `v_i = subsample(video, X^i)` for `i = 0..=k`, lowering `k` to the
/// largest exponent whose variant still holds a full window.
pub fn build_rate_stack(video: &Clip, base: f64, k: usize, window: usize) -> Result<RateStack> {
    if !(base.is_finite() && base > 1.0) {
        return Err(Error::invalid(format!("rate base must exceed 1, got {base}")));
    }
    if video.len() < window {
        return Err(Error::invalid(format!(
            "video of {} frames is shorter than the {window}-frame window",
            video.len()
        )));
    }
    let mut variants = vec![RateVariant { index: 0, factor: 1.0, clip: video.clone() }];
    for i in 1..=k {
        let factor = base.powi(i as i32);
        if (video.len() as f64 / factor).floor() < window as f64 {
            break;
        }
        variants.push(RateVariant { index: i, factor, clip: subsample(video, factor, 0.0)? });
    }
    Ok(RateStack { base, requested_exponent: k, variants })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCurve {
    pub rate_index: usize,
    /// `P(normal speed)` per frame of the variant.
    pub values: Vec<f64>,
    pub window: usize,
    pub stride: usize,
}

/// Sliding-window predictions assigned to each window's middle frame
/// `s + T/2`. Frames before the first (after the last) assigned frame copy
/// it; frames between strided assignments are interpolated linearly.
pub fn predict_curve(predictor: &dyn Predictor, variant: &Clip, window: usize, stride: usize) -> Result<Vec<f64>> {
    let probs = predictor.predict_windows(variant, window, stride)?;
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("predictor returned {bad}, outside [0, 1]")));
    }
    let n = variant.len();
    let mid = window / 2;
    let anchors: Vec<usize> = (0..probs.len()).map(|w| w * stride + mid).collect();
    let mut out = vec![0.0; n];
    let (first, last) = (anchors[0], *anchors.last().unwrap());
    for (t, slot) in out.iter_mut().enumerate() {
        *slot = if t <= first {
            probs[0]
        } else if t >= last {
            *probs.last().unwrap()
        } else {
            let w = (t - mid) / stride;
            let frac = ((t - anchors[w]) as f64) / stride as f64;
            probs[w] + (probs[w + 1] - probs[w]) * frac
        };
    }
    Ok(out)
}

/// Linear resampling of `curve` to `len` samples, endpoints aligned.
pub fn stretch(curve: &[f64], len: usize) -> Vec<f64> {
    if curve.len() == 1 || len == 1 {
        return vec![curve[0]; len];
    }
    let scale = (curve.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|t| {
            let pos = t as f64 * scale;
            let i = (pos.floor() as usize).min(curve.len() - 2);
            let frac = pos - i as f64;
            curve[i] + (curve[i + 1] - curve[i]) * frac
        })
        .collect()
}

/// Stretches every curve to the length of the longest one (the original
/// video's).
pub fn align_curves(curves: &[PredictionCurve]) -> Vec<Vec<f64>> {
    let len = curves.iter().map(|c| c.values.len()).max().unwrap_or(0);
    curves.iter().map(|c| stretch(&c.values, len)).collect()
}

/// `true` ("not sped up") where `p >= rho`.
pub fn binarize(curve: &[f64], rho: f64) -> Result<Vec<bool>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {rho}")));
    }
    Ok(curve.iter().map(|&p| p >= rho).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupVector {
    /// Largest admissible speedup per frame of the original video.
    pub v: Vec<f64>,
    /// `v` normalized to `[0, 1]`.
    pub v_hat: Vec<f64>,
    pub rho: f64,
}

/// `V(t) = max_i bit_i(t) * X^i`, clamped below at 1, then normalized.
/// A constant `V` normalizes to all zeros under per-video normalization.
pub fn combine_speedup(bits: &[Vec<bool>], base: f64, normalization: Normalization, rho: f64) -> Result<SpeedupVector> {
    let len = bits.first().map(Vec::len).ok_or_else(|| Error::invalid("no binary curves"))?;
    if bits.iter().any(|b| b.len() != len) {
        return Err(Error::invalid("binary curves must share one length"));
    }
    let factors: Vec<f64> = (0..bits.len()).map(|i| base.powi(i as i32)).collect();
    let v: Vec<f64> = (0..len)
        .map(|t| bits.iter().zip(&factors).map(|(b, &f)| if b[t] { f } else { 0.0 }).fold(0.0, f64::max).max(1.0))
        .collect();
    let v_hat = match normalization {
        Normalization::PerVideo => {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                v.iter().map(|x| (x - lo) / (hi - lo)).collect()
            } else {
                vec![0.0; len]
            }
        }
        Normalization::Global => {
            let top = *factors.last().unwrap();
            if top > 1.0 {
                v.iter().map(|x| (x - 1.0) / (top - 1.0)).collect()
            } else {
                vec![0.0; len]
            }
        }
    };
    Ok(SpeedupVector { v, v_hat, rho })
}

/// `1 - V_hat`: high where the content can barely be sped up.
pub fn speediness_curve(sv: &SpeedupVector) -> Vec<f64> {
    sv.v_hat.iter().map(|v| 1.0 - v).collect()
}

/// Predictions for every rate variant of one video, kept so that the
/// threshold can be swept without re-running the predictor.
#[derive(Debug, Clone)]
pub struct SpeedinessAnalysis {
    pub params: StackParams,
    pub factors: Vec<f64>,
    pub curves: Vec<PredictionCurve>,
    /// Curves stretched to the original timeline.
    pub aligned: Vec<Vec<f64>>,
}

impl SpeedinessAnalysis {
    pub fn len(&self) -> usize {
        self.aligned[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.aligned[0].is_empty()
    }

    pub fn max_exponent(&self) -> usize {
        self.factors.len() - 1
    }

    pub fn speedup_vector(&self, rho: f64) -> Result<SpeedupVector> {
        let bits = self.aligned.iter().map(|c| binarize(c, rho)).collect::<Result<Vec<_>>>()?;
        combine_speedup(&bits, self.params.base, self.params.normalization, rho)
    }

    /// Frames whose slow-motion variant still reads as normal speed.
    pub fn slow_motion_flags(&self, rho: f64) -> Result<Vec<bool>> {
        let i = self.params.slow_motion_index;
        let curve = self.aligned.get(i).ok_or_else(|| {
            Error::invalid(format!("video too short for rate index {i} (stack stops at {})", self.max_exponent()))
        })?;
        binarize(curve, rho)
    }

    /// CSV with one row per frame: aligned `P_v{i}`, `V`, `V_hat`,
    /// speediness, the slow-motion flag, and the sped-up probabilities
    /// `1 - P` of `v_0` and the slow-motion variant.
    pub fn to_csv(&self, sv: &SpeedupVector) -> Result<String> {
        let flags = self.slow_motion_flags(sv.rho).ok();
        let sm = self.params.slow_motion_index;
        let mut out = String::from("frame");
        for i in 0..self.aligned.len() {
            write!(out, ",P_v{i}").unwrap();
        }
        write!(out, ",V,V_hat,speediness,slow_motion,sped_up_v0,sped_up_v{sm}").unwrap();
        out.push('\n');
        let speed = speediness_curve(sv);
        for t in 0..self.len() {
            write!(out, "{t}").unwrap();
            for c in &self.aligned {
                write!(out, ",{}", c[t]).unwrap();
            }
            let flag = flags.as_ref().map_or(String::new(), |f| u8::from(f[t]).to_string());
            let sped_sm = self.aligned.get(sm).map_or(String::new(), |c| (1.0 - c[t]).to_string());
            writeln!(
                out,
                ",{},{},{},{},{},{}",
                sv.v[t],
                sv.v_hat[t],
                speed[t],
                flag,
                1.0 - self.aligned[0][t],
                sped_sm
            )
            .unwrap();
        }
        Ok(out)
    }

    pub fn metadata(&self, rho: f64) -> CurveMetadata {
        CurveMetadata {
            x: self.params.base,
            k: self.max_exponent(),
            requested_k: self.params.max_exponent,
            rho,
            t: self.params.window,
            stride: self.params.stride,
            normalization: self.params.normalization,
            slow_motion_index: self.params.slow_motion_index,
        }
    }
}

/// JSON sidecar describing a curve export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    #[serde(rename = "X")]
    pub x: f64,
    pub k: usize,
    pub requested_k: usize,
    pub rho: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub stride: usize,
    pub normalization: Normalization,
    pub slow_motion_index: usize,
}

/// Runs `predictor` over the whole rate stack of `video`.
pub fn analyze(predictor: &dyn Predictor, video: &Clip, params: &StackParams) -> Result<SpeedinessAnalysis> {
    let stack = build_rate_stack(video, params.base, params.max_exponent, params.window)?;
    let curves = stack
        .variants
        .iter()
        .map(|v| {
            Ok(PredictionCurve {
                rate_index: v.index,
                values: predict_curve(predictor, &v.clip, params.window, params.stride)?,
                window: params.window,
                stride: params.stride,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aligned = align_curves(&curves);
    Ok(SpeedinessAnalysis { params: *params, factors: stack.factors(), curves, aligned })
}

/// Flags frame `t` as slow motion when the prediction on the
/// `X^slow_motion_index` variant, aligned to `t`, is at least `rho`.
pub fn detect_slow_motion(
    predictor: &dyn Predictor,
    video: &Clip,
    params: &StackParams,
    rho: f64,
) -> Result<Vec<bool>> {
    if video.len() < 2 * params.window {
        return Err(Error::invalid(format!(
            "slow-motion detection needs at least {} frames, got {}",
            2 * params.window,
            video.len()
        )));
    }
    let factor = params.base.powi(params.slow_motion_index as i32);
    let variant = subsample(video, factor, 0.0)?;
    let curve = predict_curve(predictor, &variant, params.window, params.stride)?;
    binarize(&stretch(&curve, video.len()), rho)
}
