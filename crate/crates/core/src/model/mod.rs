//! The speediness predictor: the mean-flow perceptron, its training loop,
//! checkpoints, and the [`Predictor`] contract shared with ground-truth and
//! constant predictors.

mod checkpoint;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use mlp::{bce, sigmoid, MlpGrad, MlpParams, Mode, BN_EPS, PROB_EPS};
pub use train::{evaluate_params, train, train_from, HistoryEntry, LabeledSeries, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{mean_flow_series, pair_magnitudes, series_from_pairs, FlowConfig};
use crate::media::Clip;

/// Anything that maps a clip to the probability that it plays at normal
/// speed.
pub trait Predictor: Send + Sync {
    /// Probability in `[0, 1]` that `clip` plays at normal speed.
    fn predict(&self, clip: &Clip) -> Result<f64>;

    /// Predictions for the windows `[s, s + window)` with
    /// `s = 0, stride, 2 * stride, ...` that fit inside `variant`.
    fn predict_windows(&self, variant: &Clip, window: usize, stride: usize) -> Result<Vec<f64>> {
        window_starts(variant.len(), window, stride)?.map(|s| self.predict(&variant.window(s, window)?)).collect()
    }
}

pub(crate) fn window_starts(len: usize, window: usize, stride: usize) -> Result<impl Iterator<Item = usize>> {
    if window < 2 || stride == 0 {
        return Err(Error::invalid("window must be >= 2 and stride >= 1"));
    }
    if len < window {
        return Err(Error::invalid(format!("video of {len} frames is shorter than the {window}-frame window")));
    }
    Ok((0..=len - window).step_by(stride))
}

/// The trained baseline: mean flow magnitude series fed to [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MeanFlowPredictor {
    pub params: MlpParams,
    pub flow: FlowConfig,
}

impl Predictor for MeanFlowPredictor {
    fn predict(&self, clip: &Clip) -> Result<f64> {
        let series = mean_flow_series(clip, self.flow)?;
        self.params.predict(series.values())
    }

    /// Computes flow once for the whole variant and slices it per window;
    /// identical to calling [`Predictor::predict`] on every window.
    fn predict_windows(&self, variant: &Clip, window: usize, stride: usize) -> Result<Vec<f64>> {
        let starts = window_starts(variant.len(), window, stride)?;
        let pairs = pair_magnitudes(variant, self.flow)?;
        starts.map(|s| self.params.predict(series_from_pairs(&pairs[s..s + window - 1]).values())).collect()
    }
}

/// Always returns the same probability.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn predict(&self, _clip: &Clip) -> Result<f64> {
        Ok(self.0)
    }
}

/// Ground-truth predictor over one source video.
///
/// `world_step[i]` is the world time that elapses between source frames `i`
/// and `i + 1`, in units of one natural-speed frame interval: 1 for
/// normal-speed footage, 0.5 for 2x slow motion, 0 where nothing visibly
/// moves. A clip's effective speedup is the mean world time per displayed
/// frame step, following the clip's source provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePredictor {
    pub world_step: Vec<f64>,
    /// Largest effective factor still considered normal speed.
    pub threshold: f64,
    /// Width of an optional logistic ramp around `threshold`; hard step
    /// when `None`.
    pub softness: Option<f64>,
}

impl OraclePredictor {
    pub fn new(world_step: Vec<f64>) -> Self {
        OraclePredictor { world_step, threshold: 1.2, softness: None }
    }

    /// Normal-speed probability for a given effective factor.
    pub fn probability(&self, factor: f64) -> f64 {
        match self.softness {
            Some(w) if w > 0.0 => sigmoid((self.threshold - factor) / w),
            _ => {
                if factor <= self.threshold + 1e-9 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Least-squares slope of world time against displayed frame index.
    /// The fit spreads the rounding of fractional subsampling over the whole
    /// clip instead of charging it to the two endpoints.
    pub fn effective_factor(&self, clip: &Clip) -> Result<f64> {
        let idx = clip.source_index();
        let hi = idx.iter().copied().max().unwrap_or(0);
        if hi > self.world_step.len() {
            return Err(Error::MissingMetadata(format!(
                "no world-time entry for source frame {hi} (have {} steps)",
                self.world_step.len()
            )));
        }
        let mut cum = Vec::with_capacity(hi + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for &w in &self.world_step[..hi] {
            acc += w;
            cum.push(acc);
        }
        let n = idx.len() as f64;
        let jbar = (n - 1.0) / 2.0;
        let wbar = idx.iter().map(|&i| cum[i]).sum::<f64>() / n;
        let (mut num, mut den) = (0.0, 0.0);
        for (j, &i) in idx.iter().enumerate() {
            let dj = j as f64 - jbar;
            num += dj * (cum[i] - wbar);
            den += dj * dj;
        }
        Ok(num / den)
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, clip: &Clip) -> Result<f64> {
        Ok(self.probability(self.effective_factor(clip)?))
    }
}

/// Accuracy and confusion counts at the 0.5 threshold (`p >= 0.5` means
/// normal speed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub accuracy: f64,
    /// Normal clips predicted normal.
    pub true_normal: usize,
    /// Sped-up clips predicted normal.
    pub false_normal: usize,
    /// Sped-up clips predicted sped up.
    pub true_sped_up: usize,
    /// Normal clips predicted sped up.
    pub false_sped_up: usize,
}

/// Scores `(probability, is_normal)` pairs.
pub fn evaluate(scored: impl IntoIterator<Item = (f64, bool)>) -> Result<Evaluation> {
    let mut e = Evaluation { n: 0, accuracy: 0.0, true_normal: 0, false_normal: 0, true_sped_up: 0, false_sped_up: 0 };
    for (p, normal) in scored {
        e.n += 1;
        match (p >= 0.5, normal) {
            (true, true) => e.true_normal += 1,
            (true, false) => e.false_normal += 1,
            (false, false) => e.true_sped_up += 1,
            (false, true) => e.false_sped_up += 1,
        }
    }
    if e.n == 0 {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    e.accuracy = (e.true_normal + e.true_sped_up) as f64 / e.n as f64;
    Ok(e)
}

/// Scores the ground-truth labels themselves: the ceiling row of an
/// evaluation table.
pub fn evaluate_labels(set: &[crate::sampler::TrainExample]) -> Result<Evaluation> {
    evaluate(set.iter().map(|e| {
        let normal = e.label.class.is_normal();
        (if normal { 1.0 } else { 0.0 }, normal)
    }))
}

/// Runs `predictor` on every example clip and scores it.
pub fn evaluate_predictor(predictor: &dyn Predictor, set: &[crate::sampler::TrainExample]) -> Result<Evaluation> {
    let scored =
        set.iter().map(|e| Ok((predictor.predict(&e.clip)?, e.label.class.is_normal()))).collect::<Result<Vec<_>>>()?;
    evaluate(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Frame;

    fn clip(n: usize) -> Clip {
        let frames = (0..n).map(|i| Frame::filled(16, 16, (i % 7) as f64 / 10.0).unwrap()).collect();
        Clip::new(frames, 25.0, "c").unwrap()
    }

    #[test]
    fn oracle_boundaries() {
        let o = OraclePredictor::new(vec![1.0; 100]);
        assert_eq!(o.probability(1.0), 1.0);
        assert_eq!(o.probability(2.0), 0.0);
        assert_eq!(o.probability(1.2), 1.0);
        let soft = OraclePredictor { softness: Some(0.1), ..o.clone() };
        assert!((soft.probability(1.2) - 0.5).abs() < 1e-12);
        assert!(soft.probability(1.0) > 0.8 && soft.probability(2.0) < 0.01);
    }

    #[test]
    fn oracle_follows_provenance() {
        let c = clip(40);
        let o = OraclePredictor::new(vec![1.0; 40]);
        assert_eq!(o.effective_factor(&c.window(0, 16).unwrap()).unwrap(), 1.0);
        let sped = crate::media::subsample(&c, 2.0, 0.0).unwrap();
        assert_eq!(o.effective_factor(&sped).unwrap(), 2.0);
        assert_eq!(o.predict(&sped).unwrap(), 0.0);
        let slow = OraclePredictor::new(vec![0.5; 40]);
        assert_eq!(slow.predict(&sped).unwrap(), 1.0);
    }

    #[test]
    fn oracle_rounding_does_not_leak_into_rate_variants() {
        let c = clip(200);
        let o = OraclePredictor::new(vec![1.0; 200]);
        for i in 1..=3 {
            let f = 1.25f64.powi(i);
            let v = crate::media::subsample(&c, f, 0.0).unwrap();
            for s in 0..=v.len() - 16 {
                let e = o.effective_factor(&v.window(s, 16).unwrap()).unwrap();
                assert!((e - f).abs() < 0.05, "i={i} s={s} e={e}");
                assert_eq!(o.predict(&v.window(s, 16).unwrap()).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn oracle_missing_metadata() {
        let o = OraclePredictor::new(vec![1.0; 5]);
        assert!(matches!(o.predict(&clip(10)), Err(Error::MissingMetadata(_))));
    }

    #[test]
    fn evaluation_conventions() {
        let e = evaluate([(0.5, true), (0.5, false), (0.5, true), (0.5, false)]).unwrap();
        assert_eq!(e.accuracy, 0.5);
        assert_eq!((e.true_normal, e.false_normal), (2, 2));
        let perfect = evaluate([(1.0, true), (0.0, false)]).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert!(evaluate(std::iter::empty()).is_err());
    }

    #[test]
    fn mean_flow_window_shortcut_matches_per_window() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let frames = (0..24).map(|_| Frame::new(24, 24, (0..576).map(|_| rng.gen()).collect()).unwrap()).collect();
        let c = Clip::new(frames, 25.0, "r").unwrap();
        let params = MlpParams::init(8, 4, 1.0, &mut rng);
        let p = MeanFlowPredictor { params, flow: FlowConfig { block_size: 8, search_radius: 2 } };
        let fast = p.predict_windows(&c, 8, 3).unwrap();
        let slow: Vec<f64> = (0..=16).step_by(3).map(|s| p.predict(&c.window(s, 8).unwrap()).unwrap()).collect();
        assert_eq!(fast, slow);
    }

    #[test]
    fn window_starts_validation() {
        assert!(window_starts(10, 16, 1).is_err());
        assert!(window_starts(20, 16, 0).is_err());
        assert_eq!(window_starts(20, 16, 2).unwrap().collect::<Vec<_>>(), vec![0, 2, 4]);
    }
}
