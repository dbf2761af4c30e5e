//! Turning a per-frame speedup curve into output frames.
//!
//! `S(t)` is the number of source frames consumed per output frame at source
//! position `t`: `u_0 = 0`, `u_{n+1} = u_n + S(round(u_n))`. An output frame
//! is emitted only when the source span it consumes fits in the video, which
//! makes a constant integer `S = c` reproduce plain `c`-fold subsampling.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::Clip;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSchedule {
    /// Fractional source positions, one per output frame.
    pub source_times: Vec<f64>,
    pub source_len: usize,
}

impl FrameSchedule {
    pub fn output_len(&self) -> usize {
        self.source_times.len()
    }

    /// Nearest source frame for each output frame.
    pub fn source_frames(&self) -> Vec<usize> {
        self.source_times.iter().map(|&u| (u.round() as usize).min(self.source_len - 1)).collect()
    }

    /// `source_len / output_len`.
    pub fn duration_ratio(&self) -> f64 {
        self.source_len as f64 / self.output_len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let Some(&first) = self.source_times.first() else {
            return Err(Error::invalid("empty frame schedule"));
        };
        if first != 0.0 {
            return Err(Error::invalid(format!("schedule must start at 0, starts at {first}")));
        }
        if self.source_times.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::invalid("schedule positions must be non-decreasing"));
        }
        let last = *self.source_times.last().unwrap();
        if self.source_len == 0 || !(last <= (self.source_len - 1) as f64) {
            return Err(Error::invalid(format!(
                "schedule position {last} beyond source of {} frames",
                self.source_len
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("output_frame,source_time,source_frame_used\n");
        for (n, (u, f)) in self.source_times.iter().zip(self.source_frames()).enumerate() {
            writeln!(out, "{n},{u},{f}").unwrap();
        }
        out
    }
}

pub fn build_schedule(s: &[f64], source_len: usize) -> Result<FrameSchedule> {
    if s.len() != source_len {
        return Err(Error::DimensionMismatch {
            expected: format!("{source_len} speedups"),
            actual: s.len().to_string(),
        });
    }
    if source_len == 0 {
        return Err(Error::invalid("empty speedup curve"));
    }
    if let Some(bad) = s.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::invalid(format!("speedups must be positive and finite, got {bad}")));
    }
    let end = source_len as f64;
    let step = |u: f64| s[(u.round() as usize).min(source_len - 1)];
    let mut times = vec![0.0];
    let mut u = 0.0f64;
    loop {
        u += step(u);
        if u > end - 1.0 || u + step(u) > end {
            break;
        }
        times.push(u);
    }
    Ok(FrameSchedule { source_times: times, source_len })
}

/// Output frame `n` is source frame `round(source_times[n])`; fps is kept.
pub fn render(video: &Clip, schedule: &FrameSchedule) -> Result<Clip> {
    if schedule.source_len != video.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} source frames", schedule.source_len),
            actual: video.len().to_string(),
        });
    }
    schedule.validate()?;
    video.select(&schedule.source_frames())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{subsample, Frame};
    use proptest::prelude::*;

    fn numbered(n: usize) -> Clip {
        let frames = (0..n).map(|i| Frame::filled(8, 8, (i % 256) as f64 / 255.0).unwrap()).collect();
        Clip::new(frames, 30.0, "n").unwrap()
    }

    #[test]
    fn identity() {
        let sch = build_schedule(&[1.0; 10], 10).unwrap();
        assert_eq!(sch.source_frames(), (0..10).collect::<Vec<_>>());
        let v = numbered(10);
        assert_eq!(render(&v, &sch).unwrap(), v);
    }

    #[test]
    fn uniform_two() {
        let sch = build_schedule(&[2.0; 10], 10).unwrap();
        assert_eq!(sch.source_times, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(sch.output_len(), 5);
    }

    #[test]
    fn piecewise_by_hand() {
        // 0 ->1 ->2 ->3 ->4 ->5 (S=1), 5 ->8 ->11 (S=3); 8 + 3 = 11 fits, 11 does not
        let mut s = vec![1.0; 5];
        s.extend([3.0; 6]);
        let sch = build_schedule(&s, 11).unwrap();
        assert_eq!(sch.source_times, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 8.0]);
    }

    #[test]
    fn fractional_steps_use_nearest_frame() {
        let sch = build_schedule(&[1.5; 8], 8).unwrap();
        assert_eq!(sch.source_times, vec![0.0, 1.5, 3.0, 4.5, 6.0]);
        assert_eq!(sch.source_frames(), vec![0, 2, 3, 5, 6]);
    }

    #[test]
    fn rejections() {
        assert!(build_schedule(&[1.0, 0.0, 1.0], 3).is_err());
        assert!(build_schedule(&[1.0, -2.0], 2).is_err());
        assert!(build_schedule(&[1.0, f64::NAN], 2).is_err());
        assert!(build_schedule(&[1.0; 4], 5).is_err());
        let bad = FrameSchedule { source_times: vec![0.0, 2.0, 1.0], source_len: 4 };
        assert!(render(&numbered(4), &bad).is_err());
        let far = FrameSchedule { source_times: vec![0.0, 4.0], source_len: 4 };
        assert!(render(&numbered(4), &far).is_err());
    }

    #[test]
    fn csv_rows() {
        let csv = build_schedule(&[2.0; 6], 6).unwrap().to_csv();
        assert_eq!(csv, "output_frame,source_time,source_frame_used\n0,0,0\n1,2,2\n2,4,4\n");
    }

    proptest! {
        #[test]
        fn constant_integer_speedup_is_subsampling(c in 1usize..6, len in 12usize..80) {
            let v = numbered(len);
            let out = render(&v, &build_schedule(&vec![c as f64; len], len).unwrap()).unwrap();
            prop_assert_eq!(out, subsample(&v, c as f64, 0.0).unwrap());
        }

        #[test]
        fn schedule_is_monotone_and_in_range(s in proptest::collection::vec(0.3f64..5.0, 2..120)) {
            let sch = build_schedule(&s, s.len()).unwrap();
            prop_assert!(sch.validate().is_ok());
            let f = sch.source_frames();
            prop_assert!(f.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn constant_speedup_duration(c in 1.0f64..4.0, len in 50usize..400) {
            let sch = build_schedule(&vec![c; len], len).unwrap();
            // each output frame consumes exactly c source frames
            prop_assert_eq!(sch.output_len(), ((len as f64 / c).floor() as usize).max(1));
        }
    }
}
