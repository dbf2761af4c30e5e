#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use vidspeed::media::{generate_clip, Background, Clip, Frame, MotionSpec, ObjectTrack, Path, Shape, SpeedSegment};
use vidspeed::model::{ConstantPredictor, OraclePredictor};
use vidspeed::retime::{select_threshold, RetimeParams};
use vidspeed::speediness::{
    analyze, binarize, combine_speedup, detect_slow_motion, predict_curve, speediness_curve, Normalization,
    PredictionCurve, SpeedinessAnalysis, StackParams, RHO_GRID,
};

fn blank(n: usize) -> Clip {
    let frames = (0..n).map(|i| Frame::filled(8, 8, (i % 5) as f64 / 10.0).unwrap()).collect();
    Clip::new(frames, 25.0, "b").unwrap()
}

/// A disc circling at a piecewise speed; the oracle's world time per frame
/// step is the speed relative to `natural`.
fn circling(profile: Vec<SpeedSegment>, n: usize) -> Clip {
    let spec = MotionSpec {
        objects: vec![ObjectTrack {
            shape: Shape::Disc,
            size: 10.0,
            intensity: 0.9,
            path: Path::Circular { center: [32.0, 32.0], radius: 20.0, start_angle: 0.0 },
            speed_profile: profile,
        }],
        background: Background::Uniform { level: 0.2 },
        camera_pan: [0.0, 0.0],
        camera_segments: vec![],
        texture_drift: [0.0, 0.0],
    };
    generate_clip(&spec, n, 64, 64, 3).unwrap()
}

fn world_steps(profile: &[SpeedSegment], n: usize, natural: f64) -> Vec<f64> {
    let track = ObjectTrack {
        shape: Shape::Disc,
        size: 1.0,
        intensity: 1.0,
        path: Path::Linear { start: [0.0, 0.0], direction: [1.0, 0.0] },
        speed_profile: profile.to_vec(),
    };
    (0..n).map(|t| track.speed_at(t) / natural).collect()
}

#[test]
fn stitched_video_curve_switches_at_the_seam() {
    let n = 300;
    let clip = circling(vec![SpeedSegment { frames: 1, speed: 1.0 }], n);
    let mut idx: Vec<usize> = (0..100).collect();
    idx.extend((100..n).step_by(2));
    let stitched = clip.select(&idx).unwrap();
    let oracle = OraclePredictor::new(vec![1.0; n]);
    let curve = predict_curve(&oracle, &stitched, 16, 1).unwrap();
    for (t, &p) in curve.iter().enumerate() {
        if t + 16 < 100 {
            assert_eq!(p, 1.0, "t={t}");
        } else if t > 100 + 16 {
            assert_eq!(p, 0.0, "t={t}");
        }
    }
}

#[test]
fn half_speed_video_is_all_slow_motion() {
    let profile = vec![SpeedSegment { frames: 1, speed: 0.75 }];
    let clip = circling(profile.clone(), 160);
    let oracle = OraclePredictor::new(world_steps(&profile, 160, 1.5));
    let flags = detect_slow_motion(&oracle, &clip, &StackParams::default(), 0.5).unwrap();
    assert!(flags.iter().all(|&f| f));
}

#[test]
fn alternating_normal_and_slow_segments() {
    let mut profile = Vec::new();
    for _ in 0..3 {
        profile.push(SpeedSegment { frames: 80, speed: 1.5 });
        profile.push(SpeedSegment { frames: 80, speed: 0.75 });
    }
    let n = 480;
    let clip = circling(profile.clone(), n);
    let steps = world_steps(&profile, n, 1.5);
    let oracle = OraclePredictor::new(steps.clone());
    let flags = detect_slow_motion(&oracle, &clip, &StackParams::default(), 0.5).unwrap();
    for (t, &f) in flags.iter().enumerate() {
        let boundary_dist = (0..=6).map(|k| (t as i64 - 80 * k).unsigned_abs() as usize).min().unwrap();
        if boundary_dist > 16 {
            assert_eq!(f, steps[t] < 1.0, "t={t}");
        }
    }
}

#[test]
fn still_frames_get_low_speediness() {
    // segments outlast the top variant's window (16 * 1.25^10 ~ 149 frames)
    let seg = 300;
    let mut profile = Vec::new();
    for _ in 0..2 {
        profile.push(SpeedSegment { frames: seg, speed: 0.0 });
        profile.push(SpeedSegment { frames: seg, speed: 1.5 });
    }
    let n = 4 * seg;
    let clip = circling(profile.clone(), n);
    let oracle = OraclePredictor::new(world_steps(&profile, n, 1.5));
    let a = analyze(&oracle, &clip, &StackParams::default()).unwrap();
    let sv = a.speedup_vector(0.5).unwrap();
    let speed = speediness_curve(&sv);
    for t in 0..n {
        let inner = (t % seg) > 80 && (t % seg) < seg - 80;
        if inner && (t / seg) % 2 == 0 {
            assert!(speed[t] < 0.1, "still t={t}: {}", speed[t]);
        }
        if (t % seg) > 16 && (t % seg) < seg - 16 && (t / seg) % 2 == 1 {
            assert!(speed[t] > 0.9, "fast t={t}: {}", speed[t]);
        }
    }
}

#[test]
fn normal_video_has_unit_speedup_everywhere() {
    let clip = circling(vec![SpeedSegment { frames: 1, speed: 1.5 }], 240);
    let oracle = OraclePredictor::new(vec![1.0; 240]);
    let a = analyze(&oracle, &clip, &StackParams::default()).unwrap();
    for rho in RHO_GRID {
        assert!(a.speedup_vector(rho).unwrap().v.iter().all(|&v| v == 1.0));
    }
}

#[test]
fn constant_predictor_gives_constant_columns() {
    let a = analyze(&ConstantPredictor(0.7), &blank(240), &StackParams::default()).unwrap();
    assert!(a.aligned.iter().all(|c| c.iter().all(|&p| p == 0.7)));
    let sv = a.speedup_vector(0.5).unwrap();
    assert!(speediness_curve(&sv).iter().all(|&s| s == 1.0));
}

#[test]
fn interpolate_then_binarize_order_is_pinned() {
    // v_1 curve [0, 1] stretched to 3 frames reads 0.5 in the middle, which
    // passes rho = 0.5; binarizing first would stretch [0, 1] bits to 0.5
    let curves = vec![
        PredictionCurve { rate_index: 0, values: vec![0.0; 3], window: 1, stride: 1 },
        PredictionCurve { rate_index: 1, values: vec![0.0, 1.0], window: 1, stride: 1 },
    ];
    let aligned = vidspeed::speediness::align_curves(&curves);
    assert_eq!(aligned[1], vec![0.0, 0.5, 1.0]);
    let bits: Vec<Vec<bool>> = aligned.iter().map(|c| binarize(c, 0.5).unwrap()).collect();
    let sv = combine_speedup(&bits, 1.25, Normalization::PerVideo, 0.5).unwrap();
    assert_eq!(sv.v, vec![1.0, 1.25, 1.25]);
}

fn analysis_from(aligned: Vec<Vec<f64>>) -> SpeedinessAnalysis {
    let params = StackParams { max_exponent: aligned.len() - 1, ..StackParams::default() };
    let curves = aligned
        .iter()
        .enumerate()
        .map(|(i, c)| PredictionCurve { rate_index: i, values: c.clone(), window: 16, stride: 1 })
        .collect();
    SpeedinessAnalysis {
        params,
        factors: (0..aligned.len()).map(|i| 1.25f64.powi(i as i32)).collect(),
        curves,
        aligned,
    }
}

#[test]
fn binary_curves_select_smallest_threshold() {
    let n = 100;
    let v1: Vec<f64> = (0..n).map(|t| if t < 50 { 1.0 } else { 0.0 }).collect();
    let a = analysis_from(vec![vec![1.0; n], v1]);
    let sel = select_threshold(&a, &RetimeParams::default()).unwrap();
    assert_eq!(sel.rho, 0.1);
    let means: Vec<f64> = sel.candidates.iter().map(|c| c.achieved_mean.unwrap()).collect();
    assert!(means.iter().all(|&m| m == means[0]));
}

#[test]
fn straddling_curve_selects_middle_threshold() {
    // below 0.5 every frame passes and V is flat (V_hat = 0); from 0.5 on,
    // half the frames pass and V_hat separates them
    let n = 120;
    let v1: Vec<f64> = (0..n).map(|t| if (t / 30) % 2 == 0 { 0.95 } else { 0.45 }).collect();
    let a = analysis_from(vec![vec![1.0; n], v1]);
    let p = RetimeParams::with_target(3.0);
    let sel = select_threshold(&a, &p).unwrap();
    assert_eq!(sel.rho, 0.5);
    let gap = |i: usize| (sel.candidates[i].achieved_mean.unwrap() - 3.0).abs();
    for i in 0..4 {
        assert!(gap(i) > gap(4));
    }
}

proptest! {
    #[test]
    fn speedup_is_monotone_in_threshold(
        curves in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 40), 1..8)
    ) {
        let a = analysis_from(curves);
        let top = 1.25f64.powi(a.max_exponent() as i32);
        let mut last: Option<Vec<f64>> = None;
        for rho in RHO_GRID {
            let v = a.speedup_vector(rho).unwrap().v;
            prop_assert!(v.iter().all(|&x| (1.0..=top).contains(&x)));
            if let Some(prev) = &last {
                prop_assert!(v.iter().zip(prev).all(|(x, y)| x <= y));
            }
            last = Some(v);
        }
    }

    #[test]
    fn ones_count_falls_with_threshold(curve in proptest::collection::vec(0.0f64..=1.0, 1..60)) {
        let counts: Vec<usize> =
            RHO_GRID.iter().map(|&r| binarize(&curve, r).unwrap().iter().filter(|&&b| b).count()).collect();
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    }
}
