//! Synthetic moving-object videos with known per-frame motion.

use serde::{Deserialize, Serialize};

use super::frame::{Clip, Frame};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disc,
    Square,
}

/// `frames` consecutive frame steps moving `speed` px/frame along the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSegment {
    pub frames: usize,
    pub speed: f64,
}

/// Arc-length parametrised trajectory in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Linear { start: [f64; 2], direction: [f64; 2] },
    Circular { center: [f64; 2], radius: f64, start_angle: f64 },
}

impl Path {
    fn at(&self, distance: f64) -> [f64; 2] {
        match *self {
            Path::Linear { start, direction } => {
                let norm = direction[0].hypot(direction[1]);
                [start[0] + distance * direction[0] / norm, start[1] + distance * direction[1] / norm]
            }
            Path::Circular { center, radius, start_angle } => {
                let a = start_angle + distance / radius;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub shape: Shape,
    /// Diameter (disc) or side length (square), in pixels.
    pub size: f64,
    pub intensity: f64,
    pub path: Path,
    /// The last segment extends indefinitely.
    pub speed_profile: Vec<SpeedSegment>,
}

impl ObjectTrack {
    /// Displacement magnitude between frame `t` and `t + 1`.
    pub fn speed_at(&self, t: usize) -> f64 {
        let mut acc = 0;
        for seg in &self.speed_profile {
            acc += seg.frames;
            if t < acc {
                return seg.speed;
            }
        }
        self.speed_profile.last().map_or(0.0, |s| s.speed)
    }

    fn world_positions(&self, n: usize) -> Vec<[f64; 2]> {
        let mut d = 0.0;
        (0..n)
            .map(|t| {
                let p = self.path.at(d);
                d += self.speed_at(t);
                p
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Uniform {
        level: f64,
    },
    /// Horizontal ramp from `left` to `right`.
    Gradient {
        left: f64,
        right: f64,
    },
    /// Smooth value noise around `base`, lattice spacing `cell` px.
    Noise {
        base: f64,
        amplitude: f64,
        cell: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub objects: Vec<ObjectTrack>,
    pub background: Background,
    /// Camera motion in px/frame; the whole scene shifts by `-camera_pan`.
    #[serde(default)]
    pub camera_pan: [f64; 2],
    /// Piecewise camera motion; when non-empty it replaces `camera_pan`, and
    /// the last segment extends indefinitely.
    #[serde(default)]
    pub camera_segments: Vec<CameraSegment>,
    /// Texture motion relative to the scene, px/frame. Zero keeps the
    /// background static so that flow responds only to objects and camera.
    #[serde(default)]
    pub texture_drift: [f64; 2],
}

/// `frames` consecutive frame steps of camera motion `pan` px/frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSegment {
    pub frames: usize,
    pub pan: [f64; 2],
}

impl MotionSpec {
    /// Camera motion between frame `t` and `t + 1`.
    pub fn pan_at(&self, t: usize) -> [f64; 2] {
        let mut acc = 0;
        for seg in &self.camera_segments {
            acc += seg.frames;
            if t < acc {
                return seg.pan;
            }
        }
        self.camera_segments.last().map_or(self.camera_pan, |s| s.pan)
    }

    /// Accumulated camera offset at each of frames `0..n`.
    pub fn camera_offsets(&self, n: usize) -> Vec<[f64; 2]> {
        let mut off = [0.0, 0.0];
        (0..n)
            .map(|t| {
                let cur = off;
                let p = self.pan_at(t);
                off = [off[0] + p[0], off[1] + p[1]];
                cur
            })
            .collect()
    }

    /// Screen-space centres of object `obj` for frames `0..n`.
    pub fn centers(&self, obj: usize, n: usize) -> Vec<[f64; 2]> {
        self.objects[obj]
            .world_positions(n)
            .into_iter()
            .zip(self.camera_offsets(n))
            .map(|([x, y], [ox, oy])| [x - ox, y - oy])
            .collect()
    }

    /// Checks speeds and that every object stays inside the frame; on
    /// failure reports the first offending timestep.
    pub fn validate(&self, n_frames: usize, width: usize, height: usize) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            if o.speed_profile.iter().any(|s| !(s.speed.is_finite() && s.speed >= 0.0)) {
                return Err(Error::invalid(format!("object {i} has a negative or non-finite speed")));
            }
            if !(o.size.is_finite() && o.size > 0.0) {
                return Err(Error::invalid(format!("object {i} has non-positive size")));
            }
            if let Path::Circular { radius, .. } = o.path {
                if !(radius > 0.0) {
                    return Err(Error::invalid(format!("object {i} has non-positive path radius")));
                }
            }
            if let Path::Linear { direction, .. } = o.path {
                if direction[0].hypot(direction[1]) == 0.0 {
                    return Err(Error::invalid(format!("object {i} has a zero direction")));
                }
            }
            let half = o.size / 2.0;
            let eps = 1e-9;
            for (t, [x, y]) in self.centers(i, n_frames).into_iter().enumerate() {
                let inside = x >= half - eps
                    && y >= half - eps
                    && x <= width as f64 - half + eps
                    && y <= height as f64 - half + eps;
                if !inside {
                    return Err(Error::OutOfBounds { object: i, timestep: t });
                }
            }
        }
        Ok(())
    }
}

/// Renders `n_frames` of `spec`. `seed` fixes the noise texture; output is
/// bit-deterministic in `(spec, seed)`.
pub fn generate_clip(spec: &MotionSpec, n_frames: usize, width: usize, height: usize, seed: u64) -> Result<Clip> {
    if n_frames < 2 {
        return Err(Error::invalid("need at least 2 frames"));
    }
    spec.validate(n_frames, width, height)?;
    let centers: Vec<Vec<[f64; 2]>> = (0..spec.objects.len()).map(|i| spec.centers(i, n_frames)).collect();
    let camera = spec.camera_offsets(n_frames);
    let frames = (0..n_frames)
        .map(|t| {
            let tf = t as f64;
            let ox = camera[t][0] + spec.texture_drift[0] * tf;
            let oy = camera[t][1] + spec.texture_drift[1] * tf;
            let mut buf = vec![0.0f64; width * height];
            for y in 0..height {
                for x in 0..width {
                    let wx = x as f64 + 0.5 + ox;
                    let wy = y as f64 + 0.5 + oy;
                    buf[y * width + x] = background(&spec.background, wx, wy, width, seed);
                }
            }
            for (o, c) in spec.objects.iter().zip(&centers) {
                draw(&mut buf, width, height, o, c[t]);
            }
            Frame::from_intensities(width, height, &buf)
        })
        .collect::<Result<Vec<_>>>()?;
    Clip::new(frames, 25.0, format!("synthetic-{seed}"))
}

fn background(bg: &Background, x: f64, y: f64, width: usize, seed: u64) -> f64 {
    match *bg {
        Background::Uniform { level } => level,
        Background::Gradient { left, right } => left + (right - left) * (x / width as f64).clamp(0.0, 1.0),
        Background::Noise { base, amplitude, cell } => base + amplitude * (value_noise(x / cell, y / cell, seed) - 0.5),
    }
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut z = seed
        .wrapping_add((ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let top = lattice(ix, iy, seed) * (1.0 - tx) + lattice(ix + 1, iy, seed) * tx;
    let bottom = lattice(ix, iy + 1, seed) * (1.0 - tx) + lattice(ix + 1, iy + 1, seed) * tx;
    top * (1.0 - ty) + bottom * ty
}

const SUPERSAMPLE: usize = 4;

fn draw(buf: &mut [f64], width: usize, height: usize, obj: &ObjectTrack, [cx, cy]: [f64; 2]) {
    let half = obj.size / 2.0;
    let x0 = (cx - half - 1.0).floor().max(0.0) as usize;
    let y0 = (cy - half - 1.0).floor().max(0.0) as usize;
    let x1 = ((cx + half + 1.0).ceil() as usize).min(width);
    let y1 = ((cy + half + 1.0).ceil() as usize).min(height);
    let inside = |px: f64, py: f64| match obj.shape {
        Shape::Disc => (px - cx).hypot(py - cy) <= half,
        Shape::Square => (px - cx).abs() <= half && (py - cy).abs() <= half,
    };
    for y in y0..y1 {
        for x in x0..x1 {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                    let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                    hits += usize::from(inside(px, py));
                }
            }
            if hits > 0 {
                let cov = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let p = &mut buf[y * width + x];
                *p = *p * (1.0 - cov) + obj.intensity * cov;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(start: [f64; 2], profile: &[(usize, f64)]) -> MotionSpec {
        MotionSpec {
            objects: vec![ObjectTrack {
                shape: Shape::Disc,
                size: 6.0,
                intensity: 1.0,
                path: Path::Linear { start, direction: [1.0, 0.0] },
                speed_profile: profile.iter().map(|&(frames, speed)| SpeedSegment { frames, speed }).collect(),
            }],
            background: Background::Uniform { level: 0.0 },
            camera_pan: [0.0, 0.0],
            camera_segments: vec![],
            texture_drift: [0.0, 0.0],
        }
    }

    /// Intensity-weighted centroid, independent of the renderer.
    fn centroid(f: &Frame) -> [f64; 2] {
        let (mut sx, mut sy, mut m) = (0.0, 0.0, 0.0);
        for y in 0..f.height() {
            for x in 0..f.width() {
                let v = f.intensity(x, y);
                sx += v * (x as f64 + 0.5);
                sy += v * (y as f64 + 0.5);
                m += v;
            }
        }
        [sx / m, sy / m]
    }

    #[test]
    fn zero_speed_frames_are_identical() {
        let mut spec = disc([16.0, 16.0], &[(16, 0.0)]);
        spec.background = Background::Noise { base: 0.5, amplitude: 0.3, cell: 4.0 };
        let c = generate_clip(&spec, 16, 32, 32, 7).unwrap();
        assert!(c.frames().all(|f| f == c.frame(0)));
    }

    #[test]
    fn linear_motion_centers() {
        let spec = disc([10.0, 10.0], &[(8, 2.0)]);
        let xs: Vec<f64> = spec.centers(0, 3).iter().map(|c| c[0]).collect();
        assert_eq!(xs, vec![10.0, 12.0, 14.0]);
        let clip = generate_clip(&spec, 3, 32, 32, 0).unwrap();
        for (t, want) in [10.0, 12.0, 14.0].into_iter().enumerate() {
            let c = centroid(clip.frame(t));
            assert!((c[0] - want).abs() < 0.05 && (c[1] - 10.0).abs() < 0.05, "{c:?}");
        }
    }

    #[test]
    fn piecewise_profile_read_back_by_centroid() {
        let spec = disc([6.0, 16.0], &[(16, 1.0), (16, 4.0)]);
        let clip = generate_clip(&spec, 32, 96, 32, 0).unwrap();
        let xs: Vec<f64> = clip.frames().map(|f| centroid(f)[0]).collect();
        let mut disp: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        disp.push(*disp.last().unwrap());
        let want: Vec<f64> = [1.0; 16].into_iter().chain([4.0; 16]).collect();
        for (d, w) in disp.iter().zip(&want) {
            assert!((d - w).abs() < 0.05, "{disp:?}");
        }
    }

    #[test]
    fn rejects_exit_with_first_timestep() {
        let spec = disc([10.0, 10.0], &[(100, 2.0)]);
        // x = 10 + 2t must stay <= 32 - 3 = 29, first failure at t = 10
        match generate_clip(&spec, 20, 32, 32, 0) {
            Err(Error::OutOfBounds { object: 0, timestep }) => assert_eq!(timestep, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let mut spec = disc([16.0, 16.0], &[(8, 1.0)]);
        spec.background = Background::Noise { base: 0.5, amplitude: 0.4, cell: 3.0 };
        let a = generate_clip(&spec, 8, 48, 32, 11).unwrap();
        let b = generate_clip(&spec, 8, 48, 32, 11).unwrap();
        let c = generate_clip(&spec, 8, 48, 32, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn circular_path_keeps_radius() {
        let spec = MotionSpec {
            objects: vec![ObjectTrack {
                shape: Shape::Square,
                size: 4.0,
                intensity: 0.9,
                path: Path::Circular { center: [20.0, 20.0], radius: 8.0, start_angle: 0.0 },
                speed_profile: vec![SpeedSegment { frames: 1, speed: 1.5 }],
            }],
            background: Background::Gradient { left: 0.1, right: 0.3 },
            camera_pan: [0.0, 0.0],
            camera_segments: vec![],
            texture_drift: [0.0, 0.0],
        };
        for c in spec.centers(0, 60) {
            assert!(((c[0] - 20.0).hypot(c[1] - 20.0) - 8.0).abs() < 1e-9);
        }
        assert!(generate_clip(&spec, 60, 40, 40, 0).is_ok());
    }

    #[test]
    fn camera_pan_moves_background() {
        let mut spec = disc([16.0, 16.0], &[(8, 0.0)]);
        spec.background = Background::Noise { base: 0.5, amplitude: 0.4, cell: 3.0 };
        spec.objects.clear();
        spec.camera_pan = [2.0, 0.0];
        let c = generate_clip(&spec, 2, 32, 32, 3).unwrap();
        // content moves left by 2 px
        for y in 0..32 {
            for x in 0..30 {
                assert_eq!(c.frame(1).get(x, y), c.frame(0).get(x + 2, y));
            }
        }
    }
}
