use super::frame::{quantize, Frame};
use crate::error::Result;

/// Bilinear resize with half-pixel centres. Resizing to the frame's own size
/// is exact.
pub fn resize_bilinear(frame: &Frame, width: usize, height: usize) -> Result<Frame> {
    let (sw, sh) = (frame.width(), frame.height());
    if sw == width && sh == height {
        return Ok(frame.clone());
    }
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let cols: Vec<(usize, usize, f64)> = (0..width).map(|x| taps(x, sx, sw)).collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, wy) = taps(y, sy, sh);
        for &(x0, x1, wx) in &cols {
            let top = lerp(frame.get(x0, y0), frame.get(x1, y0), wx);
            let bottom = lerp(frame.get(x0, y1), frame.get(x1, y1), wx);
            out.push(quantize((top + (bottom - top) * wy) / 255.0));
        }
    }
    Frame::new(width, height, out)
}

fn taps(dst: usize, scale: f64, src_len: usize) -> (usize, usize, f64) {
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, pos - i0 as f64)
}

#[inline]
fn lerp(a: u8, b: u8, w: f64) -> f64 {
    f64::from(a) + (f64::from(b) - f64::from(a)) * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_resize_is_exact() {
        let luma: Vec<u8> = (0..16 * 12).map(|i| (i * 7 % 256) as u8).collect();
        let f = Frame::new(16, 12, luma).unwrap();
        assert_eq!(resize_bilinear(&f, 16, 12).unwrap(), f);
    }

    #[test]
    fn constant_frame_stays_constant() {
        let f = Frame::filled(10, 10, 0.4).unwrap();
        let r = resize_bilinear(&f, 33, 21).unwrap();
        assert!(r.luma().iter().all(|&v| v == f.get(0, 0)));
    }

    #[test]
    fn downscale_by_two_averages_pairs() {
        // columns alternate 0, 200: half-pixel centres land midway
        let luma: Vec<u8> = (0..16 * 16).map(|i| if i % 2 == 0 { 0 } else { 200 }).collect();
        let f = Frame::new(16, 16, luma).unwrap();
        let r = resize_bilinear(&f, 8, 8).unwrap();
        assert!(r.luma().iter().all(|&v| v == 100));
    }
}
