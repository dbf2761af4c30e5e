//! The raw `SPDV` container: a 20-byte little-endian header
//! `{magic "SPDV", u32 width, u32 height, u32 n_frames, f32 fps}` followed by
//! `n_frames * width * height` luma bytes.

use super::frame::{Clip, Frame};
use crate::error::{Error, Result};

pub const SPDV_MAGIC: &[u8; 4] = b"SPDV";
const HEADER_LEN: usize = 20;

pub fn write_spdv(clip: &Clip) -> Result<Vec<u8>> {
    let (w, h) = (clip.width(), clip.height());
    let dims = [w, h, clip.len()]
        .map(|v| u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit a u32 header field"))));
    let mut out = Vec::with_capacity(HEADER_LEN + clip.len() * w * h);
    out.extend_from_slice(SPDV_MAGIC);
    for d in dims {
        out.extend_from_slice(&d?.to_le_bytes());
    }
    out.extend_from_slice(&(clip.fps() as f32).to_le_bytes());
    for f in clip.frames() {
        out.extend_from_slice(f.luma());
    }
    Ok(out)
}

pub fn read_spdv(bytes: &[u8]) -> Result<Clip> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(bytes.len() as u64, format!("header needs {HEADER_LEN} bytes")));
    }
    if &bytes[..4] != SPDV_MAGIC {
        return Err(Error::parse(0, "bad magic, expected \"SPDV\""));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let (width, height, n_frames) = (u32_at(4), u32_at(8), u32_at(12));
    let fps = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::parse(16, format!("fps must be positive, got {fps}")));
    }
    let frame_len = width.checked_mul(height).ok_or_else(|| Error::parse(4, "frame size overflows"))?;
    if frame_len == 0 {
        return Err(Error::parse(4, format!("empty frame size {width}x{height}")));
    }
    let mut frames = Vec::with_capacity(n_frames.min(bytes.len() / frame_len + 1));
    for i in 0..n_frames {
        let start = HEADER_LEN + i * frame_len;
        let end = start + frame_len;
        if end > bytes.len() {
            return Err(Error::parse(
                start as u64,
                format!(
                    "frame {i} truncated: needs {frame_len} bytes, {} available",
                    bytes.len().saturating_sub(start)
                ),
            ));
        }
        let frame =
            Frame::new(width, height, bytes[start..end].to_vec()).map_err(|e| Error::parse(4, e.to_string()))?;
        frames.push(frame);
    }
    let trailing = HEADER_LEN + n_frames * frame_len;
    if trailing != bytes.len() {
        return Err(Error::parse(trailing as u64, "trailing bytes after last frame"));
    }
    Clip::new(frames, f64::from(fps), "").map_err(|e| Error::parse(12, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip() -> Clip {
        let frames = (0..4)
            .map(|k| Frame::new(16, 16, (0..256).map(|i| ((i * 3 + k * 17) % 256) as u8).collect()).unwrap())
            .collect();
        Clip::new(frames, 25.0, "c").unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let c = clip();
        let back = read_spdv(&write_spdv(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn header_layout() {
        let b = write_spdv(&clip()).unwrap();
        assert_eq!(&b[..4], b"SPDV");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 16);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 4);
        assert_eq!(f32::from_le_bytes(b[16..20].try_into().unwrap()), 25.0);
        assert_eq!(b.len(), 20 + 4 * 256);
    }

    #[test]
    fn truncated_final_frame_reports_its_offset() {
        let mut b = write_spdv(&clip()).unwrap();
        b.truncate(b.len() - 10);
        match read_spdv(&b) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 20 + 3 * 256),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_short_header() {
        assert!(matches!(read_spdv(b"SPDX0000000000000000"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(read_spdv(b"SPDV"), Err(Error::Parse { offset: 4, .. })));
    }

    #[test]
    fn huge_dimensions_do_not_allocate() {
        let mut b = Vec::from(*SPDV_MAGIC);
        for v in [u32::MAX, u32::MAX, u32::MAX] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&25f32.to_le_bytes());
        assert!(read_spdv(&b).is_err());
    }
}
