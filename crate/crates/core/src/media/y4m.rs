//! YUV4MPEG2 reader and writer. Only the luma plane is kept; chroma planes
//! are skipped on read and written as neutral grey.

use super::frame::{Clip, Frame};
use crate::error::{Error, Result};

const SIGNATURE: &[u8] = b"YUV4MPEG2";
const FRAME_TAG: &[u8] = b"FRAME";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    Mono,
    C420,
    C422,
    C444,
}

impl Chroma {
    fn parse(tag: &str, offset: u64) -> Result<Self> {
        match tag {
            "mono" => Ok(Chroma::Mono),
            "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok(Chroma::C420),
            "422" => Ok(Chroma::C422),
            "444" => Ok(Chroma::C444),
            other => Err(Error::parse(offset, format!("unsupported colorspace C{other}"))),
        }
    }

    fn chroma_len(self, w: usize, h: usize) -> usize {
        match self {
            Chroma::Mono => 0,
            Chroma::C420 => 2 * w.div_ceil(2) * h.div_ceil(2),
            Chroma::C422 => 2 * w.div_ceil(2) * h,
            Chroma::C444 => 2 * w * h,
        }
    }
}

fn find_newline(bytes: &[u8], from: usize) -> Option<usize> {
    bytes[from..].iter().position(|&b| b == b'\n').map(|p| from + p)
}

fn parse_dim(value: &str, offset: u64, tag: char) -> Result<usize> {
    value
        .parse::<usize>()
        .ok()
        .filter(|&v| v > 0 && v <= 1 << 16)
        .ok_or_else(|| Error::parse(offset, format!("bad {tag} value {value:?}")))
}

fn parse_rate(value: &str, offset: u64) -> Result<f64> {
    let (num, den) =
        value.split_once(':').ok_or_else(|| Error::parse(offset, format!("frame rate {value:?} is not num:den")))?;
    let num: u64 = num.parse().map_err(|_| Error::parse(offset, format!("bad frame rate numerator {num:?}")))?;
    let den: u64 = den.parse().map_err(|_| Error::parse(offset, format!("bad frame rate denominator {den:?}")))?;
    if num == 0 || den == 0 {
        return Err(Error::parse(offset, format!("degenerate frame rate {value}")));
    }
    Ok(num as f64 / den as f64)
}

pub fn read_y4m(bytes: &[u8]) -> Result<Clip> {
    if !bytes.starts_with(SIGNATURE) {
        return Err(Error::parse(0, "missing YUV4MPEG2 signature"));
    }
    let header_end = find_newline(bytes, 0).ok_or_else(|| Error::parse(bytes.len() as u64, "unterminated header"))?;
    let header = std::str::from_utf8(&bytes[SIGNATURE.len()..header_end])
        .map_err(|e| Error::parse((SIGNATURE.len() + e.valid_up_to()) as u64, "header is not ASCII"))?;

    let (mut width, mut height, mut fps, mut chroma) = (None, None, None, Chroma::C420);
    let mut offset = SIGNATURE.len();
    for token in header.split(' ') {
        let tok_off = offset as u64;
        offset += token.len() + 1;
        let mut chars = token.chars();
        let Some(tag) = chars.next() else { continue };
        let value = chars.as_str();
        match tag {
            'W' => width = Some(parse_dim(value, tok_off, 'W')?),
            'H' => height = Some(parse_dim(value, tok_off, 'H')?),
            'F' => fps = Some(parse_rate(value, tok_off)?),
            'C' => chroma = Chroma::parse(value, tok_off)?,
            'I' | 'A' | 'X' => {}
            _ => return Err(Error::parse(tok_off, format!("unknown header tag {token:?}"))),
        }
    }
    let width = width.ok_or_else(|| Error::parse(header_end as u64, "header lacks W"))?;
    let height = height.ok_or_else(|| Error::parse(header_end as u64, "header lacks H"))?;
    let fps = fps.ok_or_else(|| Error::parse(header_end as u64, "header lacks F"))?;
    let luma_len = width * height;
    let chroma_len = chroma.chroma_len(width, height);

    let mut frames = Vec::new();
    let mut pos = header_end + 1;
    while pos < bytes.len() {
        if !bytes[pos..].starts_with(FRAME_TAG) {
            return Err(Error::parse(pos as u64, "expected FRAME marker"));
        }
        let line_end = find_newline(bytes, pos).ok_or_else(|| Error::parse(pos as u64, "unterminated FRAME marker"))?;
        let start = line_end + 1;
        let end = start + luma_len + chroma_len;
        if end > bytes.len() {
            return Err(Error::parse(
                start as u64,
                format!(
                    "frame {} truncated: needs {} bytes, {} available",
                    frames.len(),
                    luma_len + chroma_len,
                    bytes.len() - start
                ),
            ));
        }
        let frame = Frame::new(width, height, bytes[start..start + luma_len].to_vec())
            .map_err(|e| Error::parse(start as u64, e.to_string()))?;
        frames.push(frame);
        pos = end;
    }
    Clip::new(frames, fps, "").map_err(|e| Error::parse(bytes.len() as u64, e.to_string()))
}

/// Writes 4:2:0 with neutral chroma so that ordinary players accept the file.
pub fn write_y4m(clip: &Clip) -> Vec<u8> {
    let (w, h) = (clip.width(), clip.height());
    let (num, den) = rational(clip.fps());
    let chroma_len = Chroma::C420.chroma_len(w, h);
    let mut out = format!("YUV4MPEG2 W{w} H{h} F{num}:{den} Ip A1:1 C420jpeg\n").into_bytes();
    for f in clip.frames() {
        out.extend_from_slice(b"FRAME\n");
        out.extend_from_slice(f.luma());
        out.resize(out.len() + chroma_len, 128);
    }
    out
}

/// Best rational approximation with a denominator up to 1001 (covers the
/// NTSC family exactly).
fn rational(fps: f64) -> (u64, u64) {
    let mut best = (fps.round().max(1.0) as u64, 1u64);
    let mut best_err = (best.0 as f64 - fps).abs();
    for den in 2..=1001u64 {
        let num = (fps * den as f64).round();
        let err = (num / den as f64 - fps).abs();
        if num >= 1.0 && err + 1e-12 < best_err {
            best = (num as u64, den);
            best_err = err;
        }
    }
    best
}
