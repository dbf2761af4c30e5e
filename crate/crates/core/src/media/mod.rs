//! Video representation, file I/O, synthetic video generation and temporal
//! subsampling.
//!
//! Video is single-channel: a [`Frame`] stores 8-bit luma and exposes it as
//! intensities in `[0, 1]` (`value / 255`).

mod frame;
mod resize;
mod spdv;
mod synth;
mod y4m;

pub use frame::{subsample, Clip, Frame, MIN_DIM};
pub use resize::resize_bilinear;
pub use spdv::{read_spdv, write_spdv, SPDV_MAGIC};
pub use synth::{generate_clip, Background, CameraSegment, MotionSpec, ObjectTrack, Path, Shape, SpeedSegment};
pub use y4m::{read_y4m, write_y4m};

use std::path::Path as FsPath;

use crate::error::{Error, Result};

/// Container format of a video file, picked from its extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VideoFormat {
    Y4m,
    Spdv,
}

impl VideoFormat {
    pub fn from_path(path: &FsPath) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "y4m" => Ok(VideoFormat::Y4m),
            Some(ext) if ext == "spdv" || ext == "raw" => Ok(VideoFormat::Spdv),
            _ => {
                Err(Error::invalid(format!("cannot infer video format of {} (expected .y4m or .spdv)", path.display())))
            }
        }
    }
}

/// Loads a clip, dispatching on the file extension.
pub fn load_video(path: impl AsRef<FsPath>) -> Result<Clip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    let source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut clip = match VideoFormat::from_path(path)? {
        VideoFormat::Y4m => read_y4m(&bytes)?,
        VideoFormat::Spdv => read_spdv(&bytes)?,
    };
    clip.set_source_id(source_id);
    Ok(clip)
}

/// Saves a clip, dispatching on the file extension.
pub fn save_video(clip: &Clip, path: impl AsRef<FsPath>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match VideoFormat::from_path(path)? {
        VideoFormat::Y4m => write_y4m(clip),
        VideoFormat::Spdv => write_spdv(clip)?,
    };
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}
