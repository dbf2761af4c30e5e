//! On-disk dataset layout and ground-truth sidecars.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

pub fn manifest_path(data: &Path, split: &str) -> PathBuf {
    data.join(format!("{split}.txt"))
}

/// `video.spdv` -> `video.truth.json`.
pub fn truth_path(video: &Path) -> PathBuf {
    video.with_extension("truth.json")
}

/// Ground truth stored next to every generated video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    /// World time per frame step, in natural-speed frame intervals.
    pub world_step: Vec<f64>,
    pub seed: u64,
}

impl Truth {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read ground truth {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_text(path, &(serde_json::to_string(self).expect("truth serializes") + "\n"))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("value serializes") + "\n"))
}

fn canonical(p: &Path) -> PathBuf {
    if let Ok(c) = p.canonicalize() {
        return c;
    }
    // not created yet: resolve the parent and keep the name
    match (p.parent(), p.file_name()) {
        (Some(parent), Some(name)) if !parent.as_os_str().is_empty() => canonical(parent).join(name),
        _ => std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf()),
    }
}

/// Creates `out` and checks that no input is also an output.
pub fn prepare_out(out: &Path, inputs: &[&Path], outputs: &[&str]) -> Result<(), CliError> {
    let out_c = canonical(out);
    for input in inputs {
        let inp = canonical(input);
        if inp == out_c || outputs.iter().any(|name| out_c.join(name) == inp) {
            return Err(CliError::config(format!(
                "output {} would overwrite input {}",
                out.display(),
                input.display()
            )));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))
}
