//! Exhaustive block-matching optical flow and the per-frame mean flow
//! magnitude feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{Clip, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub block_size: usize,
    pub search_radius: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { block_size: 8, search_radius: 7 }
    }
}

/// Integer displacement per block, row-major over the block grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowField {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_size: usize,
    pub search_radius: usize,
    pub vectors: Vec<(i32, i32)>,
}

impl FlowField {
    pub fn at(&self, bx: usize, by: usize) -> (i32, i32) {
        self.vectors[by * self.blocks_x + bx]
    }

    pub fn mean_magnitude(&self) -> f64 {
        let sum: f64 = self.vectors.iter().map(|&(dx, dy)| f64::from(dx).hypot(f64::from(dy))).sum();
        sum / self.vectors.len() as f64
    }
}

/// Candidate offsets in tie-break order: smallest `|dx| + |dy|`, then
/// smallest `dy`, then smallest `dx`.
fn candidates(radius: i32) -> Vec<(i32, i32)> {
    let mut c: Vec<(i32, i32)> = (-radius..=radius).flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy))).collect();
    c.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
    c
}

/// For each block of `a`, the displacement into `b` with the smallest sum
/// of absolute differences. Candidates reaching outside `b` are skipped.
pub fn block_flow(a: &Frame, b: &Frame, block_size: usize, search_radius: usize) -> Result<FlowField> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", a.width(), a.height()),
            actual: format!("{}x{}", b.width(), b.height()),
        });
    }
    if block_size == 0 || search_radius == 0 {
        return Err(Error::invalid("block size and search radius must be >= 1"));
    }
    let (w, h) = (a.width(), a.height());
    let (bx_n, by_n) = (w / block_size, h / block_size);
    if bx_n == 0 || by_n == 0 {
        return Err(Error::invalid(format!("block size {block_size} exceeds frame {w}x{h}")));
    }
    let order = candidates(search_radius as i32);
    let (la, lb) = (a.luma(), b.luma());
    let mut vectors = Vec::with_capacity(bx_n * by_n);
    for by in 0..by_n {
        for bx in 0..bx_n {
            let (x0, y0) = ((bx * block_size) as i32, (by * block_size) as i32);
            let mut best = u32::MAX;
            let mut best_v = (0, 0);
            for &(dx, dy) in &order {
                let (cx, cy) = (x0 + dx, y0 + dy);
                if cx < 0 || cy < 0 || cx as usize + block_size > w || cy as usize + block_size > h {
                    continue;
                }
                // Candidates come in tie-break order, so an equal partial sum
                // can never win and the scan may stop early.
                let mut sad = 0u32;
                for row in 0..block_size {
                    let ra = (y0 as usize + row) * w + x0 as usize;
                    let rb = (cy as usize + row) * w + cx as usize;
                    sad += la[ra..ra + block_size]
                        .iter()
                        .zip(&lb[rb..rb + block_size])
                        .map(|(&p, &q)| u32::from(p.abs_diff(q)))
                        .sum::<u32>();
                    if sad >= best {
                        break;
                    }
                }
                if sad < best {
                    best = sad;
                    best_v = (dx, dy);
                }
            }
            vectors.push(best_v);
        }
    }
    Ok(FlowField { blocks_x: bx_n, blocks_y: by_n, block_size, search_radius, vectors })
}

/// Per-frame mean flow magnitude in px/frame, one value per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSeries(pub Vec<f64>);

impl FlowSeries {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Mean magnitude between each consecutive frame pair of `clip`.
pub fn pair_magnitudes(clip: &Clip, cfg: FlowConfig) -> Result<Vec<f64>> {
    (0..clip.len() - 1)
        .map(|t| Ok(block_flow(clip.frame(t), clip.frame(t + 1), cfg.block_size, cfg.search_radius)?.mean_magnitude()))
        .collect()
}

/// Extends `T - 1` pair magnitudes to a length-`T` series by repeating the
/// last value.
pub fn series_from_pairs(pairs: &[f64]) -> FlowSeries {
    let mut v = pairs.to_vec();
    if let Some(&last) = pairs.last() {
        v.push(last);
    }
    FlowSeries(v)
}

pub fn mean_flow_series(clip: &Clip, cfg: FlowConfig) -> Result<FlowSeries> {
    Ok(series_from_pairs(&pair_magnitudes(clip, cfg)?))
}
