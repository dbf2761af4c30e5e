//! Self-supervised playback-speed classification and content-adaptive video
//! retiming.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`media`] and [`sampler`] build normal-speed and sped-up training clips
//!    from (synthetic) source videos.
//! 2. [`flow`] and [`model`] turn each clip into a per-frame mean flow
//!    magnitude series and train a small classifier on it.
//! 3. [`speediness`] runs any [`model::Predictor`] over a stack of
//!    progressively sped-up variants of a video and reduces the predictions
//!    to a per-frame admissible speedup.
//! 4. [`retime`] solves a quadratic program for a smooth speedup curve that
//!    hits a target overall rate, and [`schedule`] turns that curve into a
//!    concrete frame schedule.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod error;
pub mod flow;
pub mod media;
pub mod model;
pub mod retime;
pub mod sampler;
pub mod schedule;
pub mod speediness;

pub use error::{Error, Result};
