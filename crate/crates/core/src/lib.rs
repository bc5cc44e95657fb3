//! Parallax-tolerant two-image stitching: global affine alignment, local
//! mesh refinement, seam-guarded deformation and zone-based composition.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod chain;
pub mod compose;
pub mod config;
pub mod debug;
pub mod error;
pub mod field;
pub mod geometry;
mod linalg;
pub mod local_warp;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod ransac;
pub mod raster;
pub mod render;
pub mod synth;
pub mod zone;

pub use config::PipelineConfig;
pub use error::{Error, Result, Stage, StageError};
pub use image::{RgbImage, RgbaImage};
pub use geometry::{AffineTransform, BinaryMask, Point2, Polygon, Rect};
pub use matching::{Match, MatchSet};
pub use pipeline::{run_pipeline, PipelineOutput, StitchReport};
