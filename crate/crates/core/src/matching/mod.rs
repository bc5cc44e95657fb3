//! Keypoint correspondences: the in-memory match set, its JSON file format
//! and a built-in corner/patch matcher.

mod builtin;
mod file;

pub use builtin::{detect_and_match_builtin, MatcherConfig};
pub use file::{load_match_file, parse_match_json, save_match_file, to_match_json};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// One correspondence between a source and a target pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    #[serde(rename = "xs")]
    pub x_s: f64,
    #[serde(rename = "ys")]
    pub y_s: f64,
    #[serde(rename = "xt")]
    pub x_t: f64,
    #[serde(rename = "yt")]
    pub y_t: f64,
    pub score: f64,
}

impl Match {
    pub fn new(source: Point2, target: Point2, score: f64) -> Self {
        Self { x_s: source.x, y_s: source.y, x_t: target.x, y_t: target.y, score }
    }

    pub fn source(&self) -> Point2 {
        Point2::new(self.x_s, self.y_s)
    }

    pub fn target(&self) -> Point2 {
        Point2::new(self.x_t, self.y_t)
    }

    fn is_valid(&self, source_dims: (u32, u32), target_dims: (u32, u32)) -> bool {
        let inside = |x: f64, y: f64, (w, h): (u32, u32)| {
            x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0 && x <= w as f64 && y <= h as f64
        };
        inside(self.x_s, self.y_s, source_dims)
            && inside(self.x_t, self.y_t, target_dims)
            && self.score.is_finite()
            && (0.0..=1.0).contains(&self.score)
    }
}

/// Ordered correspondences together with the dimensions of both images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub source_dims: (u32, u32),
    pub target_dims: (u32, u32),
    pub matches: Vec<Match>,
}

impl MatchSet {
    /// Validates every match against the image bounds, reporting the index of
    /// the first offender.
    pub fn new(source_dims: (u32, u32), target_dims: (u32, u32), matches: Vec<Match>) -> Result<Self> {
        if let Some(i) = matches.iter().position(|m| !m.is_valid(source_dims, target_dims)) {
            return Err(Error::Bounds(i));
        }
        Ok(Self { source_dims, target_dims, matches })
    }

    pub fn empty(source_dims: (u32, u32), target_dims: (u32, u32)) -> Self {
        Self { source_dims, target_dims, matches: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// The subset at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> MatchSet {
        MatchSet {
            source_dims: self.source_dims,
            target_dims: self.target_dims,
            matches: indices.iter().map(|&i| self.matches[i]).collect(),
        }
    }

    /// Swaps the roles of source and target.
    pub fn swapped(&self) -> MatchSet {
        MatchSet {
            source_dims: self.target_dims,
            target_dims: self.source_dims,
            matches: self
                .matches
                .iter()
                .map(|m| Match { x_s: m.x_t, y_s: m.y_t, x_t: m.x_s, y_t: m.y_s, score: m.score })
                .collect(),
        }
    }
}
