use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{Match, MatchSet};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::raster::{to_gray, ScalarField};

const MIN_DIM: u32 = 32;
const PATCH: i64 = 16;

/// Bresenham circle of radius 3 used by the segment test.
const CIRCLE: [(i64, i64); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    /// Segment-test intensity margin, in 8-bit levels.
    pub fast_threshold: f32,
    /// Contiguous arc length required by the segment test.
    pub arc_length: usize,
    /// Strongest corners kept per image after non-maximum suppression.
    pub max_keypoints: usize,
    /// Nearest / second-nearest descriptor distance ratio.
    pub ratio: f32,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self { fast_threshold: 20.0, arc_length: 9, max_keypoints: 1500, ratio: 0.85 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Keypoint {
    x: u32,
    y: u32,
    score: f32,
}

fn corner_score(gray: &ScalarField, x: u32, y: u32, threshold: f32, arc: usize) -> f32 {
    let c = gray.get(x, y);
    let ring: [f32; 16] = std::array::from_fn(|i| {
        let (dx, dy) = CIRCLE[i];
        gray.get((x as i64 + dx) as u32, (y as i64 + dy) as u32)
    });
    let longest_run = |pred: &dyn Fn(f32) -> bool| {
        let mut best = 0usize;
        let mut run = 0usize;
        for i in 0..32 {
            if pred(ring[i % 16]) {
                run += 1;
                best = best.max(run.min(16));
            } else {
                run = 0;
            }
        }
        best
    };
    let bright = longest_run(&|v| v > c + threshold);
    let dark = longest_run(&|v| v < c - threshold);
    if bright < arc && dark < arc {
        return 0.0;
    }
    // Sum of absolute differences beyond the margin over the whole ring.
    ring.iter()
        .map(|&v| ((v - c).abs() - threshold).max(0.0))
        .sum()
}

fn detect(gray: &ScalarField, cfg: &MatcherConfig) -> Vec<Keypoint> {
    let (w, h) = (gray.width, gray.height);
    let margin = (PATCH / 2) as u32;
    let mut score = ScalarField::new(w, h);
    for y in margin..h - margin {
        for x in margin..w - margin {
            score.set(x, y, corner_score(gray, x, y, cfg.fast_threshold, cfg.arc_length));
        }
    }
    let mut kps = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let s = score.get(x, y);
            if s <= 0.0 {
                continue;
            }
            // 3x3 non-maximum suppression; ties resolved toward the earlier
            // pixel in row-major order.
            let mut is_max = true;
            'nms: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = score.get((x as i64 + dx) as u32, (y as i64 + dy) as u32);
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > s || (n == s && earlier) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                kps.push(Keypoint { x, y, score: s });
            }
        }
    }
    kps.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    kps.truncate(cfg.max_keypoints);
    kps
}

/// Zero-mean, unit-norm 16×16 intensity patch; `None` on flat patches.
fn describe(gray: &ScalarField, kp: &Keypoint) -> Option<Vec<f32>> {
    let half = PATCH / 2;
    let mut d = Vec::with_capacity((PATCH * PATCH) as usize);
    for dy in -half..half {
        for dx in -half..half {
            d.push(gray.get((kp.x as i64 + dx) as u32, (kp.y as i64 + dy) as u32));
        }
    }
    let mean = d.iter().sum::<f32>() / d.len() as f32;
    d.iter_mut().for_each(|v| *v -= mean);
    let norm = d.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm < 1e-3 {
        return None;
    }
    d.iter_mut().for_each(|v| *v /= norm);
    Some(d)
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Best and second-best correlation of `query` against `pool`.
fn nearest_two(query: &[f32], pool: &[Vec<f32>]) -> (usize, f32, f32) {
    let mut best = (usize::MAX, f32::NEG_INFINITY);
    let mut second = f32::NEG_INFINITY;
    for (j, cand) in pool.iter().enumerate() {
        let c = dot(query, cand);
        if c > best.1 {
            second = best.1;
            best = (j, c);
        } else if c > second {
            second = c;
        }
    }
    (best.0, best.1, second)
}

#[cfg(feature = "parallel")]
fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Corner detection, patch descriptors, mutual nearest neighbours and a ratio
/// test. Results are sorted by descending score, then by source `(y, x)`.
pub fn detect_and_match_builtin(
    source: &RgbImage,
    target: &RgbImage,
    max_matches: u32,
    cfg: &MatcherConfig,
) -> Result<MatchSet> {
    for img in [source, target] {
        let (w, h) = img.dimensions();
        if w < MIN_DIM || h < MIN_DIM {
            return Err(Error::ImageTooSmall { width: w, height: h, min: MIN_DIM });
        }
    }
    let gs = to_gray(source);
    let gt = to_gray(target);

    let describe_all = |g: &ScalarField| -> (Vec<Keypoint>, Vec<Vec<f32>>) {
        detect(g, cfg)
            .into_iter()
            .filter_map(|kp| describe(g, &kp).map(|d| (kp, d)))
            .unzip()
    };
    let (kps_s, desc_s) = describe_all(&gs);
    let (kps_t, desc_t) = describe_all(&gt);
    if kps_s.is_empty() || kps_t.is_empty() {
        return Err(Error::NoMatchesFound);
    }

    let forward = map_indices(desc_s.len(), |i| nearest_two(&desc_s[i], &desc_t));
    let backward = map_indices(desc_t.len(), |j| nearest_two(&desc_t[j], &desc_s).0);

    let mut matches = Vec::new();
    for (i, &(j, c1, c2)) in forward.iter().enumerate() {
        if backward[j] != i {
            continue;
        }
        // Unit vectors: ‖a − b‖ = sqrt(2 − 2·corr).
        let d1 = (2.0 - 2.0 * c1).max(0.0).sqrt();
        let d2 = (2.0 - 2.0 * c2).max(0.0).sqrt();
        if c2.is_finite() && d1 >= cfg.ratio * d2 {
            continue;
        }
        let (s, t) = (kps_s[i], kps_t[j]);
        matches.push(Match::new(
            Point2::new(s.x as f64 + 0.5, s.y as f64 + 0.5),
            Point2::new(t.x as f64 + 0.5, t.y as f64 + 0.5),
            ((1.0 + c1 as f64) / 2.0).clamp(0.0, 1.0),
        ));
    }
    if matches.is_empty() {
        return Err(Error::NoMatchesFound);
    }
    matches.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y_s.total_cmp(&b.y_s))
            .then(a.x_s.total_cmp(&b.x_s))
    });
    matches.truncate(max_matches as usize);
    MatchSet::new(source.dimensions(), target.dimensions(), matches)
}
