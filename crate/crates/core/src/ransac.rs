//! Robust global affine estimation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineTransform, Point2};
use crate::linalg::solve3;
use crate::matching::{Match, MatchSet};

/// Twice the triangle area below which a minimal sample counts as collinear.
const COLLINEAR_AREA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub inlier_threshold: f64,
    pub iterations: u32,
    pub min_matches: u32,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { inlier_threshold: 3.0, iterations: 2000, min_matches: 3, rng_seed: 0 }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidConfig("ransac.inlier_threshold must be positive".into()));
        }
        if self.min_matches < 3 {
            return Err(Error::InvalidConfig("ransac.min_matches must be at least 3".into()));
        }
        Ok(())
    }
}

/// Exact affine through three correspondences, `None` when the source points
/// are collinear.
pub fn affine_from_three(m: [&Match; 3]) -> Option<AffineTransform> {
    let [a, b, c] = m.map(|m| m.source());
    let area2 = (b - a).x * (c - a).y - (b - a).y * (c - a).x;
    if area2.abs() < COLLINEAR_AREA {
        return None;
    }
    let design = [[a.x, a.y, 1.0], [b.x, b.y, 1.0], [c.x, c.y, 1.0]];
    let row0 = solve3(design, [m[0].x_t, m[1].x_t, m[2].x_t])?;
    let row1 = solve3(design, [m[0].y_t, m[1].y_t, m[2].y_t])?;
    Some(AffineTransform::from_rows(row0, row1))
}

/// Ordinary least-squares affine over `matches`. Coordinates are centred
/// before forming the normal equations.
pub fn fit_affine_lstsq(matches: &[Match]) -> Result<AffineTransform> {
    if matches.len() < 3 {
        return Err(Error::TooFewMatches { required: 3, got: matches.len() });
    }
    let n = matches.len() as f64;
    let cs = matches.iter().fold(Point2::default(), |acc, m| acc + m.source()) * (1.0 / n);
    let ct = matches.iter().fold(Point2::default(), |acc, m| acc + m.target()) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut bx, mut by) = ([0.0; 2], [0.0; 2]);
    for m in matches {
        let s = m.source() - cs;
        let t = m.target() - ct;
        sxx += s.x * s.x;
        sxy += s.x * s.y;
        syy += s.y * s.y;
        bx[0] += s.x * t.x;
        bx[1] += s.y * t.x;
        by[0] += s.x * t.y;
        by[1] += s.y * t.y;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() <= 1e-9 * (sxx * syy).max(1e-300) {
        return Err(Error::DegenerateConfiguration);
    }
    let solve2 = |b: [f64; 2]| [(syy * b[0] - sxy * b[1]) / det, (sxx * b[1] - sxy * b[0]) / det];
    let [a, bb] = solve2(bx);
    let [c, d] = solve2(by);
    // Undo the centring: t = L (s − cs) + ct.
    let tx = ct.x - (a * cs.x + bb * cs.y);
    let ty = ct.y - (c * cs.x + d * cs.y);
    Ok(AffineTransform::from_rows([a, bb, tx], [c, d, ty]))
}

fn residual(t: &AffineTransform, m: &Match) -> f64 {
    t.map(m.source()).distance(m.target())
}

fn inliers_of(t: &AffineTransform, matches: &[Match], threshold: f64) -> Vec<usize> {
    matches
        .iter()
        .enumerate()
        .filter(|(_, m)| residual(t, m) <= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// RANSAC over minimal three-point samples followed by a least-squares refit
/// on the largest consensus set. Returns the refit transform and the indices
/// of matches within `inlier_threshold` of it.
pub fn estimate_affine_ransac(ms: &MatchSet, cfg: &RansacConfig) -> Result<(AffineTransform, Vec<usize>)> {
    cfg.validate()?;
    let matches = &ms.matches;
    let required = (cfg.min_matches as usize).max(3);
    if matches.len() < required {
        return Err(Error::TooFewMatches { required, got: matches.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<Vec<usize>> = None;
    for _ in 0..cfg.iterations.max(1) {
        let idx = rand::seq::index::sample(&mut rng, matches.len(), 3);
        let sample = [&matches[idx.index(0)], &matches[idx.index(1)], &matches[idx.index(2)]];
        let Some(model) = affine_from_three(sample) else {
            continue;
        };
        let inliers = inliers_of(&model, matches, cfg.inlier_threshold);
        if best.as_ref().is_none_or(|b| inliers.len() > b.len()) {
            let all = inliers.len() == matches.len();
            best = Some(inliers);
            if all {
                break;
            }
        }
    }
    let consensus = best.ok_or(Error::DegenerateConfiguration)?;
    let support: Vec<Match> = consensus.iter().map(|&i| matches[i]).collect();
    let refit = fit_affine_lstsq(&support)?;
    let inliers = inliers_of(&refit, matches, cfg.inlier_threshold);
    Ok((refit, inliers))
}
