//! Keypoint chain refinement and the stitching line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::raster::ScalarField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Allowed intensity gap, in 8-bit levels, between the two sides of a
    /// pair and between a source sample and the zone median.
    pub brightness_tol: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { brightness_tol: 20.0 }
    }
}

/// Ordered canvas correspondences with strictly increasing source x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointChain {
    pub src_points: Vec<Point2>,
    pub tgt_points: Vec<Point2>,
    /// Source-layer intensity at each source point.
    pub intensities: Vec<f64>,
}

impl KeypointChain {
    pub fn len(&self) -> usize {
        self.src_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src_points.is_empty()
    }

    pub fn pairs(&self) -> Vec<(Point2, Point2)> {
        self.src_points.iter().copied().zip(self.tgt_points.iter().copied()).collect()
    }

    /// Keeps the entries at `keep` (ascending positions).
    pub fn select(&self, keep: &[usize]) -> KeypointChain {
        KeypointChain {
            src_points: keep.iter().map(|&i| self.src_points[i]).collect(),
            tgt_points: keep.iter().map(|&i| self.tgt_points[i]).collect(),
            intensities: keep.iter().map(|&i| self.intensities[i]).collect(),
        }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Order used to break distance ties so the walk does not depend on input
/// order.
fn tie_order(a: Point2, b: Point2) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Greedy rightward walk over `candidates` (positions into `src`), starting at
/// the point nearest `left`.
fn walk(src: &[Point2], candidates: &[usize], left: f64) -> Vec<usize> {
    let Some(&anchor) = candidates.iter().min_by(|&&a, &&b| {
        (src[a].x - left).abs().total_cmp(&(src[b].x - left).abs()).then(tie_order(src[a], src[b]))
    }) else {
        return Vec::new();
    };
    let mut path = vec![anchor];
    let mut cur = anchor;
    loop {
        let next = candidates
            .iter()
            .copied()
            .filter(|&j| src[j].x > src[cur].x)
            .min_by(|&a, &b| {
                src[cur].distance(src[a]).total_cmp(&src[cur].distance(src[b])).then(tie_order(src[a], src[b]))
            });
        match next {
            Some(n) => {
                path.push(n);
                cur = n;
            }
            None => break,
        }
    }
    path
}

/// Brightness filtering followed by a greedy nearest-neighbour walk that
/// enforces unique, increasing source x. The two steps alternate until the
/// surviving set stops changing, so the result is a fixed point.
pub fn refine_chain(
    zone_pairs: &[(Point2, Point2)],
    source_gray: &ScalarField,
    target_gray: &ScalarField,
    zone_left: f64,
    cfg: &ChainConfig,
) -> Result<KeypointChain> {
    if zone_pairs.len() < 2 {
        return Err(Error::ChainTooShort(zone_pairs.len()));
    }
    let src: Vec<Point2> = zone_pairs.iter().map(|p| p.0).collect();
    let i_src: Vec<f64> = src.iter().map(|p| source_gray.sample_bilinear(p.x, p.y) as f64).collect();
    let i_tgt: Vec<f64> = zone_pairs.iter().map(|p| target_gray.sample_bilinear(p.1.x, p.1.y) as f64).collect();
    let tol = cfg.brightness_tol;

    let mut current: Vec<usize> = (0..zone_pairs.len()).collect();
    loop {
        let med = median(&current.iter().map(|&i| i_src[i]).collect::<Vec<_>>());
        let kept: Vec<usize> = current
            .iter()
            .copied()
            .filter(|&i| (i_src[i] - i_tgt[i]).abs() <= tol && (i_src[i] - med).abs() <= tol)
            .collect();
        let next = walk(&src, &kept, zone_left);
        let mut sorted = next.clone();
        sorted.sort_unstable();
        let mut prev = current.clone();
        prev.sort_unstable();
        if sorted == prev || next.len() < 2 {
            current = next;
            break;
        }
        current = next;
    }
    if current.len() < 2 {
        return Err(Error::ChainTooShort(current.len()));
    }
    Ok(KeypointChain {
        src_points: current.iter().map(|&i| zone_pairs[i].0).collect(),
        tgt_points: current.iter().map(|&i| zone_pairs[i].1).collect(),
        intensities: current.iter().map(|&i| i_src[i]).collect(),
    })
}

/// Seam geometry on the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StitchLine {
    /// Polyline through the refined chain's source points.
    Chain(Vec<Point2>),
    /// Vertical line through the zone center, used when refinement fails.
    Midline { x: f64 },
}

impl StitchLine {
    /// Slice-boundary abscissae, strictly increasing.
    pub fn anchors_x(&self) -> Vec<f64> {
        match self {
            StitchLine::Chain(pts) => pts.iter().map(|p| p.x).collect(),
            StitchLine::Midline { x } => vec![*x],
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, StitchLine::Midline { .. })
    }

    /// Polyline vertices for drawing, spanning `[0, height]` for the midline.
    pub fn polyline(&self, height: u32) -> Vec<Point2> {
        match self {
            StitchLine::Chain(pts) => pts.clone(),
            StitchLine::Midline { x } => vec![Point2::new(*x, 0.0), Point2::new(*x, height as f64)],
        }
    }
}

pub fn stitching_line(chain: &KeypointChain) -> StitchLine {
    StitchLine::Chain(chain.src_points.clone())
}

pub fn zone_midline(zone: (f64, f64)) -> StitchLine {
    StitchLine::Midline { x: 0.5 * (zone.0 + zone.1) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(v: f32) -> ScalarField {
        ScalarField::filled(400, 200, v)
    }

    fn pairs_on(points: &[(f64, f64)]) -> Vec<(Point2, Point2)> {
        points.iter().map(|&(x, y)| (Point2::new(x, y), Point2::new(x - 1.0, y))).collect()
    }

    #[test]
    fn increasing_line_is_kept_in_order() {
        let pts = pairs_on(&[(10.0, 50.0), (20.0, 52.0), (30.0, 51.0), (45.0, 49.0)]);
        let c = refine_chain(&pts, &flat(100.0), &flat(100.0), 5.0, &ChainConfig::default()).unwrap();
        assert_eq!(c.src_points, pts.iter().map(|p| p.0).collect::<Vec<_>>());
        assert_eq!(c.intensities, vec![100.0; 4]);
    }

    #[test]
    fn duplicate_x_keeps_nearer() {
        let pts = pairs_on(&[(10.0, 50.0), (20.0, 52.0), (20.0, 90.0), (30.0, 51.0)]);
        let c = refine_chain(&pts, &flat(100.0), &flat(100.0), 0.0, &ChainConfig::default()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.src_points[1], Point2::new(20.0, 52.0));
    }

    #[test]
    fn bright_outlier_is_pruned() {
        let mut img = flat(100.0);
        for y in 0..200 {
            img.set(30, y, 200.0);
        }
        let pts = pairs_on(&[(10.5, 50.5), (20.5, 50.5), (30.5, 50.5), (40.5, 50.5)]);
        // Target samples see the same intensities one pixel to the left.
        let mut tgt = flat(100.0);
        for y in 0..200 {
            tgt.set(29, y, 200.0);
        }
        let c = refine_chain(&pts, &img, &tgt, 0.0, &ChainConfig { brightness_tol: 20.0 }).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.src_points.iter().all(|p| p.x != 30.5));
    }

    #[test]
    fn pairwise_mismatch_is_pruned() {
        let pts = pairs_on(&[(10.5, 50.5), (20.5, 50.5), (30.5, 50.5)]);
        let mut tgt = flat(100.0);
        tgt.set(19, 50, 160.0);
        let c = refine_chain(&pts, &flat(100.0), &tgt, 0.0, &ChainConfig::default()).unwrap();
        assert_eq!(c.src_points, vec![Point2::new(10.5, 50.5), Point2::new(30.5, 50.5)]);
    }

    #[test]
    fn too_short() {
        let one = pairs_on(&[(10.0, 10.0)]);
        assert!(matches!(
            refine_chain(&one, &flat(0.0), &flat(0.0), 0.0, &ChainConfig::default()),
            Err(Error::ChainTooShort(1))
        ));
        let same_x = pairs_on(&[(10.0, 10.0), (10.0, 40.0)]);
        assert!(matches!(
            refine_chain(&same_x, &flat(0.0), &flat(0.0), 0.0, &ChainConfig::default()),
            Err(Error::ChainTooShort(1))
        ));
    }

    #[test]
    fn line_shapes() {
        let c = KeypointChain {
            src_points: vec![Point2::new(1.0, 2.0), Point2::new(5.0, 2.0)],
            tgt_points: vec![Point2::new(0.0, 2.0), Point2::new(4.0, 2.0)],
            intensities: vec![0.0, 0.0],
        };
        assert_eq!(stitching_line(&c).polyline(10).len(), 2);
        assert_eq!(zone_midline((40.0, 60.0)).anchors_x(), vec![50.0]);
        assert!(zone_midline((40.0, 60.0)).is_fallback());
    }

    proptest! {
        #[test]
        fn chain_laws(raw in prop::collection::vec((0.0..390.0f64, 0.0..190.0f64, 0.0..60.0f32), 2..60), tol in 5.0..40.0f64) {
            let pts: Vec<(Point2, Point2)> = raw.iter().map(|&(x, y, _)| (Point2::new(x, y), Point2::new(x - 3.0, y))).collect();
            let src = ScalarField::from_fn(400, 200, |x, y| ((x * 7 + y * 13) % 60) as f32 + 80.0);
            let tgt = ScalarField::from_fn(400, 200, |x, y| ((x * 7 + 21 + y * 13) % 60) as f32 + 80.0);
            let cfg = ChainConfig { brightness_tol: tol };
            if let Ok(c) = refine_chain(&pts, &src, &tgt, 0.0, &cfg) {
                prop_assert!(c.len() >= 2);
                for w in c.src_points.windows(2) {
                    prop_assert!(w[1].x > w[0].x);
                }
                for p in c.pairs() {
                    prop_assert!(pts.contains(&p));
                }
                let again = refine_chain(&c.pairs(), &src, &tgt, 0.0, &cfg).unwrap();
                prop_assert_eq!(again, c);
            }
        }
    }
}
