//! Slice partitioning at chain anchors and the final blend.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::chain::KeypointChain;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::raster::{for_each_row, gaussian_kernel, ScalarField};
use crate::render::Canvas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeConfig {
    pub seam_sigma: f64,
    /// Half-width, in pixels, of the smoothed band around each boundary.
    pub seam_band: u32,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self { seam_sigma: 2.0, seam_band: 8 }
    }
}

impl ComposeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.seam_sigma >= 0.0) {
            return Err(Error::InvalidConfig("compose.seam_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Consecutive anchors `A, B` in the source chain and their target
/// counterparts `A', B'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub a: Point2,
    pub b: Point2,
    pub a_t: Point2,
    pub b_t: Point2,
    pub valid: bool,
}

/// Both segments run the same horizontal direction, and neither is
/// degenerate.
pub fn segment_direction_valid(x_a: f64, x_b: f64, x_a_t: f64, x_b_t: f64) -> bool {
    (x_a > x_b && x_a_t > x_b_t) || (x_a < x_b && x_a_t < x_b_t)
}

/// Checks every consecutive anchor pair, dropping the later anchor of each
/// inconsistent pair and re-pairing until all remaining segments agree.
/// Returns the repaired chain and every segment examined.
pub fn validate_segments(chain: &KeypointChain) -> Result<(KeypointChain, Vec<SegmentPair>)> {
    if chain.len() < 2 {
        return Err(Error::ChainTooShort(chain.len()));
    }
    let (s, t) = (&chain.src_points, &chain.tgt_points);
    let mut keep = vec![0usize];
    let mut examined = Vec::new();
    for j in 1..chain.len() {
        let i = *keep.last().expect("non-empty");
        let valid = segment_direction_valid(s[i].x, s[j].x, t[i].x, t[j].x);
        examined.push(SegmentPair { a: s[i], b: s[j], a_t: t[i], b_t: t[j], valid });
        if valid {
            keep.push(j);
        }
    }
    if keep.len() < 2 {
        return Err(Error::AllSegmentsInvalid);
    }
    Ok((chain.select(&keep), examined))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Source,
    Target,
}

impl Layer {
    pub fn other(self) -> Layer {
        match self {
            Layer::Source => Layer::Target,
            Layer::Target => Layer::Source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ownership {
    SourceOnly,
    TargetOnly,
    Blend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    /// Columns whose centers fall in `[x_lo, x_hi)`.
    pub col_lo: u32,
    pub col_hi: u32,
    pub x_lo: f64,
    pub x_hi: f64,
    pub ownership: Ownership,
    /// Layer whose weight starts at 1 on the left edge of a blend slice.
    pub left_layer: Option<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub boundaries: Vec<f64>,
    pub slices: Vec<Slice>,
}

impl PartitionPlan {
    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }
}

fn column_range(x_lo: f64, x_hi: f64, width: u32) -> (u32, u32) {
    // Column c belongs to the slice when c + 0.5 ∈ [x_lo, x_hi).
    let lo = (x_lo - 0.5).ceil().clamp(0.0, width as f64) as u32;
    let hi = (x_hi - 0.5).ceil().clamp(0.0, width as f64) as u32;
    (lo, hi.max(lo))
}

/// Splits the canvas into `n + 1` vertical slices at the anchor abscissae and
/// assigns each an owner by layer coverage.
pub fn partition_slices(anchors_x: &[f64], canvas: &Canvas) -> Result<PartitionPlan> {
    if anchors_x.is_empty() {
        return Err(Error::NoAnchors);
    }
    if anchors_x.windows(2).any(|w| !(w[1] > w[0])) || anchors_x.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig("anchors must be finite and strictly increasing".into()));
    }
    let (w, h) = (canvas.width(), canvas.height());
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend_from_slice(anchors_x);
    edges.push(f64::INFINITY);

    let mut slices = Vec::with_capacity(edges.len() - 1);
    for e in edges.windows(2) {
        let (col_lo, col_hi) = column_range(e[0], e[1], w);
        let (mut src, mut tgt, mut both) = (0usize, 0usize, 0usize);
        for y in 0..h {
            for x in col_lo..col_hi {
                match (canvas.source_covers(x, y), canvas.target_covers(x, y)) {
                    (true, true) => both += 1,
                    (true, false) => src += 1,
                    (false, true) => tgt += 1,
                    _ => {}
                }
            }
        }
        let ownership = if both > 0 {
            Ownership::Blend
        } else if src > 0 {
            Ownership::SourceOnly
        } else {
            Ownership::TargetOnly
        };
        slices.push((Slice { col_lo, col_hi, x_lo: e[0].max(0.0), x_hi: e[1].min(w as f64), ownership, left_layer: None }, src, tgt));
    }

    // The layer exclusively covering more of the leftmost slice leads; ties
    // go to the target.
    let (_, src0, tgt0) = slices[0];
    let mut next = if src0 > tgt0 { Layer::Source } else { Layer::Target };
    let slices = slices
        .into_iter()
        .map(|(mut s, _, _)| {
            if s.ownership == Ownership::Blend {
                s.left_layer = Some(next);
                next = next.other();
            }
            s
        })
        .collect();
    Ok(PartitionPlan { boundaries: anchors_x.to_vec(), slices })
}

/// Per-column `(source, target)` weights of one blend slice, before coverage
/// overrides. The linear ramp spans the columns of the slice that contain
/// dual coverage.
fn slice_ramp(slice: &Slice, dual_lo: u32, dual_hi: u32) -> impl Fn(u32) -> (f64, f64) {
    let left_is_source = slice.left_layer == Some(Layer::Source);
    let lo = dual_lo.max(slice.col_lo);
    let hi = dual_hi.min(slice.col_hi);
    move |x: u32| {
        let t = if hi <= lo + 1 {
            if x <= lo { 0.0 } else { 1.0 }
        } else {
            ((x as f64 - lo as f64) / (hi - 1 - lo) as f64).clamp(0.0, 1.0)
        };
        let (w_left, w_right) = (1.0 - t, t);
        if left_is_source { (w_left, w_right) } else { (w_right, w_left) }
    }
}

/// Per-pixel layer weights on the canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    pub source: ScalarField,
    pub target: ScalarField,
}

/// Layer weights at every canvas pixel: single-coverage pixels take their
/// layer unchanged, dual-coverage pixels follow the slice ramp, uncovered
/// pixels get zero for both.
pub fn blend_weights(canvas: &Canvas, plan: &PartitionPlan) -> BlendWeights {
    let (w, h) = (canvas.width(), canvas.height());
    let mut dual_cols = vec![false; w as usize];
    for y in 0..h {
        for x in 0..w {
            if canvas.source_covers(x, y) && canvas.target_covers(x, y) {
                dual_cols[x as usize] = true;
            }
        }
    }
    let mut column_weight = vec![(0.0f64, 0.0f64); w as usize];
    for s in &plan.slices {
        let cols = s.col_lo..s.col_hi;
        let mut dual = cols.clone().filter(|&x| dual_cols[x as usize]);
        let first = dual.next();
        let last = dual.next_back().or(first);
        if let (Some(a), Some(b)) = (first, last) {
            let ramp = slice_ramp(s, a, b + 1);
            for x in cols {
                column_weight[x as usize] = ramp(x);
            }
        }
    }
    let pick = |src: bool| {
        ScalarField::from_fn(w, h, |x, y| {
            let (ws, wt) = match (canvas.source_covers(x, y), canvas.target_covers(x, y)) {
                (true, true) => column_weight[x as usize],
                (true, false) => (1.0, 0.0),
                (false, true) => (0.0, 1.0),
                (false, false) => (0.0, 0.0),
            };
            (if src { ws } else { wt }) as f32
        })
    };
    BlendWeights { source: pick(true), target: pick(false) }
}

fn smooth_channel(field: &ScalarField, canvas: &Canvas, in_band: &[bool], kernel: &[f64]) -> ScalarField {
    let r = (kernel.len() / 2) as i64;
    let w = field.width as usize;
    let mut out = field.values.clone();
    for_each_row(&mut out, w, |y, row| {
        let line = &field.values[y * w..(y + 1) * w];
        for x in 0..w {
            if !in_band[x] || !(canvas.source_covers(x as u32, y as u32) && canvas.target_covers(x as u32, y as u32)) {
                continue;
            }
            let mut acc = 0.0f64;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * line[sx] as f64;
            }
            row[x] = acc.clamp(0.0, 1.0) as f32;
        }
    });
    ScalarField { width: field.width, height: field.height, values: out }
}

/// Horizontal Gaussian smoothing of both weight channels within `±band`
/// columns of each boundary, restricted to dual-coverage pixels.
pub fn smooth_seams(weights: &BlendWeights, canvas: &Canvas, plan: &PartitionPlan, cfg: &ComposeConfig) -> BlendWeights {
    let kernel = gaussian_kernel(cfg.seam_sigma);
    if kernel.len() == 1 || cfg.seam_band == 0 {
        return weights.clone();
    }
    let band = cfg.seam_band as f64;
    let in_band: Vec<bool> = (0..weights.source.width)
        .map(|x| plan.boundaries.iter().any(|&b| ((x as f64 + 0.5) - b).abs() <= band))
        .collect();
    BlendWeights {
        source: smooth_channel(&weights.source, canvas, &in_band, &kernel),
        target: smooth_channel(&weights.target, canvas, &in_band, &kernel),
    }
}

/// Largest axis-aligned rectangle of covered pixels, as
/// `(x, y, width, height)`. Ties keep the first found in row-major scan.
pub fn largest_covered_rect(covered: &[bool], width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let w = width as usize;
    let mut heights = vec![0usize; w];
    let mut best: Option<(usize, (u32, u32, u32, u32))> = None;
    for y in 0..height as usize {
        for x in 0..w {
            heights[x] = if covered[y * w + x] { heights[x] + 1 } else { 0 };
        }
        // Largest rectangle in the histogram, stack-based.
        let mut stack: Vec<usize> = Vec::new();
        for x in 0..=w {
            let cur = if x < w { heights[x] } else { 0 };
            while let Some(&top) = stack.last() {
                if heights[top] <= cur {
                    break;
                }
                stack.pop();
                let hgt = heights[top];
                let left = stack.last().map_or(0, |&l| l + 1);
                let area = hgt * (x - left);
                if area > 0 && best.is_none_or(|(a, _)| area > a) {
                    best = Some((area, (left as u32, (y + 1 - hgt) as u32, (x - left) as u32, hgt as u32)));
                }
            }
            stack.push(x);
        }
    }
    best.map(|(_, r)| r)
}

/// Assembled panorama and the intermediate weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub image: RgbImage,
    /// `(x, y, width, height)` of the crop on the canvas.
    pub crop: (u32, u32, u32, u32),
    /// Layer weights after seam smoothing, on the full canvas.
    pub weights: BlendWeights,
}

/// Alpha-blends the layers with the slice weights, smooths the seams and crops
/// to the largest fully covered rectangle.
pub fn blend_and_assemble(canvas: &Canvas, plan: &PartitionPlan, cfg: &ComposeConfig) -> Result<Composite> {
    let raw = blend_weights(canvas, plan);
    let weights = smooth_seams(&raw, canvas, plan, cfg);
    let (w, h) = (canvas.width(), canvas.height());
    let covered: Vec<bool> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| canvas.source_covers(x, y) || canvas.target_covers(x, y)).collect();
    let crop = largest_covered_rect(&covered, w, h).ok_or(Error::CoverageHole(0, 0))?;
    let (cx, cy, cw, ch) = crop;
    let mut image = RgbImage::new(cw, ch);
    for y in 0..ch {
        for x in 0..cw {
            let (px, py) = (cx + x, cy + y);
            if !covered[(py * w + px) as usize] {
                return Err(Error::CoverageHole(px, py));
            }
            let ws = weights.source.get(px, py) as f64;
            let wt = weights.target.get(px, py) as f64;
            let s = canvas.source_layer.get_pixel(px, py);
            let t = canvas.target_layer.get_pixel(px, py);
            let rgb: [u8; 3] = std::array::from_fn(|c| {
                if wt <= 0.0 {
                    s[c]
                } else if ws <= 0.0 {
                    t[c]
                } else {
                    ((ws * s[c] as f64 + wt * t[c] as f64) / (ws + wt)).round().clamp(0.0, 255.0) as u8
                }
            });
            image.put_pixel(x, y, image::Rgb(rgb));
        }
    }
    Ok(Composite { image, crop, weights })
}
