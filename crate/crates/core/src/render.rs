//! Canvas rendering: warped source, pasted target and canvas-space matches.

use image::{RgbImage, RgbaImage};

use crate::error::{Error, Result};
use crate::field::{CanvasFrame, DisplacementField};
use crate::geometry::{AffineTransform, Point2};
use crate::matching::MatchSet;
use crate::raster::for_each_row;

const FIXED_POINT_ITERS: usize = 20;
const FIXED_POINT_TOL: f64 = 0.01;
const FIXED_POINT_DAMPING: f64 = 0.8;

/// Both layers on the shared canvas. Alpha is 255 where a layer has
/// coverage and 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub frame: CanvasFrame,
    pub source_layer: RgbaImage,
    pub target_layer: RgbaImage,
}

impl Canvas {
    pub fn new(frame: CanvasFrame, source_layer: RgbaImage, target_layer: RgbaImage) -> Result<Self> {
        for layer in [&source_layer, &target_layer] {
            if layer.dimensions() != (frame.width, frame.height) {
                return Err(Error::DimensionMismatch(format!(
                    "layer {:?} on a {}x{} canvas",
                    layer.dimensions(),
                    frame.width,
                    frame.height
                )));
            }
        }
        Ok(Self { frame, source_layer, target_layer })
    }

    pub fn width(&self) -> u32 {
        self.frame.width
    }

    pub fn height(&self) -> u32 {
        self.frame.height
    }

    #[inline]
    pub fn source_covers(&self, x: u32, y: u32) -> bool {
        self.source_layer.get_pixel(x, y)[3] > 0
    }

    #[inline]
    pub fn target_covers(&self, x: u32, y: u32) -> bool {
        self.target_layer.get_pixel(x, y)[3] > 0
    }
}

/// Source-space sample point for the continuous canvas point `u`.
pub fn sampling_map(u: Point2, a_inv: &AffineTransform, field: &DisplacementField, frame: &CanvasFrame) -> Point2 {
    a_inv.map(frame.to_target(u)) + field.sample(u)
}

/// Bilinear RGB sample at continuous point `q` (pixel centers at `+0.5`);
/// `None` unless the whole 2×2 footprint lies inside the image.
pub fn sample_rgb(img: &RgbImage, q: Point2) -> Option<[f64; 3]> {
    let (w, h) = img.dimensions();
    let fx = q.x - 0.5;
    let fy = q.y - 0.5;
    if !(fx >= 0.0 && fy >= 0.0 && fx <= (w - 1) as f64 && fy <= (h - 1) as f64) {
        return None;
    }
    let x0 = fx.floor() as u32;
    let y0 = fy.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = fx - x0 as f64;
    let ay = fy - y0 as f64;
    let (p00, p10, p01, p11) = (img.get_pixel(x0, y0), img.get_pixel(x1, y0), img.get_pixel(x0, y1), img.get_pixel(x1, y1));
    Some(std::array::from_fn(|c| {
        let top = p00[c] as f64 * (1.0 - ax) + p10[c] as f64 * ax;
        let bot = p01[c] as f64 * (1.0 - ax) + p11[c] as f64 * ax;
        top * (1.0 - ay) + bot * ay
    }))
}

/// Backward-warps the source onto the canvas through the global affine and
/// the guarded displacement field.
pub fn warp_source(
    source: &RgbImage,
    a_glob: &AffineTransform,
    field: &DisplacementField,
    frame: &CanvasFrame,
) -> Result<RgbaImage> {
    if (field.width(), field.height()) != (frame.width, frame.height) {
        return Err(Error::DimensionMismatch("field and canvas".into()));
    }
    let a_inv = a_glob.inverse()?;
    let w = frame.width as usize;
    let mut buf = vec![0u8; w * frame.height as usize * 4];
    if w > 0 {
        for_each_row(&mut buf, w * 4, |y, row| {
            for x in 0..w {
                let u = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                let q = a_inv.map(frame.to_target(u)) + field.at(x as u32, y as u32);
                if let Some(rgb) = sample_rgb(source, q) {
                    let px = &mut row[x * 4..x * 4 + 4];
                    for c in 0..3 {
                        px[c] = rgb[c].round().clamp(0.0, 255.0) as u8;
                    }
                    px[3] = 255;
                }
            }
        });
    }
    Ok(RgbaImage::from_raw(frame.width, frame.height, buf).expect("buffer sized to frame"))
}

/// Copies the target verbatim at the frame offset.
pub fn paste_target(target: &RgbImage, frame: &CanvasFrame) -> Result<RgbaImage> {
    let ox = frame.offset.0.round() as i64;
    let oy = frame.offset.1.round() as i64;
    let (tw, th) = target.dimensions();
    if ox < 0 || oy < 0 || ox + tw as i64 > frame.width as i64 || oy + th as i64 > frame.height as i64 {
        return Err(Error::OffsetOutOfFrame(ox, oy));
    }
    let mut out = RgbaImage::new(frame.width, frame.height);
    for (x, y, p) in target.enumerate_pixels() {
        out.put_pixel(x + ox as u32, y + oy as u32, image::Rgba([p[0], p[1], p[2], 255]));
    }
    Ok(out)
}

/// Canvas-space correspondences produced by [`transform_match_points`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CanvasMatches {
    /// `(canvas_src, canvas_tgt)` per converged match.
    pub pairs: Vec<(Point2, Point2)>,
    /// Index into the input match set for each pair.
    pub indices: Vec<usize>,
    /// Matches dropped because the forward solve did not converge.
    pub excluded: usize,
}

impl CanvasMatches {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Solves `sampling_map(u) = p_s` for the canvas point `u` by damped
/// fixed-point iteration from `A_glob·p_s + o`. Returns the point and
/// whether the residual fell below 0.01 px.
pub fn forward_map(
    p_s: Point2,
    a_glob: &AffineTransform,
    a_inv: &AffineTransform,
    field: &DisplacementField,
    frame: &CanvasFrame,
) -> (Point2, bool) {
    let mut u = frame.from_target(a_glob.map(p_s));
    for _ in 0..=FIXED_POINT_ITERS {
        let r = sampling_map(u, a_inv, field, frame) - p_s;
        if !r.is_finite() {
            return (u, false);
        }
        if r.norm() < FIXED_POINT_TOL {
            return (u, true);
        }
        // The residual lives in source space; map it back through A_glob.
        u = u - a_glob.map_vector(r) * FIXED_POINT_DAMPING;
    }
    (u, false)
}

/// Maps every match into canvas space: targets by the offset, sources
/// through the inverse of the full sampling map.
pub fn transform_match_points(
    ms: &MatchSet,
    a_glob: &AffineTransform,
    field: &DisplacementField,
    frame: &CanvasFrame,
) -> Result<CanvasMatches> {
    let a_inv = a_glob.inverse()?;
    let mut out = CanvasMatches::default();
    for (i, m) in ms.matches.iter().enumerate() {
        let (u, ok) = forward_map(m.source(), a_glob, &a_inv, field, frame);
        if ok {
            out.pairs.push((u, frame.from_target(m.target())));
            out.indices.push(i);
        } else {
            out.excluded += 1;
        }
    }
    Ok(out)
}
