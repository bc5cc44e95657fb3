//! Synthetic image pairs with exact ground-truth correspondences.
//!
//! A smooth procedural texture is defined on the continuous plane. The target
//! view is a central crop of the base; the source view sees every target
//! point `p_t` at `M·p_t`, plus a horizontal shift for points on a parallax
//! layer.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::smootherstep;
use crate::geometry::{AffineTransform, Point2, Rect, SINGULAR_DET};
use crate::matching::{Match, MatchSet};
use crate::raster::for_each_row;

/// A rectangle of the base plane that the source view sees displaced by
/// `depth_shift` pixels along x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallaxLayer {
    pub depth_shift: f64,
    /// Base-plane coordinates.
    pub region: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub base_dims: (u32, u32),
    /// Size of both views.
    pub view_dims: (u32, u32),
    /// Inter-view motion, mapping target coordinates to source coordinates.
    pub affine: AffineTransform,
    /// Later layers occlude earlier ones.
    #[serde(default)]
    pub parallax_layers: Vec<ParallaxLayer>,
    pub texture_seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Spacing of the ground-truth grid in target pixels.
    #[serde(default = "default_gt_step")]
    pub gt_step: u32,
}

fn default_gt_step() -> u32 {
    16
}

impl SceneSpec {
    /// 640×480 views cut from a 960×720 base under motion `affine`.
    pub fn with_motion(affine: AffineTransform, texture_seed: u64) -> Self {
        Self {
            base_dims: (960, 720),
            view_dims: (640, 480),
            affine,
            parallax_layers: Vec::new(),
            texture_seed,
            noise_sigma: 0.0,
            gt_step: default_gt_step(),
        }
    }

    pub fn identity(texture_seed: u64) -> Self {
        Self::with_motion(AffineTransform::IDENTITY, texture_seed)
    }

    pub fn translation(tx: f64, ty: f64, texture_seed: u64) -> Self {
        Self::with_motion(AffineTransform::translation(tx, ty), texture_seed)
    }

    /// Rotation by `theta` about the view center followed by a translation.
    pub fn rigid(theta: f64, tx: f64, ty: f64, texture_seed: u64) -> Self {
        let c = Point2::new(320.0, 240.0);
        let m = AffineTransform::translation(tx, ty).compose(&AffineTransform::rotation_about(theta, c));
        Self::with_motion(m, texture_seed)
    }

    /// Offset of the target crop within the base.
    pub fn crop_offset(&self) -> Point2 {
        Point2::new(
            ((self.base_dims.0 - self.view_dims.0) / 2) as f64,
            ((self.base_dims.1 - self.view_dims.1) / 2) as f64,
        )
    }

    /// The source-to-target transform a perfect global alignment recovers.
    pub fn true_alignment(&self) -> Result<AffineTransform> {
        self.affine.inverse()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        let (bw, bh) = self.base_dims;
        let (vw, vh) = self.view_dims;
        if vw == 0 || vh == 0 || vw > bw || vh > bh {
            return invalid("view must be non-empty and fit inside the base");
        }
        if !self.affine.is_finite() || self.affine.det().abs() <= SINGULAR_DET {
            return invalid("motion must be finite and invertible");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid("noise_sigma must be finite and non-negative");
        }
        if self.gt_step == 0 {
            return invalid("gt_step must be positive");
        }
        for l in &self.parallax_layers {
            let r = &l.region;
            if !l.depth_shift.is_finite() || !(r.x0 >= 0.0 && r.y0 >= 0.0 && r.x1 <= bw as f64 && r.y1 <= bh as f64 && r.x0 < r.x1 && r.y0 < r.y1) {
                return invalid("parallax regions must be non-empty and inside the base");
            }
        }
        Ok(())
    }
}

fn hash2(ix: i64, iy: i64, salt: u64) -> f64 {
    let mut z = (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ salt;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(p: Point2, wavelength: f64, salt: u64) -> f64 {
    let (gx, gy) = (p.x / wavelength, p.y / wavelength);
    let (ix, iy) = (gx.floor() as i64, gy.floor() as i64);
    let (fx, fy) = (smootherstep(gx - ix as f64), smootherstep(gy - iy as f64));
    let v00 = hash2(ix, iy, salt);
    let v10 = hash2(ix + 1, iy, salt);
    let v01 = hash2(ix, iy + 1, salt);
    let v11 = hash2(ix + 1, iy + 1, salt);
    let top = v00 + (v10 - v00) * fx;
    let bot = v01 + (v11 - v01) * fx;
    top + (bot - top) * fy
}

#[derive(Debug, Clone)]
enum ShapeKind {
    Rect { half: Point2, cos: f64, sin: f64 },
    Disc { radius: f64 },
}

#[derive(Debug, Clone)]
struct Shape {
    center: Point2,
    kind: ShapeKind,
    color: [f64; 3],
    extent: f64,
}

impl Shape {
    /// Signed distance to the boundary, negative inside.
    fn sdf(&self, p: Point2) -> f64 {
        let d = p - self.center;
        match &self.kind {
            ShapeKind::Disc { radius } => d.norm() - radius,
            ShapeKind::Rect { half, cos, sin } => {
                let lx = (d.x * cos + d.y * sin).abs() - half.x;
                let ly = (-d.x * sin + d.y * cos).abs() - half.y;
                let outside = Point2::new(lx.max(0.0), ly.max(0.0)).norm();
                outside + lx.max(ly).min(0.0)
            }
        }
    }
}

/// Smooth colored texture over the plane: multi-octave value noise with
/// soft-edged rectangles and discs on top.
#[derive(Debug, Clone)]
pub struct Texture {
    seed: u64,
    shapes: Vec<Shape>,
}

const OCTAVES: [(f64, f64); 4] = [(96.0, 0.5), (48.0, 0.25), (24.0, 0.15), (12.0, 0.1)];
const EDGE_WIDTH: f64 = 3.0;

impl Texture {
    /// Shapes are scattered over `domain` grown by a margin.
    pub fn new(seed: u64, domain: Rect) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margin = 80.0;
        let area = (domain.width() + 2.0 * margin) * (domain.height() + 2.0 * margin);
        let count = (area / 5000.0).ceil() as usize;
        let shapes = (0..count)
            .map(|_| {
                let center = Point2::new(
                    rng.random_range(domain.x0 - margin..domain.x1 + margin),
                    rng.random_range(domain.y0 - margin..domain.y1 + margin),
                );
                let color = [rng.random_range(20.0..235.0), rng.random_range(20.0..235.0), rng.random_range(20.0..235.0)];
                let kind = if rng.random_bool(0.5) {
                    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    ShapeKind::Rect {
                        half: Point2::new(rng.random_range(6.0..28.0), rng.random_range(6.0..28.0)),
                        cos: theta.cos(),
                        sin: theta.sin(),
                    }
                } else {
                    ShapeKind::Disc { radius: rng.random_range(5.0..22.0) }
                };
                let extent = match &kind {
                    ShapeKind::Rect { half, .. } => half.norm(),
                    ShapeKind::Disc { radius } => *radius,
                } + EDGE_WIDTH;
                Shape { center, kind, color, extent }
            })
            .collect();
        Self { seed, shapes }
    }

    pub fn sample(&self, p: Point2) -> [f64; 3] {
        let mut rgb: [f64; 3] = std::array::from_fn(|c| {
            let salt = self.seed.wrapping_add(0x1000 * (c as u64 + 1));
            let n: f64 = OCTAVES
                .iter()
                .enumerate()
                .map(|(k, &(wl, amp))| amp * value_noise(p, wl, salt.wrapping_add(k as u64)))
                .sum();
            40.0 + 175.0 * n
        });
        for s in &self.shapes {
            if (p.x - s.center.x).abs() > s.extent || (p.y - s.center.y).abs() > s.extent {
                continue;
            }
            let a = smootherstep(0.5 - s.sdf(p) / EDGE_WIDTH);
            if a > 0.0 {
                for c in 0..3 {
                    rgb[c] += a * (s.color[c] - rgb[c]);
                }
            }
        }
        rgb
    }
}

/// Generated views and their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub source: RgbImage,
    pub target: RgbImage,
    pub ground_truth: MatchSet,
    /// Per ground-truth match: 0 for the background plane, `k + 1` for
    /// parallax layer `k`.
    pub labels: Vec<usize>,
}

struct Scene<'a> {
    spec: &'a SceneSpec,
    m_inv: AffineTransform,
    crop: Point2,
}

impl Scene<'_> {
    /// Which surface the source view shows at `p_s`, and its base point.
    fn source_hit(&self, p_s: Point2) -> (usize, Point2) {
        for (k, l) in self.spec.parallax_layers.iter().enumerate().rev() {
            let b = self.m_inv.map(p_s - Point2::new(l.depth_shift, 0.0)) + self.crop;
            if inside(&l.region, b) {
                return (k + 1, b);
            }
        }
        (0, self.m_inv.map(p_s) + self.crop)
    }

    /// Surface seen by the target view at base point `b`.
    fn target_label(&self, b: Point2) -> usize {
        self.spec.parallax_layers.iter().enumerate().rev().find(|(_, l)| inside(&l.region, b)).map_or(0, |(k, _)| k + 1)
    }
}

fn inside(r: &Rect, p: Point2) -> bool {
    p.x >= r.x0 && p.x < r.x1 && p.y >= r.y0 && p.y < r.y1
}

fn render(w: u32, h: u32, sample: impl Fn(Point2) -> [f64; 3] + Sync + Send) -> Vec<[f64; 3]> {
    let mut buf = vec![[0.0f64; 3]; (w * h) as usize];
    for_each_row(&mut buf, w as usize, |y, row| {
        for (x, px) in row.iter_mut().enumerate() {
            *px = sample(Point2::new(x as f64 + 0.5, y as f64 + 0.5));
        }
    });
    buf
}

fn quantize(w: u32, h: u32, buf: &[[f64; 3]], noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>) -> RgbImage {
    let mut img = RgbImage::new(w, h);
    match noise {
        Some((dist, rng)) => {
            for (p, v) in img.pixels_mut().zip(buf) {
                for c in 0..3 {
                    p[c] = (v[c] + dist.sample(rng)).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        None => {
            for (p, v) in img.pixels_mut().zip(buf) {
                for c in 0..3 {
                    p[c] = v[c].round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    img
}

/// Renders both views and the ground-truth grid. Deterministic in `spec`.
pub fn generate_pair(spec: &SceneSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    let (vw, vh) = spec.view_dims;
    let scene = Scene { spec, m_inv: spec.affine.inverse()?, crop: spec.crop_offset() };
    let texture = Texture::new(spec.texture_seed, Rect::from_dims(spec.base_dims.0, spec.base_dims.1));

    let tgt_buf = render(vw, vh, |p| texture.sample(p + scene.crop));
    let src_buf = render(vw, vh, |p| texture.sample(scene.source_hit(p).1));

    let (source, target) = if spec.noise_sigma > 0.0 {
        let dist = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let mut rng_s = ChaCha8Rng::seed_from_u64(spec.texture_seed ^ 0x5EED_0001);
        let mut rng_t = ChaCha8Rng::seed_from_u64(spec.texture_seed ^ 0x5EED_0002);
        (
            quantize(vw, vh, &src_buf, Some((&dist, &mut rng_s))),
            quantize(vw, vh, &tgt_buf, Some((&dist, &mut rng_t))),
        )
    } else {
        (quantize(vw, vh, &src_buf, None), quantize(vw, vh, &tgt_buf, None))
    };

    let step = spec.gt_step as f64;
    let mut matches = Vec::new();
    let mut labels = Vec::new();
    let mut y = step / 2.0;
    while y < vh as f64 {
        let mut x = step / 2.0;
        while x < vw as f64 {
            let p_t = Point2::new(x, y);
            let label = scene.target_label(p_t + scene.crop);
            let shift = if label == 0 { 0.0 } else { spec.parallax_layers[label - 1].depth_shift };
            let p_s = spec.affine.map(p_t) + Point2::new(shift, 0.0);
            let visible = scene.source_hit(p_s).0 == label;
            if visible && p_s.x >= 0.0 && p_s.y >= 0.0 && p_s.x <= vw as f64 && p_s.y <= vh as f64 {
                matches.push(Match::new(p_s, p_t, 1.0));
                labels.push(label);
            }
            x += step;
        }
        y += step;
    }
    let ground_truth = MatchSet::new(spec.view_dims, spec.view_dims, matches)?;
    Ok(SyntheticPair { source, target, ground_truth, labels })
}
