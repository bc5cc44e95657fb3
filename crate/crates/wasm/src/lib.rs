//! Browser bindings: stitch a synthetic pair, preview the deformation gate
//! and preview disparity clustering.

use panostitch::compose::Ownership;
use panostitch::field::{build_density_map, build_gate, build_ramp, ramp_bandwidth, CanvasFrame, FieldConfig};
use panostitch::geometry::{rasterize_polygon_mask, Rect};
use panostitch::synth::{generate_pair, ParallaxLayer, SceneSpec};
use panostitch::zone::{best_cluster, cluster_disparities, cluster_interval, score_clusters, DisparityClass, ZoneConfig};
use panostitch::{run_pipeline, AffineTransform, PipelineConfig, Point2, RgbImage};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn rgb_to_rgba(img: &RgbImage) -> Vec<u8> {
    img.pixels().flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// An RGBA frame handed to a canvas `ImageData`.
#[wasm_bindgen]
pub struct Frame {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

#[wasm_bindgen]
pub struct StitchResult {
    source: Frame,
    target: Frame,
    panorama: Frame,
    seams: Frame,
    report: String,
}

#[wasm_bindgen]
impl StitchResult {
    pub fn source(&self) -> Frame {
        self.source.clone_frame()
    }

    pub fn target(&self) -> Frame {
        self.target.clone_frame()
    }

    pub fn panorama(&self) -> Frame {
        self.panorama.clone_frame()
    }

    /// Canvas with slice ownership tints, the zone and the stitching line.
    pub fn seams(&self) -> Frame {
        self.seams.clone_frame()
    }

    /// Report JSON: overlap metrics, timings, fallbacks and zone.
    pub fn report(&self) -> String {
        self.report.clone()
    }
}

impl Frame {
    fn clone_frame(&self) -> Frame {
        Frame { width: self.width, height: self.height, rgba: self.rgba.clone() }
    }
}

/// Renders a 480×360 synthetic pair and stitches it with the built-in
/// matcher. `parallax` is the extra horizontal shift of a foreground block;
/// `angle` is in degrees.
#[wasm_bindgen]
pub fn stitch_synthetic(seed: u32, shift: f64, parallax: f64, angle: f64) -> Result<StitchResult, JsValue> {
    let c = Point2::new(240.0, 180.0);
    let motion = AffineTransform::translation(shift, 0.0).compose(&AffineTransform::rotation_about(angle.to_radians(), c));
    let mut spec = SceneSpec::with_motion(motion, seed as u64);
    spec.base_dims = (720, 540);
    spec.view_dims = (480, 360);
    spec.noise_sigma = 1.0;
    if parallax != 0.0 {
        spec.parallax_layers.push(ParallaxLayer { depth_shift: parallax, region: Rect::new(420.0, 150.0, 540.0, 390.0) });
    }
    let pair = generate_pair(&spec).map_err(js_err)?;
    let out = run_pipeline(&pair.source, &pair.target, None, &PipelineConfig::default()).map_err(js_err)?;

    let a = &out.artifacts;
    let (w, h) = (a.canvas.width(), a.canvas.height());
    let mut seams = vec![0u8; (w * h * 4) as usize];
    for y in 0..h {
        for x in 0..w {
            let (s, t) = (a.canvas.source_layer.get_pixel(x, y), a.canvas.target_layer.get_pixel(x, y));
            let base = if t[3] > 0 { t } else { s };
            let i = ((y * w + x) * 4) as usize;
            let owner = a.plan.slices.iter().find(|sl| (sl.col_lo..sl.col_hi).contains(&x)).map(|sl| sl.ownership);
            let tint = match owner {
                Some(Ownership::SourceOnly) => [60, 0, 0],
                Some(Ownership::TargetOnly) => [0, 0, 60],
                Some(Ownership::Blend) => [0, 60, 0],
                None => [0, 0, 0],
            };
            for k in 0..3 {
                seams[i + k] = (base[k] as u16 * 3 / 4 + tint[k]).min(255) as u8;
            }
            seams[i + 3] = if s[3] > 0 || t[3] > 0 { 255 } else { 0 };
        }
    }
    for p in a.line.polyline(h) {
        let (x, y) = (p.x.floor() as i64, p.y.floor() as i64);
        for dx in -1..=1 {
            if (0..w as i64).contains(&(x + dx)) && (0..h as i64).contains(&y) {
                let i = ((y as u32 * w + (x + dx) as u32) * 4) as usize;
                seams[i..i + 4].copy_from_slice(&[255, 40, 40, 255]);
            }
        }
    }

    let frame = |img: &RgbImage| Frame { width: img.width(), height: img.height(), rgba: rgb_to_rgba(img) };
    Ok(StitchResult {
        source: frame(&pair.source),
        target: frame(&pair.target),
        panorama: frame(&out.panorama),
        seams: Frame { width: w, height: h, rgba: seams },
        report: out.report.to_json(),
    })
}

/// Gate over a `width`×`height` canvas whose overlap is the quadrilateral
/// `quad` (x0, y0, …, x3, y3), with inliers at `points` (x, y pairs).
/// Returns an RGBA heat map.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn gate_preview(
    width: u32,
    height: u32,
    quad: Vec<f64>,
    points: Vec<f64>,
    rho: f64,
    sigma_d: f64,
    gamma_p: f64,
    gamma_min: f64,
) -> Result<Frame, JsValue> {
    if quad.len() != 8 || !points.len().is_multiple_of(2) {
        return Err(js_err("quad needs 4 vertices and points must come in x, y pairs"));
    }
    let cfg = FieldConfig { rho, sigma_d, gamma_p, gamma_min, ..FieldConfig::default() };
    cfg.validate().map_err(js_err)?;
    let poly = panostitch::Polygon::new(quad.chunks(2).map(|c| Point2::new(c[0], c[1])).collect());
    let mask = rasterize_polygon_mask(&poly, width, height);
    let ramp = build_ramp(&mask, ramp_bandwidth((width, height), &cfg)).map_err(js_err)?;
    let pts: Vec<Point2> = points.chunks(2).map(|c| Point2::new(c[0], c[1])).collect();
    let density = build_density_map(&pts, &CanvasFrame { width, height, offset: (0.0, 0.0) }, &cfg);
    let gate = build_gate(&ramp, &density, &cfg).map_err(js_err)?;
    let mut rgba = Vec::with_capacity((width * height * 4) as usize);
    for y in 0..height {
        for x in 0..width {
            let g = gate.get(x, y).clamp(0.0, 1.0);
            let inside = mask.get(x, y);
            rgba.extend_from_slice(&[(255.0 * g) as u8, (120.0 * g) as u8, (255.0 * (1.0 - g) * 0.6) as u8, if inside { 255 } else { 70 }]);
        }
    }
    Ok(Frame { width, height, rgba })
}

/// Clusters per-tile mean disparities (one value per tile of `tile_width`
/// pixels, `counts` pairs each) and scores the clusters. Returns JSON with
/// the clusters, their scores, the winner and the zone interval.
#[wasm_bindgen]
pub fn cluster_preview(means: Vec<f64>, counts: Vec<u32>, tile_width: f64, v: f64, lambda: f64) -> Result<String, JsValue> {
    if means.len() != counts.len() {
        return Err(js_err("means and counts differ in length"));
    }
    let cfg = ZoneConfig { v, lambda, ..ZoneConfig::default() };
    cfg.validate().map_err(js_err)?;
    let classes: Vec<DisparityClass> = means
        .iter()
        .zip(&counts)
        .enumerate()
        .filter(|(_, (_, &n))| n > 0)
        .map(|(k, (&m, &n))| DisparityClass {
            index: k as u32,
            x_lo: k as f64 * tile_width,
            x_hi: (k + 1) as f64 * tile_width,
            members: vec![0; n as usize],
            mean_disparity: m,
        })
        .collect();
    let d: Vec<f64> = classes.iter().map(|c| c.mean_disparity).collect();
    let ranges = cluster_disparities(&d, cfg.v);
    let scored = score_clusters(&ranges, &classes, &cfg);
    let best = best_cluster(&scored);
    let clusters: Vec<serde_json::Value> = scored
        .iter()
        .map(|c| {
            serde_json::json!({
                "tiles": classes[c.classes.clone()].iter().map(|k| k.index).collect::<Vec<_>>(),
                "score": c.score,
                "mean": c.mu_c,
                "sigma": c.sigma_k,
            })
        })
        .collect();
    let zone = best.map(|b| {
        let (lo, hi) = cluster_interval(&scored[b], &classes);
        [lo, hi]
    });
    let result = serde_json::json!({ "clusters": clusters, "best": best, "zone": zone });
    Ok(result.to_string())
}
