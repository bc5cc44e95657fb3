//! Confidence-weighted deformation lattice and the seam-guarding gate.
//!
//! Displacements live in source space: for a canvas pixel `u` the source is
//! sampled at `A_glob⁻¹(u − o) + Δp(u)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineTransform, BinaryMask, Point2, Rect};
use crate::local_warp::{GridCell, LocalFit};
use crate::raster::{gaussian_blur, signed_distance, ScalarField};

/// Output canvas: its size and the translation `o` taking target coordinates
/// to canvas coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasFrame {
    pub width: u32,
    pub height: u32,
    pub offset: (f64, f64),
}

impl CanvasFrame {
    /// Integer-aligned bounding box of the target frame and the projected
    /// source corners.
    pub fn enclosing(a_glob: &AffineTransform, source_dims: (u32, u32), target_dims: (u32, u32)) -> Self {
        let quad = Rect::from_dims(source_dims.0, source_dims.1).to_polygon().transformed(a_glob);
        let src = quad.bbox().expect("four corners");
        let x0 = src.x0.min(0.0).floor();
        let y0 = src.y0.min(0.0).floor();
        let x1 = src.x1.max(target_dims.0 as f64).ceil();
        let y1 = src.y1.max(target_dims.1 as f64).ceil();
        Self { width: (x1 - x0) as u32, height: (y1 - y0) as u32, offset: (-x0, -y0) }
    }

    pub fn offset_point(&self) -> Point2 {
        Point2::new(self.offset.0, self.offset.1)
    }

    pub fn to_target(&self, u: Point2) -> Point2 {
        u - self.offset_point()
    }

    pub fn from_target(&self, p: Point2) -> Point2 {
        p + self.offset_point()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub nx: u32,
    pub ny: u32,
    /// Blend width as a fraction of the mean cell diagonal.
    pub alpha_f: f64,
    pub d_max: f64,
    /// Lattice smoothing, in lattice units.
    pub sigma_l: f64,
    /// Ramp bandwidth as a fraction of the target diagonal.
    pub rho: f64,
    pub sigma_d: f64,
    pub gamma_p: f64,
    pub gamma_min: f64,
    pub sigma_g: f64,
    /// Blur the gated field; off applies the gate alone.
    pub blur_guarded: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            alpha_f: 0.75,
            d_max: 48.0,
            sigma_l: 1.0,
            rho: 0.02,
            sigma_d: 25.0,
            gamma_p: 1.5,
            gamma_min: 0.15,
            sigma_g: 3.0,
            blur_guarded: true,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_f", self.alpha_f),
            ("d_max", self.d_max),
            ("sigma_l", self.sigma_l),
            ("rho", self.rho),
            ("sigma_d", self.sigma_d),
            ("gamma_p", self.gamma_p),
            ("sigma_g", self.sigma_g),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::InvalidConfig(format!("field.{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.gamma_min) {
            return Err(Error::InvalidConfig("field.gamma_min must lie in [0, 1)".into()));
        }
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::InvalidConfig("field lattice must be at least 4x4".into()));
        }
        Ok(())
    }
}

/// `ny × nx` lattice of source-space displacements over the canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationLattice {
    pub nx: usize,
    pub ny: usize,
    /// Row-major `(dx, dy)` per lattice point.
    pub disp: Vec<Point2>,
    pub frame: CanvasFrame,
}

impl DeformationLattice {
    /// Canvas position of lattice point `(i, j)`: corner points coincide with
    /// the corner pixel centers.
    pub fn point(&self, i: usize, j: usize) -> Point2 {
        lattice_point(&self.frame, self.nx, self.ny, i, j)
    }

    pub fn get(&self, i: usize, j: usize) -> Point2 {
        self.disp[i * self.nx + j]
    }
}

fn lattice_coord(n: usize, extent: u32, k: usize) -> f64 {
    if n <= 1 || extent <= 1 {
        extent as f64 / 2.0
    } else {
        0.5 + k as f64 * (extent - 1) as f64 / (n - 1) as f64
    }
}

fn lattice_point(frame: &CanvasFrame, nx: usize, ny: usize, i: usize, j: usize) -> Point2 {
    Point2::new(lattice_coord(nx, frame.width, j), lattice_coord(ny, frame.height, i))
}

/// Two-channel canvas-resolution displacement field.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub dx: ScalarField,
    pub dy: ScalarField,
}

impl DisplacementField {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { dx: ScalarField::new(width, height), dy: ScalarField::new(width, height) }
    }

    pub fn constant(width: u32, height: u32, d: Point2) -> Self {
        Self { dx: ScalarField::filled(width, height, d.x as f32), dy: ScalarField::filled(width, height, d.y as f32) }
    }

    pub fn width(&self) -> u32 {
        self.dx.width
    }

    pub fn height(&self) -> u32 {
        self.dx.height
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> Point2 {
        Point2::new(self.dx.get(x, y) as f64, self.dy.get(x, y) as f64)
    }

    /// Clamp-to-edge bilinear interpolation at a continuous canvas point.
    pub fn sample(&self, p: Point2) -> Point2 {
        Point2::new(self.dx.sample_bilinear(p.x, p.y) as f64, self.dy.sample_bilinear(p.x, p.y) as f64)
    }

    /// Largest Euclidean displacement magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.dx
            .values
            .iter()
            .zip(&self.dy.values)
            .map(|(&a, &b)| (a as f64).hypot(b as f64))
            .fold(0.0, f64::max)
    }

    /// Largest per-component magnitude.
    pub fn max_component(&self) -> f64 {
        self.dx.values.iter().chain(&self.dy.values).map(|v| v.abs() as f64).fold(0.0, f64::max)
    }
}

/// Spatial width `σ_f` of the blend: `alpha_f` times the mean diagonal of the
/// surviving cells.
pub fn blend_sigma(cells: &[GridCell], cfg: &FieldConfig) -> f64 {
    let mean = cells.iter().map(|c| c.diag).sum::<f64>() / cells.len().max(1) as f64;
    cfg.alpha_f * mean
}

/// Normalized blend weights of every cell at target-space point `p_t`;
/// `None` when the unnormalized total does not exceed `1e-12`.
pub fn blend_weights(p_t: Point2, fits: &[LocalFit], cells: &[GridCell], sigma_f: f64) -> Option<Vec<f64>> {
    let raw: Vec<f64> = fits
        .iter()
        .zip(cells)
        .map(|(f, c)| f.conf * (-(p_t - c.centroid).norm_sq() / (2.0 * sigma_f * sigma_f)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    (total > 1e-12).then(|| raw.into_iter().map(|w| w / total).collect())
}

/// Blends the per-cell displacements `T_j⁻¹ p_t − A_glob⁻¹ p_t` at every
/// lattice point with confidence-weighted Gaussian weights.
pub fn blend_displacement_lattice(
    fits: &[LocalFit],
    cells: &[GridCell],
    a_glob: &AffineTransform,
    frame: &CanvasFrame,
    cfg: &FieldConfig,
) -> Result<DeformationLattice> {
    if fits.is_empty() || fits.len() != cells.len() {
        return Err(Error::DimensionMismatch(format!("{} fits for {} cells", fits.len(), cells.len())));
    }
    let a_inv = a_glob.inverse()?;
    let inverses = fits.iter().map(|f| f.transform.inverse()).collect::<Result<Vec<_>>>()?;
    let sigma_f = blend_sigma(cells, cfg);
    let (nx, ny) = (cfg.nx as usize, cfg.ny as usize);

    let mut disp = Vec::with_capacity(nx * ny);
    for i in 0..ny {
        for j in 0..nx {
            let p_t = frame.to_target(lattice_point(frame, nx, ny, i, j));
            let p_base = a_inv.map(p_t);
            let d = match blend_weights(p_t, fits, cells, sigma_f) {
                Some(w) => inverses
                    .iter()
                    .zip(&w)
                    .fold(Point2::default(), |acc, (t_inv, &wj)| acc + (t_inv.map(p_t) - p_base) * wj),
                None => Point2::default(),
            };
            disp.push(d);
        }
    }
    Ok(DeformationLattice { nx, ny, disp, frame: *frame })
}

/// Keys cubic convolution kernel with `a = −0.5`.
fn cubic_weight(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Per-axis bicubic taps: for every output index, four clamped source indices
/// and their weights.
fn cubic_taps(n_src: usize, n_dst: u32) -> Vec<([usize; 4], [f64; 4])> {
    (0..n_dst)
        .map(|x| {
            let g = if n_dst <= 1 { 0.0 } else { x as f64 * (n_src - 1) as f64 / (n_dst - 1) as f64 };
            let base = g.floor() as i64;
            let frac = g - base as f64;
            let mut idx = [0usize; 4];
            let mut w = [0.0f64; 4];
            for k in 0..4 {
                let off = k as i64 - 1;
                idx[k] = (base + off).clamp(0, n_src as i64 - 1) as usize;
                w[k] = cubic_weight(frac - off as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Clips the lattice to `±d_max`, smooths it with `σ_l` (clamp-to-edge) and
/// upsamples it bicubically to canvas resolution. Bicubic overshoot is
/// clipped to `±d_max` again.
pub fn regularize_lattice(lat: &DeformationLattice, cfg: &FieldConfig) -> Result<DisplacementField> {
    if lat.nx < 4 || lat.ny < 4 {
        return Err(Error::LatticeTooSmall { nx: lat.nx, ny: lat.ny });
    }
    let d_max = cfg.d_max;
    let channel = |pick: fn(&Point2) -> f64| -> ScalarField {
        let clipped = ScalarField {
            width: lat.nx as u32,
            height: lat.ny as u32,
            values: lat.disp.iter().map(|d| pick(d).clamp(-d_max, d_max) as f32).collect(),
        };
        gaussian_blur(&clipped, cfg.sigma_l)
    };
    let smooth = [channel(|d| d.x), channel(|d| d.y)];

    let (w, h) = (lat.frame.width, lat.frame.height);
    let tx = cubic_taps(lat.nx, w);
    let ty = cubic_taps(lat.ny, h);
    let upsample = |src: &ScalarField| -> ScalarField {
        // Horizontal pass over lattice rows, then vertical.
        let mut rows = vec![0.0f64; lat.ny * w as usize];
        for i in 0..lat.ny {
            for (x, (idx, wt)) in tx.iter().enumerate() {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += wt[k] * src.values[i * lat.nx + idx[k]] as f64;
                }
                rows[i * w as usize + x] = acc;
            }
        }
        let mut out = ScalarField::new(w, h);
        for (y, (idx, wt)) in ty.iter().enumerate() {
            for x in 0..w as usize {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += wt[k] * rows[idx[k] * w as usize + x];
                }
                out.values[y * w as usize + x] = acc.clamp(-d_max, d_max) as f32;
            }
        }
        out
    };
    Ok(DisplacementField { dx: upsample(&smooth[0]), dy: upsample(&smooth[1]) })
}

/// Quintic smootherstep `6t⁵ − 15t⁴ + 10t³` with the input clamped to `[0, 1]`.
pub fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Ramp value for a signed distance `d` and bandwidth `b`.
pub fn ramp_value(d: f64, b: f64) -> f64 {
    smootherstep((d / b).clamp(0.0, 1.0))
}

/// Ramp bandwidth `ρ · diag` for the given image dimensions.
pub fn ramp_bandwidth(dims: (u32, u32), cfg: &FieldConfig) -> f64 {
    cfg.rho * (dims.0 as f64).hypot(dims.1 as f64)
}

/// Smootherstep of the signed distance to the overlap boundary, saturating at
/// depth `bandwidth` inside the overlap.
pub fn build_ramp(overlap: &BinaryMask, bandwidth: f64) -> Result<ScalarField> {
    let sd = signed_distance(overlap)?;
    Ok(ScalarField {
        width: overlap.width(),
        height: overlap.height(),
        values: sd.iter().map(|&d| ramp_value(d, bandwidth) as f32).collect(),
    })
}

/// Gaussian-blurred impulse map of inlier positions (canvas coordinates),
/// normalized by its maximum.
pub fn build_density_map(points: &[Point2], frame: &CanvasFrame, cfg: &FieldConfig) -> ScalarField {
    let mut impulses = ScalarField::new(frame.width, frame.height);
    for p in points {
        let (x, y) = (p.x.floor(), p.y.floor());
        if x >= 0.0 && y >= 0.0 && x < frame.width as f64 && y < frame.height as f64 {
            let (x, y) = (x as u32, y as u32);
            impulses.set(x, y, impulses.get(x, y) + 1.0);
        }
    }
    let mut d = gaussian_blur(&impulses, cfg.sigma_d);
    let max = d.max();
    if max > 0.0 {
        d.values.iter_mut().for_each(|v| *v = (*v / max).clamp(0.0, 1.0));
    } else {
        d.values.iter_mut().for_each(|v| *v = 0.0);
    }
    d
}

/// Gate value for ramp `r` and density `d`.
pub fn gate_value(r: f64, d: f64, cfg: &FieldConfig) -> f64 {
    smootherstep(r).powf(cfg.gamma_p) * (cfg.gamma_min + (1.0 - cfg.gamma_min) * smootherstep(d))
}

/// Multiplicative gate combining the geometric falloff and the density
/// modulation.
pub fn build_gate(ramp: &ScalarField, density: &ScalarField, cfg: &FieldConfig) -> Result<ScalarField> {
    if !ramp.same_dims(density) {
        return Err(Error::DimensionMismatch("ramp and density".into()));
    }
    Ok(ScalarField {
        width: ramp.width,
        height: ramp.height,
        values: ramp
            .values
            .iter()
            .zip(&density.values)
            .map(|(&r, &d)| gate_value(r as f64, d as f64, cfg) as f32)
            .collect(),
    })
}

/// Multiplies both displacement channels by the gate and, unless disabled,
/// blurs the result with `σ_g`.
pub fn gate_field(disp: &DisplacementField, gate: &ScalarField, cfg: &FieldConfig) -> Result<DisplacementField> {
    if !gate.same_dims(&disp.dx) {
        return Err(Error::DimensionMismatch("displacement field and gate".into()));
    }
    let gated = |c: &ScalarField| -> ScalarField {
        let mut out = c.clone();
        out.values.iter_mut().zip(&gate.values).for_each(|(v, &g)| *v *= g);
        if cfg.blur_guarded {
            gaussian_blur(&out, cfg.sigma_g)
        } else {
            out
        }
    };
    Ok(DisplacementField { dx: gated(&disp.dx), dy: gated(&disp.dy) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_warp::Diagnostics;
    use approx::assert_abs_diff_eq;

    fn cell_at(c: Point2) -> GridCell {
        let bbox = Rect::new(c.x - 20.0, c.y - 20.0, c.x + 20.0, c.y + 20.0);
        GridCell {
            col: 0,
            row: 0,
            mask: BinaryMask::filled(1, 1),
            mask_origin: (0, 0),
            centroid: c,
            bbox,
            diag: bbox.diagonal(),
        }
    }

    fn fit(t: AffineTransform, conf: f64) -> LocalFit {
        LocalFit {
            transform: t,
            conf,
            diag_report: Diagnostics { rmse: 0.0, det: 1.0, cond: 1.0, delta_mean: 0.0, composite_score: 0.0 },
            chosen_lambda: 1e-3,
            candidates: vec![],
            support_count: 0,
        }
    }

    fn small_cfg() -> FieldConfig {
        FieldConfig { nx: 8, ny: 8, ..Default::default() }
    }

    #[test]
    fn canvas_frame_encloses_both() {
        let f = CanvasFrame::enclosing(&AffineTransform::translation(-40.5, 10.0), (640, 480), (640, 480));
        assert_eq!(f.offset, (41.0, 0.0));
        assert_eq!((f.width, f.height), (681, 490));
        let f = CanvasFrame::enclosing(&AffineTransform::IDENTITY, (640, 480), (640, 480));
        assert_eq!((f.width, f.height, f.offset), (640, 480, (0.0, 0.0)));
    }

    #[test]
    fn blend_of_global_fits_is_zero() {
        let a = AffineTransform::from_rows([1.0, 0.1, 4.0], [0.0, 0.9, -3.0]);
        let frame = CanvasFrame { width: 100, height: 80, offset: (0.0, 0.0) };
        let cells = vec![cell_at(Point2::new(20.0, 20.0)), cell_at(Point2::new(70.0, 50.0))];
        let fits = vec![fit(a, 0.4), fit(a, 1.0)];
        let lat = blend_displacement_lattice(&fits, &cells, &a, &frame, &small_cfg()).unwrap();
        assert!(lat.disp.iter().all(|d| d.norm() < 1e-12));
    }

    #[test]
    fn single_cell_translation_is_recovered() {
        let a = AffineTransform::from_rows([1.0, 0.1, 4.0], [0.0, 0.9, -3.0]);
        let t = Point2::new(2.5, -1.25);
        // T_j = A_glob ∘ translate(−t) ⇒ T_j⁻¹ p = A_glob⁻¹ p + t.
        let tj = a.compose(&AffineTransform::translation(-t.x, -t.y));
        let c = Point2::new(30.0, 40.0);
        let fits = [fit(tj, 0.7)];
        let cells = [cell_at(c)];
        let w = blend_weights(c, &fits, &cells, 25.0).unwrap();
        assert_eq!(w, vec![1.0]);
        let frame = CanvasFrame { width: 64, height: 64, offset: (0.0, 0.0) };
        let lat = blend_displacement_lattice(&fits, &cells, &a, &frame, &small_cfg()).unwrap();
        for d in &lat.disp {
            assert!((*d - t).norm() < 1e-9);
        }
    }

    #[test]
    fn symmetric_displacements_cancel() {
        let d = 3.0;
        let cells = vec![cell_at(Point2::new(20.0, 40.0)), cell_at(Point2::new(60.0, 40.0))];
        let fits = vec![
            fit(AffineTransform::translation(-d, 0.0), 0.5),
            fit(AffineTransform::translation(d, 0.0), 0.5),
        ];
        let frame = CanvasFrame { width: 81, height: 81, offset: (0.5, 0.5) };
        let lat = blend_displacement_lattice(&fits, &cells, &AffineTransform::IDENTITY, &frame, &FieldConfig { nx: 9, ny: 9, ..Default::default() }).unwrap();
        // Lattice column 4 sits at canvas x = 40.5, i.e. target x = 40.
        for i in 0..9 {
            assert!(lat.get(i, 4).norm() < 1e-12);
        }
    }

    #[test]
    fn regularize_constant_and_clip() {
        let frame = CanvasFrame { width: 50, height: 30, offset: (0.0, 0.0) };
        let lat = DeformationLattice { nx: 6, ny: 5, disp: vec![Point2::new(3.0, -2.0); 30], frame };
        let f = regularize_lattice(&lat, &FieldConfig::default()).unwrap();
        assert!(f.dx.values.iter().all(|&v| (v - 3.0).abs() < 1e-5));
        assert!(f.dy.values.iter().all(|&v| (v + 2.0).abs() < 1e-5));

        let lat = DeformationLattice { nx: 6, ny: 5, disp: vec![Point2::new(100.0, 0.0); 30], frame };
        let f = regularize_lattice(&lat, &FieldConfig { d_max: 48.0, ..Default::default() }).unwrap();
        assert!(f.dx.values.iter().all(|&v| (v - 48.0).abs() < 1e-4));

        let tiny = DeformationLattice { nx: 3, ny: 8, disp: vec![Point2::default(); 24], frame };
        assert!(matches!(regularize_lattice(&tiny, &FieldConfig::default()), Err(Error::LatticeTooSmall { .. })));
    }

    #[test]
    fn smootherstep_examples() {
        assert_eq!(smootherstep(0.0), 0.0);
        assert_eq!(smootherstep(1.0), 1.0);
        assert_eq!(smootherstep(0.5), 0.5);
        assert_eq!(smootherstep(-3.0), 0.0);
        assert_eq!(smootherstep(7.0), 1.0);
        let h = 1e-5;
        assert!(((smootherstep(h) - smootherstep(0.0)) / h).abs() < 1e-8);
        assert!(((smootherstep(1.0) - smootherstep(1.0 - h)) / h).abs() < 1e-8);
    }

    #[test]
    fn ramp_examples() {
        assert_eq!(ramp_value(20.0, 16.0), 1.0);
        assert_eq!(ramp_value(-4.0, 16.0), 0.0);
        assert_eq!(ramp_value(0.0, 16.0), 0.0);
        let mut m = BinaryMask::new(60, 60);
        for y in 10..50 {
            for x in 10..50 {
                m.set(x, y, true);
            }
        }
        let r = build_ramp(&m, 5.0).unwrap();
        assert_eq!(r.get(30, 30), 1.0);
        assert_eq!(r.get(2, 2), 0.0);
        assert!(r.get(10, 30) > 0.0 && r.get(10, 30) < 1.0);
        assert!(matches!(build_ramp(&BinaryMask::new(4, 4), 5.0), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn density_examples() {
        let frame = CanvasFrame { width: 400, height: 200, offset: (0.0, 0.0) };
        let cfg = FieldConfig { sigma_d: 10.0, ..Default::default() };
        assert!(build_density_map(&[], &frame, &cfg).values.iter().all(|&v| v == 0.0));

        let d = build_density_map(&[Point2::new(100.4, 50.9)], &frame, &cfg);
        assert_eq!(d.max(), 1.0);
        assert_eq!(d.get(100, 50), 1.0);

        let d = build_density_map(&[Point2::new(100.5, 100.5), Point2::new(300.5, 100.5)], &frame, &cfg);
        assert_abs_diff_eq!(d.get(100, 100), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d.get(300, 100), 1.0, epsilon = 1e-6);
        assert!(d.get(200, 100) < 1e-6);
    }

    #[test]
    fn gate_examples() {
        let cfg = FieldConfig::default();
        assert_eq!(gate_value(1.0, 1.0, &cfg), 1.0);
        assert_eq!(gate_value(1.0, 0.0, &cfg), cfg.gamma_min);
        assert_eq!(gate_value(0.0, 0.7, &cfg), 0.0);
        let ramp = ScalarField::filled(4, 4, 1.0);
        assert!(matches!(build_gate(&ramp, &ScalarField::new(5, 4), &cfg), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn gating_examples() {
        let cfg = FieldConfig::default();
        let c = DisplacementField::constant(30, 20, Point2::new(2.0, -4.0));
        let same = gate_field(&c, &ScalarField::filled(30, 20, 1.0), &cfg).unwrap();
        assert!(same.dx.values.iter().all(|&v| (v - 2.0).abs() < 1e-5));
        let zero = gate_field(&c, &ScalarField::new(30, 20), &cfg).unwrap();
        assert_eq!(zero.max_magnitude(), 0.0);
        let half = gate_field(&c, &ScalarField::filled(30, 20, 0.5), &cfg).unwrap();
        assert!(half.dy.values.iter().all(|&v| (v + 2.0).abs() < 1e-5));
        assert!(gate_field(&c, &ScalarField::new(3, 3), &cfg).is_err());
    }
}
