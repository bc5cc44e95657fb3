//! Overlap grid construction and per-cell local affine refinement.
//!
//! Every grid cell receives a ridge-regularized affine fitted to the matches
//! whose target point falls in the cell or one of its eight neighbours. The
//! regularizer pulls the fit toward the global affine. Fits that look
//! unstable are refitted with a stronger regularizer and the candidate with
//! the lower composite instability score is kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    clip_polygon, mask_centroid, rasterize_polygon_mask, AffineTransform, BinaryMask, Point2, Polygon, Rect,
};
use crate::linalg::solve3;
use crate::matching::Match;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpConfig {
    pub grid_x: u32,
    pub grid_y: u32,
    /// Base ridge strength; the effective value is `lambda1 · max(n, 1)` for
    /// `n` supporting matches.
    pub lambda1: f64,
    /// Stronger base ridge strength used by the refit.
    pub lambda2: f64,
    /// Confidence Gaussian width as a fraction of the cell diagonal.
    pub alpha: f64,
    pub beta: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub omega_cond: f64,
    pub omega_det: f64,
    pub omega_delta: f64,
    pub tau_det: f64,
    /// Side of the evaluation grid used for the mean displacement.
    pub eval_grid: u32,
    pub cond_max: f64,
    pub rmse_max: f64,
    pub det_min: f64,
    pub delta_max: f64,
}

impl Default for WarpConfig {
    fn default() -> Self {
        Self {
            grid_x: 8,
            grid_y: 8,
            lambda1: 1e-3,
            lambda2: 1e-1,
            alpha: 0.5,
            beta: 4.0,
            kappa_min: 0.05,
            kappa_max: 1.0,
            omega_cond: 1e-3,
            omega_det: 10.0,
            omega_delta: 0.1,
            tau_det: 0.2,
            eval_grid: 5,
            cond_max: 20.0,
            rmse_max: 5.0,
            det_min: 0.2,
            delta_max: 24.0,
        }
    }
}

impl WarpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("kappa_min", self.kappa_min),
            ("kappa_max", self.kappa_max),
            ("omega_cond", self.omega_cond),
            ("omega_det", self.omega_det),
            ("omega_delta", self.omega_delta),
            ("tau_det", self.tau_det),
            ("cond_max", self.cond_max),
            ("rmse_max", self.rmse_max),
            ("det_min", self.det_min),
            ("delta_max", self.delta_max),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::InvalidConfig(format!("warp.{name} must be positive")));
        }
        if self.grid_x == 0 || self.grid_y == 0 || self.eval_grid == 0 {
            return Err(Error::InvalidConfig("warp grid sizes must be positive".into()));
        }
        if self.kappa_min >= self.kappa_max {
            return Err(Error::InvalidConfig("warp.kappa_min must be below kappa_max".into()));
        }
        if self.lambda1 >= self.lambda2 {
            return Err(Error::InvalidConfig("warp.lambda1 must be below lambda2".into()));
        }
        Ok(())
    }
}

/// One grid cell intersected with the overlap region, in target coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub col: u32,
    pub row: u32,
    /// Cell ∩ overlap, cropped to the cell's pixel range.
    pub mask: BinaryMask,
    /// Target-pixel position of `mask`'s top-left pixel.
    pub mask_origin: (u32, u32),
    pub centroid: Point2,
    pub bbox: Rect,
    pub diag: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGrid {
    /// Projected source quadrilateral clipped to the target frame.
    pub polygon: Polygon,
    /// Overlap raster at target resolution.
    pub mask: BinaryMask,
    pub bbox: Rect,
    pub grid_x: u32,
    pub grid_y: u32,
    /// Surviving cells in row-major grid order.
    pub cells: Vec<GridCell>,
}

impl OverlapGrid {
    fn cell_size(&self) -> (f64, f64) {
        (self.bbox.width() / self.grid_x as f64, self.bbox.height() / self.grid_y as f64)
    }

    /// Grid index of a target-space point, if it lies on the grid.
    pub fn locate(&self, p: Point2) -> Option<(u32, u32)> {
        if !self.bbox.contains(p) {
            return None;
        }
        let (cw, ch) = self.cell_size();
        let col = (((p.x - self.bbox.x0) / cw).floor() as i64).clamp(0, self.grid_x as i64 - 1);
        let row = (((p.y - self.bbox.y0) / ch).floor() as i64).clamp(0, self.grid_y as i64 - 1);
        Some((col as u32, row as u32))
    }

    /// Matches whose target point lies in `cell` or one of its 8-connected
    /// neighbours.
    pub fn support(&self, cell: &GridCell, matches: &[Match]) -> Vec<Match> {
        matches
            .iter()
            .filter(|m| {
                self.locate(m.target()).is_some_and(|(c, r)| {
                    (c as i64 - cell.col as i64).abs() <= 1 && (r as i64 - cell.row as i64).abs() <= 1
                })
            })
            .copied()
            .collect()
    }
}

/// Projects the source frame into the target, clips it to the target bounds,
/// rasterizes the overlap and lays a `grid_x × grid_y` grid over its bounding
/// box. Cells without overlap pixels are dropped.
pub fn build_overlap_grid(
    a_glob: &AffineTransform,
    source_dims: (u32, u32),
    target_dims: (u32, u32),
    cfg: &WarpConfig,
) -> Result<OverlapGrid> {
    a_glob.inverse()?;
    let quad = Rect::from_dims(source_dims.0, source_dims.1).to_polygon().transformed(a_glob);
    let polygon = clip_polygon(&quad, &Rect::from_dims(target_dims.0, target_dims.1));
    if polygon.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mask = rasterize_polygon_mask(&polygon, target_dims.0, target_dims.1);
    if mask.is_empty() {
        return Err(Error::NoOverlap);
    }
    let bbox = polygon.bbox().expect("non-empty polygon");
    let (gx, gy) = (cfg.grid_x, cfg.grid_y);
    let cw = bbox.width() / gx as f64;
    let ch = bbox.height() / gy as f64;
    let (tw, th) = target_dims;
    // First pixel whose center is >= v.
    let first_center = |v: f64, limit: u32| ((v - 0.5).ceil().max(0.0) as u32).min(limit);

    let mut cells = Vec::new();
    for row in 0..gy {
        for col in 0..gx {
            let cell_rect = Rect::new(
                bbox.x0 + col as f64 * cw,
                bbox.y0 + row as f64 * ch,
                if col + 1 == gx { bbox.x1 } else { bbox.x0 + (col + 1) as f64 * cw },
                if row + 1 == gy { bbox.y1 } else { bbox.y0 + (row + 1) as f64 * ch },
            );
            let (px0, px1) = (first_center(cell_rect.x0, tw), first_center(cell_rect.x1, tw));
            let (py0, py1) = (first_center(cell_rect.y0, th), first_center(cell_rect.y1, th));
            if px1 <= px0 || py1 <= py0 {
                continue;
            }
            let mut cell_mask = BinaryMask::new(px1 - px0, py1 - py0);
            for y in py0..py1 {
                for x in px0..px1 {
                    if mask.get(x, y) {
                        cell_mask.set(x - px0, y - py0, true);
                    }
                }
            }
            let Ok(local) = mask_centroid(&cell_mask) else {
                continue;
            };
            cells.push(GridCell {
                col,
                row,
                mask: cell_mask,
                mask_origin: (px0, py0),
                centroid: Point2::new(local.x + px0 as f64, local.y + py0 as f64),
                bbox: cell_rect,
                diag: cell_rect.diagonal(),
            });
        }
    }
    Ok(OverlapGrid { polygon, mask, bbox, grid_x: gx, grid_y: gy, cells })
}

/// Ridge-regularized affine fit minimizing
/// `Σ‖T·p_s − p_t‖² + λ‖T − A_glob‖²_F` over the six affine parameters.
/// With no supporting matches the global affine is returned unchanged.
pub fn fit_local_affine(support: &[Match], a_glob: &AffineTransform, lambda: f64) -> Result<AffineTransform> {
    if support.is_empty() {
        return Ok(*a_glob);
    }
    assert!(lambda > 0.0, "ridge strength must be positive");
    let mut normal = [[0.0f64; 3]; 3];
    let mut rhs_x = [0.0f64; 3];
    let mut rhs_y = [0.0f64; 3];
    for m in support {
        let v = [m.x_s, m.y_s, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                normal[i][j] += v[i] * v[j];
            }
            rhs_x[i] += v[i] * m.x_t;
            rhs_y[i] += v[i] * m.y_t;
        }
    }
    let g = a_glob.params();
    for i in 0..3 {
        normal[i][i] += lambda;
        rhs_x[i] += lambda * g[i];
        rhs_y[i] += lambda * g[3 + i];
    }
    let r0 = solve3(normal, rhs_x).ok_or(Error::NumericalFailure("singular ridge system"))?;
    let r1 = solve3(normal, rhs_y).ok_or(Error::NumericalFailure("singular ridge system"))?;
    Ok(AffineTransform::from_rows(r0, r1))
}

/// Clamped Gaussian weight mass of the supporting matches around the cell
/// centroid; `kappa_min` for an empty support.
pub fn confidence_score(cell: &GridCell, support: &[Match], cfg: &WarpConfig) -> f64 {
    let sigma = cfg.alpha * cell.diag;
    let weights = support
        .iter()
        .map(|m| (-(m.target() - cell.centroid).norm_sq() / (2.0 * sigma * sigma)).exp());
    let (sum, max) = weights.fold((0.0f64, 0.0f64), |(s, mx), w| (s + w, mx.max(w)));
    if !(max > 0.0) {
        return cfg.kappa_min;
    }
    (sum / (cfg.beta * max)).clamp(cfg.kappa_min, cfg.kappa_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rmse: f64,
    pub det: f64,
    pub cond: f64,
    pub delta_mean: f64,
    pub composite_score: f64,
}

impl Diagnostics {
    pub fn is_unstable(&self, cfg: &WarpConfig) -> bool {
        self.cond > cfg.cond_max
            || self.det.abs() < cfg.det_min
            || self.rmse > cfg.rmse_max
            || self.delta_mean > cfg.delta_max
    }
}

/// Composite instability score; lower is more stable.
pub fn composite_score(rmse: f64, cond: f64, det: f64, delta_mean: f64, cfg: &WarpConfig) -> f64 {
    rmse + cfg.omega_cond * cond + cfg.omega_det * (cfg.tau_det - det.abs()).max(0.0) + cfg.omega_delta * delta_mean
}

pub fn diagnose_transform(
    t: &AffineTransform,
    a_glob: &AffineTransform,
    support: &[Match],
    cell: &GridCell,
    cfg: &WarpConfig,
) -> Diagnostics {
    let rmse = if support.is_empty() {
        0.0
    } else {
        (support.iter().map(|m| (t.map(m.source()) - m.target()).norm_sq()).sum::<f64>() / support.len() as f64)
            .sqrt()
    };
    let det = t.det();
    let cond = t.condition_number();

    let n = cfg.eval_grid.max(1);
    let step = |lo: f64, hi: f64, i: u32| {
        if n == 1 {
            (lo + hi) / 2.0
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut acc = 0.0;
    for iy in 0..n {
        for ix in 0..n {
            let p = Point2::new(step(cell.bbox.x0, cell.bbox.x1, ix), step(cell.bbox.y0, cell.bbox.y1, iy));
            acc += t.map(p).distance(a_glob.map(p));
        }
    }
    let delta_mean = acc / (n * n) as f64;
    Diagnostics { rmse, det, cond, delta_mean, composite_score: composite_score(rmse, cond, det, delta_mean, cfg) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub transform: AffineTransform,
    pub conf: f64,
    pub diag_report: Diagnostics,
    /// Effective ridge strength of the kept candidate.
    pub chosen_lambda: f64,
    /// `(effective λ, composite score)` for every candidate evaluated.
    pub candidates: Vec<(f64, f64)>,
    pub support_count: usize,
}

pub fn effective_lambda(base: f64, support: usize) -> f64 {
    base * support.max(1) as f64
}

/// Fits with the weak regularizer and, when any stability threshold trips,
/// also with the strong one; keeps the candidate with the lower composite
/// score (the weak fit wins ties).
pub fn select_cell_transform(
    cell: &GridCell,
    support: &[Match],
    a_glob: &AffineTransform,
    cfg: &WarpConfig,
) -> Result<LocalFit> {
    let conf = confidence_score(cell, support, cfg);
    let l1 = effective_lambda(cfg.lambda1, support.len());
    let t1 = fit_local_affine(support, a_glob, l1)?;
    let d1 = diagnose_transform(&t1, a_glob, support, cell, cfg);
    let mut fit = LocalFit {
        transform: t1,
        conf,
        diag_report: d1,
        chosen_lambda: l1,
        candidates: vec![(l1, d1.composite_score)],
        support_count: support.len(),
    };
    if d1.is_unstable(cfg) {
        let l2 = effective_lambda(cfg.lambda2, support.len());
        let t2 = fit_local_affine(support, a_glob, l2)?;
        let d2 = diagnose_transform(&t2, a_glob, support, cell, cfg);
        fit.candidates.push((l2, d2.composite_score));
        if d2.composite_score < d1.composite_score {
            fit.transform = t2;
            fit.diag_report = d2;
            fit.chosen_lambda = l2;
        }
    }
    Ok(fit)
}

/// Runs [`select_cell_transform`] for every cell; output order follows
/// `grid.cells`.
pub fn fit_cells(grid: &OverlapGrid, inliers: &[Match], a_glob: &AffineTransform, cfg: &WarpConfig) -> Result<Vec<LocalFit>> {
    let one = |cell: &GridCell| select_cell_transform(cell, &grid.support(cell, inliers), a_glob, cfg);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grid.cells.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grid.cells.iter().map(one).collect()
    }
}
