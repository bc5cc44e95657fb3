//! End-to-end stitching of one image pair.

use std::collections::BTreeMap;
use web_time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::chain::{refine_chain, stitching_line, zone_midline, KeypointChain, StitchLine};
use crate::compose::{blend_and_assemble, partition_slices, validate_segments, BlendWeights, PartitionPlan, SegmentPair};
use crate::config::{MatcherKind, PipelineConfig};
use crate::error::{Error, Stage, StageError, StageExt};
use crate::field::{
    blend_displacement_lattice, build_density_map, build_gate, build_ramp, gate_field, ramp_bandwidth,
    regularize_lattice, CanvasFrame, DeformationLattice, DisplacementField,
};
use crate::geometry::{rasterize_polygon_mask, AffineTransform, BinaryMask, Point2};
use crate::local_warp::{build_overlap_grid, fit_cells, LocalFit, OverlapGrid};
use crate::matching::{detect_and_match_builtin, MatchSet};
use crate::metrics::{overlap_report, to_rgb, OverlapReport};
use crate::ransac::estimate_affine_ransac;
use crate::raster::{to_gray, ScalarField};
use crate::render::{paste_target, transform_match_points, warp_source, Canvas, CanvasMatches};
use crate::zone::{identify_zone, ZoneSelection};

/// Machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchReport {
    #[serde(flatten)]
    pub overlap: OverlapReport,
    pub stage_timings_ms: BTreeMap<String, f64>,
    /// Recoveries taken instead of failing, in order of occurrence.
    pub fallbacks: Vec<String>,
    /// Global affine `[a, b, tx, c, d, ty]`.
    pub global_affine: [f64; 6],
    pub matches: usize,
    pub inliers: usize,
    pub excluded_points: usize,
    pub cells: usize,
    pub zone: (f64, f64),
    pub chain_length: usize,
    pub slices: usize,
    /// `(x, y, width, height)` of the panorama on the canvas.
    pub crop: (u32, u32, u32, u32),
}

impl StitchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Every intermediate product of a run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub matches: MatchSet,
    pub a_glob: AffineTransform,
    pub inliers: MatchSet,
    pub grid: OverlapGrid,
    pub fits: Vec<LocalFit>,
    pub frame: CanvasFrame,
    pub lattice: DeformationLattice,
    pub raw_field: DisplacementField,
    pub overlap_mask: BinaryMask,
    pub ramp: ScalarField,
    pub density: ScalarField,
    pub gate: ScalarField,
    pub guarded_field: DisplacementField,
    pub canvas: Canvas,
    pub canvas_matches: CanvasMatches,
    pub zone: ZoneSelection,
    pub chain: Option<KeypointChain>,
    pub segments: Vec<SegmentPair>,
    pub line: StitchLine,
    pub plan: PartitionPlan,
    pub weights: BlendWeights,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub panorama: RgbImage,
    pub report: StitchReport,
    pub artifacts: Artifacts,
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn run<T>(&mut self, stage: Stage, f: impl FnOnce() -> crate::Result<T>) -> Result<T, StageError> {
        let start = Instant::now();
        let out = f().stage(stage);
        *self.0.entry(stage.as_str().to_string()).or_default() += start.elapsed().as_secs_f64() * 1e3;
        out
    }
}

/// Canvas-resolution overlap raster: the projected source polygon clipped to
/// the target frame, shifted by the canvas offset.
pub fn canvas_overlap_mask(grid: &OverlapGrid, frame: &CanvasFrame) -> BinaryMask {
    rasterize_polygon_mask(&grid.polygon.translated(frame.offset_point()), frame.width, frame.height)
}

/// Runs the full pipeline. `matches` must be given when the configuration
/// selects file input; otherwise the built-in matcher runs.
pub fn run_pipeline(
    source: &RgbImage,
    target: &RgbImage,
    matches: Option<MatchSet>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, StageError> {
    cfg.validate().stage(Stage::Config)?;
    let mut t = Timer(BTreeMap::new());
    let mut fallbacks = Vec::new();

    let matches = t.run(Stage::Matching, || match matches {
        Some(ms) => {
            if ms.source_dims != source.dimensions() || ms.target_dims != target.dimensions() {
                return Err(Error::DimensionMismatch(format!(
                    "match file dims {:?}/{:?} vs images {:?}/{:?}",
                    ms.source_dims,
                    ms.target_dims,
                    source.dimensions(),
                    target.dimensions()
                )));
            }
            Ok(ms)
        }
        None if cfg.matcher.kind == MatcherKind::File => {
            Err(Error::InvalidConfig("matcher.kind is \"file\" but no match file was given".into()))
        }
        None => detect_and_match_builtin(source, target, cfg.matcher.max_matches, &cfg.matcher.builtin),
    })?;

    let (a_glob, inlier_idx) = t.run(Stage::Ransac, || estimate_affine_ransac(&matches, &cfg.ransac))?;
    let inliers = matches.select(&inlier_idx);

    let grid = t.run(Stage::Grid, || build_overlap_grid(&a_glob, source.dimensions(), target.dimensions(), &cfg.warp))?;
    let fits = t.run(Stage::LocalFit, || fit_cells(&grid, &inliers.matches, &a_glob, &cfg.warp))?;

    let frame = CanvasFrame::enclosing(&a_glob, source.dimensions(), target.dimensions());
    let (lattice, raw_field, overlap_mask, ramp, density, gate, guarded_field) = t.run(Stage::Field, || {
        let lattice = blend_displacement_lattice(&fits, &grid.cells, &a_glob, &frame, &cfg.field)?;
        let raw = regularize_lattice(&lattice, &cfg.field)?;
        let mask = canvas_overlap_mask(&grid, &frame);
        let ramp = build_ramp(&mask, ramp_bandwidth(target.dimensions(), &cfg.field))?;
        let points: Vec<Point2> = inliers.matches.iter().map(|m| frame.from_target(m.target())).collect();
        let density = build_density_map(&points, &frame, &cfg.field);
        let gate = build_gate(&ramp, &density, &cfg.field)?;
        let guarded = gate_field(&raw, &gate, &cfg.field)?;
        Ok((lattice, raw, mask, ramp, density, gate, guarded))
    })?;

    let (canvas, canvas_matches) = t.run(Stage::Render, || {
        let src_layer = warp_source(source, &a_glob, &guarded_field, &frame)?;
        let tgt_layer = paste_target(target, &frame)?;
        let canvas = Canvas::new(frame, src_layer, tgt_layer)?;
        let cm = transform_match_points(&inliers, &a_glob, &guarded_field, &frame)?;
        Ok((canvas, cm))
    })?;
    if canvas_matches.excluded > 0 {
        fallbacks.push(format!("excluded_unconverged_points:{}", canvas_matches.excluded));
    }

    let zone = t.run(Stage::Zone, || identify_zone(&canvas_matches.pairs, frame.width, &cfg.zone))?;
    if zone.fallback {
        fallbacks.push("zone_busiest_class".to_string());
    }

    let chain = t.run(Stage::Chain, || {
        let members = zone.zone_members(&canvas_matches.pairs);
        let zone_pairs: Vec<(Point2, Point2)> = members.iter().map(|&i| canvas_matches.pairs[i]).collect();
        let sg = to_gray(&to_rgb(&canvas.source_layer));
        let tg = to_gray(&to_rgb(&canvas.target_layer));
        match refine_chain(&zone_pairs, &sg, &tg, zone.zone.0, &cfg.chain) {
            Ok(c) => Ok(Some(c)),
            Err(Error::ChainTooShort(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    if chain.is_none() {
        fallbacks.push("chain_midline".to_string());
    }

    let (chain, segments, line, plan) = t.run(Stage::Partition, || {
        let (chain, segments, line) = match chain {
            Some(c) => match validate_segments(&c) {
                Ok((valid, seen)) => {
                    let line = stitching_line(&valid);
                    (Some(valid), seen, line)
                }
                Err(Error::AllSegmentsInvalid) => (Some(c), Vec::new(), zone_midline(zone.zone)),
                Err(e) => return Err(e),
            },
            None => (None, Vec::new(), zone_midline(zone.zone)),
        };
        let plan = partition_slices(&line.anchors_x(), &canvas)?;
        Ok((chain, segments, line, plan))
    })?;
    if chain.is_some() && line.is_fallback() {
        fallbacks.push("segments_midline".to_string());
    }

    let composite = t.run(Stage::Compose, || blend_and_assemble(&canvas, &plan, &cfg.compose))?;
    let overlap = t.run(Stage::Metrics, || overlap_report(&canvas.source_layer, &canvas.target_layer))?;

    let report = StitchReport {
        overlap,
        stage_timings_ms: t.0,
        fallbacks,
        global_affine: a_glob.params(),
        matches: matches.len(),
        inliers: inliers.len(),
        excluded_points: canvas_matches.excluded,
        cells: grid.cells.len(),
        zone: zone.zone,
        chain_length: chain.as_ref().map_or(0, |c| c.len()),
        slices: plan.slice_count(),
        crop: composite.crop,
    };
    Ok(PipelineOutput {
        panorama: composite.image,
        report,
        artifacts: Artifacts {
            matches,
            a_glob,
            inliers,
            grid,
            fits,
            frame,
            lattice,
            raw_field,
            overlap_mask,
            ramp,
            density,
            gate,
            guarded_field,
            canvas,
            canvas_matches,
            zone,
            chain,
            segments,
            line,
            plan,
            weights: composite.weights,
        },
    })
}

/// Loads an image from disk as 8-bit RGB; grayscale inputs are expanded.
pub fn load_rgb(path: impl AsRef<std::path::Path>) -> crate::Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_pair, SceneSpec};

    #[test]
    fn identity_scene_end_to_end() {
        let pair = generate_pair(&SceneSpec::identity(1)).unwrap();
        let out = run_pipeline(&pair.source, &pair.target, Some(pair.ground_truth.clone()), &PipelineConfig::default()).unwrap();
        assert_eq!(out.report.overlap.psnr_db, f64::INFINITY);
        assert!(out.artifacts.guarded_field.max_magnitude() <= 1e-6);
        assert_eq!(out.panorama.dimensions(), (640, 480));
        assert_eq!(out.panorama, pair.target);
    }

    #[test]
    fn missing_match_file_is_config_error() {
        let pair = generate_pair(&SceneSpec::identity(1)).unwrap();
        let cfg = PipelineConfig::from_json(r#"{"matcher":{"kind":"file"}}"#).unwrap();
        let err = run_pipeline(&pair.source, &pair.target, None, &cfg).unwrap_err();
        assert_eq!(err.stage, Stage::Matching);
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn too_few_matches_is_tagged() {
        let pair = generate_pair(&SceneSpec::identity(1)).unwrap();
        let few = pair.ground_truth.select(&[0, 1]);
        let err = run_pipeline(&pair.source, &pair.target, Some(few), &PipelineConfig::default()).unwrap_err();
        assert_eq!(err.to_string().split(':').next().unwrap(), "STAGE=ransac CODE=TooFewMatches");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn report_json_round_trip() {
        let pair = generate_pair(&SceneSpec::translation(40.0, 0.0, 2)).unwrap();
        let out = run_pipeline(&pair.source, &pair.target, Some(pair.ground_truth.clone()), &PipelineConfig::default()).unwrap();
        let back: StitchReport = serde_json::from_str(&out.report.to_json()).unwrap();
        assert_eq!(back, out.report);
        let v: serde_json::Value = serde_json::from_str(&out.report.to_json()).unwrap();
        assert!(v.get("psnr_db").is_some() && v.get("ssim").is_some() && v.get("overlap_pixels").is_some());
        assert!(v.get("stage_timings_ms").unwrap().get("ransac").is_some());
    }
}
