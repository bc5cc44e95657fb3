use image::{GrayImage, Luma};
use panostitch::debug::{read_pfm, write_debug, DEBUG_FILES};
use panostitch::matching::{load_match_file, parse_match_json, save_match_file};
use panostitch::pipeline::load_rgb;
use panostitch::synth::{generate_pair, SceneSpec};
use panostitch::{run_pipeline, Error, PipelineConfig};

/// Layout written by the external exporter: integer dims, plain floats,
/// Python-style spacing.
fn exporter_style_json(ms: &panostitch::MatchSet) -> String {
    let rows: Vec<String> = ms
        .matches
        .iter()
        .map(|m| format!(r#"{{"xs": {}, "ys": {}, "xt": {}, "yt": {}, "score": {}}}"#, m.x_s, m.y_s, m.x_t, m.y_t, m.score))
        .collect();
    format!(
        r#"{{"source_dims": [{}, {}], "target_dims": [{}, {}], "matches": [{}]}}"#,
        ms.source_dims.0,
        ms.source_dims.1,
        ms.target_dims.0,
        ms.target_dims.1,
        rows.join(", ")
    )
}

#[test]
fn exporter_match_file_drives_the_pipeline() {
    let pair = generate_pair(&SceneSpec::rigid(0.02, 28.0, 5.0, 11)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("matches.json");
    std::fs::write(&path, exporter_style_json(&pair.ground_truth)).unwrap();
    let ms = load_match_file(&path).unwrap();
    assert_eq!(ms, pair.ground_truth);

    let cfg = PipelineConfig::from_json(r#"{"matcher":{"kind":"file"}}"#).unwrap();
    let out = run_pipeline(&pair.source, &pair.target, Some(ms), &cfg).unwrap();
    assert!(out.report.overlap.psnr_db >= 30.0, "{}", out.report.overlap.psnr_db);
}

#[test]
fn match_file_round_trip_and_rejections() {
    let pair = generate_pair(&SceneSpec::translation(20.0, 0.0, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gt.json");
    save_match_file(&pair.ground_truth, &path).unwrap();
    assert_eq!(load_match_file(&path).unwrap(), pair.ground_truth);

    let out_of_bounds = r#"{"source_dims":[10,10],"target_dims":[10,10],
        "matches":[{"xs":1,"ys":1,"xt":1,"yt":1,"score":0.5},{"xs":11,"ys":1,"xt":1,"yt":1,"score":0.5}]}"#;
    assert!(matches!(parse_match_json(out_of_bounds), Err(Error::Bounds(1))));
    let missing_field = r#"{"source_dims":[10,10],"target_dims":[10,10],"matches":[{"xs":1,"ys":1,"xt":1}]}"#;
    assert!(matches!(parse_match_json(missing_field), Err(Error::Parse(_))));
    assert!(matches!(load_match_file(dir.path().join("absent.json")), Err(Error::Io(_))));
}

#[test]
fn mismatched_match_dims_are_rejected() {
    let pair = generate_pair(&SceneSpec::identity(4)).unwrap();
    let mut ms = pair.ground_truth.clone();
    ms.source_dims = (800, 600);
    let err = run_pipeline(&pair.source, &pair.target, Some(ms), &PipelineConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().starts_with("STAGE=matching CODE=DimensionMismatch"), "{err}");
}

#[test]
fn debug_dump_writes_every_artifact() {
    let pair = generate_pair(&SceneSpec::translation(60.0, 4.0, 8)).unwrap();
    let out = run_pipeline(&pair.source, &pair.target, Some(pair.ground_truth.clone()), &PipelineConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_debug(dir.path(), &out).unwrap();
    for name in DEBUG_FILES {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let gate = read_pfm(dir.path().join("gate.pfm")).unwrap();
    assert_eq!(gate, vec![out.artifacts.gate.clone()]);
    let field = read_pfm(dir.path().join("field_guarded.pfm")).unwrap();
    assert_eq!(field[0], out.artifacts.guarded_field.dx);
    assert_eq!(field[1], out.artifacts.guarded_field.dy);
    let inliers = load_match_file(dir.path().join("inliers.json")).unwrap();
    assert_eq!(inliers, out.artifacts.inliers);
    let csv = std::fs::read_to_string(dir.path().join("zone_classes.csv")).unwrap();
    assert_eq!(csv.lines().count(), out.artifacts.zone.classes.len() + 1);
}

#[test]
fn grayscale_inputs_are_expanded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.png");
    GrayImage::from_fn(8, 4, |x, _| Luma([x as u8 * 30])).save(&path).unwrap();
    let img = load_rgb(&path).unwrap();
    assert_eq!(img.get_pixel(3, 1).0, [90, 90, 90]);
    assert!(load_rgb(dir.path().join("none.png")).is_err());
}
