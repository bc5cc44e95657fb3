//! Intermediate artifacts written by `--dump-debug`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use image::{GrayImage, Rgb, RgbImage};

use crate::compose::Ownership;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::matching::save_match_file;
use crate::pipeline::{Artifacts, PipelineOutput};
use crate::raster::ScalarField;

/// Writes a PFM image: `Pf` for one channel, `PF` for three. Rows run
/// bottom-to-top, little-endian `f32` with scale −1.
pub fn write_pfm(path: impl AsRef<Path>, channels: &[&ScalarField]) -> Result<()> {
    let first = channels.first().ok_or_else(|| Error::DimensionMismatch("no channels".into()))?;
    if !(channels.len() == 1 || channels.len() == 3) || channels.iter().any(|c| !c.same_dims(first)) {
        return Err(Error::DimensionMismatch("PFM needs 1 or 3 equally sized channels".into()));
    }
    let (w, h) = (first.width, first.height);
    let tag = if channels.len() == 1 { "Pf" } else { "PF" };
    let mut buf = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            for c in channels {
                buf.extend_from_slice(&c.get(x, y).to_le_bytes());
            }
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Reads a PFM written by [`write_pfm`] (little-endian only).
pub fn read_pfm(path: impl AsRef<Path>) -> Result<Vec<ScalarField>> {
    let bytes = std::fs::read(path)?;
    let bad = || Error::Parse("malformed PFM".into());
    let mut fields = Vec::with_capacity(3);
    let mut pos = 0;
    for _ in 0..3 {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(bad)? + pos;
        fields.push(std::str::from_utf8(&bytes[pos..end]).map_err(|_| bad())?.to_string());
        pos = end + 1;
    }
    let nc = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad()),
    };
    let dims: Vec<u32> = fields[1].split_whitespace().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
    let scale: f64 = fields[2].trim().parse().map_err(|_| bad())?;
    if dims.len() != 2 || scale >= 0.0 {
        return Err(bad());
    }
    let (w, h) = (dims[0], dims[1]);
    if bytes.len() - pos != (w * h) as usize * nc * 4 {
        return Err(bad());
    }
    let mut out = vec![ScalarField::new(w, h); nc];
    let mut k = pos;
    for y in (0..h).rev() {
        for x in 0..w {
            for f in out.iter_mut() {
                f.set(x, y, f32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes")));
                k += 4;
            }
        }
    }
    Ok(out)
}

/// 8-bit rendering of a unit-range field, scaled by 255.
pub fn unit_field_png(f: &ScalarField) -> GrayImage {
    GrayImage::from_fn(f.width, f.height, |x, y| image::Luma([(f.get(x, y) as f64 * 255.0).round().clamp(0.0, 255.0) as u8]))
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_line(img: &mut RgbImage, a: Point2, b: Point2, c: Rgb<u8>) {
    let steps = (a.distance(b) * 2.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let p = a + (b - a) * (i as f64 / steps as f64);
        put(img, p.x.floor() as i64, p.y.floor() as i64, c);
    }
}

fn draw_marker(img: &mut RgbImage, p: Point2, c: Rgb<u8>) {
    let (x, y) = (p.x.floor() as i64, p.y.floor() as i64);
    for d in -3..=3 {
        put(img, x + d, y, c);
        put(img, x, y + d, c);
    }
}

/// Average of both layers where they overlap, either layer elsewhere.
fn canvas_backdrop(a: &Artifacts) -> RgbImage {
    let (s, t) = (&a.canvas.source_layer, &a.canvas.target_layer);
    RgbImage::from_fn(s.width(), s.height(), |x, y| {
        let (p, q) = (s.get_pixel(x, y), t.get_pixel(x, y));
        match (p[3] > 0, q[3] > 0) {
            (true, true) => Rgb(std::array::from_fn(|c| ((p[c] as u16 + q[c] as u16) / 2) as u8)),
            (true, false) => Rgb([p[0], p[1], p[2]]),
            (false, true) => Rgb([q[0], q[1], q[2]]),
            _ => Rgb([0, 0, 0]),
        }
    })
}

pub fn chain_overlay(a: &Artifacts) -> RgbImage {
    let mut img = canvas_backdrop(a);
    let (lo, hi) = a.zone.zone;
    for y in 0..img.height() {
        put(&mut img, lo.floor() as i64, y as i64, Rgb([255, 255, 0]));
        put(&mut img, hi.floor() as i64 - 1, y as i64, Rgb([255, 255, 0]));
    }
    let line = a.line.polyline(img.height());
    for w in line.windows(2) {
        draw_line(&mut img, w[0], w[1], Rgb([255, 0, 0]));
    }
    if let Some(c) = &a.chain {
        for p in &c.src_points {
            draw_marker(&mut img, *p, Rgb([0, 255, 0]));
        }
    }
    img
}

pub fn slice_overlay(a: &Artifacts) -> RgbImage {
    let mut img = canvas_backdrop(a);
    for s in &a.plan.slices {
        let tint = match s.ownership {
            Ownership::SourceOnly => Rgb([255, 80, 80]),
            Ownership::TargetOnly => Rgb([80, 80, 255]),
            Ownership::Blend => Rgb([80, 255, 80]),
        };
        for y in (0..img.height()).step_by(4) {
            for x in s.col_lo..s.col_hi {
                if (x + y) % 16 == 0 {
                    put(&mut img, x as i64, y as i64, tint);
                }
            }
        }
    }
    for &b in &a.plan.boundaries {
        for y in 0..img.height() {
            put(&mut img, b.floor() as i64, y as i64, Rgb([255, 255, 255]));
        }
    }
    img
}

fn zone_csv(a: &Artifacts) -> String {
    let mut s = String::from("x_lo,x_hi,count,mean_disparity\n");
    for c in &a.zone.classes {
        let _ = writeln!(s, "{},{},{},{}", c.x_lo, c.x_hi, c.members.len(), c.mean_disparity);
    }
    s
}

fn cells_csv(a: &Artifacts) -> String {
    let mut s = String::from("col,row,centroid_x,centroid_y,support,conf,lambda,rmse,det,cond,delta_mean,score\n");
    for (c, f) in a.grid.cells.iter().zip(&a.fits) {
        let d = &f.diag_report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.col, c.row, c.centroid.x, c.centroid.y, f.support_count, f.conf, f.chosen_lambda, d.rmse, d.det, d.cond, d.delta_mean, d.composite_score
        );
    }
    s
}

/// Writes every intermediate of a run into `dir`, creating it if needed.
pub fn write_debug(dir: impl AsRef<Path>, out: &PipelineOutput) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let a = &out.artifacts;
    save_match_file(&a.inliers, dir.join("inliers.json"))?;
    std::fs::write(dir.join("cells.csv"), cells_csv(a))?;
    let zero = ScalarField::new(a.frame.width, a.frame.height);
    write_pfm(dir.join("field_raw.pfm"), &[&a.raw_field.dx, &a.raw_field.dy, &zero])?;
    write_pfm(dir.join("field_guarded.pfm"), &[&a.guarded_field.dx, &a.guarded_field.dy, &zero])?;
    write_pfm(dir.join("gate.pfm"), &[&a.gate])?;
    unit_field_png(&a.ramp).save(dir.join("ramp.png"))?;
    unit_field_png(&a.density).save(dir.join("density.png"))?;
    a.canvas.source_layer.save(dir.join("warped_source.png"))?;
    a.canvas.target_layer.save(dir.join("pasted_target.png"))?;
    std::fs::write(dir.join("zone_classes.csv"), zone_csv(a))?;
    let zone = serde_json::json!({
        "zone": [a.zone.zone.0, a.zone.zone.1],
        "fallback": a.zone.fallback,
        "best_cluster": a.zone.best,
        "clusters": a.zone.clusters,
    });
    std::fs::write(dir.join("zone.json"), serde_json::to_string_pretty(&zone).expect("json"))?;
    chain_overlay(a).save(dir.join("chain_overlay.png"))?;
    slice_overlay(a).save(dir.join("slices_overlay.png"))?;
    Ok(())
}

/// File names produced by [`write_debug`].
pub const DEBUG_FILES: [&str; 13] = [
    "inliers.json",
    "cells.csv",
    "field_raw.pfm",
    "field_guarded.pfm",
    "gate.pfm",
    "ramp.png",
    "density.png",
    "warped_source.png",
    "pasted_target.png",
    "zone_classes.csv",
    "zone.json",
    "chain_overlay.png",
    "slices_overlay.png",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = ScalarField::from_fn(5, 3, |x, y| x as f32 - 2.5 * y as f32);
        let b = ScalarField::from_fn(5, 3, |x, y| (x * y) as f32 / 7.0);
        let c = ScalarField::new(5, 3);
        write_pfm(dir.path().join("one.pfm"), &[&a]).unwrap();
        write_pfm(dir.path().join("three.pfm"), &[&a, &b, &c]).unwrap();
        assert_eq!(read_pfm(dir.path().join("one.pfm")).unwrap(), vec![a.clone()]);
        assert_eq!(read_pfm(dir.path().join("three.pfm")).unwrap(), vec![a.clone(), b.clone(), c]);
        let head = std::fs::read(dir.path().join("one.pfm")).unwrap();
        assert!(head.starts_with(b"Pf\n5 3\n-1.0\n"));
        assert!(write_pfm(dir.path().join("bad.pfm"), &[&a, &b]).is_err());
    }
}
