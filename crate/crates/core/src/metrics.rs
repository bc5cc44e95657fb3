//! Overlap PSNR and SSIM.

use image::{RgbImage, RgbaImage};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::BinaryMask;
use crate::raster::{for_each_row, gaussian_kernel};

const SSIM_SIGMA: f64 = 1.5;
const SSIM_WINDOW: usize = 11;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

fn check_dims(a: &RgbImage, b: &RgbImage, mask: &BinaryMask) -> Result<()> {
    if a.dimensions() != b.dimensions() || a.dimensions() != (mask.width(), mask.height()) {
        return Err(Error::DimensionMismatch(format!(
            "images {:?} and {:?}, mask {}x{}",
            a.dimensions(),
            b.dimensions(),
            mask.width(),
            mask.height()
        )));
    }
    Ok(())
}

/// `10·log10(255² / MSE)` over masked pixels, channel-averaged. Identical
/// regions give `f64::INFINITY`.
pub fn psnr_overlap(a: &RgbImage, b: &RgbImage, mask: &BinaryMask) -> Result<f64> {
    check_dims(a, b, mask)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut sse = 0.0f64;
    for (x, y) in mask.iter_set() {
        let (p, q) = (a.get_pixel(x, y), b.get_pixel(x, y));
        for c in 0..3 {
            let d = p[c] as f64 - q[c] as f64;
            sse += d * d;
        }
    }
    let mse = sse / (3 * mask.count()) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (L * L / mse).log10())
}

/// Windowed means of `f` over every center whose 11×11 window lies inside the
/// image; entries outside that band are zero.
fn window_mean(f: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let mut tmp = vec![0.0f64; w * h];
    for_each_row(&mut tmp, w, |y, row| {
        let line = &f[y * w..(y + 1) * w];
        for x in r..w.saturating_sub(r) {
            row[x] = kernel.iter().enumerate().map(|(k, kv)| kv * line[x + k - r]).sum();
        }
    });
    let mut out = vec![0.0f64; w * h];
    for_each_row(&mut out, w, |y, row| {
        if y < r || y + r >= h {
            return;
        }
        for (x, o) in row.iter_mut().enumerate() {
            *o = kernel.iter().enumerate().map(|(k, kv)| kv * tmp[(y + k - r) * w + x]).sum();
        }
    });
    out
}

/// Centers whose full window lies inside the image and the mask.
fn valid_centers(mask: &BinaryMask, r: usize) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    // Summed-area table of the mask.
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] = mask.get(x as u32, y as u32) as u32 + sat[y * (w + 1) + x + 1]
                + sat[(y + 1) * (w + 1) + x]
                - sat[y * (w + 1) + x];
        }
    }
    let full = ((2 * r + 1) * (2 * r + 1)) as u32;
    let mut out = Vec::new();
    for y in r..h.saturating_sub(r) {
        for x in r..w.saturating_sub(r) {
            let (x0, y0, x1, y1) = (x - r, y - r, x + r + 1, y + r + 1);
            let s = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0];
            if s == full {
                out.push((x, y));
            }
        }
    }
    out
}

/// Mean local SSIM (11×11 Gaussian window, σ = 1.5, K1 = 0.01, K2 = 0.03)
/// over window centers whose whole window is masked, averaged over channels.
pub fn ssim_overlap(a: &RgbImage, b: &RgbImage, mask: &BinaryMask) -> Result<f64> {
    check_dims(a, b, mask)?;
    let kernel = gaussian_kernel(SSIM_SIGMA);
    debug_assert_eq!(kernel.len(), SSIM_WINDOW);
    let r = SSIM_WINDOW / 2;
    let centers = valid_centers(mask, r);
    if centers.is_empty() {
        return Err(Error::MaskTooSmall);
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    let c1 = (K1 * L).powi(2);
    let c2 = (K2 * L).powi(2);
    let mut total = 0.0f64;
    for c in 0..3 {
        let xa: Vec<f64> = a.pixels().map(|p| p[c] as f64).collect();
        let xb: Vec<f64> = b.pixels().map(|p| p[c] as f64).collect();
        let prod = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(p, q)| p * q).collect() };
        let mu_a = window_mean(&xa, w, h, &kernel);
        let mu_b = window_mean(&xb, w, h, &kernel);
        let aa = window_mean(&prod(&xa, &xa), w, h, &kernel);
        let bb = window_mean(&prod(&xb, &xb), w, h, &kernel);
        let ab = window_mean(&prod(&xa, &xb), w, h, &kernel);
        let mut sum = 0.0f64;
        for &(x, y) in &centers {
            let i = y * w + x;
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / centers.len() as f64;
    }
    Ok((total / 3.0).clamp(-1.0, 1.0))
}

/// Pixels covered by both layers.
pub fn overlap_mask(source_layer: &RgbaImage, target_layer: &RgbaImage) -> Result<BinaryMask> {
    if source_layer.dimensions() != target_layer.dimensions() {
        return Err(Error::DimensionMismatch("layers".into()));
    }
    let (w, h) = source_layer.dimensions();
    let bits = source_layer.pixels().zip(target_layer.pixels()).map(|(s, t)| s[3] > 0 && t[3] > 0).collect();
    BinaryMask::from_bits(w, h, bits)
}

/// Drops the alpha channel.
pub fn to_rgb(layer: &RgbaImage) -> RgbImage {
    let (w, h) = layer.dimensions();
    RgbImage::from_fn(w, h, |x, y| {
        let p = layer.get_pixel(x, y);
        image::Rgb([p[0], p[1], p[2]])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// Infinite for identical overlaps; serialized as `"inf"`.
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub overlap_pixels: u64,
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Psnr {
        Num(f64),
        Text(String),
    }
    match Psnr::deserialize(d)? {
        Psnr::Num(v) => Ok(v),
        Psnr::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Psnr::Text(t) => Err(serde::de::Error::custom(format!("invalid psnr value {t:?}"))),
    }
}

/// PSNR and SSIM of the warped source against the pasted target over their
/// joint coverage.
pub fn overlap_report(source_layer: &RgbaImage, target_layer: &RgbaImage) -> Result<OverlapReport> {
    let mask = overlap_mask(source_layer, target_layer)?;
    let (a, b) = (to_rgb(source_layer), to_rgb(target_layer));
    Ok(OverlapReport {
        psnr_db: psnr_overlap(&a, &b, &mask)?,
        ssim: ssim_overlap(&a, &b, &mask)?,
        overlap_pixels: mask.count() as u64,
    })
}
