//! Float rasters and the filters shared by the field, metric and matching
//! stages: Gaussian blur, bilinear sampling and Euclidean distance transforms.

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geometry::BinaryMask;

/// Row-major single-channel `f32` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl ScalarField {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: u32, height: u32, v: f32) -> Self {
        Self { width, height, values: vec![v; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Self {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self { width, height, values }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        let w = self.width as usize;
        self.values[y as usize * w + x as usize] = v;
    }

    pub fn same_dims(&self, other: &ScalarField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Clamp-to-edge bilinear sample at a continuous coordinate, using the
    /// pixel-center convention.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as u32;
        let y0 = fy.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = fx - x0 as f64;
        let ay = fy - y0 as f64;
        let top = self.get(x0, y0) as f64 * (1.0 - ax) + self.get(x1, y0) as f64 * ax;
        let bot = self.get(x0, y1) as f64 * (1.0 - ax) + self.get(x1, y1) as f64 * ax;
        (top * (1.0 - ay) + bot * ay) as f32
    }
}

/// Luma of an RGB image with Rec. 601 weights, in 8-bit units.
pub fn to_gray(img: &RgbImage) -> ScalarField {
    let (w, h) = img.dimensions();
    ScalarField::from_fn(w, h, |x, y| {
        let p = img.get_pixel(x, y).0;
        (0.299 * p[0] as f32) + (0.587 * p[1] as f32) + (0.114 * p[2] as f32)
    })
}

/// Normalized 1-D Gaussian taps covering `±ceil(3σ)`; a single unit tap for
/// `σ <= 0`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

#[cfg(feature = "parallel")]
pub(crate) fn for_each_row<T: Send, F>(buf: &mut [T], width: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    buf.par_chunks_mut(width).enumerate().for_each(|(y, row)| f(y, row));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_row<T: Send, F>(buf: &mut [T], width: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    buf.chunks_mut(width).enumerate().for_each(|(y, row)| f(y, row));
}

/// Separable Gaussian blur with clamp-to-edge boundaries.
pub fn gaussian_blur(field: &ScalarField, sigma: f64) -> ScalarField {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 || field.values.is_empty() {
        return field.clone();
    }
    let r = (kernel.len() / 2) as i64;
    let w = field.width as usize;
    let h = field.height as usize;
    let src = &field.values;

    let mut tmp = vec![0.0f32; w * h];
    for_each_row(&mut tmp, w, |y, row| {
        let line = &src[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * line[sx] as f64;
            }
            *out = acc as f32;
        }
    });

    let mut out = vec![0.0f32; w * h];
    let tmp_ref = &tmp;
    for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp_ref[sy * w + x] as f64;
            }
            *o = acc as f32;
        }
    });
    ScalarField { width: field.width, height: field.height, values: out }
}

/// Stand-in for "no feature" in the squared transform; large enough to dominate
/// any in-raster distance, small enough to keep the parabola algebra finite.
const FAR: f64 = 1e20;

/// Squared 1-D distance transform of a sampled function (lower envelope of
/// parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        if s <= z[k] {
            v[0] = q;
            z[1] = f64::INFINITY;
            continue;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance (in pixels) from each pixel to the nearest pixel
/// where `target(x, y)` holds; zero on such pixels, infinite if none exist.
pub fn distance_to(width: u32, height: u32, target: impl Fn(u32, u32) -> bool) -> Vec<f64> {
    let w = width as usize;
    let h = height as usize;
    let n = w.max(h);
    let mut grid: Vec<f64> = Vec::with_capacity(w * h);
    for y in 0..height {
        for x in 0..width {
            grid.push(if target(x, y) { 0.0 } else { FAR });
        }
    }
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid.iter_mut().for_each(|d| *d = if *d >= FAR / 2.0 { f64::INFINITY } else { d.sqrt() });
    grid
}

/// Signed Euclidean distance to the region boundary: positive inside the
/// mask, negative outside. Pixels beyond the raster border count as outside.
pub fn signed_distance(mask: &BinaryMask) -> Result<Vec<f64>> {
    if mask.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let (w, h) = (mask.width(), mask.height());
    // Pad with one background pixel so the raster border bounds the region.
    let padded = distance_to(w + 2, h + 2, |x, y| {
        x == 0 || y == 0 || x == w + 1 || y == h + 1 || !mask.get(x - 1, y - 1)
    });
    let outside = distance_to(w, h, |x, y| mask.get(x, y));
    let pw = (w + 2) as usize;
    let mut out = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h as usize {
        for x in 0..w as usize {
            out.push(padded[(y + 1) * pw + x + 1] - outside[y * w as usize + x]);
        }
    }
    Ok(out)
}
