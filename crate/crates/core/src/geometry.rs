//! Planar geometry: points, affine transforms, convex polygon clipping and
//! binary masks.
//!
//! Continuous coordinates follow the pixel-area convention: pixel `(x, y)`
//! covers `[x, x+1) × [y, y+1)` and its center sits at `(x + 0.5, y + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant magnitude below which a transform is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// A planar affine transform stored as a row-major 3×3 matrix whose last row
/// is exactly `[0, 0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    m: [[f64; 3]; 3],
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Builds a transform from its first two rows `[a, b, tx], [c, d, ty]`.
    pub const fn from_rows(r0: [f64; 3], r1: [f64; 3]) -> Self {
        Self { m: [r0, r1, [0.0, 0.0, 1.0]] }
    }

    /// Builds a transform from the six affine parameters
    /// `[a, b, tx, c, d, ty]`.
    pub fn from_params(p: [f64; 6]) -> Self {
        Self::from_rows([p[0], p[1], p[2]], [p[3], p[4], p[5]])
    }

    /// Accepts a full 3×3 matrix; rejects anything whose last row is not
    /// `[0, 0, 1]`.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        if m[2] != [0.0, 0.0, 1.0] {
            return Err(Error::InvalidConfig("affine last row must be [0, 0, 1]".into()));
        }
        Ok(Self { m })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::from_rows([1.0, 0.0, tx], [0.0, 1.0, ty])
    }

    pub fn scale(s: f64) -> Self {
        Self::from_rows([s, 0.0, 0.0], [0.0, s, 0.0])
    }

    /// Rotation by `theta` radians about the origin.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::from_rows([c, -s, 0.0], [s, c, 0.0])
    }

    /// Rotation by `theta` radians about `center`.
    pub fn rotation_about(theta: f64, center: Point2) -> Self {
        Self::translation(center.x, center.y)
            .compose(&Self::rotation(theta))
            .compose(&Self::translation(-center.x, -center.y))
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn params(&self) -> [f64; 6] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]]
    }

    /// The upper-left 2×2 block.
    pub fn linear(&self) -> [[f64; 2]; 2] {
        [[self.m[0][0], self.m[0][1]], [self.m[1][0], self.m[1][1]]]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        let a = &self.m;
        let b = &other.m;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        out[2] = [0.0, 0.0, 1.0];
        AffineTransform { m: out }
    }

    /// Homogeneous product followed by division by the third coordinate.
    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let z = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if !(z.abs() >= SINGULAR_DET) {
            return Err(Error::SingularProjection(z));
        }
        Ok(Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / z,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / z,
        ))
    }

    /// Like [`apply`](Self::apply) for callers that already hold a valid
    /// affine; the third coordinate is exactly one for finite input.
    #[inline]
    pub fn map(&self, p: Point2) -> Point2 {
        let m = &self.m;
        let z = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / z,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / z,
        )
    }

    /// Applies only the linear part (for direction vectors).
    pub fn map_vector(&self, v: Point2) -> Point2 {
        let m = &self.m;
        Point2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        let det = self.det();
        if !(det.abs() > SINGULAR_DET) || !self.is_finite() {
            return Err(Error::SingularTransform(det));
        }
        let [a, b, tx, c, d, ty] = self.params();
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        Ok(AffineTransform::from_rows(
            [ia, ib, -(ia * tx + ib * ty)],
            [ic, id, -(ic * tx + id * ty)],
        ))
    }

    /// Frobenius norm of the difference of the six affine parameters.
    pub fn frobenius_distance(&self, other: &AffineTransform) -> f64 {
        self.params()
            .iter()
            .zip(other.params().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Singular values `(σ_max, σ_min)` of the linear part.
    pub fn singular_values(&self) -> (f64, f64) {
        let [[a, b], [c, d]] = self.linear();
        // Closed form for 2×2: σ² are the eigenvalues of AᵀA.
        let s1 = a * a + b * b + c * c + d * d;
        let det = (a * d - b * c).abs();
        let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
        let smax = ((s1 + disc) / 2.0).sqrt();
        let smin = if smax > 0.0 { det / smax } else { 0.0 };
        (smax, smin)
    }

    /// Condition number `σ_max / σ_min` of the linear part; infinite when
    /// singular.
    pub fn condition_number(&self) -> f64 {
        let (smax, smin) = self.singular_values();
        if smin > 0.0 {
            (smax / smin).max(1.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Applies `t` to `p` with perspective division.
pub fn apply_affine(t: &AffineTransform, p: Point2) -> Result<Point2> {
    t.apply(p)
}

pub fn invert_affine(t: &AffineTransform) -> Result<AffineTransform> {
    t.inverse()
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn from_dims(width: u32, height: u32) -> Self {
        Self::new(0.0, 0.0, width as f64, height as f64)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(vec![
            Point2::new(self.x0, self.y0),
            Point2::new(self.x1, self.y0),
            Point2::new(self.x1, self.y1),
            Point2::new(self.x0, self.y1),
        ])
    }
}

/// Ordered polygon vertices. Non-empty polygons produced by this crate have
/// at least three vertices and positive signed area.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Shoelace signed area; positive for counter-clockwise order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        acc / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> Option<Rect> {
        let first = self.vertices.first()?;
        let mut r = Rect::new(first.x, first.y, first.x, first.y);
        for v in &self.vertices[1..] {
            r.x0 = r.x0.min(v.x);
            r.y0 = r.y0.min(v.y);
            r.x1 = r.x1.max(v.x);
            r.y1 = r.y1.max(v.y);
        }
        Some(r)
    }

    pub fn translated(&self, d: Point2) -> Polygon {
        Polygon::new(self.vertices.iter().map(|&v| v + d).collect())
    }

    pub fn transformed(&self, t: &AffineTransform) -> Polygon {
        let mut out = Polygon::new(self.vertices.iter().map(|&v| t.map(v)).collect());
        if out.signed_area() < 0.0 {
            out.vertices.reverse();
        }
        out
    }
}

/// Sutherland–Hodgman clipping of a convex polygon against an axis-aligned
/// rectangle. The result is counter-clockwise, or empty when the two do not
/// overlap with positive area.
pub fn clip_polygon(subject: &Polygon, clip: &Rect) -> Polygon {
    #[derive(Clone, Copy)]
    enum Edge {
        Left(f64),
        Right(f64),
        Top(f64),
        Bottom(f64),
    }

    fn inside(e: Edge, p: Point2) -> bool {
        match e {
            Edge::Left(x) => p.x >= x,
            Edge::Right(x) => p.x <= x,
            Edge::Top(y) => p.y >= y,
            Edge::Bottom(y) => p.y <= y,
        }
    }

    fn intersect(e: Edge, a: Point2, b: Point2) -> Point2 {
        match e {
            Edge::Left(x) | Edge::Right(x) => {
                let t = (x - a.x) / (b.x - a.x);
                Point2::new(x, a.y + t * (b.y - a.y))
            }
            Edge::Top(y) | Edge::Bottom(y) => {
                let t = (y - a.y) / (b.y - a.y);
                Point2::new(a.x + t * (b.x - a.x), y)
            }
        }
    }

    if subject.is_empty() {
        return Polygon::empty();
    }
    let mut output = subject.vertices.clone();
    for edge in [
        Edge::Left(clip.x0),
        Edge::Right(clip.x1),
        Edge::Top(clip.y0),
        Edge::Bottom(clip.y1),
    ] {
        let input = std::mem::take(&mut output);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            match (inside(edge, cur), inside(edge, prev)) {
                (true, true) => output.push(cur),
                (true, false) => {
                    output.push(intersect(edge, prev, cur));
                    output.push(cur);
                }
                (false, true) => output.push(intersect(edge, prev, cur)),
                (false, false) => {}
            }
        }
        if output.is_empty() {
            return Polygon::empty();
        }
    }

    output.dedup_by(|a, b| a.distance(*b) < 1e-12);
    while output.len() > 1 && output[0].distance(output[output.len() - 1]) < 1e-12 {
        output.pop();
    }
    let mut poly = Polygon::new(output);
    let area = poly.signed_area();
    if poly.vertices.len() < 3 || area.abs() < 1e-12 {
        return Polygon::empty();
    }
    if area < 0.0 {
        poly.vertices.reverse();
    }
    poly
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn filled(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![true; width as usize * height as usize] }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Pixelwise AND; both masks must share dimensions.
    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch("mask AND".into()));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect();
        Ok(BinaryMask { width: self.width, height: self.height, bits })
    }

    /// Iterator over `(x, y)` of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }
}

/// Rasterizes `poly` so that pixel `(x, y)` is set iff its center lies inside.
///
/// Uses a scanline with the half-open rule on edges, which handles convex and
/// simple concave polygons alike.
pub fn rasterize_polygon_mask(poly: &Polygon, width: u32, height: u32) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    if poly.is_empty() || width == 0 || height == 0 {
        return mask;
    }
    let verts = &poly.vertices;
    let n = verts.len();
    let mut xs: Vec<f64> = Vec::with_capacity(n);
    for y in 0..height {
        let yc = y as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            let (lo, hi) = if a.y <= b.y { (a, b) } else { (b, a) };
            if lo.y <= yc && yc < hi.y {
                let t = (yc - lo.y) / (hi.y - lo.y);
                xs.push(lo.x + t * (hi.x - lo.x));
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        for span in xs.chunks_exact(2) {
            // Pixel centers x + 0.5 in [span[0], span[1]).
            let start = (span[0] - 0.5).ceil().max(0.0);
            let end = ((span[1] - 0.5).ceil()).min(width as f64);
            if end <= start {
                continue;
            }
            for x in start as u32..end as u32 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// First-order image moments of the set pixels, evaluated at pixel centers.
pub fn mask_centroid(mask: &BinaryMask) -> Result<Point2> {
    let (mut m00, mut m10, mut m01) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in mask.iter_set() {
        m00 += 1.0;
        m10 += x as f64 + 0.5;
        m01 += y as f64 + 0.5;
    }
    if m00 == 0.0 {
        return Err(Error::EmptyMask);
    }
    Ok(Point2::new(m10 / m00, m01 / m00))
}
