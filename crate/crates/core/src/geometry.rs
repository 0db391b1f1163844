//! Projective correction of tilted or rotated frames.
//!
//! A [`Homography`] maps frame coordinates (sample centers at integer
//! positions) from a source image into a target image. [`warp_frame`] resamples
//! by inverse mapping with bilinear interpolation, zero outside the source.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{ChromaPlanes, MeasurementFrame};
use crate::scalar::Scalar;

pub type Point2<T> = [T; 2];

const DET_EPS: f64 = 1e-12;
const HORIZON_EPS: f64 = 1e-12;

/// 3×3 projective transform normalized so that `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography<T: Scalar> {
    m: [[T; 3]; 3],
}

impl<T: Scalar> Homography<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[o, z, z], [z, o, z], [z, z, o]] }
    }

    /// Builds a homography from an arbitrary invertible matrix, rescaling it
    /// so the bottom-right entry is 1.
    pub fn from_matrix(m: [[T; 3]; 3]) -> Result<Self> {
        let s = m[2][2];
        if s.abs() <= T::lit(DET_EPS) {
            return Err(Error::Singular("bottom-right entry is zero; cannot normalize".into()));
        }
        let mut n = m;
        for row in n.iter_mut() {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let h = Self { m: n };
        if h.det().abs() <= T::lit(DET_EPS) {
            return Err(Error::Singular(format!("determinant {:e}", h.det().to_f64_lossy())));
        }
        Ok(h)
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let mut h = Self::identity();
        h.m[0][2] = tx;
        h.m[1][2] = ty;
        h
    }

    /// Rotation by `angle` radians about `center` (positive turns +x towards +y).
    pub fn rotation_about(angle: T, center: Point2<T>) -> Self {
        let (s, c) = angle.sin_cos();
        let [cx, cy] = center;
        Self {
            m: [
                [c, -s, cx - c * cx + s * cy],
                [s, c, cy - s * cx - c * cy],
                [T::zero(), T::zero(), T::one()],
            ],
        }
    }

    pub fn matrix(&self) -> &[[T; 3]; 3] {
        &self.m
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `self ∘ rhs`: apply `rhs` first, then `self`.
    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * rhs.m[k][j]).sum();
            }
        }
        Self::from_matrix(out)
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = self.det();
        if det.abs() <= T::lit(DET_EPS) {
            return Err(Error::Singular(format!("determinant {:e}", det.to_f64_lossy())));
        }
        let cof = |a: usize, b: usize, c: usize, d: usize| m[a][b] * m[c][d] - m[a][d] * m[c][b];
        let adj = [
            [cof(1, 1, 2, 2), -cof(0, 1, 2, 2), cof(0, 1, 1, 2)],
            [-cof(1, 0, 2, 2), cof(0, 0, 2, 2), -cof(0, 0, 1, 2)],
            [cof(1, 0, 2, 1), -cof(0, 0, 2, 1), cof(0, 0, 1, 1)],
        ];
        Self::from_matrix(adj)
    }

    pub fn apply(&self, p: Point2<T>) -> Result<Point2<T>> {
        let m = &self.m;
        let [x, y] = p;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        if w.abs() <= T::lit(HORIZON_EPS) {
            return Err(Error::Horizon(w.to_f64_lossy()));
        }
        Ok([
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        ])
    }

    pub fn cast<U: Scalar>(&self) -> Homography<U> {
        let mut m = [[U::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = U::lit(self.m[i][j].to_f64_lossy());
            }
        }
        Homography { m }
    }
}

pub fn apply_homography<T: Scalar>(h: &Homography<T>, p: Point2<T>) -> Result<Point2<T>> {
    h.apply(p)
}

fn check_not_collinear<T: Scalar>(pts: &[Point2<T>; 4], which: &str) -> Result<()> {
    let scale = pts
        .iter()
        .flat_map(|p| p.iter())
        .fold(T::one(), |a, v| a.max(v.abs()));
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let (a, b, c) = (pts[i], pts[j], pts[k]);
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if cross.abs() <= T::lit(1e-12) * scale * scale {
            return Err(Error::Singular(format!("{which} points {i}, {j}, {k} are collinear")));
        }
    }
    Ok(())
}

/// Exactly-determined homography taking `src[i]` to `dst[i]` for four points.
///
/// Solves the 8×8 linear system in the unknowns `h00..h21` (with `h22 = 1`)
/// by Gaussian elimination with partial pivoting.
pub fn estimate_homography<T: Scalar>(
    src: &[Point2<T>; 4],
    dst: &[Point2<T>; 4],
) -> Result<Homography<T>> {
    check_not_collinear(src, "source")?;
    check_not_collinear(dst, "destination")?;

    let mut a = [[T::zero(); 9]; 8];
    for i in 0..4 {
        let [x, y] = src[i];
        let [u, v] = dst[i];
        let (o, z) = (T::one(), T::zero());
        a[2 * i] = [x, y, o, z, z, z, -u * x, -u * y, u];
        a[2 * i + 1] = [z, z, z, x, y, o, -v * x, -v * y, v];
    }
    let h = solve_augmented(&mut a)?;
    Homography::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], T::one()]])
}

fn solve_augmented<T: Scalar>(a: &mut [[T; 9]; 8]) -> Result<[T; 8]> {
    const N: usize = 8;
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() <= T::lit(1e-14) {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        a.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f != T::zero() {
                for k in col..=N {
                    let d = f * a[col][k];
                    a[row][k] -= d;
                }
            }
        }
    }
    let mut x = [T::zero(); N];
    for row in (0..N).rev() {
        let mut s = a[row][N];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

#[inline]
fn bilinear(plane: &[f32], width: usize, height: usize, u: f64, v: f64) -> f32 {
    if !(u >= 0.0 && v >= 0.0 && u <= (width - 1) as f64 && v <= (height - 1) as f64) {
        return 0.0;
    }
    let x0 = u.floor() as usize;
    let y0 = v.floor() as usize;
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let p = |x: usize, y: usize| plane[y * width + x] as f64;
    let top = (1.0 - fx) * p(x0, y0) + fx * p(x1, y0);
    let bottom = (1.0 - fx) * p(x0, y1) + fx * p(x1, y1);
    ((1.0 - fy) * top + fy * bottom) as f32
}

/// Resamples `frame` into an `out_width × out_height` frame such that output
/// sample `q` takes the input value at `h⁻¹(q)`. Rows are processed in
/// parallel; every sample is computed independently, so results do not depend
/// on scheduling.
pub fn warp_frame<T: Scalar>(
    frame: &MeasurementFrame,
    h: &Homography<T>,
    out_width: usize,
    out_height: usize,
) -> Result<MeasurementFrame> {
    let inv: Homography<f64> = h.inverse()?.cast();
    let (w, hgt) = (frame.width(), frame.height());
    let m = *inv.matrix();

    let warp_plane = |plane: &[f32]| -> Vec<f32> {
        let mut out = vec![0.0f32; out_width * out_height];
        out.par_chunks_mut(out_width).enumerate().for_each(|(y, row)| {
            let yf = y as f64;
            for (x, o) in row.iter_mut().enumerate() {
                let xf = x as f64;
                let wz = m[2][0] * xf + m[2][1] * yf + m[2][2];
                if wz.abs() <= HORIZON_EPS {
                    continue;
                }
                let u = (m[0][0] * xf + m[0][1] * yf + m[0][2]) / wz;
                let v = (m[1][0] * xf + m[1][1] * yf + m[1][2]) / wz;
                *o = bilinear(plane, w, hgt, u, v);
            }
        });
        out
    };

    let lum = warp_plane(frame.luminance());
    let chroma = frame.chroma().map(|c| ChromaPlanes {
        x: warp_plane(&c.x).into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        y: warp_plane(&c.y).into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    });
    let lum = lum.into_iter().map(|v| v.max(0.0)).collect();
    MeasurementFrame::new(out_width, out_height, lum, chroma)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise in (x, y), collinear points dropped.
pub(crate) fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn line_intersection(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> Option<[f64; 2]> {
    let da = [a1[0] - a0[0], a1[1] - a0[1]];
    let db = [b1[0] - b0[0], b1[1] - b0[1]];
    let denom = da[0] * db[1] - da[1] * db[0];
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = ((b0[0] - a0[0]) * db[1] - (b0[1] - a0[1]) * db[0]) / denom;
    Some([a0[0] + t * da[0], a0[1] + t * da[1]])
}

/// Shrinks a convex polygon to an enclosing quadrilateral by repeatedly
/// removing the edge whose removal (extending both neighbours to their
/// intersection) adds the least area.
pub(crate) fn enclosing_quad(mut poly: Vec<[f64; 2]>) -> Result<Vec<[f64; 2]>> {
    if poly.len() < 4 {
        return Err(Error::Detection(format!(
            "boundary hull has only {} vertices",
            poly.len()
        )));
    }
    while poly.len() > 4 {
        let n = poly.len();
        let mut best: Option<(f64, usize, [f64; 2])> = None;
        for i in 0..n {
            let prev = poly[(i + n - 1) % n];
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let next = poly[(i + 2) % n];
            let Some(p) = line_intersection(prev, a, b, next) else { continue };
            let forward = (p[0] - a[0]) * (a[0] - prev[0]) + (p[1] - a[1]) * (a[1] - prev[1]);
            let backward = (p[0] - b[0]) * (b[0] - next[0]) + (p[1] - b[1]) * (b[1] - next[1]);
            if forward < 0.0 || backward < 0.0 {
                continue;
            }
            let area = 0.5 * cross(p, a, b).abs();
            if best.is_none_or(|(ba, _, _)| area < ba) {
                best = Some((area, i, p));
            }
        }
        let (_, i, p) = best.ok_or_else(|| Error::Detection("hull cannot be reduced to a quadrilateral".into()))?;
        let j = (i + 1) % n;
        poly[i] = p;
        poly.remove(j);
    }
    Ok(poly)
}

/// Orders four points as top-left, top-right, bottom-right, bottom-left
/// (image coordinates, y pointing down).
pub fn order_corners(pts: &[[f64; 2]]) -> Result<[[f64; 2]; 4]> {
    let pick = |key: &dyn Fn(&[f64; 2]) -> f64, max: bool| -> usize {
        let mut best = 0;
        for i in 1..pts.len() {
            let better = if max { key(&pts[i]) > key(&pts[best]) } else { key(&pts[i]) < key(&pts[best]) };
            if better {
                best = i;
            }
        }
        best
    };
    let tl = pick(&|p| p[0] + p[1], false);
    let br = pick(&|p| p[0] + p[1], true);
    let tr = pick(&|p| p[0] - p[1], true);
    let bl = pick(&|p| p[0] - p[1], false);
    let idx = [tl, tr, br, bl];
    for i in 0..4 {
        for j in i + 1..4 {
            if idx[i] == idx[j] {
                return Err(Error::Detection("corners are ambiguous (rotation near 45°?)".into()));
            }
        }
    }
    Ok(idx.map(|i| pts[i]))
}

/// Minimum run of consecutive above-threshold samples that counts as emitting
/// area; shorter runs are treated as hot pixels.
const MIN_RUN: usize = 3;

/// Locates the four corners of the bright light-emitting region.
///
/// Every sample `≥ rel_threshold × max` (in runs of at least three along the
/// row) is treated as a unit square; the convex hull of those squares is
/// shrunk to the least-area enclosing quadrilateral, whose vertices are
/// returned as TL, TR, BR, BL.
pub fn detect_corners(frame: &MeasurementFrame, rel_threshold: f64) -> Result<[[f64; 2]; 4]> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::Input(format!("rel_threshold {rel_threshold} outside (0, 1)")));
    }
    let max = frame.max_luminance() as f64;
    if max <= 0.0 {
        return Err(Error::Detection("frame has no positive luminance".into()));
    }
    let thr = rel_threshold * max;
    let w = frame.width();
    let mut boundary = Vec::new();
    for y in 0..frame.height() {
        let row = &frame.luminance()[y * w..(y + 1) * w];
        let mut first = None;
        let mut last = None;
        let mut run = 0usize;
        for (x, &v) in row.iter().enumerate() {
            if v as f64 >= thr {
                run += 1;
                if run >= MIN_RUN {
                    if first.is_none() {
                        first = Some(x + 1 - run);
                    }
                    last = Some(x);
                }
            } else {
                run = 0;
            }
        }
        if let (Some(a), Some(b)) = (first, last) {
            let yf = y as f64;
            boundary.push([a as f64 - 0.5, yf - 0.5]);
            boundary.push([a as f64 - 0.5, yf + 0.5]);
            boundary.push([b as f64 + 0.5, yf - 0.5]);
            boundary.push([b as f64 + 0.5, yf + 0.5]);
        }
    }
    if boundary.len() < 4 {
        return Err(Error::Detection(format!(
            "only {} boundary candidates above threshold",
            boundary.len()
        )));
    }
    let hull = convex_hull(boundary);
    let quad = enclosing_quad(hull)?;
    order_corners(&quad)
}

/// Axis-aligned target rectangle for rectifying the quadrilateral `src`
/// (TL, TR, BR, BL): centered on the corner centroid, with width and height
/// equal to the mean lengths of opposite sides. Keeps the physical scale of
/// the emitting surface under pure rotation.
pub fn rectified_target(src: &[[f64; 2]; 4]) -> [[f64; 2]; 4] {
    let len = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let width = 0.5 * (len(src[0], src[1]) + len(src[3], src[2]));
    let height = 0.5 * (len(src[0], src[3]) + len(src[1], src[2]));
    let cx = src.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = src.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    let (hw, hh) = (width / 2.0, height / 2.0);
    [[cx - hw, cy - hh], [cx + hw, cy - hh], [cx + hw, cy + hh], [cx - hw, cy + hh]]
}
