//! Pixel-grid reconstruction from axis projections.
//!
//! The rectified frame is summed along columns (x-projection) and rows
//! (y-projection). Dark gaps between µLEDs make both projections periodic;
//! the pitch is taken from the autocorrelation peak, a common phase from the
//! comb of projection values spaced one pitch apart, and every edge from the
//! local minimum near its nominal comb position. Windows without a genuine
//! valley (defect clusters, the outer border) keep the nominal position, so a
//! run of dark cells does not displace the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::MeasurementFrame;

/// Lags at or below this are never reported as the period.
pub const MIN_LAG: usize = 4;
/// Weakest normalized autocorrelation accepted as periodic structure.
pub const MIN_AUTOCORRELATION: f64 = 0.2;
/// Allowed deviation of any edge spacing from the median spacing.
pub const SPACING_TOLERANCE: f64 = 0.25;
/// Projection values above this fraction of the maximum belong to the
/// emitting surface.
const SUPPORT_FRACTION: f64 = 0.1;
/// Minimum rise on both sides of a minimum, relative to the window range, for
/// it to count as a valley.
const VALLEY_FRACTION: f64 = 0.2;
const PHASE_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisProjection {
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl AxisProjection {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Column sums (x) and row sums (y) of the luminance plane.
pub fn project(frame: &MeasurementFrame) -> (AxisProjection, AxisProjection) {
    let (w, h) = (frame.width(), frame.height());
    let mut xs = vec![0.0f64; w];
    let mut ys = vec![0.0f64; h];
    for (y, row) in frame.luminance().chunks_exact(w).enumerate() {
        let mut acc = 0.0f64;
        for (x, &v) in row.iter().enumerate() {
            xs[x] += v as f64;
            acc += v as f64;
        }
        ys[y] = acc;
    }
    (AxisProjection { axis: Axis::X, values: xs }, AxisProjection { axis: Axis::Y, values: ys })
}

/// First and last index whose value exceeds a fraction of the maximum.
fn support(values: &[f64]) -> Option<(usize, usize)> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let thr = SUPPORT_FRACTION * max;
    let a = values.iter().position(|&v| v > thr)?;
    let b = values.iter().rposition(|&v| v > thr)?;
    Some((a, b))
}

fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < f64::EPSILON * (left.abs() + mid.abs() + right.abs()).max(f64::MIN_POSITIVE) {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

/// Normalized (biased) autocorrelation of the mean-subtracted signal for lags
/// `0..=max_lag`.
pub(crate) fn autocorrelation(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let energy: f64 = d.iter().map(|v| v * v).sum();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| {
            if energy == 0.0 {
                return 0.0;
            }
            d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / energy
        })
        .collect()
}

/// Pitch of the periodic structure in `projection`, in samples.
///
/// The projection is trimmed to the emitting surface, then the highest local
/// maximum of the autocorrelation at lags above [`MIN_LAG`] (up to half the
/// trimmed length) is refined by a parabola through its neighbours.
pub fn estimate_period(projection: &AxisProjection) -> Result<f64> {
    let (a, b) = support(&projection.values).ok_or(Error::Periodicity {
        peak: 0.0,
        threshold: MIN_AUTOCORRELATION,
    })?;
    let trimmed = &projection.values[a..=b];
    let max_lag = trimmed.len() / 2;
    let r = autocorrelation(trimmed, max_lag + 1);
    let mut best: Option<(usize, f64)> = None;
    for k in (MIN_LAG + 1)..r.len().saturating_sub(1).min(max_lag + 1) {
        if r[k] >= r[k - 1] && r[k] >= r[k + 1] && best.is_none_or(|(_, v)| r[k] > v) {
            best = Some((k, r[k]));
        }
    }
    match best {
        Some((k, peak)) if peak >= MIN_AUTOCORRELATION => Ok(k as f64 + parabolic_offset(r[k - 1], r[k], r[k + 1])),
        other => Err(Error::Periodicity {
            peak: other.map_or(0.0, |(_, v)| v),
            threshold: MIN_AUTOCORRELATION,
        }),
    }
}

/// `[1, 2, 1] / 4` smoothing with replicated ends.
pub fn smooth(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let l = values[i.saturating_sub(1)];
            let r = values[(i + 1).min(n - 1)];
            0.25 * l + 0.5 * values[i] + 0.25 * r
        })
        .collect()
}

fn sample_linear(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let p = p.clamp(0.0, (n - 1) as f64);
    let i = p.floor() as usize;
    let f = p - i as f64;
    if i + 1 >= n {
        values[n - 1]
    } else {
        (1.0 - f) * values[i] + f * values[i + 1]
    }
}

/// Refined minimum inside `[lo, hi]`, or `None` if the window has no valley.
fn valley(s: &[f64], lo: usize, hi: usize) -> Option<f64> {
    let window = &s[lo..=hi];
    let (mut m, mut min) = (0usize, f64::INFINITY);
    for (i, &v) in window.iter().enumerate() {
        if v < min {
            min = v;
            m = i;
        }
    }
    let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        return None;
    }
    // Extend over a flat bottom.
    let mut end = m;
    while end + 1 < window.len() && window[end + 1] == min {
        end += 1;
    }
    if m == 0 || end == window.len() - 1 {
        return None;
    }
    let left_rise = window[..m].iter().copied().fold(f64::NEG_INFINITY, f64::max) - min;
    let right_rise = window[end + 1..].iter().copied().fold(f64::NEG_INFINITY, f64::max) - min;
    if left_rise < VALLEY_FRACTION * range || right_rise < VALLEY_FRACTION * range {
        return None;
    }
    let pos = if end > m {
        (m + end) as f64 / 2.0
    } else {
        m as f64 + parabolic_offset(window[m - 1], window[m], window[m + 1])
    };
    Some(lo as f64 + pos)
}

/// Cell edges (gap centers) along one axis, strictly increasing.
///
/// The comb phase minimizes the mean smoothed projection sampled at
/// `phase + k·period` across the emitting surface; each comb tooth is then
/// moved to the valley minimum within `±period/4`, if there is one.
pub fn detect_edges(projection: &AxisProjection, period: f64) -> Result<Vec<f64>> {
    if !(period.is_finite() && period > MIN_LAG as f64) {
        return Err(Error::Grid(format!("invalid period {period}")));
    }
    let (a, b) = support(&projection.values)
        .ok_or_else(|| Error::Grid("projection has no emitting region".into()))?;
    let s = smooth(&projection.values);
    let n = s.len();
    let (af, bf) = (a as f64, b as f64);

    let steps = (period / PHASE_STEP).ceil() as usize;
    let mut best = (af, f64::INFINITY);
    for i in 0..steps {
        let phase = af + i as f64 * PHASE_STEP;
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut p = phase;
        while p <= bf {
            sum += sample_linear(&s, p);
            count += 1;
            p += period;
        }
        if count > 0 && sum / (count as f64) < best.1 {
            best = (phase, sum / count as f64);
        }
    }
    let phase = best.0;

    let k_min = ((af - period / 2.0 - phase) / period).ceil() as i64;
    let k_max = ((bf + period / 2.0 - phase) / period).floor() as i64;
    let half = period / 4.0;
    let mut edges = Vec::new();
    for k in k_min..=k_max {
        let nominal = phase + k as f64 * period;
        if nominal < 0.0 || nominal > (n - 1) as f64 {
            continue;
        }
        let lo = (nominal - half).ceil().max(0.0) as usize;
        let hi = ((nominal + half).floor() as usize).min(n - 1);
        let edge = if hi > lo + 1 { valley(&s, lo, hi).unwrap_or(nominal) } else { nominal };
        edges.push(edge);
    }
    if edges.len() < 3 {
        return Err(Error::Grid(format!("only {} edges found", edges.len())));
    }
    debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
    Ok(edges)
}

/// Emitting extent between each pair of consecutive edges: the positions
/// where the projection crosses halfway between the window floor and peak,
/// linearly interpolated between samples.
pub fn emitter_spans(projection: &AxisProjection, edges: &[f64]) -> Vec<(f64, f64)> {
    let v = &projection.values;
    let n = v.len();
    edges
        .windows(2)
        .map(|e| {
            let lo = e[0].ceil().max(0.0) as usize;
            let hi = (e[1].floor() as usize).min(n - 1);
            if hi <= lo + 1 {
                return (e[0], e[1]);
            }
            let w = &v[lo..=hi];
            let peak = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let floor = w.iter().copied().fold(f64::INFINITY, f64::min);
            if !(peak > floor) {
                return (e[0], e[1]);
            }
            let level = 0.5 * (peak + floor);
            let first = w.iter().position(|&x| x >= level).unwrap();
            let last = w.iter().rposition(|&x| x >= level).unwrap();
            let left = if first == 0 {
                lo as f64
            } else {
                let (p, q) = (w[first - 1], w[first]);
                (lo + first - 1) as f64 + (level - p) / (q - p)
            };
            let right = if last == w.len() - 1 {
                hi as f64
            } else {
                let (p, q) = (w[last], w[last + 1]);
                (lo + last) as f64 + (p - level) / (p - q)
            };
            (left.max(e[0]), right.min(e[1]))
        })
        .collect()
}

/// Reconstructed cell grid. Cell `(r, c)` lies between `x_edges[c..=c+1]` and
/// `y_edges[r..=r+1]`; its emitting part is given by the optional spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    x_edges: Vec<f64>,
    y_edges: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_spans: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_spans: Option<Vec<(f64, f64)>>,
}

fn check_edges(edges: &[f64], axis: &str) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Grid(format!("{axis}: need at least 2 edges, got {}", edges.len())));
    }
    if let Some(i) = edges.windows(2).position(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite()) {
        return Err(Error::Grid(format!("{axis}: edges {i} and {} not strictly increasing", i + 1)));
    }
    let mut gaps: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let spacing = gaps.clone();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = gaps.len();
    let median = if m % 2 == 1 { gaps[m / 2] } else { 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]) };
    for (i, d) in spacing.iter().enumerate() {
        if (d - median).abs() > SPACING_TOLERANCE * median {
            return Err(Error::Grid(format!(
                "{axis}: spacing {d} between edges {i} and {} deviates more than 25% from median {median}",
                i + 1
            )));
        }
    }
    Ok(())
}

pub fn build_grid(x_edges: Vec<f64>, y_edges: Vec<f64>) -> Result<PixelGrid> {
    check_edges(&x_edges, "x")?;
    check_edges(&y_edges, "y")?;
    Ok(PixelGrid { x_edges, y_edges, x_spans: None, y_spans: None })
}

impl PixelGrid {
    /// Attaches measured emitting spans (one per column / row).
    pub fn with_emitter_spans(mut self, x_spans: Vec<(f64, f64)>, y_spans: Vec<(f64, f64)>) -> Result<Self> {
        for (spans, edges, axis) in [(&x_spans, &self.x_edges, "x"), (&y_spans, &self.y_edges, "y")] {
            if spans.len() + 1 != edges.len() {
                return Err(Error::Grid(format!("{axis}: {} spans for {} cells", spans.len(), edges.len() - 1)));
            }
            for (i, &(lo, hi)) in spans.iter().enumerate() {
                if !(lo < hi && lo >= edges[i] && hi <= edges[i + 1]) {
                    return Err(Error::Grid(format!("{axis}: span {i} ({lo}, {hi}) outside its cell")));
                }
            }
        }
        self.x_spans = Some(x_spans);
        self.y_spans = Some(y_spans);
        Ok(self)
    }

    pub fn x_edges(&self) -> &[f64] {
        &self.x_edges
    }

    pub fn y_edges(&self) -> &[f64] {
        &self.y_edges
    }

    pub fn rows(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.x_edges.len() - 1
    }

    /// Interior cells do not touch the outermost edge on either axis.
    pub fn is_interior(&self, row: usize, col: usize) -> bool {
        row > 0 && col > 0 && row + 1 < self.rows() && col + 1 < self.cols()
    }

    pub fn interior_count(&self) -> usize {
        self.rows().saturating_sub(2) * self.cols().saturating_sub(2)
    }

    /// Interior cells in row-major order.
    pub fn interior_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows()).flat_map(move |r| (0..self.cols()).map(move |c| (r, c))).filter(|&(r, c)| self.is_interior(r, c))
    }

    fn x_extent(&self, col: usize) -> (f64, f64) {
        self.x_spans.as_ref().map_or((self.x_edges[col], self.x_edges[col + 1]), |s| s[col])
    }

    fn y_extent(&self, row: usize) -> (f64, f64) {
        self.y_spans.as_ref().map_or((self.y_edges[row], self.y_edges[row + 1]), |s| s[row])
    }

    /// Emitting rectangle `(x0, x1, y0, y1)` of a cell; the edge rectangle when
    /// no spans were measured.
    pub fn cell_rect(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let (x0, x1) = self.x_extent(col);
        let (y0, y1) = self.y_extent(row);
        (x0, x1, y0, y1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMetrics {
    pub mean_cell_width: f64,
    pub mean_cell_height: f64,
    pub std_cell_width: f64,
    pub std_cell_height: f64,
    pub mean_pitch_x: f64,
    pub mean_pitch_y: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation of interior cell sizes, plus the
/// mean interior pitch.
pub fn cell_size(grid: &PixelGrid) -> Result<GridMetrics> {
    if grid.interior_count() == 0 {
        return Err(Error::Metrics("grid has no interior cells".into()));
    }
    let widths: Vec<f64> = (1..grid.cols() - 1).map(|c| { let (a, b) = grid.x_extent(c); b - a }).collect();
    let heights: Vec<f64> = (1..grid.rows() - 1).map(|r| { let (a, b) = grid.y_extent(r); b - a }).collect();
    let pitch_x: Vec<f64> = (1..grid.cols() - 1).map(|c| grid.x_edges[c + 1] - grid.x_edges[c]).collect();
    let pitch_y: Vec<f64> = (1..grid.rows() - 1).map(|r| grid.y_edges[r + 1] - grid.y_edges[r]).collect();
    let (mw, sw) = mean_std(&widths);
    let (mh, sh) = mean_std(&heights);
    Ok(GridMetrics {
        mean_cell_width: mw,
        mean_cell_height: mh,
        std_cell_width: sw,
        std_cell_height: sh,
        mean_pitch_x: mean_std(&pitch_x).0,
        mean_pitch_y: mean_std(&pitch_y).0,
    })
}

/// Everything grid reconstruction produces for one frame.
#[derive(Debug, Clone)]
pub struct GridReconstruction {
    pub x_projection: AxisProjection,
    pub y_projection: AxisProjection,
    pub period_x: f64,
    pub period_y: f64,
    pub grid: PixelGrid,
}

/// Runs projection, period estimation, edge detection and span measurement on
/// both axes (concurrently).
pub fn reconstruct(frame: &MeasurementFrame) -> Result<GridReconstruction> {
    let (xp, yp) = project(frame);
    let axis = |p: &AxisProjection| -> Result<(f64, Vec<f64>, Vec<(f64, f64)>)> {
        let period = estimate_period(p)?;
        let edges = detect_edges(p, period)?;
        let spans = emitter_spans(p, &edges);
        Ok((period, edges, spans))
    };
    let (rx, ry) = rayon::join(|| axis(&xp), || axis(&yp));
    let (period_x, xe, xs) = rx?;
    let (period_y, ye, ys) = ry?;
    let grid = build_grid(xe, ye)?.with_emitter_spans(xs, ys)?;
    Ok(GridReconstruction { x_projection: xp, y_projection: yp, period_x, period_y, grid })
}
