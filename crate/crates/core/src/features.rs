//! Six-dimensional descriptor per interior µLED: mean, max, min and standard
//! deviation of luminance, and mean CIE x / CIE y.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use crate::io::MeasurementFrame;

/// Samples closer than this to a cell border are ignored.
pub const CELL_MARGIN_PX: f64 = 1.0;
/// Chromaticity reported when the frame has no chroma planes.
pub const MISSING_CHROMA: f64 = 0.5;

pub const FEATURE_NAMES: [&str; 6] = ["mean_l", "max_l", "min_l", "std_l", "mean_cx", "mean_cy"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellFeatures {
    pub row: usize,
    pub col: usize,
    pub mean_l: f64,
    pub max_l: f64,
    pub min_l: f64,
    pub std_l: f64,
    pub mean_cx: f64,
    pub mean_cy: f64,
}

impl CellFeatures {
    pub fn vector(&self) -> [f64; 6] {
        [self.mean_l, self.max_l, self.min_l, self.std_l, self.mean_cx, self.mean_cy]
    }

    fn check(&self) {
        let slack = 1e-9 * self.max_l.abs().max(1.0);
        debug_assert!(self.min_l <= self.mean_l + slack && self.mean_l <= self.max_l + slack, "{self:?}");
        debug_assert!(self.std_l >= 0.0 && self.std_l <= 0.5 * (self.max_l - self.min_l) + slack, "{self:?}");
        debug_assert!((0.0..=1.0).contains(&self.mean_cx) && (0.0..=1.0).contains(&self.mean_cy));
    }
}

/// Sample indices whose centers lie in `[lo + margin, hi - margin]`.
fn sample_range(lo: f64, hi: f64, len: usize) -> std::ops::Range<usize> {
    let first = (lo + CELL_MARGIN_PX).ceil().max(0.0);
    let last = (hi - CELL_MARGIN_PX).floor();
    if last < first {
        return 0..0;
    }
    (first as usize).min(len)..((last as usize) + 1).min(len)
}

fn cell_features(frame: &MeasurementFrame, grid: &PixelGrid, row: usize, col: usize) -> Result<CellFeatures> {
    let (x0, x1, y0, y1) = grid.cell_rect(row, col);
    let xs = sample_range(x0, x1, frame.width());
    let ys = sample_range(y0, y1, frame.height());
    let n = xs.len() * ys.len();
    if n == 0 {
        return Err(Error::Extraction { row, col, reason: "no samples inside the cell margin".into() });
    }
    let w = frame.width();
    let lum = frame.luminance();
    let (mut sum, mut max, mut min) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    for y in ys.clone() {
        for &v in &lum[y * w + xs.start..y * w + xs.end] {
            let v = v as f64;
            sum += v;
            max = max.max(v);
            min = min.min(v);
        }
    }
    let mean = sum / n as f64;
    let mut sq = 0.0f64;
    for y in ys.clone() {
        for &v in &lum[y * w + xs.start..y * w + xs.end] {
            sq += (v as f64 - mean).powi(2);
        }
    }
    let (mean_cx, mean_cy) = match frame.chroma() {
        None => (MISSING_CHROMA, MISSING_CHROMA),
        Some(c) => {
            let (mut sx, mut sy) = (0.0f64, 0.0f64);
            for y in ys {
                for i in y * w + xs.start..y * w + xs.end {
                    sx += c.x[i] as f64;
                    sy += c.y[i] as f64;
                }
            }
            ((sx / n as f64).clamp(0.0, 1.0), (sy / n as f64).clamp(0.0, 1.0))
        }
    };
    let f = CellFeatures {
        row,
        col,
        mean_l: mean.clamp(min, max),
        max_l: max,
        min_l: min,
        std_l: (sq / n as f64).sqrt().min(0.5 * (max - min)),
        mean_cx,
        mean_cy,
    };
    f.check();
    Ok(f)
}

/// Features of every interior cell, row-major. Statistics use the samples
/// whose centers fall inside the cell's emitting rectangle shrunk by
/// [`CELL_MARGIN_PX`]; the standard deviation is the population one.
pub fn extract(frame: &MeasurementFrame, grid: &PixelGrid) -> Result<Vec<CellFeatures>> {
    let (w, h) = (frame.width() as f64, frame.height() as f64);
    let xe = grid.x_edges();
    let ye = grid.y_edges();
    if xe[0] < -0.5 || *xe.last().unwrap() > w - 0.5 || ye[0] < -0.5 || *ye.last().unwrap() > h - 0.5 {
        return Err(Error::Dimension(format!(
            "grid extends beyond the {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    let cells: Vec<(usize, usize)> = grid.interior_cells().collect();
    cells.par_iter().map(|&(r, c)| cell_features(frame, grid, r, c)).collect()
}
