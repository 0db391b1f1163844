//! Synthetic µLED frames with known geometry, photometry and defects.
//!
//! Layout along each axis (pre-distortion, canvas coordinates): the emitting
//! surface starts with a half-gap border, then `cell, gap, cell, gap, …`, and
//! ends with a half-gap border, so the pitch is `cell_size_px + gap_px`. The
//! canvas origin is chosen so the first lit cell starts on a sample boundary
//! (`k - 0.5`). Samples are rasterized by exact area coverage.
//!
//! Per-cell brightness is one Gaussian draw `max(0, lum_mean + lum_sigma·N)`
//! per µLED, constant across the cell; defective cells are multiplied by
//! `defect_residual`. The Gaussian brightness model is an assumption: real
//! arrays may show skewed or multi-modal distributions.
//!
//! Random draws come from [`SplitMix64`] seeded with `seed`, consumed in this
//! order: brightness (row-major), chroma x then y per cell (row-major, only
//! when chroma is enabled), defect selection (partial Fisher-Yates over
//! row-major cell indices), then per-sample noise (row-major, only when
//! `noise_sigma > 0`).

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{warp_frame, Homography};
use crate::io::{ChromaPlanes, DefectMap, MeasurementFrame};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub enum DefectSpec {
    /// Exactly `round(fraction · rows · cols)` cells chosen at random.
    Fraction(f64),
    /// Explicit `(row, col)` list.
    Cells(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub cell_size_px: f64,
    pub gap_px: f64,
    pub lum_mean: f64,
    pub lum_sigma: f64,
    pub defects: DefectSpec,
    pub defect_residual: f64,
    pub rotation_deg: f64,
    pub perspective_strength: f64,
    pub noise_sigma: f64,
    pub chroma: bool,
    pub chroma_mean_x: f64,
    pub chroma_mean_y: f64,
    pub chroma_sigma: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 60×60 array, 23 px cells on a 26 px pitch, in a 2448×2050 frame.
    fn default() -> Self {
        Self {
            grid_rows: 60,
            grid_cols: 60,
            cell_size_px: 23.0,
            gap_px: 3.0,
            lum_mean: 2.864e6,
            lum_sigma: 1.432e5,
            defects: DefectSpec::Fraction(0.03),
            defect_residual: 0.02,
            rotation_deg: 0.0,
            perspective_strength: 0.0,
            noise_sigma: 1.0e4,
            chroma: true,
            chroma_mean_x: 0.31,
            chroma_mean_y: 0.33,
            chroma_sigma: 0.002,
            frame_width: 2448,
            frame_height: 2050,
            seed: 1,
        }
    }
}

fn finite_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(Error::Config("frame dimensions must be positive".into()));
        }
        finite_nonneg("gap_px", self.gap_px)?;
        if !(self.cell_size_px.is_finite() && self.cell_size_px > self.gap_px) {
            return Err(Error::Config(format!(
                "cell_size_px ({}) must exceed gap_px ({})",
                self.cell_size_px, self.gap_px
            )));
        }
        finite_nonneg("lum_mean", self.lum_mean)?;
        finite_nonneg("lum_sigma", self.lum_sigma)?;
        finite_nonneg("noise_sigma", self.noise_sigma)?;
        finite_nonneg("chroma_sigma", self.chroma_sigma)?;
        finite_nonneg("perspective_strength", self.perspective_strength)?;
        if !self.rotation_deg.is_finite() {
            return Err(Error::Config("rotation_deg must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.defect_residual) {
            return Err(Error::Config(format!("defect_residual {} outside [0, 1)", self.defect_residual)));
        }
        for (name, v) in [("chroma_mean_x", self.chroma_mean_x), ("chroma_mean_y", self.chroma_mean_y)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        match &self.defects {
            DefectSpec::Fraction(f) if !(0.0..1.0).contains(f) => {
                return Err(Error::Config(format!("defect_fraction {f} outside [0, 1)")));
            }
            DefectSpec::Cells(cells) => {
                if let Some(&(r, c)) = cells.iter().find(|&&(r, c)| r >= self.grid_rows || c >= self.grid_cols) {
                    return Err(Error::Config(format!("defect cell ({r}, {c}) outside the grid")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn pitch(&self) -> f64 {
        self.cell_size_px + self.gap_px
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
    ///
    /// Defects are given either as `defect_fraction = 0.03` or as
    /// `defects = 10:10 10:11 …` (row:col pairs separated by whitespace or commas).
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut fraction_set = false;
        let mut cells_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = |e: String| Error::Config(format!("line {} ({key}): {e}", i + 1));
            fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
            where
                T::Err: std::fmt::Display,
            {
                v.parse::<T>().map_err(|e| format!("{e}"))
            }
            match key {
                "grid_rows" => cfg.grid_rows = num(value).map_err(ctx)?,
                "grid_cols" => cfg.grid_cols = num(value).map_err(ctx)?,
                "cell_size_px" => cfg.cell_size_px = num(value).map_err(ctx)?,
                "gap_px" => cfg.gap_px = num(value).map_err(ctx)?,
                "lum_mean" => cfg.lum_mean = num(value).map_err(ctx)?,
                "lum_sigma" => cfg.lum_sigma = num(value).map_err(ctx)?,
                "defect_fraction" => {
                    cfg.defects = DefectSpec::Fraction(num(value).map_err(ctx)?);
                    fraction_set = true;
                }
                "defects" => {
                    cfg.defects = DefectSpec::Cells(parse_cells(value).map_err(ctx)?);
                    cells_set = true;
                }
                "defect_residual" => cfg.defect_residual = num(value).map_err(ctx)?,
                "rotation_deg" => cfg.rotation_deg = num(value).map_err(ctx)?,
                "perspective_strength" => cfg.perspective_strength = num(value).map_err(ctx)?,
                "noise_sigma" => cfg.noise_sigma = num(value).map_err(ctx)?,
                "chroma" => cfg.chroma = num(value).map_err(ctx)?,
                "chroma_mean_x" => cfg.chroma_mean_x = num(value).map_err(ctx)?,
                "chroma_mean_y" => cfg.chroma_mean_y = num(value).map_err(ctx)?,
                "chroma_sigma" => cfg.chroma_sigma = num(value).map_err(ctx)?,
                "frame_width" => cfg.frame_width = num(value).map_err(ctx)?,
                "frame_height" => cfg.frame_height = num(value).map_err(ctx)?,
                "seed" => cfg.seed = num(value).map_err(ctx)?,
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", i + 1))),
            }
        }
        if fraction_set && cells_set {
            return Err(Error::Config("give either defect_fraction or defects, not both".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_cells(value: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|tok| {
            let (r, c) = tok.split_once(':').ok_or_else(|| format!("expected row:col, got `{tok}`"))?;
            Ok((
                r.parse().map_err(|e| format!("`{tok}`: {e}"))?,
                c.parse().map_err(|e| format!("`{tok}`: {e}"))?,
            ))
        })
        .collect()
}

/// Axis-aligned emitting rectangle of one cell, `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRect {
    pub row: usize,
    pub col: usize,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Placement of the emitting surface on the pre-distortion canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    /// Outer corner of the emitting surface, including the half-gap border.
    pub origin: [f64; 2],
    pub pitch: f64,
    pub cell: f64,
    pub gap: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Layout {
    pub fn new(cfg: &SynthConfig) -> Self {
        let pitch = cfg.pitch();
        let half_gap = cfg.gap_px / 2.0;
        let place = |frame: usize, n: usize| {
            let extent = n as f64 * pitch;
            ((frame as f64 - extent) / 2.0 + half_gap).round() - 0.5 - half_gap
        };
        Self {
            origin: [place(cfg.frame_width, cfg.grid_cols), place(cfg.frame_height, cfg.grid_rows)],
            pitch,
            cell: cfg.cell_size_px,
            gap: cfg.gap_px,
            rows: cfg.grid_rows,
            cols: cfg.grid_cols,
        }
    }

    /// Start of the emitting part of cell `index` along an axis.
    pub fn cell_start(&self, axis_origin: f64, index: usize) -> f64 {
        axis_origin + self.gap / 2.0 + index as f64 * self.pitch
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.cols as f64 * self.pitch, self.rows as f64 * self.pitch]
    }

    pub fn center(&self) -> [f64; 2] {
        let [w, h] = self.extent();
        [self.origin[0] + w / 2.0, self.origin[1] + h / 2.0]
    }

    /// Boundaries between neighbouring cells (gap centers) along x, including
    /// the two outer borders: `cols + 1` values.
    pub fn x_boundaries(&self) -> Vec<f64> {
        (0..=self.cols).map(|i| self.origin[0] + i as f64 * self.pitch).collect()
    }

    pub fn y_boundaries(&self) -> Vec<f64> {
        (0..=self.rows).map(|i| self.origin[1] + i as f64 * self.pitch).collect()
    }

    /// Corners of the emitting region (outer corners of the corner cells),
    /// ordered TL, TR, BR, BL.
    pub fn emitting_corners(&self) -> [[f64; 2]; 4] {
        let x0 = self.cell_start(self.origin[0], 0);
        let y0 = self.cell_start(self.origin[1], 0);
        let x1 = self.cell_start(self.origin[0], self.cols - 1) + self.cell;
        let y1 = self.cell_start(self.origin[1], self.rows - 1) + self.cell;
        [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    }
}

/// One rectangle per cell, row-major, in pre-distortion canvas coordinates.
pub fn ideal_cell_rectangles(cfg: &SynthConfig) -> Result<Vec<CellRect>> {
    cfg.validate()?;
    let l = Layout::new(cfg);
    let mut out = Vec::with_capacity(cfg.grid_rows * cfg.grid_cols);
    for row in 0..cfg.grid_rows {
        let y0 = l.cell_start(l.origin[1], row);
        for col in 0..cfg.grid_cols {
            let x0 = l.cell_start(l.origin[0], col);
            out.push(CellRect { row, col, x0, x1: x0 + l.cell, y0, y1: y0 + l.cell });
        }
    }
    Ok(out)
}

/// Projective map from the pre-distortion canvas to the captured frame:
/// perspective tilt, then rotation, both about the surface center.
pub fn distortion(cfg: &SynthConfig) -> Result<Homography<f64>> {
    let l = Layout::new(cfg);
    let c = l.center();
    if cfg.rotation_deg == 0.0 && cfg.perspective_strength == 0.0 {
        return Ok(Homography::identity());
    }
    let [w, h] = l.extent();
    let k = cfg.perspective_strength / w.max(h);
    let tilt = Homography::from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [k, k, 1.0]])?;
    let to_center = Homography::translation(-c[0], -c[1]);
    let back = Homography::translation(c[0], c[1]);
    let rot = Homography::rotation_about(cfg.rotation_deg.to_radians(), [0.0, 0.0]);
    back.compose(&rot)?.compose(&tilt)?.compose(&to_center)
}

/// Everything [`generate`] knows about the frame it produced.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub frame: MeasurementFrame,
    pub defects: DefectMap,
    /// Images of the emitting-region corners, TL, TR, BR, BL.
    pub corners: [[f64; 2]; 4],
    /// Drawn brightness per cell before the defect residual, row-major.
    pub drawn_brightness: Vec<f64>,
    pub distortion: Homography<f64>,
    pub layout: Layout,
    pub defect_residual: f64,
}

impl SynthFrame {
    /// Rendered brightness of a cell (defect residual applied).
    pub fn cell_brightness(&self, row: usize, col: usize) -> f64 {
        let b = self.drawn_brightness[row * self.layout.cols + col];
        if self.defects.is_defective(row, col) {
            b * self.defect_residual
        } else {
            b
        }
    }

    /// Mean drawn brightness of functional cells; optionally interior cells only.
    pub fn functional_mean(&self, interior_only: bool) -> f64 {
        let (rows, cols) = (self.layout.rows, self.layout.cols);
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in 0..rows {
            for c in 0..cols {
                let interior = r > 0 && c > 0 && r + 1 < rows && c + 1 < cols;
                if (interior || !interior_only) && !self.defects.is_defective(r, c) {
                    sum += self.drawn_brightness[r * cols + c];
                    n += 1;
                }
            }
        }
        sum / n as f64
    }
}

/// Per-sample coverage along one axis: `(cell index, covered fraction)`.
fn axis_coverage(samples: usize, layout: &Layout, axis_origin: f64, cells: usize) -> Vec<Vec<(usize, f64)>> {
    let mut cov = vec![Vec::new(); samples];
    for c in 0..cells {
        let s = layout.cell_start(axis_origin, c);
        let e = s + layout.cell;
        let first = (s + 0.5).floor().max(0.0) as usize;
        let last = ((e + 0.5).ceil() as usize).min(samples);
        for (i, slot) in cov.iter_mut().enumerate().take(last).skip(first) {
            let lo = (i as f64 - 0.5).max(s);
            let hi = (i as f64 + 0.5).min(e);
            if hi > lo {
                slot.push((c, hi - lo));
            }
        }
    }
    cov
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthFrame> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    let (rows, cols) = (cfg.grid_rows, cfg.grid_cols);
    let (w, h) = (cfg.frame_width, cfg.frame_height);
    let mut rng = SplitMix64::new(cfg.seed);

    let drawn: Vec<f64> = (0..rows * cols)
        .map(|_| (cfg.lum_mean + cfg.lum_sigma * rng.normal()).max(0.0))
        .collect();
    let cell_chroma: Option<Vec<[f64; 2]>> = cfg.chroma.then(|| {
        (0..rows * cols)
            .map(|_| {
                let x = (cfg.chroma_mean_x + cfg.chroma_sigma * rng.normal()).clamp(0.0, 1.0);
                let y = (cfg.chroma_mean_y + cfg.chroma_sigma * rng.normal()).clamp(0.0, 1.0);
                [x, y]
            })
            .collect()
    });
    let defects = match &cfg.defects {
        DefectSpec::Cells(cells) => DefectMap::from_cells(rows, cols, cells)?,
        DefectSpec::Fraction(f) => {
            let n = rows * cols;
            let k = (f * n as f64).round() as usize;
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = i + rng.below((n - i) as u64) as usize;
                idx.swap(i, j);
            }
            let cells: Vec<_> = idx[..k].iter().map(|&i| (i / cols, i % cols)).collect();
            DefectMap::from_cells(rows, cols, &cells)?
        }
    };
    let brightness: Vec<f64> = (0..rows * cols)
        .map(|i| {
            if defects.is_defective(i / cols, i % cols) {
                drawn[i] * cfg.defect_residual
            } else {
                drawn[i]
            }
        })
        .collect();

    let hom = distortion(cfg)?;
    let corners = layout.emitting_corners().map(|p| hom.apply(p)).map(|r| r.unwrap_or([f64::NAN; 2]));
    let fits = corners
        .iter()
        .all(|p| p[0] >= 1.0 && p[1] >= 1.0 && p[0] <= w as f64 - 2.0 && p[1] <= h as f64 - 2.0);
    let [ex, ey] = layout.extent();
    if !fits || layout.origin[0] < 0.0 || layout.origin[1] < 0.0 || layout.origin[0] + ex > w as f64 || layout.origin[1] + ey > h as f64 {
        return Err(Error::Config(format!(
            "emitting surface does not fit in a {w}x{h} frame"
        )));
    }

    let cov_x = axis_coverage(w, &layout, layout.origin[0], cols);
    let cov_y = axis_coverage(h, &layout, layout.origin[1], rows);
    let mut lum = vec![0.0f32; w * h];
    let mut chroma_planes = cfg.chroma.then(|| ChromaPlanes {
        x: vec![cfg.chroma_mean_x as f32; w * h],
        y: vec![cfg.chroma_mean_y as f32; w * h],
    });
    for (y, cy) in cov_y.iter().enumerate() {
        if cy.is_empty() {
            continue;
        }
        for (x, cx) in cov_x.iter().enumerate() {
            if cx.is_empty() {
                continue;
            }
            let mut l = 0.0;
            let mut area = 0.0;
            let mut chroma = [0.0; 2];
            for &(r, fy) in cy {
                for &(c, fx) in cx {
                    let a = fx * fy;
                    let idx = r * cols + c;
                    l += a * brightness[idx];
                    area += a;
                    if let Some(cc) = &cell_chroma {
                        chroma[0] += a * cc[idx][0];
                        chroma[1] += a * cc[idx][1];
                    }
                }
            }
            let i = y * w + x;
            lum[i] = l as f32;
            if let Some(p) = chroma_planes.as_mut() {
                p.x[i] = (chroma[0] + (1.0 - area) * cfg.chroma_mean_x).clamp(0.0, 1.0) as f32;
                p.y[i] = (chroma[1] + (1.0 - area) * cfg.chroma_mean_y).clamp(0.0, 1.0) as f32;
            }
        }
    }
    let ideal = MeasurementFrame::new(w, h, lum, chroma_planes)?;
    let mut frame = if hom == Homography::identity() { ideal } else { warp_frame(&ideal, &hom, w, h)? };

    if cfg.noise_sigma > 0.0 {
        let noisy: Vec<f32> = frame
            .luminance()
            .iter()
            .map(|&v| (v as f64 + cfg.noise_sigma * rng.normal()).max(0.0) as f32)
            .collect();
        frame = MeasurementFrame::new(w, h, noisy, frame.chroma().cloned())?;
    }

    Ok(SynthFrame {
        frame,
        defects,
        corners,
        drawn_brightness: drawn,
        distortion: hom,
        layout,
        defect_residual: cfg.defect_residual,
    })
}
