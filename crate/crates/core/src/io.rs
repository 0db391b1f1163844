//! Measurement frames (ULF1) and defect maps (CSV).
//!
//! ULF1 layout, all integers little-endian:
//!
//! | offset | size      | content                                         |
//! |--------|-----------|-------------------------------------------------|
//! | 0      | 4         | magic `ULF1`                                    |
//! | 4      | 4         | width (u32)                                     |
//! | 8      | 4         | height (u32)                                    |
//! | 12     | 1         | channel count: 1 = luminance, 3 = + CIE x, y    |
//! | 13     | 4·w·h·c   | planar row-major f32: luminance, cie_x, cie_y   |
//!
//! Luminance is in cd/m².

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"ULF1";
pub const FRAME_HEADER_LEN: usize = 13;

/// CIE 1931 x/y chromaticity planes, same layout as the luminance plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaPlanes {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
}

/// A calibrated luminance frame, `L(x, y)` sampled on a `width × height` raster.
///
/// Sample `(x, y)` lives at index `y * width + x`; its center is at the
/// continuous coordinate `(x, y)`.
#[derive(Debug, Clone)]
pub struct MeasurementFrame {
    width: usize,
    height: usize,
    luminance: Vec<f32>,
    chroma: Option<ChromaPlanes>,
}

impl PartialEq for MeasurementFrame {
    /// Bitwise equality of every plane.
    fn eq(&self, other: &Self) -> bool {
        fn bits(a: &[f32], b: &[f32]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits())
        }
        self.width == other.width
            && self.height == other.height
            && bits(&self.luminance, &other.luminance)
            && match (&self.chroma, &other.chroma) {
                (None, None) => true,
                (Some(a), Some(b)) => bits(&a.x, &b.x) && bits(&a.y, &b.y),
                _ => false,
            }
    }
}

impl MeasurementFrame {
    pub fn new(
        width: usize,
        height: usize,
        luminance: Vec<f32>,
        chroma: Option<ChromaPlanes>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!("frame dimensions must be positive, got {width}x{height}")));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::Format("frame dimensions overflow".into()))?;
        if luminance.len() != n {
            return Err(Error::Format(format!(
                "luminance plane has {} samples, expected {n}",
                luminance.len()
            )));
        }
        if let Some(index) = luminance.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation {
                index,
                reason: format!("luminance {} is not a finite non-negative value", luminance[index]),
            });
        }
        if let Some(c) = &chroma {
            for (name, plane, offset) in [("cie_x", &c.x, n), ("cie_y", &c.y, 2 * n)] {
                if plane.len() != n {
                    return Err(Error::Format(format!(
                        "{name} plane has {} samples, expected {n}",
                        plane.len()
                    )));
                }
                if let Some(i) = plane.iter().position(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Validation {
                        index: offset + i,
                        reason: format!("{name} {} outside [0, 1]", plane[i]),
                    });
                }
            }
        }
        Ok(Self { width, height, luminance, chroma })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn luminance(&self) -> &[f32] {
        &self.luminance
    }

    pub fn chroma(&self) -> Option<&ChromaPlanes> {
        self.chroma.as_ref()
    }

    pub fn channels(&self) -> u8 {
        if self.chroma.is_some() {
            3
        } else {
            1
        }
    }

    #[inline]
    pub fn lum(&self, x: usize, y: usize) -> f32 {
        self.luminance[y * self.width + x]
    }

    pub fn max_luminance(&self) -> f32 {
        self.luminance.iter().copied().fold(0.0, f32::max)
    }

    /// Sum of all luminance samples, accumulated in f64 in index order.
    pub fn total_luminance(&self) -> f64 {
        self.luminance.iter().map(|&v| v as f64).sum()
    }

    pub fn mean_luminance(&self) -> f64 {
        self.total_luminance() / self.luminance.len() as f64
    }

    /// Multiplies the luminance plane by `factor` (must be finite and ≥ 0).
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        let lum = self.luminance.iter().map(|v| v * factor).collect();
        Self::new(self.width, self.height, lum, self.chroma.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + 4 * n * self.channels() as usize);
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.push(self.channels());
        let mut push = |plane: &[f32]| {
            for v in plane {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        push(&self.luminance);
        if let Some(c) = &self.chroma {
            push(&c.x);
            push(&c.y);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != FRAME_MAGIC {
            return Err(Error::Format("missing ULF1 magic".into()));
        }
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(Error::Length { expected: FRAME_HEADER_LEN, found: bytes.len() });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let width = u32_at(4);
        let height = u32_at(8);
        let channels = bytes[12];
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!("channel count must be 1 or 3, got {channels}")));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::Format("frame dimensions overflow".into()))?;
        let expected = n
            .checked_mul(4 * channels as usize)
            .and_then(|p| p.checked_add(FRAME_HEADER_LEN))
            .ok_or_else(|| Error::Format("frame dimensions overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::Length { expected, found: bytes.len() });
        }
        let plane = |k: usize| -> Vec<f32> {
            let start = FRAME_HEADER_LEN + 4 * n * k;
            bytes[start..start + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let chroma = (channels == 3).then(|| ChromaPlanes { x: plane(1), y: plane(2) });
        Self::new(width, height, plane(0), chroma)
    }
}

pub fn read_frame(path: impl AsRef<Path>) -> Result<MeasurementFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    MeasurementFrame::decode(&bytes)
}

pub fn write_frame(frame: &MeasurementFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, frame.encode()).map_err(|e| Error::io(path, e))
}

/// Ground-truth defect status of every µLED in a `rows × cols` array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefectMap {
    rows: usize,
    cols: usize,
    defective: Vec<bool>,
}

impl DefectMap {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Range(format!("defect map dimensions must be positive, got {rows}x{cols}")));
        }
        Ok(Self { rows, cols, defective: vec![false; rows * cols] })
    }

    pub fn from_cells(rows: usize, cols: usize, cells: &[(usize, usize)]) -> Result<Self> {
        let mut map = Self::new(rows, cols)?;
        for &(r, c) in cells {
            map.mark(r, c)?;
        }
        Ok(map)
    }

    fn mark(&mut self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Range(format!(
                "cell ({row}, {col}) outside {}x{} map",
                self.rows, self.cols
            )));
        }
        self.defective[row * self.cols + col] = true;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_defective(&self, row: usize, col: usize) -> bool {
        self.defective[row * self.cols + col]
    }

    pub fn defect_count(&self) -> usize {
        self.defective.iter().filter(|d| **d).count()
    }

    /// Defective cells in row-major order.
    pub fn defective_cells(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| self.is_defective(r, c))
            .collect()
    }

    /// CSV text: first line `rows,cols`, then one `row,col` line per defective cell.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}\n", self.rows, self.cols);
        for (r, c) in self.defective_cells() {
            let _ = writeln!(s, "{r},{c}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (ln, header) = lines
            .next()
            .ok_or_else(|| Error::Format("defect map is empty".into()))?;
        let (rows, cols) = parse_pair(header, ln)?;
        let mut map = Self::new(rows, cols)?;
        for (ln, line) in lines {
            let (r, c) = parse_pair(line, ln)?;
            map.mark(r, c).map_err(|e| Error::Range(format!("line {ln}: {e}")))?;
        }
        Ok(map)
    }
}

fn parse_pair(line: &str, ln: usize) -> Result<(usize, usize)> {
    let mut it = line.split(',').map(str::trim);
    let parse = |s: Option<&str>| -> Result<usize> {
        s.ok_or_else(|| Error::Format(format!("line {ln}: expected two comma-separated integers")))?
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("line {ln}: {e}")))
    };
    let a = parse(it.next())?;
    let b = parse(it.next())?;
    if it.next().is_some() {
        return Err(Error::Format(format!("line {ln}: too many fields")));
    }
    Ok((a, b))
}

pub fn read_defect_map(path: impl AsRef<Path>) -> Result<DefectMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DefectMap::from_csv(&text)
}

pub fn write_defect_map(map: &DefectMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, map.to_csv()).map_err(|e| Error::io(path, e))
}
