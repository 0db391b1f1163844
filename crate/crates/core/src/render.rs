//! Text artifacts of an analysis run: CSV tables, grid JSON and the SVG
//! overlay.

use std::fmt::Write as _;

use crate::eval::ClassificationReport;
use crate::features::CellFeatures;
use crate::grid::{AxisProjection, PixelGrid};
use crate::ml::CellStatus;

/// Two columns, `coordinate,value`, one line per sample.
pub fn projection_csv(p: &AxisProjection) -> String {
    let mut s = String::from("coordinate,value\n");
    for (i, v) in p.values.iter().enumerate() {
        writeln!(s, "{i},{v}").unwrap();
    }
    s
}

pub fn features_csv(features: &[CellFeatures]) -> String {
    let mut s = String::from("row,col,mean_l,max_l,min_l,std_l,mean_cx,mean_cy\n");
    for f in features {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            f.row, f.col, f.mean_l, f.max_l, f.min_l, f.std_l, f.mean_cx, f.mean_cy
        )
        .unwrap();
    }
    s
}

fn status_str(s: CellStatus) -> &'static str {
    match s {
        CellStatus::Functional => "functional",
        CellStatus::Defect => "defect",
    }
}

/// Principal-component coordinates, cluster index and label per cell.
pub fn pca_csv(report: &ClassificationReport) -> String {
    let mut s = String::from("row,col,pc1,pc2,cluster,predicted\n");
    for c in &report.per_cell {
        writeln!(s, "{},{},{},{},{},{}", c.row, c.col, c.pc1, c.pc2, c.cluster, status_str(c.predicted)).unwrap();
    }
    s
}

/// `{"x_edges": [...], "y_edges": [...]}` plus the emitting spans when known.
pub fn grid_json(grid: &PixelGrid) -> String {
    let mut s = serde_json::to_string_pretty(grid).expect("grid serializes");
    s.push('\n');
    s
}

/// Grid lines over a per-cell luminance heat map, predicted defects outlined
/// in red and missed ground-truth defects in orange. Coordinates are frame
/// samples of the rectified frame.
pub fn overlay_svg(width: usize, height: usize, grid: &PixelGrid, report: &ClassificationReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="-0.5 -0.5 {width} {height}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="-0.5" y="-0.5" width="{width}" height="{height}" fill="black"/>"#).unwrap();

    let peak = report.per_cell.iter().map(|c| c.mean_l).fold(0.0f64, f64::max);
    s.push_str("<g id=\"heat\">\n");
    for c in &report.per_cell {
        let (x0, x1, y0, y1) = grid.cell_rect(c.row, c.col);
        let level = if peak > 0.0 { (255.0 * c.mean_l / peak).round().clamp(0.0, 255.0) as u8 } else { 0 };
        writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="rgb({level},{level},{level})"/>"#,
            x1 - x0,
            y1 - y0
        )
        .unwrap();
    }
    s.push_str("</g>\n<g id=\"grid\" stroke=\"#3080ff\" stroke-width=\"0.5\">\n");
    let (xe, ye) = (grid.x_edges(), grid.y_edges());
    let (top, bottom) = (ye[0], ye[ye.len() - 1]);
    let (left, right) = (xe[0], xe[xe.len() - 1]);
    for &x in xe {
        writeln!(s, r#"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{bottom:.2}"/>"#).unwrap();
    }
    for &y in ye {
        writeln!(s, r#"<line x1="{left:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}"/>"#).unwrap();
    }
    s.push_str("</g>\n<g id=\"defects\" fill=\"none\" stroke-width=\"1.5\">\n");
    for c in &report.per_cell {
        let color = match (c.predicted, c.truth) {
            (CellStatus::Defect, _) => "red",
            (CellStatus::Functional, Some(CellStatus::Defect)) => "orange",
            _ => continue,
        };
        let (x0, x1, y0, y1) = (grid.x_edges()[c.col], grid.x_edges()[c.col + 1], grid.y_edges()[c.row], grid.y_edges()[c.row + 1]);
        writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" stroke="{color}"/>"#,
            x1 - x0,
            y1 - y0
        )
        .unwrap();
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Axis};

    #[test]
    fn projection_rows() {
        let p = AxisProjection { axis: Axis::X, values: vec![1.0, 2.5] };
        assert_eq!(projection_csv(&p), "coordinate,value\n0,1\n1,2.5\n");
    }

    #[test]
    fn features_header() {
        let f = CellFeatures { row: 1, col: 2, mean_l: 3.0, max_l: 4.0, min_l: 2.0, std_l: 0.5, mean_cx: 0.3, mean_cy: 0.4 };
        let csv = features_csv(&[f]);
        assert_eq!(csv, "row,col,mean_l,max_l,min_l,std_l,mean_cx,mean_cy\n1,2,3,4,2,0.5,0.3,0.4\n");
    }

    #[test]
    fn grid_json_keys() {
        let g = build_grid(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&grid_json(&g)).unwrap();
        assert_eq!(v["x_edges"], serde_json::json!([0.0, 1.0]));
        assert_eq!(v["y_edges"], serde_json::json!([0.0, 2.0]));
    }
}
