//! Scoring against ground truth and raw / defect-excluded surface statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CellFeatures;
use crate::grid::{GridMetrics, PixelGrid};
use crate::io::DefectMap;
use crate::ml::CellStatus;

/// 2×2 counts, rows = truth, columns = prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_functional_pred_functional: usize,
    pub true_functional_pred_defect: usize,
    pub true_defect_pred_functional: usize,
    pub true_defect_pred_defect: usize,
    pub accuracy: f64,
    /// Functional cells predicted defective over all truly functional cells.
    pub false_negative_rate: f64,
    /// Defective cells predicted functional over all truly defective cells.
    pub false_positive_rate: f64,
    /// Set when a rate had an empty denominator and was reported as 0.
    pub fnr_undefined: bool,
    pub fpr_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl ConfusionMatrix {
    pub fn from_counts(tf_pf: usize, tf_pd: usize, td_pf: usize, td_pd: usize) -> Self {
        let total = tf_pf + tf_pd + td_pf + td_pd;
        let (accuracy, _) = ratio(tf_pf + td_pd, total);
        let (fnr, fnr_undefined) = ratio(tf_pd, tf_pf + tf_pd);
        let (fpr, fpr_undefined) = ratio(td_pf, td_pf + td_pd);
        let m = Self {
            true_functional_pred_functional: tf_pf,
            true_functional_pred_defect: tf_pd,
            true_defect_pred_functional: td_pf,
            true_defect_pred_defect: td_pd,
            accuracy,
            false_negative_rate: fnr,
            false_positive_rate: fpr,
            fnr_undefined,
            fpr_undefined,
        };
        debug_assert_eq!(m.total(), total);
        debug_assert!((0.0..=1.0).contains(&accuracy) && (0.0..=1.0).contains(&fnr) && (0.0..=1.0).contains(&fpr));
        m
    }

    pub fn total(&self) -> usize {
        self.true_functional_pred_functional
            + self.true_functional_pred_defect
            + self.true_defect_pred_functional
            + self.true_defect_pred_defect
    }
}

/// Scores the predicted status of every interior cell (row-major, as produced
/// by [`crate::features::extract`]) against a defect map covering the full grid.
pub fn confusion(predicted: &[CellStatus], truth: &DefectMap, grid: &PixelGrid) -> Result<ConfusionMatrix> {
    if truth.rows() != grid.rows() || truth.cols() != grid.cols() {
        return Err(Error::Dimension(format!(
            "defect map is {}x{}, grid is {}x{}",
            truth.rows(),
            truth.cols(),
            grid.rows(),
            grid.cols()
        )));
    }
    if predicted.len() != grid.interior_count() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} interior cells",
            predicted.len(),
            grid.interior_count()
        )));
    }
    let mut counts = [[0usize; 2]; 2];
    for ((r, c), &p) in grid.interior_cells().zip(predicted) {
        let t = usize::from(truth.is_defective(r, c));
        counts[t][usize::from(p == CellStatus::Defect)] += 1;
    }
    Ok(ConfusionMatrix::from_counts(counts[0][0], counts[0][1], counts[1][0], counts[1][1]))
}

/// Mean luminance of the emitting surface over all interior cells (raw) and
/// over functional-labeled cells only (denoised), each with its standard
/// error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesStats {
    pub raw_mean: f64,
    pub raw_sem: f64,
    pub raw_count: usize,
    pub denoised_mean: f64,
    pub denoised_sem: f64,
    pub denoised_count: usize,
}

fn mean_sem(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, (var / n as f64).sqrt(), n)
}

pub fn les_statistics(features: &[CellFeatures], predicted: &[CellStatus]) -> Result<LesStats> {
    if features.is_empty() {
        return Err(Error::Input("no cells".into()));
    }
    if features.len() != predicted.len() {
        return Err(Error::Dimension(format!("{} cells, {} labels", features.len(), predicted.len())));
    }
    if !predicted.contains(&CellStatus::Functional) {
        return Err(Error::NoFunctionalCells);
    }
    let (raw_mean, raw_sem, raw_count) = mean_sem(features.iter().map(|f| f.mean_l));
    let functional = features
        .iter()
        .zip(predicted)
        .filter(|(_, &p)| p == CellStatus::Functional)
        .map(|(f, _)| f.mean_l);
    let (denoised_mean, denoised_sem, denoised_count) = mean_sem(functional);
    Ok(LesStats { raw_mean, raw_sem, raw_count, denoised_mean, denoised_sem, denoised_count })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub row: usize,
    pub col: usize,
    pub mean_l: f64,
    pub max_l: f64,
    pub min_l: f64,
    pub std_l: f64,
    pub mean_cx: f64,
    pub mean_cy: f64,
    pub pc1: f64,
    pub pc2: f64,
    pub cluster: usize,
    pub predicted: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<CellStatus>,
}

/// Everything one analysis run reports; serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub grid_metrics: GridMetrics,
    /// Absent when no ground truth was supplied.
    pub confusion: Option<ConfusionMatrix>,
    pub les_stats: LesStats,
    pub per_cell: Vec<CellReport>,
    pub flags: Vec<String>,
}

impl ClassificationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn functional_count(&self) -> usize {
        self.per_cell.iter().filter(|c| c.predicted == CellStatus::Functional).count()
    }
}
