//! End-to-end analysis: correction, grid reconstruction, features,
//! classification and evaluation, plus artifact writing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{confusion, les_statistics, CellReport, ClassificationReport};
use crate::features::{extract, CellFeatures};
use crate::geometry::{detect_corners, estimate_homography, rectified_target, warp_frame, Homography};
use crate::grid::{cell_size, reconstruct, GridReconstruction};
use crate::io::{read_defect_map, read_frame, DefectMap, MeasurementFrame};
use crate::ml::{
    kmeans_fit, label_clusters, pca_fit, pca_transform, standardize_fit_transform, CellStatus, KMeansConfig, KMeansModel,
    Labeling, Matrix, PcaModel, Standardizer,
};
use crate::render;

pub const REPORT_FILE: &str = "report.json";
pub const PROJECTION_X_FILE: &str = "projections_x.csv";
pub const PROJECTION_Y_FILE: &str = "projections_y.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const PCA_FILE: &str = "pca.csv";
pub const GRID_FILE: &str = "grid.json";
pub const OVERLAY_FILE: &str = "overlay.svg";

pub const ARTIFACTS: [&str; 7] =
    [REPORT_FILE, PROJECTION_X_FILE, PROJECTION_Y_FILE, FEATURES_FILE, PCA_FILE, GRID_FILE, OVERLAY_FILE];

/// Homographies closer than this to the identity (max entry difference) are
/// not applied, leaving the frame untouched.
const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CornerMode {
    /// Detect the emitting-surface corners by thresholding.
    Auto,
    /// TL, TR, BR, BL in frame coordinates.
    Explicit([[f64; 2]; 4]),
    /// Use the frame as is.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub corners: CornerMode,
    /// Corner detection threshold relative to the frame maximum.
    pub rel_threshold: f64,
    pub kmeans: KMeansConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { corners: CornerMode::Auto, rel_threshold: 0.3, kmeans: KMeansConfig::default() }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_threshold > 0.0 && self.rel_threshold < 1.0) {
            return Err(Error::Config(format!("rel_threshold {} not in (0, 1)", self.rel_threshold)));
        }
        let k = &self.kmeans;
        if k.k == 0 || k.n_init == 0 || k.max_iter == 0 || !(k.tol >= 0.0) {
            return Err(Error::Config("k, n_init and max_iter must be positive, tol >= 0".into()));
        }
        if let CornerMode::Explicit(c) = &self.corners {
            if c.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite corner coordinate".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub frame: PathBuf,
    pub defects: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Correct,
    Grid,
    Features,
    Classify,
    Evaluate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Correct => "correct",
            Stage::Grid => "grid",
            Stage::Features => "features",
            Stage::Classify => "classify",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Intermediate products of one analysis.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// Corners used for rectification (absent when none was applied).
    pub corners: Option<[[f64; 2]; 4]>,
    pub homography: Homography<f64>,
    pub rectified: MeasurementFrame,
    pub reconstruction: GridReconstruction,
    pub features: Vec<CellFeatures>,
    pub standardizer: Standardizer<f64>,
    pub pca: PcaModel<f64>,
    pub projected: Matrix<f64>,
    pub kmeans: KMeansModel<f64>,
    pub labeling: Labeling,
    pub report: ClassificationReport,
}

fn rectify(frame: &MeasurementFrame, cfg: &AnalysisConfig) -> Result<(Option<[[f64; 2]; 4]>, Homography<f64>, MeasurementFrame)> {
    let corners = match cfg.corners {
        CornerMode::None => return Ok((None, Homography::identity(), frame.clone())),
        CornerMode::Auto => detect_corners(frame, cfg.rel_threshold)?,
        CornerMode::Explicit(c) => c,
    };
    let h = estimate_homography(&corners, &rectified_target(&corners))?;
    let id = Homography::<f64>::identity();
    let near_identity = h
        .matrix()
        .iter()
        .flatten()
        .zip(id.matrix().iter().flatten())
        .all(|(a, b)| (a - b).abs() <= IDENTITY_TOLERANCE);
    if near_identity {
        return Ok((Some(corners), id, frame.clone()));
    }
    let warped = warp_frame(frame, &h, frame.width(), frame.height())?;
    Ok((Some(corners), h, warped))
}

/// Runs every stage in memory. `truth`, when given, must cover the full grid.
pub fn analyze(
    frame: &MeasurementFrame,
    truth: Option<&DefectMap>,
    cfg: &AnalysisConfig,
) -> std::result::Result<Analysis, StageError> {
    cfg.validate().at(Stage::Config)?;
    let (corners, homography, rectified) = rectify(frame, cfg).at(Stage::Correct)?;

    let reconstruction = reconstruct(&rectified).at(Stage::Grid)?;
    let grid = &reconstruction.grid;
    let grid_metrics = cell_size(grid).at(Stage::Grid)?;

    let features = extract(&rectified, grid).at(Stage::Features)?;
    let rows: Vec<[f64; 6]> = features.iter().map(CellFeatures::vector).collect();
    let x = Matrix::from_rows(&rows).at(Stage::Features)?;

    let (standardizer, z) = standardize_fit_transform(&x).at(Stage::Classify)?;
    let pca = pca_fit(&z).at(Stage::Classify)?;
    let projected = pca_transform(&pca, &z).at(Stage::Classify)?;
    let kmeans = kmeans_fit(&projected, &cfg.kmeans).at(Stage::Classify)?;
    let labeling = label_clusters(&kmeans, &features).at(Stage::Classify)?;

    let les_stats = les_statistics(&features, &labeling.status).at(Stage::Evaluate)?;
    let confusion = truth.map(|t| confusion(&labeling.status, t, grid)).transpose().at(Stage::Evaluate)?;

    let mut flags = Vec::new();
    if labeling.degenerate {
        flags.push("degenerate_clustering".to_string());
    }
    if truth.is_none() {
        flags.push("no_ground_truth".to_string());
    }
    if let Some(cm) = &confusion {
        if cm.fnr_undefined {
            flags.push("fnr_undefined".to_string());
        }
        if cm.fpr_undefined {
            flags.push("fpr_undefined".to_string());
        }
    }
    if frame.chroma().is_none() {
        flags.push("no_chroma".to_string());
    }

    let per_cell = features
        .iter()
        .enumerate()
        .map(|(i, f)| CellReport {
            row: f.row,
            col: f.col,
            mean_l: f.mean_l,
            max_l: f.max_l,
            min_l: f.min_l,
            std_l: f.std_l,
            mean_cx: f.mean_cx,
            mean_cy: f.mean_cy,
            pc1: projected.get(i, 0),
            pc2: projected.get(i, 1),
            cluster: kmeans.labels[i],
            predicted: labeling.status[i],
            truth: truth.map(|t| if t.is_defective(f.row, f.col) { CellStatus::Defect } else { CellStatus::Functional }),
        })
        .collect();
    let report = ClassificationReport { grid_metrics, confusion, les_stats, per_cell, flags };

    Ok(Analysis {
        corners,
        homography,
        rectified,
        reconstruction,
        features,
        standardizer,
        pca,
        projected,
        kmeans,
        labeling,
        report,
    })
}

fn remove_artifacts(dir: &Path) -> Result<()> {
    for name in ARTIFACTS {
        let p = dir.join(name);
        match fs::remove_file(&p) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(p, e)),
        }
    }
    Ok(())
}

fn write_artifacts(dir: &Path, a: &Analysis) -> Result<()> {
    let r = &a.reconstruction;
    let files = [
        (PROJECTION_X_FILE, render::projection_csv(&r.x_projection)),
        (PROJECTION_Y_FILE, render::projection_csv(&r.y_projection)),
        (FEATURES_FILE, render::features_csv(&a.features)),
        (PCA_FILE, render::pca_csv(&a.report)),
        (GRID_FILE, render::grid_json(&r.grid)),
        (OVERLAY_FILE, render::overlay_svg(a.rectified.width(), a.rectified.height(), &r.grid, &a.report)),
        // last, so a present report means a complete run
        (REPORT_FILE, a.report.to_json()),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

/// Reads the inputs, analyzes, and writes all artifacts into `out_dir`.
/// Artifacts from earlier runs are removed first and none are left behind
/// when a stage fails.
pub fn run(cfg: &PipelineConfig) -> std::result::Result<ClassificationReport, StageError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e)).at(Stage::Write)?;
    remove_artifacts(&cfg.out_dir).at(Stage::Write)?;
    let result = (|| {
        let frame = read_frame(&cfg.frame).at(Stage::Load)?;
        let truth = cfg.defects.as_ref().map(read_defect_map).transpose().at(Stage::Load)?;
        let analysis = analyze(&frame, truth.as_ref(), &cfg.analysis)?;
        write_artifacts(&cfg.out_dir, &analysis).at(Stage::Write)?;
        Ok(analysis.report)
    })();
    if result.is_err() {
        let _ = remove_artifacts(&cfg.out_dir);
    }
    result
}
