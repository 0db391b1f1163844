use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CellFeatures;
use crate::ml::KMeansModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Functional,
    Defect,
}

/// Smallest gap between the functional cluster's mean luminance and the rest,
/// in units of the pooled within-cluster standard deviation of `mean_l`, for
/// the split to count as functional/defect. Splitting one Gaussian population
/// in two gives about 2.7; dark defects against a 10 % brightness spread give
/// about 10.
pub const MIN_SEPARATION: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub status: Vec<CellStatus>,
    pub functional_cluster: usize,
    /// Gap between the functional and the other clusters' mean luminance over
    /// the pooled within-cluster standard deviation.
    pub separation: f64,
    /// Set when clustering does not yield a functional/defect split: one
    /// cluster holds every point, or the clusters are not separated in
    /// luminance. All cells are then labeled functional.
    pub degenerate: bool,
}

/// Maps clusters to semantics: the cluster with the highest average `mean_l`
/// is functional, all others are defective.
pub fn label_clusters<T: Scalar>(model: &KMeansModel<T>, features: &[CellFeatures]) -> Result<Labeling> {
    if model.labels.len() != features.len() {
        return Err(Error::Dimension(format!(
            "{} cluster labels for {} cells",
            model.labels.len(),
            features.len()
        )));
    }
    let k = model.centroids.rows();
    let mut sums = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    for (f, &l) in features.iter().zip(&model.labels) {
        sums[l] += f.mean_l;
        counts[l] += 1;
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect();
    let mut functional = 0;
    for c in 0..k {
        if counts[c] > 0 && (counts[functional] == 0 || means[c] > means[functional]) {
            functional = c;
        }
    }
    let all_functional = |separation: f64| Labeling {
        status: vec![CellStatus::Functional; features.len()],
        functional_cluster: functional,
        separation,
        degenerate: true,
    };
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Ok(all_functional(0.0));
    }

    let (mut rest_sum, mut rest_n) = (0.0, 0usize);
    for (f, &l) in features.iter().zip(&model.labels) {
        if l != functional {
            rest_sum += f.mean_l;
            rest_n += 1;
        }
    }
    let rest_mean = rest_sum / rest_n as f64;
    let mut ss = 0.0;
    for (f, &l) in features.iter().zip(&model.labels) {
        let m = if l == functional { means[functional] } else { rest_mean };
        ss += (f.mean_l - m).powi(2);
    }
    let pooled = (ss / features.len() as f64).sqrt();
    let gap = means[functional] - rest_mean;
    let separation = if pooled > 0.0 {
        gap / pooled
    } else if gap > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if !(separation >= MIN_SEPARATION) {
        return Ok(all_functional(separation));
    }
    let status = model
        .labels
        .iter()
        .map(|&l| if l == functional { CellStatus::Functional } else { CellStatus::Defect })
        .collect();
    Ok(Labeling { status, functional_cluster: functional, separation, degenerate: false })
}
