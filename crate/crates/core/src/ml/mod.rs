//! Standardization, PCA and k-Means, written from scratch and generic over
//! [`Scalar`](crate::Scalar).

mod eigen;
mod kmeans;
mod labels;
mod matrix;
mod pca;
mod standardize;

pub use eigen::{symmetric_eigen, SymmetricEigen, MAX_SWEEPS};
pub use kmeans::{inertia_of, kmeans_fit, kmeans_fit_sequential, KMeansConfig, KMeansModel};
pub use labels::{label_clusters, CellStatus, Labeling, MIN_SEPARATION};
pub use matrix::Matrix;
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use standardize::{standardize_fit_transform, Standardizer};
