use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::Matrix;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    /// Independent k-means++ initializations; the lowest-inertia run wins.
    pub n_init: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the summed squared centroid movement drops below this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 2, n_init: 100, seed: 8, max_iter: 300, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel<T: Scalar> {
    pub centroids: Matrix<T>,
    pub labels: Vec<usize>,
    /// Sum of squared distances of every point to its assigned centroid.
    pub inertia: T,
    pub config: KMeansConfig,
    /// Index of the winning restart.
    pub restart: usize,
    pub iterations: usize,
}

#[inline]
fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

pub fn inertia_of<T: Scalar>(points: &Matrix<T>, centroids: &Matrix<T>, labels: &[usize]) -> T {
    points.iter_rows().zip(labels).map(|(p, &l)| dist2(p, centroids.row(l))).sum()
}

/// Nearest centroid per point (lowest index on ties) and the total cost.
fn assign<T: Scalar>(points: &Matrix<T>, centroids: &Matrix<T>, labels: &mut [usize]) -> T {
    let mut total = T::zero();
    for (p, label) in points.iter_rows().zip(labels.iter_mut()) {
        let mut best = 0;
        let mut best_d = dist2(p, centroids.row(0));
        for c in 1..centroids.rows() {
            let d = dist2(p, centroids.row(c));
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *label = best;
        total += best_d;
    }
    total
}

fn kmeans_plus_plus<T: Scalar>(points: &Matrix<T>, k: usize, rng: &mut SplitMix64) -> Matrix<T> {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.below(n as u64) as usize;
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<T> = points.iter_rows().map(|p| dist2(p, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().map(|d| d.to_f64_lossy()).sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut cum = 0.0;
            let mut chosen = None;
            for (i, d) in d2.iter().enumerate() {
                cum += d.to_f64_lossy();
                if cum > target {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > T::zero()).unwrap())
        } else {
            rng.below(n as u64) as usize
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, p) in points.iter_rows().enumerate() {
            let d = dist2(p, centroids.row(c));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

struct Run<T: Scalar> {
    centroids: Matrix<T>,
    labels: Vec<usize>,
    inertia: T,
    iterations: usize,
}

fn lloyd<T: Scalar>(points: &Matrix<T>, cfg: &KMeansConfig, restart: usize) -> Run<T> {
    let (n, dim, k) = (points.rows(), points.cols(), cfg.k);
    let mut rng = SplitMix64::derive(cfg.seed, restart as u64);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let tol = T::lit(cfg.tol);
    let mut previous = T::infinity();
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        let cost = assign(points, &centroids, &mut labels);
        debug_assert!(
            cost <= previous + previous.abs() * T::lit(1e-9) + T::lit(1e-12) || previous.is_infinite(),
            "inertia increased: {previous} -> {cost}"
        );
        previous = cost;

        let mut sums = Matrix::<T>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter_rows().zip(&labels) {
            counts[l] += 1;
            for (s, &v) in sums.row_mut(l).iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next = Matrix::<T>::zeros(k, dim);
        for c in 0..k {
            if counts[c] > 0 {
                let m = T::from_usize(counts[c]).unwrap();
                for (o, &s) in next.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *o = s / m;
                }
            } else {
                next.row_mut(c).copy_from_slice(centroids.row(c));
            }
        }
        // Empty clusters take over the point farthest from its centroid.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = None;
            let mut far_d = T::zero();
            for (i, p) in points.iter_rows().enumerate() {
                let l = labels[i];
                if counts[l] <= 1 {
                    continue;
                }
                let d = dist2(p, next.row(l));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                next.row_mut(c).copy_from_slice(points.row(i));
            }
        }
        let shift: T = (0..k).map(|c| dist2(centroids.row(c), next.row(c))).sum();
        centroids = next;
        if shift < tol {
            break;
        }
    }
    let inertia = assign(points, &centroids, &mut labels);
    Run { centroids, labels, inertia, iterations }
}

fn validate<T: Scalar>(points: &Matrix<T>, cfg: &KMeansConfig) -> Result<()> {
    if cfg.k == 0 || cfg.n_init == 0 || cfg.max_iter == 0 {
        return Err(Error::Input("k, n_init and max_iter must be positive".into()));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::Input(format!("tol {} must be >= 0", cfg.tol)));
    }
    if points.rows() < cfg.k {
        return Err(Error::Input(format!("{} points for k = {}", points.rows(), cfg.k)));
    }
    if !points.is_finite() {
        return Err(Error::Input("non-finite point coordinate".into()));
    }
    Ok(())
}

fn best_of<T: Scalar>(runs: Vec<Run<T>>, cfg: &KMeansConfig) -> KMeansModel<T> {
    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        if r.inertia < runs[best].inertia {
            best = i;
        }
    }
    let run = runs.into_iter().nth(best).unwrap();
    KMeansModel {
        centroids: run.centroids,
        labels: run.labels,
        inertia: run.inertia,
        config: *cfg,
        restart: best,
        iterations: run.iterations,
    }
}

/// Lloyd's algorithm with k-means++ seeding, `n_init` restarts run in
/// parallel. Restart `r` draws from `SplitMix64::derive(seed, r)`, and ties in
/// inertia go to the lowest restart index, so the result equals
/// [`kmeans_fit_sequential`] bit for bit.
pub fn kmeans_fit<T: Scalar>(points: &Matrix<T>, cfg: &KMeansConfig) -> Result<KMeansModel<T>> {
    validate(points, cfg)?;
    let runs: Vec<Run<T>> = (0..cfg.n_init).into_par_iter().map(|r| lloyd(points, cfg, r)).collect();
    Ok(best_of(runs, cfg))
}

pub fn kmeans_fit_sequential<T: Scalar>(points: &Matrix<T>, cfg: &KMeansConfig) -> Result<KMeansModel<T>> {
    validate(points, cfg)?;
    let runs: Vec<Run<T>> = (0..cfg.n_init).map(|r| lloyd(points, cfg, r)).collect();
    Ok(best_of(runs, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f64; 2]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn two_separated_pairs() {
        let p = pts(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]);
        let m = kmeans_fit(&p, &KMeansConfig::default()).unwrap();
        assert_eq!(m.inertia, 1.0);
        let mut cs: Vec<[f64; 2]> = (0..2).map(|c| [m.centroids.get(c, 0), m.centroids.get(c, 1)]).collect();
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(cs, vec![[0.0, 0.5], [10.0, 0.5]]);
        assert_eq!(m.labels[0], m.labels[1]);
        assert_ne!(m.labels[0], m.labels[2]);
    }

    #[test]
    fn n_equals_k() {
        let p = pts(&[[1.0, 2.0], [-3.0, 4.0]]);
        let m = kmeans_fit(&p, &KMeansConfig::default()).unwrap();
        assert_eq!(m.inertia, 0.0);
        assert_ne!(m.labels[0], m.labels[1]);
    }

    #[test]
    fn identical_points_leave_cluster_empty() {
        let p = pts(&[[1.0, 1.0]; 5]);
        let m = kmeans_fit(&p, &KMeansConfig { n_init: 3, ..Default::default() }).unwrap();
        assert_eq!(m.inertia, 0.0);
        assert!(m.labels.iter().all(|&l| l == m.labels[0]));
    }

    #[test]
    fn errors() {
        let p = pts(&[[1.0, 1.0]]);
        assert!(matches!(kmeans_fit(&p, &KMeansConfig::default()), Err(Error::Input(_))));
        let p = pts(&[[1.0, f64::NAN], [0.0, 0.0]]);
        assert!(matches!(kmeans_fit(&p, &KMeansConfig::default()), Err(Error::Input(_))));
    }

    #[test]
    fn parallel_equals_sequential() {
        let mut rng = SplitMix64::new(99);
        let rows: Vec<[f64; 2]> = (0..500).map(|_| [rng.normal() * 3.0, rng.normal()]).collect();
        let p = pts(&rows);
        let cfg = KMeansConfig { k: 3, n_init: 20, seed: 4, ..Default::default() };
        let a = kmeans_fit(&p, &cfg).unwrap();
        let b = kmeans_fit_sequential(&p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
        assert!((inertia_of(&p, &a.centroids, &a.labels) - a.inertia).abs() < 1e-9);
    }

    #[test]
    fn single_precision_clusters() {
        let p = Matrix::from_rows(&[[0.0f32, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap();
        let m = kmeans_fit(&p, &KMeansConfig::default()).unwrap();
        assert_eq!(m.inertia, 1.0f32);
    }
}
