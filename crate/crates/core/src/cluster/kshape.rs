//! k-Shape: centroid clustering under shape-based distance.
//!
//! Centroids come from shape extraction, the leading eigenvector of
//! `Q^T S Q` where `S` sums the outer products of the cluster's members
//! (each aligned to the current centroid) and `Q` centers a vector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use super::{argmin, seeded_rng, ClusterError, ClusteringResult, MethodInfo};
use crate::distance::{sbd_align, SeriesMatrix};
use crate::shares::z_normalize;

const Z_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct KShapeOutcome {
    pub result: ClusteringResult,
    pub iterations: usize,
    pub converged: bool,
}

/// Rows must be z-normalized (mean 0, population sd 1) or all zero.
pub fn check_z_normalized(data: &SeriesMatrix) -> Result<(), ClusterError> {
    for (i, row) in data.rows().enumerate() {
        if row.iter().all(|v| v.abs() < Z_TOL) {
            continue;
        }
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if mean.abs() > Z_TOL || (sd - 1.0).abs() > Z_TOL {
            return Err(ClusterError::NotZNormalized { row: i });
        }
    }
    Ok(())
}

fn is_zero(x: &[f64]) -> bool {
    x.iter().all(|v| *v == 0.0)
}

/// SBD with the conventions k-Shape needs: a zero centroid (empty cluster)
/// attracts nothing and a zero series is uncorrelated with everything.
fn shape_distance(centroid: &[f64], x: &[f64]) -> f64 {
    if is_zero(centroid) {
        return f64::INFINITY;
    }
    if is_zero(x) {
        return 1.0;
    }
    sbd_align(centroid, x).map(|(d, _)| d).unwrap_or(1.0)
}

/// New centroid for `members`, aligned against `reference` unless the
/// reference is all zeros. Returns zeros for an empty member set.
pub fn shape_extraction(members: &[&[f64]], reference: &[f64]) -> Vec<f64> {
    let t = reference.len();
    if members.is_empty() {
        return vec![0.0; t];
    }
    let aligned: Vec<Vec<f64>> = members
        .iter()
        .map(|x| {
            if is_zero(reference) || is_zero(x) {
                x.to_vec()
            } else {
                sbd_align(reference, x).map(|(_, a)| a).unwrap_or_else(|_| x.to_vec())
            }
        })
        .collect();
    let mut s = DMatrix::<f64>::zeros(t, t);
    for a in &aligned {
        let v = DVector::from_column_slice(a);
        s += &v * v.transpose();
    }
    let q = DMatrix::<f64>::identity(t, t) - DMatrix::<f64>::from_element(t, t, 1.0 / t as f64);
    let m = q.transpose() * s * &q;
    let eig = SymmetricEigen::new(m);
    let lead = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > eig.eigenvalues[best] { i } else { best });
    let mut v: Vec<f64> = eig.eigenvectors.column(lead).iter().copied().collect();

    let agreement: f64 = aligned
        .iter()
        .map(|a| a.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    if agreement < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    z_normalize(&v)
}

/// Best of `n_init` seeded runs by total shape distance to the assigned
/// centroids. Each run starts from random labels and zero centroids and
/// alternates shape extraction with reassignment until the labels stop
/// changing or `max_iter` is reached.
pub fn kshape(data: &SeriesMatrix, k: usize, seed: u64, max_iter: usize, n_init: usize) -> Result<KShapeOutcome, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidParameter("k must be at least 1".into()));
    }
    if n_init == 0 {
        return Err(ClusterError::InvalidParameter("n_init must be at least 1".into()));
    }
    if data.n() < k {
        return Err(ClusterError::TooFewPoints { needed: k, got: data.n() });
    }
    check_z_normalized(data)?;
    let mut best: Option<(f64, KShapeOutcome)> = None;
    for run in 0..n_init {
        let (labels, centroids, iterations, converged) = single_run(data, k, seed, run as u64, max_iter);
        let objective = shape_objective(data, &centroids, &labels);
        if best.as_ref().is_none_or(|(b, _)| objective < *b) {
            let mut result = ClusteringResult::new(
                MethodInfo::new("kshape")
                    .with("k", k)
                    .with("max_iter", max_iter)
                    .with("n_init", n_init),
                labels,
                k,
                seed,
            );
            result.centroids = Some(centroids);
            let outcome = KShapeOutcome {
                result,
                iterations,
                converged,
            };
            best = Some((objective, outcome));
        }
    }
    Ok(best.expect("n_init >= 1").1)
}

fn single_run(data: &SeriesMatrix, k: usize, seed: u64, run: u64, max_iter: usize) -> (Vec<usize>, Vec<Vec<f64>>, usize, bool) {
    let n = data.n();
    let mut rng = seeded_rng(seed, run);
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let mut centroids = vec![vec![0.0; data.len()]; k];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64]> = (0..n).filter(|&i| labels[i] == c).map(|i| data.row(i)).collect();
            *centroid = shape_extraction(&members, centroid);
        }
        let next = assign(data, &centroids);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    (labels, centroids, iterations, converged)
}

fn assign(data: &SeriesMatrix, centroids: &[Vec<f64>]) -> Vec<usize> {
    use rayon::prelude::*;
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            argmin(centroids.iter().map(|c| shape_distance(c, data.row(i))))
                .map(|(j, _)| j)
                .unwrap_or(0)
        })
        .collect()
}

/// Sum of shape distances of each series to its labelled centroid.
pub fn shape_objective(data: &SeriesMatrix, centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| shape_distance(&centroids[l], data.row(i)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::shape_recovery_set;

    #[test]
    fn rejects_unnormalized_rows() {
        let data = SeriesMatrix::from_rows(vec![vec![1., 2., 3.], vec![0., 0., 0.]]).unwrap();
        assert!(matches!(kshape(&data, 1, 0, 10, 1), Err(ClusterError::NotZNormalized { row: 0 })));
    }

    #[test]
    fn single_cluster_gets_extracted_shape() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| z_normalize(&(0..10).map(|t| (t as f64) + 0.1 * ((i * t) % 3) as f64).collect::<Vec<_>>()))
            .collect();
        let data = SeriesMatrix::from_rows(rows).unwrap();
        let out = kshape(&data, 1, 3, 100, 1).unwrap();
        assert!(out.result.labels.iter().all(|&l| l == 0));
        let c = &out.result.centroids.as_ref().unwrap()[0];
        // rising members give a rising centroid
        assert!(c[9] > c[0]);
        assert!(out.converged);
    }

    #[test]
    fn recovers_three_shapes() {
        let set = shape_recovery_set(20, 0.05, 11);
        let data = set.standardized();
        let out = kshape(&data, 3, 7, 100, 10).unwrap();
        let ari = crate::validate::adjusted_rand(&out.result.labels, &set.truth);
        assert!(ari >= 0.9, "ari {ari}");
    }

    #[test]
    fn single_pattern_leaves_clusters_empty() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| z_normalize(&(0..19).map(|t| t as f64 + 0.01 * (((i * 7 + t * 3) % 5) as f64)).collect::<Vec<_>>()))
            .collect();
        let data = SeriesMatrix::from_rows(rows).unwrap();
        let out = kshape(&data, 10, 1, 100, 1).unwrap();
        assert!(out.result.k_actual < 10, "k_actual {}", out.result.k_actual);
    }

    #[test]
    fn assignment_never_increases_objective() {
        let set = shape_recovery_set(10, 0.2, 5);
        let data = set.standardized();
        let mut rng = seeded_rng(9, 1);
        for _ in 0..5 {
            let labels: Vec<usize> = (0..data.n()).map(|_| rng.random_range(0..4)).collect();
            let centroids: Vec<Vec<f64>> = (0..4)
                .map(|c| {
                    let m: Vec<&[f64]> = (0..data.n()).filter(|&i| labels[i] == c).map(|i| data.row(i)).collect();
                    shape_extraction(&m, &vec![0.0; data.len()])
                })
                .collect();
            let before = shape_objective(&data, &centroids, &labels);
            let after = shape_objective(&data, &centroids, &assign(&data, &centroids));
            assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let set = shape_recovery_set(8, 0.3, 2);
        let data = set.standardized();
        let a = kshape(&data, 4, 42, 50, 3).unwrap();
        let b = kshape(&data, 4, 42, 50, 3).unwrap();
        assert_eq!(a.result, b.result);
    }
}
