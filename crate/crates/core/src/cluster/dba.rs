//! DTW barycenter averaging and time-series k-means built on it.

use rand::Rng;
use rayon::prelude::*;

use super::{argmin, seeded_rng, ClusterError, ClusteringResult, MethodInfo};
use crate::distance::{dtw, dtw_path, pairwise_condensed, Metric, SeriesMatrix};

/// Stop DBA once an iteration improves the objective by less than this.
pub const DBA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DbaInit {
    /// Series with the least total squared DTW to the others.
    Medoid,
    Index(usize),
    /// Start from an arbitrary sequence (used to warm-start from a previous
    /// centroid).
    Sequence(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbaOutcome {
    pub barycenter: Vec<f64>,
    /// `sum_i dtw(x_i, barycenter)^2`, starting with the initial sequence.
    pub objective_trace: Vec<f64>,
}

fn sq_dtw(x: &[f64], y: &[f64]) -> f64 {
    dtw(x, y, None).expect("non-empty series").powi(2)
}

/// Index of the DTW medoid; ties go to the lowest index.
pub fn dtw_medoid(series: &[&[f64]]) -> usize {
    let totals: Vec<f64> = (0..series.len())
        .into_par_iter()
        .map(|i| series.iter().map(|y| sq_dtw(series[i], y)).sum())
        .collect();
    argmin(totals).map_or(0, |(i, _)| i)
}

fn objective(series: &[&[f64]], center: &[f64]) -> f64 {
    series.par_iter().map(|x| sq_dtw(x, center)).collect::<Vec<_>>().iter().sum()
}

pub fn dba(series: &[&[f64]], init: DbaInit, max_iter: usize) -> Result<DbaOutcome, ClusterError> {
    if series.is_empty() {
        return Err(ClusterError::TooFewPoints { needed: 1, got: 0 });
    }
    if series.iter().any(|s| s.is_empty()) {
        return Err(crate::distance::DistanceError::EmptySeries.into());
    }
    let mut center = match init {
        DbaInit::Medoid => series[dtw_medoid(series)].to_vec(),
        DbaInit::Index(i) if i < series.len() => series[i].to_vec(),
        DbaInit::Index(i) => return Err(ClusterError::InvalidParameter(format!("init index {i} out of range"))),
        DbaInit::Sequence(s) if !s.is_empty() => s,
        DbaInit::Sequence(_) => return Err(crate::distance::DistanceError::EmptySeries.into()),
    };
    let mut current = objective(series, &center);
    let mut trace = vec![current];
    for _ in 0..max_iter {
        let paths: Vec<Vec<(usize, usize)>> = series
            .par_iter()
            .map(|x| dtw_path(&center, x, None).expect("non-empty series").1)
            .collect();
        let mut sums = vec![0.0; center.len()];
        let mut counts = vec![0usize; center.len()];
        for (x, path) in series.iter().zip(&paths) {
            for &(b, i) in path {
                sums[b] += x[i];
                counts[b] += 1;
            }
        }
        let next: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
        let value = objective(series, &next);
        if value > current {
            break;
        }
        let gain = current - value;
        center = next;
        current = value;
        trace.push(value);
        if gain < DBA_TOLERANCE {
            break;
        }
    }
    Ok(DbaOutcome {
        barycenter: center,
        objective_trace: trace,
    })
}

#[derive(Debug, Clone)]
pub struct TsKMeansOutcome {
    pub result: ClusteringResult,
    /// `sum_i dtw(x_i, c_label(i))^2` after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

const DBA_INNER_ITER: usize = 30;

/// Greedy k-means++ seeding on squared DTW. The first center is the DTW
/// medoid of the whole set; each later center is the best of
/// `2 + ln k` candidates drawn proportionally to the squared distance to
/// the nearest chosen center, judged by the potential it leaves.
fn seed_centers(data: &SeriesMatrix, k: usize, seed: u64) -> Vec<usize> {
    let n = data.n();
    let d = pairwise_condensed(data, Metric::Dtw, None).expect("validated matrix");
    let sq = |i: usize, j: usize| d.get(i, j).powi(2);
    let totals: Vec<f64> = (0..n).map(|i| (0..n).map(|j| sq(i, j)).sum()).collect();
    let mut centers = vec![argmin(totals).map_or(0, |(i, _)| i)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(i, centers[0])).collect();
    let mut rng = seeded_rng(seed, 0);
    let trials = 2 + (k as f64).ln() as usize;
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let candidates: Vec<usize> = if total > 0.0 {
            (0..trials).map(|_| sample_weighted(&nearest, rng.random::<f64>() * total)).collect()
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !centers.contains(i)).collect();
            vec![free[rng.random_range(0..free.len())]]
        };
        let potential = |c: usize| (0..n).map(|i| nearest[i].min(sq(i, c))).sum::<f64>();
        let (best, _) = argmin(candidates.iter().map(|&c| potential(c))).expect("at least one candidate");
        let pick = candidates[best];
        centers.push(pick);
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(sq(i, pick));
        }
    }
    centers
}

/// Index whose cumulative weight first exceeds `target`, skipping
/// zero-weight entries.
fn sample_weighted(weights: &[f64], mut target: f64) -> usize {
    let mut chosen = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            chosen = Some(i);
            if target < w {
                break;
            }
            target -= w;
        }
    }
    chosen.expect("positive total weight")
}

fn assign(data: &SeriesMatrix, centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    (0..data.n())
        .into_par_iter()
        .map(|i| argmin(centroids.iter().map(|c| sq_dtw(data.row(i), c))).expect("k >= 1"))
        .unzip()
}

/// k-means with DTW assignment and DBA centroid updates. Empty clusters are
/// re-seeded with the worst-fitting series.
pub fn tskmeans_dba(data: &SeriesMatrix, k: usize, seed: u64, max_iter: usize) -> Result<TsKMeansOutcome, ClusterError> {
    let n = data.n();
    if k == 0 {
        return Err(ClusterError::InvalidParameter("k must be at least 1".into()));
    }
    if n < k.max(2) {
        return Err(ClusterError::TooFewPoints { needed: k.max(2), got: n });
    }
    let mut centroids: Vec<Vec<f64>> = seed_centers(data, k, seed).into_iter().map(|i| data.row(i).to_vec()).collect();
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        iterations += 1;
        let (mut next, mut cost) = assign(data, &centroids);
        reseed_empty(data, k, &mut next, &mut cost, &mut centroids);
        trace.push(cost.iter().sum::<f64>());
        if next == labels {
            break;
        }
        labels = next;
        let updated: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                let members: Vec<&[f64]> = (0..n).filter(|&i| labels[i] == c).map(|i| data.row(i)).collect();
                if members.is_empty() {
                    return Ok(centroids[c].clone());
                }
                dba(&members, DbaInit::Sequence(centroids[c].clone()), DBA_INNER_ITER).map(|o| o.barycenter)
            })
            .collect::<Result<_, _>>()?;
        centroids = updated;
    }
    let mut result = ClusteringResult::new(
        MethodInfo::new("tskmeans-dba").with("k", k).with("max_iter", max_iter),
        labels,
        k,
        seed,
    );
    result.centroids = Some(centroids);
    Ok(TsKMeansOutcome {
        result,
        inertia_trace: trace,
        iterations,
    })
}

fn reseed_empty(data: &SeriesMatrix, k: usize, labels: &mut [usize], cost: &mut [f64], centroids: &mut [Vec<f64>]) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let worst = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if cost[b] >= cost[i] => Some(b),
                _ => Some(i),
            });
        let Some(p) = worst else { return };
        centroids[empty] = data.row(p).to_vec();
        labels[p] = empty;
        cost[p] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::shape_recovery_set;

    #[test]
    fn one_series_is_its_own_barycenter() {
        let x = [0.5, 1.5, -2.0];
        let out = dba(&[&x], DbaInit::Medoid, 30).unwrap();
        assert_eq!(out.barycenter, x.to_vec());
        assert_eq!(out.objective_trace[0], 0.0);
        let twice = dba(&[&x, &x], DbaInit::Medoid, 30).unwrap();
        assert_eq!(twice.barycenter, x.to_vec());
        assert_eq!(*twice.objective_trace.last().unwrap(), 0.0);
    }

    #[test]
    fn constant_series_average_to_the_middle() {
        let (a, b, c) = ([0.0; 3], [1.0; 3], [2.0; 3]);
        let out = dba(&[&a, &b, &c], DbaInit::Medoid, 30).unwrap();
        assert_eq!(out.barycenter, vec![1.0; 3]);
        let from_zero = dba(&[&a, &b, &c], DbaInit::Index(0), 30).unwrap();
        for v in from_zero.barycenter {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dba_objective_never_rises() {
        let set = shape_recovery_set(6, 0.3, 8);
        let rows: Vec<&[f64]> = set.rows.iter().map(Vec::as_slice).collect();
        let out = dba(&rows, DbaInit::Index(3), 30).unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn single_cluster_centroid_is_full_barycenter() {
        let set = shape_recovery_set(5, 0.1, 3);
        let data = set.standardized();
        let out = tskmeans_dba(&data, 1, 4, 50).unwrap();
        assert!(out.result.labels.iter().all(|&l| l == 0));
        let rows: Vec<&[f64]> = data.rows().collect();
        let full = dba(&rows, DbaInit::Medoid, DBA_INNER_ITER).unwrap();
        assert_eq!(out.result.centroids.unwrap()[0], full.barycenter);
    }

    #[test]
    fn inertia_is_monotone_and_shapes_recovered() {
        let set = shape_recovery_set(20, 0.05, 21);
        let data = set.standardized();
        let out = tskmeans_dba(&data, 3, 5, 50).unwrap();
        for w in out.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", out.inertia_trace);
        }
        let ari = crate::validate::adjusted_rand(&out.result.labels, &set.truth);
        assert!(ari >= 0.9, "ari {ari}");
    }

    #[test]
    fn empty_clusters_get_reseeded() {
        // three identical rows leave a center with no unique members
        let rows = vec![vec![0., 0., 0.], vec![0., 0., 0.], vec![0., 0., 0.], vec![5., 5., 5.]];
        let data = SeriesMatrix::from_rows(rows).unwrap();
        let out = tskmeans_dba(&data, 3, 0, 10).unwrap();
        assert_eq!(out.result.k_actual, 3);
    }
}
