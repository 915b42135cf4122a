//! Internal validity indices, cluster-size balance and partition agreement.
//!
//! Silhouette and Dunn work from a precomputed distance matrix; Davies-Bouldin
//! and Calinski-Harabasz need centroids and so work on the series vectors
//! in Euclidean space. Labels may be any integers; only the partition they
//! induce matters.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{CondensedDistanceMatrix, SeriesMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidateError {
    #[error("index needs at least two clusters")]
    SingleCluster,
    #[error("clusters {0} and {1} share a centroid")]
    CoincidentCentroids(usize, usize),
    #[error("every cluster has zero diameter")]
    ZeroDiameter,
    #[error("within-cluster scatter is zero")]
    ZeroWithinScatter,
    #[error("need more points ({n}) than clusters ({k})")]
    TooFewPoints { n: usize, k: usize },
    #[error("{labels} labels for {points} points")]
    LengthMismatch { labels: usize, points: usize },
}

/// Members of each non-empty cluster, ordered by label value.
fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        map.entry(l).or_default().push(i);
    }
    map.into_values().collect()
}

fn check(n: usize, labels: &[usize]) -> Result<Vec<Vec<usize>>, ValidateError> {
    if labels.len() != n {
        return Err(ValidateError::LengthMismatch {
            labels: labels.len(),
            points: n,
        });
    }
    let g = groups(labels);
    if g.len() < 2 {
        return Err(ValidateError::SingleCluster);
    }
    Ok(g)
}

/// Mean silhouette width; points in singleton clusters contribute 0.
pub fn silhouette(distances: &CondensedDistanceMatrix, labels: &[usize]) -> Result<f64, ValidateError> {
    let g = check(distances.n(), labels)?;
    let cluster_of: BTreeMap<usize, usize> = g
        .iter()
        .enumerate()
        .flat_map(|(c, m)| m.iter().map(move |&i| (i, c)))
        .collect();
    let mean_to = |i: usize, members: &[usize]| {
        let (sum, cnt) = members
            .iter()
            .filter(|&&j| j != i)
            .fold((0.0, 0usize), |(s, c), &j| (s + distances.get(i, j), c + 1));
        sum / cnt as f64
    };
    let per_point: Vec<f64> = (0..distances.n())
        .into_par_iter()
        .map(|i| {
            let own = cluster_of[&i];
            if g[own].len() == 1 {
                return 0.0;
            }
            let a = mean_to(i, &g[own]);
            let b = (0..g.len())
                .filter(|&c| c != own)
                .map(|c| mean_to(i, &g[c]))
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Ok(per_point.iter().sum::<f64>() / per_point.len() as f64)
}

fn centroid(data: &SeriesMatrix, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; data.len()];
    for &i in members {
        for (ct, v) in c.iter_mut().zip(data.row(i)) {
            *ct += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= members.len() as f64);
    c
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Davies-Bouldin index; lower is better.
pub fn davies_bouldin(data: &SeriesMatrix, labels: &[usize]) -> Result<f64, ValidateError> {
    let g = check(data.n(), labels)?;
    let centroids: Vec<Vec<f64>> = g.iter().map(|m| centroid(data, m)).collect();
    let scatter: Vec<f64> = g
        .iter()
        .zip(&centroids)
        .map(|(m, c)| m.iter().map(|&i| dist(data.row(i), c)).sum::<f64>() / m.len() as f64)
        .collect();
    let mut total = 0.0;
    for i in 0..g.len() {
        let mut worst = 0.0f64;
        for j in 0..g.len() {
            if i == j {
                continue;
            }
            let d = dist(&centroids[i], &centroids[j]);
            if d == 0.0 {
                return Err(ValidateError::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / g.len() as f64)
}

/// Smallest between-cluster single-linkage distance over the largest
/// cluster diameter; higher is better.
pub fn dunn(distances: &CondensedDistanceMatrix, labels: &[usize]) -> Result<f64, ValidateError> {
    check(distances.n(), labels)?;
    let n = distances.n();
    let mut separation = f64::INFINITY;
    let mut diameter = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d = distances.get(i, j);
            if labels[i] == labels[j] {
                diameter = diameter.max(d);
            } else {
                separation = separation.min(d);
            }
        }
    }
    if diameter == 0.0 {
        return Err(ValidateError::ZeroDiameter);
    }
    Ok(separation / diameter)
}

/// Calinski-Harabasz variance ratio; higher is better.
pub fn calinski_harabasz(data: &SeriesMatrix, labels: &[usize]) -> Result<f64, ValidateError> {
    let g = check(data.n(), labels)?;
    let (n, k) = (data.n(), g.len());
    if n <= k {
        return Err(ValidateError::TooFewPoints { n, k });
    }
    let all: Vec<usize> = (0..n).collect();
    let overall = centroid(data, &all);
    let mut between = 0.0;
    let mut within = 0.0;
    for m in &g {
        let c = centroid(data, m);
        between += m.len() as f64 * dist(&c, &overall).powi(2);
        within += m.iter().map(|&i| dist(data.row(i), &c).powi(2)).sum::<f64>();
    }
    if within == 0.0 {
        return Err(ValidateError::ZeroWithinScatter);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

/// Gini coefficient of cluster sizes: 0 for equal sizes, approaching 1 as
/// one cluster takes everything.
pub fn gini(sizes: &[usize]) -> f64 {
    if sizes.is_empty() {
        return 0.0;
    }
    let k = sizes.len() as f64;
    let mean = sizes.iter().sum::<usize>() as f64 / k;
    if mean == 0.0 {
        return 0.0;
    }
    let diffs: usize = sizes
        .iter()
        .flat_map(|&a| sizes.iter().map(move |&b| a.abs_diff(b)))
        .sum();
    diffs as f64 / (2.0 * k * k * mean)
}

fn choose2(x: usize) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same points. Two
/// trivial partitions (all together, or all apart) compare as 1.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings of different length");
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n).max(1.0);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricSpace {
    PrecomputedDistance,
    Vector,
}

/// Scores for one clustering. An index is `None` when undefined for the
/// partition (one cluster, zero diameter, and so on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
    pub dunn: Option<f64>,
    pub calinski_harabasz: Option<f64>,
    pub gini: f64,
    /// Space of Silhouette and Dunn; Davies-Bouldin and Calinski-Harabasz
    /// always use the vectors.
    pub metric_space: MetricSpace,
}

impl ValidityReport {
    pub fn compute(distances: &CondensedDistanceMatrix, data: &SeriesMatrix, labels: &[usize]) -> Self {
        let sizes: Vec<usize> = groups(labels).iter().map(Vec::len).collect();
        Self {
            silhouette: silhouette(distances, labels).ok(),
            davies_bouldin: davies_bouldin(data, labels).ok(),
            dunn: dunn(distances, labels).ok(),
            calinski_harabasz: calinski_harabasz(data, labels).ok(),
            gini: gini(&sizes),
            metric_space: MetricSpace::PrecomputedDistance,
        }
    }
}
