//! Agglomerative clustering over a condensed distance matrix.
//!
//! Distances are updated with the Lance–Williams recurrence. For Ward the
//! recurrence runs on unsquared distances, so merge heights equal
//! `sqrt(2 * increase in within-cluster sum of squares)`.

use serde::{Deserialize, Serialize};

use super::{relabel_by_appearance, ClusterError, ClusteringResult, MethodInfo};
use crate::distance::{condensed_index, CondensedDistanceMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Ward,
    Average,
}

impl Linkage {
    /// Distance from cluster `k` to the union of `i` and `j`.
    fn update(self, d_ki: f64, d_kj: f64, d_ij: f64, n_i: f64, n_j: f64, n_k: f64) -> f64 {
        match self {
            Linkage::Average => (n_i * d_ki + n_j * d_kj) / (n_i + n_j),
            Linkage::Ward => {
                let v = ((n_i + n_k) * d_ki * d_ki + (n_j + n_k) * d_kj * d_kj - n_k * d_ij * d_ij)
                    / (n_i + n_j + n_k);
                v.max(0.0).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Merge sequence; leaves are `0..n`, the merge at step `s` creates node
/// `n + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

struct NearestNeighbors {
    nn: Vec<usize>,
    dist: Vec<f64>,
}

/// Builds the dendrogram. Among equal distances the pair with the lowest
/// (row, column) slot wins; a merged cluster keeps the lower slot.
pub fn hierarchical(condensed: &CondensedDistanceMatrix, linkage: Linkage) -> Result<Dendrogram, ClusterError> {
    let n = condensed.n();
    if n < 2 {
        return Err(ClusterError::TooFewPoints { needed: 2, got: n });
    }
    let mut d = condensed.entries().to_vec();
    let at = |i: usize, j: usize| if i < j { condensed_index(n, i, j) } else { condensed_index(n, j, i) };
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut nbr = NearestNeighbors {
        nn: vec![usize::MAX; n],
        dist: vec![f64::INFINITY; n],
    };

    let rescan = |i: usize, d: &[f64], active: &[bool], nbr: &mut NearestNeighbors| {
        nbr.nn[i] = usize::MAX;
        nbr.dist[i] = f64::INFINITY;
        for j in i + 1..n {
            if active[j] && d[condensed_index(n, i, j)] < nbr.dist[i] {
                nbr.dist[i] = d[condensed_index(n, i, j)];
                nbr.nn[i] = j;
            }
        }
    };
    for i in 0..n {
        rescan(i, &d, &active, &mut nbr);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut a = usize::MAX;
        for i in 0..n {
            if active[i] && nbr.nn[i] != usize::MAX && (a == usize::MAX || nbr.dist[i] < nbr.dist[a]) {
                a = i;
            }
        }
        let b = nbr.nn[a];
        let height = d[at(a, b)];
        merges.push(Merge {
            left: node[a].min(node[b]),
            right: node[a].max(node[b]),
            height,
            size: size[a] + size[b],
        });

        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if active[k] && k != a && k != b {
                let v = linkage.update(d[at(k, a)], d[at(k, b)], height, na, nb, size[k] as f64);
                d[at(k, a)] = v;
            }
        }
        active[b] = false;
        size[a] += size[b];
        node[a] = n + step;

        for i in 0..n {
            if !active[i] {
                continue;
            }
            if i == a || nbr.nn[i] == a || nbr.nn[i] == b {
                rescan(i, &d, &active, &mut nbr);
            } else if i < a {
                let v = d[at(i, a)];
                if v < nbr.dist[i] || (v == nbr.dist[i] && a < nbr.nn[i]) {
                    nbr.dist[i] = v;
                    nbr.nn[i] = a;
                }
            }
        }
    }
    Ok(Dendrogram { n, merges })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn labels_after(d: &Dendrogram, merges: impl Iterator<Item = usize>) -> Vec<usize> {
    let total = d.n + d.merges.len();
    let mut parent: Vec<usize> = (0..total).collect();
    for s in merges {
        let m = d.merges[s];
        let id = d.n + s;
        let l = find(&mut parent, m.left);
        let r = find(&mut parent, m.right);
        parent[l] = id;
        parent[r] = id;
    }
    let roots: Vec<usize> = (0..d.n).map(|i| find(&mut parent, i)).collect();
    relabel_by_appearance(&roots)
}

/// Labels for exactly `k` clusters: the last `k - 1` merges are undone.
pub fn maxclust_labels(d: &Dendrogram, k: usize) -> Vec<usize> {
    let k = k.clamp(1, d.n);
    labels_after(d, 0..d.n - k)
}

pub fn cut_tree(d: &Dendrogram, k: usize) -> Result<ClusteringResult, ClusterError> {
    if k == 0 || k > d.n {
        return Err(ClusterError::InvalidParameter(format!("k = {k} outside 1..={}", d.n)));
    }
    let labels = maxclust_labels(d, k);
    Ok(ClusteringResult::new(
        MethodInfo::new("hierarchical").with("cut", "maxclust").with("k", k),
        labels,
        k,
        0,
    ))
}

/// Labels from keeping only merges at or below `height`. `k_requested` is
/// carried through for reporting; the cluster count follows from the height.
pub fn cut_height(d: &Dendrogram, height: f64, k_requested: usize) -> ClusteringResult {
    let keep: Vec<usize> = (0..d.merges.len()).filter(|&s| d.merges[s].height <= height).collect();
    let labels = labels_after(d, keep.into_iter());
    let k = crate::cluster::count_distinct(&labels).max(k_requested).max(1);
    ClusteringResult::new(
        MethodInfo::new("hierarchical").with("cut", "height").with("height", height),
        labels,
        k,
        0,
    )
}
