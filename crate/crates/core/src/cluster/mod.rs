//! Time-series clustering procedures.
//!
//! Every procedure returns a [`ClusteringResult`] with labels in
//! `0..k_requested`; `k_actual` counts the labels that are actually used.

mod affinity;
mod dba;
mod gmm;
mod hierarchical;
mod kshape;
mod som;
mod two_step;

pub use affinity::{affinity_propagation, ApOutcome, ApParams};
pub use dba::{dba, dtw_medoid, tskmeans_dba, DbaInit, DbaOutcome, TsKMeansOutcome, DBA_TOLERANCE};
pub use gmm::{gmm_fit, GmmModel, GmmParams};
pub use hierarchical::{cut_height, cut_tree, hierarchical, maxclust_labels, Dendrogram, Linkage, Merge};
pub use kshape::{check_z_normalized, kshape, shape_extraction, shape_objective, KShapeOutcome};
pub use som::{som_assign, som_train, SomGrid, SomParams, FINAL_LEARNING_RATE, FINAL_RADIUS};
pub use two_step::{two_step_ap_hc, two_step_kmeans_gmm, TwoStepGmmOutcome, TwoStepGmmParams};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::DistanceError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("row {row} is not z-normalized")]
    NotZNormalized { row: usize },
    #[error("similarity matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("affinity propagation did not converge in {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        partial: Box<ApOutcome>,
    },
    #[error("target of {target} clusters exceeds the {available} available")]
    TargetTooLarge { target: usize, available: usize },
    #[error("initial label {label} out of range for k = {k}")]
    LabelOutOfRange { label: usize, k: usize },
}

/// Method name plus the parameters it ran with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub name: String,
    pub params: BTreeMap<String, serde_json::Value>,
}

impl MethodInfo {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub method: MethodInfo,
    pub labels: Vec<usize>,
    pub k_requested: usize,
    pub k_actual: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<Vec<Vec<f64>>>,
    /// Per-point membership probabilities, `n × k_requested`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

pub fn count_distinct(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Renumbers labels `0..` in order of first appearance.
pub fn relabel_by_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

impl ClusteringResult {
    pub fn new(method: MethodInfo, labels: Vec<usize>, k_requested: usize, seed: u64) -> Self {
        debug_assert!(labels.iter().all(|&l| l < k_requested.max(1)));
        let k_actual = count_distinct(&labels);
        Self {
            method,
            labels,
            k_requested,
            k_actual,
            centroids: None,
            soft: None,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Sizes of all `k_requested` clusters, empty ones included.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k_requested];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Sizes of the non-empty clusters, by label.
    pub fn occupied_sizes(&self) -> Vec<usize> {
        self.sizes().into_iter().filter(|&s| s > 0).collect()
    }

    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Same partition with labels renumbered `0..k_actual` by first
    /// appearance. Centroids and soft columns are dropped since their
    /// indexing would no longer match.
    pub fn compacted(&self) -> Self {
        let labels = relabel_by_appearance(&self.labels);
        let k = self.k_actual;
        Self {
            method: self.method.clone(),
            labels,
            k_requested: k,
            k_actual: k,
            centroids: None,
            soft: None,
            seed: self.seed,
        }
    }
}

/// Seeded generator; `stream` selects an independent sequence so that
/// separate phases never share draws.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    values
        .into_iter()
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            Some((_, b)) if v >= b => best,
            _ if v.is_nan() => best,
            _ => Some((i, v)),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn result_bookkeeping() {
        let r = ClusteringResult::new(MethodInfo::new("x"), vec![3, 3, 1, 0], 5, 7);
        assert_eq!(r.k_actual, 3);
        assert_eq!(r.sizes(), vec![1, 1, 0, 2, 0]);
        assert_eq!(r.occupied_sizes(), vec![1, 1, 2]);
        assert_eq!(r.members(3), vec![0, 1]);
        let c = r.compacted();
        assert_eq!(c.labels, vec![0, 0, 1, 2]);
        assert_eq!((c.k_requested, c.k_actual), (3, 3));
    }

    #[test]
    fn argmin_prefers_first() {
        assert_eq!(argmin([2.0, 1.0, 1.0]), Some((1, 1.0)));
        assert_eq!(argmin([f64::NAN, 3.0]), Some((1, 3.0)));
        assert_eq!(argmin(Vec::<f64>::new()), None);
    }
}
