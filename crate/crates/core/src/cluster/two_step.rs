//! Two-step procedures: an over-segmenting first pass whose groups are then
//! consolidated.

use serde::{Deserialize, Serialize};

use super::{
    affinity_propagation, cut_tree, gmm_fit, hierarchical, tskmeans_dba, ApParams, ClusterError, ClusteringResult,
    GmmModel, GmmParams, Linkage, MethodInfo,
};
use crate::distance::{pairwise_condensed, sbd_similarity, Metric, SeriesMatrix};

/// Affinity propagation on `-SBD`, then average-linkage clustering of the
/// exemplar series (under SBD) cut to `target_k`. Every series inherits the
/// final label of its exemplar. A non-converged first pass is used as is
/// and flagged in the method parameters.
pub fn two_step_ap_hc(data: &SeriesMatrix, target_k: usize, ap: &ApParams) -> Result<ClusteringResult, ClusterError> {
    if target_k == 0 {
        return Err(ClusterError::InvalidParameter("target_k must be at least 1".into()));
    }
    let sim = sbd_similarity(data)?;
    let first = match affinity_propagation(&sim, ap) {
        Ok(o) => o,
        Err(ClusterError::NonConvergence { partial, .. }) => *partial,
        Err(e) => return Err(e),
    };
    let m = first.exemplars.len();
    if target_k > m {
        return Err(ClusterError::TargetTooLarge {
            target: target_k,
            available: m,
        });
    }
    let exemplar_labels = if m == 1 {
        vec![0]
    } else {
        let exemplar_rows = data.subset(&first.exemplars);
        let cond = pairwise_condensed(&exemplar_rows, Metric::Sbd, None)?;
        cut_tree(&hierarchical(&cond, Linkage::Average)?, target_k)?.labels
    };
    let labels = first.result.labels.iter().map(|&c| exemplar_labels[c]).collect();
    Ok(ClusteringResult::new(
        MethodInfo::new("sbd-ap-hc")
            .with("first_pass_clusters", m)
            .with("target_k", target_k)
            .with("damping", ap.damping)
            .with("preference", first.preference)
            .with("converged", first.converged),
        labels,
        target_k,
        ap.seed,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStepGmmParams {
    /// Cluster count of the k-means pass; `None` runs it at the final `k`.
    /// When larger than `k`, the barycenters are merged down to `k` by
    /// average linkage on DTW before the mixture is fitted.
    pub initial_k: Option<usize>,
    pub kmeans_max_iter: usize,
    pub gmm: GmmParams,
}

impl Default for TwoStepGmmParams {
    fn default() -> Self {
        Self {
            initial_k: None,
            kmeans_max_iter: 50,
            gmm: GmmParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStepGmmOutcome {
    pub result: ClusteringResult,
    /// The k-means pass before consolidation.
    pub kmeans: ClusteringResult,
    /// Labels the mixture was initialized from.
    pub init_labels: Vec<usize>,
    pub model: GmmModel,
}

/// DTW k-means with DBA barycenters, then a diagonal Gaussian mixture
/// initialized one-hot from the k-means labels.
pub fn two_step_kmeans_gmm(
    data: &SeriesMatrix,
    k: usize,
    seed: u64,
    params: &TwoStepGmmParams,
) -> Result<TwoStepGmmOutcome, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidParameter("k must be at least 1".into()));
    }
    let first_k = params.initial_k.unwrap_or(k);
    if first_k < k {
        return Err(ClusterError::InvalidParameter(format!(
            "initial_k {first_k} is below the final k {k}"
        )));
    }
    let km = tskmeans_dba(data, first_k, seed, params.kmeans_max_iter)?;
    let kmeans = km.result;
    let init_labels = if first_k == k {
        kmeans.labels.clone()
    } else {
        consolidate(&kmeans, k)?
    };
    let (model, mut result) = gmm_fit(data, k, &init_labels, &params.gmm, seed)?;
    let mut method = MethodInfo::new("dba-gmm").with("k", k);
    if let Some(m) = params.initial_k {
        method = method.with("initial_k", m).with("first_pass_clusters", kmeans.k_actual);
    }
    result.method = method
        .with("kmeans_max_iter", params.kmeans_max_iter)
        .with("var_floor", params.gmm.var_floor)
        .with("gmm_iterations", model.iterations);
    Ok(TwoStepGmmOutcome {
        result,
        kmeans,
        init_labels,
        model,
    })
}

/// Merges the occupied k-means clusters down to `k` groups by average
/// linkage on DTW between their barycenters.
fn consolidate(kmeans: &ClusteringResult, k: usize) -> Result<Vec<usize>, ClusterError> {
    let centroids = kmeans.centroids.as_ref().expect("k-means result carries centroids");
    let occupied: Vec<usize> = (0..kmeans.k_requested).filter(|&c| kmeans.labels.contains(&c)).collect();
    if occupied.len() < k {
        return Err(ClusterError::TargetTooLarge {
            target: k,
            available: occupied.len(),
        });
    }
    let rows = SeriesMatrix::from_rows(occupied.iter().map(|&c| centroids[c].clone()).collect())?;
    let merged = if occupied.len() == 1 {
        vec![0]
    } else {
        let cond = pairwise_condensed(&rows, Metric::Dtw, None)?;
        cut_tree(&hierarchical(&cond, Linkage::Average)?, k)?.labels
    };
    let mut map = vec![0; kmeans.k_requested];
    for (slot, &c) in occupied.iter().enumerate() {
        map[c] = merged[slot];
    }
    Ok(kmeans.labels.iter().map(|&l| map[l]).collect())
}
