//! Diagonal-covariance Gaussian mixture fitted by EM from a hard partition.

use serde::{Deserialize, Serialize};

use super::{ClusterError, ClusteringResult, MethodInfo};
use crate::distance::SeriesMatrix;

/// Components whose weight falls below this are dropped.
const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmParams {
    /// Lower bound on every per-dimension variance.
    pub var_floor: f64,
    pub max_iter: usize,
    /// Stop when the mean log-likelihood improves by less than this.
    pub tol: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            var_floor: 1e-6,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// Mean per-point log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
    /// False for components removed during fitting.
    pub active: Vec<bool>,
    pub iterations: usize,
}

fn log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((xi, m), v)| -0.5 * (ln_2pi + v.ln() + (xi - m).powi(2) / v))
        .sum()
}

impl GmmModel {
    /// Responsibilities for one point plus its log-likelihood. Inactive
    /// components get probability zero.
    pub fn posterior(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let logs: Vec<f64> = (0..self.k)
            .map(|c| {
                if self.active[c] {
                    self.weights[c].ln() + log_density(x, &self.means[c], &self.variances[c])
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        let lse = top + sum.ln();
        (logs.iter().map(|l| (l - lse).exp()).collect(), lse)
    }

    fn m_step(&mut self, data: &SeriesMatrix, resp: &[Vec<f64>], var_floor: f64) {
        let n = data.n() as f64;
        let dim = data.len();
        for c in 0..self.k {
            if !self.active[c] {
                continue;
            }
            let mass: f64 = resp.iter().map(|r| r[c]).sum();
            let weight = mass / n;
            if weight < MIN_WEIGHT {
                self.active[c] = false;
                self.weights[c] = 0.0;
                continue;
            }
            let mut mean = vec![0.0; dim];
            for (x, r) in data.rows().zip(resp) {
                for (m, xi) in mean.iter_mut().zip(x) {
                    *m += r[c] * xi;
                }
            }
            mean.iter_mut().for_each(|m| *m /= mass);
            let mut var = vec![0.0; dim];
            for (x, r) in data.rows().zip(resp) {
                for ((v, xi), m) in var.iter_mut().zip(x).zip(&mean) {
                    *v += r[c] * (xi - m).powi(2);
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / mass).max(var_floor));
            self.weights[c] = weight;
            self.means[c] = mean;
            self.variances[c] = var;
        }
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
    }
}

/// Fits `k` components starting from the hard partition `init_labels`.
/// Labels in the returned result are the argmax responsibilities.
pub fn gmm_fit(
    data: &SeriesMatrix,
    k: usize,
    init_labels: &[usize],
    params: &GmmParams,
    seed: u64,
) -> Result<(GmmModel, ClusteringResult), ClusterError> {
    let n = data.n();
    if k == 0 {
        return Err(ClusterError::InvalidParameter("k must be at least 1".into()));
    }
    if n == 0 {
        return Err(ClusterError::TooFewPoints { needed: 1, got: 0 });
    }
    if init_labels.len() != n {
        return Err(ClusterError::InvalidParameter(format!(
            "{} initial labels for {n} points",
            init_labels.len()
        )));
    }
    if let Some(&label) = init_labels.iter().find(|&&l| l >= k) {
        return Err(ClusterError::LabelOutOfRange { label, k });
    }
    if !(params.var_floor > 0.0) {
        return Err(ClusterError::InvalidParameter("var_floor must be positive".into()));
    }
    let dim = data.len();
    let mut model = GmmModel {
        k,
        weights: vec![0.0; k],
        means: vec![vec![0.0; dim]; k],
        variances: vec![vec![1.0; dim]; k],
        log_likelihood: Vec::new(),
        active: vec![true; k],
        iterations: 0,
    };
    let mut resp: Vec<Vec<f64>> = init_labels
        .iter()
        .map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
        .collect();
    model.m_step(data, &resp, params.var_floor);

    for _ in 0..params.max_iter {
        model.iterations += 1;
        let mut ll = 0.0;
        for (x, r) in data.rows().zip(resp.iter_mut()) {
            let (post, lse) = model.posterior(x);
            *r = post;
            ll += lse;
        }
        let ll = ll / n as f64;
        let prev = model.log_likelihood.last().copied();
        model.log_likelihood.push(ll);
        model.m_step(data, &resp, params.var_floor);
        if prev.is_some_and(|p| (ll - p).abs() < params.tol) {
            break;
        }
    }

    let soft: Vec<Vec<f64>> = data.rows().map(|x| model.posterior(x).0).collect();
    let labels = soft
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0, |best, (c, &p)| if p > row[best] { c } else { best })
        })
        .collect();
    let mut result = ClusteringResult::new(
        MethodInfo::new("gmm")
            .with("k", k)
            .with("var_floor", params.var_floor)
            .with("max_iter", params.max_iter)
            .with("tol", params.tol),
        labels,
        k,
        seed,
    );
    result.centroids = Some(model.means.clone());
    result.soft = Some(soft);
    Ok((model, result))
}
