//! Affinity propagation by damped responsibility/availability messages.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, ClusterError, ClusteringResult, MethodInfo};
use crate::distance::SquareMatrix;

const TIE_NOISE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApParams {
    pub damping: f64,
    /// Self-similarity; `None` uses the median off-diagonal similarity.
    pub preference: Option<f64>,
    pub max_iter: usize,
    pub convergence_iter: usize,
    pub seed: u64,
}

impl Default for ApParams {
    fn default() -> Self {
        Self {
            damping: 0.9,
            preference: None,
            max_iter: 1000,
            convergence_iter: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApOutcome {
    pub result: ClusteringResult,
    /// Exemplar point indices; cluster `c` is represented by `exemplars[c]`.
    pub exemplars: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub preference: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

pub fn affinity_propagation(similarity: &SquareMatrix, params: &ApParams) -> Result<ApOutcome, ClusterError> {
    let n = similarity.n();
    if n < 2 {
        return Err(ClusterError::TooFewPoints { needed: 2, got: n });
    }
    if !(0.5..1.0).contains(&params.damping) {
        return Err(ClusterError::InvalidParameter(format!(
            "damping {} outside [0.5, 1)",
            params.damping
        )));
    }
    if params.convergence_iter == 0 {
        return Err(ClusterError::InvalidParameter("convergence_iter must be positive".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (similarity.get(i, j), similarity.get(j, i));
            if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                return Err(ClusterError::NotSymmetric(i, j));
            }
        }
    }

    let preference = params.preference.unwrap_or_else(|| {
        median(
            (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| similarity.get(i, j))
                .collect(),
        )
    });
    let mut s = similarity.clone();
    let mut rng = seeded_rng(params.seed, 0);
    for i in 0..n {
        for j in 0..n {
            let base = if i == j { preference } else { s.get(i, j) };
            let noise: f64 = StandardNormal.sample(&mut rng);
            s.set(i, j, base + TIE_NOISE * noise);
        }
    }

    let damp = params.damping;
    let mut r = SquareMatrix::zeros(n);
    let mut a = SquareMatrix::zeros(n);
    let mut exemplar_mask = vec![false; n];
    let mut stable_for = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..params.max_iter {
        iterations = it + 1;
        // responsibilities
        for i in 0..n {
            let (mut first, mut first_k, mut second) = (f64::NEG_INFINITY, 0, f64::NEG_INFINITY);
            for k in 0..n {
                let v = a.get(i, k) + s.get(i, k);
                if v > first {
                    second = first;
                    first = v;
                    first_k = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == first_k { second } else { first };
                let new = s.get(i, k) - competitor;
                r.set(i, k, damp * r.get(i, k) + (1.0 - damp) * new);
            }
        }
        // availabilities
        for k in 0..n {
            let col_pos: f64 = (0..n)
                .map(|i| if i == k { r.get(k, k) } else { r.get(i, k).max(0.0) })
                .sum();
            for i in 0..n {
                let own = if i == k { r.get(k, k) } else { r.get(i, k).max(0.0) };
                let mut new = col_pos - own;
                if i != k {
                    new = new.min(0.0);
                }
                a.set(i, k, damp * a.get(i, k) + (1.0 - damp) * new);
            }
        }

        let mask: Vec<bool> = (0..n).map(|k| a.get(k, k) + r.get(k, k) > 0.0).collect();
        if mask == exemplar_mask {
            stable_for += 1;
        } else {
            stable_for = 1;
            exemplar_mask = mask;
        }
        if stable_for >= params.convergence_iter && exemplar_mask.iter().any(|&e| e) {
            converged = true;
            break;
        }
    }

    let mut exemplars: Vec<usize> = (0..n).filter(|&k| exemplar_mask[k]).collect();
    if exemplars.is_empty() {
        let best = (0..n)
            .max_by(|&x, &y| (a.get(x, x) + r.get(x, x)).total_cmp(&(a.get(y, y) + r.get(y, y))).then(y.cmp(&x)))
            .unwrap_or(0);
        exemplars.push(best);
    }
    let labels = (0..n)
        .map(|i| {
            if let Some(c) = exemplars.iter().position(|&e| e == i) {
                return c;
            }
            let mut best = 0;
            for (c, &e) in exemplars.iter().enumerate() {
                if s.get(i, e) > s.get(i, exemplars[best]) {
                    best = c;
                }
            }
            best
        })
        .collect();
    let k = exemplars.len();
    let result = ClusteringResult::new(
        MethodInfo::new("affinity-propagation")
            .with("damping", params.damping)
            .with("preference", preference)
            .with("max_iter", params.max_iter)
            .with("convergence_iter", params.convergence_iter)
            .with("converged", converged),
        labels,
        k,
        params.seed,
    );
    let outcome = ApOutcome {
        result,
        exemplars,
        iterations,
        converged,
        preference,
    };
    if converged {
        Ok(outcome)
    } else {
        Err(ClusterError::NonConvergence {
            iterations,
            partial: Box::new(outcome),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg_sq(points: &[f64]) -> SquareMatrix {
        SquareMatrix::from_fn(points.len(), |i, j| -(points[i] - points[j]).powi(2))
    }

    /// Net similarity of an exemplar set: every point joins its most
    /// similar exemplar, exemplars pay the preference.
    fn net_similarity(s: &SquareMatrix, pref: f64, ex: &[usize]) -> f64 {
        (0..s.n())
            .map(|i| {
                if ex.contains(&i) {
                    pref
                } else {
                    ex.iter().map(|&e| s.get(i, e)).fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .sum()
    }

    fn brute_force_best(s: &SquareMatrix, pref: f64) -> Vec<usize> {
        let n = s.n();
        let mut best = (f64::NEG_INFINITY, vec![]);
        for a in 0..n {
            let v = net_similarity(s, pref, &[a]);
            if v > best.0 {
                best = (v, vec![a]);
            }
            for b in a + 1..n {
                let v = net_similarity(s, pref, &[a, b]);
                if v > best.0 {
                    best = (v, vec![a, b]);
                }
            }
        }
        best.1
    }

    const TWO_GROUPS: [f64; 6] = [0.0, 0.3, 0.5, 10.0, 10.2, 10.6];

    #[test]
    fn two_groups_give_two_optimal_exemplars() {
        let s = neg_sq(&TWO_GROUPS);
        let out = affinity_propagation(&s, &ApParams::default()).unwrap();
        assert_eq!(out.exemplars.len(), 2);
        assert_eq!(out.result.labels, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(out.exemplars, brute_force_best(&s, out.preference));
    }

    #[test]
    fn very_low_preference_gives_one_cluster() {
        let s = neg_sq(&TWO_GROUPS);
        let p = ApParams {
            preference: Some(-1e6),
            ..Default::default()
        };
        let out = affinity_propagation(&s, &p).unwrap();
        assert_eq!(out.result.k_actual, 1);
    }

    #[test]
    fn preference_defaults_to_median() {
        let s = neg_sq(&[0.0, 1.0, 3.0]);
        // off-diagonal values -1, -9, -4 each twice
        let out = affinity_propagation(&s, &ApParams::default()).unwrap();
        assert_eq!(out.preference, -4.0);
    }

    #[test]
    fn parameter_validation() {
        let s = neg_sq(&TWO_GROUPS);
        let bad = ApParams {
            damping: 0.3,
            ..Default::default()
        };
        assert!(matches!(affinity_propagation(&s, &bad), Err(ClusterError::InvalidParameter(_))));
        let mut asym = s.clone();
        asym.set(0, 1, -50.0);
        assert!(matches!(
            affinity_propagation(&asym, &ApParams::default()),
            Err(ClusterError::NotSymmetric(0, 1))
        ));
    }

    #[test]
    fn non_convergence_reports_partial() {
        let s = neg_sq(&TWO_GROUPS);
        let p = ApParams {
            max_iter: 3,
            ..Default::default()
        };
        match affinity_propagation(&s, &p) {
            Err(ClusterError::NonConvergence { iterations, partial }) => {
                assert_eq!(iterations, 3);
                assert!(!partial.converged);
                assert_eq!(partial.result.labels.len(), 6);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
