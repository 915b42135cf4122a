//! Time-series distance kernels and condensed pairwise matrices.
//!
//! DTW uses squared pointwise cost with a final square root, so a zero-width
//! band on equal-length inputs reduces to Euclidean distance. SBD is one minus
//! the largest coefficient-normalized cross-correlation over all lags.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shares::ODKey;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("empty series")]
    EmptySeries,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("band half-width {window} cannot reach the corner cell (length difference {diff})")]
    WindowTooNarrow { window: usize, diff: usize },
    #[error("series has zero norm")]
    ZeroNorm,
    #[error("all pairwise distances are zero")]
    DegenerateMatrix,
    #[error("need at least {needed} series, got {got}")]
    TooFewSeries { needed: usize, got: usize },
    #[error("row {row} has length {len}, expected {expected}")]
    RaggedRows { row: usize, len: usize, expected: usize },
    #[error("series must have at least 2 points")]
    SeriesTooShort,
    #[error("non-finite value in row {0}")]
    NonFinite(usize),
    #[error("sidecar: {0}")]
    Sidecar(String),
}

/// Equal-length series stacked row-wise, each row tagged with its O&D pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    keys: Vec<ODKey>,
    len: usize,
    values: Vec<f64>,
}

impl SeriesMatrix {
    pub fn new(keys: Vec<ODKey>, rows: Vec<Vec<f64>>) -> Result<Self, DistanceError> {
        assert_eq!(keys.len(), rows.len(), "one key per row");
        let len = rows.first().map_or(0, Vec::len);
        if !rows.is_empty() && len == 0 {
            return Err(DistanceError::SeriesTooShort);
        }
        let mut values = Vec::with_capacity(rows.len() * len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != len {
                return Err(DistanceError::RaggedRows {
                    row: i,
                    len: r.len(),
                    expected: len,
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(DistanceError::NonFinite(i));
            }
            values.extend_from_slice(r);
        }
        Ok(Self { keys, len, values })
    }

    /// Rows without meaningful keys, named with `S0000-T0000` style placeholders.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DistanceError> {
        let keys = (0..rows.len())
            .map(|i| ODKey::new(&format!("S{i:04}"), &format!("T{i:04}")))
            .collect();
        Self::new(keys, rows)
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    /// Series length T.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.len..(i + 1) * self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.len.max(1)).take(self.n())
    }

    pub fn keys(&self) -> &[ODKey] {
        &self.keys
    }

    /// New matrix holding the selected rows in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
            len: self.len,
            values: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    pub fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            keys: self.keys.clone(),
            len: self.len,
            values: self.rows().flat_map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dtw,
    Sbd,
    Euclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Dtw => "dtw",
            Metric::Sbd => "sbd",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = DistanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dtw" => Ok(Metric::Dtw),
            "sbd" => Ok(Metric::Sbd),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(DistanceError::Sidecar(format!("unknown metric `{other}`"))),
        }
    }
}

/// Position of pair `(i, j)`, `i < j`, in row-major upper-triangular order.
#[inline]
pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + j - i - 1
}

/// Inverse of [`condensed_index`].
pub fn condensed_pair(n: usize, idx: usize) -> (usize, usize) {
    // row i starts at i*n - i(i+1)/2; walk from an estimate to stay exact
    let mut i = {
        let nf = n as f64;
        let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * idx as f64;
        (((2.0 * nf - 1.0) - disc.max(0.0).sqrt()) / 2.0).floor().max(0.0) as usize
    };
    let start = |i: usize| i * n - i * (i + 1) / 2;
    while i > 0 && start(i) > idx {
        i -= 1;
    }
    while i + 1 < n && start(i + 1) <= idx {
        i += 1;
    }
    (i, idx - start(i) + i + 1)
}

/// Pairwise distances stored as the flat upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedDistanceMatrix {
    n: usize,
    entries: Vec<f64>,
    pub metric: Metric,
    pub normalized: bool,
}

impl CondensedDistanceMatrix {
    pub fn from_entries(n: usize, entries: Vec<f64>, metric: Metric) -> Self {
        assert_eq!(entries.len(), n * n.saturating_sub(1) / 2, "condensed length");
        Self {
            n,
            entries,
            metric,
            normalized: false,
        }
    }

    /// Builds from any symmetric distance function over indices.
    pub fn from_fn(n: usize, metric: Metric, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                entries.push(f(i, j));
            }
        }
        Self::from_entries(n, entries, metric)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Distance between `i` and `j` in either order; zero on the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.entries[condensed_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.entries[condensed_index(self.n, j, i)],
        }
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|d| d * factor).collect(),
            ..self.clone()
        }
    }

    /// Sub-matrix over the given points, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut m = Self::from_fn(idx.len(), self.metric, |a, b| self.get(idx[a], idx[b]));
        m.normalized = self.normalized;
        m
    }

    /// Text sidecar: one header line, then one entry per line.
    pub fn write_sidecar<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        writeln!(
            sink,
            "# condensed n={} metric={} normalized={}",
            self.n, self.metric, self.normalized
        )?;
        for e in &self.entries {
            writeln!(sink, "{e}")?;
        }
        Ok(())
    }

    pub fn read_sidecar<R: BufRead>(source: R) -> Result<Self, DistanceError> {
        let bad = |m: &str| DistanceError::Sidecar(m.to_string());
        let mut lines = source.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .map_err(|e| bad(&e.to_string()))?;
        let rest = header
            .strip_prefix("# condensed ")
            .ok_or_else(|| bad("bad header"))?;
        let (mut n, mut metric, mut normalized) = (None, None, None);
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("n", v)) => n = v.parse::<usize>().ok(),
                Some(("metric", v)) => metric = v.parse::<Metric>().ok(),
                Some(("normalized", v)) => normalized = v.parse::<bool>().ok(),
                _ => return Err(bad(&format!("unexpected header field `{kv}`"))),
            }
        }
        let n = n.ok_or_else(|| bad("header lacks n"))?;
        let mut entries = Vec::new();
        for line in lines {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(line.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
        }
        if entries.len() != n * n.saturating_sub(1) / 2 {
            return Err(bad("entry count does not match n"));
        }
        Ok(Self {
            n,
            entries,
            metric: metric.ok_or_else(|| bad("header lacks metric"))?,
            normalized: normalized.ok_or_else(|| bad("header lacks normalized"))?,
        })
    }
}

/// Dense symmetric `n × n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

pub fn euclidean(x: &[f64], y: &[f64]) -> Result<f64, DistanceError> {
    if x.len() != y.len() {
        return Err(DistanceError::LengthMismatch(x.len(), y.len()));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

fn check_band(n: usize, m: usize, window: Option<usize>) -> Result<usize, DistanceError> {
    if n == 0 || m == 0 {
        return Err(DistanceError::EmptySeries);
    }
    let diff = n.abs_diff(m);
    match window {
        Some(w) if w < diff => Err(DistanceError::WindowTooNarrow { window: w, diff }),
        Some(w) => Ok(w),
        None => Ok(n.max(m)),
    }
}

/// Dynamic time warping distance, optionally restricted to a Sakoe–Chiba
/// band `|i - j| <= window`.
pub fn dtw(x: &[f64], y: &[f64], window: Option<usize>) -> Result<f64, DistanceError> {
    let w = check_band(x.len(), y.len(), window)?;
    let m = y.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        cur.fill(f64::INFINITY);
        let lo = i.saturating_sub(w);
        let hi = (i + w + 1).min(m);
        for j in lo..hi {
            let c = (xi - y[j]).powi(2);
            let best = prev[j].min(prev[j + 1]).min(cur[j]);
            cur[j + 1] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m].sqrt())
}

/// DTW distance together with the optimal alignment path as `(i, j)` pairs
/// from `(0, 0)` to `(n-1, m-1)`. Ties prefer the diagonal step.
pub fn dtw_path(
    x: &[f64],
    y: &[f64],
    window: Option<usize>,
) -> Result<(f64, Vec<(usize, usize)>), DistanceError> {
    let w = check_band(x.len(), y.len(), window)?;
    let (n, m) = (x.len(), y.len());
    let stride = m + 1;
    let mut acc = vec![f64::INFINITY; (n + 1) * stride];
    acc[0] = 0.0;
    for i in 0..n {
        let lo = i.saturating_sub(w);
        let hi = (i + w + 1).min(m);
        for j in lo..hi {
            let c = (x[i] - y[j]).powi(2);
            let best = acc[i * stride + j]
                .min(acc[i * stride + j + 1])
                .min(acc[(i + 1) * stride + j]);
            acc[(i + 1) * stride + j + 1] = c + best;
        }
    }
    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        path.push((i - 1, j - 1));
        if i == 1 && j == 1 {
            break;
        }
        let diag = acc[(i - 1) * stride + j - 1];
        let up = acc[(i - 1) * stride + j];
        let left = acc[i * stride + j - 1];
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    path.reverse();
    Ok((acc[n * stride + m].sqrt(), path))
}

const FFT_THRESHOLD: usize = 64;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Raw linear cross-correlation over lags `-(T-1)..=(T-1)`:
/// `out[s + T - 1] = sum_i x[i + s] * y[i]`.
pub fn cross_correlation_direct(x: &[f64], y: &[f64]) -> Vec<f64> {
    let t = x.len();
    let mut out = vec![0.0; 2 * t - 1];
    for (k, slot) in out.iter_mut().enumerate() {
        let s = k as isize - (t as isize - 1);
        let (xs, ys) = if s >= 0 {
            (&x[s as usize..], &y[..t - s as usize])
        } else {
            (&x[..t - (-s) as usize], &y[(-s) as usize..])
        };
        *slot = xs.iter().zip(ys).map(|(a, b)| a * b).sum();
    }
    out
}

fn fft_pair(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    thread_local! {
        static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
    }
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

/// Same contract as [`cross_correlation_direct`], computed by FFT.
pub fn cross_correlation_fft(x: &[f64], y: &[f64]) -> Vec<f64> {
    let t = x.len();
    let len = (2 * t - 1).next_power_of_two();
    let (fwd, inv) = fft_pair(len);
    let lift = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&r| Complex::new(r, 0.0)).collect();
        buf.resize(len, Complex::new(0.0, 0.0));
        buf
    };
    let mut fx = lift(x);
    let mut fy = lift(y);
    fwd.process(&mut fx);
    fwd.process(&mut fy);
    let mut prod: Vec<Complex<f64>> = fx.iter().zip(&fy).map(|(a, b)| a * b.conj()).collect();
    inv.process(&mut prod);
    let scale = 1.0 / len as f64;
    // circular lag s lives at s (s >= 0) or len + s (s < 0)
    (0..2 * t - 1)
        .map(|k| {
            let s = k as isize - (t as isize - 1);
            let pos = if s >= 0 { s as usize } else { len - (-s) as usize };
            prod[pos].re * scale
        })
        .collect()
}

fn cross_correlation(x: &[f64], y: &[f64]) -> Vec<f64> {
    if x.len() < FFT_THRESHOLD {
        cross_correlation_direct(x, y)
    } else {
        cross_correlation_fft(x, y)
    }
}

/// Coefficient-normalized cross-correlation, length `2T - 1`, lag `-(T-1)`
/// first.
pub fn ncc(x: &[f64], y: &[f64]) -> Result<Vec<f64>, DistanceError> {
    if x.len() != y.len() {
        return Err(DistanceError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(DistanceError::EmptySeries);
    }
    let denom = norm(x) * norm(y);
    if denom == 0.0 {
        return Err(DistanceError::ZeroNorm);
    }
    Ok(cross_correlation(x, y)
        .into_iter()
        .map(|v| (v / denom).clamp(-1.0, 1.0))
        .collect())
}

fn clamp_sbd(d: f64) -> f64 {
    if (-1e-12..0.0).contains(&d) {
        0.0
    } else {
        d
    }
}

/// Shape-based distance in `[0, 2]`.
pub fn sbd(x: &[f64], y: &[f64]) -> Result<f64, DistanceError> {
    sbd_align(x, y).map(|(d, _)| d)
}

/// SBD plus the lag-shifted, zero-padded copy of `y` that best aligns with `x`.
pub fn sbd_align(x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>), DistanceError> {
    let cc = ncc(x, y)?;
    let (best_k, best) = cc
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let t = x.len();
    let shift = best_k as isize - (t as isize - 1);
    Ok((clamp_sbd(1.0 - best), shift_zero_padded(y, shift)))
}

/// Moves `y` right by `shift` (left when negative), filling with zeros.
pub fn shift_zero_padded(y: &[f64], shift: isize) -> Vec<f64> {
    let t = y.len();
    let mut out = vec![0.0; t];
    for (i, &v) in y.iter().enumerate() {
        let j = i as isize + shift;
        if (0..t as isize).contains(&j) {
            out[j as usize] = v;
        }
    }
    out
}

/// SBD extended to all-zero series (constant series after z-normalization):
/// two zero series are identical, a zero series is uncorrelated with
/// anything else.
pub fn sbd_with_zeros(x: &[f64], y: &[f64]) -> Result<f64, DistanceError> {
    let (zx, zy) = (x.iter().all(|v| *v == 0.0), y.iter().all(|v| *v == 0.0));
    match (zx, zy) {
        (true, true) if x.len() == y.len() && !x.is_empty() => Ok(0.0),
        (true, _) | (_, true) if x.len() == y.len() && !x.is_empty() => Ok(1.0),
        _ => sbd(x, y),
    }
}

/// Pairwise distance for `metric`; SBD goes through [`sbd_with_zeros`].
pub fn metric_distance(
    metric: Metric,
    x: &[f64],
    y: &[f64],
    window: Option<usize>,
) -> Result<f64, DistanceError> {
    match metric {
        Metric::Dtw => dtw(x, y, window),
        Metric::Sbd => sbd_with_zeros(x, y),
        Metric::Euclidean => euclidean(x, y),
    }
}

/// All pairwise distances between rows. Each pair is written to its own
/// slot, so the result does not depend on scheduling.
pub fn pairwise_condensed(
    data: &SeriesMatrix,
    metric: Metric,
    window: Option<usize>,
) -> Result<CondensedDistanceMatrix, DistanceError> {
    let n = data.n();
    if n < 2 {
        return Err(DistanceError::TooFewSeries { needed: 2, got: n });
    }
    let entries = (0..n * (n - 1) / 2)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = condensed_pair(n, idx);
            metric_distance(metric, data.row(i), data.row(j), window)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(CondensedDistanceMatrix::from_entries(n, entries, metric))
}

/// Divides every entry by the largest one.
pub fn normalize_by_max(m: &CondensedDistanceMatrix) -> Result<CondensedDistanceMatrix, DistanceError> {
    let max = m.max();
    if !(max > 0.0) {
        return Err(DistanceError::DegenerateMatrix);
    }
    let mut out = m.clone();
    for e in out.entries.iter_mut() {
        *e /= max;
    }
    out.normalized = true;
    Ok(out)
}

/// `s(i, j) = -sbd(row_i, row_j)`, zero diagonal.
pub fn sbd_similarity(data: &SeriesMatrix) -> Result<SquareMatrix, DistanceError> {
    let cond = pairwise_condensed(data, Metric::Sbd, None)?;
    Ok(SquareMatrix::from_fn(data.n(), |i, j| if i == j { 0.0 } else { -cond.get(i, j) }))
}
