//! Online self-organizing map with a Gaussian neighborhood.
//!
//! Learning rate and neighborhood radius decay linearly per epoch, from
//! `(lr0, max(rows, cols) / 2)` to `(0.01, final_radius)`. The default final
//! radius of 0.1 leaves adjacent neurons practically uncoupled by the last
//! epochs, so the map ends in a plain winner-only refinement.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmin, seeded_rng, ClusterError, ClusteringResult, MethodInfo};
use crate::distance::SeriesMatrix;

pub const FINAL_LEARNING_RATE: f64 = 0.01;
pub const FINAL_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomParams {
    pub rows: usize,
    pub cols: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub final_radius: f64,
    pub seed: u64,
}

impl SomParams {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Self {
        Self {
            rows,
            cols,
            epochs: 1000,
            learning_rate: 0.5,
            final_radius: FINAL_RADIUS,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomGrid {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    /// `(rows * cols) × dim`, neuron-major.
    pub weights: Vec<f64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub initial_radius: f64,
    pub final_radius: f64,
    pub seed: u64,
    /// Mean BMU distance over the training data after each epoch.
    pub quantization_trace: Vec<f64>,
}

fn interpolate(start: f64, end: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        start
    } else {
        start + (end - start) * epoch as f64 / (epochs - 1) as f64
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

impl SomGrid {
    pub fn units(&self) -> usize {
        self.rows * self.cols
    }

    pub fn weight(&self, unit: usize) -> &[f64] {
        &self.weights[unit * self.dim..(unit + 1) * self.dim]
    }

    fn coords(&self, unit: usize) -> (f64, f64) {
        ((unit / self.cols) as f64, (unit % self.cols) as f64)
    }

    /// Best-matching unit; ties go to the lowest flat index.
    pub fn bmu(&self, x: &[f64]) -> (usize, f64) {
        let (u, d2) = argmin((0..self.units()).map(|u| sq_dist(self.weight(u), x))).expect("non-empty grid");
        (u, d2.sqrt())
    }

    pub fn quantization_error(&self, data: &SeriesMatrix) -> f64 {
        if data.n() == 0 {
            return 0.0;
        }
        data.rows().map(|x| self.bmu(x).1).sum::<f64>() / data.n() as f64
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        interpolate(self.learning_rate, FINAL_LEARNING_RATE, epoch, self.epochs)
    }

    fn radius_at(&self, epoch: usize) -> f64 {
        interpolate(self.initial_radius, self.final_radius, epoch, self.epochs)
    }

    fn update(&mut self, x: &[f64], lr: f64, radius: f64) {
        let (bmu, _) = self.bmu(x);
        let (br, bc) = self.coords(bmu);
        let denom = 2.0 * radius * radius;
        for u in 0..self.units() {
            let (r, c) = self.coords(u);
            let h = (-((r - br).powi(2) + (c - bc).powi(2)) / denom).exp();
            let step = lr * h;
            let w = &mut self.weights[u * self.dim..(u + 1) * self.dim];
            for (wi, xi) in w.iter_mut().zip(x) {
                *wi += step * (xi - *wi);
            }
        }
    }
}

/// Trains a map. Weights start as randomly chosen data rows; each epoch
/// visits every sample once in a seeded shuffled order.
pub fn som_train(data: &SeriesMatrix, params: &SomParams) -> Result<SomGrid, ClusterError> {
    let units = params.rows * params.cols;
    if units < 2 {
        return Err(ClusterError::InvalidParameter("grid needs at least 2 neurons".into()));
    }
    if !(params.final_radius > 0.0) {
        return Err(ClusterError::InvalidParameter("final_radius must be positive".into()));
    }
    if params.epochs == 0 {
        return Err(ClusterError::InvalidParameter("epochs must be at least 1".into()));
    }
    if data.n() == 0 {
        return Err(ClusterError::TooFewPoints { needed: 1, got: 0 });
    }
    let dim = data.len();
    let mut init = seeded_rng(params.seed, 0);
    let mut weights = Vec::with_capacity(units * dim);
    for _ in 0..units {
        let pick = init.random_range(0..data.n());
        weights.extend_from_slice(data.row(pick));
    }
    let mut grid = SomGrid {
        rows: params.rows,
        cols: params.cols,
        dim,
        weights,
        epochs: params.epochs,
        learning_rate: params.learning_rate,
        initial_radius: params.rows.max(params.cols) as f64 / 2.0,
        final_radius: params.final_radius,
        seed: params.seed,
        quantization_trace: Vec::with_capacity(params.epochs),
    };
    let mut order: Vec<usize> = (0..data.n()).collect();
    for epoch in 0..params.epochs {
        let mut rng = seeded_rng(params.seed, 1 + epoch as u64);
        order.shuffle(&mut rng);
        let lr = grid.learning_rate_at(epoch);
        let radius = grid.radius_at(epoch);
        for &i in &order {
            grid.update(data.row(i), lr, radius);
        }
        let qe = grid.quantization_error(data);
        grid.quantization_trace.push(qe);
    }
    Ok(grid)
}

/// Maps each series to its BMU's flat index.
pub fn som_assign(grid: &SomGrid, data: &SeriesMatrix) -> ClusteringResult {
    let labels = data.rows().map(|x| grid.bmu(x).0).collect();
    let mut r = ClusteringResult::new(
        MethodInfo::new("som")
            .with("rows", grid.rows)
            .with("cols", grid.cols)
            .with("epochs", grid.epochs)
            .with("learning_rate", grid.learning_rate)
            .with("final_radius", grid.final_radius),
        labels,
        grid.units(),
        grid.seed,
    );
    r.centroids = Some((0..grid.units()).map(|u| grid.weight(u).to_vec()).collect());
    r
}
