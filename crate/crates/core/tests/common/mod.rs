//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use corgii::diff::Tensor;
use corgii::graph::Dataset;
use corgii::train::{loss_and_grads, QueryBatch, RankingModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Outcome of comparing analytic and central-difference directional
/// derivatives.
#[derive(Debug, Clone)]
pub struct FdSummary {
    pub slices: usize,
    pub max_rel: f64,
    /// Largest analytic directional derivative seen.
    pub max_abs: f64,
    /// `(tensor, analytic, numeric)` of the worst slice.
    pub worst: (usize, f64, f64),
}

fn perturbed<M: RankingModel>(model: &M, tensor: usize, dir: &[f64], eps: f64) -> M {
    let mut m = model.clone();
    let mut params = m.params_mut();
    for (w, d) in params[tensor].data_mut().iter_mut().zip(dir) {
        *w += eps * d;
    }
    m
}

/// Adds uniform noise in `[-scale, scale]` to every parameter. Fresh models
/// have zero biases, which puts padded rows exactly on ReLU kinks where the
/// one-sided difference quotients disagree with any subgradient.
pub fn jitter<M: RankingModel>(model: &M, scale: f64, rng: &mut ChaCha8Rng) -> M {
    let mut m = model.clone();
    for t in m.params_mut() {
        t.data_mut().iter_mut().for_each(|w| *w += rng.gen_range(-scale..scale));
    }
    m
}

/// Checks `slices` random directions, each confined to one randomly chosen
/// parameter tensor, against `(L(θ + εv) - L(θ - εv)) / 2ε`.
pub fn check_gradients<M: RankingModel>(
    model: &M,
    dataset: &Dataset,
    batches: &[QueryBatch],
    margin: f64,
    slices: usize,
    rng: &mut ChaCha8Rng,
) -> FdSummary {
    // Small enough that slices rarely straddle the kinks of |.|, min and
    // ReLU, large enough that rounding stays near 1e-8 relative.
    let eps = 1e-7;
    let (_, grads) = loss_and_grads(model, dataset, batches, margin).unwrap();
    let shapes: Vec<usize> = model.params().iter().map(|t| t.len()).collect();
    let mut summary = FdSummary {
        slices,
        max_rel: 0.0,
        max_abs: 0.0,
        worst: (0, 0.0, 0.0),
    };
    for _ in 0..slices {
        let tensor = rng.gen_range(0..shapes.len());
        let dir: Vec<f64> = (0..shapes[tensor]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let analytic: f64 = grads[tensor].data().iter().zip(&dir).map(|(g, d)| g * d).sum();
        let loss = |m: &M| loss_and_grads(m, dataset, batches, margin).unwrap().0;
        let numeric = (loss(&perturbed(model, tensor, &dir, eps)) - loss(&perturbed(model, tensor, &dir, -eps)))
            / (2.0 * eps);
        // Loss differences carry rounding of about 1e-15 * |L| / eps, up to
        // 1e-7 here, so derivatives below 1e-3 are compared absolutely.
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
        summary.max_abs = summary.max_abs.max(analytic.abs());
        if rel >= summary.max_rel {
            summary.max_rel = rel;
            summary.worst = (tensor, analytic, numeric);
        }
    }
    summary
}

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}
