//! The clustering penalty and its (sub)gradient.
//!
//! For fixed codebooks C the penalty of a weight matrix is
//! `sum_ij min_k (W_ij - C_ik)^2` with one codebook per row, matching the
//! per-row grouping the quantizer uses. Its gradient in `W_ij` is
//! `2 * lambda * (W_ij - c*)` where `c*` is the nearest center, re-resolved
//! on every evaluation; at a tie boundary the lower-index center is the
//! chosen subgradient.

use super::model::{Gradients, ToyModel};
use super::TrainError;
use crate::kmeans1d::{dp_cluster, nearest_center, SortedWeights};

/// Per-row codebooks of one layer's weight matrix.
pub type LayerCodebooks = Vec<Vec<f64>>;
/// Codebooks of every layer.
pub type ModelCodebooks = Vec<LayerCodebooks>;

/// Optimal codebooks for the model's current weights: each weight-matrix
/// row clustered with [`dp_cluster`] into (at most) `k` centers.
pub fn cluster_model_weights(model: &ToyModel, k: usize) -> Result<ModelCodebooks, TrainError> {
    let mut codebooks = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let mut rows = Vec::with_capacity(layer.output_dim);
        for r in 0..layer.output_dim {
            let row = &layer.weights[r * layer.input_dim..(r + 1) * layer.input_dim];
            let sorted = SortedWeights::new(row)?;
            let solution = dp_cluster(&sorted, k.min(row.len()))?;
            rows.push(solution.centers);
        }
        codebooks.push(rows);
    }
    Ok(codebooks)
}

/// Penalty (unweighted) and gradient of `lambda * penalty` for one weight
/// matrix against its per-row codebooks.
pub fn regularizer_and_gradient(
    weights: &[f64],
    rows: usize,
    cols: usize,
    codebooks: &LayerCodebooks,
    lambda: f64,
) -> Result<(f64, Vec<f64>), TrainError> {
    if weights.len() != rows * cols || codebooks.len() != rows {
        return Err(TrainError::ShapeMismatch { expected: rows * cols, got: weights.len() });
    }
    let mut penalty = 0.0;
    let mut gradient = vec![0.0f64; weights.len()];
    for r in 0..rows {
        let centers = &codebooks[r];
        if centers.is_empty() {
            return Err(TrainError::Config(format!("empty codebook for row {r}")));
        }
        for c in 0..cols {
            let w = weights[r * cols + c];
            let center = centers[nearest_center(w, centers)];
            let d = w - center;
            penalty += d * d;
            gradient[r * cols + c] = 2.0 * lambda * d;
        }
    }
    Ok((penalty, gradient))
}

/// Total penalty of the whole model plus the gradient of
/// `lambda * penalty` in every weight (biases are not penalized: they are
/// not quantized).
pub fn model_penalty_and_gradient(
    model: &ToyModel,
    codebooks: &ModelCodebooks,
    lambda: f64,
) -> Result<(f64, Gradients), TrainError> {
    if codebooks.len() != model.layers.len() {
        return Err(TrainError::ShapeMismatch {
            expected: model.layers.len(),
            got: codebooks.len(),
        });
    }
    let mut total = 0.0;
    let mut grads = Gradients::zeros_like(model);
    for (li, layer) in model.layers.iter().enumerate() {
        let (penalty, gradient) = regularizer_and_gradient(
            &layer.weights,
            layer.output_dim,
            layer.input_dim,
            &codebooks[li],
            lambda,
        )?;
        total += penalty;
        grads.weights[li] = gradient;
    }
    Ok((total, grads))
}

/// Total penalty only.
pub fn model_penalty(model: &ToyModel, codebooks: &ModelCodebooks) -> Result<f64, TrainError> {
    Ok(model_penalty_and_gradient(model, codebooks, 0.0)?.0)
}
