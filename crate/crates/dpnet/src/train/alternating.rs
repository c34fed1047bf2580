//! The alternating W / C optimization loop.
//!
//! Repeat: `t` epochs of mini-batch SGD on the weights with the codebooks
//! fixed, then replace every codebook by the optimal clustering of the
//! current weights. Batches run in a fixed sequential order and every
//! random draw comes from seeded generators, so a run is a pure function
//! of its spec and dataset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainSpec;
use super::data::Dataset;
use super::model::{ce_dlogits, ToyModel};
use super::objective::trades_loss;
use super::penalty::{cluster_model_weights, model_penalty, model_penalty_and_gradient, ModelCodebooks};
use super::TrainError;

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean cross-entropy over the epoch's mini-batches.
    pub ce_loss: f64,
    /// Mean consistency divergence (zero for non-robust runs).
    pub kl_loss: f64,
    /// Clustering penalty at epoch end, against the current codebooks.
    pub penalty: f64,
    pub total_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Penalty before and after one codebook re-clustering. Because the
/// re-clustering is the exact optimum for the current weights the penalty
/// can only go down (or stay).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterUpdate {
    pub epoch: usize,
    pub penalty_before: f64,
    pub penalty_after: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub codebooks: ModelCodebooks,
    pub history: Vec<EpochRecord>,
    pub cluster_updates: Vec<ClusterUpdate>,
}

/// Render the history as CSV (stable column set, shortest-round-trip float
/// formatting, so identical runs produce identical bytes).
pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(
        "epoch,lr,ce_loss,kl_loss,penalty,total_loss,train_accuracy,test_accuracy\n",
    );
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.lr,
            r.ce_loss,
            r.kl_loss,
            r.penalty,
            r.total_loss,
            r.train_accuracy,
            r.test_accuracy
        ));
    }
    out
}

fn batch_ranges(n: usize, batch_size: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n).step_by(batch_size.max(1)).map(move |start| start..(start + batch_size).min(n))
}

/// Train a model on `f(W) + lambda * penalty(W, C)` (plus the TRADES
/// consistency term when the spec has a robust block), re-clustering the
/// codebooks every `t` epochs. Deterministic given the spec.
pub fn train_alternating(spec: &TrainSpec, data: &Dataset) -> Result<TrainOutcome, TrainError> {
    spec.validate()?;
    if spec.layer_sizes.first() != Some(&data.feature_dim)
        || spec.layer_sizes.last() != Some(&data.classes)
    {
        return Err(TrainError::Config(format!(
            "layer_sizes {:?} do not match dataset ({} features, {} classes)",
            spec.layer_sizes, data.feature_dim, data.classes
        )));
    }

    let mut model = ToyModel::new(&spec.layer_sizes, spec.seed)?;
    let mut attack_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut codebooks = cluster_model_weights(&model, spec.k)?;
    let mut history: Vec<EpochRecord> = Vec::with_capacity(spec.epochs);
    let mut cluster_updates = Vec::new();

    let n = data.train_len();
    let dim = data.feature_dim;
    for epoch in 0..spec.epochs {
        let lr = spec.lr.rate_at(epoch, spec.epochs);
        let mut epoch_ce = 0.0;
        let mut epoch_kl = 0.0;
        for range in batch_ranges(n, spec.batch_size) {
            let batch_len = range.len();
            let x = &data.train_x[range.start * dim..range.end * dim];
            let y = &data.train_y[range.clone()];
            let step = (|| -> Result<(f64, f64, super::model::Gradients), TrainError> {
                if let Some(robust) = &spec.robust {
                    let (parts, grads, _) = trades_loss(
                        &model,
                        x,
                        y,
                        robust,
                        spec.lambda,
                        &codebooks,
                        &mut attack_rng,
                    )?;
                    Ok((parts.ce, parts.kl, grads))
                } else {
                    let trace = model.forward_trace(x)?;
                    let ce = trace.ce_loss(y)?;
                    let dlogits = ce_dlogits(&trace, y);
                    let mut grads =
                        super::model::backward_from_dlogits(&model, &trace, &dlogits, false).0;
                    if spec.lambda > 0.0 {
                        let (_, penalty_grads) =
                            model_penalty_and_gradient(&model, &codebooks, spec.lambda)?;
                        grads.add(&penalty_grads);
                    }
                    Ok((ce, 0.0, grads))
                }
            })();
            let (ce, kl, grads) = match step {
                Ok(result) => result,
                Err(TrainError::NonFinite { .. }) => {
                    return Err(TrainError::Diverged { epoch, history });
                }
                Err(e) => return Err(e),
            };
            if !ce.is_finite() || !kl.is_finite() || !grads.is_finite() {
                return Err(TrainError::Diverged { epoch, history });
            }
            epoch_ce += ce * batch_len as f64;
            epoch_kl += kl * batch_len as f64;
            for (layer, (dw, db)) in model
                .layers
                .iter_mut()
                .zip(grads.weights.iter().zip(&grads.biases))
            {
                for (w, &g) in layer.weights.iter_mut().zip(dw) {
                    *w -= lr * g;
                }
                for (b, &g) in layer.bias.iter_mut().zip(db) {
                    *b -= lr * g;
                }
            }
        }
        epoch_ce /= n as f64;
        epoch_kl /= n as f64;

        let penalty = model_penalty(&model, &codebooks)?;
        let gamma = spec.robust.map_or(0.0, |r| r.gamma);
        let train_accuracy =
            super::model::accuracy(&model, &data.train_x, &data.train_y)?;
        let test_accuracy = if data.test_len() > 0 {
            super::model::accuracy(&model, &data.test_x, &data.test_y)?
        } else {
            f64::NAN
        };
        history.push(EpochRecord {
            epoch,
            lr,
            ce_loss: epoch_ce,
            kl_loss: epoch_kl,
            penalty,
            total_loss: epoch_ce + gamma * epoch_kl + spec.lambda * penalty,
            train_accuracy,
            test_accuracy,
        });

        if (epoch + 1) % spec.t == 0 {
            let penalty_before = model_penalty(&model, &codebooks)?;
            codebooks = cluster_model_weights(&model, spec.k)?;
            let penalty_after = model_penalty(&model, &codebooks)?;
            cluster_updates.push(ClusterUpdate { epoch, penalty_before, penalty_after });
        }
    }

    Ok(TrainOutcome { model, codebooks, history, cluster_updates })
}

// Re-exported for the plain-SGD equivalence tests.
pub(crate) use super::model::backward_from_dlogits as _backward_from_dlogits_for_tests;
