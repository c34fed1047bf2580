//! Clustering-friendly training at desk scale.
//!
//! A small ReLU/softmax multilayer perceptron with hand-written gradients
//! is trained on the objective
//!
//! ```text
//! f(W) + lambda * sum_ij min_k (W_ij - C_ik)^2
//! ```
//!
//! alternating t epochs of SGD on the weights with an optimal re-clustering
//! of the per-row codebooks C. Because the re-clustering is exact, the
//! penalty term can never increase across a C-update. The robust variant
//! adds a TRADES-style consistency term between clean and PGD-perturbed
//! inputs. Everything is seeded and single-threaded, so runs are exactly
//! reproducible.

mod alternating;
mod attack;
mod config;
mod data;
mod eval;
mod model;
mod objective;
mod penalty;

pub use alternating::{
    history_to_csv, train_alternating, ClusterUpdate, EpochRecord, TrainOutcome,
};
pub use attack::{pgd_attack, pgd_attack_consistency};
pub use config::{DataSource, LrSchedule, RobustSpec, TrainSpec};
pub use data::{load_csv_dataset, synthetic_dataset, Dataset, SYNTHETIC_DATA_SEED};
pub use eval::{
    evaluate, model_from_dense, model_to_dense, quantized_eval_copy, Accuracy, EvalAttack,
};
pub use model::{
    accuracy, backward, ce_loss, forward, DenseLayer, ForwardTrace, Gradients, ToyModel,
};
pub use objective::{trades_loss, trades_loss_at, TradesParts};
pub use penalty::{
    cluster_model_weights, model_penalty, model_penalty_and_gradient, regularizer_and_gradient,
    LayerCodebooks, ModelCodebooks,
};

use thiserror::Error;

use crate::kmeans1d::ClusterError;
use crate::quant::QuantError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad training config: {0}")]
    Config(String),
    #[error("bad dataset: {0}")]
    Data(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, history: Vec<EpochRecord> },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
