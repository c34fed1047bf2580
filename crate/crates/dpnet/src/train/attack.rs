//! Projected gradient descent attacks.
//!
//! Iterated signed-gradient ascent projected back into the L-inf ball of
//! radius epsilon around the clean input. The plain attack maximizes the
//! cross-entropy of the true labels; the consistency attack maximizes the
//! KL divergence from the clean prediction (the inner maximization of the
//! TRADES objective). `sign(0) = 0`, so a zero gradient leaves the input
//! untouched.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::model::{backward_from_dlogits, input_gradient_ce, ToyModel};
use super::TrainError;

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn ascend_and_project(perturbed: &mut [f64], clean: &[f64], gradient: &[f64], step: f64, eps: f64) {
    for ((xp, &x), &g) in perturbed.iter_mut().zip(clean).zip(gradient) {
        *xp = (*xp + step * sign(g)).clamp(x - eps, x + eps);
    }
}

/// PGD attack on the cross-entropy of the true labels, starting at the
/// clean input (deterministic). With `epsilon = 0` the input is returned
/// unchanged.
pub fn pgd_attack(
    model: &ToyModel,
    x: &[f64],
    y: &[usize],
    epsilon: f64,
    step_size: f64,
    steps: usize,
) -> Result<Vec<f64>, TrainError> {
    let mut perturbed = x.to_vec();
    for _ in 0..steps {
        let gradient = input_gradient_ce(model, &perturbed, y)?;
        ascend_and_project(&mut perturbed, x, &gradient, step_size, epsilon);
    }
    Ok(perturbed)
}

/// d(mean KL(p_clean || q))/d(input of q) — the steepest-ascent direction
/// of the consistency term.
fn input_gradient_consistency(
    model: &ToyModel,
    clean_log_probs: &[f64],
    perturbed: &[f64],
) -> Result<Vec<f64>, TrainError> {
    let trace = model.forward_trace(perturbed)?;
    let q = trace.probabilities();
    let batch = trace.batch as f64;
    // dKL/dz'_j = (q_j - p_j) / batch.
    let dlogits: Vec<f64> = q
        .iter()
        .zip(clean_log_probs)
        .map(|(&qj, &lpj)| (qj - lpj.exp()) / batch)
        .collect();
    let (_, input) = backward_from_dlogits(model, &trace, &dlogits, true);
    Ok(input.expect("input gradient requested"))
}

/// PGD maximization of the TRADES consistency term `KL(f(x) || f(x'))`.
///
/// Exactly at `x' = x` the KL gradient vanishes, so training passes a
/// seeded RNG to start from a random point of the ball; without one the
/// ascent starts at the clean input.
pub fn pgd_attack_consistency(
    model: &ToyModel,
    x: &[f64],
    epsilon: f64,
    step_size: f64,
    steps: usize,
    random_start: Option<&mut ChaCha8Rng>,
) -> Result<Vec<f64>, TrainError> {
    let clean_log_probs = model.forward_trace(x)?.log_probs;
    let mut perturbed = x.to_vec();
    if let Some(rng) = random_start {
        if epsilon > 0.0 {
            for v in &mut perturbed {
                *v += rng.random_range(-epsilon..=epsilon);
            }
        }
    }
    for _ in 0..steps {
        let gradient = input_gradient_consistency(model, &clean_log_probs, &perturbed)?;
        ascend_and_project(&mut perturbed, x, &gradient, step_size, epsilon);
    }
    Ok(perturbed)
}
