//! The robust (TRADES-style) training objective:
//!
//! ```text
//! L(f(X), Y) + gamma * KL(f(X) || f(X')) + lambda * penalty(W, C)
//! ```
//!
//! with `X'` the consistency-PGD perturbation of `X`. The divergence is KL
//! from the clean to the adversarial prediction, so at `X' = X` the middle
//! term and its gradient vanish exactly and the objective reduces to the
//! clustering-friendly one. Parameter gradients are taken at fixed `X'`.

use rand_chacha::ChaCha8Rng;

use super::attack::pgd_attack_consistency;
use super::model::{backward_from_dlogits, ce_dlogits, ForwardTrace, Gradients, ToyModel};
use super::penalty::{model_penalty_and_gradient, ModelCodebooks};
use super::{RobustSpec, TrainError};

/// The three summands of the robust objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradesParts {
    pub ce: f64,
    pub kl: f64,
    pub penalty: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl TradesParts {
    pub fn total(&self) -> f64 {
        self.ce + self.gamma * self.kl + self.lambda * self.penalty
    }
}

fn mean_kl(clean: &ForwardTrace, adv: &ForwardTrace) -> f64 {
    let mut total = 0.0;
    for (i, &lp) in clean.log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            total += p * (lp - adv.log_probs[i]);
        }
    }
    total / clean.batch as f64
}

/// Objective value and parameter gradients at a FIXED adversarial batch
/// `x_adv` (the attack itself is not differentiated through).
pub fn trades_loss_at(
    model: &ToyModel,
    x: &[f64],
    x_adv: &[f64],
    y: &[usize],
    gamma: f64,
    lambda: f64,
    codebooks: &ModelCodebooks,
) -> Result<(TradesParts, Gradients), TrainError> {
    let clean = model.forward_trace(x)?;
    let adv = model.forward_trace(x_adv)?;
    let ce = clean.ce_loss(y)?;
    let kl = mean_kl(&clean, &adv);
    let batch = clean.batch as f64;

    // Gradient through the clean logits: CE part plus the KL dependence on p.
    // d(mean KL)/dz_j = p_j * ((log p_j - log q_j) - KL_sample) / batch.
    let mut dlogits_clean = ce_dlogits(&clean, y);
    if gamma != 0.0 {
        let classes = clean.classes;
        for b in 0..clean.batch {
            let mut sample_kl = 0.0;
            for c in 0..classes {
                let lp = clean.log_probs[b * classes + c];
                let p = lp.exp();
                if p > 0.0 {
                    sample_kl += p * (lp - adv.log_probs[b * classes + c]);
                }
            }
            for c in 0..classes {
                let lp = clean.log_probs[b * classes + c];
                let lq = adv.log_probs[b * classes + c];
                let p = lp.exp();
                dlogits_clean[b * classes + c] +=
                    gamma * p * ((lp - lq) - sample_kl) / batch;
            }
        }
    }
    let (mut grads, _) = backward_from_dlogits(model, &clean, &dlogits_clean, false);

    // Gradient through the adversarial logits: d(mean KL)/dz'_j = (q - p)/batch.
    if gamma != 0.0 {
        let q = adv.probabilities();
        let dlogits_adv: Vec<f64> = q
            .iter()
            .zip(&clean.log_probs)
            .map(|(&qj, &lpj)| gamma * (qj - lpj.exp()) / batch)
            .collect();
        let (adv_grads, _) = backward_from_dlogits(model, &adv, &dlogits_adv, false);
        grads.add(&adv_grads);
    }

    let penalty = if lambda != 0.0 {
        let (penalty, penalty_grads) = model_penalty_and_gradient(model, codebooks, lambda)?;
        grads.add(&penalty_grads);
        penalty
    } else {
        model_penalty_and_gradient(model, codebooks, 0.0)?.0
    };

    Ok((TradesParts { ce, kl, penalty, gamma, lambda }, grads))
}

/// Full robust objective: run the consistency PGD to obtain `x_adv`, then
/// evaluate [`trades_loss_at`]. Returns the adversarial batch as well.
pub fn trades_loss(
    model: &ToyModel,
    x: &[f64],
    y: &[usize],
    robust: &RobustSpec,
    lambda: f64,
    codebooks: &ModelCodebooks,
    rng: &mut ChaCha8Rng,
) -> Result<(TradesParts, Gradients, Vec<f64>), TrainError> {
    let random_start = if robust.pgd_random_start { Some(&mut *rng) } else { None };
    let x_adv = pgd_attack_consistency(
        model,
        x,
        robust.epsilon,
        robust.pgd_step_size,
        robust.pgd_steps,
        random_start,
    )?;
    let (parts, grads) = trades_loss_at(model, x, &x_adv, y, robust.gamma, lambda, codebooks)?;
    Ok((parts, grads, x_adv))
}

#[cfg(test)]
mod tests {
    use super::super::model::test_support::{max_grad_rel_err, random_batch};
    use super::super::model::backward;
    use super::super::penalty::cluster_model_weights;
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_epsilon_reduces_to_the_clustering_friendly_objective() {
        let model = ToyModel::new(&[5, 6, 3], 31).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (x, y) = random_batch(&mut rng, 7, 5, 3);
        let codebooks = cluster_model_weights(&model, 4).unwrap();
        let robust = RobustSpec {
            gamma: 3.0,
            epsilon: 0.0,
            pgd_steps: 5,
            pgd_step_size: 0.1,
            pgd_random_start: true,
        };
        let mut attack_rng = ChaCha8Rng::seed_from_u64(33);
        let (parts, grads, x_adv) =
            trades_loss(&model, &x, &y, &robust, 2.0, &codebooks, &mut attack_rng).unwrap();
        assert_eq!(x_adv, x);
        assert_eq!(parts.kl, 0.0);

        // Identical to the plain objective: CE plus the weighted penalty.
        let trace = model.forward_trace(&x).unwrap();
        let ce = trace.ce_loss(&y).unwrap();
        assert_eq!(parts.ce, ce);
        assert_eq!(parts.total(), ce + 2.0 * parts.penalty);

        let mut expected = backward(&model, &x, &y).unwrap();
        let (_, pgrads) = model_penalty_and_gradient(&model, &codebooks, 2.0).unwrap();
        expected.add(&pgrads);
        for (a, b) in grads.weights.iter().flatten().zip(expected.weights.iter().flatten()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_gamma_zero_lambda_is_plain_cross_entropy() {
        let model = ToyModel::new(&[4, 5, 2], 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (x, y) = random_batch(&mut rng, 6, 4, 2);
        let codebooks = cluster_model_weights(&model, 2).unwrap();
        let x_adv: Vec<f64> = x.iter().map(|v| v + 0.05).collect();
        let (parts, grads) =
            trades_loss_at(&model, &x, &x_adv, &y, 0.0, 0.0, &codebooks).unwrap();
        let ce = model.forward_trace(&x).unwrap().ce_loss(&y).unwrap();
        assert_eq!(parts.total(), ce);
        let expected = backward(&model, &x, &y).unwrap();
        assert_eq!(grads, expected);
    }

    #[test]
    fn full_objective_gradient_matches_finite_differences_at_fixed_x_adv() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for seed in 0..3u64 {
            let model = ToyModel::new(&[4, 5, 3], 60 + seed).unwrap();
            let (x, y) = random_batch(&mut rng, 5, 4, 3);
            let x_adv: Vec<f64> =
                x.iter().map(|v| v + 0.1 * super::super::data::normal(&mut rng)).collect();
            let codebooks = cluster_model_weights(&model, 3).unwrap();
            let gamma = 2.5;
            let lambda = 1.5;
            let (_, analytic) =
                trades_loss_at(&model, &x, &x_adv, &y, gamma, lambda, &codebooks).unwrap();

            let mut fd = Gradients::zeros_like(&model);
            let h = 1e-4;
            let mut probe = model.clone();
            let objective = |m: &ToyModel| -> f64 {
                let (parts, _) =
                    trades_loss_at(m, &x, &x_adv, &y, gamma, lambda, &codebooks).unwrap();
                parts.total()
            };
            for li in 0..model.layers.len() {
                for wi in 0..model.layers[li].weights.len() {
                    let original = probe.layers[li].weights[wi];
                    probe.layers[li].weights[wi] = original + h;
                    let plus = objective(&probe);
                    probe.layers[li].weights[wi] = original - h;
                    let minus = objective(&probe);
                    probe.layers[li].weights[wi] = original;
                    fd.weights[li][wi] = (plus - minus) / (2.0 * h);
                }
                for bi in 0..model.layers[li].bias.len() {
                    let original = probe.layers[li].bias[bi];
                    probe.layers[li].bias[bi] = original + h;
                    let plus = objective(&probe);
                    probe.layers[li].bias[bi] = original - h;
                    let minus = objective(&probe);
                    probe.layers[li].bias[bi] = original;
                    fd.biases[li][bi] = (plus - minus) / (2.0 * h);
                }
            }
            let err = max_grad_rel_err(&analytic, &fd);
            assert!(err < 1e-4, "seed={seed} err={err}");
        }
    }
}
