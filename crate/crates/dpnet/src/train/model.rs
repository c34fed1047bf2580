//! The toy MLP and its hand-written gradients.
//!
//! Hidden layers are rectified-linear, the output is a softmax evaluated
//! through log-sum-exp so losses stay finite for any logits. All math is
//! f64 so gradients can be checked against central finite differences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

/// One dense layer: `output = weights * input + bias`, weights row-major
/// `output_dim x input_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub input_dim: usize,
    pub output_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A feed-forward ReLU network with a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub layers: Vec<DenseLayer>,
}

impl ToyModel {
    /// Seeded Glorot-uniform initialization; biases start at zero.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self, TrainError> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&d| d == 0) {
            return Err(TrainError::Config(format!(
                "layer_sizes must list at least input and output dims, got {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let (input_dim, output_dim) = (pair[0], pair[1]);
                let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
                let weights =
                    (0..input_dim * output_dim).map(|_| rng.random_range(-limit..limit)).collect();
                DenseLayer { input_dim, output_dim, weights, bias: vec![0.0; output_dim] }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.iter().map(|l| l.input_dim).collect();
        sizes.push(self.output_dim());
        sizes
    }

    /// Forward pass keeping the per-layer activations for backprop.
    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace, TrainError> {
        let d0 = self.input_dim();
        if d0 == 0 || x.len() % d0 != 0 || x.is_empty() {
            return Err(TrainError::ShapeMismatch { expected: d0.max(1), got: x.len() });
        }
        let batch = x.len() / d0;
        let depth = self.layers.len();
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(depth + 1);
        activations.push(x.to_vec());
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = &activations[li];
            let mut z = vec![0.0f64; batch * layer.output_dim];
            for b in 0..batch {
                let input = &prev[b * layer.input_dim..(b + 1) * layer.input_dim];
                let out = &mut z[b * layer.output_dim..(b + 1) * layer.output_dim];
                for (o, slot) in out.iter_mut().enumerate() {
                    let row = &layer.weights[o * layer.input_dim..(o + 1) * layer.input_dim];
                    let mut acc = layer.bias[o];
                    for (w, v) in row.iter().zip(input) {
                        acc += w * v;
                    }
                    *slot = acc;
                }
            }
            if li + 1 < depth {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            activations.push(z);
        }
        let logits = activations.last().expect("at least one layer");
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite { what: "activations" });
        }
        let classes = self.output_dim();
        let mut log_probs = vec![0.0f64; batch * classes];
        for b in 0..batch {
            let z = &logits[b * classes..(b + 1) * classes];
            let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            for (c, &v) in z.iter().enumerate() {
                log_probs[b * classes + c] = v - lse;
            }
        }
        Ok(ForwardTrace { batch, classes, activations, log_probs })
    }
}

/// Cached forward pass: inputs, post-activation outputs of every layer
/// (logits last) and the log-softmax of the logits.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub batch: usize,
    pub classes: usize,
    activations: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_probs.iter().map(|&lp| lp.exp()).collect()
    }

    /// Mean cross-entropy of the true labels under the traced distribution.
    pub fn ce_loss(&self, y: &[usize]) -> Result<f64, TrainError> {
        if y.len() != self.batch {
            return Err(TrainError::ShapeMismatch { expected: self.batch, got: y.len() });
        }
        let mut total = 0.0;
        for (b, &label) in y.iter().enumerate() {
            if label >= self.classes {
                return Err(TrainError::Data(format!(
                    "label {label} out of range for {} classes",
                    self.classes
                )));
            }
            total -= self.log_probs[b * self.classes + label];
        }
        Ok(total / self.batch as f64)
    }

    /// Predicted class per sample (first maximum wins).
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.batch)
            .map(|b| {
                let row = &self.log_probs[b * self.classes..(b + 1) * self.classes];
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Class probabilities for a batch (row-major `batch x classes`).
pub fn forward(model: &ToyModel, x: &[f64]) -> Result<Vec<f64>, TrainError> {
    Ok(model.forward_trace(x)?.probabilities())
}

/// Mean cross-entropy of labels under given probabilities.
pub fn ce_loss(probabilities: &[f64], classes: usize, y: &[usize]) -> Result<f64, TrainError> {
    if classes == 0 || probabilities.len() != classes * y.len() {
        return Err(TrainError::ShapeMismatch {
            expected: classes * y.len(),
            got: probabilities.len(),
        });
    }
    let mut total = 0.0;
    for (b, &label) in y.iter().enumerate() {
        total -= probabilities[b * classes + label].ln();
    }
    Ok(total / y.len() as f64)
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ToyModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (mine, theirs) in self.weights.iter_mut().zip(&other.weights) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
        for (mine, theirs) in self.biases.iter_mut().zip(&other.biases) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().chain(self.biases.iter().flatten()).all(|v| v.is_finite())
    }
}

/// Backpropagate from d(loss)/d(logits); optionally also return
/// d(loss)/d(input), which the attacks need.
pub(crate) fn backward_from_dlogits(
    model: &ToyModel,
    trace: &ForwardTrace,
    dlogits: &[f64],
    want_input_grad: bool,
) -> (Gradients, Option<Vec<f64>>) {
    let batch = trace.batch;
    let mut grads = Gradients::zeros_like(model);
    let mut dz = dlogits.to_vec();
    let mut input_grad = None;
    for (li, layer) in model.layers.iter().enumerate().rev() {
        let prev = &trace.activations[li];
        let dw = &mut grads.weights[li];
        let db = &mut grads.biases[li];
        for b in 0..batch {
            let dz_row = &dz[b * layer.output_dim..(b + 1) * layer.output_dim];
            let input = &prev[b * layer.input_dim..(b + 1) * layer.input_dim];
            for (o, &g) in dz_row.iter().enumerate() {
                db[o] += g;
                let dw_row = &mut dw[o * layer.input_dim..(o + 1) * layer.input_dim];
                for (slot, &v) in dw_row.iter_mut().zip(input) {
                    *slot += g * v;
                }
            }
        }
        if li == 0 && !want_input_grad {
            break;
        }
        // d(loss)/d(previous activation), gated by the rectifier for hidden
        // layers (prev > 0 iff the pre-activation was positive).
        let mut dprev = vec![0.0f64; batch * layer.input_dim];
        for b in 0..batch {
            let dz_row = &dz[b * layer.output_dim..(b + 1) * layer.output_dim];
            let dprev_row = &mut dprev[b * layer.input_dim..(b + 1) * layer.input_dim];
            for (o, &g) in dz_row.iter().enumerate() {
                let row = &layer.weights[o * layer.input_dim..(o + 1) * layer.input_dim];
                for (slot, &w) in dprev_row.iter_mut().zip(row) {
                    *slot += w * g;
                }
            }
        }
        if li == 0 {
            input_grad = Some(dprev);
        } else {
            for (slot, &a) in dprev.iter_mut().zip(prev.iter()) {
                if a <= 0.0 {
                    *slot = 0.0;
                }
            }
            dz = dprev;
        }
    }
    (grads, input_grad)
}

/// d(mean CE)/d(logits) = (softmax - onehot) / batch.
pub(crate) fn ce_dlogits(trace: &ForwardTrace, y: &[usize]) -> Vec<f64> {
    let batch = trace.batch;
    let classes = trace.classes;
    let mut dlogits = trace.probabilities();
    for (b, &label) in y.iter().enumerate() {
        dlogits[b * classes + label] -= 1.0;
    }
    for v in &mut dlogits {
        *v /= batch as f64;
    }
    dlogits
}

/// Exact gradients of the mean cross-entropy over a batch.
pub fn backward(model: &ToyModel, x: &[f64], y: &[usize]) -> Result<Gradients, TrainError> {
    let trace = model.forward_trace(x)?;
    trace.ce_loss(y)?;
    let dlogits = ce_dlogits(&trace, y);
    Ok(backward_from_dlogits(model, &trace, &dlogits, false).0)
}

/// d(mean CE)/d(input) for a batch, used by the PGD attack.
pub(crate) fn input_gradient_ce(
    model: &ToyModel,
    x: &[f64],
    y: &[usize],
) -> Result<Vec<f64>, TrainError> {
    let trace = model.forward_trace(x)?;
    trace.ce_loss(y)?;
    let dlogits = ce_dlogits(&trace, y);
    let (_, input) = backward_from_dlogits(model, &trace, &dlogits, true);
    Ok(input.expect("input gradient requested"))
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(model: &ToyModel, x: &[f64], y: &[usize]) -> Result<f64, TrainError> {
    let trace = model.forward_trace(x)?;
    if y.len() != trace.batch {
        return Err(TrainError::ShapeMismatch { expected: trace.batch, got: y.len() });
    }
    let hits =
        trace.predictions().iter().zip(y).filter(|(&p, &label)| p == label).count();
    Ok(hits as f64 / y.len() as f64)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Central-difference gradient of the CE loss wrt every parameter.
    pub fn finite_difference_ce(
        model: &ToyModel,
        x: &[f64],
        y: &[usize],
        h: f64,
    ) -> Gradients {
        let mut fd = Gradients::zeros_like(model);
        let mut probe = model.clone();
        for li in 0..model.layers.len() {
            for wi in 0..model.layers[li].weights.len() {
                let original = probe.layers[li].weights[wi];
                probe.layers[li].weights[wi] = original + h;
                let plus = probe.forward_trace(x).unwrap().ce_loss(y).unwrap();
                probe.layers[li].weights[wi] = original - h;
                let minus = probe.forward_trace(x).unwrap().ce_loss(y).unwrap();
                probe.layers[li].weights[wi] = original;
                fd.weights[li][wi] = (plus - minus) / (2.0 * h);
            }
            for bi in 0..model.layers[li].bias.len() {
                let original = probe.layers[li].bias[bi];
                probe.layers[li].bias[bi] = original + h;
                let plus = probe.forward_trace(x).unwrap().ce_loss(y).unwrap();
                probe.layers[li].bias[bi] = original - h;
                let minus = probe.forward_trace(x).unwrap().ce_loss(y).unwrap();
                probe.layers[li].bias[bi] = original;
                fd.biases[li][bi] = (plus - minus) / (2.0 * h);
            }
        }
        fd
    }

    pub fn max_grad_rel_err(analytic: &Gradients, fd: &Gradients) -> f64 {
        let mut worst = 0.0f64;
        let flat = |g: &Gradients| -> Vec<f64> {
            g.weights.iter().flatten().chain(g.biases.iter().flatten()).copied().collect()
        };
        for (a, n) in flat(analytic).iter().zip(flat(fd).iter()) {
            let scale = a.abs().max(n.abs());
            if scale > 1e-7 {
                worst = worst.max((a - n).abs() / scale);
            }
        }
        worst
    }

    pub fn random_batch(
        rng: &mut rand_chacha::ChaCha8Rng,
        batch: usize,
        dim: usize,
        classes: usize,
    ) -> (Vec<f64>, Vec<usize>) {
        let x = (0..batch * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn uniform_logits_loss_is_ln_classes() {
        // Zero weights and biases give uniform logits.
        let mut model = ToyModel::new(&[3, 4], 0).unwrap();
        model.layers[0].weights.fill(0.0);
        let trace = model.forward_trace(&[0.5, -0.25, 1.0, 0.1, 0.2, 0.3]).unwrap();
        let loss = trace.ce_loss(&[0, 3]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        let probs = trace.probabilities();
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn confident_model_loss_approaches_zero() {
        let mut model = ToyModel::new(&[2, 2], 0).unwrap();
        model.layers[0].weights = vec![40.0, 0.0, 0.0, 40.0];
        model.layers[0].bias = vec![0.0, 0.0];
        let loss = model
            .forward_trace(&[1.0, 0.0, 0.0, 1.0])
            .unwrap()
            .ce_loss(&[0, 1])
            .unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let model = ToyModel::new(&[3, 2], 0).unwrap();
        assert!(matches!(
            model.forward_trace(&[1.0; 4]),
            Err(TrainError::ShapeMismatch { .. })
        ));
        assert!(matches!(model.forward_trace(&[]), Err(TrainError::ShapeMismatch { .. })));
    }

    #[test]
    fn forward_rejects_non_finite_activations() {
        let mut model = ToyModel::new(&[2, 2], 0).unwrap();
        model.layers[0].weights = vec![f64::MAX, f64::MAX, f64::MAX, f64::MAX];
        model.layers[0].bias = vec![f64::MAX, f64::MAX];
        assert!(matches!(
            model.forward_trace(&[f64::MAX / 2.0, f64::MAX / 2.0]),
            Err(TrainError::NonFinite { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for (seed, sizes) in
            [(1u64, vec![4, 6, 3]), (2, vec![3, 5, 5, 2]), (3, vec![2, 4])].into_iter()
        {
            let model = ToyModel::new(&sizes, seed).unwrap();
            let (x, y) = random_batch(&mut rng, 5, sizes[0], *sizes.last().unwrap());
            let analytic = backward(&model, &x, &y).unwrap();
            let fd = finite_difference_ce(&model, &x, &y, 1e-4);
            let err = max_grad_rel_err(&analytic, &fd);
            assert!(err < 1e-4, "seed={seed} err={err}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let model = ToyModel::new(&[4, 6, 3], 7).unwrap();
        let (x, y) = random_batch(&mut rng, 3, 4, 3);
        let analytic = input_gradient_ce(&model, &x, &y).unwrap();
        let h = 1e-4;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let plus = model.forward_trace(&xp).unwrap().ce_loss(&y).unwrap();
            xp[i] = x[i] - h;
            let minus = model.forward_trace(&xp).unwrap().ce_loss(&y).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let scale = analytic[i].abs().max(fd.abs());
            if scale > 1e-7 {
                assert!((analytic[i] - fd).abs() / scale < 1e-4, "i={i}");
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = ToyModel::new(&[5, 4, 3], 42).unwrap();
        let b = ToyModel::new(&[5, 4, 3], 42).unwrap();
        assert_eq!(a, b);
        let c = ToyModel::new(&[5, 4, 3], 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let mut model = ToyModel::new(&[2, 2], 0).unwrap();
        model.layers[0].weights = vec![5.0, 0.0, 0.0, 5.0];
        let x = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        assert_eq!(accuracy(&model, &x, &[0, 1, 1]).unwrap(), 2.0 / 3.0);
    }
}
