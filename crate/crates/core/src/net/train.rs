//! Mini-batch Adam training on mean cross-entropy, plus a finite-difference
//! gradient check.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::adam::Adam;
use super::cnn::{ClassifierArch, CollisionNet};
use super::dataset::LabeledWindow;
use super::layers;
use super::{Classifier, NetError, Result};
use crate::rng::{self, substream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub betas: (f64, f64),
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 20,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(NetError::TrainConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(self.betas.0) || !in_unit(self.betas.1) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

fn check_data<M: Classifier>(model: &M, data: &[LabeledWindow]) -> Result<()> {
    if data.is_empty() {
        return Err(NetError::Empty("training set"));
    }
    for s in data {
        model.check_window(&s.window)?;
        if s.label >= model.n_classes() {
            return Err(NetError::Label {
                label: s.label,
                k_max: model.n_classes() - 1,
            });
        }
    }
    Ok(())
}

/// Mean loss and mean gradient over `samples`.
pub fn batch_gradient<M: Classifier>(model: &M, samples: &[LabeledWindow]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for s in samples {
        loss += model.backprop(s.window.values(), s.label, &mut grad);
    }
    let scale = 1.0 / samples.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}

/// Trains `model` in place and returns the per-epoch mean training loss.
///
/// Batches are drawn from a fresh permutation each epoch using the
/// `shuffle` substream of `tc.seed`; the result is bit-identical for equal
/// seeds.
pub fn train<M: Classifier>(model: &mut M, data: &[LabeledWindow], tc: &TrainConfig) -> Result<Vec<f64>> {
    tc.validate()?;
    check_data(model, data)?;
    let mut adam = Adam::new(model.param_count(), tc.learning_rate, tc.betas, tc.epsilon);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; model.param_count()];
    let mut history = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        order.shuffle(&mut substream(tc.seed, rng::SHUFFLE, epoch as u64));
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(tc.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let s = &data[i];
                batch_loss += model.backprop(s.window.values(), s.label, &mut grad);
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NetError::NonFiniteLoss { epoch, batch });
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(model.params_mut(), &grad);
            total += batch_loss;
        }
        history.push(total / data.len() as f64);
    }
    Ok(history)
}

/// Initializes a CNN from the `init` substream of `tc.seed`, trains it and
/// rounds the final weights to `f32` precision.
pub fn train_classifier(
    arch: ClassifierArch,
    data: &[LabeledWindow],
    tc: &TrainConfig,
) -> Result<(CollisionNet, Vec<f64>)> {
    let mut net = CollisionNet::init(arch, &mut substream(tc.seed, rng::INIT, 0));
    let history = train(&mut net, data, tc)?;
    net.round_to_f32();
    Ok((net, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters resampled because the perturbation crossed a ReLU kink.
    pub skipped_kinks: usize,
}

pub const FD_STEP: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// Compares analytic gradients with central differences (step `1e-4`) on
/// `n_params` randomly chosen parameters for every sample.
///
/// A parameter whose `±h` perturbation flips any hidden ReLU is a kink where
/// the finite difference is meaningless; it is skipped and replaced.
pub fn grad_check<M, R>(
    model: &M,
    samples: &[LabeledWindow],
    n_params: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    M: Classifier + Clone,
    R: Rng + ?Sized,
{
    check_data(model, samples)?;
    let n_total = model.param_count();
    let n_params = n_params.min(n_total);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };

    for s in samples {
        let x = s.window.values();
        let mut analytic = vec![0.0; n_total];
        model.backprop(x, s.label, &mut analytic);
        let pattern = model.relu_pattern(x);

        let mut candidates = index::sample(rng, n_total, n_total).into_iter();
        let mut done = 0;
        while done < n_params {
            let Some(i) = candidates.next() else { break };
            let original = probe.params()[i];
            probe.params_mut()[i] = original + FD_STEP;
            let plus = layers::cross_entropy(&probe.probabilities(x), s.label);
            let kink_plus = probe.relu_pattern(x) != pattern;
            probe.params_mut()[i] = original - FD_STEP;
            let minus = layers::cross_entropy(&probe.probabilities(x), s.label);
            let kink_minus = probe.relu_pattern(x) != pattern;
            probe.params_mut()[i] = original;
            if kink_plus || kink_minus {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
            done += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::BaselineMlp;
    use crate::prach::CorrelationWindow;

    fn sample<R: Rng>(n_ant: usize, label: usize, rng: &mut R) -> LabeledWindow {
        let values = (0..n_ant * 8).map(|_| rng.random_range(0.0..1.5)).collect();
        LabeledWindow {
            window: CorrelationWindow::new(values, n_ant, 8, 0, 1).unwrap(),
            label,
            snr_db: 0.0,
        }
    }

    #[test]
    fn cnn_gradients_match_finite_differences() {
        let mut rng = substream(20, "test", 0);
        let arch = ClassifierArch::new(4, 8, 6).unwrap();
        let net = CollisionNet::init(arch, &mut rng);
        let samples: Vec<_> = (0..5).map(|i| sample(4, i % 7, &mut rng)).collect();
        let report = grad_check(&net, &samples, 60, &mut rng).unwrap();
        assert_eq!(report.checked, 300);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = substream(21, "test", 0);
        let net = BaselineMlp::init(3, 8, 3, (12, 6), &mut rng).unwrap();
        let samples: Vec<_> = (0..4).map(|i| sample(3, i % 4, &mut rng)).collect();
        let report = grad_check(&net, &samples, 50, &mut rng).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn dead_relu_has_zero_gradient() {
        let mut rng = substream(22, "test", 0);
        let arch = ClassifierArch::new(2, 8, 3).unwrap();
        let mut net = CollisionNet::init(arch, &mut rng);
        // Kill conv1 channel 0: its weights then receive no gradient.
        let b1 = net.conv1_bias_offset();
        net.params_mut()[b1] = -1e3;
        let s = sample(2, 1, &mut rng);
        let mut grad = vec![0.0; net.param_count()];
        net.backprop(s.window.values(), 1, &mut grad);
        // Channel 0 weights occupy the first n_ant * kernel entries.
        for i in 0..6 {
            assert_eq!(grad[i], 0.0);
            let mut probe = net.clone();
            probe.params_mut()[i] += FD_STEP;
            let plus = layers::cross_entropy(&probe.probabilities(s.window.values()), 1);
            probe.params_mut()[i] -= 2.0 * FD_STEP;
            let minus = layers::cross_entropy(&probe.probabilities(s.window.values()), 1);
            assert!(((plus - minus) / (2.0 * FD_STEP)).abs() < 1e-12);
        }
    }

    #[test]
    fn fc_bias_gradient_is_softmax_minus_onehot() {
        let mut rng = substream(23, "test", 0);
        let arch = ClassifierArch::new(2, 8, 3).unwrap();
        let net = CollisionNet::init(arch, &mut rng);
        let batch: Vec<_> = (0..6).map(|i| sample(2, i % 4, &mut rng)).collect();
        let (_, grad) = batch_gradient(&net, &batch);
        let mut expected = vec![0.0; 4];
        for s in &batch {
            let p = net.probabilities(s.window.values());
            for k in 0..4 {
                expected[k] += p[k] - if k == s.label { 1.0 } else { 0.0 };
            }
        }
        let off = net.fc_bias_offset();
        for k in 0..4 {
            // Mean-loss gradient times batch size is the summed form.
            assert!((grad[off + k] * 6.0 - expected[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn memorizes_single_sample() {
        let mut rng = substream(24, "test", 0);
        let arch = ClassifierArch::new(2, 8, 6).unwrap();
        let mut net = CollisionNet::init(arch, &mut rng);
        let data = vec![sample(2, 3, &mut rng)];
        let tc = TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        };
        let history = train(&mut net, &data, &tc).unwrap();
        assert!(*history.last().unwrap() < 0.01, "{:?}", history.last());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = substream(25, "test", 0);
        let arch = ClassifierArch::new(2, 8, 3).unwrap();
        let data: Vec<_> = (0..40).map(|i| sample(2, i % 4, &mut rng)).collect();
        let tc = TrainConfig {
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, ha) = train_classifier(arch, &data, &tc).unwrap();
        let (b, hb) = train_classifier(arch, &data, &tc).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let (c, _) = train_classifier(arch, &data, &TrainConfig { seed: 10, ..tc }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        let arch = ClassifierArch::new(2, 8, 3).unwrap();
        let mut net = CollisionNet::zeros(arch);
        let tc = TrainConfig::default();
        assert!(matches!(train(&mut net, &[], &tc), Err(NetError::Empty(_))));
        let mut rng = substream(26, "test", 0);
        let bad_label = vec![sample(2, 4, &mut rng)];
        assert!(matches!(
            train(&mut net, &bad_label, &tc),
            Err(NetError::Label { .. })
        ));
        let bad_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad_lr.validate().is_err());
    }

    #[test]
    fn nan_input_aborts() {
        let arch = ClassifierArch::new(1, 8, 2).unwrap();
        let mut net = CollisionNet::init(arch, &mut substream(27, "test", 0));
        let mut s = sample(1, 1, &mut substream(27, "test", 1));
        // Bypass window validation to inject a non-finite magnitude.
        s.window = CorrelationWindow::new(vec![f64::INFINITY; 8], 1, 8, 0, 1).unwrap();
        let err = train(&mut net, &[s], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, NetError::NonFiniteLoss { epoch: 0, batch: 0 }));
    }
}
