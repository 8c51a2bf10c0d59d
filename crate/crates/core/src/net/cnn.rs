//! The proposed collision classifier: conv(16) -> ReLU -> conv(32) -> ReLU ->
//! flatten -> dense(K+1) -> softmax.
//!
//! Flattening is channel-major: feature `c * n_cs + position`. Parameters are
//! stored in one flat vector in the order conv1 weights, conv1 biases, conv2
//! weights, conv2 biases, fc weights, fc biases, which is also the order of
//! the weight file.

use rand::Rng;

use super::layers::{self, Conv1d, Dense};
use super::{Classifier, NetError, Result};

pub const CONV1_CHANNELS: usize = 16;
pub const CONV2_CHANNELS: usize = 32;
pub const KERNEL: usize = 3;
pub const PADDING: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierArch {
    pub n_ant: usize,
    pub n_cs: usize,
    /// `K + 1`.
    pub n_classes: usize,
}

impl ClassifierArch {
    pub fn new(n_ant: usize, n_cs: usize, k_max: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(NetError::KMax(k_max));
        }
        if n_ant == 0 || n_cs == 0 {
            return Err(NetError::Arch(format!(
                "input must be non-empty, got {n_ant}x{n_cs}"
            )));
        }
        Ok(Self {
            n_ant,
            n_cs,
            n_classes: k_max + 1,
        })
    }

    pub fn k_max(&self) -> usize {
        self.n_classes - 1
    }

    pub fn conv1(&self) -> Conv1d {
        Conv1d {
            in_ch: self.n_ant,
            out_ch: CONV1_CHANNELS,
            kernel: KERNEL,
            pad: PADDING,
            len: self.n_cs,
        }
    }

    pub fn conv2(&self) -> Conv1d {
        Conv1d {
            in_ch: CONV1_CHANNELS,
            out_ch: CONV2_CHANNELS,
            kernel: KERNEL,
            pad: PADDING,
            len: self.n_cs,
        }
    }

    pub fn fc(&self) -> Dense {
        Dense {
            inputs: CONV2_CHANNELS * self.conv2().out_len(),
            outputs: self.n_classes,
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv1().param_count() + self.conv2().param_count() + self.fc().param_count()
    }

    fn offsets(&self) -> Offsets {
        let c1 = self.conv1();
        let c2 = self.conv2();
        let fc = self.fc();
        let w1 = 0;
        let b1 = w1 + c1.weight_count();
        let w2 = b1 + c1.out_ch;
        let b2 = w2 + c2.weight_count();
        let wf = b2 + c2.out_ch;
        let bf = wf + fc.weight_count();
        Offsets {
            w1,
            b1,
            w2,
            b2,
            wf,
            bf,
            end: bf + fc.outputs,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wf: usize,
    bf: usize,
    end: usize,
}

struct Activations {
    h1: Vec<f64>,
    h2: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionNet {
    arch: ClassifierArch,
    params: Vec<f64>,
}

impl CollisionNet {
    pub fn zeros(arch: ClassifierArch) -> Self {
        Self {
            arch,
            params: vec![0.0; arch.param_count()],
        }
    }

    /// Glorot-uniform weights, zero biases, values rounded to `f32` so the
    /// network survives a weight-file round trip bit-exactly.
    pub fn init<R: Rng + ?Sized>(arch: ClassifierArch, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        let o = arch.offsets();
        let c1 = arch.conv1();
        let c2 = arch.conv2();
        let fc = arch.fc();
        let fill = |slice: &mut [f64], bound: f64, rng: &mut R| {
            for v in slice {
                *v = rng.random_range(-bound..=bound);
            }
        };
        fill(
            &mut net.params[o.w1..o.b1],
            layers::glorot_bound(c1.in_ch * KERNEL, c1.out_ch * KERNEL),
            rng,
        );
        fill(
            &mut net.params[o.w2..o.b2],
            layers::glorot_bound(c2.in_ch * KERNEL, c2.out_ch * KERNEL),
            rng,
        );
        fill(
            &mut net.params[o.wf..o.bf],
            layers::glorot_bound(fc.inputs, fc.outputs),
            rng,
        );
        net.round_to_f32();
        net
    }

    pub fn from_params(arch: ClassifierArch, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(NetError::Arch(format!(
                "{} parameters supplied, architecture needs {}",
                params.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> ClassifierArch {
        self.arch
    }

    pub fn round_to_f32(&mut self) {
        for v in &mut self.params {
            *v = *v as f32 as f64;
        }
    }

    /// Index of the first fc bias in the flat parameter vector.
    pub fn fc_bias_offset(&self) -> usize {
        self.arch.offsets().bf
    }

    /// Index of the first conv1 bias in the flat parameter vector.
    pub fn conv1_bias_offset(&self) -> usize {
        self.arch.offsets().b1
    }

    fn run(&self, x: &[f64]) -> Activations {
        let a = self.arch;
        let o = a.offsets();
        let p = &self.params;
        let (c1, c2, fc) = (a.conv1(), a.conv2(), a.fc());

        let mut h1 = vec![0.0; c1.out_ch * c1.out_len()];
        c1.forward(&p[o.w1..o.b1], &p[o.b1..o.w2], x, &mut h1);
        layers::relu_inplace(&mut h1);

        let mut h2 = vec![0.0; c2.out_ch * c2.out_len()];
        c2.forward(&p[o.w2..o.b2], &p[o.b2..o.wf], &h1, &mut h2);
        layers::relu_inplace(&mut h2);

        let mut z = vec![0.0; fc.outputs];
        fc.forward(&p[o.wf..o.bf], &p[o.bf..o.end], &h2, &mut z);
        Activations {
            h1,
            h2,
            probs: layers::softmax(&z),
        }
    }
}

impl Classifier for CollisionNet {
    fn input_shape(&self) -> (usize, usize) {
        (self.arch.n_ant, self.arch.n_cs)
    }

    fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).probs
    }

    fn backprop(&self, x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        let a = self.arch;
        let o = a.offsets();
        let p = &self.params;
        let (c1, c2, fc) = (a.conv1(), a.conv2(), a.fc());
        let act = self.run(x);
        let loss = layers::cross_entropy(&act.probs, label);

        let mut dz = act.probs;
        dz[label] -= 1.0;

        let (g_conv, g_fc) = grad.split_at_mut(o.wf);
        let (g_wf, g_bf) = g_fc.split_at_mut(fc.weight_count());
        let mut dh2 = vec![0.0; act.h2.len()];
        fc.backward(&p[o.wf..o.bf], &act.h2, &dz, g_wf, g_bf, Some(&mut dh2));
        layers::relu_backward(&act.h2, &mut dh2);

        let (g_c1, g_c2) = g_conv.split_at_mut(o.w2);
        let (g_w2, g_b2) = g_c2.split_at_mut(c2.weight_count());
        let mut dh1 = vec![0.0; act.h1.len()];
        c2.backward(&p[o.w2..o.b2], &act.h1, &dh2, g_w2, g_b2, Some(&mut dh1));
        layers::relu_backward(&act.h1, &mut dh1);

        let (g_w1, g_b1) = g_c1.split_at_mut(c1.weight_count());
        c1.backward(&p[o.w1..o.b1], x, &dh1, g_w1, g_b1, None);
        loss
    }

    fn relu_pattern(&self, x: &[f64]) -> Vec<bool> {
        let act = self.run(x);
        act.h1.iter().chain(&act.h2).map(|&v| v > 0.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prach::CorrelationWindow;
    use crate::rng::substream;

    #[test]
    fn param_count_at_default_sizes() {
        let arch = ClassifierArch::new(8, 8, 6).unwrap();
        // conv1 8*16*3+16, conv2 16*32*3+32, fc 256*7+7
        assert_eq!(arch.param_count(), 400 + 1568 + 1799);
        assert!(ClassifierArch::new(8, 8, 0).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let arch = ClassifierArch::new(4, 8, 6).unwrap();
        let net = CollisionNet::zeros(arch);
        let w = CorrelationWindow::new(vec![0.3; 32], 4, 8, 0, 1).unwrap();
        let p = net.forward(&w).unwrap();
        assert_eq!(p.len(), 7);
        assert!(p.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn output_is_distribution_and_scaling_changes_logits() {
        let arch = ClassifierArch::new(2, 8, 3).unwrap();
        let net = CollisionNet::init(arch, &mut substream(1, "test", 0));
        let vals: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let w = CorrelationWindow::new(vals.clone(), 2, 8, 0, 1).unwrap();
        let doubled = CorrelationWindow::new(vals.iter().map(|v| 2.0 * v).collect(), 2, 8, 0, 1)
            .unwrap();
        let p = net.forward(&w).unwrap();
        let q = net.forward(&doubled).unwrap();
        for probs in [&p, &q] {
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(probs.iter().all(|&v| v >= 0.0));
        }
        assert_ne!(p, q);
    }

    #[test]
    fn rejects_wrong_shape() {
        let net = CollisionNet::zeros(ClassifierArch::new(8, 8, 6).unwrap());
        let w = CorrelationWindow::new(vec![0.0; 8], 1, 8, 0, 1).unwrap();
        assert!(matches!(net.forward(&w), Err(NetError::InputShape { .. })));
    }

    #[test]
    fn init_is_f32_representable_and_bounded() {
        let arch = ClassifierArch::new(8, 8, 6).unwrap();
        let net = CollisionNet::init(arch, &mut substream(2, "test", 0));
        assert!(net.params().iter().all(|&v| v == v as f32 as f64));
        let bound = layers::glorot_bound(8 * 3, 16 * 3);
        assert!(net.params()[..384].iter().all(|v| v.abs() <= bound));
        assert!(net.params()[384..400].iter().all(|&v| v == 0.0));
    }
}
