//! Fully-connected baseline that sees only the antenna-averaged correlation
//! profile, the input convention of threshold detectors and of earlier
//! terrestrial classifiers.

use rand::Rng;

use super::layers::{self, Dense};
use super::{Classifier, NetError, Result};

pub const DEFAULT_HIDDEN: (usize, usize) = (512, 256);

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineMlp {
    n_ant: usize,
    n_cs: usize,
    hidden: (usize, usize),
    n_classes: usize,
    params: Vec<f64>,
}

impl BaselineMlp {
    pub fn zeros(n_ant: usize, n_cs: usize, k_max: usize, hidden: (usize, usize)) -> Result<Self> {
        if k_max < 1 {
            return Err(NetError::KMax(k_max));
        }
        if n_ant == 0 || n_cs == 0 || hidden.0 == 0 || hidden.1 == 0 {
            return Err(NetError::Arch("baseline dimensions must be positive".into()));
        }
        let mut net = Self {
            n_ant,
            n_cs,
            hidden,
            n_classes: k_max + 1,
            params: Vec::new(),
        };
        net.params = vec![0.0; net.layers().iter().map(Dense::param_count).sum()];
        Ok(net)
    }

    pub fn init<R: Rng + ?Sized>(
        n_ant: usize,
        n_cs: usize,
        k_max: usize,
        hidden: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(n_ant, n_cs, k_max, hidden)?;
        let mut offset = 0;
        for d in net.layers() {
            let bound = layers::glorot_bound(d.inputs, d.outputs);
            for v in &mut net.params[offset..offset + d.weight_count()] {
                *v = rng.random_range(-bound..=bound) as f32 as f64;
            }
            offset += d.param_count();
        }
        Ok(net)
    }

    fn layers(&self) -> [Dense; 3] {
        [
            Dense {
                inputs: self.n_cs,
                outputs: self.hidden.0,
            },
            Dense {
                inputs: self.hidden.0,
                outputs: self.hidden.1,
            },
            Dense {
                inputs: self.hidden.1,
                outputs: self.n_classes,
            },
        ]
    }

    fn average(&self, x: &[f64]) -> Vec<f64> {
        let mut avg = vec![0.0; self.n_cs];
        for row in x.chunks(self.n_cs) {
            for (a, v) in avg.iter_mut().zip(row) {
                *a += v;
            }
        }
        let scale = 1.0 / self.n_ant as f64;
        avg.iter_mut().for_each(|a| *a *= scale);
        avg
    }

    /// Activations of every layer: input average, two hidden layers, probs.
    fn run(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![self.average(x)];
        let mut offset = 0;
        let dense = self.layers();
        for (i, d) in dense.iter().enumerate() {
            let (w, b) = self.params[offset..offset + d.param_count()].split_at(d.weight_count());
            let mut y = vec![0.0; d.outputs];
            d.forward(w, b, acts.last().unwrap(), &mut y);
            if i + 1 < dense.len() {
                layers::relu_inplace(&mut y);
            } else {
                y = layers::softmax(&y);
            }
            acts.push(y);
            offset += d.param_count();
        }
        acts
    }
}

impl Classifier for BaselineMlp {
    fn input_shape(&self) -> (usize, usize) {
        (self.n_ant, self.n_cs)
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).pop().unwrap()
    }

    fn backprop(&self, x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        let acts = self.run(x);
        let probs = &acts[3];
        let loss = layers::cross_entropy(probs, label);
        let mut dy = probs.clone();
        dy[label] -= 1.0;

        let dense = self.layers();
        let mut offsets = [0usize; 3];
        for i in 1..3 {
            offsets[i] = offsets[i - 1] + dense[i - 1].param_count();
        }
        for i in (0..3).rev() {
            let d = dense[i];
            let params = &self.params[offsets[i]..offsets[i] + d.param_count()];
            let g = &mut grad[offsets[i]..offsets[i] + d.param_count()];
            let (gw, gb) = g.split_at_mut(d.weight_count());
            let mut dx = vec![0.0; d.inputs];
            let need_dx = i > 0;
            d.backward(
                &params[..d.weight_count()],
                &acts[i],
                &dy,
                gw,
                gb,
                need_dx.then_some(dx.as_mut_slice()),
            );
            if need_dx {
                layers::relu_backward(&acts[i], &mut dx);
                dy = dx;
            }
        }
        loss
    }

    fn relu_pattern(&self, x: &[f64]) -> Vec<bool> {
        let acts = self.run(x);
        acts[1].iter().chain(&acts[2]).map(|&v| v > 0.0).collect()
    }
}
