//! Dense and 1D-convolution kernels over flat row-major buffers.
//!
//! Convolutions use stride 1. Weight layout is `[out][in][kernel]`, inputs
//! and outputs are `[channel][position]`. Backward passes accumulate into the
//! gradient buffers so that mini-batch gradients can be summed in place.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub pad: usize,
    /// Input length.
    pub len: usize,
}

impl Conv1d {
    pub fn out_len(&self) -> usize {
        self.len + 2 * self.pad + 1 - self.kernel
    }

    pub fn weight_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_ch
    }

    /// Input position feeding output `t` through tap `k`, if inside the signal.
    #[inline]
    fn src(&self, t: usize, k: usize) -> Option<usize> {
        (t + k).checked_sub(self.pad).filter(|&s| s < self.len)
    }

    pub fn forward(&self, w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
        let out_len = self.out_len();
        debug_assert_eq!(x.len(), self.in_ch * self.len);
        debug_assert_eq!(y.len(), self.out_ch * out_len);
        for o in 0..self.out_ch {
            let yo = &mut y[o * out_len..(o + 1) * out_len];
            yo.iter_mut().for_each(|v| *v = b[o]);
            for i in 0..self.in_ch {
                let xi = &x[i * self.len..(i + 1) * self.len];
                let wk = &w[(o * self.in_ch + i) * self.kernel..][..self.kernel];
                for (t, yt) in yo.iter_mut().enumerate() {
                    for (k, &wv) in wk.iter().enumerate() {
                        if let Some(s) = self.src(t, k) {
                            *yt += wv * xi[s];
                        }
                    }
                }
            }
        }
    }

    /// Accumulates `dw`, `db` and, when given, `dx`.
    pub fn backward(
        &self,
        w: &[f64],
        x: &[f64],
        dy: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
        mut dx: Option<&mut [f64]>,
    ) {
        let out_len = self.out_len();
        for o in 0..self.out_ch {
            let dyo = &dy[o * out_len..(o + 1) * out_len];
            db[o] += dyo.iter().sum::<f64>();
            for i in 0..self.in_ch {
                let base = (o * self.in_ch + i) * self.kernel;
                let xi = &x[i * self.len..(i + 1) * self.len];
                for (t, &g) in dyo.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for k in 0..self.kernel {
                        if let Some(s) = self.src(t, k) {
                            dw[base + k] += g * xi[s];
                            if let Some(dx) = dx.as_deref_mut() {
                                dx[i * self.len + s] += w[base + k] * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn weight_count(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.outputs
    }

    /// `y = W x + b` with `W` stored `[out][in]`.
    pub fn forward(&self, w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            *yo = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        }
    }

    pub fn backward(
        &self,
        w: &[f64],
        x: &[f64],
        dy: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
        mut dx: Option<&mut [f64]>,
    ) {
        for (o, &g) in dy.iter().enumerate() {
            db[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = o * self.inputs;
            for (dwv, &xv) in dw[row..row + self.inputs].iter_mut().zip(x) {
                *dwv += g * xv;
            }
            if let Some(dx) = dx.as_deref_mut() {
                for (d, &wv) in dx.iter_mut().zip(&w[row..row + self.inputs]) {
                    *d += wv * g;
                }
            }
        }
    }
}

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `dy` by the post-activation output `y`.
pub fn relu_backward(y: &[f64], dy: &mut [f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= sum);
    e
}

/// `-ln p[label]`, clamped away from infinity.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(f64::MIN_POSITIVE).ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
