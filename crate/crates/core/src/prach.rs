//! Zadoff-Chu preamble generation, multi-user reception and ZCZ correlation.
//!
//! All timing shifts are cyclic modulo `N_ZC`, matching the cyclic
//! correlation the receiver performs. A preamble `(root, shift)` cyclically
//! advances the root sequence by `shift * N_CS` samples, so its noiseless
//! correlation peak against the root sits at lag `shift * N_CS`.
//!
//! The receiver slices the full lag range into one zero-correlation zone
//! (ZCZ) of `N_CS` lags per preamble. Users advance their transmission by
//! [`PrachConfig::timing_guard`] samples so that a signed residual timing
//! error in `[-tau_e_max, tau_e_max]` plus the channel delay spread always
//! lands inside `[0, N_CS)` of the user's own zone.

use std::f64::consts::PI;

use num_complex::Complex64 as Cplx;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::channel::ChannelRealization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("ZC sequence length {0} is not prime")]
    NotPrime(usize),
    #[error("root index {root} outside 1..{n_zc}")]
    RootOutOfRange { root: usize, n_zc: usize },
    #[error("duplicate root index {0}")]
    DuplicateRoot(usize),
    #[error("at least one root index is required")]
    NoRoots,
    #[error("cyclic shift size {n_cs} must lie in 1..={n_zc}")]
    ShiftSize { n_cs: usize, n_zc: usize },
    #[error(
        "cyclic shift size {n_cs} below ZCZ requirement {required} \
         (delay spread {tau_max} + 2 x timing error {tau_e_max})"
    )]
    ZczBudget {
        n_cs: usize,
        required: usize,
        tau_max: usize,
        tau_e_max: usize,
    },
    #[error("antenna count must be positive")]
    NoAntennas,
    #[error("sample period must be positive, got {0} us")]
    SamplePeriod(f64),
    #[error("root index {0} is not configured")]
    UnknownRoot(usize),
    #[error("cyclic shift index {shift} outside 0..{per_root}")]
    ShiftOutOfRange { shift: usize, per_root: usize },
    #[error("preamble index {index} outside 0..{n_preambles}")]
    PreambleIndex { index: usize, n_preambles: usize },
    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{users} users but {channels} channel realizations")]
    ChannelCount { users: usize, channels: usize },
    #[error("channel realization covers {got} antennas, expected {expected}")]
    ChannelAntennas { got: usize, expected: usize },
    #[error("residual timing error {value} exceeds bound {bound}")]
    ResidualTiming { value: i64, bound: usize },
    #[error("transmit power must be positive, got {0}")]
    Power(f64),
    #[error("noise variance must be non-negative, got {0}")]
    NoiseVariance(f64),
    #[error("received signal has shape {ant}x{len}, expected {exp_ant}x{exp_len}")]
    RxShape {
        ant: usize,
        len: usize,
        exp_ant: usize,
        exp_len: usize,
    },
    #[error("correlation window must be {n_ant}x{n_cs} with non-negative entries")]
    WindowShape { n_ant: usize, n_cs: usize },
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Unvalidated PRACH parameters; turn into a [`PrachConfig`] with `try_into`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrachParams {
    pub n_zc: usize,
    pub n_cs: usize,
    pub roots: Vec<usize>,
    pub n_ant: usize,
    pub sample_period_us: f64,
    /// Maximum channel delay spread in samples.
    pub tau_max: usize,
    /// Worst-case timing-advance pre-compensation error in samples.
    pub tau_e_max: usize,
}

impl Default for PrachParams {
    fn default() -> Self {
        Self {
            n_zc: 839,
            n_cs: 8,
            roots: vec![1],
            n_ant: 8,
            // 839 subcarriers at 1.25 kHz spacing.
            sample_period_us: 1e6 / (839.0 * 1250.0),
            tau_max: 2,
            tau_e_max: 2,
        }
    }
}

/// Validated PRACH configuration with cached root sequences.
#[derive(Debug, Clone)]
pub struct PrachConfig {
    params: PrachParams,
    sequences: Vec<Vec<Cplx>>,
}

impl TryFrom<PrachParams> for PrachConfig {
    type Error = SignalError;

    fn try_from(params: PrachParams) -> Result<Self> {
        if !is_prime(params.n_zc) {
            return Err(SignalError::NotPrime(params.n_zc));
        }
        if params.roots.is_empty() {
            return Err(SignalError::NoRoots);
        }
        for (i, &r) in params.roots.iter().enumerate() {
            if params.roots[..i].contains(&r) {
                return Err(SignalError::DuplicateRoot(r));
            }
        }
        if params.n_cs == 0 || params.n_cs > params.n_zc {
            return Err(SignalError::ShiftSize {
                n_cs: params.n_cs,
                n_zc: params.n_zc,
            });
        }
        let required = params.tau_max + 2 * params.tau_e_max;
        if params.n_cs < required {
            return Err(SignalError::ZczBudget {
                n_cs: params.n_cs,
                required,
                tau_max: params.tau_max,
                tau_e_max: params.tau_e_max,
            });
        }
        if params.n_ant == 0 {
            return Err(SignalError::NoAntennas);
        }
        if !(params.sample_period_us > 0.0 && params.sample_period_us.is_finite()) {
            return Err(SignalError::SamplePeriod(params.sample_period_us));
        }
        let sequences = params
            .roots
            .iter()
            .map(|&r| zc_root(r, params.n_zc))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { params, sequences })
    }
}

impl Default for PrachConfig {
    fn default() -> Self {
        PrachParams::default()
            .try_into()
            .expect("default PRACH parameters are valid")
    }
}

impl PrachConfig {
    pub fn params(&self) -> &PrachParams {
        &self.params
    }

    pub fn n_zc(&self) -> usize {
        self.params.n_zc
    }

    pub fn n_cs(&self) -> usize {
        self.params.n_cs
    }

    pub fn n_ant(&self) -> usize {
        self.params.n_ant
    }

    pub fn roots(&self) -> &[usize] {
        &self.params.roots
    }

    pub fn tau_e_max(&self) -> usize {
        self.params.tau_e_max
    }

    pub fn sample_period_s(&self) -> f64 {
        self.params.sample_period_us * 1e-6
    }

    pub fn shifts_per_root(&self) -> usize {
        self.params.n_zc / self.params.n_cs
    }

    /// Total preamble count `|roots| * floor(N_ZC / N_CS)`.
    pub fn n_preambles(&self) -> usize {
        self.params.roots.len() * self.shifts_per_root()
    }

    /// Transmit-side timing offset that centres the residual timing error
    /// inside the ZCZ.
    pub fn timing_guard(&self) -> i64 {
        self.params.tau_e_max as i64
    }

    /// Same configuration with a different antenna count.
    pub fn with_antennas(&self, n_ant: usize) -> Result<Self> {
        if n_ant == 0 {
            return Err(SignalError::NoAntennas);
        }
        let mut cfg = self.clone();
        cfg.params.n_ant = n_ant;
        Ok(cfg)
    }

    fn root_position(&self, root: usize) -> Result<usize> {
        self.params
            .roots
            .iter()
            .position(|&r| r == root)
            .ok_or(SignalError::UnknownRoot(root))
    }

    /// Cached root sequence `z_r`.
    pub fn root_sequence(&self, root: usize) -> Result<&[Cplx]> {
        Ok(&self.sequences[self.root_position(root)?])
    }

    /// Preamble for a global index; indices run root-major.
    pub fn preamble(&self, index: usize) -> Result<Preamble> {
        let n = self.n_preambles();
        if index >= n {
            return Err(SignalError::PreambleIndex {
                index,
                n_preambles: n,
            });
        }
        let per_root = self.shifts_per_root();
        Ok(Preamble {
            root: self.params.roots[index / per_root],
            shift: index % per_root,
        })
    }

    pub fn preamble_index(&self, p: Preamble) -> Result<usize> {
        self.validate_preamble(p)?;
        Ok(self.root_position(p.root)? * self.shifts_per_root() + p.shift)
    }

    pub fn validate_preamble(&self, p: Preamble) -> Result<()> {
        self.root_position(p.root)?;
        let per_root = self.shifts_per_root();
        if p.shift >= per_root {
            return Err(SignalError::ShiftOutOfRange {
                shift: p.shift,
                per_root,
            });
        }
        Ok(())
    }
}

/// One of the `N_PA` preambles: root index plus cyclic shift index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Preamble {
    pub root: usize,
    pub shift: usize,
}

/// A single user's preamble transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTx {
    /// Linear transmit power `P_d`.
    pub power: f64,
    pub preamble: Preamble,
    /// Applied timing-advance pre-compensation, in samples (cyclic advance).
    pub ta_precomp_samples: i64,
    /// Applied Doppler pre-compensation in Hz.
    pub freq_precomp_hz: f64,
    /// Residual timing error after pre-compensation, in samples.
    pub residual_timing_samples: i64,
    /// Residual carrier frequency offset in Hz.
    pub residual_freq_hz: f64,
}

impl UserTx {
    /// Unit-power user with no pre-compensation and no residual errors.
    pub fn ideal(preamble: Preamble) -> Self {
        Self {
            power: 1.0,
            preamble,
            ta_precomp_samples: 0,
            freq_precomp_hz: 0.0,
            residual_timing_samples: 0,
            residual_freq_hz: 0.0,
        }
    }

    pub fn validate(&self, cfg: &PrachConfig) -> Result<()> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(SignalError::Power(self.power));
        }
        if self.residual_timing_samples.unsigned_abs() as usize > cfg.tau_e_max() {
            return Err(SignalError::ResidualTiming {
                value: self.residual_timing_samples,
                bound: cfg.tau_e_max(),
            });
        }
        cfg.validate_preamble(self.preamble)
    }
}

/// Antenna-by-lag correlation magnitudes for one ZCZ, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationWindow {
    values: Vec<f64>,
    n_ant: usize,
    n_cs: usize,
    pub preamble_index: usize,
    pub root: usize,
}

impl CorrelationWindow {
    pub fn new(
        values: Vec<f64>,
        n_ant: usize,
        n_cs: usize,
        preamble_index: usize,
        root: usize,
    ) -> Result<Self> {
        if n_ant == 0
            || n_cs == 0
            || values.len() != n_ant * n_cs
            || values.iter().any(|v| !(*v >= 0.0))
        {
            return Err(SignalError::WindowShape { n_ant, n_cs });
        }
        Ok(Self {
            values,
            n_ant,
            n_cs,
            preamble_index,
            root,
        })
    }

    pub fn n_ant(&self) -> usize {
        self.n_ant
    }

    pub fn n_cs(&self) -> usize {
        self.n_cs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, ant: usize, lag: usize) -> f64 {
        self.values[ant * self.n_cs + lag]
    }

    pub fn row(&self, ant: usize) -> &[f64] {
        &self.values[ant * self.n_cs..(ant + 1) * self.n_cs]
    }

    /// Lag profile averaged over antennas.
    pub fn antenna_average(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.n_cs];
        for ant in 0..self.n_ant {
            for (a, v) in avg.iter_mut().zip(self.row(ant)) {
                *a += v;
            }
        }
        let scale = 1.0 / self.n_ant as f64;
        avg.iter_mut().for_each(|a| *a *= scale);
        avg
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Root Zadoff-Chu sequence `z_r[n] = exp(-j pi r n (n+1) / N_ZC)`.
pub fn zc_root(r: usize, n_zc: usize) -> Result<Vec<Cplx>> {
    if !is_prime(n_zc) {
        return Err(SignalError::NotPrime(n_zc));
    }
    if r == 0 || r >= n_zc {
        return Err(SignalError::RootOutOfRange { root: r, n_zc });
    }
    // Reduce the exponent modulo 2 N_ZC in integers; the phase is then
    // accurate to a few ulps regardless of n.
    let modulus = 2 * n_zc as u128;
    Ok((0..n_zc as u128)
        .map(|n| {
            let k = (r as u128 * n * (n + 1)) % modulus;
            Cplx::from_polar(1.0, -PI * k as f64 / n_zc as f64)
        })
        .collect())
}

/// Preamble sequence `z_{r,i}[n] = z_r[(n + i N_CS) mod N_ZC]`.
pub fn shifted_preamble(p: Preamble, cfg: &PrachConfig) -> Result<Vec<Cplx>> {
    cfg.validate_preamble(p)?;
    let z = cfg.root_sequence(p.root)?;
    Ok(rotate(z, (p.shift * cfg.n_cs()) as i64))
}

/// `out[n] = x[(n + advance) mod N]`.
fn rotate(x: &[Cplx], advance: i64) -> Vec<Cplx> {
    let n = x.len();
    let start = advance.rem_euclid(n as i64) as usize;
    x[start..].iter().chain(&x[..start]).copied().collect()
}

/// Correlation normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    /// `1/sqrt(N)`: delta auto-correlation of height `sqrt(N)`, unit cross-correlation.
    SqrtN,
    /// `1/N`: the receiver form.
    N,
}

impl Norm {
    fn scale(self, n: usize) -> f64 {
        match self {
            Norm::SqrtN => 1.0 / (n as f64).sqrt(),
            Norm::N => 1.0 / n as f64,
        }
    }
}

/// `|c[m]| = |scale * sum_n a[n] conj(b[(n+m) mod N])|` for every lag `m`.
pub fn cyclic_xcorr(a: &[Cplx], b: &[Cplx], norm: Norm) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(SignalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    let reference = conj_doubled(b);
    let scale = norm.scale(n);
    Ok((0..n)
        .map(|m| dot(a, &reference[m..m + n]).norm() * scale)
        .collect())
}

/// `conj(b)` repeated twice so lag slices need no modular indexing.
fn conj_doubled(b: &[Cplx]) -> Vec<Cplx> {
    b.iter().chain(b).map(|z| z.conj()).collect()
}

#[inline]
fn dot(a: &[Cplx], b: &[Cplx]) -> Cplx {
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re - x.im * y.im;
        im += x.re * y.im + x.im * y.re;
    }
    Cplx::new(re, im)
}

/// Baseband transmit signal: `sqrt(P) z_{r,i}[(n + ta) mod N] exp(-j 2 pi f n T_s)`.
pub fn synthesize_tx(u: &UserTx, cfg: &PrachConfig) -> Result<Vec<Cplx>> {
    u.validate(cfg)?;
    let z = cfg.root_sequence(u.preamble.root)?;
    let advance = (u.preamble.shift * cfg.n_cs()) as i64 + u.ta_precomp_samples;
    let amp = u.power.sqrt();
    let mut s = rotate(z, advance);
    apply_phase_ramp(&mut s, u.freq_precomp_hz, cfg.sample_period_s(), amp);
    Ok(s)
}

/// Multiplies by `amp * exp(-j 2 pi f n T_s)` in place.
fn apply_phase_ramp(x: &mut [Cplx], freq_hz: f64, ts: f64, amp: f64) {
    if freq_hz == 0.0 {
        if amp != 1.0 {
            x.iter_mut().for_each(|v| *v *= amp);
        }
        return;
    }
    let step = -2.0 * PI * freq_hz * ts;
    for (n, v) in x.iter_mut().enumerate() {
        *v *= Cplx::from_polar(amp, step * n as f64);
    }
}

/// Noise-free superposition of all users through their channels, one
/// sequence per antenna.
pub fn superpose_signal(
    users: &[UserTx],
    channels: &[ChannelRealization],
    cfg: &PrachConfig,
) -> Result<Vec<Vec<Cplx>>> {
    if users.len() != channels.len() {
        return Err(SignalError::ChannelCount {
            users: users.len(),
            channels: channels.len(),
        });
    }
    let n = cfg.n_zc();
    let n_ant = cfg.n_ant();
    let mut rx = vec![vec![Cplx::new(0.0, 0.0); n]; n_ant];
    for (u, ch) in users.iter().zip(channels) {
        if ch.n_ant() != n_ant {
            return Err(SignalError::ChannelAntennas {
                got: ch.n_ant(),
                expected: n_ant,
            });
        }
        let s = synthesize_tx(u, cfg)?;
        for (l, &delay) in ch.delays().iter().enumerate() {
            let shift = delay as i64 + u.residual_timing_samples;
            let start = shift.rem_euclid(n as i64) as usize;
            for (ant, y) in rx.iter_mut().enumerate() {
                let h = ch.gain(ant, l);
                if u.residual_freq_hz == 0.0 {
                    for (k, yk) in y.iter_mut().enumerate() {
                        let idx = if start + k >= n { start + k - n } else { start + k };
                        *yk += h * s[idx];
                    }
                } else {
                    let step = -2.0 * PI * u.residual_freq_hz * cfg.sample_period_s();
                    for (k, yk) in y.iter_mut().enumerate() {
                        let idx = (start + k) % n;
                        *yk += h * s[idx] * Cplx::from_polar(1.0, step * k as f64);
                    }
                }
            }
        }
    }
    Ok(rx)
}

/// Adds circularly-symmetric complex Gaussian noise of variance `noise_var`.
/// Draws nothing from `rng` when the variance is zero.
pub fn add_noise<R: Rng + ?Sized>(
    rx: &mut [Vec<Cplx>],
    noise_var: f64,
    rng: &mut R,
) -> Result<()> {
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(SignalError::NoiseVariance(noise_var));
    }
    if noise_var == 0.0 {
        return Ok(());
    }
    let sigma = (noise_var / 2.0).sqrt();
    for y in rx.iter_mut() {
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Cplx::new(sigma * re, sigma * im);
        }
    }
    Ok(())
}

/// Per-antenna received signal: sum over users and paths plus AWGN.
pub fn superpose_receive<R: Rng + ?Sized>(
    users: &[UserTx],
    channels: &[ChannelRealization],
    noise_var: f64,
    cfg: &PrachConfig,
    rng: &mut R,
) -> Result<Vec<Vec<Cplx>>> {
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(SignalError::NoiseVariance(noise_var));
    }
    let mut rx = superpose_signal(users, channels, cfg)?;
    add_noise(&mut rx, noise_var, rng)?;
    Ok(rx)
}

/// Noise variance for a per-sample SNR in dB with unit signal power.
pub fn noise_var_for_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn check_rx(rx: &[Vec<Cplx>], cfg: &PrachConfig) -> Result<()> {
    let bad = rx.len() != cfg.n_ant() || rx.iter().any(|y| y.len() != cfg.n_zc());
    if bad {
        return Err(SignalError::RxShape {
            ant: rx.len(),
            len: rx.first().map_or(0, Vec::len),
            exp_ant: cfg.n_ant(),
            exp_len: cfg.n_zc(),
        });
    }
    Ok(())
}

/// Correlates every antenna against root `root` over all lags (1/N_ZC
/// normalization) and slices one window per cyclic shift of that root.
pub fn correlate_windows(
    rx: &[Vec<Cplx>],
    root: usize,
    cfg: &PrachConfig,
) -> Result<Vec<CorrelationWindow>> {
    check_rx(rx, cfg)?;
    let z = cfg.root_sequence(root)?;
    let reference = conj_doubled(z);
    let n = cfg.n_zc();
    let n_cs = cfg.n_cs();
    let per_root = cfg.shifts_per_root();
    let scale = Norm::N.scale(n);
    let lags = per_root * n_cs;

    let profiles: Vec<Vec<f64>> = rx
        .iter()
        .map(|y| {
            (0..lags)
                .map(|m| dot(y, &reference[m..m + n]).norm() * scale)
                .collect()
        })
        .collect();

    let base = cfg.preamble_index(Preamble { root, shift: 0 })?;
    (0..per_root)
        .map(|i| {
            let values = profiles
                .iter()
                .flat_map(|p| p[i * n_cs..(i + 1) * n_cs].iter().copied())
                .collect();
            CorrelationWindow::new(values, cfg.n_ant(), n_cs, base + i, root)
        })
        .collect()
}

/// Window for one preamble only; identical to the matching entry of
/// [`correlate_windows`] at a fraction of the cost.
pub fn correlate_window(
    rx: &[Vec<Cplx>],
    preamble: Preamble,
    cfg: &PrachConfig,
) -> Result<CorrelationWindow> {
    check_rx(rx, cfg)?;
    let index = cfg.preamble_index(preamble)?;
    let reference = conj_doubled(cfg.root_sequence(preamble.root)?);
    let n = cfg.n_zc();
    let n_cs = cfg.n_cs();
    let scale = Norm::N.scale(n);
    let first = preamble.shift * n_cs;
    let values = rx
        .iter()
        .flat_map(|y| {
            let reference = &reference;
            (first..first + n_cs).map(move |m| dot(y, &reference[m..m + n]).norm() * scale)
        })
        .collect();
    CorrelationWindow::new(values, cfg.n_ant(), n_cs, index, preamble.root)
}

/// Conventional detection: antenna-averaged peak strictly above `threshold`.
pub fn threshold_detect(w: &CorrelationWindow, threshold: f64) -> bool {
    w.antenna_average()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
        > threshold
}
