//! Synthetic training data: windows of one ZCZ with a known number of
//! colliding users.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use super::{NetError, Result};
use crate::channel::{sample_channel, sample_timing_residual, TdlProfile};
use crate::prach::{
    correlate_window, noise_var_for_snr_db, superpose_receive, CorrelationWindow, PrachConfig,
    UserTx,
};
use crate::rng::{self, substream};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub window: CorrelationWindow,
    /// Collision class; `K` stands for "K or more users".
    pub label: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub profile: TdlProfile,
    pub k_max: usize,
    pub snr_grid: Vec<f64>,
    pub n_per_class_per_snr: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn n_classes(&self) -> usize {
        self.k_max + 1
    }

    pub fn validate(&self, cfg: &PrachConfig) -> Result<()> {
        if self.k_max < 1 {
            return Err(NetError::KMax(self.k_max));
        }
        if self.snr_grid.is_empty() {
            return Err(NetError::Empty("SNR grid"));
        }
        if self.n_per_class_per_snr == 0 {
            return Err(NetError::Empty("per-class sample count"));
        }
        if self.snr_grid.iter().any(|s| !s.is_finite()) {
            return Err(NetError::Format("SNR grid contains a non-finite value".into()));
        }
        self.profile
            .check_budget(cfg)
            .map_err(|e| NetError::Format(e.to_string()))
    }
}

/// One window with exactly `n_users` transmitters on a random preamble.
///
/// Every user applies the timing guard, gets its own residual timing error
/// and channel, and transmits at unit power. Values are rounded to `f32`,
/// the precision of the dataset file.
pub fn synthesize_window<R: Rng + ?Sized>(
    cfg: &PrachConfig,
    profile: &TdlProfile,
    n_users: usize,
    snr_db: f64,
    rng: &mut R,
) -> Result<CorrelationWindow> {
    let preamble = cfg.preamble(rng.random_range(0..cfg.n_preambles()))?;
    let mut users = Vec::with_capacity(n_users);
    let mut channels = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let mut u = UserTx::ideal(preamble);
        u.ta_precomp_samples = cfg.timing_guard();
        u.residual_timing_samples = sample_timing_residual(cfg.tau_e_max(), rng);
        users.push(u);
        channels.push(sample_channel(profile, cfg.n_ant(), rng));
    }
    let rx = superpose_receive(&users, &channels, noise_var_for_snr_db(snr_db), cfg, rng)?;
    let w = correlate_window(&rx, preamble, cfg)?;
    let values = w.values().iter().map(|&v| v as f32 as f64).collect();
    Ok(CorrelationWindow::new(
        values,
        w.n_ant(),
        w.n_cs(),
        w.preamble_index,
        w.root,
    )?)
}

/// Class-balanced dataset over `snr_grid x {0..=K}`.
///
/// Each (SNR, class) cell is generated from its own substream and the cells
/// are concatenated in grid order, so the output does not depend on the
/// number of worker threads.
pub fn gen_dataset(cfg: &PrachConfig, spec: &DatasetSpec) -> Result<Vec<LabeledWindow>> {
    spec.validate(cfg)?;
    let n_classes = spec.n_classes();
    let cells: Vec<(usize, usize)> = (0..spec.snr_grid.len())
        .flat_map(|s| (0..n_classes).map(move |k| (s, k)))
        .collect();
    let shards: Vec<Vec<LabeledWindow>> = cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(s, k))| {
            let snr_db = spec.snr_grid[s];
            let mut rng = substream(spec.seed, rng::DATASET, cell as u64);
            (0..spec.n_per_class_per_snr)
                .map(|_| {
                    let window = synthesize_window(cfg, &spec.profile, k, snr_db, &mut rng)?;
                    Ok(LabeledWindow {
                        window,
                        label: k,
                        snr_db,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(shards.into_iter().flatten().collect())
}

/// Splits every (class, SNR) group into its first `ceil(frac * n)` items for
/// training and the rest for testing, preserving order.
pub fn split_stratified(
    data: &[LabeledWindow],
    train_frac: f64,
) -> (Vec<LabeledWindow>, Vec<LabeledWindow>) {
    let mut totals: HashMap<(usize, u64), usize> = HashMap::new();
    for s in data {
        *totals.entry((s.label, s.snr_db.to_bits())).or_default() += 1;
    }
    let mut seen: HashMap<(usize, u64), usize> = HashMap::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for s in data {
        let key = (s.label, s.snr_db.to_bits());
        let quota = (train_frac * totals[&key] as f64).round() as usize;
        let count = seen.entry(key).or_default();
        if *count < quota {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
        *count += 1;
    }
    (train, test)
}
