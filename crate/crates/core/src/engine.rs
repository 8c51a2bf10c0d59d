//! Discrete-event simulation of the four-step random access procedure.
//!
//! Per user and attempt, with one-way delay `d` and preamble slot time `t`:
//!
//! ```text
//! t                               preamble starts (Step 1)
//! t + step1 + 2d                  RAR window opens (RTT-offset)
//! t + step1 + 2d + detect + step2 RAR arrives, Step-3 decision
//! ... + proc23 + step3            Step 3 ends, CR timer starts
//! ... + 2d + step4                Step 4 received: success
//! Step-3 end + cr_window          CR timer expiry: failure
//! ```
//!
//! A failed attempt (no RAR, opportunistic back-off, or Step-3 collision)
//! makes the user ready again after a uniform back-off; it then joins the
//! first RACH slot at or after that time. The single-user success delay is
//! therefore `step1 + detect + step2 + proc23 + step3 + step4 + 4d`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{sample_channel, sample_propagation_delay, sample_timing_residual, GeometryModel, TdlProfile};
use crate::net::{Classifier, CollisionNet, ConfusionMatrix, NetError};
use crate::policy::{build_policy, user_decision, Decision, PolicyEntry, PolicyError, Scheme};
use crate::prach::{
    correlate_windows, noise_var_for_snr_db, superpose_receive, PrachConfig, SignalError, UserTx,
};
use crate::rng::{self, substream, SimRng};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation configuration: {0}")]
    Config(String),
    #[error("the trained detector needs classifier weights and a confusion matrix")]
    MissingArtifacts,
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// True per-preamble counts, clamped at `K`.
    Oracle,
    /// CNN classification of synthesized correlation windows.
    Trained,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Oracle => "oracle",
            DetectorKind::Trained => "trained",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(DetectorKind::Oracle),
            "trained" | "trained_classifier" => Some(DetectorKind::Trained),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_slots: usize,
    pub slot_period_ms: f64,
    pub max_retries: u32,
    pub t_step1_ms: f64,
    pub t_detect_ms: f64,
    pub t_step2_ms: f64,
    pub t_proc23_ms: f64,
    pub t_step3_ms: f64,
    pub t_step4_ms: f64,
    pub rar_window_ms: f64,
    pub cr_window_ms: f64,
    pub backoff_window_ms: f64,
    pub scheme: Scheme,
    pub detector: DetectorKind,
    /// Largest collision class `K` of the oracle detector.
    pub k_max: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub prach: PrachConfig,
    pub geometry: GeometryModel,
    /// Channel profile used to synthesize windows for the trained detector.
    pub profile: TdlProfile,
    /// Preamble index every user picks on its first attempt.
    pub forced_preamble: Option<usize>,
    /// Poisson arrivals per ms instead of a full backlog at time zero.
    pub arrival_rate_per_ms: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_users: 50,
            n_slots: 2000,
            slot_period_ms: 5.0,
            max_retries: 10,
            t_step1_ms: 1.0,
            t_detect_ms: 2.0,
            t_step2_ms: 1.0,
            t_proc23_ms: 3.0,
            t_step3_ms: 3.0,
            t_step4_ms: 1.0,
            rar_window_ms: 10.0,
            cr_window_ms: 64.0,
            backoff_window_ms: 20.0,
            scheme: Scheme::Proposed,
            detector: DetectorKind::Oracle,
            k_max: 6,
            snr_db: 10.0,
            seed: 0,
            prach: PrachConfig::default(),
            geometry: GeometryModel::default(),
            profile: TdlProfile::los_default(),
            forced_preamble: None,
            arrival_rate_per_ms: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("slot_period_ms", self.slot_period_ms),
            ("t_step1_ms", self.t_step1_ms),
            ("t_detect_ms", self.t_detect_ms),
            ("t_step2_ms", self.t_step2_ms),
            ("t_proc23_ms", self.t_proc23_ms),
            ("t_step3_ms", self.t_step3_ms),
            ("t_step4_ms", self.t_step4_ms),
            ("rar_window_ms", self.rar_window_ms),
            ("cr_window_ms", self.cr_window_ms),
            ("backoff_window_ms", self.backoff_window_ms),
        ];
        for (name, v) in durations {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EngineError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_slots == 0 {
            return Err(EngineError::Config("n_slots must be at least 1".into()));
        }
        if self.max_retries == 0 {
            return Err(EngineError::Config("max_retries must be at least 1".into()));
        }
        if self.k_max == 0 {
            return Err(EngineError::Config("k_max must be at least 1".into()));
        }
        if self.t_detect_ms + self.t_step2_ms > self.rar_window_ms {
            return Err(EngineError::Config(
                "RAR cannot arrive within the RAR window (t_detect + t_step2 > rar_window)".into(),
            ));
        }
        if let Some(p) = self.forced_preamble {
            if p >= self.prach.n_preambles() {
                return Err(EngineError::Config(format!(
                    "forced preamble {p} outside 0..{}",
                    self.prach.n_preambles()
                )));
            }
        }
        if let Some(rate) = self.arrival_rate_per_ms {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(EngineError::Config(format!("arrival rate must be positive, got {rate}")));
            }
        }
        Ok(())
    }

    pub fn horizon_ms(&self) -> f64 {
        self.n_slots as f64 * self.slot_period_ms
    }

    /// Success delay of an uncontended first attempt with one-way delay `d`.
    pub fn single_attempt_delay_ms(&self, one_way_ms: f64) -> f64 {
        self.t_step1_ms
            + self.t_detect_ms
            + self.t_step2_ms
            + self.t_proc23_ms
            + self.t_step3_ms
            + self.t_step4_ms
            + 4.0 * one_way_ms
    }
}

/// Classifier and its confusion matrix for the trained detector.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub net: CollisionNet,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Waiting for its first attempt.
    Idle,
    AwaitingRar,
    AwaitingCr,
    BackedOff,
    Succeeded,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Succeeded | Phase::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserState {
    pub id: usize,
    pub phase: Phase,
    pub attempt_count: u32,
    pub chosen_preamble: Option<usize>,
    pub one_way_delay_ms: f64,
    pub first_attempt_time_ms: Option<f64>,
    pub outcome_time_ms: Option<f64>,
    /// Earliest time the user may start its next attempt.
    #[serde(skip)]
    ready_ms: f64,
}

impl UserState {
    pub fn delay_ms(&self) -> Option<f64> {
        Some(self.outcome_time_ms? - self.first_attempt_time_ms?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotStats {
    pub index: usize,
    pub time_ms: f64,
    pub attempts: usize,
    pub grants: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    /// Mean delay over users that succeeded or exhausted their retries.
    pub avg_delay_ms: f64,
    /// Mean delay over succeeded users only.
    pub avg_delay_success_ms: f64,
    pub n_success: usize,
    pub n_failed: usize,
    pub n_in_flight: usize,
    pub n_grants: usize,
    pub n_grants_used: usize,
    /// Successful grants over issued grants; 1.0 when `no_grants` is set.
    pub pusch_utilization: f64,
    pub no_grants: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub metrics: SimMetrics,
    pub users: Vec<UserState>,
    pub slots: Vec<SlotStats>,
}

/// Outcome of one Step-3 grant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step3Outcome {
    Success(usize),
    /// No transmitter: the resource is wasted.
    Wasted,
    /// Two or more transmitters: nobody is decoded.
    Collision(Vec<usize>),
}

pub fn resolve_step3(transmitters: &[usize]) -> Step3Outcome {
    match transmitters {
        [] => Step3Outcome::Wasted,
        [u] => Step3Outcome::Success(*u),
        many => Step3Outcome::Collision(many.to_vec()),
    }
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Slot(usize),
    RarArrival { user: usize, grant: usize },
    RarTimeout(usize),
    Step4Due { user: usize, grant: usize },
    CrTimeout(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so that `BinaryHeap` pops the earliest event first; ties
    /// resolve in scheduling order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Grant {
    transmit_prob: f64,
    transmitters: Vec<usize>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    artifacts: Option<&'a Artifacts>,
    oracle_q: ConfusionMatrix,
    users: Vec<UserState>,
    grants: Vec<Grant>,
    slots: Vec<SlotStats>,
    queue: BinaryHeap<Event>,
    seq: u64,
    rng: SimRng,
}

impl Sim<'_> {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn trained(&self) -> Option<&Artifacts> {
        self.artifacts
            .filter(|_| self.cfg.detector == DetectorKind::Trained)
    }

    fn confusion(&self) -> &ConfusionMatrix {
        self.trained().map_or(&self.oracle_q, |a| &a.confusion)
    }

    fn fail_attempt(&mut self, user: usize, now: f64) {
        let u = &mut self.users[user];
        if u.attempt_count >= self.cfg.max_retries {
            u.phase = Phase::Failed;
            u.outcome_time_ms = Some(now);
            return;
        }
        u.phase = Phase::BackedOff;
        u.ready_ms = now + self.rng.random_range(0.0..=self.cfg.backoff_window_ms);
    }

    /// Per-preamble class estimates for one slot.
    fn detect(&self, slot: usize, counts: &[usize], attempting: &[(usize, usize)]) -> Result<Vec<usize>> {
        let Some(art) = self.trained() else {
            let k_max = self.cfg.k_max;
            return Ok(counts.iter().map(|&k| k.min(k_max)).collect());
        };
        let prach = &self.cfg.prach;
        let mut chan_rng = substream(self.cfg.seed, rng::CHANNEL, slot as u64);
        let noise_var = noise_var_for_snr_db(self.cfg.snr_db);
        let mut k_hats = vec![0; prach.n_preambles()];
        for &root in prach.roots() {
            let mut users = Vec::new();
            let mut channels = Vec::new();
            for &(_, p_idx) in attempting {
                let preamble = prach.preamble(p_idx)?;
                if preamble.root != root {
                    continue;
                }
                let mut tx = UserTx::ideal(preamble);
                tx.ta_precomp_samples = prach.timing_guard();
                tx.residual_timing_samples = sample_timing_residual(prach.tau_e_max(), &mut chan_rng);
                users.push(tx);
                channels.push(sample_channel(&self.cfg.profile, prach.n_ant(), &mut chan_rng));
            }
            let rx = superpose_receive(&users, &channels, noise_var, prach, &mut chan_rng)?;
            for w in correlate_windows(&rx, root, prach)? {
                k_hats[w.preamble_index] = art.net.predict(&w)?;
            }
        }
        Ok(k_hats)
    }

    fn on_slot(&mut self, slot: usize, now: f64) -> Result<()> {
        let cfg = self.cfg;
        let n_pa = cfg.prach.n_preambles();
        let mut attempting = Vec::new();
        for id in 0..self.users.len() {
            let u = &self.users[id];
            if !matches!(u.phase, Phase::Idle | Phase::BackedOff) || u.ready_ms > now {
                continue;
            }
            let preamble = match (u.attempt_count, cfg.forced_preamble) {
                (0, Some(p)) => p,
                _ => self.rng.random_range(0..n_pa),
            };
            let u = &mut self.users[id];
            u.attempt_count += 1;
            u.chosen_preamble = Some(preamble);
            u.phase = Phase::AwaitingRar;
            u.first_attempt_time_ms.get_or_insert(now);
            attempting.push((id, preamble));
        }
        let mut stats = SlotStats {
            index: slot,
            time_ms: now,
            attempts: attempting.len(),
            grants: 0,
        };
        if attempting.is_empty() {
            self.slots.push(stats);
            return Ok(());
        }

        let mut counts = vec![0usize; n_pa];
        for &(_, p) in &attempting {
            counts[p] += 1;
        }
        let k_hats = self.detect(slot, &counts, &attempting)?;
        let policy = build_policy(&k_hats, self.confusion(), cfg.scheme)?;
        let first_grant = self.grants.len();
        self.grants.extend(policy.entries.iter().map(|e| Grant {
            transmit_prob: e.transmit_prob,
            transmitters: Vec::new(),
        }));
        stats.grants = policy.entries.len();
        self.slots.push(stats);

        for (id, p) in attempting {
            let window_open = now + cfg.t_step1_ms + 2.0 * self.users[id].one_way_delay_ms;
            match policy.entry_for(p) {
                Some(entry) => self.schedule(
                    window_open + cfg.t_detect_ms + cfg.t_step2_ms,
                    EventKind::RarArrival {
                        user: id,
                        grant: first_grant + entry.grant_id,
                    },
                ),
                None => self.schedule(window_open + cfg.rar_window_ms, EventKind::RarTimeout(id)),
            }
        }
        Ok(())
    }

    fn on_rar(&mut self, user: usize, grant: usize, now: f64) {
        let cfg = self.cfg;
        let entry = PolicyEntry {
            preamble_index: 0,
            k_hat: 0,
            transmit_prob: self.grants[grant].transmit_prob,
            grant_id: grant,
            temp_id: 0,
        };
        match user_decision(&entry, &mut self.rng) {
            Decision::TransmitStep3 => {
                self.grants[grant].transmitters.push(user);
                self.users[user].phase = Phase::AwaitingCr;
                let step3_end = now + cfg.t_proc23_ms + cfg.t_step3_ms;
                let d = self.users[user].one_way_delay_ms;
                self.schedule(
                    step3_end + 2.0 * d + cfg.t_step4_ms,
                    EventKind::Step4Due { user, grant },
                );
            }
            Decision::Backoff => self.fail_attempt(user, now),
        }
    }

    fn on_step4(&mut self, user: usize, grant: usize, now: f64) {
        match resolve_step3(&self.grants[grant].transmitters) {
            Step3Outcome::Success(winner) if winner == user => {
                let u = &mut self.users[user];
                u.phase = Phase::Succeeded;
                u.outcome_time_ms = Some(now);
            }
            _ => {
                // No Step 4 arrives; the user waits for its CR timer.
                let cfg = self.cfg;
                let d = self.users[user].one_way_delay_ms;
                let step3_end = now - 2.0 * d - cfg.t_step4_ms;
                self.schedule(step3_end + cfg.cr_window_ms, EventKind::CrTimeout(user));
            }
        }
    }

    fn metrics(&self) -> SimMetrics {
        let mut all = Vec::new();
        let mut ok = Vec::new();
        let (mut n_success, mut n_failed) = (0, 0);
        for u in &self.users {
            match u.phase {
                Phase::Succeeded => {
                    n_success += 1;
                    ok.extend(u.delay_ms());
                    all.extend(u.delay_ms());
                }
                Phase::Failed => {
                    n_failed += 1;
                    all.extend(u.delay_ms());
                }
                _ => {}
            }
        }
        let mean = |v: &[f64]| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let n_grants = self.grants.len();
        let n_grants_used = self
            .grants
            .iter()
            .filter(|g| g.transmitters.len() == 1)
            .count();
        SimMetrics {
            avg_delay_ms: mean(&all),
            avg_delay_success_ms: mean(&ok),
            n_success,
            n_failed,
            n_in_flight: self.users.len() - n_success - n_failed,
            n_grants,
            n_grants_used,
            pusch_utilization: if n_grants == 0 {
                1.0
            } else {
                n_grants_used as f64 / n_grants as f64
            },
            no_grants: n_grants == 0,
        }
    }
}

/// Runs one scenario to the horizon `n_slots * slot_period_ms`.
///
/// Users still mid-procedure at the horizon are reported as in flight and
/// left out of the delay averages.
pub fn run_scenario(cfg: &SimConfig, artifacts: Option<&Artifacts>) -> Result<ScenarioResult> {
    cfg.validate()?;
    if cfg.detector == DetectorKind::Trained {
        let art = artifacts.ok_or(EngineError::MissingArtifacts)?;
        let arch = art.net.arch();
        if arch.n_classes != art.confusion.n_classes() {
            return Err(EngineError::Config(format!(
                "classifier has {} classes, confusion matrix {}",
                arch.n_classes,
                art.confusion.n_classes()
            )));
        }
        if arch.n_ant != cfg.prach.n_ant() || arch.n_cs != cfg.prach.n_cs() {
            return Err(EngineError::Config(format!(
                "classifier expects {}x{} windows, receiver produces {}x{}",
                arch.n_ant,
                arch.n_cs,
                cfg.prach.n_ant(),
                cfg.prach.n_cs()
            )));
        }
    }

    let mut rng = substream(cfg.seed, rng::PROTOCOL, 0);
    let mut arrival = 0.0;
    let users = (0..cfg.n_users)
        .map(|id| {
            let one_way = sample_propagation_delay(&cfg.geometry, &mut rng);
            if let Some(rate) = cfg.arrival_rate_per_ms {
                arrival += -(1.0 - rng.random::<f64>()).ln() / rate;
            }
            UserState {
                id,
                phase: Phase::Idle,
                attempt_count: 0,
                chosen_preamble: None,
                one_way_delay_ms: one_way,
                first_attempt_time_ms: None,
                outcome_time_ms: None,
                ready_ms: arrival,
            }
        })
        .collect();

    let mut sim = Sim {
        cfg,
        artifacts,
        oracle_q: ConfusionMatrix::identity(cfg.k_max + 1),
        users,
        grants: Vec::new(),
        slots: Vec::with_capacity(cfg.n_slots),
        queue: BinaryHeap::new(),
        seq: 0,
        rng,
    };
    for s in 0..cfg.n_slots {
        sim.schedule(s as f64 * cfg.slot_period_ms, EventKind::Slot(s));
    }
    let horizon = cfg.horizon_ms();
    while let Some(ev) = sim.queue.pop() {
        if ev.time > horizon {
            break;
        }
        match ev.kind {
            EventKind::Slot(s) => sim.on_slot(s, ev.time)?,
            EventKind::RarArrival { user, grant } => sim.on_rar(user, grant, ev.time),
            EventKind::RarTimeout(user) | EventKind::CrTimeout(user) => {
                sim.fail_attempt(user, ev.time)
            }
            EventKind::Step4Due { user, grant } => sim.on_step4(user, grant, ev.time),
        }
    }
    Ok(ScenarioResult {
        metrics: sim.metrics(),
        users: sim.users,
        slots: sim.slots,
    })
}

/// One sweep cell: a scheme at a user count for one repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub detector: DetectorKind,
    pub n_users: usize,
    pub rep: usize,
    pub seed: u64,
    pub metrics: SimMetrics,
}

/// Mean and standard error of the metrics across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub scheme: Scheme,
    pub detector: DetectorKind,
    pub n_users: usize,
    pub n_reps: usize,
    pub avg_delay_ms: (f64, f64),
    pub n_success: (f64, f64),
    pub pusch_utilization: (f64, f64),
}

/// Scenario seed for a (user count, repetition) cell. All schemes share it,
/// so they see the same user geometry.
pub fn cell_seed(base: u64, users_index: usize, rep: usize) -> u64 {
    substream(base, "sweep", ((users_index as u64) << 32) | rep as u64).random()
}

/// Runs every (scheme, user count, repetition) cell, concurrently, and
/// returns rows in cell order.
pub fn sweep(
    template: &SimConfig,
    schemes: &[Scheme],
    user_counts: &[usize],
    n_reps: usize,
    artifacts: Option<&Artifacts>,
) -> Result<Vec<SweepRow>> {
    if schemes.is_empty() || user_counts.is_empty() || n_reps == 0 {
        return Err(EngineError::Config(
            "sweep needs at least one scheme, user count and repetition".into(),
        ));
    }
    let cells: Vec<(Scheme, usize, usize)> = schemes
        .iter()
        .flat_map(|&s| {
            (0..user_counts.len()).flat_map(move |u| (0..n_reps).map(move |r| (s, u, r)))
        })
        .collect();
    cells
        .par_iter()
        .map(|&(scheme, ui, rep)| {
            let mut cfg = template.clone();
            cfg.scheme = scheme;
            cfg.n_users = user_counts[ui];
            cfg.seed = cell_seed(template.seed, ui, rep);
            let result = run_scenario(&cfg, artifacts)?;
            Ok(SweepRow {
                scheme,
                detector: cfg.detector,
                n_users: cfg.n_users,
                rep,
                seed: cfg.seed,
                metrics: result.metrics,
            })
        })
        .collect()
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One summary per (scheme, user count), in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut keys: Vec<(Scheme, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.scheme, r.n_users)) {
            keys.push((r.scheme, r.n_users));
        }
    }
    keys.into_iter()
        .map(|(scheme, n_users)| {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.scheme == scheme && r.n_users == n_users)
                .collect();
            let col = |f: fn(&SimMetrics) -> f64| -> Vec<f64> { cell.iter().map(|r| f(&r.metrics)).collect() };
            SweepSummary {
                scheme,
                detector: cell[0].detector,
                n_users,
                n_reps: cell.len(),
                avg_delay_ms: mean_stderr(&col(|m| m.avg_delay_ms)),
                n_success: mean_stderr(&col(|m| m.n_success as f64)),
                pusch_utilization: mean_stderr(&col(|m| m.pusch_utilization)),
            }
        })
        .collect()
}
