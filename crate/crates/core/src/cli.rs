//! Command-line orchestration.
//!
//! Every run resolves one flat configuration (built-in defaults, then an
//! optional JSON file, then `--set key=value` overrides), writes it to
//! `effective_config.json` in the output directory, produces its artifacts,
//! and finally writes `manifest.json` with SHA-256 checksums of the config
//! and of every artifact. All randomness derives from the mandatory `--seed`.
//!
//! Exit status: 0 on success, 2 on usage errors (bad flags, unknown or
//! malformed configuration keys, missing inputs), 1 on runtime failures. On
//! failure every file written by the run is removed again.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::channel::{GeometryModel, TdlProfile};
use crate::engine::{self, Artifacts, DetectorKind, SimConfig, SimMetrics};
use crate::net::{
    self, evaluate, evaluate_by_snr, io, ClassifierArch, ConfusionMatrix, DatasetSpec, EvalReport,
    LabeledWindow, TrainConfig,
};
use crate::policy::Scheme;
use crate::prach::{PrachConfig, PrachParams};

#[derive(Debug, Parser)]
#[command(name = "leo-rach", version, about = "LEO random access: datasets, classifier training, protocol simulation")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a labeled correlation-window dataset.
    GenData(CommonArgs),
    /// Train the collision classifier and export its confusion matrix.
    Train(CommonArgs),
    /// Evaluate trained weights per SNR.
    Eval(CommonArgs),
    /// Run one protocol scenario.
    Simulate(CommonArgs),
    /// Run a (scheme x user count x repetition) protocol sweep.
    Sweep(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::GenData(c)
            | Command::Train(c)
            | Command::Eval(c)
            | Command::Simulate(c)
            | Command::Sweep(c) => c,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// JSON configuration file, or `base` for the built-in defaults.
    #[arg(long, default_value = "base")]
    pub config: String,
    /// Top-level seed for every random stream.
    #[arg(long)]
    pub seed: u64,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Configuration override `key=value`; values parse as JSON, else as text.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Also write a per-user trace (simulate).
    #[arg(long)]
    pub trace: bool,
}

/// Flat run configuration; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    // Receiver.
    pub n_zc: usize,
    pub n_cs: usize,
    pub roots: Vec<usize>,
    pub n_ant: usize,
    pub tau_max: usize,
    pub tau_e_max: usize,
    /// `los`, `nlos` (aliases `tdl-d`, `tdl-b`) or a profile file path.
    pub channel_profile: String,

    // Dataset.
    pub k_max: usize,
    pub snr_grid: Vec<f64>,
    pub n_per_class_per_snr: usize,
    pub train_frac: f64,
    pub data_path: Option<PathBuf>,

    // Training.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weights_path: Option<PathBuf>,
    pub confusion_path: Option<PathBuf>,

    // Protocol.
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
    pub scheme: String,
    pub detector: String,
    pub snr_db: f64,
    pub delay_min_ms: f64,
    pub delay_max_ms: f64,
    pub forced_preamble: Option<usize>,
    pub arrival_rate_per_ms: Option<f64>,

    // Sweep.
    pub schemes: Vec<String>,
    pub user_counts: Vec<usize>,
    pub n_reps: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        let prach = PrachParams::default();
        let sim = SimConfig::default();
        let train = TrainConfig::default();
        let (delay_min_ms, delay_max_ms) = sim.geometry.range_ms();
        Self {
            n_zc: prach.n_zc,
            n_cs: prach.n_cs,
            roots: prach.roots,
            n_ant: prach.n_ant,
            tau_max: prach.tau_max,
            tau_e_max: prach.tau_e_max,
            channel_profile: "los".into(),
            k_max: 6,
            snr_grid: vec![-13.0, -12.0, -11.0, -10.0],
            n_per_class_per_snr: 10_000,
            train_frac: 0.7,
            data_path: None,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            epochs: train.epochs,
            adam_beta1: train.betas.0,
            adam_beta2: train.betas.1,
            adam_epsilon: train.epsilon,
            weights_path: None,
            confusion_path: None,
            n_users: sim.n_users,
            n_slots: sim.n_slots,
            slot_period_ms: sim.slot_period_ms,
            max_retries: sim.max_retries,
            t_step1_ms: sim.t_step1_ms,
            t_detect_ms: sim.t_detect_ms,
            t_step2_ms: sim.t_step2_ms,
            t_proc23_ms: sim.t_proc23_ms,
            t_step3_ms: sim.t_step3_ms,
            t_step4_ms: sim.t_step4_ms,
            rar_window_ms: sim.rar_window_ms,
            cr_window_ms: sim.cr_window_ms,
            backoff_window_ms: sim.backoff_window_ms,
            scheme: sim.scheme.to_string(),
            detector: sim.detector.as_str().into(),
            snr_db: sim.snr_db,
            delay_min_ms,
            delay_max_ms,
            forced_preamble: None,
            arrival_rate_per_ms: None,
            schemes: Scheme::ALL.iter().map(|s| s.to_string()).collect(),
            user_counts: vec![50, 100, 150, 200, 250, 300],
            n_reps: 5,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

/// Merges defaults, an optional JSON file and `key=value` overrides.
pub fn resolve_params(config: &str, overrides: &[String]) -> Result<RunParams, CliError> {
    let Value::Object(mut map) = serde_json::to_value(RunParams::default()).expect("defaults serialize") else {
        unreachable!("RunParams serializes to an object");
    };
    let mut apply = |key: &str, value: Value, origin: &str| -> Result<(), CliError> {
        match map.get_mut(key) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => usage(format!("unknown config key `{key}` ({origin})")),
        }
    };
    if config != "base" {
        let text = match fs::read_to_string(config) {
            Ok(t) => t,
            Err(e) => return usage(format!("cannot read config file {config}: {e}")),
        };
        let file: Map<String, Value> = match serde_json::from_str(&text) {
            Ok(m) => m,
            Err(e) => return usage(format!("config file {config} is not a JSON object: {e}")),
        };
        for (k, v) in file {
            apply(&k, v, config)?;
        }
    }
    for o in overrides {
        let Some((key, raw)) = o.split_once('=') else {
            return usage(format!("malformed override `{o}`, expected key=value"));
        };
        let key = key.trim();
        if key.is_empty() {
            return usage(format!("malformed override `{o}`, empty key"));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        apply(key, value, "--set")?;
    }
    serde_json::from_value(Value::Object(map)).or_else(|e| usage(format!("invalid configuration: {e}")))
}

impl RunParams {
    fn prach(&self) -> Result<PrachConfig, CliError> {
        PrachParams {
            n_zc: self.n_zc,
            n_cs: self.n_cs,
            roots: self.roots.clone(),
            n_ant: self.n_ant,
            tau_max: self.tau_max,
            tau_e_max: self.tau_e_max,
            ..PrachParams::default()
        }
        .try_into()
        .or_else(|e| usage(format!("invalid receiver configuration: {e}")))
    }

    fn profile(&self) -> Result<TdlProfile, CliError> {
        if let Ok(p) = TdlProfile::by_name(&self.channel_profile) {
            return Ok(p);
        }
        TdlProfile::load(Path::new(&self.channel_profile))
            .or_else(|e| usage(format!("channel profile {:?}: {e}", self.channel_profile)))
    }

    fn dataset_spec(&self, seed: u64) -> Result<DatasetSpec, CliError> {
        Ok(DatasetSpec {
            profile: self.profile()?,
            k_max: self.k_max,
            snr_grid: self.snr_grid.clone(),
            n_per_class_per_snr: self.n_per_class_per_snr,
            seed,
        })
    }

    fn train_config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let tc = TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            betas: (self.adam_beta1, self.adam_beta2),
            epsilon: self.adam_epsilon,
            seed,
        };
        tc.validate().or_else(|e| usage(e.to_string()))?;
        Ok(tc)
    }

    fn scheme(name: &str) -> Result<Scheme, CliError> {
        name.parse().or_else(|e: crate::policy::PolicyError| usage(e.to_string()))
    }

    fn sim_config(&self, seed: u64) -> Result<SimConfig, CliError> {
        let Some(detector) = DetectorKind::parse(&self.detector) else {
            return usage(format!(
                "unknown detector {:?} (expected oracle or trained)",
                self.detector
            ));
        };
        let geometry = GeometryModel::new(self.delay_min_ms, self.delay_max_ms)
            .or_else(|e| usage(e.to_string()))?;
        let cfg = SimConfig {
            n_users: self.n_users,
            n_slots: self.n_slots,
            slot_period_ms: self.slot_period_ms,
            max_retries: self.max_retries,
            t_step1_ms: self.t_step1_ms,
            t_detect_ms: self.t_detect_ms,
            t_step2_ms: self.t_step2_ms,
            t_proc23_ms: self.t_proc23_ms,
            t_step3_ms: self.t_step3_ms,
            t_step4_ms: self.t_step4_ms,
            rar_window_ms: self.rar_window_ms,
            cr_window_ms: self.cr_window_ms,
            backoff_window_ms: self.backoff_window_ms,
            scheme: Self::scheme(&self.scheme)?,
            detector,
            k_max: self.k_max,
            snr_db: self.snr_db,
            seed,
            prach: self.prach()?,
            geometry,
            profile: self.profile()?,
            forced_preamble: self.forced_preamble,
            arrival_rate_per_ms: self.arrival_rate_per_ms,
        };
        cfg.validate().or_else(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    fn artifacts(&self, detector: DetectorKind) -> Result<Option<Artifacts>, CliError> {
        if detector == DetectorKind::Oracle {
            return Ok(None);
        }
        let (Some(w), Some(c)) = (&self.weights_path, &self.confusion_path) else {
            return usage("the trained detector needs weights_path and confusion_path");
        };
        let net = io::load_weights(w).with_context(|| format!("loading weights {}", w.display()))?;
        let text = fs::read_to_string(c).with_context(|| format!("reading {}", c.display()))?;
        let confusion = ConfusionMatrix::from_csv(&text).with_context(|| format!("parsing {}", c.display()))?;
        Ok(Some(Artifacts { net, confusion }))
    }
}

/// Files written by a run, removed again if the run fails.
struct Outputs {
    dir: PathBuf,
    written: Vec<(String, PathBuf)>,
    keep: bool,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        // Track first so that a half-written file is also cleaned up.
        self.written.push((name.to_string(), path.clone()));
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.keep {
            for (_, path) in &self.written {
                let _ = fs::remove_file(path);
            }
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct EffectiveConfig<'a> {
    command: &'a str,
    seed: u64,
    config: &'a RunParams,
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    seed: u64,
    config_sha256: String,
    artifacts: Vec<ManifestEntry>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| x.to_string())
}

fn eval_csv(rows: &[(String, EvalReport)]) -> String {
    let mut s = String::from("snr_db,n,accuracy,misdetection,false_alarm\n");
    for (label, r) in rows {
        let _ = writeln!(
            s,
            "{label},{},{},{},{}",
            r.n,
            r.accuracy,
            opt(r.misdetection),
            opt(r.false_alarm)
        );
    }
    s
}

pub const METRICS_HEADER: &str = "scheme,detector,n_users,rep,avg_delay_ms,n_success,pusch_utilization,avg_delay_success_ms,n_failed,n_in_flight,n_grants,no_grants";

fn metrics_row(scheme: Scheme, detector: DetectorKind, n_users: usize, rep: usize, m: &SimMetrics) -> String {
    format!(
        "{scheme},{},{n_users},{rep},{},{},{},{},{},{},{},{}\n",
        detector.as_str(),
        m.avg_delay_ms,
        m.n_success,
        m.pusch_utilization,
        m.avg_delay_success_ms,
        m.n_failed,
        m.n_in_flight,
        m.n_grants,
        m.no_grants
    )
}

fn load_or_generate(p: &RunParams, prach: &PrachConfig, seed: u64) -> Result<(Vec<LabeledWindow>, usize), CliError> {
    match &p.data_path {
        Some(path) => Ok(io::load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?),
        None => {
            let spec = p.dataset_spec(seed)?;
            spec.validate(prach).or_else(|e| usage(e.to_string()))?;
            Ok((net::gen_dataset(prach, &spec).context("generating dataset")?, p.k_max))
        }
    }
}

fn dispatch(cmd: &Command, p: &RunParams, out: &mut Outputs) -> Result<String, CliError> {
    let c = cmd.common();
    let seed = c.seed;
    match cmd {
        Command::GenData(_) => {
            let prach = p.prach()?;
            let spec = p.dataset_spec(seed)?;
            spec.validate(&prach).or_else(|e| usage(e.to_string()))?;
            let data = net::gen_dataset(&prach, &spec).context("generating dataset")?;
            let bytes = io::encode_dataset_with_k(&data, prach.n_ant(), prach.n_cs(), p.k_max)
                .context("encoding dataset")?;
            out.write("dataset.bin", &bytes)?;
            Ok(format!("wrote {} windows", data.len()))
        }
        Command::Train(_) => {
            let prach = p.prach()?;
            let tc = p.train_config(seed)?;
            let (data, k_max) = load_or_generate(p, &prach, seed)?;
            if k_max != p.k_max {
                return Err(anyhow::anyhow!("dataset has K={k_max} but the configuration says k_max={}", p.k_max).into());
            }
            let first = data.first().context("dataset is empty")?;
            let arch = ClassifierArch::new(first.window.n_ant(), first.window.n_cs(), k_max)
                .context("classifier architecture")?;
            if !(p.train_frac > 0.0 && p.train_frac < 1.0) {
                return usage(format!("train_frac must lie in (0, 1), got {}", p.train_frac));
            }
            let (train, test) = net::split_stratified(&data, p.train_frac);
            let (model, history) = net::train_classifier(arch, &train, &tc).context("training")?;
            let test = if test.is_empty() { &train } else { &test };
            let report = evaluate(&model, test).context("evaluating")?;

            out.write("weights.bin", &io::encode_weights(&model).context("encoding weights")?)?;
            let mut loss = String::from("epoch,mean_loss\n");
            for (i, l) in history.iter().enumerate() {
                let _ = writeln!(loss, "{},{l}", i + 1);
            }
            out.write("loss_history.csv", loss.as_bytes())?;
            out.write("confusion.csv", report.confusion.to_csv().as_bytes())?;
            let mut rows: Vec<(String, EvalReport)> = evaluate_by_snr(&model, test)
                .context("evaluating")?
                .into_iter()
                .map(|(snr, r)| (snr.to_string(), r))
                .collect();
            rows.push(("all".into(), report.clone()));
            out.write("eval.csv", eval_csv(&rows).as_bytes())?;
            Ok(format!(
                "trained on {} windows, test accuracy {:.4}",
                train.len(),
                report.accuracy
            ))
        }
        Command::Eval(_) => {
            let Some(w) = &p.weights_path else {
                return usage("eval needs weights_path");
            };
            let model = io::load_weights(w).with_context(|| format!("loading weights {}", w.display()))?;
            let mut prach = p.prach()?;
            if p.data_path.is_none() {
                prach = prach.with_antennas(model.arch().n_ant).context("receiver")?;
            }
            let (data, k_max) = load_or_generate(p, &prach, seed)?;
            if k_max + 1 != model.arch().n_classes {
                return Err(anyhow::anyhow!(
                    "dimension mismatch: weights have K={} but the dataset has K={k_max}",
                    model.arch().k_max()
                )
                .into());
            }
            let report = evaluate(&model, &data).context("evaluating")?;
            let mut rows: Vec<(String, EvalReport)> = evaluate_by_snr(&model, &data)
                .context("evaluating")?
                .into_iter()
                .map(|(snr, r)| (snr.to_string(), r))
                .collect();
            rows.push(("all".into(), report.clone()));
            out.write("eval.csv", eval_csv(&rows).as_bytes())?;
            out.write("confusion.csv", report.confusion.to_csv().as_bytes())?;
            Ok(format!("accuracy {:.4} on {} windows", report.accuracy, report.n))
        }
        Command::Simulate(_) => {
            let cfg = p.sim_config(seed)?;
            let art = p.artifacts(cfg.detector)?;
            let result = engine::run_scenario(&cfg, art.as_ref()).context("simulation")?;
            let m = &result.metrics;
            let csv = format!(
                "{METRICS_HEADER}\n{}",
                metrics_row(cfg.scheme, cfg.detector, cfg.n_users, 0, m)
            );
            out.write("metrics.csv", csv.as_bytes())?;
            if c.trace {
                let mut lines = String::new();
                for u in &result.users {
                    lines.push_str(&serde_json::to_string(u).context("trace")?);
                    lines.push('\n');
                }
                out.write("trace.jsonl", lines.as_bytes())?;
            }
            Ok(format!(
                "{} successes, utilization {:.4}, mean delay {:.2} ms",
                m.n_success, m.pusch_utilization, m.avg_delay_ms
            ))
        }
        Command::Sweep(_) => {
            let cfg = p.sim_config(seed)?;
            let schemes = p
                .schemes
                .iter()
                .map(|s| RunParams::scheme(s))
                .collect::<Result<Vec<_>, _>>()?;
            if schemes.is_empty() || p.user_counts.is_empty() || p.n_reps == 0 {
                return usage("sweep needs non-empty schemes, user_counts and n_reps >= 1");
            }
            let art = p.artifacts(cfg.detector)?;
            let rows = engine::sweep(&cfg, &schemes, &p.user_counts, p.n_reps, art.as_ref()).context("sweep")?;
            let mut csv = format!("{METRICS_HEADER}\n");
            for r in &rows {
                csv.push_str(&metrics_row(r.scheme, r.detector, r.n_users, r.rep, &r.metrics));
            }
            out.write("metrics.csv", csv.as_bytes())?;
            let mut summary = String::from(
                "scheme,detector,n_users,n_reps,avg_delay_ms,avg_delay_ms_se,n_success,n_success_se,pusch_utilization,pusch_utilization_se\n",
            );
            for s in engine::summarize(&rows) {
                let _ = writeln!(
                    summary,
                    "{},{},{},{},{},{},{},{},{},{}",
                    s.scheme,
                    s.detector.as_str(),
                    s.n_users,
                    s.n_reps,
                    s.avg_delay_ms.0,
                    s.avg_delay_ms.1,
                    s.n_success.0,
                    s.n_success.1,
                    s.pusch_utilization.0,
                    s.pusch_utilization.1
                );
            }
            out.write("summary.csv", summary.as_bytes())?;
            Ok(format!("{} sweep rows", rows.len()))
        }
    }
}

fn execute(args: &Args) -> Result<String, CliError> {
    let cmd = &args.command;
    let c = cmd.common();
    let params = resolve_params(&c.config, &c.overrides)?;
    fs::create_dir_all(&c.out)
        .with_context(|| format!("creating output directory {}", c.out.display()))?;
    let mut out = Outputs {
        dir: c.out.clone(),
        written: Vec::new(),
        keep: false,
    };
    let effective = serde_json::to_string_pretty(&EffectiveConfig {
        command: cmd.name(),
        seed: c.seed,
        config: &params,
    })
    .context("serializing configuration")?;
    out.write("effective_config.json", effective.as_bytes())?;

    let summary = dispatch(cmd, &params, &mut out)?;

    let mut artifacts = Vec::new();
    for (name, path) in out.written.iter().skip(1) {
        let bytes = fs::read(path).with_context(|| format!("re-reading {}", path.display()))?;
        artifacts.push(ManifestEntry {
            file: name.clone(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = Manifest {
        command: cmd.name().into(),
        seed: c.seed,
        config_sha256: sha256_hex(effective.as_bytes()),
        artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    out.write("manifest.json", text.as_bytes())?;
    out.keep = true;
    Ok(summary)
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&args) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
