//! Tapped-delay-line channels and LEO user geometry.
//!
//! Tap delays are shared across the co-located receive antennas while gains
//! are drawn independently per antenna. A fresh realization is drawn for every
//! access attempt.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64 as Cplx;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::prach::PrachConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("profile has no taps")]
    NoTaps,
    #[error("{delays} delays but {powers} powers")]
    TapCount { delays: usize, powers: usize },
    #[error("tap powers sum to {0}, expected 1")]
    PowerSum(f64),
    #[error("tap power {0} is negative or not finite")]
    TapPower(f64),
    #[error("tap delays must be strictly increasing")]
    DelayOrder,
    #[error(
        "delay spread {max_delay} + 2 x timing error {tau_e_max} does not fit \
         inside the {n_cs}-sample ZCZ"
    )]
    DelayBudget {
        max_delay: usize,
        tau_e_max: usize,
        n_cs: usize,
    },
    #[error("channel gains must form {n_ant}x{n_taps} entries")]
    GainShape { n_ant: usize, n_taps: usize },
    #[error("delay range [{0}, {1}] ms is invalid")]
    DelayRange(f64, f64),
    #[error("unknown channel profile `{0}` (expected `los` or `nlos`)")]
    UnknownProfile(String),
    #[error("profile file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("reading profile file: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay_samples: usize,
    /// Average linear power fraction.
    pub power: f64,
}

/// Power-delay profile of a tapped-delay-line channel.
///
/// With `los` set, the first tap is a deterministic-magnitude line-of-sight
/// component with uniformly random phase; every other tap is Rayleigh.
#[derive(Debug, Clone, PartialEq)]
pub struct TdlProfile {
    name: String,
    taps: Vec<Tap>,
    los: bool,
}

impl TdlProfile {
    pub fn new(name: impl Into<String>, taps: Vec<Tap>, los: bool) -> Result<Self> {
        if taps.is_empty() {
            return Err(ChannelError::NoTaps);
        }
        if let Some(t) = taps.iter().find(|t| !(t.power >= 0.0 && t.power.is_finite())) {
            return Err(ChannelError::TapPower(t.power));
        }
        if taps.windows(2).any(|w| w[1].delay_samples <= w[0].delay_samples) {
            return Err(ChannelError::DelayOrder);
        }
        let total: f64 = taps.iter().map(|t| t.power).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ChannelError::PowerSum(total));
        }
        Ok(Self {
            name: name.into(),
            taps,
            los,
        })
    }

    fn from_table(name: &str, delays: &[usize], powers: &[f64], los: bool) -> Self {
        let taps = delays
            .iter()
            .zip(powers)
            .map(|(&delay_samples, &power)| Tap {
                delay_samples,
                power,
            })
            .collect();
        Self::new(name, taps, los).expect("built-in profile is valid")
    }

    /// NLoS profile in the TDL-B role: three Rayleigh taps.
    pub fn nlos_default() -> Self {
        Self::from_table("nlos", &[0, 1, 2], &[0.65, 0.25, 0.10], false)
    }

    /// LoS-dominant profile in the TDL-D role.
    pub fn los_default() -> Self {
        Self::from_table("los", &[0, 1, 2], &[0.9, 0.07, 0.03], true)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "los" | "tdl-d" => Ok(Self::los_default()),
            "nlos" | "tdl-b" => Ok(Self::nlos_default()),
            other => Err(ChannelError::UnknownProfile(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn is_los(&self) -> bool {
        self.los
    }

    pub fn max_delay(&self) -> usize {
        self.taps.last().map_or(0, |t| t.delay_samples)
    }

    /// Checks that the delay spread plus the two-sided timing error never
    /// leaves the ZCZ.
    pub fn check_budget(&self, cfg: &PrachConfig) -> Result<()> {
        if self.max_delay() + 2 * cfg.tau_e_max() >= cfg.n_cs() {
            return Err(ChannelError::DelayBudget {
                max_delay: self.max_delay(),
                tau_e_max: cfg.tau_e_max(),
                n_cs: cfg.n_cs(),
            });
        }
        Ok(())
    }

    /// Parses the key-value profile format:
    ///
    /// ```text
    /// # comment
    /// name = my-profile
    /// los = true
    /// delays = 0, 1, 2
    /// powers = 0.9, 0.07, 0.03
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut los = false;
        let mut delays: Option<Vec<usize>> = None;
        let mut powers: Option<Vec<f64>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ChannelError::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = value.to_string(),
                "los" => {
                    los = value
                        .parse()
                        .map_err(|_| err(format!("invalid boolean `{value}`")))?
                }
                "delays" => delays = Some(parse_list(value).map_err(err)?),
                "powers" => powers = Some(parse_list(value).map_err(err)?),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let delays = delays.ok_or(ChannelError::NoTaps)?;
        let powers = powers.ok_or(ChannelError::NoTaps)?;
        if delays.len() != powers.len() {
            return Err(ChannelError::TapCount {
                delays: delays.len(),
                powers: powers.len(),
            });
        }
        let taps = delays
            .into_iter()
            .zip(powers)
            .map(|(delay_samples, power)| Tap {
                delay_samples,
                power,
            })
            .collect();
        Self::new(name, taps, los)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChannelError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_kv_string(&self) -> String {
        let join = |f: &dyn Fn(&Tap) -> String| {
            self.taps.iter().map(f).collect::<Vec<_>>().join(", ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "los = {}", self.los);
        let _ = writeln!(out, "delays = {}", join(&|t| t.delay_samples.to_string()));
        let _ = writeln!(out, "powers = {}", join(&|t| t.power.to_string()));
        out
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|v| {
            let v = v.trim();
            v.parse().map_err(|_| format!("invalid number `{v}`"))
        })
        .collect()
}

/// Per-antenna complex tap gains with shared integer tap delays.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    gains: Vec<Cplx>,
    delays: Vec<usize>,
    n_ant: usize,
}

impl ChannelRealization {
    /// `gains` is row-major `n_ant x delays.len()`.
    pub fn new(gains: Vec<Cplx>, delays: Vec<usize>, n_ant: usize) -> Result<Self> {
        if delays.is_empty() || n_ant == 0 || gains.len() != n_ant * delays.len() {
            return Err(ChannelError::GainShape {
                n_ant,
                n_taps: delays.len(),
            });
        }
        Ok(Self {
            gains,
            delays,
            n_ant,
        })
    }

    /// Single unit tap at zero delay on every antenna.
    pub fn identity(n_ant: usize) -> Self {
        Self {
            gains: vec![Cplx::new(1.0, 0.0); n_ant],
            delays: vec![0],
            n_ant,
        }
    }

    pub fn n_ant(&self) -> usize {
        self.n_ant
    }

    pub fn n_taps(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn gain(&self, ant: usize, tap: usize) -> Cplx {
        self.gains[ant * self.delays.len() + tap]
    }

    /// Total tap energy seen by one antenna.
    pub fn energy(&self, ant: usize) -> f64 {
        (0..self.n_taps()).map(|l| self.gain(ant, l).norm_sqr()).sum()
    }
}

/// Draws one realization of `profile` for an `n_ant` array.
pub fn sample_channel<R: Rng + ?Sized>(
    profile: &TdlProfile,
    n_ant: usize,
    rng: &mut R,
) -> ChannelRealization {
    let n_taps = profile.taps.len();
    let mut gains = Vec::with_capacity(n_ant * n_taps);
    for _ant in 0..n_ant {
        for (l, tap) in profile.taps.iter().enumerate() {
            let g = if l == 0 && profile.los {
                let phase = rng.random::<f64>() * 2.0 * PI;
                Cplx::from_polar(tap.power.sqrt(), phase)
            } else {
                let sigma = (tap.power / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Cplx::new(sigma * re, sigma * im)
            };
            gains.push(g);
        }
    }
    ChannelRealization {
        gains,
        delays: profile.taps.iter().map(|t| t.delay_samples).collect(),
        n_ant,
    }
}

/// Uniform integer residual timing error in `[-tau_e_max, tau_e_max]`.
pub fn sample_timing_residual<R: Rng + ?Sized>(tau_e_max: usize, rng: &mut R) -> i64 {
    let t = tau_e_max as i64;
    rng.random_range(-t..=t)
}

/// Uniform residual frequency error in `[-f_e_max, f_e_max]` Hz; exactly zero
/// (and no draw) when `f_e_max` is zero.
pub fn sample_freq_residual<R: Rng + ?Sized>(f_e_max_hz: f64, rng: &mut R) -> f64 {
    if f_e_max_hz == 0.0 {
        return 0.0;
    }
    rng.random_range(-f_e_max_hz..=f_e_max_hz)
}

/// One-way satellite propagation delay range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryModel {
    min_ms: f64,
    max_ms: f64,
}

impl Default for GeometryModel {
    fn default() -> Self {
        Self {
            min_ms: 2.0,
            max_ms: 6.44,
        }
    }
}

impl GeometryModel {
    pub fn new(min_ms: f64, max_ms: f64) -> Result<Self> {
        if !(min_ms >= 0.0 && max_ms >= min_ms && max_ms.is_finite()) {
            return Err(ChannelError::DelayRange(min_ms, max_ms));
        }
        Ok(Self { min_ms, max_ms })
    }

    /// Every user sees exactly `ms`.
    pub fn fixed(ms: f64) -> Result<Self> {
        Self::new(ms, ms)
    }

    pub fn range_ms(&self) -> (f64, f64) {
        (self.min_ms, self.max_ms)
    }
}

/// Uniform one-way delay in ms; fixed per user for the whole procedure.
pub fn sample_propagation_delay<R: Rng + ?Sized>(g: &GeometryModel, rng: &mut R) -> f64 {
    if g.min_ms == g.max_ms {
        return g.min_ms;
    }
    rng.random_range(g.min_ms..=g.max_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn rayleigh_single_tap_unit_power() {
        let profile = TdlProfile::new(
            "flat",
            vec![Tap {
                delay_samples: 0,
                power: 1.0,
            }],
            false,
        )
        .unwrap();
        let mut rng = substream(10, "test", 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_channel(&profile, 1, &mut rng).gain(0, 0).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn los_tap_is_deterministic() {
        let profile = TdlProfile::new(
            "pure-los",
            vec![Tap {
                delay_samples: 0,
                power: 1.0,
            }],
            true,
        )
        .unwrap();
        let mut rng = substream(11, "test", 0);
        for _ in 0..100 {
            let ch = sample_channel(&profile, 4, &mut rng);
            for ant in 0..4 {
                assert!((ch.gain(ant, 0).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_profiles_structure() {
        let mut rng = substream(12, "test", 0);
        for profile in [TdlProfile::nlos_default(), TdlProfile::los_default()] {
            let ch = sample_channel(&profile, 8, &mut rng);
            assert_eq!(ch.delays(), &[0, 1, 2]);
            assert_eq!(ch.n_ant(), 8);
            profile.check_budget(&PrachConfig::default()).unwrap();
        }
    }

    #[test]
    fn power_normalization_both_profiles() {
        let mut rng = substream(13, "test", 0);
        for profile in [TdlProfile::nlos_default(), TdlProfile::los_default()] {
            let n = 100_000;
            let mean: f64 = (0..n)
                .map(|_| sample_channel(&profile, 1, &mut rng).energy(0))
                .sum::<f64>()
                / n as f64;
            assert!((mean - 1.0).abs() < 0.01, "{}: {mean}", profile.name());
        }
    }

    #[test]
    fn profile_validation() {
        let tap = |d, p| Tap {
            delay_samples: d,
            power: p,
        };
        assert_eq!(
            TdlProfile::new("x", vec![tap(0, 0.5)], false),
            Err(ChannelError::PowerSum(0.5))
        );
        assert_eq!(
            TdlProfile::new("x", vec![tap(1, 0.5), tap(1, 0.5)], false),
            Err(ChannelError::DelayOrder)
        );
        let wide = TdlProfile::new("x", vec![tap(0, 0.5), tap(4, 0.5)], false).unwrap();
        assert!(matches!(
            wide.check_budget(&PrachConfig::default()),
            Err(ChannelError::DelayBudget { .. })
        ));
        assert!(TdlProfile::by_name("tdl-x").is_err());
    }

    #[test]
    fn kv_round_trip_and_errors() {
        let p = TdlProfile::los_default();
        assert_eq!(TdlProfile::parse(&p.to_kv_string()).unwrap(), p);
        let text = "# custom\nname = two\nlos=false\ndelays = 0, 3\npowers = 0.5, 0.5\n";
        let q = TdlProfile::parse(text).unwrap();
        assert_eq!(q.max_delay(), 3);
        assert!(matches!(
            TdlProfile::parse("colour = red\n"),
            Err(ChannelError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            TdlProfile::parse("delays = 0, 1\npowers = 1.0\n"),
            Err(ChannelError::TapCount { .. })
        ));
    }

    #[test]
    fn timing_residual_uniform() {
        let mut rng = substream(14, "test", 0);
        assert!((0..100).all(|_| sample_timing_residual(0, &mut rng) == 0));
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let v = sample_timing_residual(2, &mut rng);
            assert!((-2..=2).contains(&v));
            counts[(v + 2) as usize] += 1;
        }
        let p = 0.2;
        let expected = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for &c in &counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // 99.9th percentile of chi-square with 4 degrees of freedom.
        assert!(chi2 < 18.47, "chi2 {chi2}");
    }

    #[test]
    fn propagation_delay_range() {
        let mut rng = substream(15, "test", 0);
        let fixed = GeometryModel::fixed(3.0).unwrap();
        assert_eq!(sample_propagation_delay(&fixed, &mut rng), 3.0);
        let g = GeometryModel::default();
        for _ in 0..10_000 {
            let d = sample_propagation_delay(&g, &mut rng);
            assert!((2.0..=6.44).contains(&d));
            let rtt = 2.0 * d;
            assert!((4.0..=12.88).contains(&rtt));
        }
        assert!(GeometryModel::new(5.0, 4.0).is_err());
    }

    #[test]
    fn freq_residual_default_zero() {
        let mut rng = substream(16, "test", 0);
        assert_eq!(sample_freq_residual(0.0, &mut rng), 0.0);
        let f = sample_freq_residual(100.0, &mut rng);
        assert!(f.abs() <= 100.0);
    }
}
