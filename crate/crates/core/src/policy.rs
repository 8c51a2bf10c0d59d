//! Opportunistic Step-3 access: per-preamble transmission probabilities from
//! collision-class estimates.
//!
//! The SBS sums the classifier outputs over all ZCZs to estimate the number of
//! active users, turns that into a binomial prior over the per-preamble
//! collision count, conditions on each preamble's estimate through the
//! classifier's confusion matrix, and broadcasts the probability `P` that
//! maximizes the expected number of solo Step-3 transmissions. Each user that
//! receives its RAR then transmits with probability `P`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::net::ConfusionMatrix;

/// Moments and probabilities below this are treated as zero.
pub const MOMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("probabilities must be non-negative and sum to 1 (sum {0})")]
    NotNormalized(f64),
    #[error("distribution over {got} classes, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("classifier never outputs class {k_hat} under this prior")]
    ZeroEvidence { k_hat: usize },
    #[error("confusion column for class {0} is undefined but the prior gives it mass")]
    UndefinedColumn(usize),
    #[error("estimate {k_hat} outside 0..={k_max}")]
    Estimate { k_hat: usize, k_max: usize },
    #[error("unknown scheme {0:?} (expected conventional, withhold or proposed)")]
    Scheme(String),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

fn check_distribution(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(PolicyError::NotNormalized(sum));
    }
    Ok(())
}

/// Prior `P[k]` over the number of users sharing one preamble.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrior {
    p: Vec<f64>,
}

impl ClassPrior {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_distribution(&p)?;
        Ok(Self { p })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }
}

/// `P[k | k_hat]`; `conditioned_on` is `None` when the prior was used as is.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    p: Vec<f64>,
    pub conditioned_on: Option<usize>,
}

impl ClassPosterior {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_distribution(&p)?;
        Ok(Self {
            p,
            conditioned_on: None,
        })
    }

    /// All mass on `k`, over classes `0..=k_max`.
    pub fn point_mass(k: usize, k_max: usize) -> Self {
        let mut p = vec![0.0; k_max.max(k) + 1];
        p[k] = 1.0;
        Self {
            p,
            conditioned_on: None,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }
}

impl From<ClassPrior> for ClassPosterior {
    fn from(prior: ClassPrior) -> Self {
        Self {
            p: prior.p,
            conditioned_on: None,
        }
    }
}

/// Binomial collision-count prior when `d_hat` users each pick one of `n_pa`
/// preambles uniformly; mass at `k >= K` is folded into class `K`.
pub fn binomial_prior(d_hat: usize, n_pa: usize, k_max: usize) -> ClassPrior {
    assert!(n_pa >= 1, "at least one preamble is required");
    let mut p = vec![0.0; k_max + 1];
    if n_pa == 1 {
        p[d_hat.min(k_max)] = 1.0;
        return ClassPrior { p };
    }
    let q = 1.0 / n_pa as f64;
    let ratio = q / (1.0 - q);
    let mut term = (1.0 - q).powi(d_hat as i32);
    let mut below = 0.0;
    for (k, slot) in p.iter_mut().enumerate().take(k_max) {
        if k > d_hat {
            break;
        }
        *slot = term;
        below += term;
        term *= (d_hat - k) as f64 / (k + 1) as f64 * ratio;
    }
    p[k_max] = (1.0 - below).max(0.0);
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    ClassPrior { p }
}

/// Bayes update of `prior` on the classifier output `k_hat`.
pub fn posterior(q: &ConfusionMatrix, prior: &ClassPrior, k_hat: usize) -> Result<ClassPosterior> {
    let n = q.n_classes();
    if prior.p.len() != n {
        return Err(PolicyError::Dimension {
            got: prior.p.len(),
            expected: n,
        });
    }
    if k_hat >= n {
        return Err(PolicyError::Estimate {
            k_hat,
            k_max: n - 1,
        });
    }
    let mut p = Vec::with_capacity(n);
    for (k, &pk) in prior.p.iter().enumerate() {
        let v = match q.get(k_hat, k) {
            Some(qv) => qv * pk,
            None if pk > 0.0 => return Err(PolicyError::UndefinedColumn(k)),
            None => 0.0,
        };
        p.push(v);
    }
    let evidence: f64 = p.iter().sum();
    if !(evidence > 0.0) {
        return Err(PolicyError::ZeroEvidence { k_hat });
    }
    p.iter_mut().for_each(|v| *v /= evidence);
    Ok(ClassPosterior {
        p,
        conditioned_on: Some(k_hat),
    })
}

/// Expected number of solo Step-3 transmissions when each of the `k` users on
/// the preamble transmits with probability `p_tx`.
pub fn success_probability(p_tx: f64, post: &ClassPosterior) -> f64 {
    post.p
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &pk)| k as f64 * p_tx * (1.0 - p_tx).powi(k as i32 - 1) * pk)
        .sum()
}

/// Derivative of [`success_probability`] with respect to `p_tx`.
fn success_slope(p_tx: f64, post: &ClassPosterior) -> f64 {
    let r = 1.0 - p_tx;
    post.p
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &pk)| {
            let kf = k as f64;
            let tail = if k >= 2 {
                (kf - 1.0) * p_tx * r.powi(k as i32 - 2)
            } else {
                0.0
            };
            kf * pk * (r.powi(k as i32 - 1) - tail)
        })
        .sum()
}

/// Factorial moments `E[k]`, `E[k(k-1)]`, `E[k(k-1)(k-2)]`.
pub fn factorial_moments(post: &ClassPosterior) -> (f64, f64, f64) {
    post.p.iter().enumerate().fold((0.0, 0.0, 0.0), |(m1, m2, m3), (k, &pk)| {
        let k = k as f64;
        (
            m1 + k * pk,
            m2 + k * (k - 1.0) * pk,
            m3 + k * (k - 1.0) * (k - 2.0) * pk,
        )
    })
}

/// Stationary points of the third-order expansion of the objective, or its
/// vertex when they are complex.
fn closed_form_candidates(m1: f64, m2: f64, m3: f64) -> Vec<f64> {
    let disc = 4.0 * m2 * m2 - 6.0 * m3 * m1;
    if disc < 0.0 {
        return vec![(2.0 * m2 / (3.0 * m3)).clamp(0.0, 1.0)];
    }
    let root = disc.sqrt();
    [(2.0 * m2 - root) / (3.0 * m3), (2.0 * m2 + root) / (3.0 * m3)]
        .into_iter()
        .filter(|p| (0.0..=1.0).contains(p))
        .collect()
}

/// Walks from `start` in the uphill direction of the exact objective until
/// the slope changes sign, then bisects on the slope.
fn refine(start: f64, post: &ClassPosterior) -> f64 {
    const STEP: f64 = 0.05;
    let slope = success_slope(start, post);
    if slope == 0.0 {
        return start;
    }
    let dir = slope.signum();
    let mut a;
    let mut b = start;
    loop {
        let next = (b + dir * STEP).clamp(0.0, 1.0);
        if next == b {
            return b;
        }
        a = b;
        b = next;
        if success_slope(b, post) * dir <= 0.0 {
            break;
        }
    }
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if success_slope(mid, post) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Step-3 transmission probability maximizing the expected number of solo
/// transmissions under `post`.
///
/// The closed-form stationary points of the third-order expansion and the
/// boundaries are scored on the exact objective; the best one then seeds a
/// short uphill search on the exact objective, which removes the expansion
/// error for larger collision counts.
pub fn optimal_access_prob(post: &ClassPosterior) -> f64 {
    let (m1, m2, m3) = factorial_moments(post);
    if m3 <= MOMENT_EPS {
        if m2 <= MOMENT_EPS {
            return if m1 > MOMENT_EPS { 1.0 } else { 0.0 };
        }
        // Support within {0, 1, 2}: the objective is quadratic and this is
        // its exact maximizer.
        return (m1 / (2.0 * m2)).clamp(0.0, 1.0);
    }
    let objective = |p: f64| success_probability(p, post);
    let mut candidates = closed_form_candidates(m1, m2, m3);
    candidates.extend([0.0, 1.0]);
    let seed = candidates
        .into_iter()
        .fold((f64::NEG_INFINITY, 0.0), |best, p| {
            let v = objective(p);
            if v > best.0 {
                (v, p)
            } else {
                best
            }
        })
        .1;
    let refined = refine(seed, post);
    if objective(refined) >= objective(seed) {
        refined
    } else {
        seed
    }
}

/// Estimated number of active users: the sum of the per-ZCZ class estimates.
pub fn estimate_active_users(k_hats: &[usize]) -> usize {
    k_hats.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Every detected preamble gets a grant and every user transmits.
    Conventional,
    /// Grants only for preambles classified as a single user.
    Withhold,
    /// Grants for every detected preamble with an optimized Step-3 `P`.
    Proposed,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Conventional, Scheme::Withhold, Scheme::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Conventional => "conventional",
            Scheme::Withhold => "withhold",
            Scheme::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| PolicyError::Scheme(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub preamble_index: usize,
    pub k_hat: usize,
    pub transmit_prob: f64,
    pub grant_id: usize,
    /// Temporary identifier echoed in Step 3.
    pub temp_id: u32,
}

/// The RAR contents of one RACH slot, in preamble order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccessPolicy {
    pub entries: Vec<PolicyEntry>,
}

impl AccessPolicy {
    pub fn entry_for(&self, preamble_index: usize) -> Option<&PolicyEntry> {
        self.entries
            .binary_search_by_key(&preamble_index, |e| e.preamble_index)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("preamble_index,k_hat,P,grant_id\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.preamble_index, e.k_hat, e.transmit_prob, e.grant_id
            ));
        }
        s
    }
}

/// First temporary identifier handed out in a slot.
pub const TEMP_ID_BASE: u32 = 0x0100;

/// Builds the RAR policy for one slot from the per-preamble class estimates
/// `k_hats` (indexed by preamble).
///
/// Idle-classified preambles get no entry. When a class estimate has zero
/// likelihood under the prior the prior itself is used.
pub fn build_policy(k_hats: &[usize], q: &ConfusionMatrix, scheme: Scheme) -> Result<AccessPolicy> {
    let k_max = q.k_max();
    if let Some(&k_hat) = k_hats.iter().find(|&&k| k > k_max) {
        return Err(PolicyError::Estimate { k_hat, k_max });
    }
    let n_pa = k_hats.len().max(1);
    let mut cache: Vec<Option<f64>> = vec![None; k_max + 1];
    let prior = (scheme == Scheme::Proposed)
        .then(|| binomial_prior(estimate_active_users(k_hats), n_pa, k_max));

    let mut entries = Vec::new();
    for (preamble_index, &k_hat) in k_hats.iter().enumerate() {
        let p = match (scheme, k_hat) {
            (_, 0) => continue,
            (Scheme::Withhold, k) if k >= 2 => continue,
            (Scheme::Conventional | Scheme::Withhold, _) => 1.0,
            (Scheme::Proposed, k) => match cache[k] {
                Some(p) => p,
                None => {
                    let prior = prior.as_ref().expect("prior exists for the proposed scheme");
                    let post = match posterior(q, prior, k) {
                        Ok(post) => post,
                        Err(PolicyError::ZeroEvidence { .. }) => prior.clone().into(),
                        Err(e) => return Err(e),
                    };
                    let p = optimal_access_prob(&post);
                    cache[k] = Some(p);
                    p
                }
            },
        };
        let grant_id = entries.len();
        entries.push(PolicyEntry {
            preamble_index,
            k_hat,
            transmit_prob: p,
            grant_id,
            temp_id: TEMP_ID_BASE + grant_id as u32,
        });
    }
    Ok(AccessPolicy { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    TransmitStep3,
    Backoff,
}

/// A user's Bernoulli(`P`) Step-3 decision after receiving its RAR.
pub fn user_decision<R: Rng + ?Sized>(entry: &PolicyEntry, rng: &mut R) -> Decision {
    if rng.random::<f64>() < entry.transmit_prob {
        Decision::TransmitStep3
    } else {
        Decision::Backoff
    }
}
