//! Test-set evaluation and the confusion matrix consumed by the Step-3 policy.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::dataset::LabeledWindow;
use super::{Classifier, NetError, Result};

/// Column-normalized confusion matrix: `q(k_hat, k)` is the fraction of
/// true-class-`k` samples classified as `k_hat`.
///
/// A class that never appeared in the test set has an undefined column; its
/// entries read as `None` rather than a silent zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    n: usize,
    q: Vec<f64>,
    defined: Vec<bool>,
}

impl ConfusionMatrix {
    /// From raw counts, `counts[k_hat * n + k]`.
    pub fn from_counts(counts: &[u64], n: usize) -> Result<Self> {
        if n == 0 || counts.len() != n * n {
            return Err(NetError::Format(format!(
                "{} counts do not form a {n}x{n} matrix",
                counts.len()
            )));
        }
        let mut q = vec![0.0; n * n];
        let mut defined = vec![false; n];
        for k in 0..n {
            let total: u64 = (0..n).map(|kh| counts[kh * n + k]).sum();
            defined[k] = total > 0;
            for kh in 0..n {
                if total > 0 {
                    q[kh * n + k] = counts[kh * n + k] as f64 / total as f64;
                }
            }
        }
        Ok(Self { n, q, defined })
    }

    /// The confusion matrix of a perfect classifier.
    pub fn identity(n: usize) -> Self {
        let mut q = vec![0.0; n * n];
        for k in 0..n {
            q[k * n + k] = 1.0;
        }
        Self {
            n,
            q,
            defined: vec![true; n],
        }
    }

    /// From fractions, `q[k_hat * n + k]`; NaN columns are undefined.
    pub fn from_fractions(mut q: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 || q.len() != n * n {
            return Err(NetError::Format(format!(
                "{} entries do not form a {n}x{n} matrix",
                q.len()
            )));
        }
        let mut defined = vec![true; n];
        for k in 0..n {
            let col: Vec<f64> = (0..n).map(|kh| q[kh * n + k]).collect();
            if col.iter().all(|v| v.is_nan()) {
                defined[k] = false;
                (0..n).for_each(|kh| q[kh * n + k] = 0.0);
                continue;
            }
            if col.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(NetError::Format(format!("column {k} has entries outside [0, 1]")));
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(NetError::Format(format!("column {k} sums to {sum}, not 1")));
            }
        }
        Ok(Self { n, q, defined })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn k_max(&self) -> usize {
        self.n - 1
    }

    pub fn is_defined(&self, k: usize) -> bool {
        self.defined[k]
    }

    pub fn get(&self, k_hat: usize, k: usize) -> Option<f64> {
        self.defined[k].then(|| self.q[k_hat * self.n + k])
    }

    /// CSV with a header row; rows are predicted classes, columns true classes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k_hat");
        for k in 0..self.n {
            let _ = write!(s, ",k{k}");
        }
        s.push('\n');
        for kh in 0..self.n {
            let _ = write!(s, "{kh}");
            for k in 0..self.n {
                match self.get(kh, k) {
                    Some(v) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push_str(",nan"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| NetError::Format(format!("confusion CSV: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let n = header.split(',').count().saturating_sub(1);
        if n == 0 {
            return Err(bad("header has no class columns".into()));
        }
        let mut q = vec![0.0; n * n];
        let mut rows = 0;
        for (kh, line) in lines.enumerate() {
            if kh >= n {
                return Err(bad(format!("more than {n} rows")));
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != n + 1 {
                return Err(bad(format!("row {kh} has {} fields", fields.len())));
            }
            for k in 0..n {
                q[kh * n + k] = fields[k + 1]
                    .parse()
                    .map_err(|_| bad(format!("bad number {:?}", fields[k + 1])))?;
            }
            rows += 1;
        }
        if rows != n {
            return Err(bad(format!("{rows} rows for {n} classes")));
        }
        Self::from_fractions(q, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// `P(predict 0 | true > 0)`; `None` without occupied samples.
    pub misdetection: Option<f64>,
    /// `P(predict > 0 | true = 0)`; `None` without idle samples.
    pub false_alarm: Option<f64>,
}

impl EvalReport {
    fn from_pairs(pairs: &[(usize, usize)], n_classes: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(NetError::Empty("test set"));
        }
        let mut counts = vec![0u64; n_classes * n_classes];
        let (mut correct, mut occupied, mut missed, mut idle, mut alarms) = (0, 0, 0, 0, 0);
        for &(pred, label) in pairs {
            counts[pred * n_classes + label] += 1;
            correct += usize::from(pred == label);
            if label == 0 {
                idle += 1;
                alarms += usize::from(pred > 0);
            } else {
                occupied += 1;
                missed += usize::from(pred == 0);
            }
        }
        let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Ok(Self {
            n: pairs.len(),
            accuracy: correct as f64 / pairs.len() as f64,
            confusion: ConfusionMatrix::from_counts(&counts, n_classes)?,
            misdetection: rate(missed, occupied),
            false_alarm: rate(alarms, idle),
        })
    }
}

fn predictions<M: Classifier + Sync>(model: &M, test: &[LabeledWindow]) -> Result<Vec<(usize, usize)>> {
    test.par_iter()
        .map(|s| {
            if s.label >= model.n_classes() {
                return Err(NetError::ClassMismatch {
                    model: model.n_classes(),
                    data: s.label + 1,
                });
            }
            Ok((model.predict(&s.window)?, s.label))
        })
        .collect()
}

/// Argmax accuracy, confusion matrix and detection error rates.
pub fn evaluate<M: Classifier + Sync>(model: &M, test: &[LabeledWindow]) -> Result<EvalReport> {
    EvalReport::from_pairs(&predictions(model, test)?, model.n_classes())
}

/// One report per distinct SNR, in ascending SNR order.
pub fn evaluate_by_snr<M: Classifier + Sync>(
    model: &M,
    test: &[LabeledWindow],
) -> Result<Vec<(f64, EvalReport)>> {
    let pairs = predictions(model, test)?;
    let mut snrs: Vec<f64> = test.iter().map(|s| s.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    snrs.into_iter()
        .map(|snr| {
            let subset: Vec<_> = pairs
                .iter()
                .zip(test)
                .filter(|(_, s)| s.snr_db == snr)
                .map(|(p, _)| *p)
                .collect();
            Ok((snr, EvalReport::from_pairs(&subset, model.n_classes())?))
        })
        .collect()
}
