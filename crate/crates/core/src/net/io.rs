//! Little-endian binary formats for weights and datasets.
//!
//! Weight file: magic `LRCW`, then `u32` version, `n_ant`, `n_cs`,
//! `n_classes`, `param_count`, then `param_count` `f32` values in the flat
//! order documented in [`super::cnn`].
//!
//! Dataset file: `u32` `n_ant`, `n_cs`, `K`, `count`, then per record a label
//! byte, the SNR as `f32` and the row-major `f32` window.

use std::fs;
use std::path::Path;

use super::cnn::{ClassifierArch, CollisionNet};
use super::dataset::LabeledWindow;
use super::{Classifier, NetError, Result};
use crate::prach::CorrelationWindow;

pub const WEIGHT_MAGIC: &[u8; 4] = b"LRCW";
pub const WEIGHT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(NetError::Format(format!("truncated {} file", self.what)));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(self) -> Result<()> {
        if !self.bytes.is_empty() {
            return Err(NetError::Format(format!(
                "{} trailing bytes in {} file",
                self.bytes.len(),
                self.what
            )));
        }
        Ok(())
    }
}

fn dim(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| NetError::Format(format!("dimension {v} does not fit in u32")))
}

pub fn encode_weights(net: &CollisionNet) -> Result<Vec<u8>> {
    let a = net.arch();
    let mut out = Vec::with_capacity(24 + 4 * net.param_count());
    out.extend_from_slice(WEIGHT_MAGIC);
    for v in [WEIGHT_VERSION, dim(a.n_ant)?, dim(a.n_cs)?, dim(a.n_classes)?, dim(net.param_count())?] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &p in net.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<CollisionNet> {
    let mut r = Reader {
        bytes,
        what: "weight",
    };
    if r.take(4)? != WEIGHT_MAGIC {
        return Err(NetError::Format("not a weight file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != WEIGHT_VERSION {
        return Err(NetError::Format(format!("unsupported weight file version {version}")));
    }
    let n_ant = r.u32()? as usize;
    let n_cs = r.u32()? as usize;
    let n_classes = r.u32()? as usize;
    let count = r.u32()? as usize;
    if n_classes < 2 {
        return Err(NetError::Format(format!("weight file declares {n_classes} classes")));
    }
    let arch = ClassifierArch::new(n_ant, n_cs, n_classes - 1)?;
    if count != arch.param_count() {
        return Err(NetError::Format(format!(
            "weight file holds {count} parameters, a {n_ant}x{n_cs} K={} network needs {}",
            n_classes - 1,
            arch.param_count()
        )));
    }
    let params = (0..count).map(|_| r.f32().map(f64::from)).collect::<Result<_>>()?;
    r.finish()?;
    CollisionNet::from_params(arch, params)
}

pub fn save_weights(path: &Path, net: &CollisionNet) -> Result<()> {
    fs::write(path, encode_weights(net)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<CollisionNet> {
    decode_weights(&fs::read(path)?)
}

pub fn encode_dataset(data: &[LabeledWindow]) -> Result<Vec<u8>> {
    let first = data.first().ok_or(NetError::Empty("dataset"))?;
    let (n_ant, n_cs) = (first.window.n_ant(), first.window.n_cs());
    let k_max = data.iter().map(|s| s.label).max().unwrap_or(0);
    encode_dataset_with_k(data, n_ant, n_cs, k_max)
}

/// Like [`encode_dataset`] but with an explicit `K`, for sets in which the
/// top class happens to be absent.
pub fn encode_dataset_with_k(
    data: &[LabeledWindow],
    n_ant: usize,
    n_cs: usize,
    k_max: usize,
) -> Result<Vec<u8>> {
    if k_max > u8::MAX as usize {
        return Err(NetError::KMax(k_max));
    }
    let mut out = Vec::with_capacity(16 + data.len() * (5 + 4 * n_ant * n_cs));
    for v in [dim(n_ant)?, dim(n_cs)?, dim(k_max)?, dim(data.len())?] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in data {
        if s.window.n_ant() != n_ant || s.window.n_cs() != n_cs {
            return Err(NetError::InputShape {
                got_ant: s.window.n_ant(),
                got_cs: s.window.n_cs(),
                n_ant,
                n_cs,
            });
        }
        if s.label > k_max {
            return Err(NetError::Label { label: s.label, k_max });
        }
        out.push(s.label as u8);
        out.extend_from_slice(&(s.snr_db as f32).to_le_bytes());
        for &v in s.window.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decoded dataset plus its declared `K`.
pub fn decode_dataset(bytes: &[u8]) -> Result<(Vec<LabeledWindow>, usize)> {
    let mut r = Reader {
        bytes,
        what: "dataset",
    };
    let n_ant = r.u32()? as usize;
    let n_cs = r.u32()? as usize;
    let k_max = r.u32()? as usize;
    let count = r.u32()? as usize;
    if n_ant == 0 || n_cs == 0 {
        return Err(NetError::Format(format!("dataset declares a {n_ant}x{n_cs} window")));
    }
    let record = 5 + 4 * n_ant * n_cs;
    if r.bytes.len() != count.saturating_mul(record) {
        return Err(NetError::Format(format!(
            "dataset declares {count} records but holds {} bytes of records",
            r.bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let label = r.take(1)?[0] as usize;
        if label > k_max {
            return Err(NetError::Label { label, k_max });
        }
        let snr_db = f64::from(r.f32()?);
        let values = (0..n_ant * n_cs)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<_>>()?;
        data.push(LabeledWindow {
            window: CorrelationWindow::new(values, n_ant, n_cs, 0, 0)?,
            label,
            snr_db,
        });
    }
    r.finish()?;
    Ok((data, k_max))
}

pub fn save_dataset(path: &Path, data: &[LabeledWindow], k_max: usize) -> Result<()> {
    let first = data.first().ok_or(NetError::Empty("dataset"))?;
    let bytes = encode_dataset_with_k(data, first.window.n_ant(), first.window.n_cs(), k_max)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(Vec<LabeledWindow>, usize)> {
    decode_dataset(&fs::read(path)?)
}
