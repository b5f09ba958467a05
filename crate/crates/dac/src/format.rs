//! Binary containers for datasets and checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! Dataset, version 1:
//!
//! ```text
//! magic  "DACD"
//! u16    version
//! u32    k
//! u32    d
//! u64    n
//! u32    description length, then that many UTF-8 bytes
//! f64    features, n * d, row major
//! u32    labels, n
//! u32    original labels, n
//! u8     flags, n (bit 0 randomized, bit 1 structured feature)
//! ```
//!
//! Checkpoint, version 1:
//!
//! ```text
//! magic  "DACK"
//! u16    version
//! u64    epoch
//! u32    layer count, then that many u32 dims
//! u64    parameter count, then that many f64
//! f64    momentum
//! f64    weight decay
//! u8     nesterov (0 or 1)
//! u64    velocity count, then that many f64
//! ```

use dac_core::nn::{Matrix, Mlp, Sgd};
use dac_core::noise::{NoiseFlags, NoisyDataset};

pub const DATASET_MAGIC: [u8; 4] = *b"DACD";
pub const DATASET_VERSION: u16 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DACK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("not a {kind} file: expected magic {expected:?}, found {found:?}")]
    BadMagic {
        kind: &'static str,
        expected: [u8; 4],
        found: Vec<u8>,
    },
    #[error("unsupported {kind} version {found} (this build reads version {supported})")]
    UnsupportedVersion {
        kind: &'static str,
        found: u16,
        supported: u16,
    },
    #[error("truncated at byte {offset}: {needed} more bytes expected")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed content at byte {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
    #[error("{count} unexpected trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
}

/// A model snapshot together with its optimizer and epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub optimizer: Sgd,
    pub epoch: usize,
}

impl From<&dac_core::pipeline::Snapshot> for Checkpoint {
    fn from(s: &dac_core::pipeline::Snapshot) -> Self {
        Self {
            model: s.model.clone(),
            optimizer: s.optimizer.clone(),
            epoch: s.epoch,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let remaining = self.bytes.len() - self.pos;
        if len > remaining {
            return Err(FormatError::Truncated {
                offset: self.bytes.len(),
                needed: len - remaining,
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// Checks that `value` elements of `width` bytes fit in the rest of
    /// the input before anything is allocated for them.
    fn count(&mut self, value: u64, width: u64) -> Result<usize, FormatError> {
        let remaining = (self.bytes.len() - self.pos) as u64;
        let needed = value.saturating_mul(width);
        if needed > remaining {
            return Err(FormatError::Truncated {
                offset: self.bytes.len(),
                needed: usize::try_from(needed - remaining).unwrap_or(usize::MAX),
            });
        }
        Ok(value as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap_or_default()))
            .collect())
    }

    fn magic(&mut self, kind: &'static str, expected: [u8; 4]) -> Result<(), FormatError> {
        let len = 4.min(self.bytes.len());
        let found = &self.bytes[..len];
        if found != expected {
            return Err(FormatError::BadMagic {
                kind,
                expected,
                found: found.to_vec(),
            });
        }
        self.pos = 4;
        Ok(())
    }

    fn version(&mut self, kind: &'static str, supported: u16) -> Result<(), FormatError> {
        let found = self.u16()?;
        if found != supported {
            return Err(FormatError::UnsupportedVersion { kind, found, supported });
        }
        Ok(())
    }

    fn finish(self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::TrailingBytes {
                offset: self.pos,
                count: self.bytes.len() - self.pos,
            });
        }
        Ok(())
    }
}

fn invalid(offset: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        offset,
        reason: reason.into(),
    }
}

pub fn encode_dataset(ds: &NoisyDataset) -> Vec<u8> {
    let (n, d) = (ds.len(), ds.d());
    let description = ds.description().as_bytes();
    let mut out = Vec::with_capacity(30 + description.len() + n * (d * 8 + 9));
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.k() as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(description.len() as u32).to_le_bytes());
    out.extend_from_slice(description);
    for v in ds.features().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in ds.labels() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for &l in ds.original_labels() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out.extend(ds.flags().iter().map(|f| f.to_byte()));
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<NoisyDataset, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic("dataset", DATASET_MAGIC)?;
    r.version("dataset", DATASET_VERSION)?;
    let k_at = r.pos;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let n_raw = r.u64()?;
    let desc_len = r.u32()? as u64;
    let desc_len = r.count(desc_len, 1)?;
    let desc_at = r.pos;
    let description = std::str::from_utf8(r.take(desc_len)?)
        .map_err(|e| invalid(desc_at + e.valid_up_to(), "description is not UTF-8"))?
        .to_owned();
    let n = r.count(n_raw, (d as u64).saturating_mul(8).saturating_add(9))?;
    let features = r.f64s(n * d)?;
    let read_labels = |r: &mut Reader| -> Result<Vec<usize>, FormatError> {
        (0..n)
            .map(|_| {
                let at = r.pos;
                let l = r.u32()? as usize;
                if l >= k {
                    return Err(invalid(at, format!("label {l} outside 0..{k}")));
                }
                Ok(l)
            })
            .collect()
    };
    let labels = read_labels(&mut r)?;
    let original_labels = read_labels(&mut r)?;
    let flags = (0..n)
        .map(|_| {
            let at = r.pos;
            let b = r.u8()?;
            NoiseFlags::from_byte(b).ok_or_else(|| invalid(at, format!("unknown flag bits {b:#04x}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    let matrix = Matrix::from_vec(n, d, features).map_err(|e| invalid(k_at, e.to_string()))?;
    NoisyDataset::from_parts(k, matrix, labels, original_labels, flags, description)
        .map_err(|e| invalid(k_at, e.to_string()))
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ckpt.epoch as u64).to_le_bytes());
    let dims = ckpt.model.dims();
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let params = ckpt.model.params();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&ckpt.optimizer.momentum().to_le_bytes());
    out.extend_from_slice(&ckpt.optimizer.weight_decay().to_le_bytes());
    out.push(u8::from(ckpt.optimizer.nesterov()));
    let velocity = ckpt.optimizer.velocity();
    out.extend_from_slice(&(velocity.len() as u64).to_le_bytes());
    for v in velocity {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic("checkpoint", CHECKPOINT_MAGIC)?;
    r.version("checkpoint", CHECKPOINT_VERSION)?;
    let epoch_at = r.pos;
    let epoch = usize::try_from(r.u64()?).map_err(|_| invalid(epoch_at, "epoch does not fit"))?;
    let layers = r.u32()? as u64;
    let layers = r.count(layers, 4)?;
    let dims_at = r.pos;
    let dims = (0..layers)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let params_at = r.pos;
    let n_params = r.u64()?;
    let n_params = r.count(n_params, 8)?;
    let params = r.f64s(n_params)?;
    let model = Mlp::from_params(&dims, params).map_err(|e| invalid(dims_at.min(params_at), e.to_string()))?;
    let opt_at = r.pos;
    let momentum = r.f64()?;
    let weight_decay = r.f64()?;
    let nesterov_at = r.pos;
    let nesterov = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(invalid(nesterov_at, format!("nesterov flag must be 0 or 1, got {b}"))),
    };
    let vel_at = r.pos;
    let n_vel = r.u64()?;
    let n_vel = r.count(n_vel, 8)?;
    let velocity = r.f64s(n_vel)?;
    if velocity.len() != model.num_params() {
        return Err(invalid(
            vel_at,
            format!("{} velocities for {} parameters", velocity.len(), model.num_params()),
        ));
    }
    r.finish()?;
    let optimizer =
        Sgd::from_parts(momentum, weight_decay, nesterov, velocity).map_err(|e| invalid(opt_at, e.to_string()))?;
    Ok(Checkpoint { model, optimizer, epoch })
}
