//! Bit-exact model checkpoints.
//!
//! ```text
//! "CAKECKPT"                          8 bytes
//! version                             u32 (= 1)
//! variant u8, av_source u8, k u32, D u32, n_domains u32,
//! dropout_rate f64, seed u64
//! tensor count u32
//! per tensor: rows u32, cols u32, rows*cols f64 (row-major)
//! optimizer present u8
//! if present: lr f64, beta1 f64, beta2 f64, eps f64, t u64,
//!             tensor count u32, then every first moment followed by
//!             every second moment, each as (len u32, 1 u32, len f64)
//! ```
//!
//! Model tensors appear in the order: embedding W, b; AV regressor W, b;
//! then W, b of each domain head. Absent heads are skipped, so the count
//! follows from the config. Biases are stored as `len x 1`. Everything is
//! little-endian.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{check_shapes, AvSource, Linear, ModelConfig, ModelError, ModelParams, Variant};
use crate::numerics::Mat64;
use crate::optim::{AdamConfig, AdamState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CAKECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint at byte {0}")]
    Truncated(usize),
    #[error("corrupt checkpoint at byte {offset}: {message}")]
    Corrupt { offset: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub adam: Option<AdamState>,
}

fn put_tensor(out: &mut Vec<u8>, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_linear(out: &mut Vec<u8>, l: &Linear) {
    put_tensor(out, l.w.rows(), l.w.cols(), l.w.as_slice());
    put_tensor(out, l.b.len(), 1, &l.b);
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(c.variant.code());
        out.push(match c.av_source {
            AvSource::GroundTruth => 0,
            AvSource::Regressed => 1,
        });
        out.extend_from_slice(&(c.k as u32).to_le_bytes());
        out.extend_from_slice(&(c.dim as u32).to_le_bytes());
        out.extend_from_slice(&(c.n_domains as u32).to_le_bytes());
        out.extend_from_slice(&c.dropout_rate.to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());

        let linears: Vec<&Linear> = self
            .params
            .embed
            .iter()
            .chain(self.params.av_head.iter())
            .chain(self.params.heads.iter())
            .collect();
        out.extend_from_slice(&((linears.len() * 2) as u32).to_le_bytes());
        for l in linears {
            put_linear(&mut out, l);
        }

        match &self.adam {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                for v in [s.config.lr, s.config.beta1, s.config.beta2, s.config.eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&s.t.to_le_bytes());
                out.extend_from_slice(&(s.m.len() as u32).to_le_bytes());
                for t in s.m.iter().chain(&s.v) {
                    put_tensor(&mut out, t.len(), 1, t);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok() != Some(&CHECKPOINT_MAGIC[..]) {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let at = r.pos;
        let variant = Variant::from_code(r.u8()?).ok_or_else(|| r.corrupt(at, "unknown variant code"))?;
        let at = r.pos;
        let av_source = match r.u8()? {
            0 => AvSource::GroundTruth,
            1 => AvSource::Regressed,
            _ => return Err(r.corrupt(at, "unknown av source code")),
        };
        let config = ModelConfig {
            variant,
            av_source,
            k: r.u32()? as usize,
            dim: r.u32()? as usize,
            n_domains: r.u32()? as usize,
            dropout_rate: r.f64()?,
            seed: r.u64()?,
        };
        config.validate()?;

        let at = r.pos;
        let n_tensors = r.u32()? as usize;
        let n_linears = usize::from(config.has_embed_head()) + usize::from(config.has_av_head()) + config.n_domains;
        if n_tensors != 2 * n_linears {
            return Err(r.corrupt(at, &format!("expected {} tensors, found {n_tensors}", 2 * n_linears)));
        }
        let mut linears = Vec::with_capacity(n_linears);
        for _ in 0..n_linears {
            let (rows, cols, w) = r.tensor()?;
            let w = Mat64::from_vec(rows, cols, w).expect("sized by header");
            let at = r.pos;
            let (b_rows, b_cols, b) = r.tensor()?;
            if b_cols != 1 || b_rows != rows {
                return Err(r.corrupt(at, "bias shape does not match weight rows"));
            }
            linears.push(Linear { w, b });
        }
        let mut it = linears.into_iter();
        let embed = config.has_embed_head().then(|| it.next().unwrap());
        let av_head = config.has_av_head().then(|| it.next().unwrap());
        let params = ModelParams {
            embed,
            av_head,
            heads: it.collect(),
        };
        check_shapes(&params, &config)?;

        let at = r.pos;
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let adam_cfg = AdamConfig {
                    lr: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                };
                let t = r.u64()?;
                let n = r.u32()? as usize;
                let mut moments = Vec::with_capacity(2 * n);
                for _ in 0..2 * n {
                    moments.push(r.tensor()?.2);
                }
                let v = moments.split_off(n);
                Some(AdamState {
                    config: adam_cfg,
                    t,
                    m: moments,
                    v,
                })
            }
            _ => return Err(r.corrupt(at, "optimizer flag must be 0 or 1")),
        };
        if r.pos != bytes.len() {
            return Err(r.corrupt(r.pos, "trailing bytes"));
        }
        Ok(Self { config, params, adam })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(usize, usize, Vec<f64>), CheckpointError> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or(CheckpointError::Truncated(self.pos))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f64()?);
        }
        Ok((rows, cols, data))
    }

    fn corrupt(&self, offset: usize, message: &str) -> CheckpointError {
        CheckpointError::Corrupt {
            offset,
            message: message.to_string(),
        }
    }
}
