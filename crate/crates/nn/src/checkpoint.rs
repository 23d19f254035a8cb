//! Binary checkpoints.
//!
//! Layout (little endian): magic `SVITCKPT`, `u32` version, length-prefixed
//! config hash, length-prefixed JSON metadata, `u32` tensor count, then per
//! tensor a length-prefixed name, `u32` rank, `u64` dims and `f32` values.
//! A trailing flag byte says whether AdamW moments follow (`u64` step count,
//! then first and second moments in tensor order).

use crate::optim::AdamW;
use crate::params::ParamStore;
use crate::tensor::Scalar;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"SVITCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint was written for config {found}, expected {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("parameter {name}: {problem}")]
    Parameter { name: String, problem: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub step_count: u64,
    pub first: Vec<Vec<f32>>,
    pub second: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub moments: Option<Moments>,
}

fn to_f32<T: Scalar>(v: &[T]) -> Vec<f32> {
    v.iter().map(|x| x.to_f32().unwrap_or(f32::NAN)).collect()
}

fn from_f32<T: Scalar>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x as f64)).collect()
}

impl Checkpoint {
    pub fn from_store<T: Scalar>(
        store: &ParamStore<T>,
        config_hash: &str,
        meta: serde_json::Value,
        optimizer: Option<&AdamW<T>>,
    ) -> Self {
        let tensors = store
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                data: to_f32(p.tensor.data()),
            })
            .collect();
        let moments = optimizer.map(|o| Moments {
            step_count: o.step_count,
            first: o.first_moment.iter().map(|m| to_f32(m)).collect(),
            second: o.second_moment.iter().map(|m| to_f32(m)).collect(),
        });
        Self {
            config_hash: config_hash.to_string(),
            meta,
            tensors,
            moments,
        }
    }

    /// Copies the stored values into `store`, which must have the same
    /// parameter names and shapes in the same order.
    pub fn load_into<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<(), CheckpointError> {
        if store.len() != self.tensors.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} tensors stored, model has {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (p, e) in store.iter_mut().zip(&self.tensors) {
            if p.name != e.name || p.tensor.shape() != e.shape.as_slice() {
                return Err(CheckpointError::Parameter {
                    name: p.name.clone(),
                    problem: format!(
                        "stored as {} {:?}, model expects {:?}",
                        e.name,
                        e.shape,
                        p.tensor.shape()
                    ),
                });
            }
            p.tensor.data_mut().copy_from_slice(&from_f32(&e.data));
        }
        Ok(())
    }

    pub fn restore_optimizer<T: Scalar>(&self, opt: &mut AdamW<T>) -> bool {
        let Some(m) = &self.moments else { return false };
        opt.step_count = m.step_count;
        opt.first_moment = m.first.iter().map(|v| from_f32(v)).collect();
        opt.second_moment = m.second.iter().map(|v| from_f32(v)).collect();
        true
    }

    pub fn check_config(&self, expected: &str) -> Result<(), CheckpointError> {
        if self.config_hash == expected {
            Ok(())
        } else {
            Err(CheckpointError::ConfigMismatch {
                expected: expected.to_string(),
                found: self.config_hash.clone(),
            })
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(w, &self.config_hash)?;
        write_str(w, &self.meta.to_string())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            write_str(w, &t.name)?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            write_f32s(w, &t.data)?;
        }
        match &self.moments {
            None => w.write_all(&[0])?,
            Some(m) => {
                w.write_all(&[1])?;
                w.write_all(&m.step_count.to_le_bytes())?;
                for buf in m.first.iter().chain(&m.second) {
                    write_f32s(w, buf)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let config_hash = read_str(r)?;
        let meta = serde_json::from_str(&read_str(r)?)
            .map_err(|e| CheckpointError::Corrupt(format!("metadata: {e}")))?;
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name = read_str(r)?;
            let rank = read_u32(r)? as usize;
            if rank > 8 {
                return Err(CheckpointError::Corrupt(format!("rank {rank} for {name}")));
            }
            let shape = (0..rank)
                .map(|_| read_u64(r).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let data = read_f32s(r)?;
            if data.len() != shape.iter().product::<usize>() {
                return Err(CheckpointError::Corrupt(format!("size of {name}")));
            }
            tensors.push(TensorEntry { name, shape, data });
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let moments = match flag[0] {
            0 => None,
            1 => {
                let step_count = read_u64(r)?;
                let mut read_set = || (0..count).map(|_| read_f32s(r)).collect::<Result<Vec<_>, _>>();
                let first = read_set()?;
                let second = read_set()?;
                Some(Moments {
                    step_count,
                    first,
                    second,
                })
            }
            f => return Err(CheckpointError::Corrupt(format!("moment flag {f}"))),
        };
        Ok(Self {
            config_hash,
            meta,
            tensors,
            moments,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> std::io::Result<()> {
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| CheckpointError::Corrupt("non-utf8 string".into()))
}

fn read_f32s<R: Read>(r: &mut R) -> Result<Vec<f32>, CheckpointError> {
    let len = read_u64(r)? as usize;
    let mut bytes = vec![0u8; len.checked_mul(4).ok_or_else(|| CheckpointError::Corrupt("length".into()))?];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
