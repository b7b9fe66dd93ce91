//! Parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! version u32 | config_len u32 | config JSON bytes | tensor count u32
//! per tensor: name_len u16 | name bytes | ndim u8 | dims u32 x ndim |
//!             values f32 x product(dims)
//! ```

use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::nn::model::{ModelConfig, Resnet1d};
use crate::nn::params::Parameters;
use crate::nn::scalar::Scalar;

const CHECKPOINT_VERSION: u32 = 1;

/// Writes the model configuration and every tensor (including running
/// statistics) as 32-bit values.
pub fn save_checkpoint<F: Scalar>(
    path: &Path,
    config: &ModelConfig,
    params: &Parameters<F>,
) -> Result<()> {
    let config_json = serde_json::to_vec(config)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config_json);
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (spec, tensor) in params.iter() {
        let name = spec.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(spec.shape.len() as u8);
        for &d in &spec.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.iter() {
            buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + n > self.buf.len() {
            return Err(Error::format(
                self.offset as u64,
                format!("checkpoint truncated while reading {what}"),
            ));
        }
        let out = &self.buf[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u8v(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16v(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32v(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Reads a checkpoint back; the stored configuration rebuilds the
/// topology, and tensors are matched by name and shape.
pub fn load_checkpoint(path: &Path) -> Result<(Resnet1d, Parameters<f32>)> {
    let buf = std::fs::read(path)?;
    let mut r = Reader {
        buf: &buf,
        offset: 0,
    };
    let version = r.u32v("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            0,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let config_len = r.u32v("config length")? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len, "config")?)
        .map_err(|e| Error::format(8, format!("bad embedded config: {e}")))?;
    let model = Resnet1d::new(config)?;
    // Values are irrelevant; the layout provides names and shapes.
    let mut params: Parameters<f32> =
        model.init_params(&mut crate::seed::derive_rng(0, 0));

    let count = r.u32v("tensor count")? as usize;
    if count != params.len() {
        return Err(Error::format(
            r.offset as u64,
            format!("checkpoint has {count} tensors, model expects {}", params.len()),
        ));
    }
    for id in params.tensor_ids().collect::<Vec<_>>() {
        let name_len = r.u16v("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::format(r.offset as u64, "tensor name is not UTF-8"))?
            .to_string();
        if name != params.spec(id).name {
            return Err(Error::format(
                r.offset as u64,
                format!("expected tensor `{}`, found `{name}`", params.spec(id).name),
            ));
        }
        let ndim = r.u8v("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32v("tensor dim")? as usize);
        }
        if dims != params.spec(id).shape {
            return Err(Error::format(
                r.offset as u64,
                format!(
                    "tensor `{name}` has shape {dims:?}, model expects {:?}",
                    params.spec(id).shape
                ),
            ));
        }
        let numel: usize = dims.iter().product();
        let mut values = Vec::with_capacity(numel);
        for _ in 0..numel {
            let b = r.take(4, "tensor values")?;
            values.push(f32::from_le_bytes(b.try_into().unwrap()));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&dims), values)
            .map_err(|e| Error::format(r.offset as u64, format!("bad tensor data: {e}")))?;
        params.set(id, arr)?;
    }
    if r.offset != buf.len() {
        return Err(Error::format(
            r.offset as u64,
            "trailing bytes after final tensor",
        ));
    }
    Ok((model, params))
}
