//! Weight checkpoint files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "VWT1"
//! config_len, config bytes (UTF-8 `key=value` lines)
//! param_count
//! per parameter: name_len, name bytes, rank, dims..., f32 values
//! ```

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VWT1";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn write_checkpoint<'a>(
    config: &str,
    params: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
) -> Vec<u8> {
    let params: Vec<_> = params.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, config.len());
    out.extend_from_slice(config.as_bytes());
    put_u32(&mut out, params.len());
    for (name, tensor) in params {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, tensor.shape().len());
        for &d in tensor.shape() {
            put_u32(&mut out, d);
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::decode(self.pos, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn text(&mut self) -> Result<String> {
        let at = self.pos;
        let len = self.u32()?;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::decode(at, "checkpoint string is not UTF-8"))
    }
}

/// Parses a checkpoint into its config text and named tensors.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(String, Vec<(String, Tensor<f32>)>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::decode(0, "bad checkpoint magic"));
    }
    let config = r.text()?;
    let count = r.u32()?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.text()?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let at = r.pos;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::decode(at, "tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push((name, Tensor::from_vec(&shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::decode(r.pos, "trailing bytes after the last parameter"));
    }
    Ok((config, params))
}
