//! Per-cube point counts shipped alongside the geometry stream so the
//! decoder can keep exactly the right number of voxels in each cube.
//!
//! Serialized as `"VCNT"`, `u32` cube count (little endian), then the
//! LZMA-compressed concatenation of one varint per cube.

use super::lossless::{compress_lossless, decompress_lossless};
use super::varint::{decode_varint, encode_varint};
use crate::error::{Error, Result};

pub const SIDE_CHANNEL_MAGIC: &[u8; 4] = b"VCNT";
const HEADER_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideChannel {
    /// Ground-truth point count per decoded cube, in cube index order.
    pub counts: Vec<u64>,
    /// Compressed varint payload.
    pub payload: Vec<u8>,
    /// Payload size in bits.
    pub bits: u64,
}

impl SideChannel {
    /// Size of the full serialized stream, header included.
    pub fn stream_bits(&self) -> u64 {
        self.bits + 8 * HEADER_LEN as u64
    }

    pub fn total_points(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(SIDE_CHANNEL_MAGIC);
        out.extend_from_slice(&(self.counts.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::decode(bytes.len(), "truncated side-channel header"));
        }
        if &bytes[..4] != SIDE_CHANNEL_MAGIC {
            return Err(Error::decode(0, "bad side-channel magic"));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let payload = bytes[HEADER_LEN..].to_vec();
        let counts = decode_counts(&payload, count)?;
        Ok(SideChannel {
            counts,
            bits: payload.len() as u64 * 8,
            payload,
        })
    }
}

pub fn encode_side_channel(counts: &[u64]) -> SideChannel {
    let mut raw = Vec::with_capacity(counts.len() * 2);
    for &c in counts {
        encode_varint(c, &mut raw);
    }
    let payload = compress_lossless(&raw);
    SideChannel {
        counts: counts.to_vec(),
        bits: payload.len() as u64 * 8,
        payload,
    }
}

/// Inverts the payload of [`encode_side_channel`], expecting `count` values.
pub fn decode_counts(payload: &[u8], count: usize) -> Result<Vec<u64>> {
    let raw = decompress_lossless(payload)?;
    let mut pos = 0;
    let mut counts = Vec::with_capacity(count);
    for _ in 0..count {
        counts.push(decode_varint(&raw, &mut pos)?);
    }
    if pos != raw.len() {
        return Err(Error::decode(pos, "trailing bytes after the last count"));
    }
    Ok(counts)
}
