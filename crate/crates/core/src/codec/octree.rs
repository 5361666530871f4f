//! A plain occupancy-byte octree coder.
//!
//! Each internal node is one byte whose bit `7 - c` marks child `c`, where
//! `c = 4*dx + 2*dy + dz`. Nodes are emitted breadth first, level by level,
//! children in ascending `c`. That order coincides with sorting voxels by
//! their x-major Morton key, which is how the encoder walks them.
//!
//! Stream layout (little endian): `"VOCT"`, `u8` depth, `u64` length of the
//! raw occupancy bytes, then the losslessly compressed occupancy bytes. An
//! empty cloud is encoded with raw length 0.

use super::lossless::{compress_lossless, decompress_lossless};
use crate::cloud::{check_depth, Point, PointCloud};
use crate::error::{Error, Result};

pub const OCTREE_MAGIC: &[u8; 4] = b"VOCT";
const HEADER_LEN: usize = 4 + 1 + 8;

fn morton(p: Point, depth: u32) -> u128 {
    let mut key = 0u128;
    for bit in (0..depth).rev() {
        let child = (p[0] >> bit & 1) << 2 | (p[1] >> bit & 1) << 1 | (p[2] >> bit & 1);
        key = key << 3 | u128::from(child);
    }
    key
}

fn unmorton(key: u128, depth: u32) -> Point {
    let mut p = [0u32; 3];
    for level in 0..depth {
        let child = (key >> (3 * (depth - 1 - level))) as u32 & 7;
        p[0] = p[0] << 1 | child >> 2;
        p[1] = p[1] << 1 | (child >> 1 & 1);
        p[2] = p[2] << 1 | (child & 1);
    }
    p
}

/// Breadth-first occupancy bytes for levels `0..depth`, before compression.
pub fn occupancy_bytes(pc: &PointCloud) -> Vec<u8> {
    let depth = pc.depth();
    let mut keys: Vec<u128> = pc.points().iter().map(|&p| morton(p, depth)).collect();
    keys.sort_unstable();
    let mut out = Vec::new();
    for level in 0..depth {
        let parent_shift = 3 * (depth - level);
        let child_shift = parent_shift - 3;
        let mut current: Option<(u128, u8)> = None;
        for &key in &keys {
            let parent = key >> parent_shift;
            let bit = 0x80u8 >> ((key >> child_shift) & 7) as u8;
            match current {
                Some((p, ref mut byte)) if p == parent => *byte |= bit,
                _ => {
                    if let Some((_, byte)) = current {
                        out.push(byte);
                    }
                    current = Some((parent, bit));
                }
            }
        }
        if let Some((_, byte)) = current {
            out.push(byte);
        }
    }
    out
}

/// Rebuilds a cloud from raw occupancy bytes.
pub fn cloud_from_occupancy(raw: &[u8], depth: u32) -> Result<PointCloud> {
    check_depth(depth)?;
    if raw.is_empty() {
        return PointCloud::empty(depth);
    }
    let mut nodes = vec![0u128];
    let mut pos = 0;
    for level in 0..depth {
        let mut next = Vec::with_capacity(nodes.len() * 2);
        for &node in &nodes {
            let Some(&byte) = raw.get(pos) else {
                return Err(Error::decode(
                    pos,
                    format!("stream ends inside level {level}"),
                ));
            };
            if byte == 0 {
                return Err(Error::decode(pos, "internal node without children"));
            }
            pos += 1;
            for child in 0..8u8 {
                if byte & (0x80 >> child) != 0 {
                    next.push(node << 3 | u128::from(child));
                }
            }
        }
        nodes = next;
    }
    if pos != raw.len() {
        return Err(Error::decode(pos, "trailing bytes after the last level"));
    }
    let points = nodes.into_iter().map(|k| unmorton(k, depth)).collect();
    PointCloud::new(points, depth)
}

pub fn octree_encode(pc: &PointCloud) -> Vec<u8> {
    let raw = occupancy_bytes(pc);
    let mut out = Vec::with_capacity(HEADER_LEN + raw.len() / 2);
    out.extend_from_slice(OCTREE_MAGIC);
    out.push(pc.depth() as u8);
    out.extend_from_slice(&(raw.len() as u64).to_le_bytes());
    out.extend_from_slice(&compress_lossless(&raw));
    out
}

pub fn octree_decode(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::decode(bytes.len(), "truncated octree header"));
    }
    if &bytes[..4] != OCTREE_MAGIC {
        return Err(Error::decode(0, "bad octree magic"));
    }
    let depth = u32::from(bytes[4]);
    let raw_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let raw = decompress_lossless(&bytes[HEADER_LEN..])
        .map_err(|_| Error::decode(HEADER_LEN, "corrupt occupancy payload"))?;
    if raw.len() as u64 != raw_len {
        return Err(Error::decode(
            HEADER_LEN,
            format!("payload holds {} occupancy bytes, header says {raw_len}", raw.len()),
        ));
    }
    cloud_from_occupancy(&raw, depth)
}
