//! Splitting a cloud into fixed-size binary cubes and putting it back
//! together.
//!
//! A point `p` lands in cube `i = p / size` (per axis, integer division) at
//! relative coordinate `p % size`; combining inverts that with
//! `p = i * size + r`. Only cubes holding at least one point are produced,
//! and they are always listed in lexicographic index order.

use std::collections::{BTreeMap, HashSet};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

/// Global cube grid index `(i, j, k)`.
pub type CubeIndex = [u32; 3];

/// Cube extent `(l, w, h)` along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CubeSize(pub [u32; 3]);

impl CubeSize {
    pub fn cubic(side: u32) -> Self {
        CubeSize([side; 3])
    }

    pub fn voxel_count(self) -> usize {
        self.0.iter().map(|&s| s as usize).product()
    }

    fn validate(self) -> Result<()> {
        if self.0.contains(&0) {
            return Err(Error::Input(format!("cube size {:?} has a zero side", self.0)));
        }
        Ok(())
    }
}

impl Default for CubeSize {
    fn default() -> Self {
        CubeSize::cubic(64)
    }
}

/// Dense bit grid in x-fastest order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    size: CubeSize,
    words: Vec<u64>,
}

impl VoxelGrid {
    pub fn new(size: CubeSize) -> Self {
        let n = size.voxel_count();
        VoxelGrid {
            size,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn size(&self) -> CubeSize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.size.voxel_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of a relative coordinate.
    pub fn linear(&self, [x, y, z]: Point) -> usize {
        let [l, w, _] = self.size.0;
        ((z as usize * w as usize) + y as usize) * l as usize + x as usize
    }

    pub fn coord(&self, index: usize) -> Point {
        let [l, w, _] = self.size.0.map(|s| s as usize);
        [(index % l) as u32, ((index / l) % w) as u32, (index / (l * w)) as u32]
    }

    pub fn get_linear(&self, index: usize) -> bool {
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn set_linear(&mut self, index: usize, value: bool) {
        let bit = 1u64 << (index % 64);
        if value {
            self.words[index / 64] |= bit;
        } else {
            self.words[index / 64] &= !bit;
        }
    }

    pub fn get(&self, p: Point) -> bool {
        self.get_linear(self.linear(p))
    }

    pub fn set(&mut self, p: Point, value: bool) {
        let i = self.linear(p);
        self.set_linear(i, value);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Linear indices of occupied voxels, ascending.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }
}

/// A binary occupancy cube tagged with its position in the cube grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OccupancyCube {
    pub index: CubeIndex,
    pub voxels: VoxelGrid,
}

impl OccupancyCube {
    pub fn empty(index: CubeIndex, size: CubeSize) -> Self {
        OccupancyCube {
            index,
            voxels: VoxelGrid::new(size),
        }
    }

    pub fn size(&self) -> CubeSize {
        self.voxels.size()
    }

    pub fn occupied_count(&self) -> usize {
        self.voxels.count_ones()
    }

    /// Absolute coordinates (as `u64` to survive overflow checks) of every
    /// occupied voxel.
    fn absolute_points(&self) -> impl Iterator<Item = [u64; 3]> + '_ {
        let size = self.size().0;
        self.voxels.occupied().map(move |i| {
            let r = self.voxels.coord(i);
            std::array::from_fn(|a| u64::from(self.index[a]) * u64::from(size[a]) + u64::from(r[a]))
        })
    }
}

/// Splits `pc` into non-empty cubes of the given size, ordered by index.
pub fn partition(pc: &PointCloud, size: CubeSize) -> Result<Vec<OccupancyCube>> {
    size.validate()?;
    let s = size.0;
    let mut cubes: BTreeMap<CubeIndex, OccupancyCube> = BTreeMap::new();
    for p in pc.points() {
        let index = std::array::from_fn(|a| p[a] / s[a]);
        let rel = std::array::from_fn(|a| p[a] % s[a]);
        cubes
            .entry(index)
            .or_insert_with(|| OccupancyCube::empty(index, size))
            .voxels
            .set(rel, true);
    }
    Ok(cubes.into_values().collect())
}

/// Reassembles cubes into a cloud of the given depth.
pub fn combine(cubes: &[OccupancyCube], depth: u32) -> Result<PointCloud> {
    if let Some(first) = cubes.first() {
        if let Some(bad) = cubes.iter().find(|c| c.size() != first.size()) {
            return Err(Error::Input(format!(
                "cube {:?} has size {:?}, expected {:?}",
                bad.index,
                bad.size().0,
                first.size().0
            )));
        }
    }
    let mut seen = HashSet::with_capacity(cubes.len());
    for cube in cubes {
        if !seen.insert(cube.index) {
            return Err(Error::Input(format!("duplicate cube index {:?}", cube.index)));
        }
    }
    let limit = 1u64 << depth.min(63);
    let mut points = Vec::with_capacity(cubes.iter().map(OccupancyCube::occupied_count).sum());
    for cube in cubes {
        for p in cube.absolute_points() {
            if p.iter().any(|&c| c >= limit) {
                return Err(Error::Domain(format!(
                    "cube {:?} places point {p:?} outside the 2^{depth} grid",
                    cube.index
                )));
            }
            points.push(p.map(|c| c as u32));
        }
    }
    PointCloud::new(points, depth)
}

/// Debug dump: per cube, six little-endian `u32` (index then size) followed
/// by the bit-packed grid (x fastest, least significant bit first).
pub fn write_cube_dump(cubes: &[OccupancyCube]) -> Vec<u8> {
    let mut out = Vec::new();
    for cube in cubes {
        for v in cube.index.iter().chain(cube.size().0.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let n = cube.voxels.len();
        let mut packed = vec![0u8; n.div_ceil(8)];
        for i in cube.voxels.occupied() {
            packed[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&packed);
    }
    out
}

pub fn read_cube_dump(bytes: &[u8]) -> Result<Vec<OccupancyCube>> {
    let mut pos = 0;
    let mut cubes = Vec::new();
    while pos < bytes.len() {
        if pos + 24 > bytes.len() {
            return Err(Error::decode(pos, "truncated cube header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[pos + 4 * i..pos + 4 * i + 4].try_into().unwrap());
        let index = [word(0), word(1), word(2)];
        let size = CubeSize([word(3), word(4), word(5)]);
        size.validate().map_err(|_| Error::decode(pos, "zero cube side"))?;
        pos += 24;
        let n = size.voxel_count();
        let len = n.div_ceil(8);
        if pos + len > bytes.len() {
            return Err(Error::decode(pos, "truncated voxel grid"));
        }
        let mut cube = OccupancyCube::empty(index, size);
        for i in 0..n {
            if bytes[pos + i / 8] >> (i % 8) & 1 == 1 {
                cube.voxels.set_linear(i, true);
            }
        }
        pos += len;
        cubes.push(cube);
    }
    Ok(cubes)
}
