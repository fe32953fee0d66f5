//! Dense binary voxel grids and their on-disk formats.
//!
//! Binary layout (little-endian): `u32 nx, ny, nz`, `f64 ox, oy, oz`,
//! `f64 resolution`, then `ceil(nx*ny*nz / 8)` bytes of occupancy bits in
//! x-fastest order, least significant bit first.
//!
//! ASCII layout: a `voxelgrid nx ny nz` line, `origin ox oy oz`,
//! `resolution r`, then for each z a `z <k>` line followed by `ny` rows of `nx`
//! characters (`#` occupied, `.` free).

use std::collections::VecDeque;
use std::fmt::Write as _;

use super::SkeletonError;
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    occ: Vec<bool>,
}

/// Offsets of the 26 neighbours, in z-major then y then x order.
pub(crate) const N26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

impl VoxelGrid {
    pub fn empty(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Self {
        Self {
            origin,
            resolution,
            dims,
            occ: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_occupancy(origin: Vec3, resolution: f64, dims: [usize; 3], occ: Vec<bool>) -> Result<Self, SkeletonError> {
        if occ.len() != dims[0] * dims[1] * dims[2] {
            return Err(SkeletonError::InvalidGrid(format!(
                "occupancy has {} entries, dims {:?} need {}",
                occ.len(),
                dims,
                dims[0] * dims[1] * dims[2]
            )));
        }
        let g = Self {
            origin,
            resolution,
            dims,
            occ,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks positive dims and resolution and an empty one-voxel border.
    pub fn validate(&self) -> Result<(), SkeletonError> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(SkeletonError::InvalidGrid(format!("zero dimension in {:?}", self.dims)));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) || !self.origin.iter().all(|c| c.is_finite()) {
            return Err(SkeletonError::InvalidGrid("resolution must be > 0 and origin finite".into()));
        }
        if !self.border_is_empty() {
            return Err(SkeletonError::InvalidGrid("border layer must be empty".into()));
        }
        Ok(())
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occ
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        x < self.dims[0] && y < self.dims[1] && z < self.dims[2] && self.occ[self.index(x, y, z)]
    }

    /// Occupancy at signed coordinates; anything outside the grid is free.
    #[inline]
    pub fn get_signed(&self, c: [i64; 3]) -> bool {
        if c.iter().any(|&v| v < 0) {
            return false;
        }
        self.get(c[0] as usize, c[1] as usize, c[2] as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.index(x, y, z);
        self.occ[i] = value;
    }

    pub fn set_index(&mut self, i: usize, value: bool) {
        self.occ[i] = value;
    }

    pub fn count(&self) -> usize {
        self.occ.iter().filter(|&&b| b).count()
    }

    pub fn occupied_indices(&self) -> Vec<usize> {
        (0..self.occ.len()).filter(|&i| self.occ[i]).collect()
    }

    /// World position of a voxel center.
    pub fn center(&self, c: [usize; 3]) -> Vec3 {
        self.origin + Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * self.resolution
    }

    /// Voxel containing a world point, if inside the grid.
    pub fn voxel_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for k in 0..3 {
            let f = ((p[k] - self.origin[k]) / self.resolution).floor();
            if f < 0.0 || f >= self.dims[k] as f64 {
                return None;
            }
            out[k] = f as usize;
        }
        Some(out)
    }

    /// Interior voxel for a world point: like [`voxel_of`](Self::voxel_of) but
    /// clamped off the empty border layer. This is the mapping used when rasterizing.
    pub fn interior_voxel_of(&self, p: &Vec3) -> [usize; 3] {
        let mut out = [0usize; 3];
        for k in 0..3 {
            let f = ((p[k] - self.origin[k]) / self.resolution).floor();
            let hi = self.dims[k].saturating_sub(2).max(1) as f64;
            out[k] = f.clamp(1.0, hi) as usize;
        }
        out
    }

    pub fn border_is_empty(&self) -> bool {
        let [nx, ny, nz] = self.dims;
        (0..self.occ.len()).filter(|&i| self.occ[i]).all(|i| {
            let [x, y, z] = self.coords(i);
            x > 0 && y > 0 && z > 0 && x + 1 < nx && y + 1 < ny && z + 1 < nz
        })
    }

    /// Number of occupied 26-neighbours of a voxel.
    pub fn neighbour_count(&self, c: [usize; 3]) -> usize {
        N26.iter()
            .filter(|d| self.get_signed([c[0] as i64 + d[0], c[1] as i64 + d[1], c[2] as i64 + d[2]]))
            .count()
    }

    /// 26-connected components of the occupied voxels, each a sorted index list;
    /// components are ordered by their smallest index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.occ.len()];
        let mut out = Vec::new();
        for start in 0..self.occ.len() {
            if !self.occ[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            label[start] = id;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let c = self.coords(i);
                for d in &N26 {
                    let n = [c[0] as i64 + d[0], c[1] as i64 + d[1], c[2] as i64 + d[2]];
                    if self.get_signed(n) {
                        let j = self.index(n[0] as usize, n[1] as usize, n[2] as usize);
                        if label[j] == usize::MAX {
                            label[j] = id;
                            members.push(j);
                            queue.push_back(j);
                        }
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(44 + self.occ.len() / 8 + 1);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for k in 0..3 {
            out.extend_from_slice(&self.origin[k].to_le_bytes());
        }
        out.extend_from_slice(&self.resolution.to_le_bytes());
        let mut packed = vec![0u8; self.occ.len().div_ceil(8)];
        for (i, &b) in self.occ.iter().enumerate() {
            if b {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&packed);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SkeletonError> {
        let bad = |m: &str| SkeletonError::InvalidGrid(m.to_string());
        if bytes.len() < 44 {
            return Err(bad("voxel file shorter than its 44-byte header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let dims = [u32_at(0), u32_at(4), u32_at(8)];
        let origin = Vec3::new(f64_at(12), f64_at(20), f64_at(28));
        let resolution = f64_at(36);
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| bad("voxel dims overflow"))?;
        let body = &bytes[44..];
        if body.len() != n.div_ceil(8) {
            return Err(SkeletonError::InvalidGrid(format!(
                "expected {} occupancy bytes, found {}",
                n.div_ceil(8),
                body.len()
            )));
        }
        let occ = (0..n).map(|i| body[i / 8] & (1 << (i % 8)) != 0).collect();
        Self::from_occupancy(origin, resolution, dims, occ)
    }

    pub fn to_ascii(&self) -> String {
        let [nx, ny, nz] = self.dims;
        let mut s = String::new();
        let _ = writeln!(s, "voxelgrid {nx} {ny} {nz}");
        let _ = writeln!(s, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.z);
        let _ = writeln!(s, "resolution {}", self.resolution);
        for z in 0..nz {
            let _ = writeln!(s, "z {z}");
            for y in 0..ny {
                let row: String = (0..nx).map(|x| if self.get(x, y, z) { '#' } else { '.' }).collect();
                s.push_str(&row);
                s.push('\n');
            }
        }
        s
    }

    pub fn from_ascii(text: &str) -> Result<Self, SkeletonError> {
        let bad = |m: String| SkeletonError::InvalidGrid(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str, n: usize| -> Result<Vec<String>, SkeletonError> {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
            let tok: Vec<String> = line.split_whitespace().map(String::from).collect();
            if tok.first().map(String::as_str) != Some(key) || tok.len() != n + 1 {
                return Err(bad(format!("expected `{key}` with {n} values, got `{line}`")));
            }
            Ok(tok[1..].to_vec())
        };
        let d = header("voxelgrid", 3)?;
        let o = header("origin", 3)?;
        let r = header("resolution", 1)?;
        let pu = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
        let pf = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let dims = [pu(&d[0])?, pu(&d[1])?, pu(&d[2])?];
        let origin = Vec3::new(pf(&o[0])?, pf(&o[1])?, pf(&o[2])?);
        let resolution = pf(&r[0])?;
        let mut occ = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            let zl = lines.next().ok_or_else(|| bad(format!("missing slice z {z}")))?;
            if zl.trim() != format!("z {z}") {
                return Err(bad(format!("expected `z {z}`, got `{zl}`")));
            }
            for y in 0..dims[1] {
                let row = lines.next().ok_or_else(|| bad(format!("missing row y {y} of slice {z}")))?.trim();
                if row.chars().count() != dims[0] {
                    return Err(bad(format!("row y {y} of slice {z} has wrong width")));
                }
                for ch in row.chars() {
                    occ.push(match ch {
                        '#' => true,
                        '.' => false,
                        c => return Err(bad(format!("unexpected character `{c}`"))),
                    });
                }
            }
        }
        Self::from_occupancy(origin, resolution, dims, occ)
    }
}

/// Per-voxel distance (in voxels) to the nearest free voxel; zero on free voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl DistanceField {
    pub(crate) fn new(dims: [usize; 3], values: Vec<f64>) -> Self {
        Self { dims, values }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at_index(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> VoxelGrid {
        let mut g = VoxelGrid::empty(Vec3::new(0.1, -0.2, 0.3), 0.005, [5, 4, 6]);
        g.set(1, 1, 1, true);
        g.set(2, 2, 3, true);
        g.set(3, 2, 4, true);
        g
    }

    #[test]
    fn binary_round_trip() {
        let g = sample();
        assert_eq!(VoxelGrid::from_bytes(&g.to_bytes()).unwrap(), g);
    }

    #[test]
    fn ascii_round_trip() {
        let g = sample();
        assert_eq!(VoxelGrid::from_ascii(&g.to_ascii()).unwrap(), g);
    }

    #[test]
    fn occupied_border_rejected() {
        let mut g = sample();
        g.set(0, 1, 1, true);
        assert!(VoxelGrid::from_bytes(&g.to_bytes()).is_err());
    }

    #[test]
    fn component_labelling() {
        let g = sample();
        // (2,2,3) and (3,2,4) touch diagonally; (1,1,1) is alone.
        assert_eq!(g.components().len(), 2);
    }

    #[test]
    fn neighbour_offsets_are_distinct() {
        let set: std::collections::BTreeSet<_> = N26.iter().collect();
        assert_eq!(set.len(), 26);
    }
}
