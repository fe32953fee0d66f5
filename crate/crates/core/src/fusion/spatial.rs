//! Uniform grid hash over 3-D points: exact nearest-neighbour and radius queries.

use std::collections::HashMap;

use crate::geometry::Vec3;

type Cell = [i64; 3];

pub struct GridIndex<'a> {
    points: &'a [Vec3],
    cell: f64,
    buckets: HashMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
}

impl<'a> GridIndex<'a> {
    /// Builds the index with a given cell edge length (must be > 0).
    pub fn new(points: &'a [Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut buckets: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p, cell);
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
            buckets.entry(c).or_default().push(i);
        }
        Self {
            points,
            cell,
            buckets,
            lo,
            hi,
        }
    }

    /// Picks a cell size giving a handful of points per occupied cell.
    pub fn with_auto_cell(points: &'a [Vec3]) -> Self {
        Self::new(points, auto_cell(points))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Exact nearest neighbour `(index, distance)`; ties go to the lowest index.
    pub fn nearest(&self, p: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = cell_of(p, self.cell);
        let max_ring = (0..3)
            .map(|k| (c[k] - self.lo[k]).abs().max((self.hi[k] - c[k]).abs()))
            .max()
            .unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            self.for_each_in_ring(c, ring, |i| {
                let d2 = (self.points[i] - p).norm_squared();
                let better = match best {
                    None => true,
                    Some((bi, bd2)) => d2 < bd2 || (d2 == bd2 && i < bi),
                };
                if better {
                    best = Some((i, d2));
                }
            });
            // Anything in ring+1 or beyond is at least ring*cell away.
            if let Some((_, bd2)) = best {
                let reach = ring as f64 * self.cell;
                if bd2 < reach * reach {
                    break;
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn within(&self, p: &Vec3, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let lo = cell_of(&(p - Vec3::repeat(radius)), self.cell);
        let hi = cell_of(&(p + Vec3::repeat(radius)), self.cell);
        let mut out = Vec::new();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if let Some(bucket) = self.buckets.get(&[x, y, z]) {
                        out.extend(
                            bucket
                                .iter()
                                .copied()
                                .filter(|&i| (self.points[i] - p).norm_squared() <= r2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn for_each_in_ring(&self, c: Cell, ring: i64, mut f: impl FnMut(usize)) {
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                let on_shell_xy = dx.abs() == ring || dy.abs() == ring;
                let dzs: Box<dyn Iterator<Item = i64>> = if on_shell_xy {
                    Box::new(-ring..=ring)
                } else if ring == 0 {
                    Box::new(std::iter::once(0))
                } else {
                    Box::new([-ring, ring].into_iter())
                };
                for dz in dzs {
                    if let Some(bucket) = self.buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        bucket.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }
}

fn cell_of(p: &Vec3, cell: f64) -> Cell {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

fn auto_cell(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    let max_ext = ext.max();
    if max_ext <= 0.0 {
        return 1.0;
    }
    // Treat near-flat extents as thin slabs so the estimate still tracks density.
    let floor = max_ext * 1e-3;
    let vol = ext.map(|e| e.max(floor)).product();
    let per_point = vol / points.len() as f64;
    (2.0 * per_point.cbrt()).clamp(max_ext * 1e-4, max_ext)
}
