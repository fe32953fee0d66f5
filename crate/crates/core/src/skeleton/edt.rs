//! Exact Euclidean distance transform by separable lower envelopes of parabolas.

use super::grid::{DistanceField, VoxelGrid};

const FAR: f64 = 1e20;

/// 1-D squared distance transform of `f` written into `d` (Felzenszwalb & Huttenlocher).
fn dt1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        *dq = diff * diff + f[v[k]];
    }
}

/// Distance in voxel units from each occupied voxel center to the nearest free voxel center.
pub fn edt(grid: &VoxelGrid) -> DistanceField {
    let [nx, ny, nz] = grid.dims();
    let mut g: Vec<f64> = grid.occupancy().iter().map(|&b| if b { FAR } else { 0.0 }).collect();
    let nmax = nx.max(ny).max(nz);
    let mut f = vec![0.0; nmax];
    let mut d = vec![0.0; nmax];
    let mut v = vec![0usize; nmax];
    let mut z = vec![0.0; nmax + 1];
    let idx = |x: usize, y: usize, zz: usize| x + nx * (y + ny * zz);

    for zz in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                f[x] = g[idx(x, y, zz)];
            }
            dt1d(&f[..nx], &mut d[..nx], &mut v, &mut z);
            for x in 0..nx {
                g[idx(x, y, zz)] = d[x];
            }
        }
    }
    for zz in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                f[y] = g[idx(x, y, zz)];
            }
            dt1d(&f[..ny], &mut d[..ny], &mut v, &mut z);
            for y in 0..ny {
                g[idx(x, y, zz)] = d[y];
            }
        }
    }
    for y in 0..ny {
        for x in 0..nx {
            for zz in 0..nz {
                f[zz] = g[idx(x, y, zz)];
            }
            dt1d(&f[..nz], &mut d[..nz], &mut v, &mut z);
            for zz in 0..nz {
                g[idx(x, y, zz)] = d[zz];
            }
        }
    }
    let values = g
        .into_iter()
        .zip(grid.occupancy())
        .map(|(sq, &occ)| if occ { sq.sqrt() } else { 0.0 })
        .collect();
    DistanceField::new(grid.dims(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(grid: &VoxelGrid) -> Vec<f64> {
        let free: Vec<[usize; 3]> = (0..grid.len()).filter(|&i| !grid.occupancy()[i]).map(|i| grid.coords(i)).collect();
        (0..grid.len())
            .map(|i| {
                if !grid.occupancy()[i] {
                    return 0.0;
                }
                let c = grid.coords(i);
                free.iter()
                    .map(|f| {
                        let dx = c[0] as f64 - f[0] as f64;
                        let dy = c[1] as f64 - f[1] as f64;
                        let dz = c[2] as f64 - f[2] as f64;
                        dx * dx + dy * dy + dz * dz
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    }

    #[test]
    fn single_voxel_is_one() {
        let mut g = VoxelGrid::empty(Vec3::zeros(), 1.0, [3, 3, 3]);
        g.set(1, 1, 1, true);
        assert_eq!(edt(&g).get(1, 1, 1), 1.0);
    }

    #[test]
    fn cube_center_is_three() {
        let mut g = VoxelGrid::empty(Vec3::zeros(), 1.0, [7, 7, 7]);
        for z in 1..6 {
            for y in 1..6 {
                for x in 1..6 {
                    g.set(x, y, z, true);
                }
            }
        }
        assert_eq!(edt(&g).get(3, 3, 3), 3.0);
    }

    #[test]
    fn empty_grid_is_zero() {
        let g = VoxelGrid::empty(Vec3::zeros(), 1.0, [4, 5, 6]);
        assert!(edt(&g).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let dims = [rng.gen_range(3..=20), rng.gen_range(3..=20), rng.gen_range(3..=20)];
            let mut g = VoxelGrid::empty(Vec3::zeros(), 1.0, dims);
            let p = rng.gen_range(0.3..0.95);
            for z in 1..dims[2] - 1 {
                for y in 1..dims[1] - 1 {
                    for x in 1..dims[0] - 1 {
                        if rng.gen_bool(p) {
                            g.set(x, y, z, true);
                        }
                    }
                }
            }
            assert_eq!(edt(&g).values(), brute(&g).as_slice());
        }
    }
}
