//! Topology-preserving 3-D thinning by directional peeling of simple points.
//!
//! Each pass visits the six face directions in turn. In a sub-iteration the
//! candidates are the voxels whose face neighbour in that direction is free,
//! that are not curve endpoints (exactly one 26-neighbour) and that are simple.
//! Candidates are then removed one by one after re-checking both conditions
//! against the current grid. Passes repeat until nothing changes.

use std::sync::OnceLock;

use super::grid::VoxelGrid;

const DIRECTIONS: [[i64; 3]; 6] = [[0, 0, 1], [0, 0, -1], [0, 1, 0], [0, -1, 0], [1, 0, 0], [-1, 0, 0]];
const CENTER: usize = 13;

struct CubeAdjacency {
    n26: Vec<Vec<usize>>,
    n6: Vec<Vec<usize>>,
    in_n18: [bool; 27],
    face: [usize; 6],
}

fn cube_pos(i: usize) -> [i64; 3] {
    [(i % 3) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i / 9) as i64 - 1]
}

fn cube_index(p: [i64; 3]) -> usize {
    ((p[0] + 1) + 3 * (p[1] + 1) + 9 * (p[2] + 1)) as usize
}

fn adjacency() -> &'static CubeAdjacency {
    static ADJ: OnceLock<CubeAdjacency> = OnceLock::new();
    ADJ.get_or_init(|| {
        let mut n26 = vec![Vec::new(); 27];
        let mut n6 = vec![Vec::new(); 27];
        let mut in_n18 = [false; 27];
        for i in 0..27 {
            let p = cube_pos(i);
            let l1: i64 = p.iter().map(|c| c.abs()).sum();
            in_n18[i] = i != CENTER && l1 <= 2;
            for j in 0..27 {
                if i == j || j == CENTER || i == CENTER {
                    continue;
                }
                let q = cube_pos(j);
                let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
                if d.iter().all(|c| c.abs() <= 1) {
                    n26[i].push(j);
                    if d.iter().map(|c| c.abs()).sum::<i64>() == 1 {
                        n6[i].push(j);
                    }
                }
            }
        }
        let face = DIRECTIONS.map(cube_index);
        CubeAdjacency {
            n26,
            n6,
            in_n18,
            face,
        }
    })
}

fn neighbourhood(grid: &VoxelGrid, c: [usize; 3]) -> [bool; 27] {
    let mut nb = [false; 27];
    for (i, slot) in nb.iter_mut().enumerate() {
        let d = cube_pos(i);
        *slot = grid.get_signed([c[0] as i64 + d[0], c[1] as i64 + d[1], c[2] as i64 + d[2]]);
    }
    nb
}

/// Simple-point test for (26, 6) connectivity on a 3×3×3 neighbourhood.
///
/// The center is simple when the foreground of its 26-neighbourhood forms
/// exactly one 26-component and the background of its 18-neighbourhood
/// has exactly one 6-component that touches a face neighbour of the center.
pub fn is_simple(nb: &[bool; 27]) -> bool {
    let adj = adjacency();

    let mut seen = [false; 27];
    let mut stack = Vec::with_capacity(26);
    let mut fg_components = 0;
    for s in 0..27 {
        if s == CENTER || !nb[s] || seen[s] {
            continue;
        }
        fg_components += 1;
        if fg_components > 1 {
            return false;
        }
        seen[s] = true;
        stack.push(s);
        while let Some(i) = stack.pop() {
            for &j in &adj.n26[i] {
                if nb[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    if fg_components != 1 {
        return false;
    }

    let mut seen = [false; 27];
    let mut bg_components = 0;
    for &s in &adj.face {
        if nb[s] || seen[s] {
            continue;
        }
        bg_components += 1;
        if bg_components > 1 {
            return false;
        }
        seen[s] = true;
        stack.push(s);
        while let Some(i) = stack.pop() {
            for &j in &adj.n6[i] {
                if adj.in_n18[j] && !nb[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    bg_components == 1
}

fn is_endpoint(nb: &[bool; 27]) -> bool {
    nb.iter().enumerate().filter(|&(i, &b)| i != CENTER && b).count() == 1
}

/// True when `c` is occupied, not an endpoint and simple in the current grid.
pub fn is_removable(grid: &VoxelGrid, c: [usize; 3]) -> bool {
    if !grid.get(c[0], c[1], c[2]) {
        return false;
    }
    let nb = neighbourhood(grid, c);
    !is_endpoint(&nb) && is_simple(&nb)
}

/// Reduces the occupancy to a one-voxel-wide curve skeleton with the same
/// 26-connected component count.
pub fn thin(grid: &VoxelGrid) -> VoxelGrid {
    let mut out = grid.clone();
    let mut active: Vec<usize> = out.occupied_indices();
    loop {
        let mut changed = false;
        for dir in DIRECTIONS {
            let candidates: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| {
                    if !out.occupancy()[i] {
                        return false;
                    }
                    let c = out.coords(i);
                    let border = !out.get_signed([c[0] as i64 + dir[0], c[1] as i64 + dir[1], c[2] as i64 + dir[2]]);
                    border && is_removable(&out, c)
                })
                .collect();
            for i in candidates {
                let c = out.coords(i);
                if is_removable(&out, c) {
                    out.set_index(i, false);
                    changed = true;
                }
            }
        }
        active.retain(|&i| out.occupancy()[i]);
        if !changed {
            break;
        }
    }
    out
}

/// Voxels that a further peeling pass would remove (empty on a converged skeleton).
pub fn removable_voxels(grid: &VoxelGrid) -> Vec<usize> {
    grid.occupied_indices()
        .into_iter()
        .filter(|&i| is_removable(grid, grid.coords(i)))
        .collect()
}

/// Largest per-voxel count of occupied 26-neighbours (2 for an open curve).
pub fn max_neighbour_count(grid: &VoxelGrid) -> usize {
    grid.occupied_indices()
        .into_iter()
        .map(|i| grid.neighbour_count(grid.coords(i)))
        .max()
        .unwrap_or(0)
}
