//! Whitney decomposition of a node-sampled open subset of `3Q`.
//!
//! Distances are chessboard distances in index units to the nearest node
//! outside the set, where a virtual ring of nodes one spacing outside the
//! grid counts as exterior. With `ℓ = ℓ(Q) = (m-1)h/3`, a node at index
//! distance `d` lies in shell `j` iff `3d·2^j ≤ m-1 < 3d·2^{j+1}`; the shell
//! tests are exact integer comparisons.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{dyadic_cube, Cube};
use crate::error::{invalid, Error, Result};
use crate::field::GridSpec;

/// Generation `j` cubes have side `3·2^{-j-6}ℓ(Q)`, i.e. dyadic depth
/// `j + 6` below `3Q`.
const DEPTH_OFFSET: i32 = 6;

#[derive(Clone, Debug)]
pub struct WhitneyDecomposition {
    pub cubes: Vec<Cube>,
    pub generation: Vec<i32>,
    /// `3Q`.
    pub ambient: Cube,
    pub base: Cube,
    pub grid: GridSpec,
    pub mask: Vec<bool>,
    /// Dyadic depth below `ambient` and per-axis index of each cube.
    pub depth: Vec<u32>,
    pub index: Vec<Vec<usize>>,
    /// A node of the cube lying in the cube's distance shell.
    pub witness: Vec<usize>,
}

#[derive(Serialize)]
struct CubeRow<'a> {
    center: &'a [f64],
    half_side: f64,
    n: usize,
    generation: i32,
}

/// Outcome of the invariant scan. Every field is a measurement; `ok` folds
/// them against the asserted thresholds.
#[derive(Clone, Debug, Serialize)]
pub struct WhitneyCheck {
    pub containment: bool,
    pub exterior_contact: bool,
    pub max_overlap_8p: usize,
    pub witness_shell: bool,
    pub center_shell: bool,
    pub covers_mask: bool,
    /// Largest generation gap between cubes whose doubles meet.
    pub max_generation_gap: u32,
    pub violations: Vec<String>,
}

impl WhitneyCheck {
    /// Loose dimensional overlap cap for `Σ 1_{8P}`.
    pub fn overlap_cap(n: usize) -> usize {
        if n == 2 {
            100
        } else {
            1000
        }
    }

    pub fn ok(&self, n: usize) -> bool {
        self.containment
            && self.exterior_contact
            && self.max_overlap_8p <= Self::overlap_cap(n)
            && self.witness_shell
            && self.center_shell
            && self.covers_mask
    }
}

/// Chessboard distance (index units) from every node to the exterior of the
/// masked set, counting the virtual ring outside the grid as exterior.
/// Unmasked nodes get 0.
pub fn exterior_distance(mask: &[bool], grid: &GridSpec) -> Vec<u32> {
    let n = grid.n();
    let m = grid.m;
    let ring = |idx: usize| -> u32 {
        let ix = grid.unravel(idx);
        (0..n)
            .map(|a| (ix[a] + 1).min(m - ix[a]) as u32)
            .min()
            .unwrap()
    };
    let mut dist: Vec<u32> = (0..grid.len())
        .map(|i| if mask[i] { ring(i) } else { 0 })
        .collect();
    // Bucketed Dijkstra with unit weights over the 3^n - 1 neighbours; the
    // seeds are already chessboard distances, so relaxation is exact.
    let maxd = dist.iter().copied().max().unwrap_or(0) as usize;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); maxd + 2];
    for (i, &d) in dist.iter().enumerate() {
        buckets[d as usize].push(i);
    }
    let neigh: Vec<[i64; 3]> = (0..3usize.pow(n as u32))
        .filter_map(|k| {
            let mut o = [0i64; 3];
            let mut rem = k;
            for a in (0..n).rev() {
                o[a] = (rem % 3) as i64 - 1;
                rem /= 3;
            }
            o[..n].iter().any(|&v| v != 0).then_some(o)
        })
        .collect();
    for d in 0..buckets.len() {
        let mut b = std::mem::take(&mut buckets[d]);
        while let Some(i) = b.pop() {
            if dist[i] as usize != d {
                continue;
            }
            let ix = grid.unravel(i);
            for o in &neigh {
                let mut j = [0usize; 3];
                let mut inside = true;
                for a in 0..n {
                    let v = ix[a] as i64 + o[a];
                    if v < 0 || v >= m as i64 {
                        inside = false;
                        break;
                    }
                    j[a] = v as usize;
                }
                if !inside {
                    continue;
                }
                let jj = grid.ravel(&j);
                if dist[jj] as usize > d + 1 {
                    dist[jj] = (d + 1) as u32;
                    if d + 1 < buckets.len() {
                        buckets[d + 1].push(jj);
                    }
                }
            }
        }
    }
    dist
}

/// Shell index of a positive index distance `d` for `m - 1` cells across `3Q`.
fn shell(d: u32, cells: usize) -> i32 {
    debug_assert!(d > 0);
    let d = d as u64;
    let c = cells as u64;
    let mut j: i32 = -1;
    // 3d·2^j ≤ c  with 2^{-1} read as a half.
    loop {
        let ok = if j < 0 { 3 * d <= 2 * c } else { 3 * d * (1u64 << j) <= c };
        if !ok {
            return j - 1;
        }
        j += 1;
        if j > 60 {
            return j;
        }
    }
}

pub fn whitney_decompose(mask: &[bool], grid: &GridSpec, q: &Cube) -> Result<WhitneyDecomposition> {
    let ambient = q.dilate(3.0)?;
    let tol = 1e-9 * ambient.side();
    if !grid.domain.approx_eq(&ambient, tol) {
        return Err(invalid("Whitney mask grid must cover exactly 3Q"));
    }
    if mask.len() != grid.len() {
        return Err(invalid(format!(
            "mask has {} entries for a grid of {} nodes",
            mask.len(),
            grid.len()
        )));
    }
    if (grid.m - 1) % 3 != 0 {
        return Err(invalid("3Q grid needs a multiple of 3 cells so Q is node aligned"));
    }
    let mut out = WhitneyDecomposition {
        cubes: Vec::new(),
        generation: Vec::new(),
        ambient: ambient.clone(),
        base: q.clone(),
        grid: grid.clone(),
        mask: mask.to_vec(),
        depth: Vec::new(),
        index: Vec::new(),
        witness: Vec::new(),
    };
    if !mask.iter().any(|&b| b) {
        return Ok(out);
    }
    if mask.iter().all(|&b| b) {
        return Err(Error::NoExterior);
    }
    let n = grid.n();
    let cells = grid.m - 1;
    let dist = exterior_distance(mask, grid);
    // Candidate dyadic cubes keyed by (depth, index) with one witness node.
    let mut cand: BTreeMap<(u32, Vec<usize>), usize> = BTreeMap::new();
    for idx in 0..grid.len() {
        if !mask[idx] {
            continue;
        }
        let j = shell(dist[idx], cells);
        let k = (j + DEPTH_OFFSET) as u32;
        let ix = grid.unravel(idx);
        let per = 1usize << k;
        let key: Vec<usize> = (0..n)
            .map(|a| ((ix[a] as u128 * per as u128) / cells as u128).min(per as u128 - 1) as usize)
            .collect();
        cand.entry((k, key)).or_insert(idx);
    }
    let is_candidate = |k: u32, key: &[usize]| cand.contains_key(&(k, key.to_vec()));
    for ((k, key), &w) in &cand {
        let has_ancestor = (0..*k).any(|kk| {
            let shift = k - kk;
            let anc: Vec<usize> = key.iter().map(|&i| i >> shift).collect();
            is_candidate(kk, &anc)
        });
        if has_ancestor {
            continue;
        }
        out.cubes.push(dyadic_cube(&ambient, *k, key));
        out.generation.push(*k as i32 - DEPTH_OFFSET);
        out.depth.push(*k);
        out.index.push(key.clone());
        out.witness.push(w);
    }
    Ok(out)
}

impl WhitneyDecomposition {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Side of a generation-`j` cube.
    pub fn side_of(&self, j: i32) -> f64 {
        3.0 * self.base.side() * 2f64.powi(-j - DEPTH_OFFSET)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<CubeRow> = self
            .cubes
            .iter()
            .zip(&self.generation)
            .map(|(c, &g)| CubeRow {
                center: c.center(),
                half_side: c.half_side(),
                n: c.n(),
                generation: g,
            })
            .collect();
        serde_json::to_value(rows).expect("cube rows serialize")
    }

    /// Node index range (inclusive, may extend one past the grid for the
    /// virtual ring) of the closed cube `c` enlarged by `tol`.
    fn node_range(&self, c: &Cube, a: usize, ring: bool) -> (i64, i64) {
        let h = self.grid.h();
        let lo0 = self.grid.domain.lower(a);
        let eps = 1e-9 * h;
        let (min, max) = if ring {
            (-1, self.grid.m as i64)
        } else {
            (0, self.grid.m as i64 - 1)
        };
        let lo = ((c.lower(a) - lo0 - eps) / h).ceil() as i64;
        let hi = ((c.upper(a) - lo0 + eps) / h).floor() as i64;
        (lo.max(min), hi.min(max))
    }

    fn for_nodes_in(&self, c: &Cube, mut f: impl FnMut(usize)) {
        let n = self.grid.n();
        let r: Vec<(i64, i64)> = (0..n).map(|a| self.node_range(c, a, false)).collect();
        if r.iter().any(|(l, h)| l > h) {
            return;
        }
        let mut ix = [0usize; 3];
        let ext: Vec<usize> = r.iter().map(|(l, h)| (h - l + 1) as usize).collect();
        let total: usize = ext.iter().product();
        for lin in 0..total {
            let mut rem = lin;
            for a in (0..n).rev() {
                ix[a] = r[a].0 as usize + rem % ext[a];
                rem /= ext[a];
            }
            f(self.grid.ravel(&ix));
        }
    }

    /// True when some exterior node (virtual ring included) lies strictly
    /// inside the open cube `c`.
    fn open_cube_meets_exterior(&self, c: &Cube) -> bool {
        let n = self.grid.n();
        let m = self.grid.m as i64;
        let h = self.grid.h();
        let r: Vec<(i64, i64)> = (0..n).map(|a| self.node_range(c, a, true)).collect();
        if r.iter().any(|(l, h)| l > h) {
            return false;
        }
        let ext: Vec<usize> = r.iter().map(|(l, h)| (h - l + 1) as usize).collect();
        let total: usize = ext.iter().product();
        let mut ix = [0i64; 3];
        for lin in 0..total {
            let mut rem = lin;
            for a in (0..n).rev() {
                ix[a] = r[a].0 + (rem % ext[a]) as i64;
                rem /= ext[a];
            }
            let strictly_inside = (0..n).all(|a| {
                let x = self.grid.domain.lower(a) + ix[a] as f64 * h;
                (x - c.center()[a]).abs() < c.half_side() * (1.0 - 1e-12)
            });
            if !strictly_inside {
                continue;
            }
            let on_ring = (0..n).any(|a| ix[a] < 0 || ix[a] >= m);
            if on_ring {
                return true;
            }
            let u: Vec<usize> = ix[..n].iter().map(|&v| v as usize).collect();
            if !self.mask[self.grid.ravel(&u)] {
                return true;
            }
        }
        false
    }

    pub fn check(&self) -> WhitneyCheck {
        let grid = &self.grid;
        let n = grid.n();
        let h = grid.h();
        let ell = self.base.side();
        let cells = grid.m - 1;
        let dist = exterior_distance(&self.mask, grid);
        let mut chk = WhitneyCheck {
            containment: true,
            exterior_contact: true,
            max_overlap_8p: 0,
            witness_shell: true,
            center_shell: true,
            covers_mask: true,
            max_generation_gap: 0,
            violations: Vec::new(),
        };
        let mut covered = vec![false; grid.len()];
        let mut overlap = vec![0usize; grid.len()];
        for (p, cube) in self.cubes.iter().enumerate() {
            let j = self.generation[p];
            let mut inside = true;
            self.for_nodes_in(cube, |idx| {
                covered[idx] = true;
                if !self.mask[idx] {
                    inside = false;
                }
            });
            if !inside {
                chk.containment = false;
                chk.violations.push(format!("cube {p} contains an exterior node"));
            }
            if !self.open_cube_meets_exterior(&cube.dilate(64.0).unwrap()) {
                chk.exterior_contact = false;
                chk.violations.push(format!("64P of cube {p} misses the exterior"));
            }
            self.for_nodes_in(&cube.dilate(8.0).unwrap(), |idx| overlap[idx] += 1);
            let w = self.witness[p];
            if shell(dist[w], cells) != j || !cube.contains_closed(&grid.point_vec(w), 1e-9 * h) {
                chk.witness_shell = false;
                chk.violations.push(format!("witness of cube {p} is off its shell"));
            }
            // Node-sampled distance of the center: nearest node's distance.
            let c = cube.center();
            let near: Vec<usize> = (0..n)
                .map(|a| {
                    let t = ((c[a] - grid.domain.lower(a)) / h).round();
                    t.clamp(0.0, cells as f64) as usize
                })
                .collect();
            let dc = dist[grid.ravel(&near)] as f64 * h;
            let slack = 0.5 * cube.side() + h;
            let lo = ell * 2f64.powi(-j - 1) - slack;
            let hi = ell * 2f64.powi(-j) + slack;
            if !(dc > lo && dc <= hi) {
                chk.center_shell = false;
                chk.violations.push(format!(
                    "center of cube {p} at distance {dc:.4e} outside ({lo:.4e}, {hi:.4e}]"
                ));
            }
        }
        chk.max_overlap_8p = overlap.iter().copied().max().unwrap_or(0);
        for idx in 0..grid.len() {
            if self.mask[idx] && !covered[idx] {
                chk.covers_mask = false;
                chk.violations.push(format!("masked node {idx} is uncovered"));
                break;
            }
        }
        let doubles: Vec<Cube> = self.cubes.iter().map(|c| c.dilate(2.0).unwrap()).collect();
        for a in 0..self.cubes.len() {
            for b in a + 1..self.cubes.len() {
                if doubles[a].intersects(&doubles[b]) {
                    let gap = (self.generation[a] - self.generation[b]).unsigned_abs();
                    chk.max_generation_gap = chk.max_generation_gap.max(gap);
                }
            }
        }
        chk
    }
}

/// Grid of `m` nodes over `3Q`.
pub fn ambient_grid(q: &Cube, m: usize) -> Result<GridSpec> {
    GridSpec::new(q.dilate(3.0)?, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_mask(grid: &GridSpec, c: &[f64], r: f64) -> Vec<bool> {
        (0..grid.len())
            .map(|i| {
                let x = grid.point_vec(i);
                x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r * r
            })
            .collect()
    }

    #[test]
    fn shells_are_exact() {
        // 96 cells across 3Q: ℓ = 32 cells, shell j holds 2^{-j-1}·32 < d ≤ 2^{-j}·32.
        assert_eq!(shell(32, 96), 0);
        assert_eq!(shell(17, 96), 0);
        assert_eq!(shell(16, 96), 1);
        assert_eq!(shell(33, 96), -1);
        assert_eq!(shell(1, 96), 5);
    }

    #[test]
    fn distance_counts_the_ring() {
        let q = Cube::unit(2).unwrap();
        let grid = ambient_grid(&q, 7).unwrap();
        let d = exterior_distance(&vec![true; grid.len()], &grid);
        assert_eq!(d[grid.ravel(&[3, 3])], 4);
        assert_eq!(d[grid.ravel(&[0, 3])], 1);
    }

    #[test]
    fn empty_and_full_masks() {
        let q = Cube::unit(2).unwrap();
        let grid = ambient_grid(&q, 25).unwrap();
        let w = whitney_decompose(&vec![false; grid.len()], &grid, &q).unwrap();
        assert!(w.is_empty());
        assert!(matches!(
            whitney_decompose(&vec![true; grid.len()], &grid, &q),
            Err(Error::NoExterior)
        ));
    }

    #[test]
    fn ball_invariants() {
        let q = Cube::unit(2).unwrap();
        let grid = ambient_grid(&q, 97).unwrap();
        let mask = ball_mask(&grid, &[0.4, 0.6], 0.3);
        let w = whitney_decompose(&mask, &grid, &q).unwrap();
        assert!(!w.is_empty());
        let chk = w.check();
        assert!(chk.ok(2), "{:?}", chk.violations);
        assert!(chk.max_generation_gap <= 2);
        for (a, b) in w.cubes.iter().zip(w.cubes.iter().skip(1)) {
            assert!(a.intersection_volume(b) < 1e-14);
        }
    }
}
