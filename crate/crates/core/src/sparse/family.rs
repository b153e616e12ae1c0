//! Sparse families and their exact verification.
//!
//! `E_P` is stored as `P` minus a union of cubes, so measures and overlaps
//! are computed exactly on the compressed grid of all cube coordinates.

use serde::Serialize;

use crate::field::GridSpec;
use crate::grid::Cube;

/// Compressed grids above this many cells fall back to node counting.
const EXACT_CELL_CAP: usize = 20_000_000;
/// Node budget of the fallback grid.
const FALLBACK_NODES: usize = 4_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct SparseFamily {
    pub cubes: Vec<Cube>,
    /// `E_P = P \ ⋃ removed[P]`.
    pub removed: Vec<Vec<Cube>>,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SparseReport {
    /// `|E_P| ≥ ε|P|` for all `P` and `Σ 1_{E_P} ≤ 1`.
    pub valid: bool,
    /// `|E_P| ≥ ε|P|` for all `P` and `Σ 1_P ≤ 1` (pairwise disjoint cubes).
    pub strict_valid: bool,
    pub min_fraction: f64,
    pub worst_cube: Option<usize>,
    pub max_overlap: usize,
    pub worst_point: Option<Vec<f64>>,
    pub strict_max_overlap: usize,
    /// `"exact"` or `"node-count"`.
    pub method: &'static str,
}

impl SparseFamily {
    pub fn new(epsilon: f64) -> Self {
        SparseFamily {
            cubes: Vec::new(),
            removed: Vec::new(),
            epsilon,
        }
    }

    pub fn push(&mut self, cube: Cube, removed: Vec<Cube>) {
        self.cubes.push(cube);
        self.removed.push(removed);
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Half-open node membership of each `E_P` on `grid`.
    pub fn masks(&self, grid: &GridSpec) -> Vec<Vec<bool>> {
        let mut x = vec![0.0; grid.n()];
        (0..self.len())
            .map(|k| {
                (0..grid.len())
                    .map(|idx| {
                        grid.point(idx, &mut x);
                        self.cubes[k].contains_half_open(&x)
                            && !self.removed[k].iter().any(|r| r.contains_half_open(&x))
                    })
                    .collect()
            })
            .collect()
    }

    /// Cube list plus run-length encoded `E_P` masks on `grid`:
    /// alternating run lengths starting with a run of `false`.
    pub fn to_json(&self, grid: &GridSpec) -> serde_json::Value {
        let masks = self.masks(grid);
        let rows: Vec<serde_json::Value> = self
            .cubes
            .iter()
            .zip(&masks)
            .map(|(c, m)| {
                serde_json::json!({
                    "center": c.center(),
                    "half_side": c.half_side(),
                    "chosen_rle": run_lengths(m),
                })
            })
            .collect();
        serde_json::json!({
            "epsilon": self.epsilon,
            "grid": {"center": grid.domain.center(), "half_side": grid.domain.half_side(), "m": grid.m},
            "cubes": rows,
        })
    }
}

pub fn run_lengths(mask: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur = false;
    let mut run = 0;
    for &b in mask {
        if b == cur {
            run += 1;
        } else {
            out.push(run);
            cur = b;
            run = 1;
        }
    }
    out.push(run);
    out
}

/// Sorted coordinates with near-duplicates merged, so rounding in dyadic
/// arithmetic does not create slivers.
fn axis_breaks(values: &mut Vec<f64>, tol: f64) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        match out.last() {
            Some(&l) if v - l <= tol => {}
            _ => out.push(v),
        }
    }
    out
}

fn span(breaks: &[f64], lo: f64, hi: f64, tol: f64) -> (usize, usize) {
    // Cells i with breaks[i] >= lo - tol and breaks[i+1] <= hi + tol.
    let a = breaks.partition_point(|&b| b < lo - tol);
    let b = breaks.partition_point(|&b| b <= hi + tol);
    (a, b.saturating_sub(1).max(a))
}

pub fn verify_sparse(s: &SparseFamily) -> SparseReport {
    let mut report = SparseReport {
        valid: true,
        strict_valid: true,
        min_fraction: f64::INFINITY,
        worst_cube: None,
        max_overlap: 0,
        worst_point: None,
        strict_max_overlap: 0,
        method: "exact",
    };
    if s.is_empty() {
        report.min_fraction = 1.0;
        return report;
    }
    let n = s.cubes[0].n();
    let scale = s.cubes.iter().map(Cube::side).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let breaks: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let mut v = Vec::new();
            for (c, rs) in s.cubes.iter().zip(&s.removed) {
                v.push(c.lower(a));
                v.push(c.upper(a));
                for r in rs {
                    v.push(r.lower(a));
                    v.push(r.upper(a));
                }
            }
            axis_breaks(&mut v, tol)
        })
        .collect();
    let dims: Vec<usize> = breaks.iter().map(|b| b.len().saturating_sub(1)).collect();
    let total: usize = dims.iter().product();
    if total > EXACT_CELL_CAP {
        return verify_by_nodes(s);
    }
    let widths: Vec<Vec<f64>> = breaks.iter().map(|b| b.windows(2).map(|w| w[1] - w[0]).collect()).collect();
    let strides: Vec<usize> = (0..n).map(|a| dims[a + 1..].iter().product()).collect();
    let mut count = vec![0u32; total];
    let mut strict = vec![0u32; total];
    let mut stamp = vec![u32::MAX; total];

    let range_of = |c: &Cube| -> Vec<(usize, usize)> {
        (0..n).map(|a| span(&breaks[a], c.lower(a), c.upper(a), tol)).collect()
    };
    let for_cells = |rg: &[(usize, usize)], f: &mut dyn FnMut(usize, f64)| {
        let lens: Vec<usize> = rg.iter().map(|(a, b)| b - a).collect();
        let cnt: usize = lens.iter().product();
        for lin in 0..cnt {
            let mut rem = lin;
            let mut idx = 0;
            let mut vol = 1.0;
            for a in (0..n).rev() {
                let i = rg[a].0 + rem % lens[a];
                rem /= lens[a];
                idx += i * strides[a];
                vol *= widths[a][i];
            }
            f(idx, vol);
        }
    };

    for (k, (c, rs)) in s.cubes.iter().zip(&s.removed).enumerate() {
        let tag = k as u32;
        for r in rs {
            let rg = range_of(r);
            for_cells(&rg, &mut |idx, _| stamp[idx] = tag);
        }
        let rg = range_of(c);
        let mut chosen = 0.0;
        for_cells(&rg, &mut |idx, vol| {
            strict[idx] += 1;
            if stamp[idx] != tag {
                count[idx] += 1;
                chosen += vol;
            }
        });
        let frac = chosen / c.volume();
        if frac < report.min_fraction {
            report.min_fraction = frac;
            report.worst_cube = Some(k);
        }
    }
    let (imax, &cmax) = count.iter().enumerate().max_by_key(|(_, &v)| v).unwrap();
    report.max_overlap = cmax as usize;
    report.strict_max_overlap = strict.iter().copied().max().unwrap_or(0) as usize;
    let mut rem = imax;
    let mut pt = vec![0.0; n];
    for a in (0..n).rev() {
        let i = rem % dims[a];
        rem /= dims[a];
        pt[a] = 0.5 * (breaks[a][i] + breaks[a][i + 1]);
    }
    report.worst_point = Some(pt);
    finish(s, report)
}

fn finish(s: &SparseFamily, mut report: SparseReport) -> SparseReport {
    let frac_ok = report.min_fraction >= s.epsilon * (1.0 - 1e-12);
    report.valid = frac_ok && report.max_overlap <= 1;
    report.strict_valid = frac_ok && report.strict_max_overlap <= 1;
    report
}

/// Node counting on a uniform grid over the bounding box.
fn verify_by_nodes(s: &SparseFamily) -> SparseReport {
    let n = s.cubes[0].n();
    let lo: Vec<f64> = (0..n)
        .map(|a| s.cubes.iter().map(|c| c.lower(a)).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..n)
        .map(|a| s.cubes.iter().map(|c| c.upper(a)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let side = (0..n).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let mut m = (FALLBACK_NODES as f64).powf(1.0 / n as f64) as usize;
    m -= 1 - m % 2;
    let grid = GridSpec::new(Cube::from_corner(&lo, side).unwrap(), m.max(3)).unwrap();
    let masks = s.masks(&grid);
    let mut x = vec![0.0; n];
    let mut report = SparseReport {
        valid: true,
        strict_valid: true,
        min_fraction: f64::INFINITY,
        worst_cube: None,
        max_overlap: 0,
        worst_point: None,
        strict_max_overlap: 0,
        method: "node-count",
    };
    for (k, c) in s.cubes.iter().enumerate() {
        let mut inside = 0usize;
        let mut chosen = 0usize;
        for idx in 0..grid.len() {
            grid.point(idx, &mut x);
            if c.contains_half_open(&x) {
                inside += 1;
                chosen += masks[k][idx] as usize;
            }
        }
        let frac = if inside == 0 { 1.0 } else { chosen as f64 / inside as f64 };
        if frac < report.min_fraction {
            report.min_fraction = frac;
            report.worst_cube = Some(k);
        }
    }
    for idx in 0..grid.len() {
        let c = masks.iter().filter(|m| m[idx]).count();
        grid.point(idx, &mut x);
        let st = s.cubes.iter().filter(|q| q.contains_half_open(&x)).count();
        report.strict_max_overlap = report.strict_max_overlap.max(st);
        if c > report.max_overlap {
            report.max_overlap = c;
            report.worst_point = Some(x.clone());
        }
    }
    finish(s, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(x: f64, y: f64, s: f64) -> Cube {
        Cube::from_corner(&[x, y], s).unwrap()
    }

    #[test]
    fn disjoint_family_is_sparse() {
        let mut f = SparseFamily::new(1.0);
        f.push(sq(0.0, 0.0, 1.0), vec![]);
        f.push(sq(1.0, 0.0, 1.0), vec![]);
        let r = verify_sparse(&f);
        assert!(r.valid && r.strict_valid);
        assert_eq!(r.max_overlap, 1);
    }

    #[test]
    fn duplicate_cubes_overlap() {
        let mut f = SparseFamily::new(1.0);
        f.push(sq(0.0, 0.0, 1.0), vec![]);
        f.push(sq(0.0, 0.0, 1.0), vec![]);
        let r = verify_sparse(&f);
        assert!(!r.valid);
        assert_eq!(r.max_overlap, 2);
    }

    #[test]
    fn nested_cube_with_hole() {
        let mut f = SparseFamily::new(0.5);
        let child = sq(0.25, 0.25, 0.25);
        f.push(sq(0.0, 0.0, 1.0), vec![child.clone()]);
        f.push(child, vec![]);
        let r = verify_sparse(&f);
        assert!(r.valid);
        assert!(!r.strict_valid);
        assert!((r.min_fraction - 15.0 / 16.0).abs() < 1e-12);
        assert_eq!(run_lengths(&[false, true, true, false]), vec![1, 2, 1]);
        assert_eq!(run_lengths(&[true]), vec![0, 1]);
    }
}
