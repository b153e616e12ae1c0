//! Stopping sets `E_1`, `E_2` and their Whitney cubes.
//!
//! All data live on one grid over `6Q` with a multiple of 12 cells, so `Q`,
//! `2Q`, `3Q` and `4Q` are node aligned and the dyadic cubes of `3Q` used by
//! `S_1`, `S_2` are node aligned down to side `(m-1)/2^{k+1}` cells.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::{mean_over, node_weights, Field, FieldKind, GridSpec};
use crate::grid::{whitney_decompose, Cube, WhitneyDecomposition};
use crate::norms::{check_p, hardy_r_norm_with, Extension, HardyOptions};

/// `C_0` search bracket.
pub const C0_MAX: f64 = 1099511627776.0; // 2^40

/// Dyadic cubes used by `S_1` need this many cells per side, those used by
/// `S_2` twice as many so the `h_r^p(2P)` grid keeps `m ≥ 9`.
const MIN_S1_CELLS: usize = 2;
const MIN_S2_CELLS: usize = 4;

#[derive(Clone, Debug)]
pub struct StoppingCubes {
    pub whitney: WhitneyDecomposition,
    /// Masks on the `3Q` grid.
    pub e1_mask: Vec<bool>,
    pub e2_mask: Vec<bool>,
    pub c0: f64,
    pub s1: Field,
    pub s2: Field,
    /// `⟨|∇u|²⟩_{6Q}` and `‖g‖_{h_r^p(4Q)}`.
    pub level1: f64,
    pub level2: f64,
    /// `(C_0, |E_1 ∪ E_2|)` at `C_0 = 2^k`, `k = 0..=40`.
    pub curve: Vec<(f64, f64)>,
    /// Node measure of `E_1 ∪ E_2` and the Whitney union volume.
    pub measure: f64,
    pub union_volume: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StoppingOptions {
    pub hardy_cells_max: usize,
}

impl Default for StoppingOptions {
    fn default() -> Self {
        StoppingOptions { hardy_cells_max: 64 }
    }
}

/// Checks that `f` lives on a grid over exactly `6Q` with `(m-1) % 12 == 0`,
/// restricting a larger aligned grid when needed.
pub(crate) fn on_six_q(f: &Field, q: &Cube) -> Result<Field> {
    let six = q.dilate(6.0)?;
    let tol = 1e-9 * six.side();
    let g = if f.spec().domain.approx_eq(&six, tol) {
        f.clone()
    } else if f.spec().domain.contains_cube(&six, tol) {
        f.restrict(&six).ok_or_else(|| {
            invalid("6Q is not node aligned in the data grid")
        })?
    } else {
        return Err(Error::DomainMargin(format!(
            "data on {:?} do not cover 6Q = {six:?}",
            f.spec().domain
        )));
    };
    if (g.spec().m - 1) % 12 != 0 {
        return Err(invalid(format!(
            "6Q grid needs a multiple of 12 cells, got {}",
            g.spec().m - 1
        )));
    }
    Ok(g)
}

/// Integrals over node-aligned boxes from cell prefix sums; the rule is the
/// tensor trapezoid (node weights 1/2 on box faces).
pub(crate) struct BoxIntegrator {
    n: usize,
    cells: usize,
    h: f64,
    prefix: Vec<f64>,
}

impl BoxIntegrator {
    pub(crate) fn new(spec: &GridSpec, values: &[f64]) -> Self {
        let n = spec.n();
        let c = spec.m - 1;
        let corners = spec.corner_offsets();
        let side = c + 1;
        let total = side.pow(n as u32);
        let mut prefix = vec![0.0; total];
        // prefix[i] over cells with index < i componentwise; first fill cell
        // means at i = cell + 1, then accumulate axis by axis.
        for cell in 0..spec.cell_count() {
            let o = spec.cell_origin(cell);
            let mean = corners.iter().map(|&d| values[o + d]).sum::<f64>() / corners.len() as f64;
            let ci = spec.cell_unravel(cell);
            let mut lin = 0;
            for a in 0..n {
                lin = lin * side + ci[a] + 1;
            }
            prefix[lin] = mean;
        }
        for a in 0..n {
            let stride = side.pow((n - 1 - a) as u32);
            for lin in 0..total {
                if (lin / stride) % side > 0 {
                    prefix[lin] += prefix[lin - stride];
                }
            }
        }
        BoxIntegrator {
            n,
            cells: c,
            h: spec.h(),
            prefix,
        }
    }

    /// `∫` over cells `lo[a] ≤ i < hi[a]`, clipped to the grid.
    pub(crate) fn integral(&self, lo: &[i64], hi: &[i64]) -> f64 {
        let n = self.n;
        let side = self.cells + 1;
        let c = self.cells as i64;
        let lo: Vec<usize> = lo.iter().map(|&v| v.clamp(0, c) as usize).collect();
        let hi: Vec<usize> = hi.iter().map(|&v| v.clamp(0, c) as usize).collect();
        if (0..n).any(|a| hi[a] <= lo[a]) {
            return 0.0;
        }
        let mut s = 0.0;
        for mask in 0..(1usize << n) {
            let mut lin = 0;
            let mut sign = 1.0;
            for a in 0..n {
                let v = if mask >> a & 1 == 1 {
                    sign = -sign;
                    lo[a]
                } else {
                    hi[a]
                };
                lin = lin * side + v;
            }
            s += sign * self.prefix[lin];
        }
        s * self.h.powi(n as i32)
    }
}

/// Dyadic cubes of `3Q` at depth `k` as node ranges in the `6Q` grid:
/// `(lower index per axis, side in cells)`.
fn dyadic_level(n: usize, cells6: usize, k: u32) -> Option<(Vec<Vec<usize>>, usize)> {
    let c3 = cells6 / 2;
    if c3 % (1 << k) != 0 {
        return None;
    }
    let s = c3 >> k;
    let per = 1usize << k;
    let base = cells6 / 4;
    let count = per.pow(n as u32);
    let lows = (0..count)
        .map(|lin| {
            let mut rem = lin;
            let mut ix = vec![0; n];
            for a in (0..n).rev() {
                ix[a] = base + (rem % per) * s;
                rem /= per;
            }
            ix
        })
        .collect();
    Some((lows, s))
}

/// Raises `out` to `v` on the `3Q`-grid nodes of the closed cube with
/// `6Q`-grid lower corner `lo` and side `s` cells.
fn raise(spec3: &GridSpec, off: usize, lo: &[usize], s: usize, v: f64, out: &mut [f64]) {
    let n = spec3.n();
    let per = s + 1;
    let count = per.pow(n as u32);
    let mut ix = [0usize; 3];
    for lin in 0..count {
        let mut rem = lin;
        for a in (0..n).rev() {
            ix[a] = lo[a] - off + rem % per;
            rem /= per;
        }
        let idx = spec3.ravel(&ix[..n]);
        if v > out[idx] {
            out[idx] = v;
        }
    }
}

fn ratio(v: f64, level: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if level > 0.0 {
        v / level
    } else {
        f64::INFINITY
    }
}

/// `S_1`, `S_2`, the level sets and the Whitney cubes of `E ∩ Q̄`, with `C_0`
/// the smallest value in `[1, 2^40]` for which both the node measure of
/// `E_1 ∪ E_2` and the Whitney union volume are at most `eps·|Q|`.
pub fn stopping_cubes(
    u_grad: &Field,
    g: &Field,
    q: &Cube,
    phi_q: &Field,
    eps: f64,
    p: f64,
    opts: &StoppingOptions,
) -> Result<StoppingCubes> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    check_p(q.n(), p)?;
    let du = on_six_q(u_grad, q)?;
    let g = on_six_q(g, q)?;
    let phi = on_six_q(phi_q, q)?;
    if du.spec() != g.spec() || du.spec() != phi.spec() {
        return Err(invalid("stopping data must share one grid"));
    }
    if phi.comps() != 1 {
        return Err(invalid("the bump must be scalar"));
    }
    let spec = du.spec().clone();
    let n = spec.n();
    let cells = spec.m - 1;
    let three = q.dilate(3.0)?;
    let (spec3, off3) = spec
        .aligned_subgrid(&three)
        .ok_or_else(|| invalid("3Q is not node aligned"))?;
    let off = off3[0];

    let grad2: Vec<f64> = (0..spec.len())
        .map(|i| du.at(i).iter().map(|v| v * v).sum::<f64>())
        .collect();
    let level1 = {
        let f = Field::new_unchecked(spec.clone(), FieldKind::Scalar, grad2.clone());
        mean_over(&f, &q.dilate(6.0)?)?[0]
    };
    let integrand: Vec<f64> = grad2.iter().zip(phi.values()).map(|(a, b)| a * b).collect();
    let boxes = BoxIntegrator::new(&spec, &integrand);

    let four = q.dilate(4.0)?;
    let cap = opts.hardy_cells_max.clamp(8, 128);
    let hardy = |cube: &Cube, cells: usize| -> Result<f64> {
        let o = HardyOptions {
            cells: cells.min(cap),
        };
        Ok(hardy_r_norm_with(&g, cube, p, &Extension::ALL, &o)?.value)
    };
    let level2 = hardy(&four, 2 * cells / 3)?;

    let mut s1 = vec![0.0; spec3.len()];
    let mut s2 = vec![0.0; spec3.len()];
    let h = spec.h();
    let mut k = 0;
    while let Some((lows, s)) = dyadic_level(n, cells, k) {
        if s < MIN_S1_CELLS {
            break;
        }
        let vol3 = (3.0 * s as f64 * h).powi(n as i32);
        for lo in &lows {
            let a: Vec<i64> = lo.iter().map(|&v| v as i64 - s as i64).collect();
            let b: Vec<i64> = lo.iter().map(|&v| (v + 2 * s) as i64).collect();
            let v = boxes.integral(&a, &b) / vol3;
            raise(&spec3, off, lo, s, v, &mut s1);
            if s >= MIN_S2_CELLS {
                let lower: Vec<f64> = (0..n)
                    .map(|ax| spec.coord(ax, lo[ax]) - 0.5 * s as f64 * h)
                    .collect();
                let two_p = Cube::from_corner(&lower, 2.0 * s as f64 * h)?;
                let v = hardy(&two_p, 2 * s)?;
                raise(&spec3, off, lo, s, v, &mut s2);
            }
        }
        k += 1;
    }

    let t: Vec<f64> = s1
        .iter()
        .zip(&s2)
        .map(|(&a, &b)| ratio(a, level1).max(ratio(b, level2)))
        .collect();
    let w = node_weights(&spec3, None);
    let target = eps * q.volume();
    let measure_at = |c0: f64| -> f64 {
        t.iter()
            .zip(&w)
            .filter(|(&ti, _)| ti > c0)
            .map(|(_, &wi)| wi)
            .sum()
    };
    let curve: Vec<(f64, f64)> = (0..=40)
        .map(|e| {
            let c = 2f64.powi(e);
            (c, measure_at(c))
        })
        .collect();
    let fail = || Error::StoppingFailure {
        curve: curve.clone(),
    };

    // Smallest C0 ≥ 1 with μ{T > C0} ≤ target. μ is constant between
    // consecutive distinct values of T, so the answer is 1 or one of them.
    let mut order: Vec<usize> = (0..t.len()).filter(|&i| t[i] > 1.0).collect();
    order.sort_by(|&a, &b| t[b].total_cmp(&t[a]));
    let mut best = None;
    let mut acc = 0.0; // μ{T > current value}
    let mut i = 0;
    let mut exhausted = true;
    while i < order.len() {
        let v = t[order[i]];
        if acc > target {
            exhausted = false;
            break;
        }
        best = Some(v);
        while i < order.len() && t[order[i]] == v {
            acc += w[order[i]];
            i += 1;
        }
    }
    let mut c0 = if exhausted && acc <= target { 1.0 } else { best.ok_or_else(fail)? };
    if !c0.is_finite() || c0 > C0_MAX {
        return Err(fail());
    }

    let build = |c0: f64| -> Result<(WhitneyDecomposition, Vec<bool>, Vec<bool>)> {
        let e1: Vec<bool> = s1.iter().map(|&v| ratio(v, level1) > c0).collect();
        let e2: Vec<bool> = s2.iter().map(|&v| ratio(v, level2) > c0).collect();
        let mask: Vec<bool> = (0..spec3.len())
            .map(|i| (e1[i] || e2[i]) && q.contains_closed(&spec3.point_vec(i), 1e-9 * h))
            .collect();
        let mut wd = whitney_decompose(&mask, &spec3, q)?;
        let keep: Vec<bool> = wd.cubes.iter().map(|c| q.contains_cube(c, 1e-12 * q.side())).collect();
        retain_cubes(&mut wd, &keep);
        Ok((wd, e1, e2))
    };
    let union = |wd: &WhitneyDecomposition| wd.cubes.iter().map(Cube::volume).sum::<f64>();

    let (mut wd, mut e1, mut e2) = build(c0)?;
    if union(&wd) > target {
        // Whitney cubes cover more than the node measure saw: bisect on a
        // log scale for the union volume.
        let (mut lo, mut hi) = (c0.ln(), C0_MAX.ln());
        let top = build(C0_MAX)?;
        if union(&top.0) > target {
            return Err(fail());
        }
        let mut best = (C0_MAX, top);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let cand = build(mid.exp())?;
            if union(&cand.0) <= target {
                hi = mid;
                best = (mid.exp(), cand);
            } else {
                lo = mid;
            }
        }
        c0 = best.0;
        (wd, e1, e2) = best.1;
    }
    let measure = measure_at(c0);
    let union_volume = union(&wd);
    Ok(StoppingCubes {
        whitney: wd,
        e1_mask: e1,
        e2_mask: e2,
        c0,
        s1: Field::new_unchecked(spec3.clone(), FieldKind::Scalar, s1.clone()),
        s2: Field::new_unchecked(spec3, FieldKind::Scalar, s2.clone()),
        level1,
        level2,
        curve,
        measure,
        union_volume,
    })
}

fn retain_cubes(wd: &mut WhitneyDecomposition, keep: &[bool]) {
    let mut it = keep.iter();
    wd.cubes.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    wd.generation.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    wd.depth.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    wd.index.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    wd.witness.retain(|_| *it.next().unwrap());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_integrals_match_trapezoid() {
        let spec = GridSpec::new(Cube::unit(2).unwrap(), 13).unwrap();
        let vals: Vec<f64> = (0..spec.len())
            .map(|i| {
                let x = spec.point_vec(i);
                1.0 + x[0] * x[0] + 0.3 * x[1]
            })
            .collect();
        let bi = BoxIntegrator::new(&spec, &vals);
        let f = Field::new(spec.clone(), FieldKind::Scalar, vals).unwrap();
        let lo = [2i64, 3];
        let hi = [9i64, 7];
        let region = Cube::from_corner(&[spec.coord(0, 2), spec.coord(1, 3)], 0.0 + 7.0 * spec.h())
            .unwrap();
        // Non-square box: compare against the node-weight rule on a square
        // first, then check additivity for the rectangle.
        let sq = bi.integral(&[2, 3], &[9, 10]);
        let want = crate::field::integrate(&f, Some(&region))[0];
        assert!((sq - want).abs() < 1e-13);
        let split = bi.integral(&lo, &[9, 5]) + bi.integral(&[2, 5], &hi);
        assert!((bi.integral(&lo, &hi) - split).abs() < 1e-13);
        assert_eq!(bi.integral(&[5, 5], &[5, 9]), 0.0);
    }
}
