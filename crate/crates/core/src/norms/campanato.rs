//! Campanato-type seminorms `Λ_z^α` and `Λ_r^α` on node-centred subcubes
//! with dyadic radii `r = 2^k h`.

use super::hardy::HardyKind;
use crate::error::{invalid, Error, Result};
use crate::field::{Field, GridSpec};
use crate::grid::Cube;

/// Brings `f` onto a grid whose domain is exactly `q`.
pub(crate) fn on_cube(f: &Field, q: &Cube) -> Result<Field> {
    let dom = &f.spec().domain;
    if dom.approx_eq(q, 1e-12 * q.side()) {
        return Ok(f.clone());
    }
    if !dom.contains_cube(q, 1e-9 * q.side()) {
        return Err(Error::DomainMargin(format!(
            "field on {dom:?} does not cover {q:?}"
        )));
    }
    if let Some(r) = f.restrict(q) {
        return Ok(r);
    }
    let m = ((q.side() / f.spec().h()).round() as usize).max(2);
    let m = m + 1 - (m % 2);
    f.resample(GridSpec::new(q.clone(), m.max(3))?)
}

/// Separable sums `Σ w v` over windows of half width `half` (index units)
/// with trapezoid end weights; `comps` interleaved components. Entries whose
/// window leaves the grid are garbage and must not be read.
fn window_sums(spec: &GridSpec, comps: usize, v: &[f64], half: i64) -> Vec<f64> {
    let m = spec.m as i64;
    let mut cur = v.to_vec();
    for axis in (0..spec.n()).rev() {
        let stride = spec.stride(axis) as i64;
        let mut next = vec![0.0; cur.len()];
        for idx in 0..spec.len() {
            let c = spec.unravel(idx)[axis] as i64;
            if c - half < 0 || c + half >= m {
                continue;
            }
            for comp in 0..comps {
                let mut s = 0.0;
                for j in -half..=half {
                    let w = if j.abs() == half { 0.5 } else { 1.0 };
                    s += w * cur[((idx as i64 + j * stride) as usize) * comps + comp];
                }
                next[idx * comps + comp] = s;
            }
        }
        cur = next;
    }
    cur
}

/// Distance to the boundary in index steps.
fn index_distance(spec: &GridSpec, idx: usize) -> i64 {
    let ix = spec.unravel(idx);
    (0..spec.n())
        .map(|a| ix[a].min(spec.m - 1 - ix[a]) as i64)
        .min()
        .unwrap_or(0)
}

/// `‖f‖_{Λ_kind^α(Q)}` with `c` the local mean (the `L²` minimizer) and
/// sums of pointwise Euclidean norms for vector data.
pub fn campanato(f: &Field, q: &Cube, alpha: f64, kind: HardyKind) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let f = on_cube(f, q)?;
    let spec = f.spec();
    let comps = f.comps();
    let h = spec.h();
    let n = spec.n();

    // Centre the data first: window variances then avoid cancellation.
    let len = spec.len();
    let mut mu = vec![0.0; comps];
    for idx in 0..len {
        for c in 0..comps {
            mu[c] += f.values()[idx * comps + c];
        }
    }
    mu.iter_mut().for_each(|v| *v /= len as f64);
    let centred: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v - mu[i % comps])
        .collect();
    let squares: Vec<f64> = centred
        .chunks(comps)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let mu2: f64 = mu.iter().map(|v| v * v).sum();

    let max_dist = (spec.m as i64 - 1) / 2;
    let mut osc = f64::NEG_INFINITY;
    let mut shell = f64::NEG_INFINITY;
    let mut k = 0;
    loop {
        let half = 1i64 << k;
        let (lo_osc, lo_shell) = match kind {
            HardyKind::R => (half, i64::MAX),
            HardyKind::Z => (4 * half, 2 * half),
        };
        if lo_osc.min(lo_shell) >= max_dist {
            break;
        }
        let s1 = window_sums(spec, comps, &centred, half);
        let s2 = window_sums(spec, 1, &squares, half);
        let vol = (2 * half) as f64;
        let vol = vol.powi(n as i32);
        let r = half as f64 * h;
        let scale = r.powf(-2.0 * alpha);
        for idx in 0..len {
            let d = index_distance(spec, idx);
            let in_osc = d > lo_osc;
            let in_shell = kind == HardyKind::Z && d > lo_shell && d < 4 * half;
            if !in_osc && !in_shell {
                continue;
            }
            let a: Vec<f64> = (0..comps).map(|c| s1[idx * comps + c] / vol).collect();
            let b = s2[idx] / vol;
            let a2: f64 = a.iter().map(|v| v * v).sum();
            if in_osc {
                let var = (b - a2).max(0.0);
                osc = osc.max((scale * var).sqrt());
            }
            if in_shell {
                // ⨍|f|² = ⨍|f - μ|² + 2 μ·⨍(f - μ) + |μ|².
                let cross: f64 = (0..comps).map(|c| mu[c] * a[c]).sum();
                let raw = (b + 2.0 * cross + mu2).max(0.0);
                shell = shell.max((scale * raw).sqrt());
            }
        }
        k += 1;
    }
    if osc == f64::NEG_INFINITY && shell == f64::NEG_INFINITY {
        return Err(Error::TooCoarse(format!(
            "no admissible subcube at m = {}",
            spec.m
        )));
    }
    Ok(osc.max(0.0) + shell.max(0.0))
}
