//! Hardy-Littlewood, smooth local and grand local maximal operators.
//!
//! Convolutions are direct separable sums with zero padding outside the
//! field's grid, which matches extension by zero.

mod bumps;

pub use bumps::{grand_maximal, Bump, BumpDictionary, DEFAULT_N0};
pub(crate) use bumps::{eta_derivatives, multi_indices};

use crate::error::{invalid, Error, Result};
use crate::field::{Field, FieldKind, GridSpec};

/// Profile `η(t) = exp(-1/(1-t²))` on `(-1, 1)`, zero elsewhere.
pub fn eta(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

/// Smooth step: 1 for `d ≤ 0`, 0 for `d ≥ width`, `C^∞` in between.
pub fn smooth_step(d: f64, width: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    if d >= width {
        return 0.0;
    }
    let t = d / width;
    let a = eta_tail(1.0 - t);
    let b = eta_tail(t);
    a / (a + b)
}

fn eta_tail(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// `∫_{-1}^{1} η`. The trapezoid rule is spectrally accurate here because
/// every derivative of `η` vanishes at `±1`.
pub fn profile_integral() -> f64 {
    const K: usize = 4000;
    let h = 2.0 / K as f64;
    (1..K).map(|k| eta(-1.0 + k as f64 * h)).sum::<f64>() * h
}

/// Separable kernel: the same 1D weights on every axis, index offsets
/// `start..start+weights.len()`. Weights already include the `h` factor
/// of the quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1d {
    pub start: i64,
    pub weights: Vec<f64>,
}

impl Kernel1d {
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Discrete `φ_s` sampled at `|k|h < s` and normalized to unit discrete
/// mass per axis, so `Σ φ_s h^n = 1`.
pub fn mollifier(s: f64, h: f64) -> Result<Kernel1d> {
    if !(h > 0.0) {
        return Err(invalid("grid spacing must be positive"));
    }
    if !(s >= 2.0 * h * (1.0 - 1e-12)) {
        return Err(Error::UnderResolved { s, min: 2.0 * h, h });
    }
    let kmax = ((s / h).ceil() as i64) - 1;
    let raw: Vec<f64> = (-kmax..=kmax).map(|k| eta(k as f64 * h / s)).collect();
    let total: f64 = raw.iter().sum();
    Ok(Kernel1d {
        start: -kmax,
        weights: raw.iter().map(|v| v / total).collect(),
    })
}

/// `out(x) = Σ_j w_j in(x - j e_axis)` with zeros outside the grid.
fn convolve_axis(spec: &GridSpec, comps: usize, input: &[f64], axis: usize, k: &Kernel1d) -> Vec<f64> {
    let m = spec.m as i64;
    let stride = spec.stride(axis);
    let mut out = vec![0.0; input.len()];
    for idx in 0..spec.len() {
        let i = spec.unravel(idx)[axis] as i64;
        for (t, &w) in k.weights.iter().enumerate() {
            let j = k.start + t as i64;
            let src = i - j;
            if src < 0 || src >= m || w == 0.0 {
                continue;
            }
            let sidx = (idx as i64 + (src - i) * stride as i64) as usize;
            for c in 0..comps {
                out[idx * comps + c] += w * input[sidx * comps + c];
            }
        }
    }
    out
}

/// Tensor convolution with possibly different 1D kernels per axis.
pub(crate) fn convolve(f: &Field, kernels: &[Kernel1d]) -> Vec<f64> {
    let spec = f.spec();
    let mut cur = f.values().to_vec();
    for (axis, k) in kernels.iter().enumerate() {
        cur = convolve_axis(spec, f.comps(), &cur, axis, k);
    }
    cur
}

fn pointwise_abs(values: &[f64], comps: usize) -> Vec<f64> {
    values
        .chunks(comps)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Dyadic radius ladder `s/2·2^{-k}` down to `2h`.
pub fn radius_ladder(s: f64, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = 0.5 * s;
    while r >= 2.0 * h * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

/// `M_s f = sup_r |φ_r ∗ f|` over the radius ladder; the Euclidean norm is
/// taken for vector data.
pub fn smooth_maximal(f: &Field, s: f64) -> Result<Field> {
    let h = f.spec().h();
    if !(s >= 4.0 * h * (1.0 - 1e-12)) {
        return Err(Error::UnderResolved { s, min: 4.0 * h, h });
    }
    let n = f.n();
    let mut best = vec![0.0f64; f.spec().len()];
    for r in radius_ladder(s, h) {
        let k = mollifier(r, h)?;
        let conv = convolve(f, &vec![k; n]);
        for (b, v) in best.iter_mut().zip(pointwise_abs(&conv, f.comps())) {
            *b = b.max(v);
        }
    }
    Ok(Field::new_unchecked(f.spec().clone(), FieldKind::Scalar, best))
}

/// Largest `k` with `2^k h ≤ ℓ/2`.
pub fn hl_levels(spec: &GridSpec) -> u32 {
    let cells = spec.m - 1;
    let mut k = 0;
    while (1usize << (k + 1)) * 2 <= cells {
        k += 1;
    }
    k
}

/// Dual-cell weight of node `j` inside the cube `[c - r, c + r]` along one
/// axis, `r = half·h`, clipped to the grid domain.
pub(crate) fn window_weight(j: i64, c: i64, half: i64, m: i64, h: f64) -> f64 {
    if (j - c).abs() > half || j < 0 || j >= m {
        return 0.0;
    }
    let mut w = h;
    if (j - c).abs() == half {
        w *= 0.5;
    }
    if j == 0 || j == m - 1 {
        w *= 0.5;
    }
    w
}

/// Quadrature measure of the cube of half side `half·h` centred at node
/// `idx`, clipped to the grid: the product of per-axis weight sums.
pub(crate) fn window_measure(spec: &GridSpec, idx: usize, half: i64) -> f64 {
    let m = spec.m as i64;
    let h = spec.h();
    let ix = spec.unravel(idx);
    (0..spec.n())
        .map(|a| {
            let c = ix[a] as i64;
            ((c - half).max(0)..=(c + half).min(m - 1))
                .map(|j| window_weight(j, c, half, m, h))
                .sum::<f64>()
        })
        .product()
}

/// Hardy-Littlewood maximal function over the discrete cube family: cubes
/// centred at nodes with half sides `h, 2h, …, ≤ ℓ/2` whose open interior
/// contains the node. Averages integrate the dual-cell reconstruction of
/// `|f|` over the part of the cube inside the grid and divide by the
/// quadrature measure of that part, so constants are fixed points.
///
/// Window sums run along the last axis first, then outward, each in
/// ascending index order.
pub fn hl_maximal(f: &Field) -> Field {
    let spec = f.spec();
    let n = spec.n();
    let m = spec.m as i64;
    let h = spec.h();
    let absf = f.pointwise_norm().into_values();
    let mut best = vec![0.0f64; spec.len()];
    for k in 0..=hl_levels(spec) {
        let half = 1i64 << k;
        let mut cur = absf.clone();
        for axis in (0..n).rev() {
            let stride = spec.stride(axis) as i64;
            let mut next = vec![0.0; cur.len()];
            for idx in 0..spec.len() {
                let c = spec.unravel(idx)[axis] as i64;
                let mut s = 0.0;
                for j in (c - half).max(0)..=(c + half).min(m - 1) {
                    let w = window_weight(j, c, half, m, h);
                    s += w * cur[(idx as i64 + (j - c) * stride) as usize];
                }
                next[idx] = s;
            }
            cur = next;
        }
        let avg: Vec<f64> = cur
            .iter()
            .enumerate()
            .map(|(idx, v)| v / window_measure(spec, idx, half))
            .collect();
        // Centres with |x - c|_inf < r, i.e. within half-1 index steps.
        let reach = half - 1;
        let mut mx = avg;
        for axis in 0..n {
            let stride = spec.stride(axis) as i64;
            let mut next = mx.clone();
            for idx in 0..spec.len() {
                let c = spec.unravel(idx)[axis] as i64;
                let mut v = f64::NEG_INFINITY;
                for j in (c - reach).max(0)..=(c + reach).min(m - 1) {
                    v = v.max(mx[(idx as i64 + (j - c) * stride) as usize]);
                }
                next[idx] = v;
            }
            mx = next;
        }
        for (b, v) in best.iter_mut().zip(mx) {
            *b = b.max(v);
        }
    }
    Field::new_unchecked(spec.clone(), FieldKind::Scalar, best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cube;

    #[test]
    fn profile_integral_matches_reference() {
        // Adaptive quadrature reference value.
        assert!((profile_integral() - 0.443_993_816_168_079_3).abs() < 1e-14);
    }

    #[test]
    fn mollifier_properties() {
        let h = 0.01;
        let k = mollifier(0.1, h).unwrap();
        assert!((k.mass() - 1.0).abs() < 1e-14);
        let w = &k.weights;
        for i in 0..w.len() {
            assert_eq!(w[i], w[w.len() - 1 - i]);
        }
        assert_eq!(k.start, -9);
        assert!(matches!(mollifier(0.015, h), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn constant_field_is_fixed() {
        let spec = GridSpec::new(Cube::unit(2).unwrap(), 17).unwrap();
        let f = Field::scalar_fn(spec, |_| 2.5).unwrap();
        let mf = hl_maximal(&f);
        assert!(mf.values().iter().all(|v| (v - 2.5).abs() < 1e-14));
    }
}
