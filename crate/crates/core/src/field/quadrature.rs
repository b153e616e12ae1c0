//! Nodal quadrature on dual cells.
//!
//! Node `i` owns `[x_i - h/2, x_i + h/2]` clipped to the grid domain and to
//! the integration region, so weights over the whole domain sum to `ℓ^n`
//! exactly and the rule integrates affine functions exactly.

use super::{Field, GridSpec};
use crate::error::{invalid, Result};
use crate::grid::Cube;

/// Per-axis dual-cell lengths, clipped to `region` when given.
pub fn axis_weights(spec: &GridSpec, axis: usize, region: Option<&Cube>) -> Vec<f64> {
    let h = spec.h();
    let dlo = spec.domain.lower(axis);
    let dhi = spec.domain.upper(axis);
    let (rlo, rhi) = match region {
        Some(r) => (r.lower(axis).max(dlo), r.upper(axis).min(dhi)),
        None => (dlo, dhi),
    };
    (0..spec.m)
        .map(|i| {
            let x = spec.coord(axis, i);
            let lo = (x - 0.5 * h).max(rlo);
            let hi = (x + 0.5 * h).min(rhi);
            (hi - lo).max(0.0)
        })
        .collect()
}

/// Tensor-product node weights over `region ∩ domain`.
pub fn node_weights(spec: &GridSpec, region: Option<&Cube>) -> Vec<f64> {
    let n = spec.n();
    let ax: Vec<Vec<f64>> = (0..n).map(|a| axis_weights(spec, a, region)).collect();
    (0..spec.len())
        .map(|idx| {
            let ix = spec.unravel(idx);
            (0..n).map(|a| ax[a][ix[a]]).product()
        })
        .collect()
}

/// Measure of `region ∩ domain` as seen by the quadrature.
pub fn measure(spec: &GridSpec, region: Option<&Cube>) -> f64 {
    (0..spec.n())
        .map(|a| axis_weights(spec, a, region).iter().sum::<f64>())
        .product()
}

/// Componentwise integral over `region ∩ domain`.
pub fn integrate(f: &Field, region: Option<&Cube>) -> Vec<f64> {
    let w = node_weights(f.spec(), region);
    let c = f.comps();
    let mut out = vec![0.0; c];
    for (idx, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for (k, v) in f.at(idx).iter().enumerate() {
            out[k] += wi * v;
        }
    }
    out
}

/// `∫ |f|^p` with the pointwise Euclidean norm.
pub fn integrate_norm_pow(f: &Field, region: Option<&Cube>, p: f64) -> f64 {
    let w = node_weights(f.spec(), region);
    w.iter()
        .enumerate()
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(idx, &wi)| wi * f.norm_at(idx).powf(p))
        .sum()
}

/// Componentwise mean over `P ∩ domain`. Subtracting a reference value
/// before summing keeps constants exact to the last bit.
pub fn mean_over(f: &Field, p: &Cube) -> Result<Vec<f64>> {
    let w = node_weights(f.spec(), Some(p));
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(invalid("averaging cube does not meet the field's domain"));
    }
    let first = w.iter().position(|&x| x > 0.0).unwrap();
    let f0 = f.at(first).to_vec();
    let c = f.comps();
    let mut acc = vec![0.0; c];
    for (idx, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for (k, v) in f.at(idx).iter().enumerate() {
            acc[k] += wi * (v - f0[k]);
        }
    }
    Ok(f0.iter().zip(&acc).map(|(a, b)| a + b / total).collect())
}

/// `(⨍_P |f|^p)^{1/p}` with the pointwise Euclidean norm.
pub fn lp_mean(f: &Field, p_cube: &Cube, p: f64) -> Result<f64> {
    let total = measure(f.spec(), Some(p_cube));
    if total <= 0.0 {
        return Err(invalid("averaging cube does not meet the field's domain"));
    }
    Ok((integrate_norm_pow(f, Some(p_cube), p) / total).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_volume() {
        let spec = GridSpec::new(Cube::new(vec![0.0, 0.0], 1.0).unwrap(), 9).unwrap();
        let s: f64 = node_weights(&spec, None).iter().sum();
        assert!((s - 4.0).abs() < 1e-13);
        let q = Cube::new(vec![0.1, -0.3], 0.37).unwrap();
        assert!((measure(&spec, Some(&q)) - 0.74 * 0.74).abs() < 1e-13);
    }

    #[test]
    fn mean_examples() {
        let dom = Cube::new(vec![0.0, 0.0], 1.0).unwrap();
        let spec = GridSpec::new(dom.clone(), 33).unwrap();
        let c = Field::scalar_fn(spec.clone(), |_| 0.7).unwrap();
        let q = Cube::new(vec![0.2, 0.1], 0.3).unwrap();
        assert_eq!(mean_over(&c, &q).unwrap()[0], 0.7);
        let odd = Field::scalar_fn(spec.clone(), |x| x[0]).unwrap();
        assert!(mean_over(&odd, &dom).unwrap()[0].abs() < 1e-15);
        let sq = Field::scalar_fn(spec, |x| x[0] * x[0]).unwrap();
        let m = mean_over(&sq, &dom).unwrap()[0];
        // Trapezoid error for x² on [-1,1] is h²/6.
        assert!((m - 1.0 / 3.0 - (1.0 / 16.0f64).powi(2) / 6.0).abs() < 1e-12);
        let far = Cube::new(vec![5.0, 5.0], 0.5).unwrap();
        assert!(mean_over(&sq, &far).is_err());
    }
}
