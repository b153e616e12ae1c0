//! Validated coefficient fields.
//!
//! Two predicates appear in the ellipticity literature: the quadratic-form
//! bound with `|A| ≤ Λ`, and `σ(A(x)) ⊂ [λ, Λ]`. Both are checked here; the
//! first is the one a `CoefficientField` certifies.

use serde::{Deserialize, Serialize};

use super::linalg::{min_quadratic_form, op_norm, singular_values};
use super::{Field, FieldKind, GridSpec, Source};
use crate::error::{invalid, Error, Result};

const TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EllipticityPredicate {
    /// `ξ·Aξ ≥ λ|ξ|²` on the probe set and `|A| ≤ Λ`.
    QuadraticForm,
    /// All singular values of `A` lie in `[λ, Λ]`.
    Spectral,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    base: Field,
    lambda: f64,
    big_lambda: f64,
    symmetric: bool,
}

impl CoefficientField {
    pub fn base(&self) -> &Field {
        &self.base
    }

    pub fn spec(&self) -> &GridSpec {
        self.base.spec()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Sample `src` on `spec` and validate.
    pub fn from_source(
        spec: GridSpec,
        src: &dyn Source,
        lambda: f64,
        big_lambda: f64,
    ) -> Result<Self> {
        let base = Field::sample(spec, FieldKind::Matrix, src)?;
        ellipticity_check(&base, lambda, big_lambda)
    }

    pub fn constant(spec: GridSpec, a: &[f64], lambda: f64, big_lambda: f64) -> Result<Self> {
        let a = a.to_vec();
        let base = Field::from_fn(spec, FieldKind::Matrix, |_, out| out.copy_from_slice(&a))?;
        ellipticity_check(&base, lambda, big_lambda)
    }

    pub fn matrix_at(&self, idx: usize) -> &[f64] {
        self.base.at(idx)
    }
}

impl Source for CoefficientField {
    fn n(&self) -> usize {
        self.base.n()
    }
    fn comps(&self) -> usize {
        self.base.comps()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.base.interpolate(x, out)
    }
    fn native_grid(&self) -> Option<&GridSpec> {
        Some(self.base.spec())
    }
}

/// Unit probe directions: 64 uniform angles in 2D; in 3D the 162 vertices of
/// a frequency-4 geodesic icosahedron plus its 20 face centroids.
pub fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        return (0..64)
            .map(|k| {
                let t = std::f64::consts::PI * 2.0 * k as f64 / 64.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let v: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let unit = |p: [f64; 3]| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        vec![p[0] / r, p[1] / r, p[2] / r]
    };
    let mut out: Vec<Vec<f64>> = Vec::new();
    let push = |d: Vec<f64>, out: &mut Vec<Vec<f64>>| {
        if !out
            .iter()
            .any(|e| e.iter().zip(&d).all(|(a, b)| (a - b).abs() < 1e-9))
        {
            out.push(d);
        }
    };
    const F: usize = 4;
    for f in &faces {
        for i in 0..=F {
            for j in 0..=F - i {
                let k = F - i - j;
                let mut p = [0.0; 3];
                for a in 0..3 {
                    p[a] = (i as f64 * v[f[0]][a] + j as f64 * v[f[1]][a] + k as f64 * v[f[2]][a])
                        / F as f64;
                }
                push(unit(p), &mut out);
            }
        }
    }
    for f in &faces {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = (v[f[0]][a] + v[f[1]][a] + v[f[2]][a]) / 3.0;
        }
        push(unit(p), &mut out);
    }
    out
}

/// Validate `ξ·A(x)ξ ≥ λ|ξ|² - 1e-12` over the probe set and
/// `|A(x)| ≤ Λ + 1e-12` (exact operator norm) at every node. The reported
/// violation is the worst node.
pub fn ellipticity_check(a: &Field, lambda: f64, big_lambda: f64) -> Result<CoefficientField> {
    if a.kind() != FieldKind::Matrix {
        return Err(invalid("ellipticity check needs a matrix field"));
    }
    if !(lambda > 0.0 && lambda <= big_lambda && big_lambda.is_finite()) {
        return Err(invalid(format!(
            "need 0 < lambda <= Lambda, got {lambda} and {big_lambda}"
        )));
    }
    let n = a.n();
    let probes = probe_directions(n);
    let mut worst: Option<(f64, usize, Vec<f64>, &'static str)> = None;
    let mut symmetric = true;
    let mut av = vec![0.0; n];
    for idx in 0..a.spec().len() {
        let m = a.at(idx);
        for i in 0..n {
            for j in i + 1..n {
                if (m[i * n + j] - m[j * n + i]).abs() > 1e-14 {
                    symmetric = false;
                }
            }
        }
        for d in &probes {
            super::linalg::mat_vec(m, d, n, &mut av);
            let q: f64 = d.iter().zip(&av).map(|(x, y)| x * y).sum();
            let margin = q - lambda;
            if margin < -TOL && worst.as_ref().map_or(true, |w| margin < w.0) {
                worst = Some((margin, idx, d.clone(), "quadratic-form"));
            }
        }
        let margin = big_lambda - op_norm(m, n);
        if margin < -TOL && worst.as_ref().map_or(true, |w| margin < w.0) {
            let d = probes
                .iter()
                .max_by(|x, y| {
                    let nx = norm_of_image(m, x, n);
                    let ny = norm_of_image(m, y, n);
                    nx.partial_cmp(&ny).unwrap()
                })
                .unwrap()
                .clone();
            worst = Some((margin, idx, d, "operator-norm"));
        }
    }
    if let Some((margin, node, direction, predicate)) = worst {
        return Err(Error::EllipticityViolation {
            node,
            coords: a.spec().point_vec(node),
            direction,
            margin,
            predicate,
        });
    }
    Ok(CoefficientField {
        base: a.clone(),
        lambda,
        big_lambda,
        symmetric,
    })
}

fn norm_of_image(m: &[f64], d: &[f64], n: usize) -> f64 {
    let mut out = vec![0.0; n];
    super::linalg::mat_vec(m, d, n, &mut out);
    out.iter().map(|v| v * v).sum::<f64>()
}

/// The spectral predicate: singular values in `[λ, Λ]` and the symmetric
/// part bounded below by `λ`, both computed exactly.
pub fn spectral_check(a: &Field, lambda: f64, big_lambda: f64) -> Result<()> {
    if a.kind() != FieldKind::Matrix {
        return Err(invalid("spectral check needs a matrix field"));
    }
    let n = a.n();
    for idx in 0..a.spec().len() {
        let m = a.at(idx);
        let sv = singular_values(m, n);
        let qmin = min_quadratic_form(m, n);
        let margin = (sv[0] - lambda)
            .min(big_lambda - sv[n - 1])
            .min(qmin - lambda);
        if margin < -TOL {
            return Err(Error::EllipticityViolation {
                node: idx,
                coords: a.spec().point_vec(idx),
                direction: vec![0.0; n],
                margin,
                predicate: "spectral",
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cube;

    fn spec() -> GridSpec {
        GridSpec::new(Cube::unit(2).unwrap(), 5).unwrap()
    }

    #[test]
    fn probe_counts() {
        assert_eq!(probe_directions(2).len(), 64);
        let p3 = probe_directions(3);
        assert_eq!(p3.len(), 182);
        assert!(p3
            .iter()
            .all(|d| (d.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ellipticity_examples() {
        assert!(CoefficientField::constant(spec(), &[1.0, 0.0, 0.0, 1.0], 1.0, 1.0).is_ok());
        assert!(CoefficientField::constant(spec(), &[1.0, 0.0, 0.0, 4.0], 1.0, 4.0).is_ok());
        match CoefficientField::constant(spec(), &[1.0, 0.0, 0.0, 4.0], 2.0, 4.0) {
            Err(Error::EllipticityViolation {
                margin, predicate, ..
            }) => {
                assert!((margin + 1.0).abs() < 1e-12);
                assert_eq!(predicate, "quadratic-form");
            }
            other => panic!("expected violation, got {other:?}"),
        }
        assert!(CoefficientField::constant(spec(), &[1.0, 0.0, 0.0, 4.0], 1.0, 3.0).is_err());
        let skew = [1.0, 2.0, -2.0, 1.0];
        let c = CoefficientField::constant(spec(), &skew, 1.0, 3.0).unwrap();
        assert!(!c.is_symmetric());
        // Singular values are both √5 > λ, so only the spectral upper bound fails.
        let f = c.base().clone();
        assert!(spectral_check(&f, 1.0, 2.0).is_err());
        assert!(spectral_check(&f, 1.0, 3.0).is_ok());
    }
}
