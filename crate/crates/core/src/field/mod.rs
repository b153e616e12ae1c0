//! Nodal fields on uniform tensor grids over cubes.
//!
//! Node `i` along axis `a` sits at `lower_a + i·h` with `h = ℓ/(m-1)`.
//! Storage is row-major with axis 0 slowest. Scalar, vector and matrix
//! fields share one type; the kind fixes the number of components per node
//! (`1`, `n`, `n²`), matrices stored row-major.

mod coefficient;
pub mod generators;
mod holder;
pub mod io;
pub mod linalg;
mod quadrature;

pub use coefficient::{
    ellipticity_check, probe_directions, spectral_check, CoefficientField, EllipticityPredicate,
};
pub use holder::holder_seminorm;
pub use quadrature::{
    axis_weights, integrate, integrate_norm_pow, lp_mean, mean_over, measure, node_weights,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Cube;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain: Cube,
    pub m: usize,
}

impl GridSpec {
    pub fn new(domain: Cube, m: usize) -> Result<Self> {
        if m < 3 || m % 2 == 0 {
            return Err(invalid(format!("nodes per axis must be odd and at least 3, got {m}")));
        }
        Ok(GridSpec { domain, m })
    }

    pub fn n(&self) -> usize {
        self.domain.n()
    }

    pub fn h(&self) -> f64 {
        self.domain.side() / (self.m - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.n() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cells_per_axis(&self) -> usize {
        self.m - 1
    }

    pub fn cell_count(&self) -> usize {
        (self.m - 1).pow(self.n() as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n() as i32)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.m {
            self.domain.upper(axis)
        } else {
            self.domain.lower(axis) + i as f64 * self.h()
        }
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = idx;
        for a in (0..self.n()).rev() {
            out[a] = rem % self.m;
            rem /= self.m;
        }
        out
    }

    pub fn ravel(&self, ix: &[usize]) -> usize {
        ix[..self.n()].iter().fold(0, |acc, &i| acc * self.m + i)
    }

    /// Stride of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.n() - 1 - axis) as u32)
    }

    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let ix = self.unravel(idx);
        for a in 0..self.n() {
            out[a] = self.coord(a, ix[a]);
        }
    }

    pub fn point_vec(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.n()];
        self.point(idx, &mut p);
        p
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let ix = self.unravel(idx);
        (0..self.n()).any(|a| ix[a] == 0 || ix[a] + 1 == self.m)
    }

    /// Cells are indexed like nodes on an `(m-1)^n` grid.
    pub fn cell_unravel(&self, c: usize) -> [usize; 3] {
        let k = self.m - 1;
        let mut out = [0usize; 3];
        let mut rem = c;
        for a in (0..self.n()).rev() {
            out[a] = rem % k;
            rem /= k;
        }
        out
    }

    pub fn cell_centroid(&self, c: usize, out: &mut [f64]) {
        let ix = self.cell_unravel(c);
        let h = self.h();
        for a in 0..self.n() {
            out[a] = self.domain.lower(a) + (ix[a] as f64 + 0.5) * h;
        }
    }

    /// Node index of the lower-left corner of cell `c`.
    pub fn cell_origin(&self, c: usize) -> usize {
        self.ravel(&self.cell_unravel(c))
    }

    /// Node offsets of the `2^n` cell corners; bit `a` of the local index
    /// (most significant first) is the offset along axis `a`.
    pub fn corner_offsets(&self) -> Vec<usize> {
        let n = self.n();
        (0..1usize << n)
            .map(|b| {
                (0..n)
                    .filter(|&a| (b >> (n - 1 - a)) & 1 == 1)
                    .map(|a| self.stride(a))
                    .sum()
            })
            .collect()
    }

    /// Index of the node at coordinate `x` along `axis` when it lies within
    /// `tol·h` of a node.
    pub fn node_at(&self, axis: usize, x: f64, tol: f64) -> Option<usize> {
        let t = (x - self.domain.lower(axis)) / self.h();
        let r = t.round();
        if (t - r).abs() <= tol && r >= 0.0 && r <= (self.m - 1) as f64 {
            Some(r as usize)
        } else {
            None
        }
    }

    /// For a cube whose faces sit on nodes of this grid, the node-aligned
    /// subgrid and the per-axis offset of its first node.
    pub fn aligned_subgrid(&self, cube: &Cube) -> Option<(GridSpec, [usize; 3])> {
        let n = self.n();
        if cube.n() != n {
            return None;
        }
        let mut off = [0usize; 3];
        let mut cells = 0usize;
        for a in 0..n {
            let lo = self.node_at(a, cube.lower(a), 1e-7)?;
            let hi = self.node_at(a, cube.upper(a), 1e-7)?;
            if hi <= lo {
                return None;
            }
            if a == 0 {
                cells = hi - lo;
            } else if hi - lo != cells {
                return None;
            }
            off[a] = lo;
        }
        let m = cells + 1;
        if m < 3 || m % 2 == 0 {
            return None;
        }
        Some((
            GridSpec {
                domain: cube.clone(),
                m,
            },
            off,
        ))
    }

    /// Locate `x` along `axis`: cell index and local fraction in `[0, 1]`.
    /// Points outside the domain are clamped.
    pub fn locate(&self, axis: usize, x: f64) -> (usize, f64) {
        let t = (x - self.domain.lower(axis)) / self.h();
        let cells = (self.m - 1) as f64;
        let t = t.clamp(0.0, cells);
        let mut i = t.floor() as usize;
        if i >= self.m - 1 {
            i = self.m - 2;
        }
        (i, t - i as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Vector,
    Matrix,
}

impl FieldKind {
    pub fn comps(self, n: usize) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Vector => n,
            FieldKind::Matrix => n * n,
        }
    }

    pub fn code(self) -> u64 {
        match self {
            FieldKind::Scalar => 0,
            FieldKind::Vector => 1,
            FieldKind::Matrix => 2,
        }
    }

    pub fn from_code(c: u64) -> Result<Self> {
        match c {
            0 => Ok(FieldKind::Scalar),
            1 => Ok(FieldKind::Vector),
            2 => Ok(FieldKind::Matrix),
            _ => Err(invalid(format!("unknown field kind code {c}"))),
        }
    }
}

/// Anything that can be evaluated pointwise: grid fields (multilinear
/// interpolation) and the analytic generators.
pub trait Source: Sync {
    fn n(&self) -> usize;
    fn comps(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Grid spacing of the underlying data, if any.
    fn native_grid(&self) -> Option<&GridSpec> {
        None
    }

    /// Region where the values are meaningful.
    fn support(&self) -> Option<&Cube> {
        None
    }
}

/// Closure-backed source.
pub struct FnSource<F> {
    n: usize,
    comps: usize,
    f: F,
}

impl<F> FnSource<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(n: usize, comps: usize, f: F) -> Self {
        FnSource { n, comps, f }
    }
}

impl<F> Source for FnSource<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn n(&self) -> usize {
        self.n
    }
    fn comps(&self) -> usize {
        self.comps
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Constant-valued source.
pub struct ConstSource {
    n: usize,
    value: Vec<f64>,
}

impl ConstSource {
    pub fn new(n: usize, value: Vec<f64>) -> Self {
        ConstSource { n, value }
    }
}

impl Source for ConstSource {
    fn n(&self) -> usize {
        self.n
    }
    fn comps(&self) -> usize {
        self.value.len()
    }
    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    spec: GridSpec,
    kind: FieldKind,
    values: Vec<f64>,
}

impl Field {
    pub fn new(spec: GridSpec, kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        let expect = spec.len() * kind.comps(spec.n());
        if values.len() != expect {
            return Err(invalid(format!(
                "field needs {expect} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite field entry at position {i}")));
        }
        Ok(Field { spec, kind, values })
    }

    pub(crate) fn new_unchecked(spec: GridSpec, kind: FieldKind, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len() * kind.comps(spec.n()));
        Field { spec, kind, values }
    }

    pub fn zeros(spec: GridSpec, kind: FieldKind) -> Self {
        let len = spec.len() * kind.comps(spec.n());
        Field {
            spec,
            kind,
            values: vec![0.0; len],
        }
    }

    pub fn from_fn(
        spec: GridSpec,
        kind: FieldKind,
        f: impl Fn(&[f64], &mut [f64]),
    ) -> Result<Self> {
        let c = kind.comps(spec.n());
        let mut values = vec![0.0; spec.len() * c];
        let mut x = vec![0.0; spec.n()];
        for idx in 0..spec.len() {
            spec.point(idx, &mut x);
            f(&x, &mut values[idx * c..(idx + 1) * c]);
        }
        Field::new(spec, kind, values)
    }

    pub fn scalar_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Field::from_fn(spec, FieldKind::Scalar, |x, out| out[0] = f(x))
    }

    /// Sample a source at the nodes.
    pub fn sample(spec: GridSpec, kind: FieldKind, src: &dyn Source) -> Result<Self> {
        if src.comps() != kind.comps(spec.n()) {
            return Err(invalid(format!(
                "source has {} components, {:?} field needs {}",
                src.comps(),
                kind,
                kind.comps(spec.n())
            )));
        }
        Field::from_fn(spec, kind, |x, out| src.eval(x, out))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn comps(&self) -> usize {
        self.kind.comps(self.spec.n())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, idx: usize) -> &[f64] {
        let c = self.comps();
        &self.values[idx * c..(idx + 1) * c]
    }

    /// Euclidean norm of the node value (Frobenius for matrices).
    pub fn norm_at(&self, idx: usize) -> f64 {
        self.at(idx).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn pointwise_norm(&self) -> Field {
        let values = (0..self.spec.len()).map(|i| self.norm_at(i)).collect();
        Field::new_unchecked(self.spec.clone(), FieldKind::Scalar, values)
    }

    pub fn component(&self, c: usize) -> Field {
        let k = self.comps();
        let values = (0..self.spec.len()).map(|i| self.values[i * k + c]).collect();
        Field::new_unchecked(self.spec.clone(), FieldKind::Scalar, values)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(
            self.spec.clone(),
            self.kind,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Multiply every node value by the scalar field `s`.
    pub fn scale_by(&self, s: &Field) -> Result<Field> {
        if s.spec != self.spec || s.kind != FieldKind::Scalar {
            return Err(invalid("scale_by needs a scalar field on the same grid"));
        }
        let c = self.comps();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| v * s.values[j / c])
            .collect();
        Field::new(self.spec.clone(), self.kind, values)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if other.spec != self.spec || other.kind != self.kind {
            return Err(invalid("fields live on different grids or have different kinds"));
        }
        Field::new(
            self.spec.clone(),
            self.kind,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Pointwise Euclidean inner product of two fields of equal kind.
    pub fn dot(&self, other: &Field) -> Result<Field> {
        if other.spec != self.spec || other.kind != self.kind {
            return Err(invalid("dot needs fields of one kind on one grid"));
        }
        let c = self.comps();
        let values = (0..self.spec.len())
            .map(|i| {
                self.values[i * c..(i + 1) * c]
                    .iter()
                    .zip(&other.values[i * c..(i + 1) * c])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(Field::new_unchecked(self.spec.clone(), FieldKind::Scalar, values))
    }

    /// Restriction to a node-aligned subcube.
    pub fn restrict(&self, cube: &Cube) -> Option<Field> {
        let (sub, off) = self.spec.aligned_subgrid(cube)?;
        let c = self.comps();
        let n = self.n();
        let mut values = Vec::with_capacity(sub.len() * c);
        let mut ix = [0usize; 3];
        for idx in 0..sub.len() {
            let local = sub.unravel(idx);
            for a in 0..n {
                ix[a] = local[a] + off[a];
            }
            let g = self.spec.ravel(&ix);
            values.extend_from_slice(&self.values[g * c..(g + 1) * c]);
        }
        Some(Field::new_unchecked(sub, self.kind, values))
    }

    /// Multilinear resampling onto another grid. The target domain must lie
    /// inside this field's domain up to a small tolerance.
    pub fn resample(&self, spec: GridSpec) -> Result<Field> {
        let tol = 1e-9 * self.spec.domain.side();
        if !self.spec.domain.contains_cube(&spec.domain, tol) {
            return Err(Error::DomainMargin(format!(
                "resample target {:?} leaves source domain {:?}",
                spec.domain, self.spec.domain
            )));
        }
        Field::sample(spec, self.kind, self)
    }

    /// Multilinear interpolation at `x` (clamped to the domain).
    pub fn interpolate(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        let c = self.comps();
        let mut cell = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..n {
            let (i, t) = self.spec.locate(a, x[a]);
            cell[a] = i;
            frac[a] = t;
        }
        let base = self.spec.ravel(&cell);
        out[..c].iter_mut().for_each(|o| *o = 0.0);
        for b in 0..(1usize << n) {
            let mut w = 1.0;
            let mut off = 0usize;
            for a in 0..n {
                let bit = (b >> (n - 1 - a)) & 1;
                if bit == 1 {
                    w *= frac[a];
                    off += self.spec.stride(a);
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let v = &self.values[(base + off) * c..(base + off + 1) * c];
            for k in 0..c {
                out[k] += w * v[k];
            }
        }
    }
}

impl Source for Field {
    fn n(&self) -> usize {
        self.spec.n()
    }
    fn comps(&self) -> usize {
        self.kind.comps(self.spec.n())
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.interpolate(x, out)
    }
    fn native_grid(&self) -> Option<&GridSpec> {
        Some(&self.spec)
    }
    fn support(&self) -> Option<&Cube> {
        Some(&self.spec.domain)
    }
}

/// Cell-centroid samples of a source, `comps` values per cell.
pub fn cell_samples(spec: &GridSpec, src: &dyn Source) -> Vec<f64> {
    let c = src.comps();
    let mut out = vec![0.0; spec.cell_count() * c];
    let mut x = vec![0.0; spec.n()];
    for cell in 0..spec.cell_count() {
        spec.cell_centroid(cell, &mut x);
        src.eval(&x, &mut out[cell * c..(cell + 1) * c]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(m: usize) -> GridSpec {
        GridSpec::new(Cube::unit(2).unwrap(), m).unwrap()
    }

    #[test]
    fn grid_indexing_roundtrip() {
        let g = unit_grid(5);
        for idx in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(idx)), idx);
        }
        assert_eq!(g.stride(0), 5);
        assert_eq!(g.stride(1), 1);
        assert_eq!(g.coord(0, 4), 1.0);
        assert!(GridSpec::new(Cube::unit(2).unwrap(), 4).is_err());
        assert!(GridSpec::new(Cube::unit(2).unwrap(), 1).is_err());
    }

    #[test]
    fn interpolation_reproduces_bilinear() {
        let g = unit_grid(5);
        let f = Field::scalar_fn(g, |x| 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1]).unwrap();
        let mut out = [0.0];
        for &(a, b) in &[(0.13, 0.77), (0.5, 0.5), (1.0, 0.0), (0.999, 0.01)] {
            f.interpolate(&[a, b], &mut out);
            let exact = 1.0 + 2.0 * a - b + 3.0 * a * b;
            assert!((out[0] - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn aligned_restriction() {
        let g = unit_grid(9);
        let f = Field::scalar_fn(g.clone(), |x| x[0] + 10.0 * x[1]).unwrap();
        let sub = Cube::from_corner(&[0.25, 0.5], 0.5).unwrap();
        let r = f.restrict(&sub).unwrap();
        assert_eq!(r.spec().m, 5);
        assert!((r.at(0)[0] - (0.25 + 5.0)).abs() < 1e-14);
        let off = Cube::from_corner(&[0.2, 0.5], 0.5).unwrap();
        assert!(f.restrict(&off).is_none());
    }
}
