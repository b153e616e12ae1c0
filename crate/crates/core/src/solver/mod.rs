//! Discrete weak solutions of `-div A∇u = div F` on cubes.
//!
//! The weak form is `∫ A∇u·∇η = ∫ F·∇η` for every interior nodal basis
//! function `η`, with Dirichlet values prescribed at boundary nodes.

mod assembly;
mod krylov;

pub use assembly::{cell_gradients, Assembly, StencilMatrix};
pub use krylov::KrylovOutcome;

use std::time::Instant;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::{cell_samples, CoefficientField, Field, FieldKind, GridSpec, Source};
use crate::grid::Cube;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub enum BoundaryCondition {
    Zero,
    /// Boundary values read (by interpolation) from a field on a grid
    /// covering the domain.
    Inherited(Field),
}

#[derive(Clone, Debug)]
pub struct EllipticProblem {
    pub a: CoefficientField,
    pub f: Field,
    pub bc: BoundaryCondition,
}

impl EllipticProblem {
    pub fn new(a: CoefficientField, f: Field, bc: BoundaryCondition) -> Result<Self> {
        if f.spec() != a.spec() {
            return Err(invalid("coefficient and right-hand side must share one grid"));
        }
        if f.kind() != FieldKind::Vector {
            return Err(invalid("right-hand side must be a vector field"));
        }
        if let BoundaryCondition::Inherited(b) = &bc {
            let tol = 1e-9 * a.spec().domain.side();
            if b.kind() != FieldKind::Scalar || !b.spec().domain.contains_cube(&a.spec().domain, tol) {
                return Err(Error::DomainMargin(
                    "boundary field must be scalar and cover the domain".into(),
                ));
            }
        }
        Ok(EllipticProblem { a, f, bc })
    }

    pub fn domain(&self) -> &Cube {
        &self.a.spec().domain
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub u: Field,
    pub grad_u: Field,
    pub residual: f64,
    pub iterations: usize,
    pub assembly_time: f64,
    pub solve_time: f64,
}

#[derive(Serialize)]
pub struct SolveSummary {
    pub n: usize,
    pub m: usize,
    pub residual: f64,
    pub iterations: usize,
    pub assembly_time: f64,
    pub solve_time: f64,
}

impl SolveReport {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            n: self.u.n(),
            m: self.u.spec().m,
            residual: self.residual,
            iterations: self.iterations,
            assembly_time: self.assembly_time,
            solve_time: self.solve_time,
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(invalid(format!("solver tolerance must lie in (0, 1e-4], got {tol}")));
    }
    Ok(())
}

pub fn interior_nodes(spec: &GridSpec) -> Vec<usize> {
    (0..spec.len()).filter(|&i| !spec.is_boundary(i)).collect()
}

/// Per-cell averages of the corner values (equal to the multilinear
/// interpolant at the centroid).
pub fn cell_average(f: &Field) -> Vec<f64> {
    let spec = f.spec();
    let c = f.comps();
    let corners = spec.corner_offsets();
    let w = 1.0 / corners.len() as f64;
    let mut out = vec![0.0; spec.cell_count() * c];
    for cell in 0..spec.cell_count() {
        let o = spec.cell_origin(cell);
        for &k in &corners {
            for (t, v) in f.at(o + k).iter().enumerate() {
                out[cell * c + t] += w * v;
            }
        }
    }
    out
}

/// Nodal gradient: mean of the centroid gradients of the adjacent cells.
pub fn nodal_gradient(spec: &GridSpec, u: &[f64]) -> Field {
    let n = spec.n();
    let cg = cell_gradients(spec, u);
    let corners = spec.corner_offsets();
    let mut acc = vec![0.0; spec.len() * n];
    let mut cnt = vec![0u32; spec.len()];
    for cell in 0..spec.cell_count() {
        let o = spec.cell_origin(cell);
        for &k in &corners {
            let node = o + k;
            cnt[node] += 1;
            for i in 0..n {
                acc[node * n + i] += cg[cell * n + i];
            }
        }
    }
    for (node, &c) in cnt.iter().enumerate() {
        for i in 0..n {
            acc[node * n + i] /= c as f64;
        }
    }
    Field::new_unchecked(spec.clone(), FieldKind::Vector, acc)
}

impl Assembly {
    /// Solve `K u = rhs` at interior nodes with `u = boundary` at boundary
    /// nodes (`boundary` is a full nodal vector; interior entries are
    /// ignored). A few correction sweeps guard against drift of the
    /// recursive residual.
    pub fn solve(&self, rhs: &[f64], boundary: &[f64], tol: f64) -> Result<(Vec<f64>, KrylovOutcome)> {
        check_tol(tol)?;
        let spec = self.spec();
        let interior = interior_nodes(spec);
        let mut u = vec![0.0; spec.len()];
        for i in 0..spec.len() {
            if spec.is_boundary(i) {
                u[i] = boundary[i];
            }
        }
        let k = self.matrix();
        let mut ku = vec![0.0; spec.len()];
        k.apply(&u, &mut ku);
        let mut b = vec![0.0; spec.len()];
        for &i in &interior {
            b[i] = rhs[i] - ku[i];
        }
        let bnorm = interior.iter().map(|&i| b[i] * b[i]).sum::<f64>().sqrt();
        let max_iter = 50 * spec.m;
        let mut w = vec![0.0; spec.len()];
        let mut total = 0usize;
        let mut res = 0.0;
        if bnorm > 0.0 {
            let mut r = b.clone();
            for _ in 0..4 {
                let rnorm = interior.iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt();
                res = rnorm / bnorm;
                if res <= tol {
                    break;
                }
                let inner = (tol * bnorm / rnorm * 0.5).min(0.5);
                let mut dw = vec![0.0; spec.len()];
                let out = krylov::solve(k, &r, &interior, self.is_symmetric(), inner, max_iter, &mut dw)
                    .map_err(|e| match e {
                        Error::ConvergenceFailure {
                            iterations,
                            last,
                            history,
                        } => Error::ConvergenceFailure {
                            iterations: total + iterations,
                            last,
                            history,
                        },
                        other => other,
                    })?;
                total += out.iterations;
                for &i in &interior {
                    w[i] += dw[i];
                }
                let mut kw = vec![0.0; spec.len()];
                k.apply_interior(&w, &interior, &mut kw);
                for &i in &interior {
                    r[i] = b[i] - kw[i];
                }
            }
            let rnorm = interior.iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt();
            res = rnorm / bnorm;
            if res > tol {
                return Err(Error::ConvergenceFailure {
                    iterations: total,
                    last: res,
                    history: vec![res],
                });
            }
        }
        for &i in &interior {
            u[i] = w[i];
        }
        Ok((
            u,
            KrylovOutcome {
                residual: res,
                iterations: total,
            },
        ))
    }

    /// Residual `b - K u` restricted to interior nodes, relative to the
    /// interior norm of `b` (absolute when `b` vanishes there).
    pub fn relative_residual(&self, u: &[f64], rhs: &[f64]) -> f64 {
        let spec = self.spec();
        let mut ku = vec![0.0; spec.len()];
        self.matrix().apply(u, &mut ku);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..spec.len() {
            if !spec.is_boundary(i) {
                num += (rhs[i] - ku[i]).powi(2);
                den += rhs[i] * rhs[i];
            }
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        }
    }
}

fn boundary_values(spec: &GridSpec, bc: &BoundaryCondition) -> Vec<f64> {
    let mut out = vec![0.0; spec.len()];
    if let BoundaryCondition::Inherited(src) = bc {
        let mut x = vec![0.0; spec.n()];
        let mut v = [0.0];
        for i in 0..spec.len() {
            if spec.is_boundary(i) {
                spec.point(i, &mut x);
                src.interpolate(&x, &mut v);
                out[i] = v[0];
            }
        }
    }
    out
}

pub fn solve_dirichlet(prob: &EllipticProblem, tol: f64) -> Result<SolveReport> {
    check_tol(tol)?;
    let spec = prob.a.spec().clone();
    let t0 = Instant::now();
    let cell_a = cell_average(prob.a.base());
    let asm = Assembly::from_cells(&spec, cell_a)?;
    let rhs = asm.load(&cell_average(&prob.f));
    let assembly_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let bvals = boundary_values(&spec, &prob.bc);
    let (u, out) = asm.solve(&rhs, &bvals, tol)?;
    let solve_time = t1.elapsed().as_secs_f64();
    let grad_u = nodal_gradient(&spec, &u);
    Ok(SolveReport {
        u: Field::new(spec, FieldKind::Scalar, u)?,
        grad_u,
        residual: out.residual,
        iterations: out.iterations,
        assembly_time,
        solve_time,
    })
}

/// Solve with analytic coefficient and load sampled at cell centroids.
pub fn solve_sources(
    spec: &GridSpec,
    a: &dyn Source,
    f: &dyn Source,
    bc: &BoundaryCondition,
    tol: f64,
) -> Result<SolveReport> {
    check_tol(tol)?;
    let t0 = Instant::now();
    let asm = Assembly::new(spec, a)?;
    if f.comps() != spec.n() {
        return Err(invalid("load must be a vector source"));
    }
    let rhs = asm.load(&cell_samples(spec, f));
    let assembly_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (u, out) = asm.solve(&rhs, &boundary_values(spec, bc), tol)?;
    let solve_time = t1.elapsed().as_secs_f64();
    let grad_u = nodal_gradient(spec, &u);
    Ok(SolveReport {
        u: Field::new(spec.clone(), FieldKind::Scalar, u)?,
        grad_u,
        residual: out.residual,
        iterations: out.iterations,
        assembly_time,
        solve_time,
    })
}

/// Zero-boundary solution of `∫ Aᵀ∇T·∇η = ∫ g·∇η` on the grid of `g`.
#[derive(Clone, Debug)]
pub struct Projection {
    pub t: Field,
    pub grad_t: Field,
    pub residual: f64,
    pub iterations: usize,
}

pub fn project_t_full(p: &Cube, a: &dyn Source, g: &Field, tol: f64) -> Result<Projection> {
    let spec = g.spec();
    let tolc = 1e-9 * p.side();
    if !spec.domain.approx_eq(p, tolc) {
        return Err(invalid("g must live on a grid over P"));
    }
    if g.kind() != FieldKind::Vector {
        return Err(invalid("g must be a vector field"));
    }
    let asm = Assembly::new(spec, a)?.transpose();
    let rhs = asm.load(&cell_average(g));
    let (t, out) = asm.solve(&rhs, &vec![0.0; spec.len()], tol)?;
    let grad_t = nodal_gradient(spec, &t);
    Ok(Projection {
        t: Field::new(spec.clone(), FieldKind::Scalar, t)?,
        grad_t,
        residual: out.residual,
        iterations: out.iterations,
    })
}

pub fn project_t(p: &Cube, a: &CoefficientField, g: &Field, tol: f64) -> Result<Field> {
    Ok(project_t_full(p, a, g, tol)?.grad_t)
}

/// Solution of the constant-coefficient equation on `P3` with the
/// boundary values of `u`. When `P3` is node aligned in `u`'s grid the
/// subgrid is used as is; otherwise `u` is interpolated onto a grid over
/// `P3` with the same node count.
pub fn solve_local_frozen(p3: &Cube, a_p: &[f64], u: &Field, tol: f64) -> Result<Field> {
    let n = u.n();
    if a_p.len() != n * n {
        return Err(invalid("frozen coefficient must be an n×n matrix"));
    }
    let tolc = 1e-9 * p3.side();
    if !u.spec().domain.contains_cube(p3, tolc) {
        return Err(Error::DomainMargin("u does not cover P3".into()));
    }
    let local = match u.restrict(p3) {
        Some(f) => f,
        None => u.resample(GridSpec::new(p3.clone(), u.spec().m)?)?,
    };
    let spec = local.spec().clone();
    let asm = Assembly::constant(&spec, a_p)?;
    let (v, _) = asm.solve(&vec![0.0; spec.len()], local.values(), tol)?;
    Field::new(spec, FieldKind::Scalar, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstSource, FnSource};
    use std::f64::consts::PI;

    fn unit(m: usize) -> GridSpec {
        GridSpec::new(Cube::unit(2).unwrap(), m).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let spec = unit(17);
        let a = CoefficientField::constant(spec.clone(), &[1.0, 0.0, 0.0, 1.0], 1.0, 1.0).unwrap();
        let f = Field::zeros(spec, FieldKind::Vector);
        let r = solve_dirichlet(&EllipticProblem::new(a, f, BoundaryCondition::Zero).unwrap(), 1e-10)
            .unwrap();
        assert!(r.u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_is_reproduced() {
        let spec = unit(17);
        let a = CoefficientField::constant(spec.clone(), &[1.0, 0.0, 0.0, 4.0], 1.0, 4.0).unwrap();
        let f = Field::zeros(spec.clone(), FieldKind::Vector);
        let bc = Field::scalar_fn(spec, |x| x[0]).unwrap();
        let prob = EllipticProblem::new(a, f, BoundaryCondition::Inherited(bc.clone())).unwrap();
        let r = solve_dirichlet(&prob, 1e-12).unwrap();
        let err = r
            .u
            .values()
            .iter()
            .zip(bc.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert!(r.grad_u.values().chunks(2).all(|g| (g[0] - 1.0).abs() < 1e-9 && g[1].abs() < 1e-9));
    }

    #[test]
    fn nonsymmetric_solve_converges() {
        let spec = unit(33);
        let a = ConstSource::new(2, vec![2.0, 0.8, -0.8, 1.0]);
        let f = FnSource::new(2, 2, |x: &[f64], o: &mut [f64]| {
            o[0] = (PI * x[1]).sin();
            o[1] = x[0] * x[0];
        });
        let r = solve_sources(&spec, &a, &f, &BoundaryCondition::Zero, 1e-10).unwrap();
        assert!(r.residual <= 1e-10);
        let asm = Assembly::new(&spec, &a).unwrap();
        let rhs = asm.load(&cell_samples(&spec, &f));
        assert!(asm.relative_residual(r.u.values(), &rhs) <= 1e-9);
    }

    #[test]
    fn frozen_harmonic_polynomial() {
        let spec = unit(33);
        let u = Field::scalar_fn(spec, |x| x[0] * x[0] - x[1] * x[1]).unwrap();
        let p3 = Cube::from_corner(&[0.25, 0.25], 0.5).unwrap();
        let up = solve_local_frozen(&p3, &[1.0, 0.0, 0.0, 1.0], &u, 1e-12).unwrap();
        let exact = u.restrict(&p3).unwrap();
        let err = up
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // x²-y² is discretely harmonic for the bilinear Laplacian stencil.
        assert!(err < 1e-10, "{err}");
    }
}
