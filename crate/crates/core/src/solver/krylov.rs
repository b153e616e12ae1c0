//! Jacobi-preconditioned CG and BiCGSTAB on the interior unknowns.
//!
//! Vectors are full nodal arrays whose boundary entries stay zero, so the
//! stencil product needs no index translation.

use super::assembly::StencilMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| a[i] * b[i]).sum()
}

/// Solve `K x = b` on `interior` (boundary entries of `x` are zero and
/// `b` is ignored there). The residual is `‖b - Kx‖ / ‖b‖` over the
/// interior.
pub fn solve(
    k: &StencilMatrix,
    b: &[f64],
    interior: &[usize],
    symmetric: bool,
    tol: f64,
    max_iter: usize,
    x: &mut [f64],
) -> Result<KrylovOutcome> {
    let bnorm = dot(b, b, interior).sqrt();
    interior.iter().for_each(|&i| x[i] = 0.0);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            residual: 0.0,
            iterations: 0,
        });
    }
    let diag = k.diagonal();
    let inv: Vec<f64> = diag.iter().map(|d| if *d != 0.0 { 1.0 / d } else { 0.0 }).collect();
    if symmetric {
        cg(k, b, interior, &inv, bnorm, tol, max_iter, x)
    } else {
        bicgstab(k, b, interior, &inv, bnorm, tol, max_iter, x)
    }
}

#[allow(clippy::too_many_arguments)]
fn cg(
    k: &StencilMatrix,
    b: &[f64],
    idx: &[usize],
    inv: &[f64],
    bnorm: f64,
    tol: f64,
    max_iter: usize,
    x: &mut [f64],
) -> Result<KrylovOutcome> {
    let len = b.len();
    let mut r = vec![0.0; len];
    let mut z = vec![0.0; len];
    let mut p = vec![0.0; len];
    let mut q = vec![0.0; len];
    for &i in idx {
        r[i] = b[i];
        z[i] = inv[i] * r[i];
        p[i] = z[i];
    }
    let mut rz = dot(&r, &z, idx);
    let mut history = Vec::new();
    for it in 1..=max_iter {
        k.apply_interior(&p, idx, &mut q);
        let pq = dot(&p, &q, idx);
        if pq <= 0.0 {
            return Err(Error::ConvergenceFailure {
                iterations: it,
                last: history.last().copied().unwrap_or(1.0),
                history,
            });
        }
        let alpha = rz / pq;
        for &i in idx {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let res = dot(&r, &r, idx).sqrt() / bnorm;
        history.push(res);
        if res <= tol {
            return Ok(KrylovOutcome {
                residual: res,
                iterations: it,
            });
        }
        for &i in idx {
            z[i] = inv[i] * r[i];
        }
        let rz_new = dot(&r, &z, idx);
        let beta = rz_new / rz;
        rz = rz_new;
        for &i in idx {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iter,
        last: history.last().copied().unwrap_or(1.0),
        history,
    })
}

#[allow(clippy::too_many_arguments)]
fn bicgstab(
    k: &StencilMatrix,
    b: &[f64],
    idx: &[usize],
    inv: &[f64],
    bnorm: f64,
    tol: f64,
    max_iter: usize,
    x: &mut [f64],
) -> Result<KrylovOutcome> {
    let len = b.len();
    let mut r = vec![0.0; len];
    for &i in idx {
        r[i] = b[i];
    }
    let r_hat = r.clone();
    let mut p = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut ph = vec![0.0; len];
    let mut s = vec![0.0; len];
    let mut sh = vec![0.0; len];
    let mut t = vec![0.0; len];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut history = Vec::new();
    let fail = |iterations, history: Vec<f64>| Error::ConvergenceFailure {
        iterations,
        last: history.last().copied().unwrap_or(1.0),
        history,
    };
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r, idx);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(fail(it, history));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for &i in idx {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            ph[i] = inv[i] * p[i];
        }
        k.apply_interior(&ph, idx, &mut v);
        let rv = dot(&r_hat, &v, idx);
        if rv == 0.0 {
            return Err(fail(it, history));
        }
        alpha = rho / rv;
        for &i in idx {
            s[i] = r[i] - alpha * v[i];
        }
        let sres = dot(&s, &s, idx).sqrt() / bnorm;
        if sres <= tol {
            for &i in idx {
                x[i] += alpha * ph[i];
            }
            history.push(sres);
            return Ok(KrylovOutcome {
                residual: sres,
                iterations: it,
            });
        }
        for &i in idx {
            sh[i] = inv[i] * s[i];
        }
        k.apply_interior(&sh, idx, &mut t);
        let tt = dot(&t, &t, idx);
        omega = if tt > 0.0 { dot(&t, &s, idx) / tt } else { 0.0 };
        for &i in idx {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = dot(&r, &r, idx).sqrt() / bnorm;
        history.push(res);
        if res <= tol {
            return Ok(KrylovOutcome {
                residual: res,
                iterations: it,
            });
        }
    }
    Err(fail(max_iter, history))
}
