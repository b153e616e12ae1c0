//! Cube-size calibration of the L^q recursion.

use serde::Serialize;

use super::{aligned_grid, run_iteration, IterationOptions, IterationTrace, Variant};
use crate::error::{invalid, Error, Result};
use crate::field::{ConstSource, Field, FieldKind, Source};
use crate::grid::Cube;
use crate::solver::{solve_sources, BoundaryCondition};

/// `x ↦ f((x - c)/ℓ)`: unit-scale data carried to a cube of side `ℓ`, so
/// instances on nested cubes differ only through the coefficient.
pub struct Rescaled<'a> {
    pub inner: &'a dyn Source,
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Source for Rescaled<'_> {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn comps(&self) -> usize {
        self.inner.comps()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let y: Vec<f64> = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) / self.scale)
            .collect();
        self.inner.eval(&y, out)
    }
}

/// Solves for `u` on an aligned grid over `3Q_0` (side `side`, centred at
/// `center`) with boundary values from `boundary`, then runs the L^q
/// recursion with data `g`. Both are given in unit coordinates.
#[allow(clippy::too_many_arguments)]
pub fn decay_at_side(
    a: &dyn Source,
    center: &[f64],
    side: f64,
    g: &dyn Source,
    boundary: &dyn Source,
    q: f64,
    solve_m: usize,
    opts: &IterationOptions,
) -> Result<IterationTrace> {
    let q0 = Cube::new(center.to_vec(), 0.5 * side)?;
    let spec = aligned_grid(&q0, Variant::Lq, solve_m)?;
    let bsrc = Rescaled {
        inner: boundary,
        center: center.to_vec(),
        scale: side,
    };
    let bc = BoundaryCondition::Inherited(Field::sample(spec.clone(), FieldKind::Scalar, &bsrc)?);
    let zero = ConstSource::new(q0.n(), vec![0.0; q0.n()]);
    let sol = solve_sources(&spec, a, &zero, &bc, opts.tol)?;
    let gsrc = Rescaled {
        inner: g,
        center: center.to_vec(),
        scale: side,
    };
    run_iteration(a, &sol.u, &gsrc, &q0, Variant::Lq, q, opts)
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaCalibration {
    /// Largest tested side with `decay_ratio < target`.
    pub delta: f64,
    pub target: f64,
    /// `(side, decay_ratio)` in evaluation order.
    pub history: Vec<(f64, f64)>,
}

/// Bisection on `log ℓ(Q_0)` over `[lo, hi]` for the largest side whose
/// decay ratio falls below `target`. The bracket keeps
/// `ratio(lo) < target ≤ ratio(hi)`; the answer is the final `lo`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_delta(
    a: &dyn Source,
    center: &[f64],
    g: &dyn Source,
    boundary: &dyn Source,
    q: f64,
    solve_m: usize,
    opts: &IterationOptions,
    target: f64,
    bracket: (f64, f64),
    steps: usize,
) -> Result<DeltaCalibration> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && lo < hi) {
        return Err(invalid("side bracket must satisfy 0 < lo < hi"));
    }
    let mut history = Vec::new();
    let ratio = |s: f64, h: &mut Vec<(f64, f64)>| -> Result<f64> {
        let r = decay_at_side(a, center, s, g, boundary, q, solve_m, opts)?.decay_ratio;
        h.push((s, r));
        Ok(r)
    };
    if ratio(hi, &mut history)? < target {
        return Ok(DeltaCalibration {
            delta: hi,
            target,
            history,
        });
    }
    if ratio(lo, &mut history)? >= target {
        return Err(Error::TooCoarse(format!(
            "decay ratio stays above {target} down to side {lo:.3e}"
        )));
    }
    for _ in 0..steps {
        let mid = (lo * hi).sqrt();
        if ratio(mid, &mut history)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DeltaCalibration {
        delta: lo,
        target,
        history,
    })
}
