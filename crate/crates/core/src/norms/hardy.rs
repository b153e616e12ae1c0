//! Local Hardy norms on a cube `Q` of side `ℓ`.
//!
//! `‖f‖_{h_z^p(Q)} = ((ℓ/2)^{-n} ∫ M_ℓ(1_Q f)^p)^{1/p}` and the `h_r^p`
//! norm replaces `1_Q f` by the best of a few explicit extensions. The
//! maximal scale is `ℓ` (not the half side): that is what the change of
//! variables from the unit cube produces for `M_2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{integrate_norm_pow, Field, FieldKind, GridSpec, Source};
use crate::grid::Cube;
use crate::maximal::{smooth_maximal, smooth_step};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardyKind {
    Z,
    R,
}

impl HardyKind {
    pub fn other(self) -> HardyKind {
        match self {
            HardyKind::Z => HardyKind::R,
            HardyKind::R => HardyKind::Z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    Zero,
    /// Even reflection across every face, truncated outside `2Q`.
    EvenReflection,
    /// Even reflection times a smooth cutoff falling from 1 on `Q` to 0 at
    /// distance `ℓ/4`.
    SmoothReflection,
}

impl Extension {
    pub const ALL: [Extension; 3] = [
        Extension::Zero,
        Extension::EvenReflection,
        Extension::SmoothReflection,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Extension::Zero => "zero",
            Extension::EvenReflection => "even-reflection",
            Extension::SmoothReflection => "smooth-reflection",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HardyNormResult {
    pub value: f64,
    pub kind: HardyKind,
    pub p: f64,
    /// Minimizing candidate for the `r` kind.
    pub extension_used: Option<Extension>,
    /// Every candidate evaluated, in input order.
    pub candidates: Vec<(Extension, f64)>,
}

#[derive(Clone, Debug)]
pub struct HardyOptions {
    /// Working-grid cells across `Q` (even, clamped to `[8, 128]`). A
    /// grid field whose own spacing gives an even count in range overrides
    /// this so nodes coincide.
    pub cells: usize,
}

impl Default for HardyOptions {
    fn default() -> Self {
        HardyOptions { cells: 32 }
    }
}

pub fn check_p(n: usize, p: f64) -> Result<()> {
    let lo = n as f64 / (n as f64 + 1.0);
    if !(p > lo && p <= 1.0) {
        return Err(invalid(format!("p must lie in ({lo:.4}, 1], got {p}")));
    }
    Ok(())
}

fn working_cells(f: &dyn Source, q: &Cube, opts: &HardyOptions) -> usize {
    let clamp = |c: usize| -> usize {
        let c = c.clamp(8, 128);
        c + (c % 2)
    };
    if let Some(g) = f.native_grid() {
        let t = q.side() / g.h();
        let c = t.round();
        let aligned = (t - c).abs() < 1e-7
            && (0..q.n()).all(|a| g.node_at(a, q.lower(a), 1e-7).is_some());
        if aligned && (8.0..=128.0).contains(&c) && (c as usize) % 2 == 0 {
            return c as usize;
        }
    }
    clamp(opts.cells)
}

fn check_cover(f: &dyn Source, q: &Cube) -> Result<()> {
    if let Some(s) = f.support() {
        if !s.contains_cube(q, 1e-9 * q.side()) {
            return Err(Error::DomainMargin(format!(
                "data on {s:?} does not cover the cube {q:?}"
            )));
        }
    }
    if f.n() != q.n() {
        return Err(invalid("data and cube dimensions differ"));
    }
    Ok(())
}

/// Fraction of the dual cell of coordinate `x` (spacing `h`) inside
/// `[lo, hi]`; nodes on a face get one half.
fn dual_fraction(x: f64, lo: f64, hi: f64, h: f64) -> f64 {
    let a = (x - 0.5 * h).max(lo);
    let b = (x + 0.5 * h).min(hi);
    ((b - a) / h).clamp(0.0, 1.0)
}

/// Even reflection of `x` into the closed cube along every axis; `None`
/// outside `2Q`.
fn reflect(q: &Cube, x: &[f64], out: &mut [f64]) -> bool {
    let s = q.half_side();
    for a in 0..q.n() {
        let c = q.center()[a];
        let d = x[a] - c;
        let ad = d.abs();
        if ad > 2.0 * s {
            return false;
        }
        let folded = if ad <= s { ad } else { 2.0 * s - ad };
        out[a] = c + d.signum() * folded;
    }
    true
}

/// Extended data on a grid over `N·Q`.
fn extended_field(
    f: &dyn Source,
    q: &Cube,
    ext: Extension,
    dilation: f64,
    cells_q: usize,
) -> Result<Field> {
    let n = q.n();
    let comps = f.comps();
    let dom = q.dilate(dilation)?;
    let m = (dilation * cells_q as f64).round() as usize + 1;
    let spec = GridSpec::new(dom, m)?;
    let h = spec.h();
    let mut vals = vec![0.0; spec.len() * comps];
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut v = vec![0.0; comps];
    for idx in 0..spec.len() {
        spec.point(idx, &mut x);
        let w = match ext {
            Extension::Zero => {
                let mut w = 1.0;
                for a in 0..n {
                    w *= dual_fraction(x[a], q.lower(a), q.upper(a), h);
                }
                if w == 0.0 {
                    continue;
                }
                y.copy_from_slice(&x);
                w
            }
            Extension::EvenReflection => {
                if !reflect(q, &x, &mut y) {
                    continue;
                }
                // The reflected data stops at the faces of 2Q.
                let big = q.dilate(2.0)?;
                let mut w = 1.0;
                for a in 0..n {
                    w *= dual_fraction(x[a], big.lower(a), big.upper(a), h);
                }
                w
            }
            Extension::SmoothReflection => {
                if !reflect(q, &x, &mut y) {
                    continue;
                }
                let width = 0.25 * q.side();
                let mut w = 1.0;
                for a in 0..n {
                    let d = (x[a] - q.center()[a]).abs() - q.half_side();
                    w *= smooth_step(d, width);
                }
                w
            }
        };
        if w == 0.0 {
            continue;
        }
        // Snap to the closed cube so sources defined only on Q accept it.
        for a in 0..n {
            y[a] = y[a].clamp(q.lower(a), q.upper(a));
        }
        f.eval(&y, &mut v);
        for c in 0..comps {
            vals[idx * comps + c] = w * v[c];
        }
    }
    let kind = if comps == 1 {
        FieldKind::Scalar
    } else if comps == n {
        FieldKind::Vector
    } else {
        FieldKind::Matrix
    };
    Field::new(spec, kind, vals)
}

/// `((ℓ/2)^{-n} ∫ M_ℓ(g)^p)^{1/p}` for extended data `g`.
fn hardy_functional(g: &Field, q: &Cube, p: f64) -> Result<f64> {
    let mf = smooth_maximal(g, q.side())?;
    let integral = integrate_norm_pow(&mf, None, p);
    Ok((integral / q.half_side().powi(q.n() as i32)).powf(1.0 / p))
}

pub fn hardy_z_norm_with(f: &dyn Source, q: &Cube, p: f64, opts: &HardyOptions) -> Result<HardyNormResult> {
    check_p(q.n(), p)?;
    check_cover(f, q)?;
    let cells = working_cells(f, q, opts);
    let g = extended_field(f, q, Extension::Zero, 2.0, cells)?;
    let value = hardy_functional(&g, q, p)?;
    Ok(HardyNormResult {
        value,
        kind: HardyKind::Z,
        p,
        extension_used: None,
        candidates: vec![(Extension::Zero, value)],
    })
}

pub fn hardy_z_norm(f: &dyn Source, q: &Cube, p: f64) -> Result<HardyNormResult> {
    hardy_z_norm_with(f, q, p, &HardyOptions::default())
}

/// Minimum of the `h^p` functional over the candidate extensions: an upper
/// bound for the infimum over all extensions.
pub fn hardy_r_norm_with(
    f: &dyn Source,
    q: &Cube,
    p: f64,
    extensions: &[Extension],
    opts: &HardyOptions,
) -> Result<HardyNormResult> {
    if extensions.is_empty() {
        return Err(invalid("extension candidate list is empty"));
    }
    check_p(q.n(), p)?;
    check_cover(f, q)?;
    let cells = working_cells(f, q, opts);
    let mut candidates = Vec::with_capacity(extensions.len());
    for &e in extensions {
        let v = match e {
            Extension::Zero => hardy_z_norm_with(f, q, p, opts)?.value,
            _ => {
                let g = extended_field(f, q, e, 3.0, cells)?;
                hardy_functional(&g, q, p)?
            }
        };
        candidates.push((e, v));
    }
    let (best, value) = candidates
        .iter()
        .copied()
        .fold((candidates[0].0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    Ok(HardyNormResult {
        value,
        kind: HardyKind::R,
        p,
        extension_used: Some(best),
        candidates,
    })
}

pub fn hardy_r_norm(f: &dyn Source, q: &Cube, p: f64, extensions: &[Extension]) -> Result<HardyNormResult> {
    hardy_r_norm_with(f, q, p, extensions, &HardyOptions::default())
}

pub fn hardy_norm(
    kind: HardyKind,
    f: &dyn Source,
    q: &Cube,
    p: f64,
    opts: &HardyOptions,
) -> Result<HardyNormResult> {
    match kind {
        HardyKind::Z => hardy_z_norm_with(f, q, p, opts),
        HardyKind::R => hardy_r_norm_with(f, q, p, &Extension::ALL, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstSource, FnSource};

    #[test]
    fn zero_data() {
        let q = Cube::unit(2).unwrap();
        let f = ConstSource::new(2, vec![0.0]);
        assert_eq!(hardy_z_norm(&f, &q, 0.8).unwrap().value, 0.0);
        let r = hardy_r_norm(&f, &q, 0.8, &Extension::ALL).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(hardy_r_norm(&f, &q, 0.8, &[]).is_err());
        assert!(hardy_z_norm(&f, &q, 0.6).is_err());
    }

    #[test]
    fn r_never_exceeds_z() {
        let q = Cube::new(vec![0.3, -0.2], 0.4).unwrap();
        let f = FnSource::new(2, 1, |x: &[f64], o: &mut [f64]| o[0] = (3.0 * x[0]).sin() + x[1]);
        let z = hardy_z_norm(&f, &q, 0.9).unwrap().value;
        let r = hardy_r_norm(&f, &q, 0.9, &Extension::ALL).unwrap().value;
        assert!(r <= z + 1e-12);
    }

    #[test]
    fn smooth_step_is_a_partition() {
        assert_eq!(smooth_step(-1.0, 1.0), 1.0);
        assert_eq!(smooth_step(2.0, 1.0), 0.0);
        assert!((smooth_step(0.5, 1.0) - 0.5).abs() < 1e-15);
    }
}
