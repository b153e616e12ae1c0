//! Local Hardy norms, Campanato seminorms and the duality pairing check.

mod campanato;
mod hardy;

pub use campanato::campanato;
pub use hardy::{
    check_p, hardy_norm, hardy_r_norm, hardy_r_norm_with, hardy_z_norm, hardy_z_norm_with,
    Extension, HardyKind, HardyNormResult, HardyOptions,
};

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::field::{mean_over, Field};
use crate::grid::Cube;

/// `α = n(1/p - 1)`.
pub fn alpha_for(n: usize, p: f64) -> Result<f64> {
    check_p(n, p)?;
    Ok(n as f64 * (1.0 / p - 1.0))
}

/// Rejects an `(α, p)` pair off the line `α = n(1/p - 1)`.
pub fn check_alpha_p(n: usize, alpha: f64, p: f64) -> Result<()> {
    let want = alpha_for(n, p)?;
    if (alpha - want).abs() > 1e-9 {
        return Err(invalid(format!(
            "alpha = {alpha} does not match n(1/p - 1) = {want} for p = {p}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityGap {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
    /// `rhs = 0 < lhs`: impossible for exact norms, so a bug or
    /// under-resolution.
    pub violation: bool,
    pub alpha: f64,
    pub campanato: f64,
    pub hardy: f64,
}

/// `|⨍_Q g·f|` against `ℓ^α ‖g‖_{Λ_b^α} ‖f‖_{h_a^p}` with `a = kind` and
/// `b` the other kind.
pub fn duality_gap(
    g: &Field,
    f: &Field,
    q: &Cube,
    p: f64,
    kind: HardyKind,
    opts: &HardyOptions,
) -> Result<DualityGap> {
    if g.kind() != f.kind() {
        return Err(invalid("pairing needs data of one kind"));
    }
    let alpha = alpha_for(q.n(), p)?;
    let gq = campanato::on_cube(g, q)?;
    let fq = campanato::on_cube(f, q)?;
    let fq = if fq.spec() == gq.spec() {
        fq
    } else {
        fq.resample(gq.spec().clone())?
    };
    let lhs = mean_over(&gq.dot(&fq)?, q)?[0].abs();
    let lam = campanato(g, q, alpha, kind.other())?;
    let hp = hardy_norm(kind, f, q, p, opts)?.value;
    let rhs = q.side().powf(alpha) * lam * hp;
    let violation = rhs == 0.0 && lhs > 0.0;
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(DualityGap {
        lhs,
        rhs,
        ratio,
        violation,
        alpha,
        campanato: lam,
        hardy: hp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    #[test]
    fn alpha_bookkeeping() {
        assert!((alpha_for(2, 0.8).unwrap() - 0.5).abs() < 1e-15);
        assert!(check_alpha_p(2, 0.5, 0.8).is_ok());
        assert!(check_alpha_p(2, 0.4, 0.8).is_err());
        assert!(alpha_for(3, 0.7).is_err());
    }

    #[test]
    fn zero_pairing() {
        let q = Cube::unit(2).unwrap();
        let spec = GridSpec::new(q.clone(), 33).unwrap();
        let g = Field::scalar_fn(spec.clone(), |x| x[0].sin()).unwrap();
        let f = Field::scalar_fn(spec, |_| 0.0).unwrap();
        let d = duality_gap(&g, &f, &q, 0.8, HardyKind::Z, &HardyOptions::default()).unwrap();
        assert_eq!(d.lhs, 0.0);
        assert_eq!(d.ratio, 0.0);
        assert!(!d.violation);
    }

    #[test]
    fn constant_g() {
        // Λ_z of a constant is positive, so pairing against h_r data is
        // finite. Λ_r of a constant vanishes, so a mean-carrying f paired in
        // h_z trips the violation flag: the seminorm inequality cannot hold
        // there.
        let q = Cube::unit(2).unwrap();
        let spec = GridSpec::new(q.clone(), 33).unwrap();
        let g = Field::scalar_fn(spec.clone(), |_| 1.0).unwrap();
        let f = Field::scalar_fn(spec, |x| 1.0 + x[0] * x[1]).unwrap();
        let opts = HardyOptions::default();
        let d = duality_gap(&g, &f, &q, 0.8, HardyKind::R, &opts).unwrap();
        assert!(d.ratio.is_finite() && d.ratio > 0.0);
        let d = duality_gap(&g, &f, &q, 0.8, HardyKind::Z, &opts).unwrap();
        assert!(d.violation);
    }
}
