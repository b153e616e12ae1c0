//! Stopping-time construction of sparse families and the two sides of the
//! sparse bound `|∫ φ_Q ∇u·g| ≤ C Σ_P |P| osc_{6P}(F) ‖g‖_{h_r^p(4P)}`.

mod family;
mod pou;
mod stopping;

pub use family::{run_lengths, verify_sparse, SparseFamily, SparseReport};
pub use pou::{partition_of_unity, PartitionOfUnity, MAX_GENERATION_GAP};
pub use stopping::{stopping_cubes, StoppingCubes, StoppingOptions, C0_MAX};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::{integrate, mean_over, Field, FieldKind, GridSpec, Source};
use crate::grid::Cube;
use crate::maximal::{eta, eta_derivatives, multi_indices};
use crate::norms::{hardy_r_norm_with, Extension, HardyOptions};

/// Scaled standard profile `a Π η((x_i - c_i)/s)` on `Q(c, s)`, with `a`
/// the largest amplitude such that `|∂^γφ| ≤ (N ℓ)^{-|γ|}` for `|γ| ≤ N0`.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileBump {
    pub support: Cube,
    pub amplitude: f64,
    pub scale: f64,
    pub n0: u32,
}

impl ProfileBump {
    pub fn new(support: Cube, scale: f64, n0: u32) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(invalid("bump scale N must be positive"));
        }
        // sup |η^{(k)}| on a fine sample of (-1, 1).
        const PTS: usize = 20001;
        let order = n0 as usize;
        let mut sup = vec![0.0f64; order + 1];
        for i in 1..PTS - 1 {
            let t = -1.0 + 2.0 * i as f64 / (PTS - 1) as f64;
            for (k, d) in eta_derivatives(t, order).iter().enumerate() {
                sup[k] = sup[k].max(d.abs());
            }
        }
        // |∂^γφ| ≤ a Π sup_{γ_i} s^{-|γ|}; require ≤ (N 2s)^{-|γ|}.
        let worst = multi_indices(support.n(), n0)
            .iter()
            .map(|g| {
                let ord: u32 = g.iter().sum();
                (2.0 * scale).powi(ord as i32) * g.iter().map(|&k| sup[k as usize]).product::<f64>()
            })
            .fold(0.0, f64::max);
        Ok(ProfileBump {
            support,
            amplitude: 1.0 / worst,
            scale,
            n0,
        })
    }

    pub fn field(&self, spec: GridSpec) -> Result<Field> {
        Field::sample(spec, FieldKind::Scalar, self)
    }
}

impl Source for ProfileBump {
    fn n(&self) -> usize {
        self.support.n()
    }
    fn comps(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let s = self.support.half_side();
        out[0] = self.amplitude
            * x.iter()
                .enumerate()
                .map(|(a, xa)| eta((xa - self.support.center()[a]) / s))
                .product::<f64>();
    }
}

/// `|∫_{2Q} φ_Q ∇u·g|` by nodal quadrature.
pub fn pairing_lhs(phi_q: &Field, u_grad: &Field, g: &Field, q: &Cube) -> Result<f64> {
    let two = q.dilate(2.0)?;
    for f in [phi_q, u_grad, g] {
        if !f.spec().domain.contains_cube(&two, 1e-9 * two.side()) {
            return Err(Error::DomainMargin(format!(
                "data on {:?} do not cover 2Q",
                f.spec().domain
            )));
        }
    }
    if phi_q.spec() != u_grad.spec() || g.spec() != u_grad.spec() {
        return Err(invalid("pairing data must share one grid"));
    }
    let dot = u_grad.dot(g)?;
    let prod = dot.scale_by(phi_q)?;
    Ok(integrate(&prod, Some(&two))[0].abs())
}

/// `(⨍_{P} |F - ⟨F⟩_P|²)^{1/2}` on a local grid over `P`.
pub fn oscillation(f: &Field, p: &Cube) -> Result<f64> {
    let dom = &f.spec().domain;
    if !dom.contains_cube(p, 1e-9 * p.side()) {
        return Err(Error::DomainMargin(format!(
            "data on {dom:?} do not cover {p:?}"
        )));
    }
    let local = match f.restrict(p) {
        Some(r) if r.spec().m >= 9 => r,
        _ => f.resample(GridSpec::new(p.clone(), 33)?)?,
    };
    let mean = mean_over(&local, p)?;
    let centred: Vec<f64> = local
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v - mean[i % local.comps()])
        .collect();
    let c = Field::new_unchecked(local.spec().clone(), local.kind(), centred);
    let sq = c.dot(&c)?;
    Ok(mean_over(&sq, p)?[0].max(0.0).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct RhsTerm {
    pub volume: f64,
    pub oscillation: f64,
    pub hardy: f64,
}

/// `Σ_P |P| osc_{6P}(F) ‖g‖_{h_r^p(4P)}`, with the per-cube factors.
pub fn sparse_rhs(
    s: &SparseFamily,
    f: &Field,
    g: &Field,
    p: f64,
    opts: &HardyOptions,
) -> Result<(f64, Vec<RhsTerm>)> {
    let mut terms = Vec::with_capacity(s.len());
    let mut total = 0.0;
    for cube in &s.cubes {
        let osc = oscillation(f, &cube.dilate(6.0)?)?;
        let hn = if osc == 0.0 {
            0.0
        } else {
            hardy_r_norm_with(g, &cube.dilate(4.0)?, p, &Extension::ALL, opts)?.value
        };
        total += cube.volume() * osc * hn;
        terms.push(RhsTerm {
            volume: cube.volume(),
            oscillation: osc,
            hardy: hn,
        });
    }
    Ok((total, terms))
}

#[derive(Clone, Debug, Serialize)]
pub struct SparseBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs` (0 when both vanish).
    pub c_emp: f64,
    pub family_size: usize,
    pub epsilon: f64,
    pub c0: Vec<f64>,
    pub levels: usize,
    pub report: SparseReport,
    #[serde(skip)]
    pub family: SparseFamily,
}

#[derive(Clone, Debug)]
pub struct SparseOptions {
    pub stopping: StoppingOptions,
    pub hardy: HardyOptions,
    /// Children recurse only when their `6P` grid has at least this many
    /// cells per side (and a multiple of 12).
    pub min_child_cells: usize,
    pub max_levels: usize,
}

impl Default for SparseOptions {
    fn default() -> Self {
        SparseOptions {
            stopping: StoppingOptions::default(),
            hardy: HardyOptions::default(),
            min_child_cells: 96,
            max_levels: 8,
        }
    }
}

/// Builds the sparse family by iterating the stopping construction from `Q`
/// and evaluates both sides of the bound.
///
/// The stopping threshold uses `1 - ε`, so `E_Q = Q \ ⋃G(Q)` keeps at
/// least `ε|Q|`. Children reuse the restriction of the top-level data;
/// they recurse only where their `6P` is node aligned and fine enough.
#[allow(clippy::too_many_arguments)]
pub fn sparse_bound(
    u_grad: &Field,
    f: &Field,
    g: &Field,
    phi_q: &Field,
    q: &Cube,
    eps: f64,
    p: f64,
    opts: &SparseOptions,
) -> Result<SparseBound> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let stop_eps = 1.0 - eps;
    let mut family = SparseFamily::new(eps);
    let mut c0s = Vec::new();
    let mut levels = 0;
    let mut frontier = vec![q.clone()];
    while !frontier.is_empty() && levels < opts.max_levels {
        levels += 1;
        let mut next = Vec::new();
        for cube in frontier {
            let children = if cube.approx_eq(q, 1e-12 * q.side()) {
                let st = stopping_cubes(u_grad, g, q, phi_q, stop_eps, p, &opts.stopping)?;
                c0s.push(st.c0);
                st.whitney.cubes
            } else if let Some(local) = child_data(u_grad, g, &cube, opts)? {
                let bump = ProfileBump::new(cube.dilate(2.0)?, 1.0, crate::maximal::DEFAULT_N0)?
                    .field(local.0.spec().clone())?;
                let st = stopping_cubes(&local.0, &local.1, &cube, &bump, stop_eps, p, &opts.stopping)?;
                c0s.push(st.c0);
                st.whitney.cubes
            } else {
                Vec::new()
            };
            family.push(cube, children.clone());
            next.extend(children);
        }
        frontier = next;
    }
    for cube in frontier {
        family.push(cube, Vec::new());
    }
    let report = verify_sparse(&family);
    let lhs = pairing_lhs(phi_q, u_grad, g, q)?;
    let (rhs, _) = sparse_rhs(&family, f, g, p, &opts.hardy)?;
    let c_emp = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(SparseBound {
        lhs,
        rhs,
        c_emp,
        family_size: family.len(),
        epsilon: eps,
        c0: c0s,
        levels,
        report,
        family,
    })
}

fn child_data(u_grad: &Field, g: &Field, cube: &Cube, opts: &SparseOptions) -> Result<Option<(Field, Field)>> {
    let six = cube.dilate(6.0)?;
    let (Some(du), Some(gg)) = (u_grad.restrict(&six), g.restrict(&six)) else {
        return Ok(None);
    };
    let cells = du.spec().m - 1;
    if cells < opts.min_child_cells || cells % 12 != 0 {
        return Ok(None);
    }
    Ok(Some((du, gg)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_bump_normalization() {
        let b = ProfileBump::new(Cube::unit(2).unwrap(), 1.0, 2).unwrap();
        // γ = (2, 0) dominates: 4 sup|η''| sup|η|.
        assert!(b.amplitude > 0.0 && b.amplitude < 1.0);
        let spec = GridSpec::new(Cube::unit(2).unwrap(), 33).unwrap();
        let f = b.field(spec).unwrap();
        assert!(f.values().iter().all(|&v| v >= 0.0 && v <= b.amplitude * eta(0.0).powi(2) + 1e-15));
    }

    #[test]
    fn trivial_pairings() {
        let q = Cube::unit(2).unwrap();
        let spec = GridSpec::new(q.dilate(2.0).unwrap(), 33).unwrap();
        let phi = ProfileBump::new(q.dilate(2.0).unwrap(), 1.0, 2).unwrap().field(spec.clone()).unwrap();
        let du = Field::from_fn(spec.clone(), FieldKind::Vector, |_, o| {
            o[0] = 1.0;
            o[1] = 0.0;
        })
        .unwrap();
        let zero = Field::zeros(spec, FieldKind::Vector);
        assert_eq!(pairing_lhs(&phi, &du, &zero, &q).unwrap(), 0.0);
        let lhs = pairing_lhs(&phi, &du, &du, &q).unwrap();
        let mass = integrate(&phi, None)[0];
        assert!((lhs - mass).abs() < 1e-12);
    }

    #[test]
    fn oscillation_of_linear_field() {
        // F = (x₁, 0) on a cube of half side s: ⨍|x₁ - c|² = s²/3.
        let p = Cube::new(vec![0.4, 0.6], 0.25).unwrap();
        let spec = GridSpec::new(Cube::unit(2).unwrap(), 65).unwrap();
        let f = Field::from_fn(spec, FieldKind::Vector, |x, o| {
            o[0] = x[0];
            o[1] = 0.0;
        })
        .unwrap();
        let osc = oscillation(&f, &p).unwrap();
        let want = 0.25 / 3f64.sqrt();
        assert!((osc - want).abs() < 1e-3, "{osc} vs {want}");
        let e = SparseFamily::new(0.5);
        assert_eq!(sparse_rhs(&e, &f, &f, 0.8, &HardyOptions::default()).unwrap().0, 0.0);
    }
}
