//! The frozen-coefficient recursion.
//!
//! One step replaces `A` on each child `3P` by its mean `A_P` and splits a
//! pairing `∫ B∇u·g` into a frozen part `I` and a remainder
//! `II = Σ_P ∫ (A_P - A)∇u·∇T_P`, where `T_P` is the zero-boundary
//! `A_P`-projection of the cut-off data. On a grid whose cubes `3P` sit on
//! nodes the split is an exact algebraic identity of the discrete scheme:
//! `T_P` vanishes on `∂3P`, `u` is discretely `A`-harmonic and `u_P` is
//! discretely `A_P`-harmonic, so nothing but solver tolerance separates the
//! two sides. The recursion itself re-grids every `3P`, trading
//! interpolation error (recorded per level) for depth.

mod chain;

pub use chain::{calibrate_delta, decay_at_side, DeltaCalibration, Rescaled};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::linalg::transpose;
use crate::field::{
    cell_samples, holder_seminorm, integrate_norm_pow, lp_mean, measure, node_weights, Field,
    FieldKind, GridSpec, Source,
};
use crate::grid::{subdivide_f, Cube};
use crate::maximal::smooth_step;
use crate::norms::{alpha_for, hardy_z_norm_with, HardyOptions};
use crate::solver::{cell_gradients, nodal_gradient, Assembly, DEFAULT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Children `F(3Q)` of side `ℓ/9`, smooth cut-offs, `u` on `4Q`.
    Holder,
    /// Children `F(Q)` of side `ℓ/8`, indicator cut-offs, `u` on `3Q`.
    Lq,
}

impl Variant {
    pub fn ratio(self) -> u32 {
        match self {
            Variant::Holder => 27,
            Variant::Lq => 8,
        }
    }

    /// The cube that must carry `u`.
    pub fn enclosing(self, q: &Cube) -> Result<Cube> {
        match self {
            Variant::Holder => q.dilate(4.0),
            Variant::Lq => q.dilate(3.0),
        }
    }

    /// The cube partitioned into children.
    pub fn partitioned(self, q: &Cube) -> Result<Cube> {
        match self {
            Variant::Holder => q.dilate(3.0),
            Variant::Lq => Ok(q.clone()),
        }
    }

    pub fn children(self, q: &Cube) -> Result<Vec<Cube>> {
        subdivide_f(&self.partitioned(q)?, self.ratio())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "holder" => Ok(Variant::Holder),
            "lq" => Ok(Variant::Lq),
            _ => Err(invalid(format!("unknown iteration variant '{s}'"))),
        }
    }
}

/// Cut-off attached to child `P` of the partitioned cube `part`.
#[derive(Clone, Debug)]
struct Cut {
    variant: Variant,
    part: Cube,
    child: Cube,
}

fn chi(t: f64) -> f64 {
    smooth_step(t.abs() - 1.0, 1.0)
}

impl Cut {
    /// `ψ_P·1_part` (Hölder) or `1_P` (L^q). The Hölder bumps come from a
    /// tensor lattice, so `Σ_P ψ̃_P` factors into per-axis sums.
    fn value(&self, x: &[f64]) -> f64 {
        match self.variant {
            Variant::Lq => {
                if self.child.contains_half_open(x) {
                    1.0
                } else {
                    0.0
                }
            }
            Variant::Holder => {
                if !self.part.contains_half_open(x) {
                    return 0.0;
                }
                let t = self.child.half_side();
                let k = self.variant.ratio() as usize;
                let mut v = 1.0;
                for (a, &xa) in x.iter().enumerate() {
                    let own = chi((xa - self.child.center()[a]) / t);
                    if own == 0.0 {
                        return 0.0;
                    }
                    let lo = self.part.lower(a);
                    let s: f64 = (0..k).map(|j| chi((xa - lo - (2 * j + 1) as f64 * t) / t)).sum();
                    v *= own / s;
                }
                v
            }
        }
    }
}

/// Mean of per-cell matrices; constant input returns that constant exactly.
fn mean_matrix(cell_a: &[f64], nn: usize) -> Vec<f64> {
    let cells = cell_a.len() / nn;
    let first = &cell_a[..nn];
    let mut acc = vec![0.0; nn];
    for c in cell_a.chunks(nn) {
        for k in 0..nn {
            acc[k] += c[k] - first[k];
        }
    }
    (0..nn).map(|k| first[k] + acc[k] / cells as f64).collect()
}

fn mat_t_vec(m: &[f64], v: &[f64], n: usize, out: &mut [f64]) {
    for j in 0..n {
        out[j] = (0..n).map(|i| m[i * n + j] * v[i]).sum();
    }
}

/// Per-child record of one split.
#[derive(Clone, Debug, Serialize)]
pub struct SplitCube {
    pub cube: Cube,
    /// `A_P = ⨍_{3P} A`, row-major.
    pub a_p: Vec<f64>,
    pub term_i: f64,
    /// `∫ (A_P - A)∇u·∇T_P`.
    pub term_ii: f64,
    /// `(A - A_P)∇u` at the nodes of `3P`.
    #[serde(skip)]
    pub weighted_grad_u: Field,
    /// `∇T_{3P,A_P}(cut·Bᵀg)` at the nodes of `3P`.
    #[serde(skip)]
    pub grad_t: Field,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingSplit {
    pub variant: Variant,
    /// `∫ 1_S B∇u·g` with `S = 3Q` (Hölder) or `Q` (L^q), computed on the
    /// grid of `u` without splitting.
    pub direct: f64,
    pub term_i: f64,
    pub term_ii_sum: f64,
    pub cubes: Vec<SplitCube>,
    pub recombination_error: f64,
    /// Recombination error relative to the largest of `|direct|`, `|I|`
    /// and `Σ|II_P|`.
    pub relative_error: f64,
}

/// A grid with `m` nodes per axis over a cube centred at `Q`'s centre that
/// covers the enclosing cube and puts every child face on a node.
pub fn aligned_grid(q: &Cube, variant: Variant, m: usize) -> Result<GridSpec> {
    if m < 3 || m % 2 == 0 {
        return Err(invalid(format!("node count must be odd and at least 3, got {m}")));
    }
    let part = variant.partitioned(q)?;
    let child = part.side() / variant.ratio() as f64;
    let need = variant.enclosing(q)?.half_side();
    let half_cells = (m - 1) / 2;
    // With `k` cells per child side, `3P` has `3k` cells and needs `k` even
    // for an odd subgrid; the partition faces sit `k·13.5` (Hölder) or
    // `4k` (L^q) cells from the centre, integral for even `k`.
    let kmax = (half_cells as f64 * child / need + 1e-9).floor() as usize;
    let k = (1..=kmax)
        .rev()
        .find(|&k| k % 2 == 0)
        .ok_or_else(|| {
            Error::TooCoarse(format!(
                "{m} nodes cannot resolve {} children per axis with two cells each",
                variant.ratio()
            ))
        })?;
    let h = child / k as f64;
    GridSpec::new(Cube::new(q.center().to_vec(), half_cells as f64 * h)?, m)
}

/// One step of the recursion on the grid of `u`.
///
/// `u` must be a discrete solution of the `A`-equation with zero load on its
/// grid (assembled with centroid samples of `a`), the grid must cover the
/// enclosing cube, and every `3P` must sit on nodes (see [`aligned_grid`]).
pub fn pairing_split(
    a: &dyn Source,
    u: &Field,
    b: &dyn Source,
    g: &dyn Source,
    q: &Cube,
    variant: Variant,
    tol: f64,
) -> Result<PairingSplit> {
    let n = q.n();
    let nn = n * n;
    if u.kind() != FieldKind::Scalar || u.n() != n {
        return Err(invalid("u must be a scalar field in the dimension of Q"));
    }
    if a.comps() != nn || b.comps() != nn || g.comps() != n {
        return Err(invalid("A and B must be matrix sources and g a vector source"));
    }
    let spec = u.spec();
    let tolc = 1e-9 * q.side();
    if !spec.domain.contains_cube(&variant.enclosing(q)?, tolc) {
        return Err(Error::DomainMargin("u does not cover the enclosing cube".into()));
    }
    let part = variant.partitioned(q)?;
    let children = variant.children(q)?;

    let direct = {
        let grads = cell_gradients(spec, u.values());
        let vol = spec.cell_volume();
        let mut x = vec![0.0; n];
        let mut bm = vec![0.0; nn];
        let mut gv = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut acc = 0.0;
        for c in 0..spec.cell_count() {
            spec.cell_centroid(c, &mut x);
            if !part.contains_half_open(&x) {
                continue;
            }
            b.eval(&x, &mut bm);
            g.eval(&x, &mut gv);
            mat_t_vec(&bm, &gv, n, &mut f);
            acc += vol * (0..n).map(|i| f[i] * grads[c * n + i]).sum::<f64>();
        }
        acc
    };

    let cubes = children
        .par_iter()
        .map(|p| {
            let p3 = p.dilate(3.0)?;
            let local = u.restrict(&p3).ok_or_else(|| {
                invalid("3P is not node aligned in the grid of u; build it with aligned_grid")
            })?;
            let sub = local.spec().clone();
            if sub.m < 5 {
                return Err(Error::TooCoarse(format!("3P carries only {} nodes per axis", sub.m)));
            }
            let asm_a = Assembly::new(&sub, a)?;
            let a_p = mean_matrix(asm_a.cell_matrices(), nn);
            let asm_p = Assembly::constant(&sub, &a_p)?;
            let cut = Cut {
                variant,
                part: part.clone(),
                child: p.clone(),
            };
            let mut cell_f = vec![0.0; sub.cell_count() * n];
            let mut x = vec![0.0; n];
            let mut bm = vec![0.0; nn];
            let mut gv = vec![0.0; n];
            for c in 0..sub.cell_count() {
                sub.cell_centroid(c, &mut x);
                let w = cut.value(&x);
                if w == 0.0 {
                    continue;
                }
                b.eval(&x, &mut bm);
                g.eval(&x, &mut gv);
                mat_t_vec(&bm, &gv, n, &mut cell_f[c * n..(c + 1) * n]);
                cell_f[c * n..(c + 1) * n].iter_mut().for_each(|v| *v *= w);
            }
            let zeros = vec![0.0; sub.len()];
            let (t, _) = asm_p.transpose().solve(&asm_p.load(&cell_f), &zeros, tol)?;
            let (u_p, _) = asm_p.solve(&zeros, local.values(), tol)?;
            let gp = cell_gradients(&sub, &u_p);
            let vol = sub.cell_volume();
            let term_i: f64 = cell_f.iter().zip(&gp).map(|(f, d)| vol * f * d).sum();
            let term_ii = asm_p.form(local.values(), &t) - asm_a.form(local.values(), &t);

            let grad_u = nodal_gradient(&sub, local.values());
            let mut wg = vec![0.0; sub.len() * n];
            let mut am = vec![0.0; nn];
            for i in 0..sub.len() {
                sub.point(i, &mut x);
                a.eval(&x, &mut am);
                let du = grad_u.at(i);
                for r in 0..n {
                    wg[i * n + r] = (0..n).map(|s| (am[r * n + s] - a_p[r * n + s]) * du[s]).sum();
                }
            }
            Ok(SplitCube {
                cube: p.clone(),
                a_p,
                term_i,
                term_ii,
                weighted_grad_u: Field::new(sub.clone(), FieldKind::Vector, wg)?,
                grad_t: nodal_gradient(&sub, &t),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let term_i: f64 = cubes.iter().map(|c| c.term_i).sum();
    let term_ii_sum: f64 = cubes.iter().map(|c| c.term_ii).sum();
    let abs_ii: f64 = cubes.iter().map(|c| c.term_ii.abs()).sum();
    let recombination_error = (direct - term_i - term_ii_sum).abs();
    let scale = direct.abs().max(term_i.abs()).max(abs_ii);
    let relative_error = if scale > 0.0 { recombination_error / scale } else { 0.0 };
    Ok(PairingSplit {
        variant,
        direct,
        term_i,
        term_ii_sum,
        cubes,
        recombination_error,
        relative_error,
    })
}

#[derive(Clone, Debug)]
pub struct IterationOptions {
    /// Number of levels `K`, counting level 0.
    pub depth: usize,
    /// Nodes per axis of every re-gridded `3P` (odd, `(m-1) % 6 == 0` so
    /// that `P` is a union of cells).
    pub local_m: usize,
    /// Nodes per axis of the level-0 grid over `3Q_0`.
    pub root_m: usize,
    /// Levels with more cubes than this are not computed.
    pub max_cubes: usize,
    pub tol: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions {
            depth: 3,
            local_m: 13,
            root_m: 61,
            max_cubes: 4096,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelRecord {
    pub k: usize,
    pub cube_count: usize,
    /// `Σ_R D_R |R|^s (⨍_{3R}|∇u|²)^{1/2} ‖G_R‖` with `s = 1/q` and the
    /// `L^{q'}(3R)` norm (L^q), or `s = 1 + α/n` and the `h_z^p(3R)` norm
    /// (Hölder).
    pub term_sum: f64,
    /// `|Σ_R ∫ B_R∇u·G_R|`, the pairing not yet accounted for.
    pub remainder: f64,
    /// Largest relative L² gap, over the cut-off supports of the children,
    /// between multilinear and nearest-node interpolation of the parent
    /// data: a first-order estimate of what re-gridding loses.
    pub interp_error: f64,
}

/// The iterated fields along one chain of nested cubes.
#[derive(Clone, Debug, Serialize)]
pub struct FrozenOperatorChain {
    pub cubes: Vec<Cube>,
    #[serde(skip)]
    pub fields: Vec<Field>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationTrace {
    pub variant: Variant,
    /// `q` (L^q) or `p` (Hölder).
    pub exponent: f64,
    pub depth: usize,
    pub levels: Vec<LevelRecord>,
    /// `max_k term(k+1)/term(k)` over levels with `term(k) > 0`.
    pub decay_ratio: f64,
    pub truncated: Option<String>,
    /// Chain through a point next to the centre of `Q_0`.
    pub chain: FrozenOperatorChain,
}

/// Test field of one level: the analytic root or a re-gridded `∇T`.
enum Data<'a> {
    Root { g: &'a dyn Source, cut: Option<Cube> },
    Grid(Field),
}

impl Data<'_> {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Data::Root { g, cut } => {
                g.eval(x, out);
                if let Some(q0) = cut {
                    let w = holder_root_cut(q0, x);
                    out.iter_mut().for_each(|v| *v *= w);
                }
            }
            Data::Grid(f) => f.interpolate(x, out),
        }
    }

    /// Value at the nearest node of the data grid; `None` for analytic data.
    fn nearest(&self, x: &[f64], out: &mut [f64]) -> bool {
        let Data::Grid(f) = self else { return false };
        let spec = f.spec();
        let mut ix = [0usize; 3];
        for (a, &xa) in x.iter().enumerate() {
            let (i, t) = spec.locate(a, xa);
            ix[a] = if t < 0.5 { i } else { i + 1 };
        }
        out.copy_from_slice(f.at(spec.ravel(&ix[..x.len()])));
        true
    }
}

/// `ψ_0`: 1 on `2Q_0`, 0 off `3Q_0`.
fn holder_root_cut(q0: &Cube, x: &[f64]) -> f64 {
    let l = q0.side();
    x.iter()
        .zip(q0.center())
        .map(|(xi, c)| smooth_step((xi - c).abs() - l, 0.5 * l))
        .product()
}

struct Item<'a> {
    cube: Cube,
    /// `None` for `B = I`, else `A_R` with `B_R = A_R - A`.
    frozen: Option<Vec<f64>>,
    data: Data<'a>,
    /// Grid the data was measured on (level 0 or the re-gridded `3R`).
    spec: GridSpec,
}

impl Item<'_> {
    fn b_at(&self, a: &dyn Source, x: &[f64], am: &mut [f64], out: &mut [f64]) {
        match &self.frozen {
            None => {
                let n = x.len();
                out.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    out[i * n + i] = 1.0;
                }
            }
            Some(ar) => {
                a.eval(x, am);
                for k in 0..out.len() {
                    out[k] = ar[k] - am[k];
                }
            }
        }
    }
}

struct Measured {
    term: f64,
    pairing: f64,
}

struct Ctx<'a> {
    a: &'a dyn Source,
    grad_u: &'a Field,
    variant: Variant,
    exponent: f64,
    alpha: f64,
    opts: &'a IterationOptions,
}

impl Ctx<'_> {
    fn b_field(&self, item: &Item, region: &Cube) -> Result<Field> {
        let n = region.n();
        let spec = GridSpec::new(region.clone(), self.opts.local_m)?;
        let mut vals = vec![0.0; spec.len() * n * n];
        let mut x = vec![0.0; n];
        let mut am = vec![0.0; n * n];
        for i in 0..spec.len() {
            spec.point(i, &mut x);
            item.b_at(self.a, &x, &mut am, &mut vals[i * n * n..(i + 1) * n * n]);
        }
        Field::new(spec, FieldKind::Matrix, vals)
    }

    /// Level term and pairing of one item; `g` is its data sampled on
    /// `item.spec`, `region` restricts integrals (level 0 of L^q).
    fn measure(&self, item: &Item, g: &Field, region: Option<&Cube>) -> Result<Measured> {
        let n = item.cube.n();
        let r3 = item.cube.dilate(3.0)?;
        let spec = &item.spec;
        let mut du = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut am = vec![0.0; n * n];
        let mut bm = vec![0.0; n * n];
        let w = node_weights(spec, region);
        let mut grad_sq = vec![0.0; spec.len()];
        let mut pairing = 0.0;
        for i in 0..spec.len() {
            spec.point(i, &mut x);
            self.grad_u.interpolate(&x, &mut du);
            grad_sq[i] = du.iter().map(|v| v * v).sum();
            if w[i] == 0.0 {
                continue;
            }
            item.b_at(self.a, &x, &mut am, &mut bm);
            let gv = g.at(i);
            for r in 0..n {
                let bdu: f64 = (0..n).map(|s| bm[r * n + s] * du[s]).sum();
                pairing += w[i] * bdu * gv[r];
            }
        }
        let gsq = Field::new(spec.clone(), FieldKind::Scalar, grad_sq)?;
        let l2 = lp_mean(&gsq, &r3, 1.0)?.sqrt();
        let term = match self.variant {
            Variant::Lq => {
                let q = self.exponent;
                let qp = q / (q - 1.0);
                // Frobenius norms throughout, so `B = I` counts `√n`.
                let d = match item.frozen {
                    None => (n as f64).sqrt(),
                    Some(_) => lp_mean(&self.b_field(item, &r3)?, &r3, q)?,
                };
                let gnorm = integrate_norm_pow(g, region, qp).powf(1.0 / qp);
                d * item.cube.volume().powf(1.0 / q) * l2 * gnorm
            }
            Variant::Holder => {
                let r4 = item.cube.dilate(4.0)?;
                let bf = self.b_field(item, &r4)?;
                let sup = (0..bf.spec().len()).map(|i| bf.norm_at(i)).fold(0.0, f64::max);
                let semi = if sup == 0.0 { 0.0 } else { holder_seminorm(&bf, self.alpha, &r4)? };
                let d = r4.side().powf(-self.alpha) * sup + semi;
                if d == 0.0 {
                    0.0
                } else {
                    let h = hardy_z_norm_with(
                        g,
                        &r3,
                        self.exponent,
                        &HardyOptions {
                            cells: self.opts.local_m - 1,
                        },
                    )?;
                    d * item.cube.volume().powf(1.0 + self.alpha / n as f64) * l2 * h.value
                }
            }
        };
        Ok(Measured { term, pairing })
    }

    /// Re-gridded child `P` of `parent` with its measurements.
    fn child<'b>(&self, parent: &Item<'b>, part: &Cube, p: &Cube) -> Result<(Item<'b>, Measured, f64)> {
        let n = p.n();
        let nn = n * n;
        let p3 = p.dilate(3.0)?;
        let spec = GridSpec::new(p3.clone(), self.opts.local_m)?;
        let a_p = mean_matrix(&cell_samples(&spec, self.a), nn);
        let cut = Cut {
            variant: self.variant,
            part: part.clone(),
            child: p.clone(),
        };
        let mut cell_f = vec![0.0; spec.cell_count() * n];
        let mut x = vec![0.0; n];
        let mut am = vec![0.0; nn];
        let mut bm = vec![0.0; nn];
        let mut gv = vec![0.0; n];
        let mut diff = 0.0;
        let mut norm = 0.0;
        let mut near = vec![0.0; n];
        for c in 0..spec.cell_count() {
            spec.cell_centroid(c, &mut x);
            let w = cut.value(&x);
            if w == 0.0 {
                continue;
            }
            parent.b_at(self.a, &x, &mut am, &mut bm);
            parent.data.eval(&x, &mut gv);
            if parent.data.nearest(&x, &mut near) {
                diff += gv.iter().zip(&near).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
                norm += gv.iter().map(|u| u * u).sum::<f64>();
            }
            let f = &mut cell_f[c * n..(c + 1) * n];
            mat_t_vec(&bm, &gv, n, f);
            f.iter_mut().for_each(|v| *v *= w);
        }
        let interp = if norm > 0.0 { (diff / norm).sqrt() } else { 0.0 };
        let asm = Assembly::constant(&spec, &transpose(&a_p, n))?;
        let (t, _) = asm.solve(&asm.load(&cell_f), &vec![0.0; spec.len()], self.opts.tol)?;
        let g = nodal_gradient(&spec, &t);
        let item = Item {
            cube: p.clone(),
            frozen: Some(a_p),
            data: Data::Grid(g.clone()),
            spec,
        };
        let m = self.measure(&item, &g, None)?;
        Ok((item, m, interp))
    }
}

/// Iterates the split from `Q_0` for `opts.depth` levels, re-gridding each
/// `3P`. `exponent` is `q ∈ (2, ∞)` for the L^q variant and
/// `p ∈ (n/(n+1), 1)` for the Hölder one.
pub fn run_iteration(
    a: &dyn Source,
    u: &Field,
    g: &dyn Source,
    q0: &Cube,
    variant: Variant,
    exponent: f64,
    opts: &IterationOptions,
) -> Result<IterationTrace> {
    let n = q0.n();
    if u.kind() != FieldKind::Scalar || u.n() != n || a.comps() != n * n || g.comps() != n {
        return Err(invalid("u must be scalar, A a matrix source and g a vector source"));
    }
    if opts.depth == 0 {
        return Err(invalid("depth must be at least 1"));
    }
    if opts.local_m < 7 || opts.local_m % 2 == 0 || (opts.local_m - 1) % 6 != 0 {
        return Err(invalid(format!(
            "local grids need an odd node count with (m-1) divisible by 6, got {}",
            opts.local_m
        )));
    }
    let alpha = match variant {
        Variant::Lq => {
            if !(exponent > 2.0 && exponent.is_finite()) {
                return Err(invalid(format!("q must lie in (2, ∞), got {exponent}")));
            }
            0.0
        }
        Variant::Holder => {
            let al = alpha_for(n, exponent)?;
            if al <= 0.0 {
                return Err(invalid("the Hölder variant needs p < 1"));
            }
            al
        }
    };
    let tolc = 1e-9 * q0.side();
    if !u.spec().domain.contains_cube(&variant.enclosing(q0)?, tolc) {
        return Err(Error::DomainMargin("u does not cover the enclosing cube".into()));
    }
    let grad_u = nodal_gradient(u.spec(), u.values());
    let ctx = Ctx {
        a,
        grad_u: &grad_u,
        variant,
        exponent,
        alpha,
        opts,
    };

    let root_spec = GridSpec::new(q0.dilate(3.0)?, opts.root_m)?;
    let (root_data, region) = match variant {
        Variant::Holder => (
            Data::Root {
                g,
                cut: Some(q0.clone()),
            },
            None,
        ),
        Variant::Lq => (Data::Root { g, cut: None }, Some(q0.clone())),
    };
    let root_field = {
        let mut vals = vec![0.0; root_spec.len() * n];
        let mut x = vec![0.0; n];
        for i in 0..root_spec.len() {
            root_spec.point(i, &mut x);
            root_data.eval(&x, &mut vals[i * n..(i + 1) * n]);
        }
        Field::new(root_spec.clone(), FieldKind::Vector, vals)?
    };
    let root = Item {
        cube: q0.clone(),
        frozen: None,
        data: root_data,
        spec: root_spec,
    };
    let m0 = ctx.measure(&root, &root_field, region.as_ref())?;
    let mut levels = vec![LevelRecord {
        k: 0,
        cube_count: 1,
        term_sum: m0.term,
        remainder: m0.pairing.abs(),
        interp_error: 0.0,
    }];
    let mut chain = FrozenOperatorChain {
        cubes: vec![q0.clone()],
        fields: vec![root_field],
    };
    // Off-centre so the chain never sits on a shared face.
    let centre: Vec<f64> = q0
        .center()
        .iter()
        .enumerate()
        .map(|(a, c)| c + 1e-4 * q0.side() * (1.0 + 0.37 * a as f64))
        .collect();
    let mut current = vec![root];
    let mut truncated = None;
    let per = (variant.ratio() as usize).pow(n as u32);
    for k in 1..opts.depth {
        let count = current.len() * per;
        if count > opts.max_cubes {
            truncated = Some(format!(
                "level {k} needs {count} cubes, above the cap of {}",
                opts.max_cubes
            ));
            break;
        }
        let jobs: Vec<(usize, Cube, Cube)> = current
            .iter()
            .enumerate()
            .map(|(i, it)| {
                let part = variant.partitioned(&it.cube)?;
                Ok(subdivide_f(&part, variant.ratio())?
                    .into_iter()
                    .map(move |p| (i, part.clone(), p)))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let results = jobs
            .par_iter()
            .map(|(i, part, p)| ctx.child(&current[*i], part, p))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::with_capacity(results.len());
        let mut rec = LevelRecord {
            k,
            cube_count: count,
            term_sum: 0.0,
            remainder: 0.0,
            interp_error: 0.0,
        };
        let mut pairing = 0.0;
        for (item, m, interp) in results {
            rec.term_sum += m.term;
            pairing += m.pairing;
            rec.interp_error = rec.interp_error.max(interp);
            if item.cube.contains_half_open(&centre) && chain.cubes.len() == k {
                chain.cubes.push(item.cube.clone());
                if let Data::Grid(f) = &item.data {
                    chain.fields.push(f.clone());
                }
            }
            next.push(item);
        }
        rec.remainder = pairing.abs();
        levels.push(rec);
        current = next;
    }
    let decay_ratio = levels
        .windows(2)
        .filter(|w| w[0].term_sum > 0.0)
        .map(|w| w[1].term_sum / w[0].term_sum)
        .fold(0.0, f64::max);
    Ok(IterationTrace {
        variant,
        exponent,
        depth: opts.depth,
        levels,
        decay_ratio,
        truncated,
        chain,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientBounds {
    /// `|∇u|_{C^α(2Q_0)} ℓ(Q_0)^α / l2_avg`.
    pub holder_quotient: f64,
    /// `max |∇u|` over nodes of `2Q_0`.
    pub sup_norm: f64,
    /// `(⨍_{4Q_0}|∇u|²)^{1/2}`.
    pub l2_avg: f64,
    /// Relative interior residual of `u` in the `A`-equation.
    pub residual: f64,
    /// Set when `l2_avg` vanishes but the gradient does not.
    pub inconsistent: bool,
}

/// Relative residual above which `u` is not accepted as a solution.
const HARMONIC_RESIDUAL: f64 = 1e-6;

pub fn gradient_bounds_from_duality(a: &dyn Source, u: &Field, q0: &Cube, alpha: f64) -> Result<GradientBounds> {
    let spec = u.spec();
    let q4 = q0.dilate(4.0)?;
    if !spec.domain.contains_cube(&q4, 1e-9 * q0.side()) {
        return Err(Error::DomainMargin("u does not cover 4Q0".into()));
    }
    let asm = Assembly::new(spec, a)?;
    let mut ku = vec![0.0; spec.len()];
    asm.matrix().apply(u.values(), &mut ku);
    let diag = asm.matrix().diagonal();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..spec.len() {
        if !spec.is_boundary(i) {
            num += ku[i] * ku[i];
            den += (diag[i] * u.values()[i]).powi(2);
        }
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    if residual > HARMONIC_RESIDUAL {
        return Err(invalid(format!(
            "u is not a discrete solution with zero load (relative residual {residual:.2e})"
        )));
    }
    let grad = nodal_gradient(spec, u.values());
    let q2 = q0.dilate(2.0)?;
    let l2_avg = lp_mean(&grad, &q4, 2.0)?;
    let mut x = vec![0.0; spec.n()];
    let mut sup_norm = 0.0f64;
    for i in 0..spec.len() {
        spec.point(i, &mut x);
        if q2.contains_closed(&x, 1e-9 * q0.side()) {
            sup_norm = sup_norm.max(grad.norm_at(i));
        }
    }
    let semi = holder_seminorm(&grad, alpha, &q2)?;
    let numerator = semi * q0.side().powf(alpha);
    let (holder_quotient, inconsistent) = if l2_avg > 0.0 {
        (numerator / l2_avg, false)
    } else if numerator == 0.0 && sup_norm == 0.0 {
        (0.0, false)
    } else {
        (f64::INFINITY, true)
    };
    Ok(GradientBounds {
        holder_quotient,
        sup_norm,
        l2_avg,
        residual,
        inconsistent,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MeyersRow {
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `(⨍_Q |∇u|^q)^{1/q} / (⨍_{dQ} |∇u|²)^{1/2}` for each `q`, with `d = 2`
/// for the reverse Hölder inequality and `d = 3` for the L^q conclusion.
pub fn meyers_scan(grad_u: &Field, q: &Cube, dilation: f64, q_grid: &[f64]) -> Result<Vec<MeyersRow>> {
    if grad_u.kind() != FieldKind::Vector {
        return Err(invalid("meyers_scan expects a gradient field"));
    }
    let big = q.dilate(dilation)?;
    if !grad_u.spec().domain.contains_cube(&big, 1e-9 * q.side()) {
        return Err(Error::DomainMargin("gradient does not cover the dilated cube".into()));
    }
    if measure(grad_u.spec(), Some(q)) <= 0.0 {
        return Err(invalid("cube does not meet the grid"));
    }
    let rhs = lp_mean(grad_u, &big, 2.0)?;
    q_grid
        .iter()
        .map(|&qq| {
            if !(qq >= 1.0 && qq.is_finite()) {
                return Err(invalid(format!("exponent must lie in [1, ∞), got {qq}")));
            }
            let lhs = lp_mean(grad_u, q, qq)?;
            let ratio = if rhs > 0.0 {
                lhs / rhs
            } else if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(MeyersRow { q: qq, lhs, rhs, ratio })
        })
        .collect()
}

#[cfg(test)]
mod tests;
