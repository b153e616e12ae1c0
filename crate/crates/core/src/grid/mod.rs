//! Axis-parallel cubes, dilations, dyadic children, the subdivision
//! families used by the frozen-coefficient iteration, and Whitney
//! decompositions of node-sampled open sets.

mod whitney;

pub use whitney::{ambient_grid, exterior_distance};

pub use whitney::{whitney_decompose, WhitneyCheck, WhitneyDecomposition};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `Q(c, r) = {y : |c - y|_inf < r}`. Partitions treat cubes as half-open
/// `[c - r, c + r)` per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CubeRepr", into = "CubeRepr")]
pub struct Cube {
    center: Vec<f64>,
    half_side: f64,
}

#[derive(Serialize, Deserialize)]
struct CubeRepr {
    center: Vec<f64>,
    half_side: f64,
    n: usize,
}

impl TryFrom<CubeRepr> for Cube {
    type Error = Error;

    fn try_from(r: CubeRepr) -> Result<Self> {
        if r.n != r.center.len() {
            return Err(invalid(format!(
                "cube dimension {} does not match center length {}",
                r.n,
                r.center.len()
            )));
        }
        Cube::new(r.center, r.half_side)
    }
}

impl From<Cube> for CubeRepr {
    fn from(c: Cube) -> Self {
        let n = c.center.len();
        CubeRepr {
            center: c.center,
            half_side: c.half_side,
            n,
        }
    }
}

impl Cube {
    pub fn new(center: Vec<f64>, half_side: f64) -> Result<Self> {
        let n = center.len();
        if !(2..=3).contains(&n) {
            return Err(invalid(format!("dimension {n} unsupported, expected 2 or 3")));
        }
        if !(half_side > 0.0 && half_side.is_finite()) {
            return Err(invalid(format!("half side must be positive, got {half_side}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("cube center must be finite"));
        }
        Ok(Cube { center, half_side })
    }

    /// `[0, 1]^n`.
    pub fn unit(n: usize) -> Result<Self> {
        Cube::new(vec![0.5; n], 0.5)
    }

    /// Cube with the given lower corner and side.
    pub fn from_corner(lower: &[f64], side: f64) -> Result<Self> {
        Cube::new(lower.iter().map(|l| l + 0.5 * side).collect(), 0.5 * side)
    }

    pub fn n(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_side(&self) -> f64 {
        self.half_side
    }

    /// `ℓ(Q)`.
    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.n() as i32)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_side
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.center[axis] + self.half_side
    }

    pub fn dilate(&self, factor: f64) -> Result<Cube> {
        dilate(self, factor)
    }

    /// Half-open membership `lower <= x < upper`.
    pub fn contains_half_open(&self, x: &[f64]) -> bool {
        (0..self.n()).all(|i| x[i] >= self.lower(i) && x[i] < self.upper(i))
    }

    /// Open membership.
    pub fn contains_open(&self, x: &[f64]) -> bool {
        (0..self.n()).all(|i| (x[i] - self.center[i]).abs() < self.half_side)
    }

    /// Closed membership enlarged by `tol`.
    pub fn contains_closed(&self, x: &[f64], tol: f64) -> bool {
        (0..self.n()).all(|i| (x[i] - self.center[i]).abs() <= self.half_side + tol)
    }

    /// `other ⊂ self` up to `tol` on every face.
    pub fn contains_cube(&self, other: &Cube, tol: f64) -> bool {
        (0..self.n()).all(|i| {
            other.lower(i) >= self.lower(i) - tol && other.upper(i) <= self.upper(i) + tol
        })
    }

    /// True when the open cubes share interior points.
    pub fn intersects(&self, other: &Cube) -> bool {
        (0..self.n()).all(|i| {
            (self.center[i] - other.center[i]).abs() < self.half_side + other.half_side
        })
    }

    pub fn intersection_volume(&self, other: &Cube) -> f64 {
        (0..self.n())
            .map(|i| {
                let lo = self.lower(i).max(other.lower(i));
                let hi = self.upper(i).min(other.upper(i));
                (hi - lo).max(0.0)
            })
            .product()
    }

    /// `|x - c(Q)|_inf`.
    pub fn sup_distance_to_center(&self, x: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| (x[i] - self.center[i]).abs())
            .fold(0.0, f64::max)
    }

    /// `dist_inf(x, ∂Q)` for `x` inside the cube.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        self.half_side - self.sup_distance_to_center(x)
    }

    pub fn approx_eq(&self, other: &Cube, tol: f64) -> bool {
        self.n() == other.n()
            && (self.half_side - other.half_side).abs() <= tol
            && (0..self.n()).all(|i| (self.center[i] - other.center[i]).abs() <= tol)
    }
}

/// Concentric dilation `NQ`.
pub fn dilate(q: &Cube, factor: f64) -> Result<Cube> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(invalid(format!("dilation factor must be positive, got {factor}")));
    }
    Cube::new(q.center.clone(), q.half_side * factor)
}

/// Partition of `Q` into `ratio^n` equal subcubes of side `ℓ(Q)/ratio`.
/// `ratio` is 27 for the Hölder iteration and 8 for the uniformly
/// continuous one. Output order is row-major with axis 0 slowest.
pub fn subdivide_f(q: &Cube, ratio: u32) -> Result<Vec<Cube>> {
    if ratio != 27 && ratio != 8 {
        return Err(invalid(format!("unsupported subdivision ratio {ratio}, expected 27 or 8")));
    }
    Ok(grid_children(q, ratio as usize))
}

/// The `2^{n·depth}` dyadic subcubes at the given depth.
pub fn dyadic_subcubes(q: &Cube, depth: i32) -> Result<Vec<Cube>> {
    if depth < 0 {
        return Err(invalid(format!("dyadic depth must be nonnegative, got {depth}")));
    }
    if depth > 20 {
        return Err(invalid(format!("dyadic depth {depth} is beyond any resolvable grid")));
    }
    Ok(grid_children(q, 1usize << depth))
}

/// The dyadic subcube at `depth` with per-axis index `index`.
pub fn dyadic_cube(q: &Cube, depth: u32, index: &[usize]) -> Cube {
    let k = (1u64 << depth) as f64;
    let side = q.side() / k;
    let center = (0..q.n())
        .map(|i| q.lower(i) + (index[i] as f64 + 0.5) * side)
        .collect();
    Cube {
        center,
        half_side: 0.5 * side,
    }
}

fn grid_children(q: &Cube, k: usize) -> Vec<Cube> {
    let n = q.n();
    let side = q.side() / k as f64;
    let total = k.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for lin in 0..total {
        let mut rem = lin;
        for a in (0..n).rev() {
            idx[a] = rem % k;
            rem /= k;
        }
        let center = (0..n)
            .map(|i| q.lower(i) + (idx[i] as f64 + 0.5) * side)
            .collect();
        out.push(Cube {
            center,
            half_side: 0.5 * side,
        });
    }
    out
}
