//! Smooth partition of unity subordinate to the doubles of Whitney cubes.
//!
//! `ψ̃_P = Π χ((x_i - c_i)/s)` with `χ = 1` on `[-1, 1]` and `0` outside
//! `(-2, 2)`, so `ψ̃_P = 1` on `P` and vanishes off `2P`. With
//! `S = Σ ψ̃_P` and `Φ(S) = S + ρ(S)(1 - S)`, `ρ` a smooth step from 1 at
//! `S = 0` to 0 at `S = 1`, the functions `ψ_P = ψ̃_P / Φ(S)` satisfy
//! `0 ≤ Σψ_P ≤ 1` everywhere and `Σψ_P = 1` wherever `S ≥ 1`, in particular
//! on every cube.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Cube, WhitneyDecomposition};
use crate::maximal::smooth_step;

/// Largest generation gap tolerated between cubes whose doubles meet.
pub const MAX_GENERATION_GAP: u32 = 2;

#[derive(Clone, Debug, Serialize)]
pub struct PartitionOfUnity {
    pub cubes: Vec<Cube>,
    /// Cubes whose doubles meet the double of each cube (itself included).
    pub neighbors: Vec<Vec<usize>>,
    /// Per cube, `max |∂^γ ψ_P| ℓ(P)^{|γ|}` over samples in `2P` for
    /// `|γ| = 0, 1, 2`.
    pub certificates: Vec<[f64; 3]>,
}

fn chi(t: f64) -> f64 {
    smooth_step(t.abs() - 1.0, 1.0)
}

fn phi_of_sum(s: f64) -> f64 {
    s + smooth_step(s, 1.0) * (1.0 - s)
}

impl PartitionOfUnity {
    fn tilde(&self, k: usize, x: &[f64]) -> f64 {
        let c = &self.cubes[k];
        let s = c.half_side();
        let mut v = 1.0;
        for (a, xa) in x.iter().enumerate() {
            v *= chi((xa - c.center()[a]) / s);
            if v == 0.0 {
                break;
            }
        }
        v
    }

    /// `Σ_P ψ̃_P(x)`.
    pub fn raw_sum(&self, x: &[f64]) -> f64 {
        (0..self.cubes.len()).map(|k| self.tilde(k, x)).sum()
    }

    fn raw_sum_near(&self, k: usize, x: &[f64]) -> f64 {
        self.neighbors[k].iter().map(|&j| self.tilde(j, x)).sum()
    }

    /// `ψ_P(x)` for cube `k`.
    pub fn eval(&self, k: usize, x: &[f64]) -> f64 {
        let t = self.tilde(k, x);
        if t == 0.0 {
            return 0.0;
        }
        t / phi_of_sum(self.raw_sum_near(k, x))
    }

    /// `Σ_P ψ_P(x)`.
    pub fn total(&self, x: &[f64]) -> f64 {
        let s = self.raw_sum(x);
        if s == 0.0 {
            return 0.0;
        }
        let d = phi_of_sum(s);
        (0..self.cubes.len()).map(|k| self.tilde(k, x) / d).sum()
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Finite-difference derivative bounds on a `pts^n` sample of `2P`.
    fn certify(&self, k: usize, pts: usize) -> [f64; 3] {
        let c = &self.cubes[k];
        let n = c.n();
        let ell = c.side();
        let d = ell / 256.0;
        let mut out = [0.0f64; 3];
        let total = pts.pow(n as u32);
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        for lin in 0..total {
            let mut rem = lin;
            for a in (0..n).rev() {
                let t = (rem % pts) as f64 / (pts - 1) as f64;
                rem /= pts;
                x[a] = c.center()[a] + (2.0 * t - 1.0) * ell;
            }
            let f0 = self.eval(k, &x);
            out[0] = out[0].max(f0.abs());
            let mut at = |shift: &[(usize, f64)]| {
                y.copy_from_slice(&x);
                for &(a, s) in shift {
                    y[a] += s;
                }
                self.eval(k, &y)
            };
            for a in 0..n {
                let fp = at(&[(a, d)]);
                let fm = at(&[(a, -d)]);
                out[1] = out[1].max(((fp - fm) / (2.0 * d)).abs() * ell);
                out[2] = out[2].max(((fp - 2.0 * f0 + fm) / (d * d)).abs() * ell * ell);
                for b in a + 1..n {
                    let pp = at(&[(a, d), (b, d)]);
                    let pm = at(&[(a, d), (b, -d)]);
                    let mp = at(&[(a, -d), (b, d)]);
                    let mm = at(&[(a, -d), (b, -d)]);
                    let v = (pp - pm - mp + mm) / (4.0 * d * d);
                    out[2] = out[2].max(v.abs() * ell * ell);
                }
            }
        }
        out
    }
}

/// Builds the partition for the cubes of `w` and certifies derivative
/// bounds with `pts` samples per axis of each `2P`.
pub fn partition_of_unity(w: &WhitneyDecomposition, pts: usize) -> Result<PartitionOfUnity> {
    if w.is_empty() {
        return Err(Error::InvalidWhitney("empty Whitney family".into()));
    }
    let cubes = w.cubes.clone();
    let doubles: Vec<Cube> = cubes.iter().map(|c| c.dilate(2.0)).collect::<Result<_>>()?;
    let mut neighbors = vec![Vec::new(); cubes.len()];
    for a in 0..cubes.len() {
        neighbors[a].push(a);
        for b in a + 1..cubes.len() {
            if doubles[a].intersects(&doubles[b]) {
                let gap = (cubes[a].side() / cubes[b].side()).log2().abs().round() as u32;
                if gap > MAX_GENERATION_GAP {
                    return Err(Error::InvalidWhitney(format!(
                        "cubes {a} and {b} meet at doubled scale with generation gap {gap}"
                    )));
                }
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
    }
    let mut pou = PartitionOfUnity {
        cubes,
        neighbors,
        certificates: Vec::new(),
    };
    pou.certificates = (0..pou.cubes.len()).map(|k| pou.certify(k, pts.max(3))).collect();
    Ok(pou)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::grid::whitney_decompose;

    #[test]
    fn sums_to_one_on_cubes_and_vanishes_off_doubles() {
        let q = Cube::unit(2).unwrap();
        let grid = GridSpec::new(q.dilate(3.0).unwrap(), 97).unwrap();
        let mask: Vec<bool> = (0..grid.len())
            .map(|i| {
                let x = grid.point_vec(i);
                x[0].abs() < 0.5 && x[1].abs() < 0.3
            })
            .collect();
        let w = whitney_decompose(&mask, &grid, &q).unwrap();
        let pou = partition_of_unity(&w, 5).unwrap();
        for (i, &b) in mask.iter().enumerate() {
            if b {
                let x = grid.point_vec(i);
                assert!((pou.total(&x) - 1.0).abs() < 1e-12);
            }
        }
        let c = &pou.cubes[0];
        let mut far = c.center().to_vec();
        far[0] += 2.0 * c.side();
        assert_eq!(pou.eval(0, &far), 0.0);
        assert!(pou.certificates.iter().all(|c| c[0] <= 1.0 + 1e-12));
    }
}
