//! Conforming multilinear elements on the tensor grid.
//!
//! Each cell carries one coefficient matrix and one load vector (centroid
//! values). With a constant matrix per cell the element stiffness
//! `∫ M∇φ_b·∇φ_a` is integrated exactly from the reference tensor
//! `G[a][b][i][j] = ∫ ∂_iφ_a ∂_jφ_b` on the unit cell.

use crate::field::{cell_samples, linalg::transpose, GridSpec, Source};
use crate::error::{invalid, Result};

/// Square matrix with one `3^n`-point stencil per node row. Entry `s` of a
/// row couples the node to its neighbour at offset `s` in `{-1,0,1}^n`
/// (row-major, axis 0 slowest).
#[derive(Clone, Debug)]
pub struct StencilMatrix {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub offsets: Vec<isize>,
}

impl StencilMatrix {
    pub fn width(&self) -> usize {
        self.offsets.len()
    }

    /// `y = K x` on every node whose full stencil lies in the grid; other
    /// rows are zero.
    pub fn apply_interior(&self, x: &[f64], interior: &[usize], y: &mut [f64]) {
        let w = self.width();
        for &i in interior {
            let row = &self.values[i * w..(i + 1) * w];
            let mut s = 0.0;
            for (k, &o) in self.offsets.iter().enumerate() {
                s += row[k] * x[(i as isize + o) as usize];
            }
            y[i] = s;
        }
    }

    /// Full product including boundary rows; neighbours outside the grid
    /// carry zero stencil weight by construction.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let w = self.width();
        let len = self.spec.len();
        for i in 0..len {
            let row = &self.values[i * w..(i + 1) * w];
            let mut s = 0.0;
            for (k, &o) in self.offsets.iter().enumerate() {
                if row[k] != 0.0 {
                    s += row[k] * x[(i as isize + o) as usize];
                }
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let w = self.width();
        let c = w / 2;
        (0..self.spec.len()).map(|i| self.values[i * w + c]).collect()
    }
}

/// Reference gradient products on the unit cell, indexed
/// `[(a * nb + b) * n * n + i * n + j]` with `nb = 2^n` local nodes.
fn reference_tensor(n: usize) -> Vec<f64> {
    let nb = 1usize << n;
    let bit = |a: usize, k: usize| (a >> (n - 1 - k)) & 1;
    let sgn = |v: usize| if v == 1 { 1.0 } else { -1.0 };
    let mut g = vec![0.0; nb * nb * n * n];
    for a in 0..nb {
        for b in 0..nb {
            for i in 0..n {
                for j in 0..n {
                    let mut v = 1.0;
                    for k in 0..n {
                        let (ak, bk) = (bit(a, k), bit(b, k));
                        v *= match (k == i, k == j) {
                            (true, true) => sgn(ak) * sgn(bk),
                            (true, false) => 0.5 * sgn(ak),
                            (false, true) => 0.5 * sgn(bk),
                            (false, false) => {
                                if ak == bk {
                                    1.0 / 3.0
                                } else {
                                    1.0 / 6.0
                                }
                            }
                        };
                    }
                    g[(a * nb + b) * n * n + i * n + j] = v;
                }
            }
        }
    }
    g
}

/// Discrete bilinear form `a(u, v) = ∫ A∇u·∇v` on a grid with one
/// coefficient matrix per cell.
#[derive(Clone, Debug)]
pub struct Assembly {
    spec: GridSpec,
    cell_a: Vec<f64>,
    symmetric: bool,
    matrix: StencilMatrix,
}

impl Assembly {
    /// Coefficients sampled at cell centroids.
    pub fn new(spec: &GridSpec, a: &dyn Source) -> Result<Self> {
        let n = spec.n();
        if a.comps() != n * n || a.n() != n {
            return Err(invalid("coefficient source must be an n×n matrix field"));
        }
        Assembly::from_cells(spec, cell_samples(spec, a))
    }

    pub fn constant(spec: &GridSpec, a: &[f64]) -> Result<Self> {
        let cells = spec.cell_count();
        Assembly::from_cells(spec, a.iter().copied().cycle().take(cells * a.len()).collect())
    }

    pub fn from_cells(spec: &GridSpec, cell_a: Vec<f64>) -> Result<Self> {
        let n = spec.n();
        if cell_a.len() != spec.cell_count() * n * n {
            return Err(invalid("one n×n matrix per cell expected"));
        }
        if spec.m < 5 {
            return Err(crate::error::Error::TooCoarse(format!(
                "{} nodes per axis; at least 5 are needed for a meaningful solve",
                spec.m
            )));
        }
        let symmetric = cell_a.chunks(n * n).all(|m| {
            (0..n).all(|i| (0..n).all(|j| (m[i * n + j] - m[j * n + i]).abs() <= 1e-14))
        });
        let matrix = stiffness(spec, &cell_a);
        Ok(Assembly {
            spec: spec.clone(),
            cell_a,
            symmetric,
            matrix,
        })
    }

    pub fn transpose(&self) -> Assembly {
        let n = self.spec.n();
        let cell_a: Vec<f64> = self
            .cell_a
            .chunks(n * n)
            .flat_map(|m| transpose(m, n))
            .collect();
        let matrix = stiffness(&self.spec, &cell_a);
        Assembly {
            spec: self.spec.clone(),
            cell_a,
            symmetric: self.symmetric,
            matrix,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cell_matrices(&self) -> &[f64] {
        &self.cell_a
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn matrix(&self) -> &StencilMatrix {
        &self.matrix
    }

    /// Nodal load `b_a = ∫ F·∇φ_a` for a cellwise constant `F` (`n` values
    /// per cell).
    pub fn load(&self, cell_f: &[f64]) -> Vec<f64> {
        let spec = &self.spec;
        let n = spec.n();
        let nb = 1usize << n;
        let h = spec.h();
        let corners = spec.corner_offsets();
        // ∫_cell ∂_iφ_a = ±(h/2)^{n-1}, sign from the local bit of axis i.
        let scale = (0.5 * h).powi(n as i32 - 1);
        let mut b = vec![0.0; spec.len()];
        for c in 0..spec.cell_count() {
            let f = &cell_f[c * n..(c + 1) * n];
            let origin = spec.cell_origin(c);
            for a in 0..nb {
                let mut s = 0.0;
                for i in 0..n {
                    let bit = (a >> (n - 1 - i)) & 1;
                    s += if bit == 1 { f[i] } else { -f[i] };
                }
                b[origin + corners[a]] += scale * s;
            }
        }
        b
    }

    /// `a(u, v) = vᵀ K u`.
    pub fn form(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut ku = vec![0.0; u.len()];
        self.matrix.apply(u, &mut ku);
        ku.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Cellwise constant gradient of the multilinear interpolant at each
    /// centroid, `n` values per cell.
    pub fn cell_gradients(&self, u: &[f64]) -> Vec<f64> {
        cell_gradients(&self.spec, u)
    }
}

pub fn cell_gradients(spec: &GridSpec, u: &[f64]) -> Vec<f64> {
    let n = spec.n();
    let nb = 1usize << n;
    let h = spec.h();
    let corners = spec.corner_offsets();
    let w = 1.0 / (h * (1usize << (n - 1)) as f64);
    let mut g = vec![0.0; spec.cell_count() * n];
    for c in 0..spec.cell_count() {
        let origin = spec.cell_origin(c);
        for a in 0..nb {
            let v = u[origin + corners[a]];
            for i in 0..n {
                let bit = (a >> (n - 1 - i)) & 1;
                g[c * n + i] += if bit == 1 { v * w } else { -v * w };
            }
        }
    }
    g
}

fn stiffness(spec: &GridSpec, cell_a: &[f64]) -> StencilMatrix {
    let n = spec.n();
    let nb = 1usize << n;
    let nn = n * n;
    let g = reference_tensor(n);
    let hfac = spec.h().powi(n as i32 - 2);
    let width = 3usize.pow(n as u32);
    let offsets: Vec<isize> = (0..width)
        .map(|k| {
            let mut rem = k;
            let mut off = 0isize;
            for a in (0..n).rev() {
                off += ((rem % 3) as isize - 1) * spec.stride(a) as isize;
                rem /= 3;
            }
            off
        })
        .collect();
    // Stencil slot of local node b seen from local node a.
    let slot = |a: usize, b: usize| -> usize {
        let mut s = 0usize;
        for k in 0..n {
            let da = (a >> (n - 1 - k)) & 1;
            let db = (b >> (n - 1 - k)) & 1;
            s = s * 3 + (db + 1 - da);
        }
        s
    };
    let corners = spec.corner_offsets();
    let mut values = vec![0.0; spec.len() * width];
    for c in 0..spec.cell_count() {
        let m = &cell_a[c * nn..(c + 1) * nn];
        let origin = spec.cell_origin(c);
        for a in 0..nb {
            let row = origin + corners[a];
            for b in 0..nb {
                let gab = &g[(a * nb + b) * nn..(a * nb + b + 1) * nn];
                // K_ab = Σ_ij M_ij ∫ ∂_jφ_b ∂_iφ_a = Σ_ij M_ij G[a][b][i][j]
                let k: f64 = (0..nn).map(|t| m[t] * gab[t]).sum();
                values[row * width + slot(a, b)] += hfac * k;
            }
        }
    }
    StencilMatrix {
        spec: spec.clone(),
        values,
        offsets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cube;

    #[test]
    fn laplacian_stencil_2d() {
        let spec = GridSpec::new(Cube::unit(2).unwrap(), 5).unwrap();
        let asm = Assembly::constant(&spec, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let k = asm.matrix();
        let i = spec.ravel(&[2, 2]);
        let row = &k.values[i * 9..(i + 1) * 9];
        // Bilinear Laplacian: 8/3 centre, -1/3 for all eight neighbours.
        assert!((row[4] - 8.0 / 3.0).abs() < 1e-14);
        for (s, v) in row.iter().enumerate() {
            if s != 4 {
                assert!((v + 1.0 / 3.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constants_in_kernel() {
        for n in [2, 3] {
            let spec = GridSpec::new(Cube::unit(n).unwrap(), 5).unwrap();
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                a[i * n + i] = 1.0 + i as f64;
            }
            a[1] = 0.3;
            let asm = Assembly::constant(&spec, &a).unwrap();
            let ones = vec![1.0; spec.len()];
            let mut y = vec![0.0; spec.len()];
            asm.matrix().apply(&ones, &mut y);
            assert!(y.iter().all(|v| v.abs() < 1e-13));
        }
    }
}
