//! Finite bump dictionaries standing in for the normalized class on
//! `Q(0,1)`: smooth `φ` supported in the cube with
//! `Σ_{|γ|≤N0} 2^{|γ|} |∂^γφ| ≤ 1` pointwise (`ℓ(Q(0,1)) = 2`).

use serde::Serialize;

use super::{convolve, eta, profile_integral, radius_ladder, Kernel1d};
use crate::error::{invalid, Error, Result};
use crate::field::{Field, FieldKind};

pub const DEFAULT_N0: u32 = 2;

const WIDTHS: [f64; 5] = [0.9, 0.75, 0.6, 0.45, 0.3];
const OFFSETS: usize = 5;

/// Truncated Taylor series `Σ c_k (t - t0)^k`.
#[derive(Clone, Debug)]
struct Jet(Vec<f64>);

impl Jet {
    fn variable(t: f64, order: usize) -> Jet {
        let mut c = vec![0.0; order + 1];
        c[0] = t;
        if order > 0 {
            c[1] = 1.0;
        }
        Jet(c)
    }

    fn mul(&self, o: &Jet) -> Jet {
        let n = self.0.len();
        Jet((0..n)
            .map(|k| (0..=k).map(|j| self.0[j] * o.0[k - j]).sum())
            .collect())
    }

    fn recip(&self) -> Jet {
        let n = self.0.len();
        let mut b = vec![0.0; n];
        b[0] = 1.0 / self.0[0];
        for k in 1..n {
            let s: f64 = (1..=k).map(|j| self.0[j] * b[k - j]).sum();
            b[k] = -s * b[0];
        }
        Jet(b)
    }

    fn exp(&self) -> Jet {
        let n = self.0.len();
        let mut e = vec![0.0; n];
        e[0] = self.0[0].exp();
        for k in 1..n {
            let s: f64 = (1..=k).map(|j| j as f64 * self.0[j] * e[k - j]).sum();
            e[k] = s / k as f64;
        }
        Jet(e)
    }
}

/// `η^{(k)}(t)` for `k = 0..=order`.
pub(crate) fn eta_derivatives(t: f64, order: usize) -> Vec<f64> {
    if t.abs() >= 1.0 {
        return vec![0.0; order + 1];
    }
    let x = Jet::variable(t, order);
    let mut u = x.mul(&x);
    u.0.iter_mut().for_each(|c| *c = -*c);
    u.0[0] += 1.0;
    let mut g = u.recip();
    g.0.iter_mut().for_each(|c| *c = -*c);
    let e = g.exp();
    let mut fact = 1.0;
    e.0.iter()
        .enumerate()
        .map(|(k, c)| {
            if k > 0 {
                fact *= k as f64;
            }
            c * fact
        })
        .collect()
}

/// Multi-indices with `|γ| ≤ order` in `n` variables.
pub(crate) fn multi_indices(n: usize, order: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for g in &out {
            let used: u32 = g.iter().sum();
            for k in 0..=(order - used) {
                let mut h = g.clone();
                h.push(k);
                next.push(h);
            }
        }
        out = next;
    }
    out
}

/// `φ(x) = a Π η((x_i - o_i)/w)`, supported in `Q(o, w) ⊂ Q(0,1)`.
#[derive(Clone, Debug, Serialize)]
pub struct Bump {
    pub width: f64,
    pub offset: Vec<f64>,
    pub amplitude: f64,
}

impl Bump {
    /// Bump with amplitude fixed so that the sampled sup of
    /// `Σ_{|γ|≤N0} 2^{|γ|}|∂^γφ|` equals one.
    pub fn normalized(width: f64, offset: Vec<f64>, n0: u32) -> Result<Bump> {
        if !(width > 0.0 && width <= 1.0) {
            return Err(invalid(format!("bump width must lie in (0, 1], got {width}")));
        }
        if offset.iter().any(|o| o.abs() + width > 1.0 + 1e-12) {
            return Err(invalid("bump support must stay inside Q(0,1)"));
        }
        let mut b = Bump {
            width,
            offset,
            amplitude: 1.0,
        };
        b.amplitude = 1.0 / b.normalization_sup(n0, 201, 0.0);
        Ok(b)
    }

    pub fn n(&self) -> usize {
        self.offset.len()
    }

    /// Sup over a product sample grid (`pts` per axis, shifted by `shift`
    /// of a spacing) of `Σ 2^{|γ|}|∂^γφ|`.
    pub fn normalization_sup(&self, n0: u32, pts: usize, shift: f64) -> f64 {
        let n = self.n();
        let order = n0 as usize;
        let w = self.width;
        // tables[a][p][k] = |∂^k of the a-th factor| at sample p.
        let tables: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                (0..pts)
                    .map(|p| {
                        let s = -1.0 + 2.0 * (p as f64 + 0.5 + shift) / pts as f64;
                        let d = eta_derivatives(s, order);
                        (0..=order)
                            .map(|k| (d[k] * w.powi(-(k as i32))).abs())
                            .collect::<Vec<f64>>()
                    })
                    .collect()
            })
            .collect();
        let gammas = multi_indices(n, n0);
        let total = pts.pow(n as u32);
        let mut best = 0.0f64;
        let mut ix = vec![0usize; n];
        for lin in 0..total {
            let mut rem = lin;
            for a in (0..n).rev() {
                ix[a] = rem % pts;
                rem /= pts;
            }
            let mut s = 0.0;
            for g in &gammas {
                let order: u32 = g.iter().sum();
                let prod: f64 = (0..n).map(|a| tables[a][ix[a]][g[a] as usize]).product();
                s += 2f64.powi(order as i32) * prod;
            }
            best = best.max(s);
        }
        // Samples live in the factor coordinate s = (x - o)/w, which covers
        // the support for any (o, w).
        self.amplitude * best
    }

    /// 1D factor kernel along `axis` at dilation `t` on spacing `h`,
    /// normalized to the continuum mass `w·I`. `None` when no node falls in
    /// the support.
    fn kernel(&self, axis: usize, t: f64, h: f64, mass_unit: f64) -> Option<Kernel1d> {
        let o = self.offset[axis];
        let w = self.width;
        let lo = ((t * (o - w)) / h).floor() as i64;
        let hi = ((t * (o + w)) / h).ceil() as i64;
        let mut start = None;
        let mut weights = Vec::new();
        for j in lo..=hi {
            let v = eta((j as f64 * h / t - o) / w);
            if v > 0.0 {
                if start.is_none() {
                    start = Some(j);
                }
                weights.push(v);
            } else if start.is_some() {
                break;
            }
        }
        let start = start?;
        let total: f64 = weights.iter().sum();
        let target = w * mass_unit;
        Some(Kernel1d {
            start,
            weights: weights.iter().map(|v| v * target / total).collect(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BumpDictionary {
    pub n: usize,
    pub n0: u32,
    pub bumps: Vec<Bump>,
}

impl BumpDictionary {
    /// The standard profile alone, rescaled into the normalization.
    pub fn standard_only(n: usize, n0: u32) -> Result<Self> {
        Ok(BumpDictionary {
            n,
            n0,
            bumps: vec![Bump::normalized(1.0, vec![0.0; n], n0)?],
        })
    }

    /// Standard profile plus 5 widths × 5 diagonal offsets (26 bumps).
    pub fn standard(n: usize, n0: u32) -> Result<Self> {
        let mut d = BumpDictionary::standard_only(n, n0)?;
        for &w in &WIDTHS {
            for o in offsets(w) {
                d.bumps.push(Bump::normalized(w, vec![o; n], n0)?);
            }
        }
        Ok(d)
    }

    /// `standard` plus the same widths at anti-diagonal offsets (51 bumps);
    /// a superset of `standard`.
    pub fn doubled(n: usize, n0: u32) -> Result<Self> {
        let mut d = BumpDictionary::standard(n, n0)?;
        for &w in &WIDTHS {
            for o in offsets(w) {
                let off = (0..n).map(|a| if a % 2 == 0 { o } else { -o }).collect();
                d.bumps.push(Bump::normalized(w, off, n0)?);
            }
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.bumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bumps.is_empty()
    }

    /// Largest normalization sum over all bumps on a finer, shifted sample
    /// grid than the one used to fix amplitudes.
    pub fn certify(&self) -> f64 {
        let pts = if self.n == 2 { 301 } else { 61 };
        self.bumps
            .iter()
            .map(|b| b.normalization_sup(self.n0, pts, 0.37))
            .fold(0.0, f64::max)
    }
}

fn offsets(w: f64) -> Vec<f64> {
    (0..OFFSETS)
        .map(|k| (-1.0 + 2.0 * k as f64 / (OFFSETS - 1) as f64) * (1.0 - w))
        .collect()
}

/// `sup_t sup_φ |φ_t ∗ f|` over the radius ladder of `s` and the
/// dictionary, `φ_t(x) = t^{-n} φ(x/t)`.
pub fn grand_maximal(f: &Field, s: f64, dict: &BumpDictionary) -> Result<Field> {
    if dict.is_empty() {
        return Err(invalid("bump dictionary is empty"));
    }
    if dict.n != f.n() {
        return Err(invalid("dictionary dimension differs from the field's"));
    }
    let h = f.spec().h();
    if !(s >= 4.0 * h * (1.0 - 1e-12)) {
        return Err(Error::UnderResolved { s, min: 4.0 * h, h });
    }
    let unit = profile_integral();
    let n = f.n();
    let mut best = vec![0.0f64; f.spec().len()];
    for t in radius_ladder(s, h) {
        for b in &dict.bumps {
            let ks: Option<Vec<Kernel1d>> = (0..n).map(|a| b.kernel(a, t, h, unit)).collect();
            let Some(mut ks) = ks else { continue };
            ks[0].weights.iter_mut().for_each(|w| *w *= b.amplitude);
            let conv = convolve(f, &ks);
            for (idx, c) in conv.chunks(f.comps()).enumerate() {
                let v = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                best[idx] = best[idx].max(v);
            }
        }
    }
    Ok(Field::new_unchecked(f.spec().clone(), FieldKind::Scalar, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_derivatives_match_closed_form() {
        let t: f64 = 0.37;
        let u = 1.0 - t * t;
        let e = (-1.0 / u).exp();
        let g1 = -2.0 * t / (u * u);
        let g2 = -2.0 / (u * u) - 8.0 * t * t / (u * u * u);
        let d = eta_derivatives(t, 2);
        assert!((d[0] - e).abs() < 1e-15);
        assert!((d[1] - e * g1).abs() < 1e-14);
        assert!((d[2] - e * (g1 * g1 + g2)).abs() < 1e-13);
        // Third derivative against a centred difference of the second.
        let hh = 1e-5;
        let fd = (eta_derivatives(t + hh, 2)[2] - eta_derivatives(t - hh, 2)[2]) / (2.0 * hh);
        assert!((eta_derivatives(t, 3)[3] - fd).abs() < 1e-6);
    }

    #[test]
    fn dictionary_sizes_and_certificate() {
        let d = BumpDictionary::standard(2, DEFAULT_N0).unwrap();
        assert_eq!(d.len(), 26);
        assert!(d.certify() <= 1.05);
        assert_eq!(BumpDictionary::doubled(2, DEFAULT_N0).unwrap().len(), 51);
        assert_eq!(multi_indices(2, 2).len(), 6);
        assert_eq!(multi_indices(3, 2).len(), 10);
    }
}
