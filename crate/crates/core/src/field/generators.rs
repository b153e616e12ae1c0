//! Seeded analytic coefficient fields and data.
//!
//! Coefficients have the form `A = c·I + r·S(x)/B` with `c = (λ+Λ)/2`,
//! `r = θ(Λ-λ)/2` and a symmetric `S` whose spectral norm never exceeds `B`,
//! so `σ(A(x)) ⊂ [λ, Λ]` holds at every point without clipping.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{identity, op_norm};
use super::Source;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientClass {
    Constant,
    Holder,
    UniformContinuous,
    Checkerboard,
}

impl std::str::FromStr for CoefficientClass {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(CoefficientClass::Constant),
            "holder" => Ok(CoefficientClass::Holder),
            "uniform-continuous" => Ok(CoefficientClass::UniformContinuous),
            "checkerboard" => Ok(CoefficientClass::Checkerboard),
            _ => Err(invalid(format!("unknown coefficient class '{s}'"))),
        }
    }
}

impl std::fmt::Display for CoefficientClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CoefficientClass::Constant => "constant",
            CoefficientClass::Holder => "holder",
            CoefficientClass::UniformContinuous => "uniform-continuous",
            CoefficientClass::Checkerboard => "checkerboard",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientParams {
    pub class: CoefficientClass,
    pub n: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    /// Hölder exponent of the lacunary class.
    pub alpha: f64,
    /// Fraction of `(Λ-λ)/2` used by the perturbation, in `[0, 1]`.
    pub theta: f64,
    /// Checkerboard cell side.
    pub cell: f64,
    pub seed: u64,
}

impl CoefficientParams {
    pub fn new(class: CoefficientClass, n: usize, lambda: f64, big_lambda: f64, seed: u64) -> Self {
        CoefficientParams {
            class,
            n,
            lambda,
            big_lambda,
            alpha: 0.5,
            theta: 1.0,
            cell: 0.125,
            seed,
        }
    }
}

/// Number of lacunary octaves.
const OCTAVES: usize = 5;
const SMOOTH_MODES: usize = 4;
const CUSPS: usize = 3;

#[derive(Clone, Debug)]
enum Term {
    /// `w · cos(k·x + φ) · E`
    Wave { w: f64, k: Vec<f64>, phase: f64, e: Vec<f64> },
    /// `ω(|x - x0|) · E` with `ω(ρ) = 1/(1 + ln(1/ρ))` capped at 1.
    Cusp { x0: Vec<f64>, scale: f64, e: Vec<f64> },
}

/// Analytic coefficient field; evaluates anywhere in `R^n`.
#[derive(Clone, Debug)]
pub struct AnalyticCoefficient {
    params: CoefficientParams,
    center: f64,
    radius: f64,
    terms: Vec<Term>,
    bound: f64,
    constant: Option<Vec<f64>>,
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 0.1 && r <= 1.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Random symmetric matrix with spectral norm exactly 1.
fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    let s = op_norm(&m, n).max(1e-12);
    m.iter_mut().for_each(|x| *x /= s);
    m
}

/// Random rotation from Gram-Schmidt on random vectors, row-major.
fn random_rotation(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < n {
        let mut v = random_unit(rng, n);
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-3 {
            rows.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    rows.concat()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl AnalyticCoefficient {
    pub fn new(params: CoefficientParams) -> Result<Self> {
        let n = params.n;
        if !(2..=3).contains(&n) {
            return Err(invalid(format!("dimension {n} unsupported")));
        }
        if !(params.lambda > 0.0 && params.lambda <= params.big_lambda) {
            return Err(invalid("need 0 < lambda <= Lambda"));
        }
        if !(0.0..=1.0).contains(&params.theta) {
            return Err(invalid("theta must lie in [0, 1]"));
        }
        if params.class == CoefficientClass::Holder && !(params.alpha > 0.0 && params.alpha < 1.0) {
            return Err(invalid("Hölder class needs alpha in (0, 1)"));
        }
        if params.class == CoefficientClass::Checkerboard && !(params.cell > 0.0) {
            return Err(invalid("checkerboard cell side must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let center = 0.5 * (params.lambda + params.big_lambda);
        let radius = params.theta * 0.5 * (params.big_lambda - params.lambda);
        let mut terms = Vec::new();
        let mut constant = None;
        match params.class {
            CoefficientClass::Constant => {
                let s = random_sym(&mut rng, n);
                let mut a = identity(n);
                for (x, y) in a.iter_mut().zip(&s) {
                    *x = *x * center + radius * y;
                }
                constant = Some(a);
            }
            CoefficientClass::Holder => {
                for j in 0..OCTAVES {
                    let dir = random_unit(&mut rng, n);
                    let f = 2.0 * PI * (1u32 << j) as f64;
                    terms.push(Term::Wave {
                        w: 2f64.powf(-params.alpha * j as f64),
                        k: dir.iter().map(|d| d * f).collect(),
                        phase: rng.gen_range(0.0..2.0 * PI),
                        e: random_sym(&mut rng, n),
                    });
                }
            }
            CoefficientClass::UniformContinuous => {
                for j in 0..SMOOTH_MODES {
                    let dir = random_unit(&mut rng, n);
                    let f = 2.0 * PI * (j + 1) as f64;
                    terms.push(Term::Wave {
                        w: 1.0 / (j + 1) as f64,
                        k: dir.iter().map(|d| d * f).collect(),
                        phase: rng.gen_range(0.0..2.0 * PI),
                        e: random_sym(&mut rng, n),
                    });
                }
                for _ in 0..CUSPS {
                    terms.push(Term::Cusp {
                        x0: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
                        scale: 1.0,
                        e: random_sym(&mut rng, n),
                    });
                }
            }
            CoefficientClass::Checkerboard => {}
        }
        let bound = terms
            .iter()
            .map(|t| match t {
                Term::Wave { w, .. } => *w,
                Term::Cusp { .. } => 1.0,
            })
            .sum::<f64>()
            .max(1.0);
        Ok(AnalyticCoefficient {
            params,
            center,
            radius,
            terms,
            bound,
            constant,
        })
    }

    pub fn params(&self) -> &CoefficientParams {
        &self.params
    }

    /// `A(x)`, row-major.
    pub fn matrix(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.params.n * self.params.n];
        self.eval(x, &mut out);
        out
    }

    fn checker(&self, x: &[f64], out: &mut [f64]) {
        let n = self.params.n;
        let mut h = self.params.seed ^ 0xC0FF_EE00_D15E_A5E5;
        for &xi in x {
            let c = (xi / self.params.cell).floor() as i64;
            h = splitmix(h ^ (c as u64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let r = random_rotation(&mut rng, n);
        let ev: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    self.center + self.radius
                } else {
                    self.center - self.radius
                }
            })
            .collect();
        // A = Rᵀ diag(ev) R
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| r[k * n + i] * ev[k] * r[k * n + j]).sum();
            }
        }
    }
}

impl Source for AnalyticCoefficient {
    fn n(&self) -> usize {
        self.params.n
    }

    fn comps(&self) -> usize {
        self.params.n * self.params.n
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let n = self.params.n;
        if let Some(a) = &self.constant {
            out.copy_from_slice(a);
            return;
        }
        if self.params.class == CoefficientClass::Checkerboard {
            self.checker(x, out);
            return;
        }
        let mut s = vec![0.0; n * n];
        for t in &self.terms {
            let (coef, e) = match t {
                Term::Wave { w, k, phase, e } => {
                    let arg: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + phase;
                    (w * arg.cos(), e)
                }
                Term::Cusp { x0, scale, e } => {
                    let rho = x0
                        .iter()
                        .zip(x)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                        / scale;
                    let w = if rho <= 0.0 {
                        0.0
                    } else if rho >= 1.0 {
                        1.0
                    } else {
                        1.0 / (1.0 + (1.0 / rho).ln())
                    };
                    (w, e)
                }
            };
            s.iter_mut().zip(e).for_each(|(a, b)| *a += coef * b);
        }
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { self.center } else { 0.0 };
                out[i * n + j] = id + self.radius * s[i * n + j] / self.bound;
            }
        }
    }
}

/// Band-limited random field `Σ_k a_k cos(2π κ_k·x + φ_k) v_k` with
/// integer wave vectors `|κ|_∞ ≤ kmax` and amplitudes decaying like `1/|κ|`.
#[derive(Clone, Debug)]
pub struct BandLimited {
    n: usize,
    comps: usize,
    modes: Vec<(Vec<f64>, f64, Vec<f64>)>,
}

impl BandLimited {
    pub fn new(n: usize, comps: usize, kmax: u32, modes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(modes);
        for _ in 0..modes {
            let kappa: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(-(kmax as i64)..=kmax as i64) as f64)
                .collect();
            let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt().max(1.0);
            let amp: Vec<f64> = (0..comps).map(|_| rng.gen_range(-1.0..1.0) / norm).collect();
            let k = kappa.iter().map(|k| 2.0 * PI * k).collect();
            out.push((k, rng.gen_range(0.0..2.0 * PI), amp));
        }
        BandLimited {
            n,
            comps,
            modes: out,
        }
    }
}

impl Source for BandLimited {
    fn n(&self) -> usize {
        self.n
    }
    fn comps(&self) -> usize {
        self.comps
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, phase, amp) in &self.modes {
            let c = (k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + phase).cos();
            for (o, a) in out.iter_mut().zip(amp) {
                *o += a * c;
            }
        }
    }
}
