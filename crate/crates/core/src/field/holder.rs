use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Field;
use crate::error::{invalid, Result};
use crate::grid::Cube;

/// Above this many nodes in `R` only near pairs and a fixed random sample
/// of far pairs are visited.
const FULL_ENUMERATION_NODES: usize = 4096;
const NEAR_RADIUS: i64 = 8;
const FAR_SAMPLES: usize = 100_000;
const SAMPLE_SEED: u64 = 0x5EED_0F_4A1D;

/// `max |f(x) - f(y)| / |x - y|^α` over node pairs in `R`, values measured in
/// the Euclidean (Frobenius) norm.
pub fn holder_seminorm(f: &Field, alpha: f64, r: &Cube) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("Hölder exponent must lie in (0, 1], got {alpha}")));
    }
    let spec = f.spec();
    let n = spec.n();
    let tol = 1e-9 * spec.h();
    // Per-axis node ranges inside the closed cube R.
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for a in 0..n {
        let l = ((r.lower(a) - spec.domain.lower(a) - tol) / spec.h()).ceil().max(0.0) as i64;
        let u = ((r.upper(a) - spec.domain.lower(a) + tol) / spec.h())
            .floor()
            .min((spec.m - 1) as f64) as i64;
        lo[a] = l;
        hi[a] = u;
    }
    let count: i64 = (0..n).map(|a| (hi[a] - lo[a] + 1).max(0)).product();
    if count < 2 {
        return Err(invalid("Hölder seminorm needs at least two nodes in the region"));
    }
    let ext: Vec<i64> = (0..n).map(|a| hi[a] - lo[a] + 1).collect();
    let local = |k: i64| -> [i64; 3] {
        let mut ix = [0i64; 3];
        let mut rem = k;
        for a in (0..n).rev() {
            ix[a] = lo[a] + rem % ext[a];
            rem /= ext[a];
        }
        ix
    };
    let h = spec.h();
    let quotient = |a: &[i64; 3], b: &[i64; 3]| -> f64 {
        let mut d2 = 0.0;
        let mut ia = [0usize; 3];
        let mut ib = [0usize; 3];
        for k in 0..n {
            let d = (a[k] - b[k]) as f64 * h;
            d2 += d * d;
            ia[k] = a[k] as usize;
            ib[k] = b[k] as usize;
        }
        let va = f.at(spec.ravel(&ia));
        let vb = f.at(spec.ravel(&ib));
        let dv = va
            .iter()
            .zip(vb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        dv / d2.sqrt().powf(alpha)
    };

    if count as usize <= FULL_ENUMERATION_NODES {
        let best = (0..count)
            .into_par_iter()
            .map(|i| {
                let a = local(i);
                (i + 1..count)
                    .map(|j| quotient(&a, &local(j)))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        return Ok(best);
    }

    // Near pairs: lexicographically positive offsets in the chessboard ball.
    let span = 2 * NEAR_RADIUS + 1;
    let offsets: Vec<[i64; 3]> = (0..span.pow(n as u32))
        .filter_map(|k| {
            let mut o = [0i64; 3];
            let mut rem = k;
            for a in (0..n).rev() {
                o[a] = rem % span - NEAR_RADIUS;
                rem /= span;
            }
            let first = o[..n].iter().find(|&&v| v != 0)?;
            (*first > 0).then_some(o)
        })
        .collect();
    let near = (0..count)
        .into_par_iter()
        .map(|i| {
            let a = local(i);
            let mut best = 0.0f64;
            for o in &offsets {
                let mut b = [0i64; 3];
                let mut inside = true;
                for k in 0..n {
                    b[k] = a[k] + o[k];
                    if b[k] < lo[k] || b[k] > hi[k] {
                        inside = false;
                        break;
                    }
                }
                if inside {
                    best = best.max(quotient(&a, &b));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut far = 0.0f64;
    for _ in 0..FAR_SAMPLES {
        let i = rng.gen_range(0..count);
        let j = rng.gen_range(0..count);
        if i != j {
            far = far.max(quotient(&local(i), &local(j)));
        }
    }
    Ok(near.max(far))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    #[test]
    fn linear_function_oracle() {
        let spec = GridSpec::new(Cube::unit(2).unwrap(), 9).unwrap();
        let f = Field::scalar_fn(spec.clone(), |x| x[0]).unwrap();
        let q = Cube::unit(2).unwrap();
        let v = holder_seminorm(&f, 0.5, &q).unwrap();
        // Axis pairs give |Δx|^{1/2}, maximal at the full diameter 1.
        assert!((v - 1.0).abs() < 1e-14);
        let c = Field::scalar_fn(spec, |_| 3.0).unwrap();
        assert_eq!(holder_seminorm(&c, 0.5, &q).unwrap(), 0.0);
        let tiny = Cube::new(vec![0.01, 0.01], 0.001).unwrap();
        assert!(holder_seminorm(&c, 0.5, &tiny).is_err());
    }
}
