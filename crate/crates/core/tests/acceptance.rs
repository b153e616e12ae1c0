//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any
//! failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schauder_core::field::generators::{AnalyticCoefficient, BandLimited, CoefficientClass, CoefficientParams};
use schauder_core::field::{integrate_norm_pow, node_weights, ConstSource, FnSource};
use schauder_core::grid::{ambient_grid, whitney_decompose};
use schauder_core::iterate::{
    aligned_grid, calibrate_delta, decay_at_side, gradient_bounds_from_duality, meyers_scan, pairing_split,
    IterationOptions, Variant,
};
use schauder_core::maximal::{grand_maximal, hl_levels, hl_maximal, smooth_maximal, BumpDictionary, DEFAULT_N0};
use schauder_core::norms::{duality_gap, HardyKind, HardyOptions};
use schauder_core::solver::{project_t_full, solve_sources, BoundaryCondition, DEFAULT_TOL};
use schauder_core::sparse::{partition_of_unity, sparse_bound, ProfileBump, SparseOptions};
use schauder_core::{Cube, Field, FieldKind, GridSpec, Source};

type Outcome = Result<String, String>;

fn coefficient(class: CoefficientClass, seed: u64) -> AnalyticCoefficient {
    AnalyticCoefficient::new(CoefficientParams::new(class, 2, 1.0, 4.0, seed)).unwrap()
}

fn unit_grid(m: usize) -> GridSpec {
    GridSpec::new(Cube::unit(2).unwrap(), m).unwrap()
}

fn zero_load() -> ConstSource {
    ConstSource::new(2, vec![0.0, 0.0])
}

/// `u` with `−div A∇u = 0` and boundary values from `b`.
fn harmonic(spec: &GridSpec, a: &dyn Source, b: &dyn Source) -> schauder_core::solver::SolveReport {
    let bc = BoundaryCondition::Inherited(Field::sample(spec.clone(), FieldKind::Scalar, b).unwrap());
    solve_sources(spec, a, &zero_load(), &bc, DEFAULT_TOL).unwrap()
}

fn within(a: f64, b: f64, factor: f64) -> bool {
    a > 0.0 && b > 0.0 && a.max(b) / a.min(b) <= factor
}

fn c1_solver_rate() -> Outcome {
    let a = ConstSource::new(2, vec![1.0, 0.0, 0.0, 4.0]);
    // With ∫A∇u·∇η = ∫F·∇η, F = A∇u* makes u* the solution.
    let f = FnSource::new(2, 2, |x: &[f64], o: &mut [f64]| {
        o[0] = PI * (PI * x[0]).cos() * (PI * x[1]).sin();
        o[1] = 4.0 * PI * (PI * x[0]).sin() * (PI * x[1]).cos();
    });
    let mut errs = Vec::new();
    let mut slowest: f64 = 0.0;
    for m in [33, 65] {
        let spec = unit_grid(m);
        let t = Instant::now();
        let rep = solve_sources(&spec, &a, &f, &BoundaryCondition::Zero, DEFAULT_TOL).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let w = node_weights(&spec, None);
        let e2: f64 = (0..spec.len())
            .map(|i| {
                let x = spec.point_vec(i);
                let d = rep.u.values()[i] - (PI * x[0]).sin() * (PI * x[1]).sin();
                w[i] * d * d
            })
            .sum();
        errs.push(e2.sqrt());
    }
    let rate = (errs[0] / errs[1]).log2();
    let msg = format!("L2 errors {:.3e} -> {:.3e}, rate {rate:.3}, slowest solve {slowest:.2}s", errs[0], errs[1]);
    if rate >= 1.8 && slowest <= 30.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Q1 shape gradients on the reference square at `(s, t)`, corners ordered
/// `(0,0), (1,0), (0,1), (1,1)`.
fn q1_grad(s: f64, t: f64) -> [[f64; 2]; 4] {
    [[-(1.0 - t), -(1.0 - s)], [1.0 - t, -s], [-t, 1.0 - s], [t, s]]
}

fn c2_projection() -> Outcome {
    let m = 65;
    let spec = unit_grid(m);
    let p = Cube::unit(2).unwrap();
    let h = spec.h();
    let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let a = coefficient(CoefficientClass::Holder, seed);
        let g = Field::sample(spec.clone(), FieldKind::Vector, &BandLimited::new(2, 2, 4, 8, 1000 + seed)).unwrap();
        let proj = project_t_full(&p, &a, &g, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let t = proj.t.values();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let eta: Vec<f64> = (0..spec.len())
                .map(|i| if spec.is_boundary(i) { 0.0 } else { rng.gen_range(-1.0..1.0) })
                .collect();
            // Independent cell-by-cell evaluation of ∫(ḡ − Aᵀ∇T)·∇η with
            // 2×2 Gauss points, exact for bilinear gradients.
            let (mut pair, mut scale_g, mut scale_e) = (0.0, 0.0, 0.0);
            for i in 0..m - 1 {
                for j in 0..m - 1 {
                    let nodes = [spec.ravel(&[i, j]), spec.ravel(&[i + 1, j]), spec.ravel(&[i, j + 1]), spec.ravel(&[i + 1, j + 1])];
                    let c = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                    let mut am = [0.0; 4];
                    a.eval(&c, &mut am);
                    let mut gb = [0.0; 2];
                    for &k in &nodes {
                        gb[0] += 0.25 * g.at(k)[0];
                        gb[1] += 0.25 * g.at(k)[1];
                    }
                    for &s in &gauss {
                        for &tt in &gauss {
                            let d = q1_grad(s, tt);
                            let (mut dt, mut de) = ([0.0; 2], [0.0; 2]);
                            for (k, &node) in nodes.iter().enumerate() {
                                for ax in 0..2 {
                                    dt[ax] += t[node] * d[k][ax] / h;
                                    de[ax] += eta[node] * d[k][ax] / h;
                                }
                            }
                            // (Aᵀ∇T)_r = Σ_c A[c][r] ∇T_c
                            let at = [am[0] * dt[0] + am[2] * dt[1], am[1] * dt[0] + am[3] * dt[1]];
                            let w = 0.25 * h * h;
                            pair += w * ((gb[0] - at[0]) * de[0] + (gb[1] - at[1]) * de[1]);
                            scale_g += w * (gb[0] * gb[0] + gb[1] * gb[1]);
                            scale_e += w * (de[0] * de[0] + de[1] * de[1]);
                        }
                    }
                }
            }
            worst = worst.max(pair.abs() / (scale_g * scale_e).sqrt());
        }
    }
    let msg = format!("worst relative pairing {worst:.2e} over 20 seeds x 50 test functions");
    if worst <= 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Direct double loop over centres and radii of the cube family.
fn brute_hl(f: &Field) -> Vec<f64> {
    let spec = f.spec();
    let m = spec.m as i64;
    let h = spec.h();
    let weight = |j: i64, c: i64, half: i64| -> f64 {
        if (j - c).abs() > half || j < 0 || j >= m {
            return 0.0;
        }
        let mut w = h;
        if (j - c).abs() == half {
            w *= 0.5;
        }
        if j == 0 || j == m - 1 {
            w *= 0.5;
        }
        w
    };
    let absf: Vec<f64> = (0..spec.len()).map(|i| f.at(i)[0].abs()).collect();
    let mut out = vec![0.0f64; spec.len()];
    for x in 0..spec.len() {
        let [xi, xj, _] = spec.unravel(x);
        for k in 0..=hl_levels(spec) {
            let half = 1i64 << k;
            for ci in 0..m {
                for cj in 0..m {
                    if (ci - xi as i64).abs() >= half || (cj - xj as i64).abs() >= half {
                        continue;
                    }
                    let (mut num, mut wi, mut wj) = (0.0, 0.0, 0.0);
                    for i in 0..m {
                        wi += weight(i, ci, half);
                    }
                    for j in 0..m {
                        wj += weight(j, cj, half);
                    }
                    for i in (ci - half).max(0)..=(ci + half).min(m - 1) {
                        for j in (cj - half).max(0)..=(cj + half).min(m - 1) {
                            num += weight(i, ci, half) * weight(j, cj, half) * absf[spec.ravel(&[i as usize, j as usize])];
                        }
                    }
                    out[x] = out[x].max(num / (wi * wj));
                }
            }
        }
    }
    out
}

fn c3_hl_oracle() -> Outcome {
    let spec = unit_grid(17);
    let round = |v: f64| (v * 1e12).round();
    let mut mismatches = 0;
    for seed in 0..10u64 {
        let f = Field::sample(spec.clone(), FieldKind::Scalar, &BandLimited::new(2, 1, 5, 10, 50 + seed)).unwrap();
        let fast = hl_maximal(&f);
        let slow = brute_hl(&f);
        mismatches += fast.values().iter().zip(&slow).filter(|(a, b)| round(**a) != round(**b)).count();
    }
    let msg = format!("{mismatches} mismatching nodes over 10 fields of {} nodes", spec.len());
    if mismatches == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c4_reverse_holder() -> Outcome {
    let q = Cube::new(vec![0.5, 0.5], 0.25).unwrap();
    let mut maxes = Vec::new();
    for m in [65, 129] {
        let spec = unit_grid(m);
        let mut worst: f64 = 0.0;
        for seed in 0..20u64 {
            let a = coefficient(CoefficientClass::Checkerboard, seed);
            let rep = harmonic(&spec, &a, &BandLimited::new(2, 1, 3, 6, 200 + seed));
            let r = meyers_scan(&rep.grad_u, &q, 2.0, &[2.25]).map_err(|e| e.to_string())?[0].ratio;
            if !r.is_finite() {
                return Err(format!("non-finite ratio at m={m}, seed {seed}"));
            }
            worst = worst.max(r);
        }
        maxes.push(worst);
    }
    let msg = format!("max ratio {:.4} (m=65) vs {:.4} (m=129)", maxes[0], maxes[1]);
    if within(maxes[0], maxes[1], 2.0) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c5_gradient_holder() -> Outcome {
    let q0 = Cube::new(vec![0.5, 0.5], 0.125).unwrap();
    let affine = FnSource::new(2, 1, |x: &[f64], o: &mut [f64]| o[0] = x[0] + 0.3 * x[1]);
    let quotient = |a: &dyn Source, m: usize| -> Result<f64, String> {
        let rep = harmonic(&unit_grid(m), a, &affine);
        let b = gradient_bounds_from_duality(a, &rep.u, &q0, 0.5).map_err(|e| e.to_string())?;
        if b.inconsistent {
            return Err("inconsistent gradient bounds".into());
        }
        Ok(b.holder_quotient)
    };
    let mut rough = Vec::new();
    let mut worst_drift: f64 = 1.0;
    for seed in 0..10u64 {
        let a = coefficient(CoefficientClass::Holder, seed);
        let (q65, q129) = (quotient(&a, 65)?, quotient(&a, 129)?);
        worst_drift = worst_drift.max(q65.max(q129) / q65.min(q129));
        rough.push(q129);
    }
    rough.sort_by(f64::total_cmp);
    let median = 0.5 * (rough[4] + rough[5]);
    let constant = coefficient(CoefficientClass::Constant, 0);
    let qc = quotient(&constant, 129)?;
    let msg = format!("worst 65->129 drift {worst_drift:.3}, rough median {median:.3e}, constant A {qc:.3e}");
    if worst_drift <= 1.5 && qc <= 0.1 * median {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c6_sparse() -> Outcome {
    let q = Cube::new(vec![0.0, 0.0], 1.0 / 6.0).unwrap();
    let mut maxes = Vec::new();
    let mut invalid = Vec::new();
    for m in [97, 193] {
        let spec = GridSpec::new(q.dilate(6.0).unwrap(), m).unwrap();
        let phi = ProfileBump::new(q.dilate(2.0).unwrap(), 1.0, DEFAULT_N0).unwrap().field(spec.clone()).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..20u64 {
            let a = coefficient(CoefficientClass::Holder, seed);
            let fsrc = BandLimited::new(2, 2, 4, 8, seed + 100);
            let gsrc = BandLimited::new(2, 2, 4, 8, seed + 200);
            let rep = solve_sources(&spec, &a, &fsrc, &BoundaryCondition::Zero, DEFAULT_TOL).map_err(|e| e.to_string())?;
            let f = Field::sample(spec.clone(), FieldKind::Vector, &fsrc).unwrap();
            let g = Field::sample(spec.clone(), FieldKind::Vector, &gsrc).unwrap();
            let b = sparse_bound(&rep.grad_u, &f, &g, &phi, &q, 0.5, 0.8, &SparseOptions::default())
                .map_err(|e| e.to_string())?;
            if !b.report.valid || !(b.lhs <= b.c_emp * b.rhs * (1.0 + 1e-12)) {
                invalid.push(format!("m={m} seed={seed}"));
            }
            worst = worst.max(b.c_emp);
        }
        maxes.push(worst);
    }
    let msg = format!(
        "max C_emp {:.3e} (m=97) vs {:.3e} (m=193); invalid: {:?}",
        maxes[0], maxes[1], invalid
    );
    if invalid.is_empty() && within(maxes[0], maxes[1], 2.0) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c7_one_step() -> Outcome {
    let q = Cube::new(vec![0.5, 0.5], 0.1).unwrap();
    let id = ConstSource::new(2, vec![1.0, 0.0, 0.0, 1.0]);
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let a = coefficient(CoefficientClass::Holder, seed);
        for variant in [Variant::Holder, Variant::Lq] {
            let spec = aligned_grid(&q, variant, 81).map_err(|e| e.to_string())?;
            let u = harmonic(&spec, &a, &BandLimited::new(2, 1, 3, 6, 300 + seed)).u;
            let g = BandLimited::new(2, 2, 3, 6, 400 + seed);
            let s = pairing_split(&a, &u, &id, &g, &q, variant, DEFAULT_TOL).map_err(|e| e.to_string())?;
            worst = worst.max(s.relative_error);
        }
    }
    let msg = format!("worst relative recombination error {worst:.2e} over 10 seeds, both variants");
    if worst <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c8_decay() -> Outcome {
    let center = [0.5, 0.5];
    let affine = FnSource::new(2, 1, |x: &[f64], o: &mut [f64]| o[0] = x[0] + 0.3 * x[1]);
    let opts = IterationOptions {
        depth: 3,
        ..Default::default()
    };
    let mut deltas = Vec::new();
    let mut increases = Vec::new();
    for seed in 0..10u64 {
        let a = coefficient(CoefficientClass::UniformContinuous, seed);
        let g = BandLimited::new(2, 2, 2, 6, 500 + seed);
        let q = 3.0;
        // Side 1 puts four cells of the 49-node grid over 3Q0 on the shortest
        // coefficient wavelength; side 4 would leave one.
        let cal = calibrate_delta(&a, &center, &g, &affine, q, 49, &opts, 0.5, (1.0 / 64.0, 1.0), 4)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let at = cal.history.iter().find(|h| h.0 == cal.delta).map(|h| h.1).unwrap_or(f64::NAN);
        if !(at < 0.5) {
            return Err(format!("seed {seed}: decay {at} at delta {}", cal.delta));
        }
        deltas.push(cal.delta);
        let mut prev = at;
        let mut side = cal.delta;
        for _ in 0..3 {
            side *= 0.5;
            let r = decay_at_side(&a, &center, side, &g, &affine, q, 49, &opts)
                .map_err(|e| e.to_string())?
                .decay_ratio;
            if r > prev {
                increases.push(format!("seed {seed}: {prev:.4} -> {r:.4} at side {side}"));
            }
            prev = r;
        }
    }
    let msg = format!("delta per seed {deltas:?}; increases under halving: {increases:?}");
    if increases.is_empty() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c9_duality() -> Outcome {
    let q = Cube::unit(2).unwrap();
    let opts = HardyOptions::default();
    let mut env = Vec::new();
    for m in [33, 65] {
        let spec = unit_grid(m);
        let mut worst: f64 = 0.0;
        for seed in 0..50u64 {
            let g = Field::sample(spec.clone(), FieldKind::Scalar, &BandLimited::new(2, 1, 3, 6, 600 + seed)).unwrap();
            let f = Field::sample(spec.clone(), FieldKind::Scalar, &BandLimited::new(2, 1, 3, 6, 700 + seed)).unwrap();
            let d = duality_gap(&g, &f, &q, 0.8, HardyKind::R, &opts).map_err(|e| e.to_string())?;
            if d.violation || !d.ratio.is_finite() {
                return Err(format!("violation at m={m}, pair {seed}"));
            }
            worst = worst.max(d.ratio);
        }
        env.push(worst);
    }
    let msg = format!("ratio envelope {:.4e} (m=33) vs {:.4e} (m=65)", env[0], env[1]);
    if within(env[0], env[1], 2.0) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c10_whitney() -> Outcome {
    let q = Cube::unit(2).unwrap();
    let grid = ambient_grid(&q, 97).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_sum: f64 = 0.0;
    let mut cubes = 0;
    for k in 0..10 {
        // Union of open discs inside Q.
        let discs: Vec<([f64; 2], f64)> = (0..rng.gen_range(1..4))
            .map(|_| {
                let r = rng.gen_range(0.08..0.25);
                ([rng.gen_range(r..1.0 - r), rng.gen_range(r..1.0 - r)], r)
            })
            .collect();
        let inside = |x: &[f64]| discs.iter().any(|(c, r)| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) < r * r);
        let mask: Vec<bool> = (0..grid.len()).map(|i| inside(&grid.point_vec(i))).collect();
        let w = whitney_decompose(&mask, &grid, &q).map_err(|e| format!("mask {k}: {e}"))?;
        let chk = w.check();
        if !(chk.containment && chk.exterior_contact && chk.ok(2)) {
            return Err(format!("mask {k}: {:?}", chk.violations));
        }
        cubes += w.len();
        let pou = partition_of_unity(&w, 5).map_err(|e| format!("mask {k}: {e}"))?;
        for c in &w.cubes {
            for s in 0..5 {
                for t in 0..5 {
                    let x = [
                        c.lower(0) + c.side() * s as f64 / 4.0,
                        c.lower(1) + c.side() * t as f64 / 4.0,
                    ];
                    worst_sum = worst_sum.max((pou.total(&x) - 1.0).abs());
                }
            }
        }
    }
    let msg = format!("{cubes} cubes over 10 masks; max |sum psi - 1| = {worst_sum:.1e}");
    if worst_sum <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c11_grand_vs_smooth() -> Outcome {
    let spec = unit_grid(65);
    let (p, s) = (0.8, 0.125);
    let dicts = [
        BumpDictionary::standard(2, DEFAULT_N0).unwrap(),
        BumpDictionary::doubled(2, DEFAULT_N0).unwrap(),
    ];
    let mut brackets = Vec::new();
    for d in &dicts {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for seed in 0..20u64 {
            let f = Field::sample(spec.clone(), FieldKind::Scalar, &BandLimited::new(2, 1, 4, 8, 800 + seed)).unwrap();
            let gm = grand_maximal(&f, s, d).map_err(|e| e.to_string())?;
            let sm = smooth_maximal(&f, s).map_err(|e| e.to_string())?;
            let r = integrate_norm_pow(&gm, None, p) / integrate_norm_pow(&sm, None, p);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        brackets.push((lo, hi));
    }
    let (a, b) = (brackets[0], brackets[1]);
    let mv = ((b.0 - a.0).abs() / a.0).max((b.1 - a.1).abs() / a.1);
    let msg = format!(
        "bracket [{:.4}, {:.4}] ({} bumps) -> [{:.4}, {:.4}] ({} bumps), endpoint move {:.1}%",
        a.0,
        a.1,
        dicts[0].len(),
        b.0,
        b.1,
        dicts[1].len(),
        100.0 * mv
    );
    if mv < 0.25 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("solver convergence rate", c1_solver_rate),
        ("projection contract", c2_projection),
        ("maximal function oracle", c3_hl_oracle),
        ("reverse Hölder stability", c4_reverse_holder),
        ("gradient Hölder bound", c5_gradient_holder),
        ("sparse bound", c6_sparse),
        ("one-step identity", c7_one_step),
        ("geometric decay", c8_decay),
        ("Hardy-Hölder duality", c9_duality),
        ("Whitney invariants", c10_whitney),
        ("grand vs smooth maximal", c11_grand_vs_smooth),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("PASS [{:>2}] {name}: {msg} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {msg} ({secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
