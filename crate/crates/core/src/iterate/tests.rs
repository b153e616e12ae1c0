use super::*;
use crate::field::generators::{AnalyticCoefficient, BandLimited, CoefficientClass, CoefficientParams};
use crate::field::{ConstSource, FnSource};
use crate::solver::{solve_sources, BoundaryCondition};

fn q0() -> Cube {
    Cube::new(vec![0.5, 0.5], 0.1).unwrap()
}

fn identity2() -> ConstSource {
    ConstSource::new(2, vec![1.0, 0.0, 0.0, 1.0])
}

/// Discretely `A`-harmonic `u` on the aligned grid with smooth boundary data.
fn harmonic(a: &dyn Source, q: &Cube, variant: Variant, m: usize, seed: u64) -> Field {
    let spec = aligned_grid(q, variant, m).unwrap();
    let b = BandLimited::new(2, 1, 3, 6, seed);
    let bc = BoundaryCondition::Inherited(Field::sample(spec.clone(), FieldKind::Scalar, &b).unwrap());
    let zero = ConstSource::new(2, vec![0.0, 0.0]);
    solve_sources(&spec, a, &zero, &bc, 1e-12).unwrap().u
}

#[test]
fn aligned_grid_puts_every_3p_on_nodes() {
    for variant in [Variant::Holder, Variant::Lq] {
        let spec = aligned_grid(&q0(), variant, 81).unwrap();
        assert!(spec.domain.contains_cube(&variant.enclosing(&q0()).unwrap(), 1e-12));
        for p in variant.children(&q0()).unwrap() {
            let (sub, _) = spec.aligned_subgrid(&p.dilate(3.0).unwrap()).unwrap();
            assert!(sub.m >= 7);
        }
    }
    assert!(matches!(aligned_grid(&q0(), Variant::Holder, 33), Err(Error::TooCoarse(_))));
}

#[test]
fn holder_cutoffs_sum_to_one() {
    let part = Cube::new(vec![0.2, -0.1], 0.3).unwrap();
    let kids = subdivide_f(&part, 27).unwrap();
    let cuts: Vec<Cut> = kids
        .iter()
        .map(|c| Cut {
            variant: Variant::Holder,
            part: part.clone(),
            child: c.clone(),
        })
        .collect();
    for &(s, t) in &[(0.0, 0.0), (-0.29, 0.13), (0.2999, -0.2999), (0.011, 0.17)] {
        let x = [0.2 + s, -0.1 + t];
        let total: f64 = cuts.iter().map(|c| c.value(&x)).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }
    assert_eq!(cuts[0].value(&[0.9, 0.9]), 0.0);
}

#[test]
fn constant_coefficient_has_no_remainder() {
    let a = identity2();
    for variant in [Variant::Holder, Variant::Lq] {
        let u = harmonic(&a, &q0(), variant, 81, 3);
        let g = BandLimited::new(2, 2, 3, 6, 4);
        let s = pairing_split(&a, &u, &a, &g, &q0(), variant, 1e-12).unwrap();
        assert!(s.cubes.iter().all(|c| c.term_ii == 0.0));
        assert!(s.relative_error < 1e-8, "{variant:?}: {}", s.relative_error);
    }
}

#[test]
fn zero_data_splits_to_zero() {
    let a = identity2();
    let u = harmonic(&a, &q0(), Variant::Lq, 49, 1);
    let g = ConstSource::new(2, vec![0.0, 0.0]);
    let s = pairing_split(&a, &u, &a, &g, &q0(), Variant::Lq, 1e-10).unwrap();
    assert_eq!((s.direct, s.term_i, s.term_ii_sum, s.relative_error), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn split_is_an_identity_for_variable_coefficients() {
    let a = AnalyticCoefficient::new(CoefficientParams::new(CoefficientClass::Holder, 2, 1.0, 4.0, 7)).unwrap();
    for variant in [Variant::Holder, Variant::Lq] {
        let u = harmonic(&a, &q0(), variant, 81, 8);
        let g = BandLimited::new(2, 2, 3, 6, 9);
        let s = pairing_split(&a, &u, &identity2(), &g, &q0(), variant, 1e-12).unwrap();
        assert!(s.term_ii_sum != 0.0);
        assert!(s.relative_error < 1e-6, "{variant:?}: {}", s.relative_error);
    }
}

#[test]
fn misaligned_grid_is_rejected() {
    let a = identity2();
    let spec = GridSpec::new(Variant::Lq.enclosing(&q0()).unwrap(), 41).unwrap();
    let u = Field::zeros(spec, FieldKind::Scalar);
    let g = ConstSource::new(2, vec![1.0, 0.0]);
    assert!(pairing_split(&a, &u, &a, &g, &q0(), Variant::Lq, 1e-10).is_err());
}

#[test]
fn constant_coefficient_iteration_stops_after_level_zero() {
    let a = ConstSource::new(2, vec![2.0, 0.5, 0.5, 1.0]);
    let u = harmonic(&a, &q0(), Variant::Lq, 49, 2);
    let g = BandLimited::new(2, 2, 3, 6, 5);
    let opts = IterationOptions {
        depth: 2,
        ..Default::default()
    };
    let t = run_iteration(&a, &u, &g, &q0(), Variant::Lq, 3.0, &opts).unwrap();
    assert!(t.levels[0].term_sum > 0.0);
    assert!(t.levels[1..].iter().all(|l| l.term_sum == 0.0));
    assert_eq!(t.decay_ratio, 0.0);
    assert_eq!(t.levels[1].cube_count, 64);
    assert_eq!(t.chain.cubes.len(), 2);
}

#[test]
fn affine_solution_gradient_bounds() {
    let q = Cube::new(vec![0.0, 0.0], 0.25).unwrap();
    let spec = GridSpec::new(q.dilate(4.0).unwrap(), 33).unwrap();
    let u = Field::scalar_fn(spec, |x| 3.0 * x[0] - 4.0 * x[1] + 1.0).unwrap();
    let b = gradient_bounds_from_duality(&identity2(), &u, &q, 0.5).unwrap();
    assert!(b.holder_quotient < 1e-10);
    assert!((b.sup_norm - 5.0).abs() < 1e-10);
    assert!((b.l2_avg - 5.0).abs() < 1e-10);
}

#[test]
fn quadratic_solution_gradient_bounds() {
    // u = x² - y² is discretely harmonic for the bilinear Laplacian, and its
    // nodal gradient is exact at interior nodes.
    let q = Cube::new(vec![0.1, -0.2], 0.25).unwrap();
    let spec = GridSpec::new(q.dilate(4.0).unwrap(), 41).unwrap();
    let u = Field::scalar_fn(spec.clone(), |x| x[0] * x[0] - x[1] * x[1]).unwrap();
    let alpha = 0.5;
    let b = gradient_bounds_from_duality(&identity2(), &u, &q, alpha).unwrap();
    let q2 = q.dilate(2.0).unwrap();
    let corner = |sx: f64, sy: f64| {
        let x = q.center()[0] + sx * q2.half_side();
        let y = q.center()[1] + sy * q2.half_side();
        2.0 * (x * x + y * y).sqrt()
    };
    let sup = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
        .iter()
        .map(|&(a, c)| corner(a, c))
        .fold(0.0, f64::max);
    assert!((b.sup_norm - sup).abs() < 1e-9, "{} vs {sup}", b.sup_norm);
    // |∇u(x) - ∇u(y)| = 2|x - y|, so the seminorm is 2·diam^{1-α}.
    let diam = q2.side() * 2f64.sqrt();
    let semi = 2.0 * diam.powf(1.0 - alpha);
    let want = semi * q.side().powf(alpha) / b.l2_avg;
    assert!((b.holder_quotient - want).abs() < 1e-9 * want);
    let bad = Field::scalar_fn(spec, |x| x[0] * x[0]).unwrap();
    assert!(gradient_bounds_from_duality(&identity2(), &bad, &q, alpha).is_err());
}

#[test]
fn meyers_scan_constant_gradient_and_monotonicity() {
    let q = Cube::new(vec![0.0, 0.0], 0.2).unwrap();
    let spec = GridSpec::new(q.dilate(3.0).unwrap(), 25).unwrap();
    let c = Field::from_fn(spec.clone(), FieldKind::Vector, |_, o| {
        o[0] = 1.0;
        o[1] = -2.0;
    })
    .unwrap();
    for r in meyers_scan(&c, &q, 2.0, &[2.0, 3.0, 7.5]).unwrap() {
        assert!((r.ratio - 1.0).abs() < 1e-12);
    }
    let w = FnSource::new(2, 2, |x: &[f64], o: &mut [f64]| {
        o[0] = (7.0 * x[0]).sin() + 2.0 * x[1];
        o[1] = x[0] * x[1];
    });
    let f = Field::sample(spec, FieldKind::Vector, &w).unwrap();
    let rows = meyers_scan(&f, &q, 2.0, &[2.0, 2.5, 3.0, 4.0]).unwrap();
    assert!(rows.windows(2).all(|p| p[1].ratio >= p[0].ratio));
}

#[test]
fn delta_bisection_brackets_the_target() {
    let a = AnalyticCoefficient::new(CoefficientParams::new(CoefficientClass::UniformContinuous, 2, 1.0, 4.0, 1))
        .unwrap();
    let g = BandLimited::new(2, 2, 2, 6, 11);
    let b = FnSource::new(2, 1, |x: &[f64], o: &mut [f64]| o[0] = x[0] + 0.3 * x[1]);
    let opts = IterationOptions {
        depth: 2,
        ..Default::default()
    };
    let top = decay_at_side(&a, &[0.5, 0.5], 1.0, &g, &b, 3.0, 49, &opts).unwrap().decay_ratio;
    assert!(top > 0.0 && top < 0.5);
    let target = 0.5 * top;
    let cal = calibrate_delta(&a, &[0.5, 0.5], &g, &b, 3.0, 49, &opts, target, (1e-4, 1.0), 6).unwrap();
    assert!(cal.delta < 1.0);
    let at = cal.history.iter().find(|h| h.0 == cal.delta).unwrap().1;
    assert!(at < target);
    assert_eq!(cal.history.len(), 8);
}
