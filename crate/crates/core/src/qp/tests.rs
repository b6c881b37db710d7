use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::rng;

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn problem(a: &[f64], b: &[f64], d: &[f64], v0: &[f64], l: &[f64]) -> QpProblem {
    let p = b.len();
    QpProblem::new(DMatrix::from_row_slice(p, p, a), dv(b), dv(d), dv(v0), dv(l)).unwrap()
}

fn scalar(b: f64, d: f64, v0: f64, l: f64) -> QpProblem {
    problem(&[2.0], &[b], &[d], &[v0], &[l])
}

/// Gram-matrix problem with mixed-sign entries; `finite_l` keeps every bound finite.
fn random_problem(seed: u64, p: usize, finite_l: bool) -> QpProblem {
    crate::sim::random_qp(seed, p, finite_l).unwrap()
}

fn random_interior(problem: &QpProblem, seed: u64) -> DVector<f64> {
    let mut r = rng::stream(seed, &[99]);
    DVector::from_fn(problem.dim(), |i, _| {
        let hi = problem.l()[i].min(5.0);
        r.random_range(1e-3..=1.0) * hi
    })
}

/// Exact minimizer of `1/2 q x^2 + g x + d |x - v0|` over `[0, l]`.
fn scalar_argmin(q: f64, g: f64, d: f64, v0: f64, l: f64) -> f64 {
    let f = |x: f64| 0.5 * q * x * x + g * x + d * (x - v0).abs();
    let mut cands = vec![0.0, v0.min(l)];
    if l.is_finite() {
        cands.push(l);
    }
    if q > 0.0 {
        for (x, above) in [(-(g + d) / q, true), (-(g - d) / q, false)] {
            if (above && x > v0) || (!above && x < v0) {
                cands.push(x.clamp(0.0, l));
            }
        }
    }
    cands.into_iter().min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
}

/// Grid search over the box followed by exact cyclic coordinate descent.
fn brute_force_min(problem: &QpProblem) -> f64 {
    let p = problem.dim();
    let steps = [0, 3000, 800, 100][p];
    let mut best = DVector::zeros(p);
    let mut best_f = f64::INFINITY;
    let mut idx = vec![0usize; p];
    loop {
        let v = DVector::from_fn(p, |i, _| problem.l()[i] * idx[i] as f64 / steps as f64);
        let f = objective(problem, &v).unwrap();
        if f < best_f {
            best_f = f;
            best = v;
        }
        let mut k = 0;
        while k < p {
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == p {
            break;
        }
    }
    let a = problem.a();
    for _ in 0..20_000 {
        for i in 0..p {
            let g: f64 = problem.b()[i] + (0..p).filter(|&j| j != i).map(|j| a[(i, j)] * best[j]).sum::<f64>();
            best[i] = scalar_argmin(a[(i, i)], g, problem.d()[i], problem.v0()[i], problem.l()[i]);
        }
    }
    objective(problem, &best).unwrap()
}

#[test]
fn split_matrix_examples() {
    let (p, m) = split_matrix(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
    assert_eq!(p, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]));
    assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));

    let (p, m) = split_matrix(&DMatrix::from_element(1, 1, 0.0));
    assert_eq!((p[(0, 0)], m[(0, 0)]), (0.0, 0.0));

    let a = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
    let (p, m) = split_matrix(&a);
    assert_eq!(p, a);
    assert_eq!(m, DMatrix::zeros(2, 2));
}

#[test]
fn objective_examples() {
    assert_eq!(objective(&scalar(-2.0, 0.0, 0.0, f64::INFINITY), &dv(&[1.0])).unwrap(), -1.0);

    let q = problem(&[2.0, 0.0, 0.0, 2.0], &[0.0, 0.0], &[1.0, 1.0], &[0.0, 0.0], &[5.0, 5.0]);
    assert_eq!(objective(&q, &dv(&[1.0, 1.0])).unwrap(), 4.0);

    let r = random_problem(3, 4, true);
    let r = QpProblem::new(r.a().clone(), DVector::zeros(4), r.d().clone(), r.v0().clone(), r.l().clone()).unwrap();
    let v0 = r.v0().clone();
    let expected = 0.5 * v0.dot(&(r.a() * &v0));
    assert_relative_eq!(objective(&r, &v0).unwrap(), expected, max_relative = 1e-14);

    assert!(matches!(objective(&q, &dv(&[1.0])), Err(Error::Dimension { .. })));
}

#[test]
fn mu_update_examples() {
    let q = scalar(-2.0, 0.0, 0.0, f64::INFINITY);
    assert_eq!(mu_update(&q, &dv(&[1.0])).unwrap()[0], 1.0);
    assert_eq!(mu_update(&q, &dv(&[0.5])).unwrap()[0], 1.0);

    let kink = scalar(0.0, 1.0, 0.5, 1.0);
    let step = coordinate_step(1.0, 0.0, 0.0, 1.0, 0.5, 1.0, 0.5);
    assert_eq!(step.r1, 0.0);
    assert_eq!(step.r2, 0.5);
    assert_eq!(step.branch, Branch::Anchor);
    assert_eq!(mu_update(&kink, &dv(&[0.5])).unwrap()[0], 0.5);
}

#[test]
fn mu_update_rejects_points_outside_the_box() {
    let q = scalar(-2.0, 0.0, 0.0, 1.0);
    assert!(mu_update(&q, &dv(&[1.5])).is_err());
    assert!(mu_update(&q, &dv(&[-0.1])).is_err());
}

#[test]
fn zero_quadratic_coefficient_uses_the_limit() {
    // a = 0, beta > 0: linear root c v / beta
    let s = coordinate_step(0.0, 2.0, 4.0, 0.0, 0.0, 10.0, 1.0);
    assert_eq!(s.r1, 0.5);
    assert_eq!(s.value, 0.5);
    // no positive root: +inf, clamped by l
    let s = coordinate_step(0.0, 2.0, -4.0, 0.0, 0.0, 10.0, 1.0);
    assert_eq!(s.r1, f64::INFINITY);
    assert_eq!(s.value, 10.0);
    // fully indeterminate: unchanged
    let s = coordinate_step(0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 0.7);
    assert_eq!(s.r1, 0.7);
}

#[test]
fn unbounded_growth_is_reported() {
    // A = 0, b < 0, l = inf: the iterate runs away
    let q = QpProblem::new(DMatrix::zeros(1, 1), dv(&[-1.0]), dv(&[0.0]), dv(&[0.0]), dv(&[f64::INFINITY])).unwrap();
    assert!(matches!(mu_update(&q, &dv(&[1.0])), Err(Error::NonFinite { .. })));
}

#[test]
fn solve_qp_examples() {
    let opts = SolverOptions::default();
    let s = solve_qp(&scalar(-2.0, 0.0, 0.0, 10.0), &opts).unwrap();
    assert!(s.converged);
    assert_relative_eq!(s.v[0], 1.0, epsilon = 1e-8);
    assert_relative_eq!(s.objective, -1.0, epsilon = 1e-12);

    let r = random_problem(11, 5, false);
    let zero = QpProblem::new(r.a().clone(), DVector::zeros(5), DVector::zeros(5), DVector::zeros(5), r.l().clone()).unwrap();
    let s = solve_qp(&zero, &opts).unwrap();
    assert!(s.v.amax() < 1e-6, "{}", s.v);
    assert!(s.objective.abs() < 1e-10);

    let q = problem(&[2.0, 0.0, 0.0, 2.0], &[-2.0, -6.0], &[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]);
    let s = solve_qp(&q, &opts).unwrap();
    assert!(s.converged);
    assert_relative_eq!(s.v[0], 0.5, epsilon = 1e-8);
    assert_relative_eq!(s.v[1], 1.0, epsilon = 1e-8);
    assert!(s.kkt_residual < 1e-8);
}

#[test]
fn iteration_cap_is_not_an_error() {
    let q = random_problem(5, 6, true);
    let s = solve_qp(&q, &SolverOptions::default().with_max_iter(1)).unwrap();
    assert!(!s.converged);
    assert_eq!(s.iterations, 1);
}

#[test]
fn invalid_problems_are_rejected() {
    let bad_d = QpProblem::new(DMatrix::identity(1, 1), dv(&[0.0]), dv(&[-1.0]), dv(&[0.0]), dv(&[1.0]));
    assert!(matches!(bad_d, Err(Error::Invalid(m)) if m.contains("d must be")));
    let bad_l = QpProblem::new(DMatrix::identity(1, 1), dv(&[0.0]), dv(&[0.0]), dv(&[0.0]), dv(&[0.0]));
    assert!(bad_l.is_err());
    let asym = QpProblem::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
        dv(&[0.0, 0.0]),
        dv(&[0.0, 0.0]),
        dv(&[0.0, 0.0]),
        dv(&[1.0, 1.0]),
    );
    assert!(asym.is_err());
    let indefinite = QpProblem::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        dv(&[0.0, 0.0]),
        dv(&[0.0, 0.0]),
        dv(&[0.0, 0.0]),
        dv(&[1.0, 1.0]),
    );
    assert!(matches!(indefinite, Err(Error::NotPsd { .. })));
    let bad_opts = SolverOptions::default().with_tol(0.0);
    assert!(solve_qp(&scalar(-2.0, 0.0, 0.0, 1.0), &bad_opts).is_err());
}

#[test]
fn kkt_residual_examples() {
    let q = scalar(-2.0, 0.0, 0.0, 10.0);
    assert_eq!(kkt_residual(&q, &dv(&[1.0])).unwrap(), 0.0);
    assert_eq!(kkt_residual(&q, &dv(&[10.0])).unwrap(), 18.0);
    assert_eq!(kkt_residual_with_tolerance(&q, &dv(&[10.0]), 0.0).unwrap(), 18.0);

    let kink = scalar(0.0, 1.0, 0.5, 1.0);
    assert_eq!(kkt_residual(&kink, &dv(&[0.5])).unwrap(), 0.0);
    assert_eq!(kkt_residual_with_tolerance(&kink, &dv(&[0.5]), 0.0).unwrap(), 0.0);
}

#[test]
fn kkt_residual_bound_cones() {
    // gradient 2v - 2 at v = l = 0.5 is -1: pushing outward, allowed
    let q = scalar(-2.0, 0.0, 0.0, 0.5);
    assert_eq!(kkt_residual_with_tolerance(&q, &dv(&[0.5]), 0.0).unwrap(), 0.0);
    // gradient at 0 is -2: would like to increase, not optimal
    assert_eq!(kkt_residual_with_tolerance(&q, &dv(&[0.0]), 0.0).unwrap(), 2.0);
    // b = 2: minimizer at 0
    let r = scalar(2.0, 0.0, 0.0, 1.0);
    assert_eq!(kkt_residual_with_tolerance(&r, &dv(&[0.0]), 0.0).unwrap(), 0.0);
    // near-zero coordinate is certified only with a tolerance
    assert!(kkt_residual_with_tolerance(&r, &dv(&[1e-9]), 0.0).unwrap() > 1.0);
    assert_eq!(kkt_residual(&r, &dv(&[1e-9])).unwrap(), 0.0);
}

#[test]
fn auxiliary_examples() {
    let q = problem(&[2.0, -1.0, -1.0, 2.0], &[0.3, -0.2], &[0.5, 0.1], &[0.2, 0.0], &[3.0, 3.0]);
    let u = dv(&[1.0, 1.0]);
    let v = dv(&[2.0, 2.0]);
    let g = auxiliary_g(&q, &u, &v).unwrap();
    // A+ part: 1/2 (2 + 2) = 2; A- part: -1/2 * 2 * 4 * (1 + ln(1/4)); linear part
    let expected = 2.0 - 4.0 * (1.0 + (0.25_f64).ln()) + (0.3 - 0.2) + 0.5 * 0.8 + 0.1;
    assert_relative_eq!(g, expected, max_relative = 1e-14);
    assert!(g >= objective(&q, &u).unwrap());
    assert_relative_eq!(auxiliary_g(&q, &v, &v).unwrap(), objective(&q, &v).unwrap(), max_relative = 1e-14);

    assert!(matches!(auxiliary_g(&q, &u, &dv(&[0.0, 1.0])), Err(Error::LogDomain { index: 0 })));
    assert!(matches!(auxiliary_g(&q, &dv(&[1.0, 0.0]), &v), Err(Error::LogDomain { index: 1 })));
}

#[test]
fn json_round_trip() {
    let text = r#"{"A": [[2.0]], "b": [-2], "d": [0], "v0": [0], "l": ["inf"]}"#;
    let q = QpProblemJson::parse(text).unwrap();
    assert_eq!(q.l()[0], f64::INFINITY);
    let back = QpProblemJson::from_problem(&q);
    let again = serde_json::to_string(&back).unwrap();
    assert!(again.contains("\"inf\""));
    assert!(QpProblemJson::parse(r#"{"A": [[2.0]], "b": [-2], "d": [-1], "v0": [0], "l": [1]}"#).is_err());
    let err = QpProblemJson::parse("{\"A\": [[2.0]],\n \"b\": [-2]}").unwrap_err();
    assert!(err.to_string().contains("missing field"), "{err}");
}

#[test]
fn small_problems_match_brute_force() {
    for seed in 0..12 {
        let p = 1 + (seed as usize % 3);
        let q = random_problem(seed, p, true);
        let s = solve_qp(&q, &SolverOptions::default()).unwrap();
        let oracle = brute_force_min(&q);
        assert!((s.objective - oracle).abs() <= 1e-5, "seed {seed}: {} vs {oracle}", s.objective);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn descent_and_feasibility(seed in any::<u64>(), p in 1usize..8) {
        let q = random_problem(seed, p, false);
        let opts = SolverOptions::default().with_max_iter(2000).with_trace(true);
        let mut inside = true;
        let s = solve_qp_observed(&q, &opts, |_, v| {
            inside &= (0..v.len()).all(|i| v[i] >= 0.0 && v[i] <= q.l()[i]);
        });
        // unbounded directions can make the iterate non-finite
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        prop_assert!(inside);
        for w in s.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()), "{} -> {}", w[0], w[1]);
        }
        let recomputed = objective(&q, &s.v).unwrap();
        prop_assert!((recomputed - s.objective).abs() <= 1e-12 * recomputed.abs().max(1e-300));
    }

    #[test]
    fn branches_are_mutually_exclusive(a in 0.0..10.0_f64, c in 0.0..10.0_f64, b in -10.0..10.0_f64,
                                       d in 0.0..5.0_f64, v0 in 0.0..3.0_f64, v in 1e-6..5.0_f64) {
        let s = coordinate_step(a, c, b, d, v0, f64::INFINITY, v);
        prop_assert!(!(s.r1 > v0 && s.r2 < v0), "{s:?}");
        prop_assert!(s.r1 <= s.r2);
    }

    #[test]
    fn majorization(seed in any::<u64>(), p in 1usize..7) {
        let q = random_problem(seed, p, true);
        let u = random_interior(&q, seed ^ 1);
        let v = random_interior(&q, seed ^ 2);
        let fv = objective(&q, &v).unwrap();
        let gvv = auxiliary_g(&q, &v, &v).unwrap();
        prop_assert!((gvv - fv).abs() <= 1e-12 * fv.abs().max(1.0));
        prop_assert!(auxiliary_g(&q, &u, &v).unwrap() >= objective(&q, &u).unwrap() - 1e-10);
    }

    #[test]
    fn reduces_to_nonnegative_qp_update(seed in any::<u64>(), p in 1usize..7) {
        let base = random_problem(seed, p, true);
        let q = QpProblem::new(base.a().clone(), base.b().clone(), DVector::zeros(p),
                               DVector::zeros(p), DVector::from_element(p, f64::INFINITY)).unwrap();
        let v = random_interior(&base, seed);
        let next = mu_update(&q, &v).unwrap();
        let (ap, am) = split_matrix(q.a());
        let (a, c) = (&ap * &v, &am * &v);
        for i in 0..p {
            let bi = q.b()[i];
            let classic = v[i] * (-bi + (bi * bi + 4.0 * a[i] * c[i]).sqrt()) / (2.0 * a[i]);
            prop_assert!((next[i] - classic).abs() <= 1e-12 * classic.abs().max(1e-300) + 1e-15,
                         "{} vs {}", next[i], classic);
        }
    }

    #[test]
    fn zero_is_absorbing(seed in any::<u64>(), p in 2usize..7, k in 0usize..7) {
        let q = random_problem(seed, p, true);
        let mut v = random_interior(&q, seed);
        v[k % p] = 0.0;
        for _ in 0..5 {
            v = mu_update(&q, &v).unwrap();
            prop_assert_eq!(v[k % p], 0.0);
        }
    }

    #[test]
    fn converged_points_are_kkt(seed in any::<u64>(), p in 1usize..6) {
        let q = random_problem(seed, p, true);
        let s = solve_qp(&q, &SolverOptions::default()).unwrap();
        if s.converged {
            let bound = 1e-6 * (1.0 + q.b().amax());
            prop_assert!(s.kkt_residual <= bound, "{} > {}", s.kkt_residual, bound);
        }
    }

    #[test]
    fn positive_fixed_points_are_kkt(seed in any::<u64>(), p in 1usize..5) {
        let q = random_problem(seed, p, true);
        let s = solve_qp(&q, &SolverOptions::default().with_tol(1e-14)).unwrap();
        let next = mu_update(&q, &s.v).unwrap();
        if next == s.v && s.v.iter().all(|&x| x > 0.0) {
            prop_assert!(kkt_residual(&q, &s.v).unwrap() <= 1e-8);
        }
    }
}
