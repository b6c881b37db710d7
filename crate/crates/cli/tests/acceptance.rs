//! Acceptance suite. Each test prints one `[PASS]` / `[FAIL]` line with the
//! measured value and the pinned tolerance.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use argen::model::{self, ArgenConfig, Dataset, Preset};
use argen::qp::{self, auxiliary_g, coordinate_step, mu_update, Branch, QpProblem, SolverOptions};
use argen::sim::{self, BenchmarkSpec, SignalSpec, SignalVariant};
use argen::tracking::{self, SyntheticSpec, TrackingSpec};
use argen::tuning::{self, SearchSpace};
use argen::{linalg, rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Runtime budgets are per criterion, so criteria take turns instead of
/// sharing cores with each other.
static SERIAL: Mutex<()> = Mutex::new(());

fn exclusive() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let line = format!("[{tag}] criterion {id:>2} {name}: {detail} ({:.1}s)\n", elapsed.as_secs_f64());
    // straight to the handle: the harness captures print! output of passing tests
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// The random-problem suite shared by criteria 1 and 3.
fn suite_problem(k: u64) -> QpProblem {
    let p = 2 + (k as usize % 49);
    sim::random_qp(rng::derive_seed(2024, &[k]), p, false).unwrap()
}

const DESCENT_TOL: f64 = 1e-10;
const SUITE_SIZE: u64 = 1000;

#[test]
fn criterion_01_descent_certificate() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let opts = SolverOptions::default().with_trace(true);
    let mut violations = 0usize;
    let mut iterations = 0usize;
    for k in 0..SUITE_SIZE {
        let sol = qp::solve_qp(&suite_problem(k), &opts).unwrap();
        iterations += sol.objective_trace.len().saturating_sub(1);
        violations += sol.objective_trace.windows(2).filter(|w| w[1] > w[0] + DESCENT_TOL * (1.0 + w[0].abs())).count();
    }
    let elapsed = t0.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(120);
    report(
        1,
        "descent certificate",
        pass,
        format!("{violations} violations over {iterations} iterations on {SUITE_SIZE} problems (tol 1e-10*(1+|F|), budget 120s)"),
        elapsed,
    );
    assert!(pass);
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

/// Grid search over the box followed by exact cyclic coordinate descent
/// from the best grid point.
fn brute_force(problem: &QpProblem) -> f64 {
    let p = problem.dim();
    let steps = [0usize, 4000, 600, 90][p];
    let hi: Vec<f64> = (0..p).map(|i| problem.l()[i].min(50.0)).collect();
    let mut best = DVector::zeros(p);
    let mut best_f = f64::INFINITY;
    let mut idx = vec![0usize; p];
    loop {
        let v = DVector::from_fn(p, |i, _| hi[i] * idx[i] as f64 / steps as f64);
        let f = qp::objective(problem, &v).unwrap();
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
        let prev = best.clone();
        for i in 0..p {
            let g = problem.b()[i] + (a.row(i) * &best)[0] - a[(i, i)] * best[i];
            best[i] = scalar_argmin(a[(i, i)], g, problem.d()[i], problem.v0()[i], problem.l()[i]);
        }
        if (&best - &prev).amax() < 1e-14 {
            break;
        }
    }
    qp::objective(problem, &best).unwrap().min(best_f)
}

#[test]
fn criterion_02_oracle_equivalence() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let mut worst = 0.0_f64;
    for k in 0..200u64 {
        let p = 1 + (k as usize % 3);
        let problem = sim::random_qp(rng::derive_seed(77, &[k]), p, true).unwrap();
        let sol = qp::solve_qp(&problem, &SolverOptions::default()).unwrap();
        let gap = sol.objective - brute_force(&problem);
        worst = worst.max(gap);
    }
    let elapsed = t0.elapsed();
    let pass = worst <= 1e-5 && elapsed < Duration::from_secs(120);
    report(
        2,
        "oracle equivalence",
        pass,
        format!("worst solver-minus-oracle objective gap {worst:.3e} over 200 problems (tol 1e-5, budget 120s)"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_03_kkt_certificate() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let opts = SolverOptions::default();
    let (mut converged, mut bad, mut worst_ratio) = (0usize, 0usize, 0.0_f64);
    for k in 0..SUITE_SIZE {
        let problem = suite_problem(k);
        let sol = qp::solve_qp(&problem, &opts).unwrap();
        if !sol.converged {
            continue;
        }
        converged += 1;
        let limit = 1e-6 * (1.0 + linalg::inf_norm(problem.b()));
        worst_ratio = worst_ratio.max(sol.kkt_residual / limit);
        if sol.kkt_residual > limit {
            bad += 1;
        }
    }
    let pass = bad == 0 && converged > 0;
    report(
        3,
        "KKT certificate",
        pass,
        format!("{bad} of {converged} converged problems above 1e-6*(1+|b|inf); worst residual/limit {worst_ratio:.3e}"),
        t0.elapsed(),
    );
    assert!(pass);
}

/// Classical nonnegative-QP multiplicative update, with the condition number
/// of each coordinate's `-b + sqrt(b^2 + 4ac)`: the textbook form loses about
/// `eps * kappa` relative accuracy to cancellation when `b > 0`.
fn classical_update(a: &DMatrix<f64>, b: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (ap, an) = qp::split_matrix(a);
    let pa = &ap * v;
    let pc = &an * v;
    let mut kappa = DVector::from_element(v.len(), 1.0);
    let update = DVector::from_fn(v.len(), |i, _| {
        if pa[i] == 0.0 {
            return v[i];
        }
        let sq = (b[i] * b[i] + 4.0 * pa[i] * pc[i]).sqrt();
        kappa[i] = (b[i].abs() + sq) / (sq - b[i]).abs();
        v[i] * (-b[i] + sq) / (2.0 * pa[i])
    });
    (update, kappa)
}

const KAPPA_MAX: f64 = 1e3;

#[test]
fn criterion_04_reduction() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let mut worst = 0.0_f64;
    let (mut steps, mut compared, mut skipped, mut worst_kappa) = (0usize, 0usize, 0usize, 1.0_f64);
    for k in 0..100u64 {
        let base = sim::random_qp(rng::derive_seed(404, &[k]), 2 + (k as usize % 20), true).unwrap();
        let p = base.dim();
        let problem =
            QpProblem::new(base.a().clone(), base.b().clone(), DVector::zeros(p), DVector::zeros(p), DVector::from_element(p, 1e9))
                .unwrap();
        let mut r = rng::stream(404, &[k, 1]);
        let mut v = DVector::from_fn(p, |_, _| r.random_range(0.1..2.0));
        for _ in 0..50 {
            let ours = mu_update(&problem, &v).unwrap();
            let (classic, kappa) = classical_update(problem.a(), problem.b(), &v);
            for i in 0..p {
                let scale = ours[i].abs().max(classic[i].abs());
                // past this the textbook reference itself is off by more than the tolerance
                if kappa[i] > KAPPA_MAX {
                    skipped += 1;
                } else if scale > 0.0 {
                    compared += 1;
                    worst_kappa = worst_kappa.max(kappa[i]);
                    worst = worst.max((ours[i] - classic[i]).abs() / scale);
                }
            }
            steps += 1;
            v = ours;
            if v.iter().any(|&x| x == 0.0 || !x.is_finite()) {
                break;
            }
        }
    }
    let pass = worst <= 1e-12 && compared > 10 * skipped;
    report(4, "reduction to nonnegative QP", pass, format!(
            "worst relative deviation {worst:.3e} over {steps} updates ({compared} coordinates compared, max cancellation factor {worst_kappa:.1e}; {skipped} ill-conditioned skipped) (tol 1e-12)"
        ), t0.elapsed());
    assert!(pass);
}

#[test]
fn criterion_05_majorization() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let (mut worst_tight, mut worst_major) = (0.0_f64, f64::INFINITY);
    let mut overlaps = 0usize;
    let mut pairs = 0usize;
    let mut k = 0u64;
    while pairs < 1000 {
        k += 1;
        let problem = sim::random_qp(rng::derive_seed(505, &[k]), 2 + (k as usize % 15), false).unwrap();
        let p = problem.dim();
        let mut r = rng::stream(505, &[k, 2]);
        let draw = |r: &mut rng::StreamRng| DVector::from_fn(p, |i, _| r.random_range(1e-3..1.0) * problem.l()[i].min(5.0));
        let v = draw(&mut r);
        let u = draw(&mut r);
        let f_v = qp::objective(&problem, &v).unwrap();
        let f_u = qp::objective(&problem, &u).unwrap();
        let g_vv = auxiliary_g(&problem, &v, &v).unwrap();
        let g_uv = auxiliary_g(&problem, &u, &v).unwrap();
        worst_tight = worst_tight.max((g_vv - f_v).abs() / f_v.abs().max(1e-300));
        worst_major = worst_major.min(g_uv - f_u);

        let (ap, an) = problem.split();
        let pa = &ap * &v;
        let pc = &an * &v;
        for i in 0..p {
            let st = coordinate_step(pa[i], pc[i], problem.b()[i], problem.d()[i], problem.v0()[i], problem.l()[i], v[i]);
            let above = st.r1 > problem.v0()[i];
            let below = st.r2 < problem.v0()[i];
            if above && below {
                overlaps += 1;
            }
            let expected = if above {
                Branch::Above
            } else if below {
                Branch::Below
            } else {
                Branch::Anchor
            };
            if st.branch != expected {
                overlaps += 1;
            }
        }
        pairs += 1;
    }
    let pass = worst_tight <= 1e-12 && worst_major >= -1e-10 && overlaps == 0;
    report(
        5,
        "majorization",
        pass,
        format!(
            "max |G(v,v)-F(v)|/|F| {worst_tight:.3e} (tol 1e-12), min G(u,v)-F(u) {worst_major:.3e} (tol -1e-10), branch conflicts {overlaps} on {pairs} pairs"
        ),
        t0.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_06_closed_form_fits() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let opts = SolverOptions::default();
    let one_d = |t: f64| {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_element(2, 1.0);
        let cfg = ArgenConfig { lambda1: 1.0, ..ArgenConfig::unpenalized(vec![0.0], vec![t]) };
        model::fit_xy(&x, &y, &cfg, &opts).unwrap().beta[0]
    };
    let free = one_d(10.0);
    let clamped = one_d(0.5);
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    let y = DVector::from_column_slice(&[1.0, 2.0, 1.0, 2.0]);
    let data = Dataset::train_only(x, y).unwrap();
    let interp = model::fit(&data, &ArgenConfig::unpenalized(vec![-10.0; 2], vec![10.0; 2]), &opts).unwrap().beta;
    let errs = [(free - 0.75).abs(), (clamped - 0.5).abs(), (interp[0] - 1.0).abs(), (interp[1] - 2.0).abs()];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    let pass = worst <= 1e-6;
    report(
        6,
        "closed-form fits",
        pass,
        format!("beta {free:.9} / {clamped:.9} / ({:.9}, {:.9}); worst error {worst:.3e} (tol 1e-6)", interp[0], interp[1]),
        t0.elapsed(),
    );
    assert!(pass);
}

/// Iteration cap for the full-scale recovery runs so both variants fit the
/// time budget; the uniform variant converges slowly and may hit it.
const SIGNAL_MAX_ITER: usize = 15_000;

#[test]
fn criterion_07_signal_recovery() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let spec = SignalSpec::full();
    let opts = SolverOptions::default().with_max_iter(SIGNAL_MAX_ITER);
    let constant = sim::run_signal_recovery(SignalVariant::Constant, &spec, 1, &opts).unwrap();
    let uniform = sim::run_signal_recovery(SignalVariant::Uniform, &spec, 1, &opts).unwrap();
    let elapsed = t0.elapsed();
    let pass = constant.oracle_mse <= 0.005 && uniform.oracle_mse <= 0.01 && elapsed < Duration::from_secs(900);
    report(
        7,
        "signal recovery",
        pass,
        format!(
            "oracle MSE constant {:.5} (limit 0.005), uniform {:.5} (limit 0.01); noise variance {}; iterations {} / {}, converged {} / {} (budget 900s)",
            constant.oracle_mse,
            uniform.oracle_mse,
            spec.noise_var,
            constant.diagnostics.iterations,
            uniform.diagnostics.iterations,
            constant.diagnostics.converged,
            uniform.diagnostics.converged
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_08_benchmark_ordering() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let mut spec = BenchmarkSpec::new(1, vec![Preset::Arls, Preset::Argen], 20, 8);
    spec.n_calls = vec![(Preset::Arls, 1), (Preset::Argen, 500)];
    let res = sim::run_benchmark(&spec, &SolverOptions::default(), 1).unwrap();
    let arls = res.report(Preset::Arls).unwrap().median;
    let argen = res.report(Preset::Argen).unwrap().median;
    let elapsed = t0.elapsed();
    let pass = (1.2..=4.0).contains(&arls) && argen <= arls && elapsed < Duration::from_secs(1800);
    report(
        8,
        "benchmark ordering",
        pass,
        format!("Example 1, 20 replicates: ARLS median {arls:.4} (range [1.2, 4.0]), ARGEN median {argen:.4} (must be <= ARLS)"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_09_consistency() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let opts = SolverOptions::default();
    let scn = sim::scenario(1, 0).unwrap();
    let star = scn.beta_star();
    // tune once on a separate draw, then hold the configuration fixed
    let data = sim::draw_dataset(&scn, &mut rng::stream(9, &[rng::tag("tune-draw")])).unwrap();
    let template = argen::make_preset(Preset::Aren, scn.s.clone(), scn.t.clone()).unwrap();
    let space = SearchSpace { n_calls: 100, seed: 9, ..SearchSpace::default() };
    let config = tuning::random_search(&data, &space, &template, &opts, 1).unwrap().best.config;

    let error_at = |n_train: usize| {
        let mut s = scn.clone();
        s.n_train = n_train;
        let errs: Vec<f64> = (0..20u64)
            .map(|seed| {
                let d = sim::draw_dataset(&s, &mut rng::stream(seed, &[rng::tag("consistency"), n_train as u64])).unwrap();
                (model::fit(&d, &config, &opts).unwrap().beta() - &star).norm()
            })
            .collect();
        linalg::median(&errs).unwrap()
    };
    let small = error_at(20);
    let large = error_at(200);
    let pass = large < small;
    report(
        9,
        "consistency",
        pass,
        format!(
            "median |beta-beta*| {small:.4} at n=20, {large:.4} at n=200 (must decrease); AREN lambda1 {}, lambda2 {}",
            config.lambda1, config.lambda2
        ),
        t0.elapsed(),
    );
    assert!(pass);
}

/// Noisy synthetic suite: 50 assets, index of 20 constituents plus noise,
/// 10-stock portfolios with weight bounds [0.05, 0.6].
fn noisy_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec { assets: 50, true_k: 20, noise_std: 2e-3, market_std: 0.015, days: 504, seed }
}

#[test]
fn criterion_10_index_tracking() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let opts = SolverOptions::default();

    let exact =
        tracking::synthetic_index(&SyntheticSpec { assets: 20, true_k: 5, noise_std: 0.0, market_std: 0.006, days: 400, seed: 1 }).unwrap();
    let mut spec = TrackingSpec::new(5, 0.0, 1.0);
    spec.tuner.n_calls = 20;
    let rep = tracking::run_tracking(&exact.frame, &spec, &opts, 1).unwrap();
    let exact_te = rep.te.max(rep.baseline.metrics.te);

    let (mut argen_te, mut arls_te) = (Vec::new(), Vec::new());
    let mut all_within = true;
    for seed in 0..10u64 {
        let syn = tracking::synthetic_index(&noisy_spec(seed)).unwrap();
        let mut spec = TrackingSpec::new(10, 0.05, 0.6);
        spec.tuner.n_calls = 100;
        spec.tuner.seed = seed;
        let rep = tracking::run_tracking(&syn.frame, &spec, &opts, 1).unwrap();
        assert!(rep.feasibility.feasible);
        all_within &= rep.within_bounds && rep.baseline.within_bounds;
        argen_te.push(rep.te);
        arls_te.push(rep.baseline.metrics.te);
    }
    let argen = linalg::median(&argen_te).unwrap();
    let arls = linalg::median(&arls_te).unwrap();
    let elapsed = t0.elapsed();
    let pass = exact_te < 1e-6 && argen <= arls && all_within && elapsed < Duration::from_secs(300);
    report(
        10,
        "index tracking",
        pass,
        format!(
            "exact index TE {exact_te:.3e} (tol 1e-6); noisy median TE ARGEN {argen:.6e} vs ARLS {arls:.6e}; weights within bounds: {all_within} (budget 300s)"
        ),
        elapsed,
    );
    assert!(pass);
}

fn argen_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_argen"))
}

fn run_into(dir: &Path, args: &[&str]) {
    let status = argen_bin().args(args).arg("--out").arg(dir).env_remove("ARGEN_OUT_DIR").output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| std::fs::read(a.join(n)).unwrap() == std::fs::read(b.join(n)).unwrap())
}

fn scratch_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("argen-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn criterion_11_determinism() {
    let _turn = exclusive();
    let t0 = Instant::now();
    let root = scratch_dir("determinism");
    let sim_args = ["simulate", "--example", "1", "--methods", "ARLS,ARL", "--replicates", "4", "--ncalls", "ARL=20", "--seed", "7"];
    let (s1, s2) = (root.join("sim1"), root.join("sim2"));
    run_into(&s1, &[&sim_args[..], &["--jobs", "1"]].concat());
    run_into(&s2, &[&sim_args[..], &["--jobs", "3"]].concat());
    let sim_same = same_files(&s1, &s2, &["summary.json", "replicates.csv", "manifest.json"]);

    let data_dir = root.join("data");
    run_into(&data_dir, &["gen", "example", "--example", "1", "--seed", "3"]);
    let data = data_dir.join("data.csv");
    let data = data.to_str().unwrap();
    let tune_args = ["tune", "--data", data, "--preset", "AREN", "--bounds", "0,inf", "--ncalls", "30", "--seed", "5"];
    let (t1, t2) = (root.join("tune1"), root.join("tune2"));
    run_into(&t1, &[&tune_args[..], &["--jobs", "1"]].concat());
    run_into(&t2, &[&tune_args[..], &["--jobs", "4"]].concat());
    let tune_same = same_files(&t1, &t2, &["tune.json", "trials.csv", "manifest.json"]);

    let pass = sim_same && tune_same;
    report(
        11,
        "determinism",
        pass,
        format!("simulate identical across --jobs 1/3: {sim_same}; tune identical across --jobs 1/4: {tune_same}"),
        t0.elapsed(),
    );
    let _ = std::fs::remove_dir_all(&root);
    assert!(pass);
}
