use std::path::Path;

use argen::model::{self, ArgenConfig, Dataset, FittedModel, Preset, Sigma, SolveDiagnostics, Split, WeightMode};
use argen::qp::{self, QpProblemJson, QpSolutionJson, SolverOptions};
use argen::sim::{self, BenchmarkSpec, BoxBounds, SignalSpec, SignalVariant};
use argen::tracking::{self, Holding, PriceFrame, SyntheticSpec, TrackingSpec};
use argen::tuning::{self, RangeSpec, SearchSpace};
use argen::{make_preset, rng};
use nalgebra::DVector;
use serde::Serialize;

use crate::args::*;
use crate::failure::Failure;
use crate::output::{g6, RunManifest, Sink};

type Outcome = Result<(), Failure>;

pub struct Context {
    pub seed: u64,
    pub jobs: usize,
    pub sink: Sink,
    pub manifest: RunManifest,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_value(tok: &str) -> Result<f64, Failure> {
    match tok.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|_| usage(format!("not a number: {tok:?}"))),
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',').map(parse_value).collect()
}

fn parse_pair(text: &str, what: &str) -> Result<(f64, f64), Failure> {
    match parse_list(text)?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(usage(format!("{what} expects two comma-separated values, got {text:?}"))),
    }
}

fn check_box(s: &[f64], t: &[f64]) -> Outcome {
    // NaN bounds count as empty too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let empty: Vec<usize> = (0..s.len()).filter(|&i| !(s[i] < t[i])).collect();
    if empty.is_empty() {
        Ok(())
    } else {
        Err(Failure::Infeasible(format!("lower bound not below upper bound at indices {empty:?}")))
    }
}

/// Per-coefficient lists win over `--bounds`; `fallback` applies when no
/// flag is given.
fn resolve_bounds(flags: &BoundFlags, p: usize, fallback: Option<(Vec<f64>, Vec<f64>)>) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let uniform = flags.bounds.as_deref().map(|b| parse_pair(b, "--bounds")).transpose()?;
    let side = |list: &Option<String>, pick: fn((f64, f64)) -> f64, fb: Option<&Vec<f64>>, name: &str| -> Result<Vec<f64>, Failure> {
        if let Some(text) = list {
            let v = parse_list(text)?;
            if v.len() != p {
                return Err(usage(format!("--{name} has {} values, expected {p}", v.len())));
            }
            Ok(v)
        } else if let Some(u) = uniform {
            Ok(vec![pick(u); p])
        } else if let Some(v) = fb {
            Ok(v.clone())
        } else {
            Err(usage("--bounds LO,HI (or --lower and --upper) is required"))
        }
    };
    let s = side(&flags.lower, |u| u.0, fallback.as_ref().map(|f| &f.0), "lower")?;
    let t = side(&flags.upper, |u| u.1, fallback.as_ref().map(|f| &f.1), "upper")?;
    check_box(&s, &t)?;
    Ok((s, t))
}

fn bounds_given(flags: &BoundFlags) -> bool {
    flags.bounds.is_some() || flags.lower.is_some() || flags.upper.is_some()
}

fn solver_options(flags: &SolverFlags) -> Result<SolverOptions, Failure> {
    let opts = SolverOptions::default().with_tol(flags.tol).with_max_iter(flags.max_iter);
    opts.validate()?;
    Ok(opts)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

fn read_dataset(ctx: &mut Context, path: &Path) -> Result<Dataset, Failure> {
    ctx.manifest.digest(path)?;
    Ok(Dataset::read_csv(path)?)
}

pub fn solve(ctx: &mut Context, a: &SolveArgs) -> Outcome {
    let text = read_text(&a.problem)?;
    ctx.manifest.digest(&a.problem)?;
    let problem = QpProblemJson::parse(&text)?;
    let opts = solver_options(&a.solver)?.with_trace(a.trace);
    let sol = qp::solve_qp(&problem, &opts)?;

    #[derive(Serialize)]
    struct Traced<'a> {
        #[serde(flatten)]
        solution: &'a QpSolutionJson,
        objective_trace: &'a [f64],
    }
    let body = QpSolutionJson::from(&sol);
    if a.trace {
        ctx.sink.json("solution.json", &Traced { solution: &body, objective_trace: &sol.objective_trace }, true)?;
    } else {
        ctx.sink.json("solution.json", &body, true)?;
    }
    ctx.sink.json("manifest.json", &ctx.manifest, false)?;
    eprintln!("objective {}  iterations {}  kkt {}  converged {}", g6(sol.objective), sol.iterations, g6(sol.kkt_residual), sol.converged);
    if sol.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("stopped after {} iterations", sol.iterations)))
    }
}

#[derive(Serialize)]
struct SplitMse {
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<f64>,
}

fn split_mse(fitted: &FittedModel, data: &Dataset) -> Result<SplitMse, Failure> {
    let score = |which: Split| -> Result<Option<f64>, Failure> {
        if data.count(which) == 0 {
            return Ok(None);
        }
        let (x, y) = data.subset(which);
        Ok(Some(tuning::mse_score(fitted, &x, &y, None)?.empirical))
    };
    Ok(SplitMse { train: score(Split::Train)?, validation: score(Split::Validation)?, test: score(Split::Test)? })
}

fn print_beta(beta: &[f64]) {
    let shown: Vec<String> = beta.iter().take(12).map(|b| g6(*b)).collect();
    let more = if beta.len() > 12 { format!(" ... ({} total)", beta.len()) } else { String::new() };
    eprintln!("beta [{}]{more}", shown.join(", "));
}

pub fn fit(ctx: &mut Context, a: &FitArgs) -> Outcome {
    let preset: Preset = a.preset.parse()?;
    let data = read_dataset(ctx, &a.data)?;
    let p = data.n_features();
    let opts = solver_options(&a.solver)?;
    let config = if let Some(path) = &a.model {
        ctx.manifest.digest(path)?;
        let mut cfg: ArgenConfig = serde_json::from_str(&read_text(path)?).map_err(argen::Error::from)?;
        if bounds_given(&a.bounds) {
            let (s, t) = resolve_bounds(&a.bounds, p, None)?;
            cfg.s = s;
            cfg.t = t;
        }
        check_box(&cfg.s, &cfg.t)?;
        cfg.validate()?;
        cfg
    } else {
        let (s, t) = resolve_bounds(&a.bounds, p, None)?;
        let template = make_preset(preset, s, t)?;
        let free = template.tunable;
        let mut cfg = template.config;
        let deny = |given: bool, allowed: bool, name: &str| {
            if given && !allowed {
                Err(usage(format!("preset {preset} fixes {name}; drop the flag or pick another preset")))
            } else {
                Ok(())
            }
        };
        deny(a.lambda1.is_some(), free.lambda1, "lambda1")?;
        deny(a.lambda2.is_some(), free.lambda2, "lambda2")?;
        deny(a.w.is_some() || a.normalize_w, free.w, "w")?;
        deny(a.sigma_diag.is_some(), free.sigma, "sigma")?;
        if let Some(l) = a.lambda1 {
            cfg.lambda1 = l;
        }
        if let Some(l) = a.lambda2 {
            cfg.lambda2 = l;
        }
        if let Some(w) = &a.w {
            cfg.w = parse_list(w)?;
        }
        if a.normalize_w {
            cfg.weights = WeightMode::Normalized;
        }
        if let Some(d) = &a.sigma_diag {
            cfg.sigma = Sigma::diagonal(DVector::from_vec(parse_list(d)?));
        }
        cfg.validate()?;
        cfg
    };
    let fitted = model::fit(&data, &config, &opts)?;

    #[derive(Serialize)]
    struct FitReport<'a> {
        preset: Preset,
        beta: &'a [f64],
        n_nonzero: usize,
        zero_tol: f64,
        diagnostics: &'a SolveDiagnostics,
        mse: SplitMse,
        config: &'a ArgenConfig,
    }
    let report = FitReport {
        preset,
        beta: &fitted.beta,
        n_nonzero: fitted.n_nonzero,
        zero_tol: fitted.zero_tol,
        diagnostics: &fitted.diagnostics,
        mse: split_mse(&fitted, &data)?,
        config: &fitted.config,
    };
    ctx.sink.report("fit.json", &report, &ctx.manifest, true)?;
    print_beta(&fitted.beta);
    eprintln!(
        "nonzero {}  iterations {}  kkt {}  converged {}",
        fitted.n_nonzero,
        fitted.diagnostics.iterations,
        g6(fitted.diagnostics.kkt_residual),
        fitted.diagnostics.converged
    );
    if fitted.diagnostics.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("stopped after {} iterations", fitted.diagnostics.iterations)))
    }
}

fn range(up: u32, log_range: &Option<String>, name: &str) -> Result<RangeSpec, Failure> {
    match log_range {
        Some(text) => {
            let (lo, hi) = parse_pair(text, name)?;
            Ok(RangeSpec::LogUniform { lo, hi })
        }
        None => Ok(RangeSpec::Integer { up }),
    }
}

pub fn tune(ctx: &mut Context, a: &TuneArgs) -> Outcome {
    let preset: Preset = a.preset.parse()?;
    let data = read_dataset(ctx, &a.data)?;
    let p = data.n_features();
    let opts = solver_options(&a.solver)?;
    let (s, t) = resolve_bounds(&a.bounds, p, None)?;
    let template = make_preset(preset, s, t)?;

    if let Some(k) = a.target_nonzero {
        if !template.tunable.lambda1 {
            return Err(usage(format!("preset {preset} has no lambda1 to bisect")));
        }
        let res = tuning::bisection_lambda1(&data, &template.config, k, &opts)?;
        #[derive(Serialize)]
        struct BisectionReport<'a> {
            preset: Preset,
            target: usize,
            #[serde(flatten)]
            result: &'a tuning::BisectionResult,
        }
        ctx.sink.report("tune.json", &BisectionReport { preset, target: k, result: &res }, &ctx.manifest, true)?;
        eprintln!("lambda1 {}  nonzero {} (target {k})  probes {}", g6(res.lambda1), res.achieved, res.trace.len());
        return Ok(());
    }

    let space = SearchSpace {
        lambda1: range(a.lambda1_up, &a.lambda1_range, "--lambda1-range")?,
        lambda2: range(a.lambda2_up, &a.lambda2_range, "--lambda2-range")?,
        w_up: a.w_up,
        d_up: a.d_up,
        p_matrix: None,
        n_calls: a.ncalls.unwrap_or_else(|| tuning::default_n_calls(preset)),
        seed: ctx.seed,
        exhaustive: a.exhaustive,
    };
    let result = tuning::random_search(&data, &space, &template, &opts, ctx.jobs)?;
    let fitted = model::fit(&data, &result.best.config, &opts)?;

    #[derive(Serialize)]
    struct TuneReport<'a> {
        preset: Preset,
        n_trials: usize,
        exhaustive: bool,
        none_converged: bool,
        best: &'a tuning::TrialRecord,
        beta: &'a [f64],
        n_nonzero: usize,
        diagnostics: &'a SolveDiagnostics,
        mse: SplitMse,
    }
    let report = TuneReport {
        preset,
        n_trials: result.trials.len(),
        exhaustive: result.exhaustive,
        none_converged: result.none_converged,
        best: &result.best,
        beta: &fitted.beta,
        n_nonzero: fitted.n_nonzero,
        diagnostics: &fitted.diagnostics,
        mse: split_mse(&fitted, &data)?,
    };
    ctx.sink.report("tune.json", &report, &ctx.manifest, true)?;
    ctx.sink.csv(
        "trials.csv",
        |buf| {
            let mut w = csv_writer(buf);
            w.write_record(["index", "rank", "validation_mse", "converged", "lambda1", "lambda2", "error"])?;
            for tr in &result.trials {
                w.write_record([
                    tr.index.to_string(),
                    tr.rank.to_string(),
                    model::fmt_g17(tr.validation_mse),
                    tr.converged.to_string(),
                    model::fmt_g17(tr.config.lambda1),
                    model::fmt_g17(tr.config.lambda2),
                    tr.error.clone().unwrap_or_default(),
                ])?;
            }
            w.flush()?;
            Ok(())
        },
        false,
    )?;
    eprintln!(
        "{} trials  best validation mse {}  lambda1 {}  lambda2 {}",
        result.trials.len(),
        g6(result.best.validation_mse),
        g6(result.best.config.lambda1),
        g6(result.best.config.lambda2)
    );
    if result.none_converged {
        return Err(Failure::NotConverged("no trial converged".into()));
    }
    Ok(())
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(buf)
}

fn parse_methods(text: &str) -> Result<Vec<Preset>, Failure> {
    let mut out = Vec::new();
    for tok in text.split(',').filter(|t| !t.trim().is_empty()) {
        let m: Preset = tok.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(usage("--methods is empty"));
    }
    Ok(out)
}

fn parse_ncalls(text: &str, methods: &[Preset]) -> Result<Vec<(Preset, usize)>, Failure> {
    let count = |t: &str| t.trim().parse::<usize>().map_err(|_| usage(format!("bad trial count {t:?}")));
    if !text.contains('=') {
        let n = count(text)?;
        return Ok(methods.iter().map(|&m| (m, n)).collect());
    }
    text.split(',')
        .map(|item| {
            let (m, n) = item.split_once('=').ok_or_else(|| usage(format!("expected METHOD=N, got {item:?}")))?;
            Ok((m.parse()?, count(n)?))
        })
        .collect()
}

pub fn simulate(ctx: &mut Context, a: &SimulateArgs) -> Outcome {
    let opts = solver_options(&a.solver)?;
    if let Some(kind) = a.signal {
        let mut spec = match a.scale {
            Scale::Full => SignalSpec::full(),
            Scale::Reduced => SignalSpec::reduced(),
        };
        if let Some(v) = a.noise_var {
            spec.noise_var = v;
        }
        let variant = signal_variant(kind);
        let report = sim::run_signal_recovery(variant, &spec, ctx.seed, &opts)?;
        ctx.sink.report("signal.json", &report, &ctx.manifest, true)?;
        ctx.sink.csv("signal.csv", |buf| report.write_csv(buf), false)?;
        eprintln!(
            "oracle mse {}  coefficient mse {}  iterations {}  converged {}",
            g6(report.oracle_mse),
            g6(report.coef_mse),
            report.diagnostics.iterations,
            report.diagnostics.converged
        );
        return if report.diagnostics.converged {
            Ok(())
        } else {
            Err(Failure::NotConverged(format!("stopped after {} iterations", report.diagnostics.iterations)))
        };
    }

    let example = a.example.ok_or_else(|| usage("--example is required"))?;
    let methods = parse_methods(&a.methods)?;
    let mut spec = BenchmarkSpec::new(example, methods.clone(), a.replicates, ctx.seed);
    if let Some(text) = &a.ncalls {
        spec.n_calls = parse_ncalls(text, &methods)?;
    }
    spec.n_train = a.n_train;
    if bounds_given(&a.bounds) {
        let p = sim::scenario(example, ctx.seed)?.p();
        let (s, t) = resolve_bounds(&a.bounds, p, None)?;
        spec.bounds = Some(BoxBounds { s, t });
    }
    let result = sim::run_benchmark(&spec, &opts, ctx.jobs)?;

    #[derive(Serialize)]
    struct SimReport<'a> {
        example: u8,
        replicates: usize,
        reports: &'a [sim::ReplicateReport],
        spec: &'a BenchmarkSpec,
    }
    let body = SimReport { example, replicates: a.replicates, reports: &result.reports, spec: &result.spec };
    ctx.sink.report("summary.json", &body, &ctx.manifest, true)?;
    ctx.sink.csv("replicates.csv", |buf| result.write_csv(buf), false)?;
    for r in &result.reports {
        eprintln!("{:<6} median {}  se {}  failed {}", r.method.name(), g6(r.median), g6(r.se), r.n_failed);
    }
    Ok(())
}

fn signal_variant(kind: SignalKind) -> SignalVariant {
    match kind {
        SignalKind::Constant => SignalVariant::Constant,
        SignalKind::Uniform => SignalVariant::Uniform,
    }
}

fn synthetic_spec(f: &SyntheticFlags, seed: u64) -> SyntheticSpec {
    SyntheticSpec { assets: f.assets, true_k: f.true_k, noise_std: f.noise_std, market_std: f.market_std, days: f.days, seed }
}

pub fn track(ctx: &mut Context, a: &TrackArgs) -> Outcome {
    let opts = solver_options(&a.solver)?;
    let (frame, truth) = if a.synthetic.synthetic {
        let syn = tracking::synthetic_index(&synthetic_spec(&a.synthetic, ctx.seed))?;
        let names: Vec<String> = syn.constituents.iter().map(|&i| syn.frame.tickers[i].clone()).collect();
        (syn.frame, Some((names, syn.weights)))
    } else {
        let path = a.prices.as_ref().ok_or_else(|| usage("--prices or --synthetic is required"))?;
        ctx.manifest.digest(path)?;
        (PriceFrame::read_csv(path)?, None)
    };
    let (lo, hi) = parse_pair(&a.bounds, "--bounds")?;
    let mut spec = TrackingSpec::new(a.n_stocks, lo, hi);
    spec.window = a.window;
    spec.holding = if a.drift { Holding::Drift } else { Holding::FixedWeights };
    spec.tuner.n_calls = a.ncalls;
    spec.tuner.seed = rng::derive_seed(ctx.seed, &[rng::tag("track")]);
    let report = tracking::run_tracking(&frame, &spec, &opts, ctx.jobs)?;

    #[derive(Serialize)]
    struct Truth {
        constituents: Vec<String>,
        weights: Vec<f64>,
    }
    #[derive(Serialize)]
    struct TrackOut<'a> {
        #[serde(flatten)]
        report: &'a tracking::TrackingReport,
        #[serde(skip_serializing_if = "Option::is_none")]
        truth: Option<Truth>,
    }
    let truth = truth.map(|(constituents, weights)| Truth { constituents, weights });
    ctx.sink.report("track.json", &TrackOut { report: &report, truth }, &ctx.manifest, true)?;
    eprintln!("universe {}", report.universe.join(","));
    eprintln!(
        "ARGEN TE {}  ARV {}  CR {}{}",
        g6(report.te),
        g6(report.arv),
        g6(report.cr),
        if report.used_baseline_config { "  (baseline configuration)" } else { "" }
    );
    eprintln!(
        "ARLS  TE {}  ARV {}  CR {}",
        g6(report.baseline.metrics.te),
        g6(report.baseline.metrics.arv),
        g6(report.baseline.metrics.cr)
    );
    Ok(())
}

pub fn gen(ctx: &mut Context, a: &GenArgs) -> Outcome {
    match &a.kind {
        GenKind::Example { example } => {
            let (data, scn) = sim::gen_example(*example, ctx.seed)?;
            ctx.sink.csv("data.csv", |buf| data.write_csv(buf), true)?;
            ctx.sink.report("scenario.json", &scn, &ctx.manifest, false)?;
            eprintln!("example {example}: {} rows, {} features", data.n_rows(), data.n_features());
        }
        GenKind::Signal { variant, scale } => {
            let spec = match scale {
                Scale::Full => SignalSpec::full(),
                Scale::Reduced => SignalSpec::reduced(),
            };
            let (data, scn) = sim::gen_signal_recovery(signal_variant(*variant), &spec, ctx.seed)?;
            ctx.sink.csv("data.csv", |buf| data.write_csv(buf), true)?;
            ctx.sink.report("scenario.json", &scn, &ctx.manifest, false)?;
            eprintln!("signal: {} rows, {} features, {} spikes", data.n_rows(), data.n_features(), scn.q);
        }
        GenKind::Prices { synthetic } => {
            let syn = tracking::synthetic_index(&synthetic_spec(synthetic, ctx.seed))?;
            ctx.sink.csv("prices.csv", |buf| syn.frame.write_csv(buf), true)?;
            #[derive(Serialize)]
            struct Truth {
                constituents: Vec<String>,
                weights: Vec<f64>,
            }
            let truth = Truth {
                constituents: syn.constituents.iter().map(|&i| syn.frame.tickers[i].clone()).collect(),
                weights: syn.weights.clone(),
            };
            ctx.sink.report("truth.json", &truth, &ctx.manifest, false)?;
            eprintln!("prices: {} dates, {} assets", syn.frame.dates.len(), syn.frame.tickers.len());
        }
        GenKind::Qp { dim, finite_l } => {
            let problem = sim::random_qp(ctx.seed, *dim, *finite_l)?;
            ctx.sink.json("problem.json", &QpProblemJson::from_problem(&problem), true)?;
            ctx.sink.json("manifest.json", &ctx.manifest, false)?;
        }
    }
    Ok(())
}
