//! Seeded data generators for the simulated examples and the sparse signal
//! recovery problem, plus the replicate benchmark harness.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::extended_vec;
use crate::linalg;
use crate::model::{self, fmt_g17, ArgenConfig, Dataset, Preset, SolveDiagnostics, Split, WeightMode};
use crate::qp::{QpProblem, SolverOptions};
use crate::rng::{self, StreamRng};
use crate::tuning::{self, SearchSpace};

/// Lower bound standing in for `-inf` in the bounded examples.
pub const WIDE_LOWER: f64 = -1000.0;

/// Predictor correlation structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrSpec {
    /// `corr(x_i, x_j) = rho^|i-j|`.
    Power { rho: f64 },
    /// `corr(x_i, x_j) = rho` for `i != j`.
    Constant { rho: f64 },
    /// `groups` blocks of `group_size` columns sharing a standard normal
    /// factor plus `N(0, noise_var)` noise; remaining columns i.i.d. N(0,1).
    LatentFactor { groups: usize, group_size: usize, noise_var: f64 },
    /// i.i.d. standard normal entries with rows made orthonormal.
    OrthonormalRows,
}

impl CorrSpec {
    /// Population correlation matrix, where it is a fixed Gaussian design.
    pub fn correlation(&self, p: usize) -> Option<DMatrix<f64>> {
        match *self {
            CorrSpec::Power { rho } => Some(DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))),
            CorrSpec::Constant { rho } => Some(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })),
            _ => None,
        }
    }

    pub fn sample(&self, n: usize, p: usize, r: &mut StreamRng) -> Result<DMatrix<f64>> {
        match *self {
            CorrSpec::Power { .. } | CorrSpec::Constant { .. } => {
                let c = self.correlation(p).expect("gaussian design");
                let l = Cholesky::new(c).ok_or_else(|| Error::invalid("correlation matrix is not positive definite"))?.l();
                let z = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal));
                Ok(z * l.transpose())
            }
            CorrSpec::LatentFactor { groups, group_size, noise_var } => {
                if groups * group_size > p {
                    return Err(Error::invalid("latent-factor blocks exceed the number of predictors"));
                }
                let eps = Normal::new(0.0, noise_var.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
                let mut x = DMatrix::zeros(n, p);
                for i in 0..n {
                    for g in 0..groups {
                        let z: f64 = r.sample(StandardNormal);
                        for k in 0..group_size {
                            x[(i, g * group_size + k)] = z + eps.sample(r);
                        }
                    }
                    for j in groups * group_size..p {
                        x[(i, j)] = r.sample(StandardNormal);
                    }
                }
                Ok(x)
            }
            CorrSpec::OrthonormalRows => {
                if n > p {
                    return Err(Error::invalid("orthonormal rows need n <= p"));
                }
                // rows of X are the columns of xt, which are contiguous
                let mut xt = DMatrix::from_fn(p, n, |_, _| r.sample::<f64, _>(StandardNormal));
                modified_gram_schmidt(&mut xt)?;
                Ok(xt.transpose())
            }
        }
    }
}

/// Orthonormalizes the columns of `m` in place.
fn modified_gram_schmidt(m: &mut DMatrix<f64>) -> Result<()> {
    let k = m.ncols();
    for j in 0..k {
        let norm = m.column(j).norm();
        if !(norm > 0.0) {
            return Err(Error::invalid("rank-deficient design in orthogonalization"));
        }
        m.column_mut(j).unscale_mut(norm);
        let (done, mut rest) = m.columns_range_pair_mut(j, j + 1..);
        for mut col in rest.column_iter_mut() {
            let proj = done.dot(&col);
            col.axpy(-proj, &done, 1.0);
        }
    }
    Ok(())
}

/// Random QP over `[0, l]` with `A = X'X` for a Gaussian `X` with
/// `1..=p+3` rows (so `A` is often singular), `b ~ 3 N(0,1)`, and
/// sparse random `d`, `v0`. Without `finite_l` about 30% of the upper bounds
/// are infinite.
pub fn random_qp(seed: u64, p: usize, finite_l: bool) -> Result<QpProblem> {
    if p == 0 {
        return Err(Error::invalid("problem dimension must be at least 1"));
    }
    let mut r = rng::stream(seed, &[p as u64]);
    let n = r.random_range(1..=p + 3);
    let x = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal));
    let a = x.tr_mul(&x);
    let b = DVector::from_fn(p, |_, _| 3.0 * r.sample::<f64, _>(StandardNormal));
    let d = DVector::from_fn(p, |_, _| if r.random_bool(0.3) { 0.0 } else { r.random_range(0.0..2.0) });
    let v0 = DVector::from_fn(p, |_, _| if r.random_bool(0.4) { 0.0 } else { r.random_range(0.0..1.5) });
    let l = DVector::from_fn(p, |_, _| if !finite_l && r.random_bool(0.3) { f64::INFINITY } else { r.random_range(0.2..3.0) });
    QpProblem::new(a, b, d, v0, l)
}

/// Data-generation recipe for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub name: String,
    pub beta_star: Vec<f64>,
    pub noise_std: f64,
    pub corr: CorrSpec,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(with = "extended_vec")]
    pub s: Vec<f64>,
    #[serde(with = "extended_vec")]
    pub t: Vec<f64>,
    pub q: usize,
}

impl SimScenario {
    pub fn p(&self) -> usize {
        self.beta_star.len()
    }

    pub fn beta_star(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_star)
    }

    fn with(name: String, beta: Vec<f64>, noise_std: f64, corr: CorrSpec, sizes: (usize, usize, usize), bounds: (f64, f64)) -> Self {
        let p = beta.len();
        let q = beta.iter().filter(|&&b| b != 0.0).count();
        Self {
            name,
            beta_star: beta,
            noise_std,
            corr,
            n_train: sizes.0,
            n_val: sizes.1,
            n_test: sizes.2,
            s: vec![bounds.0; p],
            t: vec![bounds.1; p],
            q,
        }
    }
}

fn blocks(parts: &[(f64, usize)]) -> Vec<f64> {
    parts.iter().flat_map(|&(v, k)| std::iter::repeat_n(v, k)).collect()
}

/// Scenario for example `k` in `1..=8`. Only example 6 uses `seed` (to draw
/// its fixed coefficient vector).
pub fn scenario(k: u8, seed: u64) -> Result<SimScenario> {
    let inf = f64::INFINITY;
    let power = CorrSpec::Power { rho: 0.5 };
    let latent = CorrSpec::LatentFactor { groups: 3, group_size: 2, noise_var: 0.01 };
    let ex1 = vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0];
    let name = format!("example{k}");
    Ok(match k {
        1 => SimScenario::with(name, ex1, 3.0, power, (20, 20, 200), (0.0, inf)),
        2 => SimScenario::with(name, vec![0.85; 8], 3.0, power, (20, 20, 200), (0.0, inf)),
        3 => SimScenario::with(
            name,
            blocks(&[(0.0, 10), (2.0, 10), (0.0, 10), (2.0, 10)]),
            15.0,
            CorrSpec::Constant { rho: 0.5 },
            (100, 100, 400),
            (0.0, inf),
        ),
        4 => SimScenario::with(name, blocks(&[(3.0, 6), (0.0, 9)]), 15.0, latent, (40, 40, 100), (0.0, inf)),
        5 => SimScenario::with(name, vec![-3.0, -1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0], 3.0, power, (20, 20, 200), (WIDE_LOWER, inf)),
        6 => {
            let mut r = rng::stream(seed, &[rng::tag("example6-beta")]);
            let beta = (0..8).map(|_| r.random_range(-5.0..=5.0)).collect();
            SimScenario::with(name, beta, 3.0, power, (20, 20, 200), (-5.0, 5.0))
        }
        7 => SimScenario::with(name, vec![-6.0, -8.0, 0.0, 0.0, 7.0, 0.0, 0.0, 0.0], 3.0, power, (20, 20, 200), (-5.0, 5.0)),
        8 => SimScenario::with(name, blocks(&[(-3.0, 6), (0.0, 9)]), 15.0, latent, (5, 5, 50), (WIDE_LOWER, inf)),
        _ => return Err(Error::invalid(format!("example must be in 1..=8, got {k}"))),
    })
}

/// Draws train, validation and test rows for `scn` and centers every split
/// with the training means of `X` and `Y`.
pub fn draw_dataset(scn: &SimScenario, r: &mut StreamRng) -> Result<Dataset> {
    let n = scn.n_train + scn.n_val + scn.n_test;
    let p = scn.p();
    let mut x = scn.corr.sample(n, p, r)?;
    let noise = Normal::new(0.0, scn.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut y = &x * scn.beta_star();
    for yi in y.iter_mut() {
        *yi += noise.sample(r);
    }
    let split: Vec<Split> = (0..n)
        .map(|i| {
            if i < scn.n_train {
                Split::Train
            } else if i < scn.n_train + scn.n_val {
                Split::Validation
            } else {
                Split::Test
            }
        })
        .collect();
    if scn.n_train > 0 {
        let nt = scn.n_train as f64;
        for j in 0..p {
            let mean = x.column(j).rows(0, scn.n_train).sum() / nt;
            x.column_mut(j).add_scalar_mut(-mean);
        }
        let ym = y.rows(0, scn.n_train).sum() / nt;
        y.add_scalar_mut(-ym);
    }
    Dataset::new(x, y, split)
}

/// One seeded draw of example `k`.
pub fn gen_example(k: u8, seed: u64) -> Result<(Dataset, SimScenario)> {
    let scn = scenario(k, seed)?;
    let data = draw_dataset(&scn, &mut rng::stream(seed, &[rng::tag("data")]))?;
    Ok((data, scn))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalVariant {
    /// Every spike has amplitude 1.
    Constant,
    /// Spike amplitudes drawn from `U[0, 1)`.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub n: usize,
    pub p: usize,
    pub spikes: usize,
    pub noise_var: f64,
    pub lambda1: f64,
    /// Coefficients are constrained to `[-bound, bound]`.
    pub bound: f64,
}

impl SignalSpec {
    pub fn full() -> Self {
        Self { n: 1024, p: 4096, spikes: 160, noise_var: 0.1, lambda1: 10.0, bound: 1.0 }
    }

    pub fn reduced() -> Self {
        Self { n: 256, p: 1024, spikes: 40, ..Self::full() }
    }
}

/// Sparse spikes, orthonormal-row Gaussian design, `Y = X beta* + eps`.
/// Every row is a training row.
pub fn gen_signal_recovery(variant: SignalVariant, spec: &SignalSpec, seed: u64) -> Result<(Dataset, SimScenario)> {
    if spec.spikes > spec.p {
        return Err(Error::invalid("more spikes than coefficients"));
    }
    let mut r = rng::stream(seed, &[rng::tag("signal")]);
    let mut beta = vec![0.0; spec.p];
    let mut positions = index::sample(&mut r, spec.p, spec.spikes).into_vec();
    positions.sort_unstable();
    for &i in &positions {
        beta[i] = match variant {
            SignalVariant::Constant => 1.0,
            SignalVariant::Uniform => r.random_range(0.0..1.0),
        };
    }
    let corr = CorrSpec::OrthonormalRows;
    let x = corr.sample(spec.n, spec.p, &mut r)?;
    let noise = Normal::new(0.0, spec.noise_var.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut y = &x * DVector::from_column_slice(&beta);
    for yi in y.iter_mut() {
        *yi += noise.sample(&mut r);
    }
    let name = match variant {
        SignalVariant::Constant => "signal-constant",
        SignalVariant::Uniform => "signal-uniform",
    };
    let mut scn = SimScenario::with(name.into(), beta, spec.noise_var.sqrt(), corr, (spec.n, 0, 0), (-spec.bound, spec.bound));
    scn.q = spec.spikes;
    Ok((Dataset::train_only(x, y)?, scn))
}

/// `lambda1` from `spec`, `lambda2 = 0`, and weights that leave the true
/// support unpenalized. This uses knowledge of the true support.
pub fn signal_recovery_config(scn: &SimScenario, spec: &SignalSpec) -> ArgenConfig {
    ArgenConfig {
        lambda1: spec.lambda1,
        lambda2: 0.0,
        w: scn.beta_star.iter().map(|&b| if b != 0.0 { 0.0 } else { 1.0 }).collect(),
        weights: WeightMode::Raw,
        sigma: model::Sigma::Identity,
        s: scn.s.clone(),
        t: scn.t.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub variant: SignalVariant,
    pub spec: SignalSpec,
    pub seed: u64,
    /// `(b - b*)'(X'X/n)(b - b*)`.
    pub oracle_mse: f64,
    /// `mean_i (b_i - b*_i)^2`.
    pub coef_mse: f64,
    pub diagnostics: SolveDiagnostics,
    pub beta_true: Vec<f64>,
    pub beta_hat: Vec<f64>,
}

impl SignalReport {
    /// `index,beta_true,beta_hat` rows for plotting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "beta_true", "beta_hat"])?;
        for (i, (bt, bh)) in self.beta_true.iter().zip(&self.beta_hat).enumerate() {
            w.write_record([i.to_string(), fmt_g17(*bt), fmt_g17(*bh)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_signal_recovery(variant: SignalVariant, spec: &SignalSpec, seed: u64, options: &SolverOptions) -> Result<SignalReport> {
    let (data, scn) = gen_signal_recovery(variant, spec, seed)?;
    let cfg = signal_recovery_config(&scn, spec);
    let fitted = model::fit(&data, &cfg, options)?;
    let star = scn.beta_star();
    let oracle_mse = tuning::oracle_mse(&fitted.beta(), &star, data.x())?;
    let coef_mse = (fitted.beta() - &star).norm_squared() / spec.p as f64;
    Ok(SignalReport {
        variant,
        spec: *spec,
        seed,
        oracle_mse,
        coef_mse,
        diagnostics: fitted.diagnostics,
        beta_true: scn.beta_star,
        beta_hat: fitted.beta,
    })
}

/// Median, bootstrap standard error of the median, and counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub method: Preset,
    /// Test MSE per successful replicate, in replicate order.
    pub test_mse: Vec<f64>,
    pub median: f64,
    pub se: f64,
    pub n_failed: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Standard deviation of the median over seeded bootstrap resamples.
pub fn bootstrap_median_se(values: &[f64], resamples: usize, r: &mut StreamRng) -> f64 {
    let n = values.len();
    if n < 2 || resamples < 2 {
        return 0.0;
    }
    let mut meds = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = values[r.random_range(0..n)];
        }
        meds.push(linalg::median(&buf).expect("nonempty"));
    }
    let mean = meds.iter().sum::<f64>() / resamples as f64;
    (meds.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub example: u8,
    pub methods: Vec<Preset>,
    pub replicates: usize,
    /// Trial budget per method; methods absent here use [`tuning::default_n_calls`].
    pub n_calls: Vec<(Preset, usize)>,
    pub seed: u64,
    /// Grid caps (`lambda1`, `lambda2`, `w_up`, `d_up`); `n_calls` and `seed`
    /// are overridden per method and replicate.
    pub space: SearchSpace,
    /// Overrides the scenario's training size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    /// Overrides the scenario's box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoxBounds>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    #[serde(with = "extended_vec")]
    pub s: Vec<f64>,
    #[serde(with = "extended_vec")]
    pub t: Vec<f64>,
}

impl BenchmarkSpec {
    pub fn new(example: u8, methods: Vec<Preset>, replicates: usize, seed: u64) -> Self {
        Self { example, methods, replicates, n_calls: Vec::new(), seed, space: SearchSpace::default(), n_train: None, bounds: None }
    }

    pub fn calls_for(&self, m: Preset) -> usize {
        self.n_calls.iter().find(|(p, _)| *p == m).map_or_else(|| tuning::default_n_calls(m), |&(_, n)| n)
    }
}

/// One `(replicate, method)` outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub example: u8,
    pub method: Preset,
    pub replicate: usize,
    /// `NaN` when the replicate failed.
    pub test_mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub spec: BenchmarkSpec,
    pub rows: Vec<ReplicateRow>,
    pub reports: Vec<ReplicateReport>,
}

fn run_one(scn: &SimScenario, spec: &BenchmarkSpec, replicate: usize, options: &SolverOptions) -> Result<Vec<Result<f64>>> {
    let data = draw_dataset(scn, &mut rng::stream(spec.seed, &[rng::tag("replicate"), replicate as u64]))?;
    let (xt, yt) = data.subset(Split::Train);
    let (xv, yv) = data.subset(Split::Validation);
    let (xs, _) = data.subset(Split::Test);
    let star = scn.beta_star();
    Ok(spec
        .methods
        .iter()
        .map(|&m| {
            let template = model::make_preset(m, scn.s.clone(), scn.t.clone())?;
            let space = SearchSpace {
                n_calls: spec.calls_for(m),
                seed: rng::derive_seed(spec.seed, &[rng::tag("tune"), replicate as u64, rng::tag(m.name())]),
                ..spec.space.clone()
            };
            let search = tuning::random_search_xy((&xt, &yt), (&xv, &yv), &space, &template, options, 1)?;
            let fitted = model::fit_xy(&xt, &yt, &search.best.config, options)?;
            tuning::oracle_mse(&fitted.beta(), &star, &xs)
        })
        .collect())
}

/// Runs every method on `replicates` fresh datasets. Replicates run on up to
/// `jobs` threads; their random streams depend only on `(seed, replicate)`.
pub fn run_benchmark(spec: &BenchmarkSpec, options: &SolverOptions, jobs: usize) -> Result<BenchmarkResult> {
    if spec.replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    if spec.methods.is_empty() {
        return Err(Error::invalid("no methods given"));
    }
    let mut scn = scenario(spec.example, spec.seed)?;
    if let Some(n) = spec.n_train {
        scn.n_train = n;
    }
    if let Some(b) = &spec.bounds {
        Error::check_len("lower bounds", scn.p(), b.s.len())?;
        Error::check_len("upper bounds", scn.p(), b.t.len())?;
        scn.s = b.s.clone();
        scn.t = b.t.clone();
    }
    let outcomes = tuning::par_map(spec.replicates, jobs, |r| run_one(&scn, spec, r, options));
    let mut rows = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(per_method) => {
                for (&m, res) in spec.methods.iter().zip(per_method) {
                    let (test_mse, error) = match res {
                        Ok(v) => (v, None),
                        Err(e) => (f64::NAN, Some(e.to_string())),
                    };
                    rows.push(ReplicateRow { example: spec.example, method: m, replicate: r, test_mse, error });
                }
            }
            Err(e) => {
                for &m in &spec.methods {
                    rows.push(ReplicateRow {
                        example: spec.example,
                        method: m,
                        replicate: r,
                        test_mse: f64::NAN,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    let reports = spec
        .methods
        .iter()
        .map(|&m| {
            let mine: Vec<&ReplicateRow> = rows.iter().filter(|row| row.method == m).collect();
            let ok: Vec<f64> = mine.iter().filter(|row| row.error.is_none()).map(|row| row.test_mse).collect();
            let mut br = rng::stream(spec.seed, &[rng::tag("bootstrap"), rng::tag(m.name())]);
            ReplicateReport {
                method: m,
                median: linalg::median(&ok).unwrap_or(f64::NAN),
                se: bootstrap_median_se(&ok, BOOTSTRAP_RESAMPLES, &mut br),
                n_failed: mine.len() - ok.len(),
                test_mse: ok,
            }
        })
        .collect();
    Ok(BenchmarkResult { spec: spec.clone(), rows, reports })
}

impl BenchmarkResult {
    /// `example,method,replicate,test_mse` rows; failed replicates are left
    /// empty in the `test_mse` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["example", "method", "replicate", "test_mse"])?;
        for row in &self.rows {
            let mse = if row.error.is_some() { String::new() } else { fmt_g17(row.test_mse) };
            w.write_record([row.example.to_string(), row.method.to_string(), row.replicate.to_string(), mse])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn report(&self, m: Preset) -> Option<&ReplicateReport> {
        self.reports.iter().find(|r| r.method == m)
    }
}

/// One cell of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub median: f64,
    pub se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// Methods as rows and examples as columns, each cell a median MSE with
/// its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub examples: Vec<u8>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Preset,
    pub cells: Vec<Option<SummaryCell>>,
}

pub fn summary_table(results: &[BenchmarkResult]) -> SummaryTable {
    let examples: Vec<u8> = results.iter().map(|r| r.spec.example).collect();
    let mut methods: Vec<Preset> = results.iter().flat_map(|r| r.spec.methods.iter().copied()).collect();
    methods.sort();
    methods.dedup();
    let rows = methods
        .into_iter()
        .map(|m| SummaryRow {
            method: m,
            cells: results
                .iter()
                .map(|r| {
                    r.report(m).map(|rep| SummaryCell { median: rep.median, se: rep.se, n_ok: rep.test_mse.len(), n_failed: rep.n_failed })
                })
                .collect(),
        })
        .collect();
    SummaryTable { examples, rows }
}
