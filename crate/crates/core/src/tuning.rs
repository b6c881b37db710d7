//! Hyper-parameter selection by validation MSE, and the bisection on
//! `lambda1` that targets a number of nonzero coefficients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ArgenConfig, ConfigTemplate, Dataset, FittedModel, Preset, Sigma, Split, WeightMode};
use crate::qp::SolverOptions;
use crate::rng;

/// Value set of a regularization strength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RangeSpec {
    /// `{0, 1, .., up}`.
    Integer { up: u32 },
    /// `exp(U(ln lo, ln hi))`.
    LogUniform { lo: f64, hi: f64 },
}

impl RangeSpec {
    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            RangeSpec::Integer { .. } => Ok(()),
            RangeSpec::LogUniform { lo, hi } => {
                if lo > 0.0 && hi >= lo && hi.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("{name}: log-uniform range needs 0 < lo <= hi < inf")))
                }
            }
        }
    }

    fn cardinality(&self) -> Option<u128> {
        match *self {
            RangeSpec::Integer { up } => Some(up as u128 + 1),
            RangeSpec::LogUniform { .. } => None,
        }
    }

    fn sample<R: Rng>(&self, r: &mut R) -> f64 {
        match *self {
            RangeSpec::Integer { up } => r.random_range(0..=up) as f64,
            RangeSpec::LogUniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    r.random_range(lo.ln()..hi.ln()).exp()
                }
            }
        }
    }

    fn contains(&self, x: f64) -> bool {
        match *self {
            RangeSpec::Integer { up } => x >= 0.0 && x <= up as f64 && x.fract() == 0.0,
            RangeSpec::LogUniform { lo, hi } => x >= lo && x <= hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lambda1: RangeSpec,
    pub lambda2: RangeSpec,
    pub w_up: u32,
    pub d_up: u32,
    /// Orthogonal `P` for `Sigma = P D P'`; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_matrix: Option<Vec<Vec<f64>>>,
    pub n_calls: usize,
    pub seed: u64,
    /// Enumerate the whole grid regardless of `n_calls`.
    #[serde(default)]
    pub exhaustive: bool,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lambda1: RangeSpec::Integer { up: 100 },
            lambda2: RangeSpec::Integer { up: 100 },
            w_up: 2,
            d_up: 2,
            p_matrix: None,
            n_calls: 100,
            seed: 0,
            exhaustive: false,
        }
    }
}

/// Trial budgets used for the simulated examples.
pub fn default_n_calls(preset: Preset) -> usize {
    match preset {
        Preset::Arls => 1,
        Preset::Arl | Preset::Arr => 100,
        Preset::Aren => 500,
        Preset::Argl | Preset::Argr => 1280,
        Preset::Arlen | Preset::Arren => 2560,
        Preset::Argen => 6554,
    }
}

/// One point of the integer grid, before normalization of `w`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridPoint {
    pub lambda1: Option<u32>,
    pub lambda2: Option<u32>,
    pub w: Option<Vec<u32>>,
    pub d: Option<Vec<u32>>,
}

impl SearchSpace {
    pub fn validate(&self, p: usize) -> Result<()> {
        self.lambda1.validate("lambda1")?;
        self.lambda2.validate("lambda2")?;
        if self.n_calls == 0 {
            return Err(Error::invalid("n_calls must be at least 1"));
        }
        if self.w_up == 0 {
            return Err(Error::invalid("w_up must be at least 1 (all-zero weights are rejected)"));
        }
        if let Some(pm) = &self.p_matrix {
            Sigma::Factored { p: rows(pm)?, d: DVector::zeros(p) }.validate(p)?;
        }
        Ok(())
    }

    fn p_or_identity(&self, p: usize) -> Result<DMatrix<f64>> {
        match &self.p_matrix {
            Some(pm) => rows(pm),
            None => Ok(DMatrix::identity(p, p)),
        }
    }

    /// Number of grid values for `preset`, or `None` if a range is
    /// continuous or the count overflows. `ARLS` has no grid and gives 0.
    pub fn grid_size(&self, preset: Preset, p: usize) -> Option<u128> {
        let t = preset.tunable();
        if t.is_empty() {
            return Some(0);
        }
        let mut total: u128 = 1;
        if t.lambda1 {
            total = total.checked_mul(self.lambda1.cardinality()?)?;
        }
        if t.lambda2 {
            total = total.checked_mul(self.lambda2.cardinality()?)?;
        }
        if t.w {
            total = total.checked_mul((self.w_up as u128 + 1).checked_pow(p as u32)?)?;
        }
        if t.sigma {
            total = total.checked_mul((self.d_up as u128 + 1).checked_pow(p as u32)?)?;
        }
        Some(total)
    }

    /// Mixed-radix enumeration of the integer grid, all-zero `w` included.
    pub fn enumerate_grid(&self, preset: Preset, p: usize) -> Result<Vec<GridPoint>> {
        let t = preset.tunable();
        let mut radices = Vec::new();
        if t.lambda1 {
            radices.push(self.lambda1.cardinality().ok_or_else(|| Error::invalid("lambda1 range is continuous"))? as usize);
        }
        if t.lambda2 {
            radices.push(self.lambda2.cardinality().ok_or_else(|| Error::invalid("lambda2 range is continuous"))? as usize);
        }
        if t.w {
            radices.extend(std::iter::repeat_n(self.w_up as usize + 1, p));
        }
        if t.sigma {
            radices.extend(std::iter::repeat_n(self.d_up as usize + 1, p));
        }
        let total = radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r));
        match total {
            Some(n) if n <= 10_000_000 => {}
            _ => return Err(Error::invalid("grid too large to enumerate")),
        }
        let mut digits = vec![0usize; radices.len()];
        let mut out = Vec::new();
        loop {
            let mut it = digits.iter().map(|&x| x as u32);
            out.push(GridPoint {
                lambda1: t.lambda1.then(|| it.next().unwrap()),
                lambda2: t.lambda2.then(|| it.next().unwrap()),
                w: t.w.then(|| it.by_ref().take(p).collect()),
                d: t.sigma.then(|| it.by_ref().take(p).collect()),
            });
            let mut k = digits.len();
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                digits[k] += 1;
                if digits[k] < radices[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
    }

    /// Whether `config` is a value this space can produce for `template`.
    pub fn contains(&self, template: &ConfigTemplate, config: &ArgenConfig) -> bool {
        let t = template.tunable;
        let base = &template.config;
        let p = base.dim();
        if config.s != base.s || config.t != base.t {
            return false;
        }
        let l1_ok = if t.lambda1 { self.lambda1.contains(config.lambda1) } else { config.lambda1 == base.lambda1 };
        let l2_ok = if t.lambda2 { self.lambda2.contains(config.lambda2) } else { config.lambda2 == base.lambda2 };
        let w_ok = if t.w {
            config.weights == WeightMode::Normalized
                && config.w.len() == p
                && config.w.iter().all(|&x| x.fract() == 0.0 && x >= 0.0 && x <= self.w_up as f64)
                && config.w.iter().any(|&x| x > 0.0)
        } else {
            config.w == base.w && config.weights == base.weights
        };
        let sigma_ok = if t.sigma {
            match (&config.sigma, self.p_or_identity(p)) {
                (Sigma::Factored { p: pm, d }, Ok(expected)) => {
                    *pm == expected && d.iter().all(|&x| x.fract() == 0.0 && x >= 0.0 && x <= self.d_up as f64)
                }
                _ => false,
            }
        } else {
            config.sigma == base.sigma
        };
        l1_ok && l2_ok && w_ok && sigma_ok
    }
}

fn rows(m: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = m.len();
    if m.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("P must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
}

/// Empirical and (when the truth is known) oracle mean squared error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseScore {
    /// `mean (y_i - x_i' beta_hat)^2`.
    pub empirical: f64,
    /// `(beta_hat - beta*)' (X'X / n) (beta_hat - beta*)`.
    pub oracle: Option<f64>,
}

pub fn oracle_mse(beta_hat: &DVector<f64>, beta_star: &DVector<f64>, x: &DMatrix<f64>) -> Result<f64> {
    Error::check_len("beta*", beta_hat.len(), beta_star.len())?;
    Error::check_len("design columns", beta_hat.len(), x.ncols())?;
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("empty slice".into()));
    }
    let diff = x * (beta_hat - beta_star);
    Ok(diff.norm_squared() / x.nrows() as f64)
}

pub fn mse_score(model: &FittedModel, x: &DMatrix<f64>, y: &DVector<f64>, beta_star: Option<&DVector<f64>>) -> Result<MseScore> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("empty slice".into()));
    }
    let pred = model::predict(model, x)?;
    Error::check_len("response rows", x.nrows(), y.len())?;
    let empirical = (y - pred).norm_squared() / y.len() as f64;
    let oracle = beta_star.map(|b| oracle_mse(&model.beta(), b, x)).transpose()?;
    Ok(MseScore { empirical, oracle })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub config: ArgenConfig,
    /// `inf` (written as `null`) when the fit failed.
    pub validation_mse: f64,
    pub converged: bool,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub preset: Preset,
    /// Whether the full grid was enumerated instead of sampled.
    pub exhaustive: bool,
    /// Set when no trial converged; `best` is then a best-effort pick.
    pub none_converged: bool,
    pub best: TrialRecord,
    pub trials: Vec<TrialRecord>,
}

/// Maps `f` over `0..n` with up to `jobs` threads, results in index order.
pub fn par_map<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

fn point_config(template: &ConfigTemplate, pt: &GridPoint, p_matrix: &DMatrix<f64>) -> ArgenConfig {
    let mut cfg = template.config.clone();
    if let Some(l) = pt.lambda1 {
        cfg.lambda1 = l as f64;
    }
    if let Some(l) = pt.lambda2 {
        cfg.lambda2 = l as f64;
    }
    if let Some(w) = &pt.w {
        cfg.w = w.iter().map(|&x| x as f64).collect();
        cfg.weights = WeightMode::Normalized;
    }
    if let Some(d) = &pt.d {
        cfg.sigma = Sigma::Factored { p: p_matrix.clone(), d: DVector::from_iterator(d.len(), d.iter().map(|&x| x as f64)) };
    }
    cfg
}

fn sample_config(template: &ConfigTemplate, space: &SearchSpace, p_matrix: &DMatrix<f64>, k: usize) -> ArgenConfig {
    let t = template.tunable;
    let p = template.config.dim();
    let mut r = rng::stream(space.seed, &[rng::tag("trial"), k as u64]);
    let mut cfg = template.config.clone();
    if t.lambda1 {
        cfg.lambda1 = space.lambda1.sample(&mut r);
    }
    if t.lambda2 {
        cfg.lambda2 = space.lambda2.sample(&mut r);
    }
    if t.w {
        let w = loop {
            let w: Vec<f64> = (0..p).map(|_| r.random_range(0..=space.w_up) as f64).collect();
            if w.iter().any(|&x| x > 0.0) {
                break w;
            }
        };
        cfg.w = w;
        cfg.weights = WeightMode::Normalized;
    }
    if t.sigma {
        let d = DVector::from_fn(p, |_, _| r.random_range(0..=space.d_up) as f64);
        cfg.sigma = Sigma::Factored { p: p_matrix.clone(), d };
    }
    cfg
}

/// Candidate configurations in trial order, and whether they enumerate the
/// grid.
pub fn candidate_configs(template: &ConfigTemplate, space: &SearchSpace) -> Result<(Vec<ArgenConfig>, bool)> {
    let p = template.config.dim();
    space.validate(p)?;
    let pm = space.p_or_identity(p)?;
    if template.tunable.is_empty() {
        return Ok((vec![template.config.clone()], true));
    }
    let grid = space.grid_size(template.preset, p);
    let enumerate = space.exhaustive || grid.is_some_and(|g| space.n_calls as u128 >= g);
    if enumerate {
        let points = space.enumerate_grid(template.preset, p)?;
        let configs = points
            .iter()
            .filter(|pt| pt.w.as_ref().is_none_or(|w| w.iter().any(|&x| x > 0)))
            .map(|pt| point_config(template, pt, &pm))
            .collect();
        Ok((configs, true))
    } else {
        Ok(((0..space.n_calls).map(|k| sample_config(template, space, &pm, k)).collect(), false))
    }
}

/// Random search on explicit train and validation arrays.
pub fn random_search_xy(
    train: (&DMatrix<f64>, &DVector<f64>),
    validation: (&DMatrix<f64>, &DVector<f64>),
    space: &SearchSpace,
    template: &ConfigTemplate,
    options: &SolverOptions,
    jobs: usize,
) -> Result<SearchResult> {
    if train.0.nrows() == 0 || validation.0.nrows() == 0 {
        return Err(Error::InsufficientData("random search needs train and validation rows".into()));
    }
    let (configs, exhaustive) = candidate_configs(template, space)?;
    let mut trials = par_map(configs.len(), jobs, |k| {
        let config = configs[k].clone();
        let outcome =
            model::fit_xy(train.0, train.1, &config, options).and_then(|m| mse_score(&m, validation.0, validation.1, None).map(|s| (m, s)));
        match outcome {
            Ok((m, s)) => {
                TrialRecord { index: k, config, validation_mse: s.empirical, converged: m.diagnostics.converged, rank: 0, error: None }
            }
            Err(e) => {
                TrialRecord { index: k, config, validation_mse: f64::INFINITY, converged: false, rank: 0, error: Some(e.to_string()) }
            }
        }
    });
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials[a].validation_mse.total_cmp(&trials[b].validation_mse).then(a.cmp(&b)));
    for (r, &k) in order.iter().enumerate() {
        trials[k].rank = r + 1;
    }
    let best = trials[order[0]].clone();
    if best.error.is_some() {
        return Err(Error::invalid(format!("every trial failed; first error: {}", best.error.unwrap_or_default())));
    }
    let none_converged = trials.iter().all(|t| !t.converged);
    Ok(SearchResult { preset: template.preset, exhaustive, none_converged, best, trials })
}

/// Tunes on the train rows and scores on the validation rows of `data`.
pub fn random_search(
    data: &Dataset,
    space: &SearchSpace,
    template: &ConfigTemplate,
    options: &SolverOptions,
    jobs: usize,
) -> Result<SearchResult> {
    let (xt, yt) = data.subset(Split::Train);
    let (xv, yv) = data.subset(Split::Validation);
    random_search_xy((&xt, &yt), (&xv, &yv), space, template, options, jobs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionSettings {
    /// Doublings of the upper end allowed while bracketing.
    pub max_expansions: usize,
    /// Bisection steps after bracketing.
    pub max_iter: usize,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        Self { max_expansions: 60, max_iter: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    pub lambda1: f64,
    pub achieved: usize,
    /// Whether `achieved` equals the target.
    pub reached: bool,
    /// Every probe `(lambda1, nonzero count)` in evaluation order.
    pub trace: Vec<(f64, usize)>,
    pub beta: Vec<f64>,
}

/// Searches `lambda1` so the fit has `target` nonzero coefficients. The
/// upper end starts at 1 and doubles until its count is at most the target;
/// then plain bisection runs until the count matches. If the cap is hit,
/// the probe whose count is closest to the target wins (ties: smaller
/// `lambda1`).
pub fn bisection_lambda1_xy(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    base: &ArgenConfig,
    target: usize,
    options: &SolverOptions,
    settings: &BisectionSettings,
) -> Result<BisectionResult> {
    let p = base.dim();
    if target > p {
        return Err(Error::invalid(format!("target {target} exceeds the number of coefficients {p}")));
    }
    let mut trace = Vec::new();
    let mut betas: Vec<Vec<f64>> = Vec::new();
    let mut probe = |lambda: f64| -> Result<usize> {
        let cfg = ArgenConfig { lambda1: lambda, ..base.clone() };
        let m = model::fit_xy(x, y, &cfg, options)?;
        trace.push((lambda, m.n_nonzero));
        betas.push(m.beta);
        Ok(m.n_nonzero)
    };

    let mut down = 0.0_f64;
    let mut up = 1.0_f64;
    let mut hit = None;
    let mut bracketed = false;
    for _ in 0..=settings.max_expansions {
        let c = probe(up)?;
        if c <= target {
            bracketed = true;
            break;
        }
        down = up;
        up *= 2.0;
    }
    if bracketed {
        for _ in 0..settings.max_iter {
            let lambda = 0.5 * (up + down);
            if lambda <= down || lambda >= up {
                break;
            }
            let c = probe(lambda)?;
            if c == target {
                hit = Some(trace.len() - 1);
                break;
            }
            if c > target {
                down = lambda;
            } else {
                up = lambda;
            }
        }
    }
    let pick = hit.unwrap_or_else(|| {
        (0..trace.len())
            .min_by(|&a, &b| {
                let da = trace[a].1.abs_diff(target);
                let db = trace[b].1.abs_diff(target);
                da.cmp(&db).then(trace[a].0.total_cmp(&trace[b].0))
            })
            .expect("at least one probe")
    });
    let (lambda1, achieved) = trace[pick];
    Ok(BisectionResult { lambda1, achieved, reached: achieved == target, beta: betas[pick].clone(), trace })
}

/// [`bisection_lambda1_xy`] on the training rows of `data`.
pub fn bisection_lambda1(data: &Dataset, base: &ArgenConfig, target: usize, options: &SolverOptions) -> Result<BisectionResult> {
    let (x, y) = data.subset(Split::Train);
    bisection_lambda1_xy(&x, &y, base, target, options, &BisectionSettings::default())
}
