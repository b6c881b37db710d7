//! Index tracking: price ingestion, returns, universe selection by the
//! sparsity-targeted bisection, bounded fits, normalized portfolios and
//! tracking metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, fmt_g17, make_preset, ArgenConfig, Preset};
use crate::qp::SolverOptions;
use crate::rng;
use crate::tuning::{self, BisectionSettings, RangeSpec, SearchSpace};

pub const INDEX_TICKER: &str = "INDEX";
/// Upper bound standing in for `+inf` during universe selection.
pub const SELECTION_UPPER: f64 = 1e6;
/// Trading days per year, used to annualize volatility.
pub const TRADING_DAYS: f64 = 252.0;

/// Aligned daily prices of an index and its candidate constituents.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceFrame {
    pub dates: Vec<NaiveDate>,
    pub index_prices: DVector<f64>,
    /// `dates x assets`.
    pub asset_prices: DMatrix<f64>,
    pub tickers: Vec<String>,
}

impl PriceFrame {
    pub fn new(dates: Vec<NaiveDate>, index_prices: DVector<f64>, asset_prices: DMatrix<f64>, tickers: Vec<String>) -> Result<Self> {
        Error::check_len("index prices", dates.len(), index_prices.len())?;
        Error::check_len("asset price rows", dates.len(), asset_prices.nrows())?;
        Error::check_len("tickers", asset_prices.ncols(), tickers.len())?;
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("dates must be strictly increasing".into()));
        }
        if index_prices.iter().chain(asset_prices.iter()).any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Data("prices must be positive and finite".into()));
        }
        Ok(Self { dates, index_prices, asset_prices, tickers })
    }

    /// Reads long-format `date,ticker,adj_close` rows with the index under
    /// ticker `INDEX`. Tickers missing more than 1% of the dates are
    /// dropped, then dates with any remaining gap are dropped.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col =
            |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("price CSV lacks a {name:?} column")));
        let (ci, ti, pi) = (col("date")?, col("ticker")?, col("adj_close")?);
        let mut cells: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
        let mut all_dates = BTreeSet::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let date: NaiveDate = rec.get(ci).unwrap_or("").parse().map_err(|e| Error::Data(format!("line {line}: bad date: {e}")))?;
            let ticker = rec.get(ti).unwrap_or("").to_string();
            let raw = rec.get(pi).unwrap_or("");
            if raw.is_empty() {
                continue;
            }
            let price: f64 = raw.parse().map_err(|_| Error::Data(format!("line {line}: bad price {raw:?}")))?;
            if !(price > 0.0) || !price.is_finite() {
                return Err(Error::Data(format!("line {line}: nonpositive price {price} for {ticker}")));
            }
            all_dates.insert(date);
            if cells.entry(ticker.clone()).or_default().insert(date, price).is_some() {
                return Err(Error::Data(format!("line {line}: duplicate price for {ticker} on {date}")));
            }
        }
        let index = cells.remove(INDEX_TICKER).ok_or_else(|| Error::Data("no INDEX rows in price CSV".into()))?;
        let n_dates = all_dates.len() as f64;
        let kept: Vec<(String, BTreeMap<NaiveDate, f64>)> =
            cells.into_iter().filter(|(_, s)| (n_dates - s.len() as f64) <= 0.01 * n_dates).collect();
        let dates: Vec<NaiveDate> =
            all_dates.into_iter().filter(|d| index.contains_key(d) && kept.iter().all(|(_, s)| s.contains_key(d))).collect();
        let asset = DMatrix::from_fn(dates.len(), kept.len(), |i, j| kept[j].1[&dates[i]]);
        let idx = DVector::from_iterator(dates.len(), dates.iter().map(|d| index[d]));
        Self::new(dates, idx, asset, kept.into_iter().map(|(t, _)| t).collect())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "ticker", "adj_close"])?;
        for (i, d) in self.dates.iter().enumerate() {
            let ds = d.format("%Y-%m-%d").to_string();
            w.write_record([ds.as_str(), INDEX_TICKER, &fmt_g17(self.index_prices[i])])?;
            for (j, t) in self.tickers.iter().enumerate() {
                w.write_record([ds.as_str(), t, &fmt_g17(self.asset_prices[(i, j)])])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn simple_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Data("nonpositive price".into()));
    }
    Ok(prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect())
}

/// Simple returns `P_t / P_{t-1} - 1`: `(asset returns, index returns)`,
/// one row fewer than the prices.
pub fn compute_returns(frame: &PriceFrame) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = frame.dates.len();
    if n < 2 {
        return Err(Error::InsufficientData("need at least two dates for returns".into()));
    }
    let idx = DVector::from_vec(simple_returns(frame.index_prices.as_slice())?);
    let mut assets = DMatrix::zeros(n - 1, frame.tickers.len());
    for j in 0..frame.tickers.len() {
        let col: Vec<f64> = frame.asset_prices.column(j).iter().copied().collect();
        assets.set_column(j, &DVector::from_vec(simple_returns(&col)?));
    }
    Ok((assets, idx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Indices `i` with `t_i + sum_{j != i} s_j < 1`.
    pub violating: Vec<usize>,
}

/// Checks `t_i + sum_{j != i} s_j >= 1` for every `i`, which guarantees that
/// normalized weights stay below `t`.
pub fn check_bound_feasibility(s: &[f64], t: &[f64]) -> FeasibilityReport {
    let total = linalg::neumaier_sum(s.iter().copied());
    let violating: Vec<usize> = (0..s.len().min(t.len()))
        .filter(|&i| {
            let lhs = t[i] + (total - s[i]);
            lhs < 1.0 - 1e-12
        })
        .collect();
    FeasibilityReport { feasible: violating.is_empty() && s.len() == t.len(), violating }
}

/// `beta / sum(beta)` for nonnegative `beta` with a positive total.
pub fn normalize_weights(beta: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = beta.iter().position(|&b| !(b >= 0.0)) {
        return Err(Error::invalid(format!("weights must be nonnegative (beta[{i}] = {})", beta[i])));
    }
    let total = linalg::neumaier_sum(beta.iter().copied());
    if !(total > 0.0) {
        return Err(Error::invalid("cannot normalize weights with zero total"));
    }
    Ok(beta.iter().map(|b| b / total).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

impl Portfolio {
    pub fn from_beta(tickers: Vec<String>, beta: &[f64], s: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        Error::check_len("portfolio tickers", beta.len(), tickers.len())?;
        Ok(Self { tickers, weights: normalize_weights(beta)?, s, t })
    }

    pub fn within_upper_bounds(&self) -> bool {
        self.weights.iter().zip(&self.t).all(|(w, t)| *w <= *t + 1e-12)
    }
}

/// Tracking error, annualized volatility and cumulative return.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackMetrics {
    #[serde(rename = "TE")]
    pub te: f64,
    #[serde(rename = "ARV")]
    pub arv: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
}

fn population_std(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    let mean = linalg::neumaier_sum(x.clone()) / n;
    (linalg::neumaier_sum(x.map(|v| (v - mean).powi(2))) / n).sqrt()
}

pub fn track_metrics(portfolio: &[f64], benchmark: &[f64]) -> Result<TrackMetrics> {
    Error::check_len("benchmark returns", portfolio.len(), benchmark.len())?;
    if portfolio.is_empty() {
        return Err(Error::InsufficientData("no returns to evaluate".into()));
    }
    let te = population_std(portfolio.iter().zip(benchmark).map(|(p, b)| p - b));
    let arv = TRADING_DAYS.sqrt() * population_std(portfolio.iter().copied());
    let cr = portfolio.iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0;
    Ok(TrackMetrics { te, arv, cr })
}

/// How a portfolio is held through the evaluation period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holding {
    /// `r_p,t = w' r_t` every day.
    #[default]
    FixedWeights,
    /// Buy once and let weights drift with prices.
    Drift,
}

pub fn portfolio_returns(weights: &[f64], returns: &DMatrix<f64>, holding: Holding) -> Result<Vec<f64>> {
    Error::check_len("portfolio weights", returns.ncols(), weights.len())?;
    let w = DVector::from_column_slice(weights);
    Ok(match holding {
        Holding::FixedWeights => (returns * &w).iter().copied().collect(),
        Holding::Drift => {
            let mut value = w;
            (0..returns.nrows())
                .map(|t| {
                    let total = value.sum();
                    let row = returns.row(t).transpose();
                    let next = value.component_mul(&row.add_scalar(1.0));
                    let r = next.sum() / total - 1.0;
                    value = next;
                    r
                })
                .collect()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniverseSelection {
    pub indices: Vec<usize>,
    pub tickers: Vec<String>,
    pub lambda1: f64,
    /// Nonzero count at the chosen `lambda1`.
    pub achieved: usize,
    pub reached: bool,
}

/// Picks `n` assets with the bisection on `lambda1` (`lambda2 = 0`, equal
/// weights, bounds `[0, 1e6]`). If the chosen fit has more than `n` nonzero
/// coefficients the `n` largest are kept.
pub fn select_universe(
    returns: &DMatrix<f64>,
    index_returns: &DVector<f64>,
    tickers: &[String],
    n: usize,
    options: &SolverOptions,
) -> Result<UniverseSelection> {
    let m = returns.ncols();
    Error::check_len("tickers", m, tickers.len())?;
    if n == 0 || n > m {
        return Err(Error::invalid(format!("number of stocks must be in 1..={m}, got {n}")));
    }
    if n == m {
        return Ok(UniverseSelection { indices: (0..m).collect(), tickers: tickers.to_vec(), lambda1: 0.0, achieved: m, reached: true });
    }
    let base = ArgenConfig::unpenalized(vec![0.0; m], vec![SELECTION_UPPER; m]);
    let res = tuning::bisection_lambda1_xy(returns, index_returns, &base, n, options, &BisectionSettings::default())?;
    let tol = model::zero_tol(&res.beta);
    let mut nonzero: Vec<usize> = (0..m).filter(|&i| res.beta[i].abs() > tol).collect();
    nonzero.sort_by(|&a, &b| res.beta[b].total_cmp(&res.beta[a]).then(a.cmp(&b)));
    nonzero.truncate(n);
    nonzero.sort_unstable();
    Ok(UniverseSelection {
        tickers: nonzero.iter().map(|&i| tickers[i].clone()).collect(),
        indices: nonzero,
        lambda1: res.lambda1,
        achieved: res.achieved,
        reached: res.reached,
    })
}

/// Search settings for the tracking fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingTuner {
    pub lambda1: RangeSpec,
    pub lambda2: RangeSpec,
    pub w_up: u32,
    pub d_up: u32,
    pub n_calls: usize,
    pub seed: u64,
}

impl Default for TrackingTuner {
    fn default() -> Self {
        Self {
            lambda1: RangeSpec::LogUniform { lo: 1e-8, hi: 5e-2 },
            lambda2: RangeSpec::LogUniform { lo: 1e-8, hi: 1e2 },
            w_up: 1,
            d_up: 1,
            n_calls: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingSpec {
    pub n_stocks: usize,
    /// Uniform lower and upper weight bounds.
    pub lower: f64,
    pub upper: f64,
    /// Leading returns used for selection and fitting.
    pub window: usize,
    /// Trailing share of the window used for validation.
    pub validation_fraction: f64,
    pub holding: Holding,
    pub tuner: TrackingTuner,
}

impl TrackingSpec {
    pub fn new(n_stocks: usize, lower: f64, upper: f64) -> Self {
        Self {
            n_stocks,
            lower,
            upper,
            window: 252,
            validation_fraction: 0.2,
            holding: Holding::FixedWeights,
            tuner: TrackingTuner::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub weights: Vec<f64>,
    pub config: ArgenConfig,
    pub validation_mse: f64,
    pub within_bounds: bool,
    #[serde(flatten)]
    pub metrics: TrackMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub universe: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(rename = "TE")]
    pub te: f64,
    #[serde(rename = "ARV")]
    pub arv: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
    pub config: ArgenConfig,
    pub validation_mse: f64,
    pub within_bounds: bool,
    /// Set when no tuned configuration beat the baseline on validation and
    /// the baseline configuration was used instead.
    pub used_baseline_config: bool,
    pub baseline: MethodOutcome,
    pub selection: UniverseSelection,
    pub feasibility: FeasibilityReport,
    pub return_definition: String,
    pub holding: Holding,
    pub split: SplitSizes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Full pipeline: split, select, fit ARGEN and the ARLS baseline on the
/// selected universe, normalize, and evaluate buy-and-hold returns on the
/// test period without refitting.
pub fn run_tracking(frame: &PriceFrame, spec: &TrackingSpec, options: &SolverOptions, jobs: usize) -> Result<TrackingReport> {
    let (returns, index_returns) = compute_returns(frame)?;
    let total = returns.nrows();
    if spec.window < 2 || total <= spec.window {
        return Err(Error::InsufficientData(format!("need more than {} returns for the fitting window, have {total}", spec.window)));
    }
    let n_val = ((spec.window as f64) * spec.validation_fraction).round() as usize;
    if n_val == 0 || n_val >= spec.window {
        return Err(Error::invalid("validation fraction leaves an empty split"));
    }
    let n_train = spec.window - n_val;
    let k = spec.n_stocks;
    let s = vec![spec.lower; k];
    let t = vec![spec.upper; k];
    if spec.lower < 0.0 {
        return Err(Error::invalid("long-only tracking needs a nonnegative lower bound"));
    }
    let feasibility = check_bound_feasibility(&s, &t);
    if !feasibility.feasible {
        return Err(Error::InfeasibleBounds { violating: feasibility.violating });
    }

    let window_x = returns.rows(0, spec.window).into_owned();
    let window_y = index_returns.rows(0, spec.window).into_owned();
    let selection = select_universe(&window_x, &window_y, &frame.tickers, k, options)?;
    if selection.indices.len() != k {
        return Err(Error::invalid(format!(
            "universe selection found {} assets with nonzero weight, fewer than the {k} requested",
            selection.indices.len()
        )));
    }
    let sub = returns.select_columns(selection.indices.iter());
    let xt = sub.rows(0, n_train).into_owned();
    let yt = index_returns.rows(0, n_train).into_owned();
    let xv = sub.rows(n_train, n_val).into_owned();
    let yv = index_returns.rows(n_train, n_val).into_owned();
    let x_test = sub.rows(spec.window, total - spec.window).into_owned();
    let y_test: Vec<f64> = index_returns.rows(spec.window, total - spec.window).iter().copied().collect();

    let evaluate = |config: &ArgenConfig| -> Result<MethodOutcome> {
        let fitted = model::fit_xy(&xt, &yt, config, options)?;
        let validation_mse = tuning::mse_score(&fitted, &xv, &yv, None)?.empirical;
        let portfolio = Portfolio::from_beta(selection.tickers.clone(), &fitted.beta, s.clone(), t.clone())?;
        let rp = portfolio_returns(&portfolio.weights, &x_test, spec.holding)?;
        Ok(MethodOutcome {
            within_bounds: portfolio.within_upper_bounds(),
            weights: portfolio.weights,
            config: config.clone(),
            validation_mse,
            metrics: track_metrics(&rp, &y_test)?,
        })
    };

    let arls = make_preset(Preset::Arls, s.clone(), t.clone())?;
    let baseline = evaluate(&arls.config)?;

    let template = make_preset(Preset::Argen, s.clone(), t.clone())?;
    let space = SearchSpace {
        lambda1: spec.tuner.lambda1,
        lambda2: spec.tuner.lambda2,
        w_up: spec.tuner.w_up,
        d_up: spec.tuner.d_up,
        p_matrix: None,
        n_calls: spec.tuner.n_calls,
        seed: spec.tuner.seed,
        exhaustive: false,
    };
    let search = tuning::random_search_xy((&xt, &yt), (&xv, &yv), &space, &template, options, jobs)?;
    let used_baseline_config = !(search.best.validation_mse < baseline.validation_mse);
    let chosen = if used_baseline_config { baseline.clone() } else { evaluate(&search.best.config)? };

    Ok(TrackingReport {
        universe: selection.tickers.clone(),
        weights: chosen.weights,
        te: chosen.metrics.te,
        arv: chosen.metrics.arv,
        cr: chosen.metrics.cr,
        config: chosen.config,
        validation_mse: chosen.validation_mse,
        within_bounds: chosen.within_bounds,
        used_baseline_config,
        baseline,
        selection,
        feasibility,
        return_definition: "simple".into(),
        holding: spec.holding,
        split: SplitSizes { train: n_train, validation: n_val, test: total - spec.window },
    })
}

/// Parameters of the synthetic index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub assets: usize,
    pub true_k: usize,
    /// Standard deviation of daily noise added to the index return.
    pub noise_std: f64,
    /// Daily volatility of the common market factor.
    #[serde(default = "default_market_std")]
    pub market_std: f64,
    pub days: usize,
    pub seed: u64,
}

fn default_market_std() -> f64 {
    0.006
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { assets: 50, true_k: 10, noise_std: 1e-3, market_std: default_market_std(), days: 1259, seed: 0 }
    }
}

/// Generated prices plus the constituents and weights that define the
/// index.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticIndex {
    pub frame: PriceFrame,
    pub constituents: Vec<usize>,
    pub weights: Vec<f64>,
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.checked_add_days(Days::new(1)).expect("date in range");
    }
    out
}

/// One-factor market model for asset returns; the index return each day is
/// a fixed convex combination of `true_k` assets plus Gaussian noise.
pub fn synthetic_index(spec: &SyntheticSpec) -> Result<SyntheticIndex> {
    if spec.true_k == 0 || spec.true_k > spec.assets {
        return Err(Error::invalid("true_k must be in 1..=assets"));
    }
    if spec.days < 2 || !(spec.noise_std >= 0.0) {
        return Err(Error::invalid("synthetic index needs at least two days and a nonnegative noise"));
    }
    let mut r = rng::stream(spec.seed, &[rng::tag("synthetic-index")]);
    let n_ret = spec.days - 1;
    let market = Normal::new(3e-4, spec.market_std).map_err(|e| Error::invalid(e.to_string()))?;
    let idio = Normal::new(0.0, 0.015).expect("valid");
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let loadings: Vec<f64> = (0..spec.assets).map(|_| r.random_range(0.8..1.2)).collect();
    let mut constituents = index::sample(&mut r, spec.assets, spec.true_k).into_vec();
    constituents.sort_unstable();
    // geometrically spaced weights in random order keep the constituents
    // distinguishable by size
    let mut ranks: Vec<usize> = (0..spec.true_k).collect();
    ranks.shuffle(&mut r);
    let ratio = 0.6_f64.powf(5.0 / spec.true_k.max(5) as f64);
    let raw: Vec<f64> = ranks.iter().map(|&k| ratio.powi(k as i32)).collect();
    let weights = normalize_weights(&raw)?;

    let mut rets = DMatrix::zeros(n_ret, spec.assets);
    let mut idx = Vec::with_capacity(n_ret);
    for t in 0..n_ret {
        let m = market.sample(&mut r);
        for a in 0..spec.assets {
            rets[(t, a)] = (loadings[a] * m + idio.sample(&mut r)).max(-0.5);
        }
        let combo: f64 = constituents.iter().zip(&weights).map(|(&a, w)| w * rets[(t, a)]).sum();
        let e = if spec.noise_std > 0.0 { noise.sample(&mut r) } else { 0.0 };
        idx.push(combo + e);
    }
    let mut prices = DMatrix::zeros(spec.days, spec.assets);
    let mut index_prices = DVector::zeros(spec.days);
    index_prices[0] = 1000.0;
    for a in 0..spec.assets {
        prices[(0, a)] = 50.0;
    }
    for t in 0..n_ret {
        index_prices[t + 1] = index_prices[t] * (1.0 + idx[t]);
        for a in 0..spec.assets {
            prices[(t + 1, a)] = prices[(t, a)] * (1.0 + rets[(t, a)]);
        }
    }
    let width = (spec.assets.max(2) - 1).to_string().len();
    let tickers = (0..spec.assets).map(|a| format!("A{a:0width$}")).collect();
    let start = NaiveDate::from_ymd_opt(2016, 2, 19).expect("valid date");
    let frame = PriceFrame::new(business_days(start, spec.days), index_prices, prices, tickers)?;
    Ok(SyntheticIndex { frame, constituents, weights })
}
