//! The estimator: configuration, datasets, presets, `fit` and `predict`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::json::extended_vec;
use crate::linalg;
use crate::qp::{self, QpProblem, SolverOptions};

/// Orthogonality tolerance for the `P` factor of `Sigma = P D P'`.
const ORTHO_TOL: f64 = 1e-8;

/// The interaction matrix of the quadratic penalty.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Sigma {
    #[default]
    Identity,
    Dense(DMatrix<f64>),
    /// `P diag(D) P'` with `P` orthogonal and `D >= 0`.
    Factored {
        p: DMatrix<f64>,
        d: DVector<f64>,
    },
}

impl Sigma {
    pub fn diagonal(d: DVector<f64>) -> Self {
        let n = d.len();
        Sigma::Factored { p: DMatrix::identity(n, n), d }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Sigma::Identity => Ok(()),
            Sigma::Dense(m) => {
                Error::check_len("sigma rows", dim, m.nrows())?;
                Error::check_len("sigma columns", dim, m.ncols())?;
                if m.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("sigma must be finite"));
                }
                let scale = m.amax();
                if linalg::asymmetry(m) > qp::SYM_TOL * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::invalid("sigma is not symmetric"));
                }
                linalg::check_psd(&linalg::symmetrize(m)).map(|_| ())
            }
            Sigma::Factored { p, d } => {
                Error::check_len("sigma P rows", dim, p.nrows())?;
                Error::check_len("sigma P columns", dim, p.ncols())?;
                Error::check_len("sigma D", dim, d.len())?;
                if let Some(i) = d.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(Error::invalid(format!("sigma D must be finite and nonnegative (D[{i}] = {})", d[i])));
                }
                let dev = (p.tr_mul(p) - DMatrix::identity(dim, dim)).amax();
                if !(dev <= ORTHO_TOL) {
                    return Err(Error::invalid(format!("sigma P is not orthogonal (max deviation {dev:e})")));
                }
                Ok(())
            }
        }
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Sigma::Identity => DMatrix::identity(dim, dim),
            Sigma::Dense(m) => linalg::symmetrize(m),
            Sigma::Factored { p, d } => {
                let scaled = DMatrix::from_fn(dim, dim, |i, j| p[(i, j)] * d[j]);
                linalg::symmetrize(&(scaled * p.transpose()))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SigmaRepr {
    Name(String),
    Matrix(Vec<Vec<f64>>),
    Factored {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        #[serde(rename = "D")]
        d: Vec<f64>,
    },
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err("ragged matrix".into());
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl Serialize for Sigma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sigma::Identity => SigmaRepr::Name("identity".into()),
            Sigma::Dense(m) => SigmaRepr::Matrix(matrix_to_rows(m)),
            Sigma::Factored { p, d } => SigmaRepr::Factored { p: matrix_to_rows(p), d: d.as_slice().to_vec() },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Sigma {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match SigmaRepr::deserialize(de)? {
            SigmaRepr::Name(n) if n == "identity" => Ok(Sigma::Identity),
            SigmaRepr::Name(n) => Err(D::Error::custom(format!("unknown sigma {n:?}, expected \"identity\""))),
            SigmaRepr::Matrix(rows) => rows_to_matrix(&rows).map(Sigma::Dense).map_err(D::Error::custom),
            SigmaRepr::Factored { p, d } => {
                Ok(Sigma::Factored { p: rows_to_matrix(&p).map_err(D::Error::custom)?, d: DVector::from_vec(d) })
            }
        }
    }
}

/// How the entered `w` is turned into the penalty weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `w` is used as given.
    #[default]
    Raw,
    /// `w` is divided by its sum before use.
    Normalized,
}

/// Regularization, weights, interaction matrix and box `[s, t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgenConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub w: Vec<f64>,
    #[serde(default)]
    pub weights: WeightMode,
    #[serde(default)]
    pub sigma: Sigma,
    #[serde(with = "extended_vec")]
    pub s: Vec<f64>,
    #[serde(with = "extended_vec")]
    pub t: Vec<f64>,
}

impl ArgenConfig {
    /// Least squares over `[s, t]` with unit weights and identity `Sigma`.
    pub fn unpenalized(s: Vec<f64>, t: Vec<f64>) -> Self {
        let p = s.len();
        Self { lambda1: 0.0, lambda2: 0.0, w: vec![1.0; p], weights: WeightMode::Raw, sigma: Sigma::Identity, s, t }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        if p == 0 {
            return Err(Error::invalid("configuration needs at least one coefficient"));
        }
        Error::check_len("t", p, self.t.len())?;
        Error::check_len("w", p, self.w.len())?;
        for (name, x) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {x}")));
            }
        }
        if let Some(i) = self.w.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid(format!("w must be finite and nonnegative (w[{i}] = {})", self.w[i])));
        }
        if let Some(i) = self.s.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "lower bound s[{i}] = {} is not finite; use a large finite bound such as -1000",
                self.s[i]
            )));
        }
        if let Some(i) = (0..p).find(|&i| !(self.s[i] < self.t[i])) {
            return Err(Error::invalid(format!("bounds need s < t (s[{i}] = {}, t[{i}] = {})", self.s[i], self.t[i])));
        }
        if self.weights == WeightMode::Normalized && !(self.w.iter().sum::<f64>() > 0.0) {
            return Err(Error::invalid("normalized weights need a positive sum"));
        }
        self.sigma.validate(p)
    }

    /// Penalty weights actually used.
    pub fn effective_w(&self) -> DVector<f64> {
        let w = DVector::from_column_slice(&self.w);
        match self.weights {
            WeightMode::Raw => w,
            WeightMode::Normalized => {
                let total = w.sum();
                w / total
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split label {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// Design matrix, response and a split label per row. No centering is
/// applied here.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    split: Vec<Split>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, split: Vec<Split>) -> Result<Self> {
        if x.ncols() == 0 {
            return Err(Error::invalid("dataset needs at least one predictor"));
        }
        Error::check_len("response rows", x.nrows(), y.len())?;
        Error::check_len("split labels", x.nrows(), split.len())?;
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y, split })
    }

    /// Every row labelled `train`.
    pub fn train_only(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = x.nrows();
        Self::new(x, y, vec![Split::Train; n])
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn split(&self) -> &[Split] {
        &self.split
    }
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }
    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn count(&self, which: Split) -> usize {
        self.split.iter().filter(|&&s| s == which).count()
    }

    /// Rows with the given label, in original order.
    pub fn subset(&self, which: Split) -> (DMatrix<f64>, DVector<f64>) {
        let rows: Vec<usize> = (0..self.n_rows()).filter(|&i| self.split[i] == which).collect();
        let x = self.x.select_rows(rows.iter());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        (x, y)
    }

    /// Reads `y,x1,..,xp[,split]`. Without a split column every row is
    /// training data.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let has_split = names.last() == Some(&"split");
        let n_value_cols = names.len() - usize::from(has_split);
        if names.first() != Some(&"y") || n_value_cols < 2 {
            return Err(Error::Data("CSV header must be y,x1,..,xp with an optional split column".into()));
        }
        for (k, name) in names[1..n_value_cols].iter().enumerate() {
            if *name != format!("x{}", k + 1) {
                return Err(Error::Data(format!("column {} should be named x{}, found {name:?}", k + 2, k + 1)));
            }
        }
        let p = n_value_cols - 1;
        let mut values = Vec::new();
        let mut ys = Vec::new();
        let mut split = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let parse = |k: usize| -> Result<f64> {
                let cell = rec.get(k).unwrap_or("");
                cell.parse::<f64>().map_err(|_| Error::Data(format!("line {line}, column {}: cannot parse {cell:?}", k + 1)))
            };
            ys.push(parse(0)?);
            for k in 1..=p {
                values.push(parse(k)?);
            }
            split.push(if has_split { rec.get(p + 1).unwrap_or("").parse()? } else { Split::Train });
        }
        if ys.is_empty() {
            return Err(Error::Data("CSV has no data rows".into()));
        }
        let x = DMatrix::from_row_slice(ys.len(), p, &values);
        Self::new(x, DVector::from_vec(ys), split)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = self.n_features();
        let mut header = vec!["y".to_string()];
        header.extend((1..=p).map(|k| format!("x{k}")));
        header.push("split".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![fmt_g17(self.y[i])];
            rec.extend((0..p).map(|j| fmt_g17(self.x[(i, j)])));
            rec.push(self.split[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 17 significant digits for CSV cells.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Solver summary carried by a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    pub qp_objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub beta: Vec<f64>,
    pub config: ArgenConfig,
    pub diagnostics: SolveDiagnostics,
    pub n_nonzero: usize,
    pub zero_tol: f64,
}

impl FittedModel {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }
}

/// `|beta_i| > zero_tol(beta)` counts as nonzero.
pub fn zero_tol(beta: &[f64]) -> f64 {
    1e-8 * beta.iter().fold(1.0_f64, |m, x| m.max(x.abs()))
}

pub fn count_nonzero(beta: &[f64]) -> usize {
    let tol = zero_tol(beta);
    beta.iter().filter(|x| x.abs() > tol).count()
}

/// Builds the QP over `v = beta - s`:
/// `A = 2(X'X + lambda2 Sigma)`, `b = A s - 2X'Y`, `d = lambda1 w`,
/// `l = t - s`, `v0 = max(0, -s)`.
pub fn transform_to_qp(x: &DMatrix<f64>, y: &DVector<f64>, config: &ArgenConfig) -> Result<QpProblem> {
    config.validate()?;
    let p = config.dim();
    Error::check_len("design columns", p, x.ncols())?;
    Error::check_len("response rows", x.nrows(), y.len())?;
    let mut a = linalg::gram(x);
    if config.lambda2 != 0.0 {
        a += config.sigma.to_dense(p) * config.lambda2;
    }
    a *= 2.0;
    let s = DVector::from_column_slice(&config.s);
    let t = DVector::from_column_slice(&config.t);
    let b = &a * &s - x.tr_mul(y) * 2.0;
    let d = config.effective_w() * config.lambda1;
    let l = &t - &s;
    let v0 = s.map(|si| (-si).max(0.0));
    QpProblem::new_psd_by_construction(a, b, d, v0, l)
}

/// `||Y - X beta||^2 + lambda1 w'|beta| + lambda2 beta' Sigma beta`.
pub fn objective_beta(x: &DMatrix<f64>, y: &DVector<f64>, config: &ArgenConfig, beta: &DVector<f64>) -> Result<f64> {
    let p = config.dim();
    Error::check_len("beta", p, beta.len())?;
    Error::check_len("design columns", p, x.ncols())?;
    let r = y - x * beta;
    let w = config.effective_w();
    let l1: f64 = linalg::neumaier_sum((0..p).map(|i| w[i] * beta[i].abs()));
    let quad = if config.lambda2 != 0.0 { beta.dot(&(config.sigma.to_dense(p) * beta)) } else { 0.0 };
    Ok(r.norm_squared() + config.lambda1 * l1 + config.lambda2 * quad)
}

/// The constant `c` with `objective_beta(beta) = F(beta - s) + c + Y'Y`,
/// namely `c = d's+ + b's - 1/2 s'As`.
pub fn qp_offset(problem: &QpProblem, s: &DVector<f64>) -> f64 {
    let s_plus = s.map(|x| x.max(0.0));
    problem.d().dot(&s_plus) + problem.b().dot(s) - 0.5 * s.dot(&(problem.a() * s))
}

/// Fits on explicit arrays.
pub fn fit_xy(x: &DMatrix<f64>, y: &DVector<f64>, config: &ArgenConfig, options: &SolverOptions) -> Result<FittedModel> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    let problem = transform_to_qp(x, y, config)?;
    let sol = qp::solve_qp(&problem, options)?;
    let beta: Vec<f64> = (0..config.dim())
        .map(|i| {
            let (s, t) = (config.s[i], config.t[i]);
            (sol.v[i] + s).clamp(s, t)
        })
        .collect();
    Ok(FittedModel {
        n_nonzero: count_nonzero(&beta),
        zero_tol: zero_tol(&beta),
        beta,
        config: config.clone(),
        diagnostics: SolveDiagnostics {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            converged: sol.converged,
            qp_objective: sol.objective,
        },
    })
}

/// Fits on the training rows of `data`. Non-convergence is reported through
/// `diagnostics.converged`, not as an error.
pub fn fit(data: &Dataset, config: &ArgenConfig, options: &SolverOptions) -> Result<FittedModel> {
    let (x, y) = data.subset(Split::Train);
    fit_xy(&x, &y, config, options)
}

/// `X_new * beta` (no intercept).
pub fn predict(model: &FittedModel, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    Error::check_len("predictor columns", model.beta.len(), x_new.ncols())?;
    Ok(x_new * model.beta())
}

/// The nine named special cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Preset {
    Arls,
    Arl,
    Argl,
    Arr,
    Argr,
    Aren,
    Arlen,
    Arren,
    Argen,
}

/// Which fields a preset leaves free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tunable {
    pub lambda1: bool,
    pub lambda2: bool,
    pub w: bool,
    pub sigma: bool,
}

impl Tunable {
    pub fn is_empty(&self) -> bool {
        !(self.lambda1 || self.lambda2 || self.w || self.sigma)
    }
}

impl Preset {
    pub const ALL: [Preset; 9] =
        [Preset::Arls, Preset::Arl, Preset::Argl, Preset::Arr, Preset::Argr, Preset::Aren, Preset::Arlen, Preset::Arren, Preset::Argen];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Arls => "ARLS",
            Preset::Arl => "ARL",
            Preset::Argl => "ARGL",
            Preset::Arr => "ARR",
            Preset::Argr => "ARGR",
            Preset::Aren => "AREN",
            Preset::Arlen => "ARLEN",
            Preset::Arren => "ARREN",
            Preset::Argen => "ARGEN",
        }
    }

    pub fn tunable(self) -> Tunable {
        let (lambda1, lambda2, w, sigma) = match self {
            Preset::Arls => (false, false, false, false),
            Preset::Arl => (true, false, false, false),
            Preset::Argl => (true, false, true, false),
            Preset::Arr => (false, true, false, false),
            Preset::Argr => (false, true, false, true),
            Preset::Aren => (true, true, false, false),
            Preset::Arlen => (true, true, true, false),
            Preset::Arren => (true, true, false, true),
            Preset::Argen => (true, true, true, true),
        };
        Tunable { lambda1, lambda2, w, sigma }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        Preset::ALL.into_iter().find(|p| p.name() == upper).ok_or_else(|| {
            Error::invalid(format!("unknown preset {s:?} (expected one of ARLS, ARL, ARGL, ARR, ARGR, AREN, ARLEN, ARREN, ARGEN)"))
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A preset's fixed values plus the set of fields left to tune. Tunable
/// fields hold neutral placeholders (`0`, `1/p`, identity).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigTemplate {
    pub preset: Preset,
    pub config: ArgenConfig,
    pub tunable: Tunable,
}

pub fn make_preset(preset: Preset, s: Vec<f64>, t: Vec<f64>) -> Result<ConfigTemplate> {
    let p = s.len();
    let config =
        ArgenConfig { lambda1: 0.0, lambda2: 0.0, w: vec![1.0 / p as f64; p], weights: WeightMode::Raw, sigma: Sigma::Identity, s, t };
    config.validate()?;
    Ok(ConfigTemplate { preset, config, tunable: preset.tunable() })
}
