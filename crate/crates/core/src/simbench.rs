//! Simulation design for the three-way median-regression comparison.
//!
//! Responses are `Y = (1 + 2 X^2, X^2) + eps` with `X ~ N(0, 1)` and `eps`
//! either bivariate Cauchy or a correlated pair of `Exp(1)` variables.

use std::sync::OnceLock;
use std::time::Instant;

use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::baselines::{
    cv_bandwidth, default_bandwidth_grid, kernel_spatial_median, linear_spatial_median_fit, IrlsSettings,
};
use crate::error::{invalid, Error, Result};
use crate::geoquant::{empirical_geometric_quantile, Cloud, Direction, SolverSettings};
use crate::gibbs::{run_chain, McmcSettings};
use crate::model::{Dataset, Hyperparams};
use crate::pipeline::{default_delta, CovariateDensity, ErrorQuantileSettings, QuantilePredictor};
use crate::rng::{mix_seed, stream};

/// Product-moment correlation of the gamma error pair.
pub const GAMMA_TARGET_CORR: f64 = 0.7;
/// Smallest Monte Carlo size accepted for the true-median oracle.
pub const MIN_TRUTH_MC: usize = 100_000;

const TAG_COVARIATES: u64 = 21;
const TAG_T1: u64 = 22;
const TAG_GAMMA: u64 = 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorLaw {
    T1,
    Gamma,
}

impl ErrorLaw {
    pub fn name(self) -> &'static str {
        match self {
            ErrorLaw::T1 => "t1",
            ErrorLaw::Gamma => "gamma",
        }
    }

    pub fn generate(self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        match self {
            ErrorLaw::T1 => Ok(gen_errors_t1(n, seed)),
            ErrorLaw::Gamma => gen_errors_gamma(n, GAMMA_TARGET_CORR, seed),
        }
    }
}

impl std::str::FromStr for ErrorLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t1" => Ok(ErrorLaw::T1),
            "gamma" => Ok(ErrorLaw::Gamma),
            other => Err(invalid(format!("unknown error law '{other}' (expected t1 or gamma)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NpBayes,
    FrequentistLinear,
    NpFrequentist,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::NpBayes, Method::FrequentistLinear, Method::NpFrequentist];

    pub fn name(self) -> &'static str {
        match self {
            Method::NpBayes => "np-bayes",
            Method::FrequentistLinear => "frequentist-linear",
            Method::NpFrequentist => "np-frequentist",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub dist: ErrorLaw,
    pub seed: u64,
    pub truth_mc: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("n must be >= 2, got {}", self.n)));
        }
        if self.truth_mc < MIN_TRUTH_MC {
            return Err(invalid(format!("truth_mc must be >= {MIN_TRUTH_MC}, got {}", self.truth_mc)));
        }
        Ok(())
    }

    /// Covariates and responses for this configuration.
    pub fn simulate(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if self.n < 2 {
            return Err(invalid(format!("n must be >= 2, got {}", self.n)));
        }
        let xs = gen_covariates(self.n, mix_seed(self.seed, 1));
        let eps = self.dist.generate(self.n, mix_seed(self.seed, 2))?;
        let ys = make_response(&xs, &eps)?;
        Ok((xs, ys))
    }
}

pub fn gen_covariates(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, TAG_COVARIATES);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Bivariate Cauchy: `N_2(0, I) / sqrt(chi2_1)`.
pub fn gen_errors_t1(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, TAG_T1);
    let chi = ChiSquared::<f64>::new(1.0).expect("one degree of freedom is valid");
    (0..n)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let s = chi.sample(&mut rng).sqrt();
            vec![z1 / s, z2 / s]
        })
        .collect()
}

/// `Exp(1)` quantile of `Phi(z)`, written as `-ln Phi(-z)` to stay accurate
/// in the upper tail.
fn exp_from_normal(z: f64) -> f64 {
    -(0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
}

/// Product-moment correlation of `(exp_from_normal(Z1), exp_from_normal(Z2))`
/// with `corr(Z1, Z2) = rho`, by nested Simpson quadrature on `[-9, 9]^2`.
pub fn copula_exp_correlation(rho: f64) -> f64 {
    const HALF: f64 = 9.0;
    const NODES: usize = 601;
    let h = 2.0 * HALF / (NODES - 1) as f64;
    let simpson = |i: usize| {
        if i == 0 || i == NODES - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let nodes: Vec<(f64, f64)> = (0..NODES)
        .map(|i| {
            let z = -HALF + i as f64 * h;
            (z, simpson(i) * h / 3.0 * norm * (-0.5 * z * z).exp())
        })
        .collect();
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let mut cross = 0.0;
    for &(z1, w1) in &nodes {
        let g1 = exp_from_normal(z1);
        let inner: f64 = nodes.iter().map(|&(w, ww)| ww * exp_from_normal(rho * z1 + s * w)).sum();
        cross += w1 * g1 * inner;
    }
    // Exp(1) marginals: mean 1 and variance 1.
    cross - 1.0
}

/// Gaussian-copula correlation giving output correlation `target`, by
/// bisection on [`copula_exp_correlation`].
pub fn calibrate_copula(target: f64) -> Result<f64> {
    let (lo_c, hi_c) = (copula_exp_correlation(-1.0), 1.0);
    if !(target > lo_c && target < hi_c) {
        return Err(Error::Calibration(format!(
            "target correlation {target} outside the attainable range ({lo_c:.4}, {hi_c})"
        )));
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if copula_exp_correlation(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn default_copula_rho() -> Result<f64> {
    static RHO: OnceLock<std::result::Result<f64, Error>> = OnceLock::new();
    RHO.get_or_init(|| calibrate_copula(GAMMA_TARGET_CORR)).clone()
}

/// Correlated `Ga(1, 1)` pairs via a Gaussian copula calibrated so the
/// outputs have correlation `target_corr`.
pub fn gen_errors_gamma(n: usize, target_corr: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let rho = if target_corr == GAMMA_TARGET_CORR { default_copula_rho()? } else { calibrate_copula(target_corr)? };
    let s = (1.0 - rho * rho).sqrt();
    let mut rng = stream(seed, TAG_GAMMA);
    Ok((0..n)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let w: f64 = StandardNormal.sample(&mut rng);
            vec![exp_from_normal(z1), exp_from_normal(rho * z1 + s * w)]
        })
        .collect())
}

/// `(1 + 2 x^2, x^2)`.
pub fn true_location(x: f64) -> [f64; 2] {
    [1.0 + 2.0 * x * x, x * x]
}

pub fn make_response(xs: &[f64], errors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if xs.len() != errors.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: errors.len() });
    }
    xs.iter()
        .zip(errors)
        .map(|(x, e)| {
            if e.len() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: e.len() });
            }
            let m = true_location(*x);
            Ok(vec![m[0] + e[0], m[1] + e[1]])
        })
        .collect()
}

/// Spatial median of the error law: exactly 0 for the symmetric Cauchy law,
/// a Monte Carlo estimate from `truth_mc` draws for the gamma law.
pub fn true_error_median(dist: ErrorLaw, truth_mc: usize, seed: u64) -> Result<Vec<f64>> {
    match dist {
        ErrorLaw::T1 => Ok(vec![0.0, 0.0]),
        ErrorLaw::Gamma => {
            if truth_mc == 0 {
                return Err(Error::EmptyInput("truth sample"));
            }
            let draws = gen_errors_gamma(truth_mc, GAMMA_TARGET_CORR, seed)?;
            let cloud = Cloud::from_rows(&draws)?;
            let s = SolverSettings { tol: 1e-10, ..Default::default() };
            Ok(empirical_geometric_quantile(&cloud, &Direction::zero(2), &s)?.point)
        }
    }
}

/// Mean squared Euclidean distance.
pub fn mse(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch { expected: truths.len(), got: estimates.len() });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput("estimates"));
    }
    let mut total = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        if e.len() != t.len() {
            return Err(Error::DimensionMismatch { expected: t.len(), got: e.len() });
        }
        total += e.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / estimates.len() as f64)
}

/// How the error offset of the true conditional median is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TruthConvention {
    /// Spatial median of the error law (Monte Carlo for gamma).
    #[default]
    ErrorMedian,
    /// Offset 0 for every law.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Table1Settings {
    pub n: usize,
    pub laws: Vec<ErrorLaw>,
    pub hyper: Hyperparams,
    /// `seed` is ignored; each cell derives its own chain seed.
    pub mcmc: McmcSettings,
    pub truth: TruthConvention,
    pub truth_mc: usize,
    pub truth_seed: u64,
    /// Smoothing half-width; `None` uses `n^{-1/3}`.
    pub delta: Option<f64>,
    pub smoothing_samples: usize,
    pub error_quantiles: ErrorQuantileSettings,
    pub h_grid: Vec<f64>,
    pub irls: IrlsSettings,
    pub kernel_solver: SolverSettings,
    /// Cells run on up to this many threads; 0 means all available cores.
    pub threads: usize,
}

impl Default for Table1Settings {
    fn default() -> Self {
        Self {
            n: 100,
            laws: vec![ErrorLaw::T1, ErrorLaw::Gamma],
            hyper: Hyperparams::simulation_defaults(),
            mcmc: McmcSettings { n_draws: 5000, burn_in: 500, thin: 1, seed: 0 },
            truth: TruthConvention::ErrorMedian,
            truth_mc: 1_000_000,
            truth_seed: 20_240_601,
            delta: None,
            smoothing_samples: 100,
            error_quantiles: ErrorQuantileSettings::default(),
            h_grid: default_bandwidth_grid(),
            irls: IrlsSettings::default(),
            kernel_solver: SolverSettings::default(),
            threads: 0,
        }
    }
}

impl Table1Settings {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("n must be >= 2, got {}", self.n)));
        }
        if self.laws.is_empty() {
            return Err(Error::EmptyInput("error laws"));
        }
        if self.truth == TruthConvention::ErrorMedian && self.truth_mc < MIN_TRUTH_MC {
            return Err(invalid(format!("truth_mc must be >= {MIN_TRUTH_MC}, got {}", self.truth_mc)));
        }
        if self.smoothing_samples == 0 {
            return Err(invalid("smoothing_samples must be >= 1"));
        }
        if self.h_grid.is_empty() {
            return Err(Error::EmptyInput("bandwidth grid"));
        }
        self.hyper.validate()?;
        self.mcmc.validate()
    }

    pub fn effective_delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| default_delta(self.n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub seed: u64,
    pub error_law: ErrorLaw,
    pub method: Method,
    pub mse: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub seed: u64,
    pub error_law: ErrorLaw,
    pub bandwidth: f64,
    pub mean_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Metadata {
    pub seeds: Vec<u64>,
    pub settings: Table1Settings,
    pub delta: f64,
    /// Error offset added to the true location, per law.
    pub truth_offsets: Vec<(ErrorLaw, Vec<f64>)>,
    pub cv_loss: String,
    pub cells: Vec<CellDiagnostics>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Result {
    pub rows: Vec<Table1Row>,
    pub metadata: Table1Metadata,
}

impl Table1Result {
    pub fn mse(&self, seed: u64, law: ErrorLaw, method: Method) -> Option<f64> {
        self.rows.iter().find(|r| r.seed == seed && r.error_law == law && r.method == method).map(|r| r.mse)
    }

    /// Zeroes every timing field so the result depends on the inputs only.
    pub fn strip_timings(&mut self) {
        self.rows.iter_mut().for_each(|r| r.runtime_s = 0.0);
        self.metadata.wall_time_s = 0.0;
    }
}

/// Estimated medians at each of `xs` by the three methods, with runtimes.
pub struct MethodEstimates {
    pub estimates: Vec<(Method, Vec<Vec<f64>>, f64)>,
    pub bandwidth: f64,
    pub mean_loglik: f64,
}

/// Fits every method in `methods` to `(xs, ys)` and evaluates the fitted
/// conditional spatial median at each observed covariate.
pub fn estimate_medians(
    xs: &[f64],
    ys: &[Vec<f64>],
    methods: &[Method],
    settings: &Table1Settings,
    seed: u64,
) -> Result<MethodEstimates> {
    let mut estimates = Vec::with_capacity(methods.len());
    let mut bandwidth = f64::NAN;
    let mut mean_loglik = f64::NAN;
    let u = Direction::zero(2);
    for &m in methods {
        let start = Instant::now();
        let est = match m {
            Method::NpBayes => {
                let data = Dataset::from_pairs(xs, ys)?;
                let mcmc = McmcSettings { seed: mix_seed(seed, 3), ..settings.mcmc.clone() };
                let draws = run_chain(&data, &settings.hyper, &mcmc)?;
                mean_loglik = draws.loglik_trace().iter().sum::<f64>() / draws.len() as f64;
                let qseed = mix_seed(seed, 4);
                let pred = QuantilePredictor::new(&draws, &u, &settings.error_quantiles, qseed)?;
                let density = CovariateDensity::standard_normal();
                let delta = settings.effective_delta();
                xs.iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let s = mix_seed(qseed, i as u64 + 1);
                        pred.smoothed(*x, delta, settings.smoothing_samples, &density, 0.95, s).map(|e| e.point)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Method::FrequentistLinear => {
                let fit = linear_spatial_median_fit(xs, ys, &settings.irls)?;
                xs.iter().map(|x| fit.predict(*x)).collect()
            }
            Method::NpFrequentist => {
                let h = cv_bandwidth(xs, ys, &settings.h_grid, &settings.kernel_solver)?;
                bandwidth = h;
                xs.iter()
                    .map(|x| kernel_spatial_median(xs, ys, *x, h, &u, &settings.kernel_solver))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        estimates.push((m, est, start.elapsed().as_secs_f64()));
    }
    Ok(MethodEstimates { estimates, bandwidth, mean_loglik })
}

fn run_cell(
    seed: u64,
    law: ErrorLaw,
    offset: &[f64],
    settings: &Table1Settings,
) -> Result<(Vec<Table1Row>, CellDiagnostics)> {
    let cell_seed = mix_seed(seed, law as u64 + 1);
    let sim = SimConfig { n: settings.n, dist: law, seed: cell_seed, truth_mc: settings.truth_mc };
    let (xs, ys) = sim.simulate()?;
    let truths: Vec<Vec<f64>> =
        xs.iter().map(|x| true_location(*x).iter().zip(offset).map(|(a, b)| a + b).collect()).collect();
    let fitted = estimate_medians(&xs, &ys, &Method::ALL, settings, cell_seed)?;
    let rows = fitted
        .estimates
        .iter()
        .map(|(m, est, t)| Ok(Table1Row { seed, error_law: law, method: *m, mse: mse(est, &truths)?, runtime_s: *t }))
        .collect::<Result<Vec<_>>>()?;
    let diag = CellDiagnostics { seed, error_law: law, bandwidth: fitted.bandwidth, mean_loglik: fitted.mean_loglik };
    Ok((rows, diag))
}

type CellOutcome = Result<(Vec<Table1Row>, CellDiagnostics)>;

/// Every `(seed, law)` cell: simulate, fit the three methods, score against
/// the true conditional spatial median. Rows come out ordered by seed, then
/// law, then method, whatever the thread count.
pub fn run_table1(seeds: &[u64], settings: &Table1Settings) -> Result<Table1Result> {
    settings.validate()?;
    if seeds.is_empty() {
        return Err(Error::EmptyInput("seeds"));
    }
    let start = Instant::now();
    let offsets = settings
        .laws
        .iter()
        .map(|&law| {
            let off = match settings.truth {
                TruthConvention::Zero => vec![0.0, 0.0],
                TruthConvention::ErrorMedian => true_error_median(law, settings.truth_mc, settings.truth_seed)?,
            };
            Ok((law, off))
        })
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(u64, ErrorLaw, &[f64])> =
        seeds.iter().flat_map(|&s| offsets.iter().map(move |(law, off)| (s, *law, off.as_slice()))).collect();
    let threads = match settings.threads {
        0 => std::thread::available_parallelism().map_or(1, usize::from),
        t => t,
    }
    .min(cells.len());
    let mut results: Vec<Option<CellOutcome>> = vec![None; cells.len()];
    if threads <= 1 {
        for (slot, (s, law, off)) in results.iter_mut().zip(&cells) {
            *slot = Some(run_cell(*s, *law, off, settings));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let out = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some((s, law, off)) = cells.get(i) else { break };
                    let r = run_cell(*s, *law, off, settings);
                    out.lock().expect("no worker panics while holding the lock")[i] = Some(r);
                });
            }
        });
    }
    let mut rows = Vec::new();
    let mut diags = Vec::new();
    for r in results {
        let (r, d) = r.expect("every cell ran")?;
        rows.extend(r);
        diags.push(d);
    }
    Ok(Table1Result {
        rows,
        metadata: Table1Metadata {
            seeds: seeds.to_vec(),
            settings: settings.clone(),
            delta: settings.effective_delta(),
            truth_offsets: offsets,
            cv_loss: "leave-one-out squared euclidean".into(),
            cells: diags,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}
