use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use ddpqr_core::baselines::{
    cv_bandwidth, default_bandwidth_grid, kernel_spatial_median, linear_spatial_median_fit, IrlsSettings,
};
use ddpqr_core::gibbs::run_chain;
use ddpqr_core::pipeline::{default_delta, kde_fit, CovariateDensity, ErrorEvaluator};
use ddpqr_core::rng::mix_seed;
use ddpqr_core::simbench::{gen_covariates, make_response, run_table1, ErrorLaw, Table1Settings, TruthConvention};
use ddpqr_core::{
    Dataset, Direction, ErrorQuantileSettings, Hyperparams, McmcSettings, PosteriorDraws, QuantileEstimate,
    QuantilePredictor, SolverSettings,
};
use serde::{Deserialize, Serialize};

use crate::io::{self, emit_table, parse_grid, parse_list, sig6};
use crate::{BaselineArgs, BenchArgs, BpDemoArgs, Cli, CliError, Command, FitArgs, QuantileArgs, SimulateArgs};

/// Contents of the `--config` file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hyper: Hyperparams,
    pub mcmc: McmcSettings,
}

/// Sidecar written next to a chain file; it carries everything needed to
/// reload the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub data: Dataset,
    pub hyper: Hyperparams,
    pub mcmc: McmcSettings,
    pub draw_count: usize,
    pub mean_loglik: f64,
    /// Mean log-likelihood over each quarter of the stored draws.
    pub loglik_quarter_means: Vec<f64>,
    /// Posterior mean number of distinct location clusters in use.
    pub mean_occupied_clusters: f64,
}

impl FitSummary {
    pub fn from_draws(draws: &PosteriorDraws, mcmc: &McmcSettings) -> Self {
        let trace = draws.loglik_trace();
        let mean = |s: &[f64]| if s.is_empty() { f64::NAN } else { s.iter().sum::<f64>() / s.len() as f64 };
        let q = trace.len().div_ceil(4).max(1);
        let occupied = draws
            .draws
            .iter()
            .map(|d| {
                let mut l = d.l.clone();
                l.sort_unstable();
                l.dedup();
                l.len() as f64
            })
            .sum::<f64>()
            / draws.len().max(1) as f64;
        Self {
            data: draws.data.clone(),
            hyper: draws.hyper.clone(),
            mcmc: mcmc.clone(),
            draw_count: draws.len(),
            mean_loglik: mean(&trace),
            loglik_quarter_means: trace.chunks(q).map(mean).collect(),
            mean_occupied_clusters: occupied,
        }
    }
}

pub fn summary_path(chain: &Path) -> PathBuf {
    let mut s = chain.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Quantile(a) => cmd_quantile(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::BpDemo(a) => cmd_bp_demo(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let n = a.n as usize;
    let xs = gen_covariates(n, mix_seed(a.seed, 1));
    let eps = a.dist.generate(n, mix_seed(a.seed, 2))?;
    let ys = make_response(&xs, &eps)?;
    let rows: Vec<Vec<f64>> = xs.iter().zip(&ys).map(|(x, y)| vec![*x, y[0], y[1]]).collect();
    emit_table(a.out.as_deref(), &io::xy_header(2), &rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = io::create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(CliError::runtime)?;
    w.write_all(b"\n").map_err(CliError::runtime)?;
    w.flush().map_err(CliError::runtime)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let f = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let xy = io::read_xy_path(&a.data)?;
    let mut cfg: RunConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    let k = xy.ys[0].len();
    if a.config.is_none() && k != cfg.hyper.k {
        return Err(CliError::usage(format!(
            "data has {k} response columns; the default priors are for k = {}, pass --config",
            cfg.hyper.k
        )));
    }
    if let Some(d) = a.draws {
        cfg.mcmc.n_draws = d;
    }
    if let Some(b) = a.burnin {
        cfg.mcmc.burn_in = b;
    }
    if let Some(t) = a.thin {
        cfg.mcmc.thin = t;
    }
    if let Some(s) = a.seed {
        cfg.mcmc.seed = s;
    }
    let data = Dataset::from_pairs(&xy.xs, &xy.ys)?;
    let draws = run_chain(&data, &cfg.hyper, &cfg.mcmc)?;
    let mut w = io::create(&a.out)?;
    draws.write_jsonl(&mut w).map_err(CliError::runtime)?;
    w.flush().map_err(CliError::runtime)?;
    let summary = FitSummary::from_draws(&draws, &cfg.mcmc);
    write_json(&summary_path(&a.out), &summary)?;
    println!("draws: {}", summary.draw_count);
    println!("mean log-likelihood: {}", sig6(summary.mean_loglik));
    println!(
        "log-likelihood by quarter: {}",
        summary.loglik_quarter_means.iter().map(|v| sig6(*v)).collect::<Vec<_>>().join(", ")
    );
    println!("mean occupied clusters: {}", sig6(summary.mean_occupied_clusters));
    Ok(())
}

fn parse_direction(u: Option<&str>, k: usize) -> Result<Direction, CliError> {
    match u {
        None => Ok(Direction::zero(k)),
        Some(s) => {
            let v = parse_list(s).map_err(|e| CliError::usage(format!("--u: {e}")))?;
            if v.len() != k {
                return Err(CliError::usage(format!("--u has {} entries; responses have {k}", v.len())));
            }
            Ok(Direction::new(v)?)
        }
    }
}

fn parse_points(x: Option<&str>, grid: Option<&str>, default: &[f64]) -> Result<Vec<f64>, CliError> {
    match (x, grid) {
        (Some(_), Some(_)) => Err(CliError::usage("give either --x or --x-grid, not both")),
        (Some(s), None) => parse_list(s).map_err(|e| CliError::usage(format!("--x: {e}"))),
        (None, Some(g)) => parse_grid(g).map_err(|e| CliError::usage(format!("--x-grid: {e}"))),
        (None, None) => Ok(default.to_vec()),
    }
}

fn parse_delta(s: &str, n: usize) -> Result<f64, CliError> {
    if s == "auto" {
        return Ok(default_delta(n));
    }
    match s.parse::<f64>() {
        Ok(d) if d >= 0.0 && d.is_finite() => Ok(d),
        _ => Err(CliError::usage(format!("--delta must be 'auto' or a number >= 0, got '{s}'"))),
    }
}

/// Point estimates and credible limits at each `x`; smoothing is skipped
/// when `delta` is 0.
pub fn quantile_rows(
    pred: &QuantilePredictor<'_>,
    xs: &[f64],
    delta: f64,
    samples: usize,
    density: &CovariateDensity,
    level: f64,
    seed: u64,
) -> Result<Vec<QuantileEstimate>, CliError> {
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let s = mix_seed(seed, i as u64 + 1);
            let est =
                if delta == 0.0 { pred.at(x, level, s)? } else { pred.smoothed(x, delta, samples, density, level, s)? };
            Ok(est)
        })
        .collect()
}

pub fn cmd_quantile(a: &QuantileArgs) -> Result<(), CliError> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::usage(format!("--level must lie in (0, 1), got {}", a.level)));
    }
    if a.samples == 0 {
        return Err(CliError::usage("--samples must be >= 1"));
    }
    let summary: FitSummary = read_json(&a.summary.clone().unwrap_or_else(|| summary_path(&a.chain)))?;
    let u = parse_direction(a.u.as_deref(), summary.hyper.k)?;
    let f = File::open(&a.chain).map_err(|e| CliError::usage(format!("{}: {e}", a.chain.display())))?;
    let draws = PosteriorDraws::read_jsonl(BufReader::new(f), summary.data, summary.hyper)?;
    let xs = parse_points(a.x.as_deref(), a.x_grid.as_deref(), draws.data.xs())?;
    let delta = parse_delta(&a.delta, draws.data.n())?;
    let density = match a.density.as_str() {
        "kde" => kde_fit(&draws.data.all_x())?,
        "normal" => CovariateDensity::standard_normal(),
        other => return Err(CliError::usage(format!("--density must be kde or normal, got '{other}'"))),
    };
    let evaluator = match a.evaluator.as_str() {
        "mc" => ErrorEvaluator::MonteCarlo,
        "polar" => ErrorEvaluator::Polar,
        other => return Err(CliError::usage(format!("--evaluator must be mc or polar, got '{other}'"))),
    };
    let mut settings = ErrorQuantileSettings { evaluator, ..Default::default() };
    if let Some(r) = a.mc_samples {
        settings.solver.mc_samples = r;
    }
    let pred = QuantilePredictor::new(&draws, &u, &settings, a.seed)?;
    let est = quantile_rows(&pred, &xs, delta, a.samples, &density, a.level, a.seed)?;
    let rows: Vec<Vec<f64>> = est.iter().map(QuantileEstimate::csv_row).collect();
    emit_table(a.out.as_deref(), &QuantileEstimate::csv_header(u.dim()), &rows)
}

pub fn cmd_baseline(a: &BaselineArgs) -> Result<(), CliError> {
    let xy = io::read_xy_path(&a.data)?;
    let k = xy.ys[0].len();
    let xs = parse_points(a.x.as_deref(), a.x_grid.as_deref(), &xy.xs)?;
    let header: Vec<String> = std::iter::once("x".to_string()).chain((1..=k).map(|c| format!("q{c}"))).collect();
    let rows: Vec<Vec<f64>> = match a.method.as_str() {
        "linear" => {
            if a.u.is_some() || a.h.is_some() || a.h_grid.is_some() {
                return Err(CliError::usage("--u, --h and --h-grid apply to --method kernel only"));
            }
            let fit = linear_spatial_median_fit(&xy.xs, &xy.ys, &IrlsSettings::default())?;
            eprintln!(
                "alpha = [{}], beta = [{}], objective = {}",
                fit.alpha_hat.iter().map(|v| sig6(*v)).collect::<Vec<_>>().join(", "),
                fit.beta_hat.iter().map(|v| sig6(*v)).collect::<Vec<_>>().join(", "),
                sig6(fit.objective)
            );
            xs.iter().map(|x| std::iter::once(*x).chain(fit.predict(*x)).collect()).collect()
        }
        "kernel" => {
            let u = parse_direction(a.u.as_deref(), k)?;
            let solver = SolverSettings::default();
            let h = match (a.h, &a.h_grid) {
                (Some(_), Some(_)) => return Err(CliError::usage("give either --h or --h-grid, not both")),
                (Some(h), None) => h,
                (None, g) => {
                    let grid = match g {
                        Some(s) => parse_list(s).map_err(|e| CliError::usage(format!("--h-grid: {e}")))?,
                        None => default_bandwidth_grid(),
                    };
                    let h = cv_bandwidth(&xy.xs, &xy.ys, &grid, &solver)?;
                    eprintln!("bandwidth (leave-one-out CV, squared euclidean loss): {}", sig6(h));
                    h
                }
            };
            xs.iter()
                .map(|x| {
                    let q = kernel_spatial_median(&xy.xs, &xy.ys, *x, h, &u, &solver)?;
                    Ok(std::iter::once(*x).chain(q).collect())
                })
                .collect::<Result<_, CliError>>()?
        }
        other => return Err(CliError::usage(format!("--method must be linear or kernel, got '{other}'"))),
    };
    emit_table(a.out.as_deref(), &header, &rows)
}

/// Priors for the blood-pressure fit: the simulation defaults with
/// intercept mean (100, 73) and slope mean (0.8, 0.35).
pub fn bp_hyperparams() -> Hyperparams {
    Hyperparams { c0: vec![100.0, 73.0], c1: vec![0.8, 0.35], ..Hyperparams::simulation_defaults() }
}

pub const BP_HEADER: [&str; 7] =
    ["age", "systolic", "systolic_lo", "systolic_hi", "diastolic", "diastolic_lo", "diastolic_hi"];

/// Smoothed spatial medians with 95% credible limits at the report ages.
pub fn bp_table(a: &BpDemoArgs) -> Result<Vec<Vec<f64>>, CliError> {
    if a.samples == 0 {
        return Err(CliError::usage("--samples must be >= 1"));
    }
    let ages = crate::bp_data::ages();
    let data = Dataset::from_pairs(&ages, &crate::bp_data::pressures())?;
    let hyper = bp_hyperparams();
    let mcmc = McmcSettings { n_draws: a.draws, burn_in: a.burnin, thin: 1, seed: a.seed };
    let draws = run_chain(&data, &hyper, &mcmc)?;
    let density = kde_fit(&ages)?;
    let delta = parse_delta(&a.delta, ages.len())?;
    let u = Direction::zero(2);
    let pred = QuantilePredictor::new(&draws, &u, &ErrorQuantileSettings::default(), a.seed)?;
    let est = quantile_rows(&pred, &crate::bp_data::REPORT_AGES, delta, a.samples, &density, 0.95, a.seed)?;
    Ok(est
        .iter()
        .map(|e| vec![e.x, e.point[0], e.ci_lower[0], e.ci_upper[0], e.point[1], e.ci_lower[1], e.ci_upper[1]])
        .collect())
}

pub fn cmd_bp_demo(a: &BpDemoArgs) -> Result<(), CliError> {
    let rows = bp_table(a)?;
    let header: Vec<String> = BP_HEADER.iter().map(|s| s.to_string()).collect();
    emit_table(a.out.as_deref(), &header, &rows)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|_| CliError::usage(format!("--seeds: '{p}' is not a seed"))))
        .collect()
}

fn parse_laws(s: &str) -> Result<Vec<ErrorLaw>, CliError> {
    s.split(',').map(|p| p.trim().parse::<ErrorLaw>().map_err(CliError::from)).collect()
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let seeds = parse_seeds(&a.seeds)?;
    let settings = Table1Settings {
        n: a.n,
        laws: parse_laws(&a.laws)?,
        mcmc: McmcSettings { n_draws: a.draws, burn_in: a.burnin, thin: 1, seed: 0 },
        truth: if a.zero_truth { TruthConvention::Zero } else { TruthConvention::ErrorMedian },
        truth_mc: a.truth_mc,
        threads: a.threads,
        ..Table1Settings::default()
    };
    let mut res = run_table1(&seeds, &settings)?;
    if a.omit_timing {
        res.strip_timings();
    }
    let header: Vec<String> =
        ["seed", "error_law", "method", "mse", "runtime_s"].iter().map(|s| s.to_string()).collect();
    let fmt_rows = |full: bool| -> Vec<Vec<String>> {
        let f = |v: f64| if full { v.to_string() } else { sig6(v) };
        res.rows
            .iter()
            .map(|r| {
                vec![r.seed.to_string(), r.error_law.name().into(), r.method.name().into(), f(r.mse), f(r.runtime_s)]
            })
            .collect()
    };
    match &a.out {
        Some(p) => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(io::create(p)?);
            w.write_record(&header).map_err(CliError::runtime)?;
            for r in fmt_rows(true) {
                w.write_record(&r).map_err(CliError::runtime)?;
            }
            w.flush().map_err(CliError::runtime)?;
            write_json(&meta_path(p), &res.metadata)?;
        }
        None => io::print_strings(&header, &fmt_rows(false))?,
    }
    Ok(())
}
