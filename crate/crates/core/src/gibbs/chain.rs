use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{gibbs_sweep, initial_state, ChainRng, GibbsContext, McmcSettings};
use crate::error::{Error, Result};
use crate::geoquant::MixtureSpec;
use crate::model::{ChainState, Dataset, Hyperparams};

/// Stored post-burn-in state. Indices in `l` are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    k: usize,
    d: usize,
    /// `N x k`.
    pub alpha: Vec<f64>,
    /// `N x d x k`.
    pub beta: Vec<f64>,
    pub w: Vec<f64>,
    pub l: Vec<usize>,
    pub p: Vec<f64>,
    /// `J x k`.
    pub eta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
    /// Observed-data log-likelihood with the error allocations summed out.
    pub loglik: f64,
}

#[derive(Serialize, Deserialize)]
struct DrawRepr {
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "W")]
    w: Vec<f64>,
    #[serde(rename = "L")]
    l: Vec<usize>,
    p: Vec<f64>,
    eta: Vec<Vec<f64>>,
    sigma2: Vec<f64>,
    #[serde(rename = "M1")]
    m1: f64,
    #[serde(rename = "M2")]
    m2: f64,
    loglik: f64,
}

impl Serialize for Draw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (k, d) = (self.k, self.d);
        DrawRepr {
            alpha: self.alpha.chunks(k).map(<[f64]>::to_vec).collect(),
            beta: self.beta.chunks(d * k).map(|b| b.chunks(k).map(<[f64]>::to_vec).collect()).collect(),
            w: self.w.clone(),
            l: self.l.clone(),
            p: self.p.clone(),
            eta: self.eta.chunks(k).map(<[f64]>::to_vec).collect(),
            sigma2: self.sigma2.clone(),
            m1: self.m1,
            m2: self.m2,
            loglik: self.loglik,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Draw {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = DrawRepr::deserialize(de)?;
        Draw::from_repr(r).map_err(serde::de::Error::custom)
    }
}

impl Draw {
    fn from_repr(r: DrawRepr) -> Result<Self> {
        let bad = |m: &str| Error::Serialization(m.to_string());
        let k = r.alpha.first().map(Vec::len).ok_or_else(|| bad("empty alpha"))?;
        let d = r.l.len();
        let n = r.w.len();
        let j = r.p.len();
        if k == 0 || r.alpha.len() != n || r.alpha.iter().any(|a| a.len() != k) {
            return Err(bad("alpha must be N x k"));
        }
        if r.beta.len() != n || r.beta.iter().any(|b| b.len() != d || b.iter().any(|v| v.len() != k)) {
            return Err(bad("beta must be N x d x k"));
        }
        if r.eta.len() != j || r.eta.iter().any(|e| e.len() != k) || r.sigma2.len() != j {
            return Err(bad("eta must be J x k and sigma2 of length J"));
        }
        if r.l.iter().any(|&l| l >= n) {
            return Err(bad("cluster label out of range"));
        }
        Ok(Self {
            k,
            d,
            alpha: r.alpha.concat(),
            beta: r.beta.into_iter().flatten().flatten().collect(),
            w: r.w,
            l: r.l,
            p: r.p,
            eta: r.eta.concat(),
            sigma2: r.sigma2,
            m1: r.m1,
            m2: r.m2,
            loglik: r.loglik,
        })
    }

    pub fn from_state(state: &ChainState, loglik: f64) -> Self {
        Self {
            k: state.k(),
            d: state.d(),
            alpha: state.alpha.clone(),
            beta: state.beta.clone(),
            w: state.w.clone(),
            l: state.l.clone(),
            p: state.p.clone(),
            eta: state.eta.clone(),
            sigma2: state.sigma2.clone(),
            m1: state.m1,
            m2: state.m2,
            loglik,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_clusters(&self) -> usize {
        self.w.len()
    }

    pub fn alpha(&self, l: usize) -> &[f64] {
        &self.alpha[l * self.k..(l + 1) * self.k]
    }

    pub fn beta(&self, l: usize, i: usize) -> &[f64] {
        let o = (l * self.d + i) * self.k;
        &self.beta[o..o + self.k]
    }

    pub fn eta(&self, j: usize) -> &[f64] {
        &self.eta[j * self.k..(j + 1) * self.k]
    }

    /// `alpha_l + beta_l(x_i)`.
    pub fn location(&self, l: usize, i: usize) -> Vec<f64> {
        self.alpha(l).iter().zip(self.beta(l, i)).map(|(a, b)| a + b).collect()
    }

    /// The error law `sum_j p_j N_k(eta_j, sigma2_j I)` of this draw.
    pub fn error_mixture(&self) -> Result<MixtureSpec> {
        MixtureSpec::new(self.p.clone(), self.eta.chunks(self.k).map(<[f64]>::to_vec).collect(), self.sigma2.clone())
    }
}

/// Stored chain together with the data and priors it was fitted to.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub data: Dataset,
    pub hyper: Hyperparams,
    pub draws: Vec<Draw>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in &self.draws {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Inverse of [`write_jsonl`](Self::write_jsonl); shapes are checked
    /// against `data` and `hyper`.
    pub fn read_jsonl<R: BufRead>(input: R, data: Dataset, hyper: Hyperparams) -> Result<Self> {
        let mut draws = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Serialization(format!("line {}: {e}", n + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let d: Draw =
                serde_json::from_str(&line).map_err(|e| Error::Serialization(format!("line {}: {e}", n + 1)))?;
            if d.k != hyper.k || d.d != data.d() || d.w.len() != hyper.n_clusters || d.p.len() != hyper.n_components {
                return Err(Error::Serialization(format!(
                    "line {}: draw shape does not match the data and priors",
                    n + 1
                )));
            }
            draws.push(d);
        }
        if draws.is_empty() {
            return Err(Error::EmptyInput("chain file"));
        }
        Ok(Self { data, hyper, draws })
    }

    pub fn loglik_trace(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.loglik).collect()
    }
}

/// `sum_{i,r} log sum_j p_j N_k(y_ir; xi_{L_i}(x_i) + eta_j, sigma2_j I)`.
pub fn log_likelihood(state: &ChainState, data: &Dataset) -> f64 {
    let k = state.k();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let base: Vec<f64> =
        state.p.iter().zip(&state.sigma2).map(|(p, s)| p.ln() - k as f64 * (half_log_2pi + 0.5 * s.ln())).collect();
    let mut terms = vec![0.0; base.len()];
    let mut total = 0.0;
    for i in 0..data.d() {
        let xi = state.location(state.l[i], i);
        for y in data.site(i) {
            for (j, t) in terms.iter_mut().enumerate() {
                let e = state.eta(j);
                let ss: f64 = (0..k).map(|c| (y[c] - xi[c] - e[c]).powi(2)).sum();
                *t = base[j] - 0.5 * ss / state.sigma2[j];
            }
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            total += m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
        }
    }
    total
}

/// Runs `burn_in + n_draws * thin` sweeps from [`initial_state`] and keeps
/// every `thin`-th post-burn-in state.
pub fn run_chain(data: &Dataset, hyper: &Hyperparams, mcmc: &McmcSettings) -> Result<PosteriorDraws> {
    run_chain_with(data, hyper, mcmc, |_, _| {})
}

/// As [`run_chain`], calling `observe(sweep, state)` after every sweep
/// (burn-in included, 0-based sweep counter).
pub fn run_chain_with<F: FnMut(usize, &ChainState)>(
    data: &Dataset,
    hyper: &Hyperparams,
    mcmc: &McmcSettings,
    mut observe: F,
) -> Result<PosteriorDraws> {
    mcmc.validate()?;
    let ctx = GibbsContext::new(data, hyper)?;
    let mut rng = ChainRng::new(mcmc.seed);
    let mut state = initial_state(&ctx, &mut rng.init)?;
    let total = mcmc.burn_in + mcmc.n_draws * mcmc.thin;
    let mut draws = Vec::with_capacity(mcmc.n_draws);
    for sweep in 0..total {
        gibbs_sweep(&mut state, &ctx, &mut rng)?;
        observe(sweep, &state);
        if sweep >= mcmc.burn_in && (sweep - mcmc.burn_in + 1) % mcmc.thin == 0 {
            draws.push(Draw::from_state(&state, log_likelihood(&state, data)));
        }
    }
    Ok(PosteriorDraws { data: data.clone(), hyper: hyper.clone(), draws })
}
