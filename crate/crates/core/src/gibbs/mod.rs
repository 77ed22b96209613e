//! Blocked Gibbs sampler for the truncated DDP location mixture with a
//! Gaussian-mixture error law.
//!
//! Sweep order: `alpha`, `beta`, `W`, `L`, `eta`, `sigma2`, `Z`, `p`, `M1`,
//! `M2`. Each update draws from its exact full conditional. Every update type
//! owns its own random stream (see [`ChainRng`]).

mod chain;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{gp_cov, stick_break, ChainState, Dataset, GpKernel, Hyperparams};
use crate::rng::{stream, StreamRng};

pub use chain::{log_likelihood, run_chain, run_chain_with, Draw, PosteriorDraws};

/// Floor applied to the last stick weight before the concentration update.
pub const LAST_WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self { n_draws: 5000, burn_in: 500, thin: 1, seed: 1 }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 || self.thin == 0 {
            return Err(invalid("n_draws and thin must be >= 1"));
        }
        Ok(())
    }
}

/// One independent stream per update type.
#[derive(Debug, Clone)]
pub struct ChainRng {
    pub init: StreamRng,
    pub alpha: StreamRng,
    pub beta: StreamRng,
    pub w: StreamRng,
    pub l: StreamRng,
    pub eta: StreamRng,
    pub sigma2: StreamRng,
    pub z: StreamRng,
    pub p: StreamRng,
    pub m1: StreamRng,
    pub m2: StreamRng,
}

impl ChainRng {
    pub fn new(seed: u64) -> Self {
        Self {
            init: stream(seed, 1),
            alpha: stream(seed, 2),
            beta: stream(seed, 3),
            w: stream(seed, 4),
            l: stream(seed, 5),
            eta: stream(seed, 6),
            sigma2: stream(seed, 7),
            z: stream(seed, 8),
            p: stream(seed, 9),
            m1: stream(seed, 10),
            m2: stream(seed, 11),
        }
    }
}

/// Data, priors and everything precomputable from them.
#[derive(Debug, Clone)]
pub struct GibbsContext<'a> {
    pub data: &'a Dataset,
    pub hyper: &'a Hyperparams,
    kern: GpKernel,
    kern_lower: DMatrix<f64>,
    sigma0_inv: DMatrix<f64>,
    sigma0_inv_c0: DVector<f64>,
    sigma0_lower: DMatrix<f64>,
    /// `c1[c] * x_i`, entry `i * k + c`.
    prior_mean: Vec<f64>,
}

impl<'a> GibbsContext<'a> {
    /// Accepts truncation levels down to 1 so that reduced models can be run.
    pub fn new(data: &'a Dataset, hyper: &'a Hyperparams) -> Result<Self> {
        hyper.check(1)?;
        if data.k() != hyper.k {
            return Err(Error::DimensionMismatch { expected: hyper.k, got: data.k() });
        }
        let k = hyper.k;
        let kern = gp_cov(data.xs(), hyper.gamma, hyper.lambda)?;
        let kern_lower = kern.chol_lower();
        let sigma0 = hyper.sigma0_matrix()?;
        let chol = Cholesky::new(sigma0).ok_or_else(|| invalid("Sigma0 not positive-definite"))?;
        let sigma0_inv = chol.inverse();
        let c0 = DVector::from_column_slice(&hyper.c0);
        let sigma0_inv_c0 = &sigma0_inv * c0;
        let sigma0_lower = chol.l();
        let prior_mean = data.xs().iter().flat_map(|x| (0..k).map(move |c| hyper.c1[c] * x)).collect();
        Ok(Self { data, hyper, kern, kern_lower, sigma0_inv, sigma0_inv_c0, sigma0_lower, prior_mean })
    }

    pub fn kernel(&self) -> &GpKernel {
        &self.kern
    }

    fn k(&self) -> usize {
        self.hyper.k
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Normalised probabilities from log weights (max-subtracted).
pub fn normalize_log_weights(logw: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(logw.len());
    normalize_into(logw, &mut out)?;
    Ok(out)
}

fn normalize_into(logw: &[f64], out: &mut Vec<f64>) -> Result<()> {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Underflow(format!("allocation row has no finite log weight (max {m})")));
    }
    out.clear();
    out.extend(logw.iter().map(|w| (w - m).exp()));
    let s: f64 = out.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Underflow("allocation probabilities sum to zero".into()));
    }
    out.iter_mut().for_each(|p| *p /= s);
    Ok(())
}

/// Inverse-CDF pick from normalised probabilities.
fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Residual `y - alpha_l - beta_l(x_i) - eta_j` for observation `(i, r)`.
#[inline]
fn residual(state: &ChainState, y: &[f64], l: usize, i: usize, j: Option<usize>, out: &mut [f64]) {
    let a = state.alpha(l);
    let b = state.beta(l, i);
    for c in 0..out.len() {
        out[c] = y[c] - a[c] - b[c] - j.map_or(0.0, |j| state.eta(j)[c]);
    }
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Gaussian draw with precision `prec` and `prec * mean = rhs`.
fn draw_from_precision<R: Rng + ?Sized>(prec: DMatrix<f64>, rhs: DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let k = rhs.len();
    let chol = Cholesky::new(prec).ok_or_else(|| Error::Factorization("posterior precision".into()))?;
    let mean = chol.solve(&rhs);
    // x = mean + L^{-T} z has covariance (L L^T)^{-1}.
    let z = DVector::from_fn(k, |_, _| normal(rng));
    let shift = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Factorization("triangular solve".into()))?;
    Ok(mean + shift)
}

/// Step 1: `alpha_l` given everything else.
///
/// Posterior precision `Sigma0^{-1} + T_l I`, `T_l = sum_{i: L_i = l} sum_r
/// 1/sigma2_{Z_ir}`; unused clusters draw from the prior.
pub fn update_locations_alpha<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &GibbsContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let k = ctx.k();
    let n = state.n_clusters();
    let mut t = vec![0.0; n];
    let mut rhs = vec![0.0; n * k];
    let mut r = vec![0.0; k];
    for i in 0..ctx.data.d() {
        let l = state.l[i];
        for (rep, y) in ctx.data.site(i).enumerate() {
            let j = state.z[ctx.data.obs_index(i, rep)];
            let prec = 1.0 / state.sigma2[j];
            let b = state.beta(l, i);
            let e = state.eta(j);
            for c in 0..k {
                r[c] = y[c] - b[c] - e[c];
            }
            t[l] += prec;
            for c in 0..k {
                rhs[l * k + c] += prec * r[c];
            }
        }
    }
    for l in 0..n {
        let draw = if t[l] == 0.0 {
            let z = DVector::from_fn(k, |_, _| normal(rng));
            DVector::from_column_slice(&ctx.hyper.c0) + &ctx.sigma0_lower * z
        } else {
            let prec = &ctx.sigma0_inv + DMatrix::identity(k, k) * t[l];
            let b = &ctx.sigma0_inv_c0 + DVector::from_column_slice(&rhs[l * k..(l + 1) * k]);
            draw_from_precision(prec, b, rng)?
        };
        state.alpha[l * k..(l + 1) * k].copy_from_slice(draw.as_slice());
    }
    Ok(())
}

/// Pseudo-observations of one GP block: sites, their total precisions
/// `tau_i = sum_r 1/sigma2_{Z_ir}` and precision-weighted mean responses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockLikelihood {
    pub sites: Vec<usize>,
    pub tau: Vec<f64>,
    /// `sites.len() x k`.
    pub ybar: Vec<f64>,
}

/// Exact draw from `beta_l | rest` by Gaussian conditioning of a prior path:
/// `f ~ GP(c1 x, K)` on the design, `e_i ~ N(0, 1/tau_i)`, then
/// `beta = f + K[:, A] (K[A, A] + D^{-1})^{-1} (ybar - f_A - e)`.
///
/// `z_path` (`d * k`) and `z_noise` (`|A| * k`) are the standard normals
/// behind `f` and `e`; zeros give the posterior mean. Output is `d * k`.
pub fn beta_block_posterior(
    ctx: &GibbsContext<'_>,
    lik: &BlockLikelihood,
    z_path: &[f64],
    z_noise: &[f64],
) -> Result<Vec<f64>> {
    let d = ctx.data.d();
    let k = ctx.k();
    let a = lik.sites.len();
    let mut out = vec![0.0; d * k];
    let km = ctx.kern.matrix();
    let s_chol = if a > 0 {
        let s = DMatrix::from_fn(a, a, |p, q| {
            km[(lik.sites[p], lik.sites[q])] + if p == q { 1.0 / lik.tau[p] } else { 0.0 }
        });
        Some(Cholesky::new(s).ok_or_else(|| Error::Factorization("GP block system".into()))?)
    } else {
        None
    };
    for c in 0..k {
        let z = DVector::from_fn(d, |i, _| z_path[i * k + c]);
        let f = &ctx.kern_lower * z;
        let mut path: Vec<f64> = (0..d).map(|i| ctx.prior_mean[i * k + c] + f[i]).collect();
        if let Some(chol) = &s_chol {
            let resid = DVector::from_fn(a, |p, _| {
                let i = lik.sites[p];
                lik.ybar[p * k + c] - path[i] - z_noise[p * k + c] / lik.tau[p].sqrt()
            });
            let s = chol.solve(&resid);
            for (i, v) in path.iter_mut().enumerate() {
                *v += (0..a).map(|p| km[(i, lik.sites[p])] * s[p]).sum::<f64>();
            }
        }
        for (i, v) in path.into_iter().enumerate() {
            out[i * k + c] = v;
        }
    }
    Ok(out)
}

/// Builds the block likelihood of every cluster from the current state.
pub fn block_likelihoods(state: &ChainState, ctx: &GibbsContext<'_>) -> Vec<BlockLikelihood> {
    let k = ctx.k();
    let mut blocks = vec![BlockLikelihood::default(); state.n_clusters()];
    for i in 0..ctx.data.d() {
        let l = state.l[i];
        let a = state.alpha(l);
        let mut tau = 0.0;
        let mut acc = vec![0.0; k];
        for (rep, y) in ctx.data.site(i).enumerate() {
            let j = state.z[ctx.data.obs_index(i, rep)];
            let prec = 1.0 / state.sigma2[j];
            let e = state.eta(j);
            tau += prec;
            for c in 0..k {
                acc[c] += prec * (y[c] - a[c] - e[c]);
            }
        }
        let blk = &mut blocks[l];
        blk.sites.push(i);
        blk.tau.push(tau);
        blk.ybar.extend(acc.iter().map(|v| v / tau));
    }
    blocks
}

/// Step 2: every `beta_l` path at the design points, drawn jointly.
pub fn update_gp_blocks_beta<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &GibbsContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let d = ctx.data.d();
    let k = ctx.k();
    let blocks = block_likelihoods(state, ctx);
    let mut z_path = vec![0.0; d * k];
    for (l, blk) in blocks.iter().enumerate() {
        z_path.iter_mut().for_each(|z| *z = normal(rng));
        let z_noise: Vec<f64> = (0..blk.sites.len() * k).map(|_| normal(rng)).collect();
        let path = beta_block_posterior(ctx, blk, &z_path, &z_noise)?;
        state.beta[l * d * k..(l + 1) * d * k].copy_from_slice(&path);
    }
    Ok(())
}

/// Steps 3 and 8: `V_l ~ Be(1 + U_l, M + sum_{r>l} U_r)` for the first
/// `m - 1` sticks; returns `(V, W)`.
pub fn update_stick_weights<R: Rng + ?Sized>(
    counts: &[usize],
    concentration: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if counts.is_empty() {
        return Err(Error::EmptyInput("allocation counts"));
    }
    if !(concentration > 0.0) || !concentration.is_finite() {
        return Err(invalid(format!("concentration must be > 0, got {concentration}")));
    }
    let m = counts.len();
    let mut tail: usize = counts.iter().sum();
    let mut v = Vec::with_capacity(m - 1);
    for &u in &counts[..m - 1] {
        tail -= u;
        let beta = Beta::new(1.0 + u as f64, concentration + tail as f64)
            .map_err(|e| invalid(format!("beta parameters: {e}")))?;
        v.push(beta.sample(rng));
    }
    let w = stick_break(&v)?;
    Ok((v, w))
}

/// Step 4: cluster label of every site.
pub fn update_allocations_l<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &GibbsContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let k = ctx.k();
    let n = state.n_clusters();
    let log_w: Vec<f64> = state.w.iter().map(|w| w.ln()).collect();
    let mut logp = vec![0.0; n];
    let mut probs = Vec::with_capacity(n);
    let mut r = vec![0.0; k];
    for i in 0..ctx.data.d() {
        for (l, lp) in logp.iter_mut().enumerate() {
            let mut acc = log_w[l];
            if acc == f64::NEG_INFINITY {
                *lp = acc;
                continue;
            }
            for (rep, y) in ctx.data.site(i).enumerate() {
                let j = state.z[ctx.data.obs_index(i, rep)];
                residual(state, y, l, i, Some(j), &mut r);
                acc -= 0.5 * sq(&r) / state.sigma2[j];
            }
            *lp = acc;
        }
        normalize_into(&logp, &mut probs)?;
        state.l[i] = pick(&probs, rng.random());
    }
    Ok(())
}

/// Step 5: error-component means. Posterior precision
/// `1/s_eta2 + m_j/sigma2_j`, residuals `y - alpha_L - beta_L(x)`.
pub fn update_error_means_eta<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &GibbsContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let k = ctx.k();
    let jn = state.n_components();
    let mut counts = vec![0usize; jn];
    let mut sums = vec![0.0; jn * k];
    let mut r = vec![0.0; k];
    for i in 0..ctx.data.d() {
        let l = state.l[i];
        for (rep, y) in ctx.data.site(i).enumerate() {
            let j = state.z[ctx.data.obs_index(i, rep)];
            residual(state, y, l, i, None, &mut r);
            counts[j] += 1;
            for c in 0..k {
                sums[j * k + c] += r[c];
            }
        }
    }
    let h = ctx.hyper;
    for j in 0..jn {
        let prec = 1.0 / h.s_eta2 + counts[j] as f64 / state.sigma2[j];
        let sd = prec.recip().sqrt();
        for c in 0..k {
            let mean = (h.c_eta[c] / h.s_eta2 + sums[j * k + c] / state.sigma2[j]) / prec;
            state.eta[j * k + c] = mean + sd * normal(rng);
        }
    }
    Ok(())
}

/// Step 6: error-component variances,
/// `IG(a + k m_j / 2, b + sum ||residual||^2 / 2)`.
pub fn update_error_vars_sigma2<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &GibbsContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let k = ctx.k();
    let jn = state.n_components();
    let mut counts = vec![0usize; jn];
    let mut ss = vec![0.0; jn];
    let mut r = vec![0.0; k];
    for i in 0..ctx.data.d() {
        let l = state.l[i];
        for (rep, y) in ctx.data.site(i).enumerate() {
            let j = state.z[ctx.data.obs_index(i, rep)];
            residual(state, y, l, i, Some(j), &mut r);
            counts[j] += 1;
            ss[j] += sq(&r);
        }
    }
    for j in 0..jn {
        let shape = ctx.hyper.a + 0.5 * (k * counts[j]) as f64;
        let rate = ctx.hyper.b + 0.5 * ss[j];
        state.sigma2[j] = draw_inverse_gamma(shape, rate, rng)?;
    }
    Ok(())
}

/// `IG(shape, rate)` as the reciprocal of a `Ga(shape, rate)` draw.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| invalid(format!("gamma parameters: {e}")))?;
    let x: f64 = g.sample(rng);
    if !(x > 0.0) {
        return Err(Error::Underflow(format!("IG({shape}, {rate}) draw")));
    }
    Ok(1.0 / x)
}

/// Step 7: error component of every observation.
pub fn update_error_allocations_z<R: Rng + ?Sized>(
    state: &mut ChainState,
    ctx: &GibbsContext<'_>,
    rng: &mut R,
) -> Result<()> {
    let k = ctx.k();
    let jn = state.n_components();
    let base: Vec<f64> = state.p.iter().zip(&state.sigma2).map(|(p, s)| p.ln() - 0.5 * k as f64 * s.ln()).collect();
    let mut logp = vec![0.0; jn];
    let mut probs = Vec::with_capacity(jn);
    let mut r = vec![0.0; k];
    for i in 0..ctx.data.d() {
        let l = state.l[i];
        for (rep, y) in ctx.data.site(i).enumerate() {
            for (j, lp) in logp.iter_mut().enumerate() {
                if base[j] == f64::NEG_INFINITY {
                    *lp = base[j];
                    continue;
                }
                residual(state, y, l, i, Some(j), &mut r);
                *lp = base[j] - 0.5 * sq(&r) / state.sigma2[j];
            }
            normalize_into(&logp, &mut probs)?;
            state.z[ctx.data.obs_index(i, rep)] = pick(&probs, rng.random());
        }
    }
    Ok(())
}

/// Steps 10 and 11: `Ga(a0 + m, b0 - log last_weight)`.
pub fn update_concentration<R: Rng + ?Sized>(a0: f64, b0: f64, last_weight: f64, m: usize, rng: &mut R) -> Result<f64> {
    if !(last_weight > 0.0 && last_weight <= 1.0) {
        return Err(invalid(format!("last stick weight must lie in (0, 1], got {last_weight}")));
    }
    let rate = b0 - last_weight.ln();
    let g = Gamma::new(a0 + m as f64, 1.0 / rate).map_err(|e| invalid(format!("gamma parameters: {e}")))?;
    Ok(g.sample(rng))
}

fn counts_of(labels: &[usize], m: usize) -> Vec<usize> {
    let mut c = vec![0; m];
    for &l in labels {
        c[l] += 1;
    }
    c
}

/// Overdispersed deterministic start: `alpha`, `eta` from their priors, `beta`
/// from the GP prior, `sigma2 = 1`, sticks at 1/2, concentrations at their
/// prior means, `L_i = i mod N`, `Z = (flat index) mod J`.
pub fn initial_state<R: Rng + ?Sized>(ctx: &GibbsContext<'_>, rng: &mut R) -> Result<ChainState> {
    let h = ctx.hyper;
    let data = ctx.data;
    let k = h.k;
    let mut s = ChainState::zeros(h.n_clusters, h.n_components, data);
    for l in 0..h.n_clusters {
        let z = DVector::from_fn(k, |_, _| normal(rng));
        let a = DVector::from_column_slice(&h.c0) + &ctx.sigma0_lower * z;
        s.alpha[l * k..(l + 1) * k].copy_from_slice(a.as_slice());
    }
    let d = data.d();
    let empty = BlockLikelihood::default();
    for l in 0..h.n_clusters {
        let z: Vec<f64> = (0..d * k).map(|_| normal(rng)).collect();
        let path = beta_block_posterior(ctx, &empty, &z, &[])?;
        s.beta[l * d * k..(l + 1) * d * k].copy_from_slice(&path);
    }
    let sd = h.s_eta2.sqrt();
    for j in 0..h.n_components {
        for c in 0..k {
            s.eta[j * k + c] = h.c_eta[c] + sd * normal(rng);
        }
    }
    s.l = (0..d).map(|i| i % h.n_clusters).collect();
    s.z = (0..data.n()).map(|o| o % h.n_components).collect();
    s.m1 = h.a_m1 / h.b_m1;
    s.m2 = h.a_m2 / h.b_m2;
    Ok(s)
}

/// One full sweep in the fixed order.
pub fn gibbs_sweep(state: &mut ChainState, ctx: &GibbsContext<'_>, rng: &mut ChainRng) -> Result<()> {
    let h = ctx.hyper;
    update_locations_alpha(state, ctx, &mut rng.alpha)?;
    update_gp_blocks_beta(state, ctx, &mut rng.beta)?;
    let (v, w) = update_stick_weights(&counts_of(&state.l, state.n_clusters()), state.m1, &mut rng.w)?;
    state.v = v;
    state.w = w;
    update_allocations_l(state, ctx, &mut rng.l)?;
    update_error_means_eta(state, ctx, &mut rng.eta)?;
    update_error_vars_sigma2(state, ctx, &mut rng.sigma2)?;
    update_error_allocations_z(state, ctx, &mut rng.z)?;
    let (q, p) = update_stick_weights(&counts_of(&state.z, state.n_components()), state.m2, &mut rng.p)?;
    state.q = q;
    state.p = p;
    let last_w = state.w.last().copied().unwrap_or(1.0).max(LAST_WEIGHT_FLOOR);
    state.m1 = update_concentration(h.a_m1, h.b_m1, last_w, state.n_clusters(), &mut rng.m1)?;
    let last_p = state.p.last().copied().unwrap_or(1.0).max(LAST_WEIGHT_FLOOR);
    state.m2 = update_concentration(h.a_m2, h.b_m2, last_p, state.n_components(), &mut rng.m2)?;
    debug_assert!(state.check_invariants().is_ok(), "{:?}", state.check_invariants());
    Ok(())
}
