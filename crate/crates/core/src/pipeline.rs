//! Conditional geometric quantiles from posterior draws.
//!
//! Per draw `b` the `u`-quantile at `x` is `xi_b(x) + Q_eps^b(u)`; the point
//! estimate is the mean over draws and credible limits are coordinate-wise
//! percentiles. The smoothed variant replaces `xi_b(x)` by its average over
//! covariate values drawn from the covariate law restricted to `[x - delta,
//! x + delta]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::geoquant::{mixture_quantile_mc, mixture_quantile_polar, Direction, SolverSettings};
use crate::gibbs::{Draw, PosteriorDraws};
use crate::model::{gp_cov, GpKernel, GpPredictor};
use crate::rng::{mix_seed, stream};

/// Windows with less covariate mass than this are rejected.
pub const MIN_WINDOW_MASS: f64 = 1e-12;
/// Rejection attempts per requested sample before switching to exact
/// inverse-CDF sampling.
const REJECTION_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorEvaluator {
    #[default]
    MonteCarlo,
    /// Bivariate responses only.
    Polar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ErrorQuantileSettings {
    pub evaluator: ErrorEvaluator,
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileQuery {
    pub u: Direction,
    pub x: f64,
    /// Half-width of the smoothing window; 0 disables smoothing.
    pub delta: f64,
    pub level: f64,
    pub smoothing_samples: usize,
    pub seed: u64,
}

impl QuantileQuery {
    pub fn new(u: Direction, x: f64) -> Self {
        Self { u, x, delta: 0.0, level: 0.95, smoothing_samples: 100, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x.is_finite() {
            return Err(invalid("query x must be finite"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(invalid(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.smoothing_samples == 0 {
            return Err(invalid("smoothing_samples must be >= 1"));
        }
        Ok(())
    }
}

/// `n^{-1/3}`.
pub fn default_delta(n: usize) -> f64 {
    (n as f64).powf(-1.0 / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub x: f64,
    pub u: Vec<f64>,
    pub point: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub per_draw: Vec<Vec<f64>>,
}

impl QuantileEstimate {
    fn from_per_draw(x: f64, u: &Direction, level: f64, per_draw: Vec<Vec<f64>>) -> Self {
        let k = u.dim();
        let b = per_draw.len() as f64;
        let point = (0..k).map(|c| per_draw.iter().map(|q| q[c]).sum::<f64>() / b).collect();
        let mut lo = Vec::with_capacity(k);
        let mut hi = Vec::with_capacity(k);
        for c in 0..k {
            let mut col: Vec<f64> = per_draw.iter().map(|q| q[c]).collect();
            col.sort_by(f64::total_cmp);
            lo.push(percentile_sorted(&col, (1.0 - level) / 2.0));
            hi.push(percentile_sorted(&col, (1.0 + level) / 2.0));
        }
        Self { x, u: u.as_slice().to_vec(), point, ci_lower: lo, ci_upper: hi, per_draw }
    }

    /// `x, u_1..u_k, point_1..k, lo_1..k, hi_1..k`.
    pub fn csv_header(k: usize) -> Vec<String> {
        let mut h = vec!["x".to_string()];
        for prefix in ["u", "point", "lo", "hi"] {
            h.extend((1..=k).map(|c| format!("{prefix}{c}")));
        }
        h
    }

    pub fn csv_row(&self) -> Vec<f64> {
        let mut r = vec![self.x];
        r.extend(&self.u);
        r.extend(&self.point);
        r.extend(&self.ci_lower);
        r.extend(&self.ci_upper);
        r
    }
}

/// Linear interpolation between order statistics at `h = (n - 1) p`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Law of the covariate used to draw smoothing points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateDensity {
    ParametricNormal { mean: f64, sd: f64 },
    GaussianKde { sample: Vec<f64>, bandwidth: f64 },
}

/// Gaussian KDE with bandwidth `1.06 * sd * n^{-1/5}` (sample sd, `n - 1`).
pub fn kde_fit(sample: &[f64]) -> Result<CovariateDensity> {
    let n = sample.len();
    if n < 2 {
        return Err(invalid("kde needs at least two points"));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(invalid("kde sample must be finite"));
    }
    let m = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(invalid("kde sample has zero variance"));
    }
    let bandwidth = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    Ok(CovariateDensity::GaussianKde { sample: sample.to_vec(), bandwidth })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

impl CovariateDensity {
    pub fn standard_normal() -> Self {
        Self::ParametricNormal { mean: 0.0, sd: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::ParametricNormal { mean, sd } => {
                if !mean.is_finite() || !(*sd > 0.0) || !sd.is_finite() {
                    return Err(invalid("normal covariate law needs finite mean and sd > 0"));
                }
            }
            Self::GaussianKde { sample, bandwidth } => {
                if sample.is_empty() || !(*bandwidth > 0.0) || !bandwidth.is_finite() {
                    return Err(invalid("kde needs a non-empty sample and bandwidth > 0"));
                }
            }
        }
        Ok(())
    }

    /// Kernel centres and scale; a normal law is a one-point "kde".
    fn components(&self) -> (&[f64], f64) {
        match self {
            Self::ParametricNormal { mean, sd } => (std::slice::from_ref(mean), *sd),
            Self::GaussianKde { sample, bandwidth } => (sample, *bandwidth),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (c, h) = self.components();
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt() * c.len() as f64);
        c.iter().map(|m| (-0.5 * ((x - m) / h).powi(2)).exp()).sum::<f64>() * norm
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (c, h) = self.components();
        let n = std_normal();
        c.iter().map(|m| n.cdf((x - m) / h)).sum::<f64>() / c.len() as f64
    }

    /// Probability of `[lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        let (c, h) = self.components();
        c.iter().map(|m| window_mass(lo, hi, *m, h)).sum::<f64>() / c.len() as f64
    }

    fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (c, h) = self.components();
        let m = c[rng.random_range(0..c.len())];
        let z: f64 = StandardNormal.sample(rng);
        m + h * z
    }

    /// `n` draws restricted to `[lo, hi]`: rejection first, exact
    /// inverse-CDF sampling of the restricted mixture once the attempt budget
    /// is spent.
    pub fn sample_truncated<R: Rng + ?Sized>(&self, lo: f64, hi: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        if !(lo <= hi) {
            return Err(invalid(format!("empty window [{lo}, {hi}]")));
        }
        let mass = self.mass(lo, hi);
        if !(mass >= MIN_WINDOW_MASS) {
            return Err(Error::EmptyWindow { lo, hi, mass });
        }
        let mut out = Vec::with_capacity(n);
        let mut attempts = REJECTION_ATTEMPTS * n;
        while out.len() < n && attempts > 0 {
            attempts -= 1;
            let x = self.sample_free(rng);
            if (lo..=hi).contains(&x) {
                out.push(x);
            }
        }
        if out.len() < n {
            let (c, h) = self.components();
            let masses: Vec<f64> = c.iter().map(|m| window_mass(lo, hi, *m, h)).collect();
            let total: f64 = masses.iter().sum();
            while out.len() < n {
                let mut t = rng.random::<f64>() * total;
                let mut idx = masses.iter().rposition(|m| *m > 0.0).unwrap_or(0);
                for (i, m) in masses.iter().enumerate() {
                    if t < *m {
                        idx = i;
                        break;
                    }
                    t -= m;
                }
                out.push(truncated_normal(c[idx], h, lo, hi, rng));
            }
        }
        Ok(out)
    }
}

fn window_mass(lo: f64, hi: f64, m: f64, h: f64) -> f64 {
    let n = std_normal();
    let (a, b) = ((lo - m) / h, (hi - m) / h);
    // Work in the lower tail for accuracy on either side.
    if a > 0.0 {
        n.cdf(-a) - n.cdf(-b)
    } else {
        n.cdf(b) - n.cdf(a)
    }
}

/// Inverse-CDF draw from `N(m, h^2)` restricted to `[lo, hi]`.
fn truncated_normal<R: Rng + ?Sized>(m: f64, h: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let n = std_normal();
    let (a, b) = ((lo - m) / h, (hi - m) / h);
    let v: f64 = rng.random();
    let z = if a > 0.0 {
        // Mirror into the lower tail.
        let (pa, pb) = (n.cdf(-b), n.cdf(-a));
        -n.inverse_cdf(pa + v * (pb - pa))
    } else {
        let (pa, pb) = (n.cdf(a), n.cdf(b));
        n.inverse_cdf(pa + v * (pb - pa))
    };
    (m + h * z).clamp(lo, hi)
}

/// Error quantile `Q_eps^b(u)` of every draw; draw `b` uses seed
/// `mix_seed(seed, b)` for Monte Carlo evaluation.
pub fn error_quantile_per_draw(
    draws: &PosteriorDraws,
    u: &Direction,
    settings: &ErrorQuantileSettings,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if u.dim() != draws.hyper.k {
        return Err(Error::DimensionMismatch { expected: draws.hyper.k, got: u.dim() });
    }
    draws
        .draws
        .iter()
        .enumerate()
        .map(|(b, d)| {
            let mix = d.error_mixture()?;
            match settings.evaluator {
                ErrorEvaluator::MonteCarlo => {
                    Ok(mixture_quantile_mc(&mix, u, &settings.solver, mix_seed(seed, b as u64))?.point)
                }
                ErrorEvaluator::Polar => mixture_quantile_polar(&mix, u, &settings.solver),
            }
        })
        .collect()
}

/// Conditioning weights for `beta_l(x)` at a covariate value that is not a
/// design point.
#[derive(Debug, Clone)]
pub struct NewX {
    pred: GpPredictor,
}

impl NewX {
    pub fn new(kern: &GpKernel, x: f64) -> Result<Self> {
        Ok(Self { pred: kern.predictor(x)? })
    }
}

/// `alpha_l + beta_l(x)` with `beta_l(x)` drawn from its GP conditional given
/// the draw's path at the design points.
pub fn location_new_x<R: Rng + ?Sized>(
    draw: &Draw,
    xs: &[f64],
    c1: &[f64],
    new: &NewX,
    l: usize,
    rng: &mut R,
) -> Vec<f64> {
    let sd = new.pred.variance.sqrt();
    (0..draw.k())
        .map(|c| {
            let m = new.pred.mean(xs, (0..xs.len()).map(|i| draw.beta(l, i)[c]), c1[c]);
            let z: f64 = StandardNormal.sample(rng);
            draw.alpha(l)[c] + m + sd * z
        })
        .collect()
}

fn pick_cluster<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, p) in w.iter().enumerate() {
        acc += p;
        if u < acc {
            return l;
        }
    }
    w.iter().rposition(|p| *p > 0.0).unwrap_or(w.len() - 1)
}

/// `xi_b(x)`: the allocated cluster's location at a design point, otherwise a
/// GP-conditional draw for a cluster picked from the draw's weights.
pub fn location_draw_at<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    kern: &GpKernel,
    b: usize,
    x: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d =
        draws.draws.get(b).ok_or_else(|| invalid(format!("draw index {b} out of range ({} draws)", draws.len())))?;
    if let Some(i) = draws.data.site_of(x) {
        return Ok(d.location(d.l[i], i));
    }
    let new = NewX::new(kern, x)?;
    let l = pick_cluster(&d.w, rng);
    Ok(location_new_x(d, draws.data.xs(), &draws.hyper.c1, &new, l, rng))
}

/// Reusable evaluator for a fixed direction: the per-draw error quantiles
/// and the GP kernel are computed once.
#[derive(Debug, Clone)]
pub struct QuantilePredictor<'a> {
    draws: &'a PosteriorDraws,
    kern: GpKernel,
    u: Direction,
    error_q: Vec<Vec<f64>>,
}

impl<'a> QuantilePredictor<'a> {
    pub fn new(draws: &'a PosteriorDraws, u: &Direction, settings: &ErrorQuantileSettings, seed: u64) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::EmptyInput("posterior draws"));
        }
        let kern = gp_cov(draws.data.xs(), draws.hyper.gamma, draws.hyper.lambda)?;
        let error_q = error_quantile_per_draw(draws, u, settings, seed)?;
        Ok(Self { draws, kern, u: u.clone(), error_q })
    }

    pub fn error_quantiles(&self) -> &[Vec<f64>] {
        &self.error_q
    }

    fn combine(&self, b: usize, loc: &[f64]) -> Vec<f64> {
        loc.iter().zip(&self.error_q[b]).map(|(a, e)| a + e).collect()
    }

    /// Unsmoothed estimate at `x`.
    pub fn at(&self, x: f64, level: f64, seed: u64) -> Result<QuantileEstimate> {
        let per_draw = (0..self.draws.len())
            .map(|b| {
                let mut rng = stream(mix_seed(seed, b as u64), 2);
                let loc = location_draw_at(self.draws, &self.kern, b, x, &mut rng)?;
                Ok(self.combine(b, &loc))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantileEstimate::from_per_draw(x, &self.u, level, per_draw))
    }

    /// Smoothed estimate: the location is averaged over `xt` within each draw.
    pub fn smoothed_at_points(&self, x: f64, xt: &[f64], level: f64, seed: u64) -> Result<QuantileEstimate> {
        if xt.is_empty() {
            return Err(Error::EmptyInput("smoothing points"));
        }
        let data = &self.draws.data;
        let c1 = &self.draws.hyper.c1;
        let sites: Vec<Option<usize>> = xt.iter().map(|v| data.site_of(*v)).collect();
        let news = xt
            .iter()
            .zip(&sites)
            .map(|(v, s)| if s.is_some() { Ok(None) } else { NewX::new(&self.kern, *v).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        let k = self.u.dim();
        let s = xt.len() as f64;
        let per_draw = self
            .draws
            .draws
            .iter()
            .enumerate()
            .map(|(b, d)| {
                let mut rng = stream(mix_seed(seed, b as u64), 3);
                let mut acc = vec![0.0; k];
                for (site, new) in sites.iter().zip(&news) {
                    let loc = match (site, new) {
                        (Some(i), _) => d.location(d.l[*i], *i),
                        (None, Some(nx)) => {
                            let l = pick_cluster(&d.w, &mut rng);
                            location_new_x(d, data.xs(), c1, nx, l, &mut rng)
                        }
                        (None, None) => unreachable!("new points carry a predictor"),
                    };
                    acc.iter_mut().zip(&loc).for_each(|(a, v)| *a += v);
                }
                acc.iter_mut().for_each(|a| *a /= s);
                self.combine(b, &acc)
            })
            .collect();
        Ok(QuantileEstimate::from_per_draw(x, &self.u, level, per_draw))
    }

    /// Draws `samples` smoothing points from `density` on `[x - delta, x +
    /// delta]` (stream `(seed, 1)`) and evaluates the smoothed estimate.
    pub fn smoothed(
        &self,
        x: f64,
        delta: f64,
        samples: usize,
        density: &CovariateDensity,
        level: f64,
        seed: u64,
    ) -> Result<QuantileEstimate> {
        if !(delta > 0.0) {
            return Err(invalid(format!("smoothing needs delta > 0, got {delta}")));
        }
        let xt = density.sample_truncated(x - delta, x + delta, samples, &mut stream(seed, 1))?;
        self.smoothed_at_points(x, &xt, level, seed)
    }
}

/// Unsmoothed conditional quantile (`query.delta` is ignored).
pub fn conditional_quantile(
    draws: &PosteriorDraws,
    query: &QuantileQuery,
    settings: &ErrorQuantileSettings,
) -> Result<QuantileEstimate> {
    query.validate()?;
    QuantilePredictor::new(draws, &query.u, settings, query.seed)?.at(query.x, query.level, query.seed)
}

/// Smoothed conditional quantile; `query.delta` must be positive.
pub fn delta_smoothed_quantile(
    draws: &PosteriorDraws,
    query: &QuantileQuery,
    density: &CovariateDensity,
    settings: &ErrorQuantileSettings,
) -> Result<QuantileEstimate> {
    query.validate()?;
    QuantilePredictor::new(draws, &query.u, settings, query.seed)?.smoothed(
        query.x,
        query.delta,
        query.smoothing_samples,
        density,
        query.level,
        query.seed,
    )
}
