use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bessel::i0e;
use super::weiszfeld::{empirical_geometric_quantile, quantile_objective, Cloud, WeiszfeldSolution};
use super::{dist2, dot, Direction, SolverSettings};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Half-width of the radial integration window around `r = c`.
///
/// With `I0(x) <= e^x` the integrand `r^2 exp(-(r-c)^2/2) e^{-rc} I0(rc)` is
/// bounded by `r^2 exp(-(r-c)^2/2)`, whose mass outside `[c-9, c+9]` is below
/// `1e-14` for every `c <= 1e3`.
pub const POLAR_HALF_WINDOW: f64 = 9.0;

/// `sum_j w_j N_k(mu_j, s2_j I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let j = weights.len();
        if j == 0 {
            return Err(Error::EmptyInput("mixture components"));
        }
        if means.len() != j {
            return Err(Error::DimensionMismatch { expected: j, got: means.len() });
        }
        if variances.len() != j {
            return Err(Error::DimensionMismatch { expected: j, got: variances.len() });
        }
        let k = means[0].len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture dimension must be >= 1".into()));
        }
        if let Some(m) = means.iter().find(|m| m.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, got: m.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidArgument("mixture variances must be > 0".into()));
        }
        if means.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("mixture means must be finite".into()));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `n` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Cloud {
        let k = self.dim();
        let mut cloud = Cloud::with_capacity(k, n);
        let sds: Vec<f64> = self.variances.iter().map(|v| v.sqrt()).collect();
        let mut point = vec![0.0; k];
        for _ in 0..n {
            let j = self.pick(rng.random::<f64>());
            for (c, p) in point.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *p = self.means[j][c] + sds[j] * z;
            }
            cloud.push(&point).expect("dimension fixed");
        }
        cloud
    }

    fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return j;
            }
        }
        // Rounding left u above the cumulative total; take the last
        // component with positive weight.
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(self.weights.len() - 1)
    }

    /// Box covering every component's mean +- `spread` standard deviations.
    fn auto_bounds(&self, spread: f64) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|c| {
                let lo = self
                    .means
                    .iter()
                    .zip(&self.variances)
                    .map(|(m, v)| m[c] - spread * v.sqrt())
                    .fold(f64::INFINITY, f64::min);
                let hi = self
                    .means
                    .iter()
                    .zip(&self.variances)
                    .map(|(m, v)| m[c] + spread * v.sqrt())
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect()
    }
}

fn check_direction(mix: &MixtureSpec, u: &Direction) -> Result<()> {
    if u.dim() != mix.dim() {
        return Err(Error::DimensionMismatch { expected: mix.dim(), got: u.dim() });
    }
    Ok(())
}

/// Quantile of the mixture by Monte Carlo: `R = settings.mc_samples` draws,
/// then the empirical geometric quantile of the sample. The empirical
/// minimiser is the exact argmin of the Monte Carlo average objective, so it
/// coincides with a grid scan of that average up to the grid step (see
/// [`mixture_quantile_mc_grid`]).
pub fn mixture_quantile_mc(
    mix: &MixtureSpec,
    u: &Direction,
    settings: &SolverSettings,
    seed: u64,
) -> Result<WeiszfeldSolution> {
    settings.validate()?;
    check_direction(mix, u)?;
    let cloud = mix.sample(settings.mc_samples, &mut stream(seed, 0));
    empirical_geometric_quantile(&cloud, u, settings)
}

/// Grid-scan counterpart of [`mixture_quantile_mc`] on the same sample.
pub fn mixture_quantile_mc_grid(
    mix: &MixtureSpec,
    u: &Direction,
    settings: &SolverSettings,
    seed: u64,
) -> Result<Vec<f64>> {
    settings.validate()?;
    check_direction(mix, u)?;
    let cloud = mix.sample(settings.mc_samples, &mut stream(seed, 0));
    let f = |t: &[f64]| quantile_objective(&cloud, None, u.as_slice(), t);
    minimise_on_box(mix, u, settings, f)
}

/// `E||Z||` for `Z ~ N_2(mu, I)` with `||mu|| = c`:
/// `e^{-c^2/2} int_0^inf r^2 e^{-r^2/2} I0(r c) dr`, integrated by composite
/// Simpson over `[max(0, c - w), c + w]`, `w = POLAR_HALF_WINDOW`, in the
/// overflow-free form `r^2 exp(-(r-c)^2/2) e^{-rc} I0(rc)`.
pub fn expected_gaussian_norm_2d(c: f64, points: usize) -> f64 {
    let lo = (c - POLAR_HALF_WINDOW).max(0.0);
    let hi = c + POLAR_HALF_WINDOW;
    let n = if points % 2 == 0 { points + 1 } else { points.max(3) };
    let intervals = n - 1;
    let h = (hi - lo) / intervals as f64;
    let f = |r: f64| {
        let d = r - c;
        r * r * (-0.5 * d * d).exp() * i0e(r * c)
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..intervals {
        let r = lo + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 * f(r) } else { 2.0 * f(r) };
    }
    sum * h / 3.0
}

/// Expected `Phi(u, X - theta)` under a bivariate mixture:
/// `sum_j w_j [ s_j E||Z_j|| + <u, mu_j - theta> ]` with
/// `Z_j ~ N_2((mu_j - theta)/s_j, I)`.
pub fn polar_objective(mix: &MixtureSpec, u: &[f64], theta: &[f64], points: usize) -> f64 {
    mix.weights
        .iter()
        .zip(&mix.means)
        .zip(&mix.variances)
        .filter(|((w, _), _)| **w > 0.0)
        .map(|((w, m), v)| {
            let s = v.sqrt();
            let c = dist2(theta, m) / s;
            let lin: Vec<f64> = m.iter().zip(theta).map(|(a, b)| a - b).collect();
            w * (s * expected_gaussian_norm_2d(c, points) + dot(u, &lin))
        })
        .sum()
}

/// Quantile of a bivariate mixture from the polar/Bessel reduction of the
/// expected objective, minimised over a `grid_step` lattice.
pub fn mixture_quantile_polar(mix: &MixtureSpec, u: &Direction, settings: &SolverSettings) -> Result<Vec<f64>> {
    settings.validate()?;
    if mix.dim() != 2 {
        return Err(Error::InvalidArgument(format!("polar reduction needs k = 2, got k = {}", mix.dim())));
    }
    check_direction(mix, u)?;
    let points = settings.quadrature_points;
    let f = |t: &[f64]| polar_objective(mix, u.as_slice(), t, points);
    minimise_on_box(mix, u, settings, f)
}

/// Largest standardized offset `||theta - mu_j|| / s_j` over a box.
fn max_offset(mix: &MixtureSpec, bounds: &[(f64, f64)]) -> f64 {
    let mut worst: f64 = 0.0;
    for (m, v) in mix.means.iter().zip(&mix.variances) {
        let s = v.sqrt();
        let d2: f64 = m.iter().zip(bounds).map(|(x, (lo, hi))| (x - lo).abs().max((x - hi).abs()).powi(2)).sum();
        worst = worst.max(d2.sqrt() / s);
    }
    worst
}

fn minimise_on_box<F: Fn(&[f64]) -> f64>(
    mix: &MixtureSpec,
    u: &Direction,
    settings: &SolverSettings,
    f: F,
) -> Result<Vec<f64>> {
    let polar_check = |bounds: &[(f64, f64)]| -> Result<()> {
        if let Some(rmax) = settings.quadrature_rmax {
            let needed = max_offset(mix, bounds) + POLAR_HALF_WINDOW;
            if needed > rmax {
                return Err(Error::QuadratureRange { needed, rmax });
            }
        }
        Ok(())
    };
    if let Some(bounds) = &settings.grid_bounds {
        if bounds.len() != mix.dim() {
            return Err(Error::DimensionMismatch { expected: mix.dim(), got: bounds.len() });
        }
        polar_check(bounds)?;
        return Ok(refine_grid_argmin(&f, bounds, settings.grid_step));
    }
    // Quantiles move outward as ||u|| -> 1; widen the box with the direction
    // and re-run if the optimum lands on its edge.
    let r = u.norm();
    let mut spread = 4.0 + 4.0 * r / (1.0 - r);
    for _ in 0..6 {
        let bounds = mix.auto_bounds(spread);
        polar_check(&bounds)?;
        let best = refine_grid_argmin(&f, &bounds, settings.grid_step);
        let on_edge = best
            .iter()
            .zip(&bounds)
            .any(|(x, (lo, hi))| (x - lo).abs() < settings.grid_step || (hi - x).abs() < settings.grid_step);
        if !on_edge {
            return Ok(best);
        }
        spread *= 2.0;
    }
    Err(Error::InvalidArgument("quantile escapes every search box; direction too extreme".into()))
}

/// Exhaustive scan of the lattice `lo + i * step` inside `bounds`.
pub fn grid_argmin<F: Fn(&[f64]) -> f64>(f: F, bounds: &[(f64, f64)], step: f64) -> Vec<f64> {
    let counts: Vec<usize> = bounds.iter().map(|(lo, hi)| ((hi - lo) / step + 1e-9).floor() as usize + 1).collect();
    let mut idx = vec![0usize; bounds.len()];
    let mut point: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let mut best = (f64::INFINITY, point.clone());
    loop {
        for (c, (lo, _)) in bounds.iter().enumerate() {
            point[c] = lo + idx[c] as f64 * step;
        }
        let v = f(&point);
        if v < best.0 {
            best = (v, point.clone());
        }
        let mut c = 0;
        loop {
            if c == idx.len() {
                return best.1;
            }
            idx[c] += 1;
            if idx[c] < counts[c] {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
    }
}

/// Coarse-to-fine lattice search for convex objectives: a ~40-cell scan of
/// `bounds`, then repeated scans of `+-2` coarse cells around the incumbent at
/// a 5x finer step, ending at `step`.
pub fn refine_grid_argmin<F: Fn(&[f64]) -> f64>(f: F, bounds: &[(f64, f64)], step: f64) -> Vec<f64> {
    let width = bounds.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    let mut h = (width / 40.0).max(step);
    let mut best = grid_argmin(&f, bounds, h);
    while h > step {
        let next = (h / 5.0).max(step);
        let local: Vec<(f64, f64)> =
            best.iter().zip(bounds).map(|(x, (lo, hi))| ((x - 2.0 * h).max(*lo), (x + 2.0 * h).min(*hi))).collect();
        best = grid_argmin(&f, &local, next);
        h = next;
    }
    best
}
