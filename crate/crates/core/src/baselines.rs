//! Frequentist comparators: linear spatial-median regression and a
//! kernel-weighted spatial median.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geoquant::{weighted_geometric_quantile, Cloud, Direction, SolverSettings};

/// Residual norms below this are replaced by it in the IRLS weights.
pub const IRLS_DAMPING: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrlsSettings {
    pub max_iter: usize,
    /// Stop once the objective drops by less than `rel_tol * (1 + objective)`.
    pub rel_tol: f64,
}

impl Default for IrlsSettings {
    fn default() -> Self {
        Self { max_iter: 1000, rel_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMedianFit {
    pub alpha_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    /// `sum_i ||y_i - alpha - beta x_i||` at the returned parameters.
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

impl LinearMedianFit {
    pub fn predict(&self, x: f64) -> Vec<f64> {
        self.alpha_hat.iter().zip(&self.beta_hat).map(|(a, b)| a + b * x).collect()
    }
}

fn check_xy(xs: &[f64], ys: &[Vec<f64>]) -> Result<usize> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    let k = ys.first().map(Vec::len).ok_or(Error::EmptyInput("observations"))?;
    if k == 0 {
        return Err(invalid("response dimension must be >= 1"));
    }
    if let Some(y) = ys.iter().find(|y| y.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: y.len() });
    }
    if xs.iter().chain(ys.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(invalid("inputs must be finite"));
    }
    Ok(k)
}

pub fn linear_objective(xs: &[f64], ys: &[Vec<f64>], alpha: &[f64], beta: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            y.iter().zip(alpha.iter().zip(beta)).map(|(v, (a, b))| (v - a - b * x).powi(2)).sum::<f64>().sqrt()
        })
        .sum()
}

/// Weighted least squares of every coordinate on `(1, x)`; the 2x2 system is
/// shared across coordinates.
fn weighted_ls(xs: &[f64], ys: &[Vec<f64>], w: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut t0 = vec![0.0; k];
    let mut t1 = vec![0.0; k];
    for ((x, y), wi) in xs.iter().zip(ys).zip(w) {
        s0 += wi;
        s1 += wi * x;
        s2 += wi * x * x;
        for c in 0..k {
            t0[c] += wi * y[c];
            t1[c] += wi * x * y[c];
        }
    }
    let det = s0 * s2 - s1 * s1;
    if !(det > 1e-12 * s0 * s2) {
        return Err(invalid("covariate values are (numerically) all identical; slope unidentifiable"));
    }
    let alpha = (0..k).map(|c| (s2 * t0[c] - s1 * t1[c]) / det).collect();
    let beta = (0..k).map(|c| (s0 * t1[c] - s1 * t0[c]) / det).collect();
    Ok((alpha, beta))
}

/// Minimises `sum_i ||y_i - alpha - beta x_i||_2` by iteratively reweighted
/// least squares started at the ordinary least-squares fit.
pub fn linear_spatial_median_fit(xs: &[f64], ys: &[Vec<f64>], settings: &IrlsSettings) -> Result<LinearMedianFit> {
    let k = check_xy(xs, ys)?;
    if xs.len() < 2 {
        return Err(invalid("linear fit needs at least two observations"));
    }
    let n = xs.len();
    let (mut alpha, mut beta) = weighted_ls(xs, ys, &vec![1.0; n], k)?;
    let mut obj = linear_objective(xs, ys, &alpha, &beta);
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    while iterations < settings.max_iter {
        iterations += 1;
        for ((wi, x), y) in w.iter_mut().zip(xs).zip(ys) {
            let r: f64 = (0..k).map(|c| (y[c] - alpha[c] - beta[c] * x).powi(2)).sum::<f64>().sqrt();
            *wi = 1.0 / r.max(IRLS_DAMPING);
        }
        let (a, b) = weighted_ls(xs, ys, &w, k)?;
        let next = linear_objective(xs, ys, &a, &b);
        if next > obj {
            // Damped weights broke the majorisation; keep the better iterate.
            break;
        }
        let decrease = obj - next;
        alpha = a;
        beta = b;
        obj = next;
        trace.push(obj);
        if decrease < settings.rel_tol * (1.0 + obj) {
            break;
        }
    }
    Ok(LinearMedianFit { alpha_hat: alpha, beta_hat: beta, objective: obj, iterations, trace })
}

/// Normalised Gaussian kernel weights `K((x - x_j)/h)`, formed in log space.
pub fn kernel_weights(xs: &[f64], x: f64, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("bandwidth must be > 0, got {h}")));
    }
    let logw: Vec<f64> = xs.iter().map(|xj| -0.5 * ((x - xj) / h).powi(2)).collect();
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Underflow(format!("no finite kernel weight at x = {x}, h = {h}")));
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}

/// `argmin_theta sum_j p_j(x) Phi(u, y_j - theta)` with Gaussian-kernel
/// weights `p_j(x)`.
pub fn kernel_spatial_median(
    xs: &[f64],
    ys: &[Vec<f64>],
    x: f64,
    h: f64,
    u: &Direction,
    solver: &SolverSettings,
) -> Result<Vec<f64>> {
    check_xy(xs, ys)?;
    let w = kernel_weights(xs, x, h)?;
    let cloud = Cloud::from_rows(ys)?;
    Ok(weighted_geometric_quantile(&cloud, Some(&w), u, solver)?.point)
}

/// Leave-one-out risk `sum_i ||y_i - fit_{-i}(x_i)||^2` for each bandwidth.
pub fn cv_risks(xs: &[f64], ys: &[Vec<f64>], h_grid: &[f64], solver: &SolverSettings) -> Result<Vec<f64>> {
    check_xy(xs, ys)?;
    if xs.len() < 2 {
        return Err(invalid("cross-validation needs at least two observations"));
    }
    let u = Direction::zero(ys[0].len());
    h_grid
        .iter()
        .map(|&h| {
            let mut risk = 0.0;
            for i in 0..xs.len() {
                let (xo, yo): (Vec<f64>, Vec<Vec<f64>>) =
                    xs.iter().zip(ys).enumerate().filter(|(j, _)| *j != i).map(|(_, (x, y))| (*x, y.clone())).unzip();
                let fit = kernel_spatial_median(&xo, &yo, xs[i], h, &u, solver)?;
                risk += fit.iter().zip(&ys[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            Ok(risk)
        })
        .collect()
}

/// Grid bandwidth with the smallest leave-one-out risk (first on ties).
pub fn cv_bandwidth(xs: &[f64], ys: &[Vec<f64>], h_grid: &[f64], solver: &SolverSettings) -> Result<f64> {
    if h_grid.is_empty() {
        return Err(Error::EmptyInput("bandwidth grid"));
    }
    if h_grid.iter().any(|h| !(*h > 0.0)) {
        return Err(invalid("bandwidths must be > 0"));
    }
    if h_grid.len() == 1 {
        return Ok(h_grid[0]);
    }
    let risks = cv_risks(xs, ys, h_grid, solver)?;
    let best = risks.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, r)| if *r < acc.1 { (i, *r) } else { acc });
    Ok(h_grid[best.0])
}

/// `{0.1, 0.2, ..., 2.0}`.
pub fn default_bandwidth_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 10.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoquant::{quantile_objective, refine_grid_argmin};
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noisy(n: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut rng = stream(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ys = xs
            .iter()
            .map(|x| {
                let e: f64 = StandardNormal.sample(&mut rng);
                let f: f64 = StandardNormal.sample(&mut rng);
                vec![1.0 + 2.0 * x + e, -0.5 * x + f * f]
            })
            .collect();
        (xs, ys)
    }

    #[test]
    fn exact_line_is_recovered() {
        let xs = [0.0, 1.0, 2.0, 3.5, -1.0];
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![1.5 + 2.0 * x, -0.5 - 0.25 * x]).collect();
        let f = linear_spatial_median_fit(&xs, &ys, &IrlsSettings::default()).unwrap();
        assert!((f.alpha_hat[0] - 1.5).abs() < 1e-6 && (f.beta_hat[0] - 2.0).abs() < 1e-6);
        assert!((f.alpha_hat[1] + 0.5).abs() < 1e-6 && (f.beta_hat[1] + 0.25).abs() < 1e-6);
    }

    #[test]
    fn sign_flipped_pairs_recover_line() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let offsets = [[0.3, -0.7], [1.1, 0.2], [-0.4, 0.9], [0.6, 0.6]];
        for (i, o) in offsets.iter().enumerate() {
            let x = i as f64;
            for s in [1.0, -1.0] {
                xs.push(x);
                ys.push(vec![2.0 - x + s * o[0], 0.5 * x + s * o[1]]);
            }
        }
        let f = linear_spatial_median_fit(&xs, &ys, &IrlsSettings::default()).unwrap();
        assert!((f.alpha_hat[0] - 2.0).abs() < 1e-6 && (f.beta_hat[0] + 1.0).abs() < 1e-6, "{f:?}");
        assert!(f.alpha_hat[1].abs() < 1e-6 && (f.beta_hat[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn identical_x_is_rejected() {
        let ys = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(linear_spatial_median_fit(&[1.0, 1.0, 1.0], &ys, &IrlsSettings::default()).is_err());
    }

    /// Derivative-free oracle: Nelder-Mead with repeated restarts.
    fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], scale: f64, iters: usize) -> (Vec<f64>, f64) {
        let n = start.len();
        let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
        for i in 0..n {
            let mut p = start.to_vec();
            p[i] += scale;
            simplex.push(p);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
        for _ in 0..iters {
            let mut idx: Vec<usize> = (0..=n).collect();
            idx.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
            simplex = idx.iter().map(|i| simplex[*i].clone()).collect();
            vals = idx.iter().map(|i| vals[*i]).collect();
            let centroid: Vec<f64> =
                (0..n).map(|c| simplex[..n].iter().map(|p| p[c]).sum::<f64>() / n as f64).collect();
            let along =
                |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect() };
            let r = along(1.0);
            let fr = f(&r);
            if fr < vals[0] {
                let e = along(2.0);
                let fe = f(&e);
                if fe < fr {
                    simplex[n] = e;
                    vals[n] = fe;
                } else {
                    simplex[n] = r;
                    vals[n] = fr;
                }
            } else if fr < vals[n - 1] {
                simplex[n] = r;
                vals[n] = fr;
            } else {
                let c = along(if fr < vals[n] { 0.5 } else { -0.5 });
                let fc = f(&c);
                if fc < vals[n].min(fr) {
                    simplex[n] = c;
                    vals[n] = fc;
                } else {
                    let best = simplex[0].clone();
                    for p in simplex.iter_mut().skip(1) {
                        p.iter_mut().zip(&best).for_each(|(x, b)| *x = b + 0.5 * (*x - b));
                    }
                    vals = simplex.iter().map(|p| f(p)).collect();
                }
            }
        }
        let i = (0..=n).min_by(|a, b| vals[*a].total_cmp(&vals[*b])).unwrap();
        (simplex[i].clone(), vals[i])
    }

    #[test]
    fn irls_matches_derivative_free_oracle() {
        let (xs, ys) = noisy(60, 7);
        let fit = linear_spatial_median_fit(&xs, &ys, &IrlsSettings::default()).unwrap();
        let f = |p: &[f64]| linear_objective(&xs, &ys, &p[..2], &p[2..]);
        let mut best = (vec![0.0; 4], f(&[0.0; 4]));
        let mut scale = 1.0;
        for _ in 0..40 {
            let (p, v) = nelder_mead(f, &best.0, scale, 2000);
            if v <= best.1 {
                best = (p, v);
            }
            scale *= 0.5;
        }
        assert!((fit.objective - best.1).abs() < 1e-6, "{} vs {}", fit.objective, best.1);
    }

    #[test]
    fn kernel_limits() {
        let (xs, ys) = noisy(25, 8);
        let s = SolverSettings { tol: 1e-12, ..Default::default() };
        let u = Direction::zero(2);
        let wide = kernel_spatial_median(&xs, &ys, 0.3, 1e9, &u, &s).unwrap();
        let cloud = Cloud::from_rows(&ys).unwrap();
        let plain = crate::geoquant::empirical_geometric_quantile(&cloud, &u, &s).unwrap().point;
        assert!((wide[0] - plain[0]).abs() < 1e-8 && (wide[1] - plain[1]).abs() < 1e-8);
        let narrow = kernel_spatial_median(&xs, &ys, xs[4], 1e-9, &u, &s).unwrap();
        assert!((narrow[0] - ys[4][0]).abs() < 1e-8 && (narrow[1] - ys[4][1]).abs() < 1e-8);
        assert!(kernel_spatial_median(&xs, &ys, 0.0, 0.0, &u, &s).is_err());
    }

    #[test]
    fn kernel_matches_grid_oracle() {
        let (xs, ys) = noisy(40, 9);
        let s = SolverSettings { tol: 1e-12, ..Default::default() };
        let got = kernel_spatial_median(&xs, &ys, 0.2, 0.5, &Direction::zero(2), &s).unwrap();
        let w = kernel_weights(&xs, 0.2, 0.5).unwrap();
        let cloud = Cloud::from_rows(&ys).unwrap();
        let f = |t: &[f64]| quantile_objective(&cloud, Some(&w), &[0.0, 0.0], t);
        let g = refine_grid_argmin(f, &[(-6.0, 6.0), (-6.0, 6.0)], 1e-4);
        assert!((got[0] - g[0]).abs() < 1e-3 && (got[1] - g[1]).abs() < 1e-3, "{got:?} vs {g:?}");
    }

    #[test]
    fn cv_examples() {
        let (xs, ys) = noisy(30, 10);
        let s = SolverSettings::default();
        assert_eq!(cv_bandwidth(&xs, &ys, &[0.7], &s).unwrap(), 0.7);
        let grid = default_bandwidth_grid();
        let h = cv_bandwidth(&xs, &ys, &grid, &s).unwrap();
        let risks = cv_risks(&xs, &ys, &grid, &s).unwrap();
        let min = risks.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(risks[grid.iter().position(|g| *g == h).unwrap()], min);

        // Pure noise around a constant: wider windows average more points and
        // the risk falls monotonically, so the widest bandwidth wins.
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<Vec<f64>> = (0..20).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let grid = [0.01, 0.05, 100.0];
        let r = cv_risks(&xs, &ys, &grid, &s).unwrap();
        assert!(r[0] >= r[1] && r[1] >= r[2], "{r:?}");
        assert_eq!(cv_bandwidth(&xs, &ys, &grid, &s).unwrap(), 100.0);
    }

    fn xy_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
        prop::collection::vec((-3.0f64..3.0, -10.0f64..10.0, -10.0f64..10.0), 3..30)
            .prop_map(|v| v.into_iter().map(|(x, a, b)| (x, vec![a, b])).unzip())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn irls_descends((xs, ys) in xy_strategy()) {
            let distinct = xs.iter().any(|x| (x - xs[0]).abs() > 1e-3);
            prop_assume!(distinct);
            let f = linear_spatial_median_fit(&xs, &ys, &IrlsSettings::default()).unwrap();
            for w in f.trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0]));
            }
            let recomputed = linear_objective(&xs, &ys, &f.alpha_hat, &f.beta_hat);
            prop_assert!((recomputed - f.objective).abs() <= 1e-12 * (1.0 + f.objective));
        }

        #[test]
        fn linear_fit_is_shift_equivariant((xs, ys) in xy_strategy(), c in prop::collection::vec(-50.0f64..50.0, 2)) {
            let distinct = xs.iter().any(|x| (x - xs[0]).abs() > 1e-3);
            prop_assume!(distinct);
            let a = linear_spatial_median_fit(&xs, &ys, &IrlsSettings::default()).unwrap();
            let shifted: Vec<Vec<f64>> = ys.iter().map(|y| vec![y[0] + c[0], y[1] + c[1]]).collect();
            let b = linear_spatial_median_fit(&xs, &shifted, &IrlsSettings::default()).unwrap();
            prop_assert!((a.objective - b.objective).abs() <= 1e-6 * (1.0 + a.objective));
        }

        #[test]
        fn kernel_median_in_convex_hull((xs, ys) in xy_strategy(), x in -3.0f64..3.0, h in 0.05f64..5.0) {
            let q = kernel_spatial_median(&xs, &ys, x, h, &Direction::zero(2), &SolverSettings::default()).unwrap();
            for i in 0..64 {
                let t = i as f64 * std::f64::consts::PI / 32.0;
                let d = [t.cos(), t.sin()];
                let proj = q[0] * d[0] + q[1] * d[1];
                let max = ys.iter().map(|y| y[0] * d[0] + y[1] * d[1]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(proj <= max + 1e-7 * (1.0 + max.abs()));
            }
        }
    }
}
