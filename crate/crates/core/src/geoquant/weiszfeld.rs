use super::{dist2, dot, norm2, Direction, SolverSettings};
use crate::error::{Error, Result};

/// Points closer than this to the current iterate are treated as coincident.
const COINCIDENCE_EPS: f64 = 1e-9;

/// Row-major set of `k`-dimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    dim: usize,
    data: Vec<f64>,
}

impl Cloud {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("cloud dimension must be >= 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: data.len() % dim });
        }
        Ok(Self { dim, data })
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * n) }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyInput("points"))?;
        let mut cloud = Self::with_capacity(dim, rows.len());
        for r in rows {
            cloud.push(r)?;
        }
        Ok(cloud)
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.len() });
        }
        self.data.extend_from_slice(p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    /// Adds `c` to every point.
    pub fn translated(&self, c: &[f64]) -> Self {
        let mut data = self.data.clone();
        for p in data.chunks_exact_mut(self.dim) {
            p.iter_mut().zip(c).for_each(|(x, s)| *x += s);
        }
        Self { dim: self.dim, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeiszfeldSolution {
    pub point: Vec<f64>,
    /// Weighted objective `sum_i w_i Phi(u, y_i - point)` at `point`.
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` was exhausted; `point` is then the best iterate.
    pub converged: bool,
    /// Objective value at every visited iterate, in order.
    pub trace: Vec<f64>,
}

/// `sum_i w_i Phi(u, y_i - theta)`; unit weights when `weights` is `None`.
pub fn quantile_objective(cloud: &Cloud, weights: Option<&[f64]>, u: &[f64], theta: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut diff = vec![0.0; cloud.dim()];
    for (i, y) in cloud.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        diff.iter_mut().zip(y.iter().zip(theta)).for_each(|(d, (a, b))| *d = a - b);
        total += w * (norm2(&diff) + dot(u, &diff));
    }
    total
}

/// Geometric `u`-quantile of the empirical measure of `cloud`.
pub fn empirical_geometric_quantile(
    cloud: &Cloud,
    u: &Direction,
    settings: &SolverSettings,
) -> Result<WeiszfeldSolution> {
    weighted_geometric_quantile(cloud, None, u, settings)
}

/// Minimises `sum_i w_i Phi(u, y_i - theta)` with the offset Weiszfeld map
///
/// `theta <- (sum_i w_i y_i / d_i + W u) / (sum_i w_i / d_i)`,  `W = sum_i w_i`,
///
/// which is the minimiser of the usual quadratic majoriser, so the objective
/// never increases. When the iterate lands on a data point the subgradient
/// condition `||grad of the rest|| <= weight at that point` is checked there;
/// if it fails, the iterate is pushed along the descent direction with a
/// halving line search and iteration resumes.
pub fn weighted_geometric_quantile(
    cloud: &Cloud,
    weights: Option<&[f64]>,
    u: &Direction,
    settings: &SolverSettings,
) -> Result<WeiszfeldSolution> {
    settings.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    let k = cloud.dim();
    if u.dim() != k {
        return Err(Error::DimensionMismatch { expected: k, got: u.dim() });
    }
    if let Some(w) = weights {
        if w.len() != cloud.len() {
            return Err(Error::DimensionMismatch { expected: cloud.len(), got: w.len() });
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total_w: f64 = (0..cloud.len()).map(weight).sum();
    if !(total_w > 0.0) {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    let u = u.as_slice();

    let mut theta = vec![0.0; k];
    for (i, y) in cloud.iter().enumerate() {
        let w = weight(i);
        theta.iter_mut().zip(y).for_each(|(t, v)| *t += w * v);
    }
    theta.iter_mut().for_each(|t| *t /= total_w);

    let mut trace = Vec::new();
    let mut num = vec![0.0; k];
    let mut rest_grad = vec![0.0; k];
    let mut diff = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iter {
        iterations += 1;
        num.iter_mut().for_each(|x| *x = 0.0);
        rest_grad.iter_mut().for_each(|x| *x = 0.0);
        let mut den = 0.0;
        let mut objective = 0.0;
        let mut coincident_w = 0.0;
        let mut dist_sum = 0.0;

        for (i, y) in cloud.iter().enumerate() {
            let w = weight(i);
            if w == 0.0 {
                continue;
            }
            diff.iter_mut().zip(y.iter().zip(&theta)).for_each(|(d, (a, b))| *d = a - b);
            let d = norm2(&diff);
            objective += w * (d + dot(u, &diff));
            if d < COINCIDENCE_EPS {
                coincident_w += w;
                continue;
            }
            dist_sum += w * d;
            let r = w / d;
            den += r;
            num.iter_mut().zip(y).for_each(|(n, v)| *n += r * v);
            rest_grad.iter_mut().zip(&diff).for_each(|(g, dv)| *g += r * dv);
        }

        if let Some(&prev) = trace.last() {
            debug_assert!(
                objective <= prev + 1e-9 * (1.0 + f64::abs(prev)),
                "Weiszfeld objective increased: {prev} -> {objective}"
            );
        }
        trace.push(objective);

        if coincident_w > 0.0 {
            // Gradient of the smooth part at theta: -sum_{rest} w (y - theta)/d - W u.
            let g: Vec<f64> = rest_grad.iter().zip(u).map(|(r, ui)| -r - total_w * ui).collect();
            let gnorm = norm2(&g);
            if gnorm <= coincident_w * (1.0 + 1e-12) {
                converged = true;
                break;
            }
            let scale = if den > 0.0 { dist_sum / (total_w - coincident_w) } else { 1.0 };
            let mut step = 1e-3 * scale.max(1e-6);
            let mut moved = false;
            for _ in 0..80 {
                let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi / gnorm).collect();
                if quantile_objective(cloud, weights, u, &cand) < objective {
                    theta = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                // Descent is below floating-point resolution; theta is optimal
                // to working precision.
                converged = true;
                break;
            }
            continue;
        }

        let next: Vec<f64> = num.iter().zip(u).map(|(n, ui)| (n + total_w * ui) / den).collect();
        let step = dist2(&next, &theta);
        theta = next;
        if step < settings.tol {
            converged = true;
            let objective = quantile_objective(cloud, weights, u, &theta);
            trace.push(objective);
            break;
        }
    }

    let objective = *trace.last().expect("at least one iteration");
    Ok(WeiszfeldSolution { point: theta, objective, iterations, converged, trace })
}
