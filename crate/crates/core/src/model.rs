//! Model types: prior constants, grouped data, sampler state, and the
//! exponential-kernel Gaussian-process machinery shared by the sampler and
//! the predictor.
//!
//! Index conventions: clusters `l`, error components `j`, sites `i` and
//! replicates `r` are all 0-based. Location atoms are
//! `xi_l(x) = alpha_l + beta_l(x)`; each coordinate of `beta_l` is an
//! independent GP with mean `c1[c] * x` and covariance
//! `gamma * exp(-lambda |x - x'|)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Fixed prior constants and truncation levels. Missing fields in serialized
/// form take the simulation defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub k: usize,
    #[serde(rename = "N")]
    pub n_clusters: usize,
    #[serde(rename = "J")]
    pub n_components: usize,
    pub c0: Vec<f64>,
    #[serde(rename = "Sigma0")]
    pub sigma0: Vec<Vec<f64>>,
    pub c1: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub c_eta: Vec<f64>,
    pub s_eta2: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "a_M1")]
    pub a_m1: f64,
    #[serde(rename = "b_M1")]
    pub b_m1: f64,
    #[serde(rename = "a_M2")]
    pub a_m2: f64,
    #[serde(rename = "b_M2")]
    pub b_m2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::simulation_defaults()
    }
}

impl Hyperparams {
    /// Prior block used for the bivariate simulation study: both sticks
    /// truncated at 20, `Ga(1,1)` concentrations, `eta ~ N2(0, 10 I)`,
    /// `sigma^2 ~ IG(1,1)`, `alpha ~ N2((1,1), 10 I)`, GP slope `(2, 1/2)`,
    /// `gamma = 10`, `lambda = 1/2`.
    pub fn simulation_defaults() -> Self {
        Self {
            k: 2,
            n_clusters: 20,
            n_components: 20,
            c0: vec![1.0, 1.0],
            sigma0: vec![vec![10.0, 0.0], vec![0.0, 10.0]],
            c1: vec![2.0, 0.5],
            gamma: 10.0,
            lambda: 0.5,
            c_eta: vec![0.0, 0.0],
            s_eta2: 10.0,
            a: 1.0,
            b: 1.0,
            a_m1: 1.0,
            b_m1: 1.0,
            a_m2: 1.0,
            b_m2: 1.0,
        }
    }

    /// Checks every invariant, including `N >= 2` and `J >= 2`.
    pub fn validate(&self) -> Result<()> {
        self.check(2)
    }

    /// As [`validate`](Self::validate) but with a caller-chosen lower bound
    /// on the truncation levels; the sampler itself runs with one atom.
    pub fn check(&self, min_truncation: usize) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if self.n_clusters < min_truncation || self.n_components < min_truncation {
            return Err(invalid(format!(
                "truncation levels must be >= {min_truncation}, got N = {}, J = {}",
                self.n_clusters, self.n_components
            )));
        }
        for (name, v) in [("c0", &self.c0), ("c1", &self.c1), ("c_eta", &self.c_eta)] {
            if v.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("s_eta2", self.s_eta2),
            ("a", self.a),
            ("b", self.b),
            ("a_M1", self.a_m1),
            ("b_M1", self.b_m1),
            ("a_M2", self.a_m2),
            ("b_M2", self.b_m2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        self.sigma0_matrix()?;
        Ok(())
    }

    /// `Sigma0` as a matrix, checked symmetric positive-definite.
    pub fn sigma0_matrix(&self) -> Result<DMatrix<f64>> {
        let k = self.k;
        if self.sigma0.len() != k || self.sigma0.iter().any(|r| r.len() != k) {
            return Err(invalid(format!("Sigma0 must be {k}x{k}")));
        }
        let m = DMatrix::from_fn(k, k, |r, c| self.sigma0[r][c]);
        if (0..k).any(|r| (0..k).any(|c| m[(r, c)] != m[(c, r)])) {
            return Err(invalid("Sigma0 must be symmetric"));
        }
        if m.iter().any(|x| !x.is_finite()) || Cholesky::new(m.clone()).is_none() {
            return Err(invalid("Sigma0 must be positive-definite"));
        }
        Ok(m)
    }
}

/// Covariate values with replicated `k`-variate responses, grouped by
/// distinct `x` in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    k: usize,
    xs: Vec<f64>,
    counts: Vec<usize>,
    offsets: Vec<usize>,
    ys: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    xs: Vec<f64>,
    ys: Vec<Vec<Vec<f64>>>,
}

impl Serialize for Dataset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let ys = (0..self.d()).map(|i| self.site(i).map(<[f64]>::to_vec).collect()).collect();
        DatasetRepr { xs: self.xs.clone(), ys }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dataset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = DatasetRepr::deserialize(d)?;
        Dataset::from_groups(r.xs, r.ys).map_err(serde::de::Error::custom)
    }
}

impl Dataset {
    /// Groups `(x, y)` pairs by exact `x`, sorted increasingly. Replicates keep
    /// their input order.
    pub fn from_pairs(xs: &[f64], ys: &[Vec<f64>]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
        }
        if xs.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        let mut order: Vec<usize> = (0..xs.len()).collect();
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(invalid("covariate values must be finite"));
        }
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
        let mut gx: Vec<f64> = Vec::new();
        let mut gy: Vec<Vec<Vec<f64>>> = Vec::new();
        for i in order {
            if gx.last() == Some(&xs[i]) {
                gy.last_mut().expect("group exists").push(ys[i].clone());
            } else {
                gx.push(xs[i]);
                gy.push(vec![ys[i].clone()]);
            }
        }
        Self::from_groups(gx, gy)
    }

    /// Builds from already grouped data; `xs` must be strictly increasing.
    pub fn from_groups(xs: Vec<f64>, groups: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        if groups.len() != xs.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: groups.len() });
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || xs.iter().any(|x| !x.is_finite()) {
            return Err(invalid("covariate values must be finite and strictly increasing"));
        }
        let k = groups.first().and_then(|g| g.first()).map(Vec::len).ok_or(Error::EmptyInput("responses"))?;
        if k == 0 {
            return Err(invalid("response dimension must be >= 1"));
        }
        let mut counts = Vec::with_capacity(xs.len());
        let mut offsets = Vec::with_capacity(xs.len());
        let mut ys = Vec::new();
        for g in &groups {
            if g.is_empty() {
                return Err(invalid("every covariate value needs at least one response"));
            }
            offsets.push(ys.len() / k);
            counts.push(g.len());
            for y in g {
                if y.len() != k {
                    return Err(Error::DimensionMismatch { expected: k, got: y.len() });
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("responses must be finite"));
                }
                ys.extend_from_slice(y);
            }
        }
        Ok(Self { k, xs, counts, offsets, ys })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of distinct covariate values.
    pub fn d(&self) -> usize {
        self.xs.len()
    }

    /// Total number of responses.
    pub fn n(&self) -> usize {
        self.ys.len() / self.k
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Flat index of replicate `r` at site `i`.
    pub fn obs_index(&self, i: usize, r: usize) -> usize {
        self.offsets[i] + r
    }

    pub fn y(&self, i: usize, r: usize) -> &[f64] {
        let o = self.obs_index(i, r) * self.k;
        &self.ys[o..o + self.k]
    }

    /// Replicates at site `i`.
    pub fn site(&self, i: usize) -> std::slice::ChunksExact<'_, f64> {
        let o = self.offsets[i] * self.k;
        self.ys[o..o + self.counts[i] * self.k].chunks_exact(self.k)
    }

    /// Every observation's covariate value, replicates included.
    pub fn all_x(&self) -> Vec<f64> {
        self.xs.iter().zip(&self.counts).flat_map(|(x, &n)| std::iter::repeat_n(*x, n)).collect()
    }

    /// `(x, y)` pairs in grouped order.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        (0..self.d()).flat_map(move |i| self.site(i).map(move |y| (self.xs[i], y)))
    }

    /// Position of `x` among the distinct covariate values, if present.
    pub fn site_of(&self, x: f64) -> Option<usize> {
        self.xs.binary_search_by(|v| v.total_cmp(&x)).ok()
    }
}

/// One configuration of every latent variable the sampler updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    k: usize,
    d: usize,
    /// `N x k`, row per cluster.
    pub alpha: Vec<f64>,
    /// `N x d x k`: entry `(l * d + i) * k + c`.
    pub beta: Vec<f64>,
    /// The `N - 1` free stick variables behind `w`.
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// The `J - 1` free stick variables behind `p`.
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// `J x k`.
    pub eta: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Cluster of each site, `0..N`.
    pub l: Vec<usize>,
    /// Error component of each observation (flat grouped order), `0..J`.
    pub z: Vec<usize>,
    pub m1: f64,
    pub m2: f64,
}

impl ChainState {
    /// All-zero state with the right shapes; sticks at 1/2.
    pub fn zeros(n_clusters: usize, n_components: usize, data: &Dataset) -> Self {
        let (k, d) = (data.k(), data.d());
        let v = vec![0.5; n_clusters.saturating_sub(1)];
        let q = vec![0.5; n_components.saturating_sub(1)];
        let w = stick_break(&v).expect("valid sticks");
        let p = stick_break(&q).expect("valid sticks");
        Self {
            k,
            d,
            alpha: vec![0.0; n_clusters * k],
            beta: vec![0.0; n_clusters * d * k],
            v,
            w,
            q,
            p,
            eta: vec![0.0; n_components * k],
            sigma2: vec![1.0; n_components],
            l: vec![0; d],
            z: vec![0; data.n()],
            m1: 1.0,
            m2: 1.0,
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

    pub fn n_components(&self) -> usize {
        self.p.len()
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

    /// `xi_l(x_i) = alpha_l + beta_l(x_i)`.
    pub fn location(&self, l: usize, i: usize) -> Vec<f64> {
        self.alpha(l).iter().zip(self.beta(l, i)).map(|(a, b)| a + b).collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        check_probability_vector(&self.w, "W")?;
        check_probability_vector(&self.p, "p")?;
        if self.sigma2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(invalid("every sigma2 must be positive and finite"));
        }
        let n = self.n_clusters();
        let j = self.n_components();
        if self.l.iter().any(|&l| l >= n) {
            return Err(invalid("cluster label out of range"));
        }
        if self.z.iter().any(|&z| z >= j) {
            return Err(invalid("component label out of range"));
        }
        if !(self.m1 > 0.0 && self.m2 > 0.0) {
            return Err(invalid("concentrations must be positive"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.alpha) || !finite(&self.beta) || !finite(&self.eta) {
            return Err(invalid("non-finite location parameter"));
        }
        Ok(())
    }
}

fn check_probability_vector(w: &[f64], name: &str) -> Result<()> {
    if w.iter().any(|x| !(*x >= 0.0)) {
        return Err(invalid(format!("{name} has a negative or NaN entry")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// Truncated stick-breaking: `W_1 = V_1`, `W_l = V_l prod_{r<l} (1 - V_r)`,
/// and the last weight closes the stick. Returns `v.len() + 1` weights.
///
/// The closing weight is the remaining stick `prod_r (1 - V_r)`, which equals
/// `1 - sum_{l<m} W_l` and stays accurate when it is tiny.
pub fn stick_break(v: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid(format!("stick variables must lie in [0, 1], got {bad}")));
    }
    let mut w = Vec::with_capacity(v.len() + 1);
    let mut rest = 1.0;
    for &vl in v {
        w.push(vl * rest);
        rest *= 1.0 - vl;
    }
    w.push(rest);
    Ok(w)
}

/// Inverse of [`stick_break`] wherever the remaining stick is positive;
/// sticks after an exhausted stick are reported as 1.
pub fn stick_unbreak(w: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(w.len().saturating_sub(1));
    let mut rest = 1.0;
    for &wl in &w[..w.len().saturating_sub(1)] {
        if rest > 0.0 {
            let vl = (wl / rest).clamp(0.0, 1.0);
            v.push(vl);
            rest *= 1.0 - vl;
        } else {
            v.push(1.0);
        }
    }
    v
}

const JITTER_BASE: f64 = 1e-8;
const JITTER_DOUBLINGS: usize = 3;

/// `gamma * exp(-lambda |x - x'|)` over a fixed design, with its Cholesky
/// factor.
#[derive(Debug, Clone)]
pub struct GpKernel {
    xs: Vec<f64>,
    gamma: f64,
    lambda: f64,
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

/// Builds the kernel matrix over `xs` and factors it. When the plain factor
/// fails, `1e-8 * gamma * I` is added and doubled up to three times.
pub fn gp_cov(xs: &[f64], gamma: f64, lambda: f64) -> Result<GpKernel> {
    if !(gamma > 0.0 && lambda > 0.0) || !gamma.is_finite() || !lambda.is_finite() {
        return Err(invalid(format!("gamma and lambda must be > 0, got {gamma}, {lambda}")));
    }
    if xs.is_empty() {
        return Err(Error::EmptyInput("kernel design"));
    }
    let d = xs.len();
    let mut matrix = DMatrix::zeros(d, d);
    for i in 0..d {
        matrix[(i, i)] = gamma;
        for j in 0..i {
            let v = gamma * (-lambda * (xs[i] - xs[j]).abs()).exp();
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    let mut jitter = 0.0;
    let mut attempt = matrix.clone();
    for step in 0..=JITTER_DOUBLINGS + 1 {
        if let Some(chol) = Cholesky::new(attempt.clone()) {
            return Ok(GpKernel { xs: xs.to_vec(), gamma, lambda, matrix, chol, jitter });
        }
        if step == JITTER_DOUBLINGS + 1 {
            break;
        }
        jitter = if jitter == 0.0 { JITTER_BASE * gamma } else { 2.0 * jitter };
        attempt = matrix.clone();
        for i in 0..d {
            attempt[(i, i)] += jitter;
        }
    }
    Err(Error::Factorization(format!("{d}x{d} kernel matrix, final jitter {jitter:e}")))
}

impl GpKernel {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cov(&self, a: f64, b: f64) -> f64 {
        self.gamma * (-self.lambda * (a - b).abs()).exp()
    }

    /// The kernel matrix without jitter.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower Cholesky factor of `matrix + jitter * I`.
    pub fn chol_lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Conditioning weights `K^{-1} k(x)` and variance `gamma - k' K^{-1} k`
    /// for a new input.
    pub fn predictor(&self, x: f64) -> Result<GpPredictor> {
        if !x.is_finite() {
            return Err(invalid(format!("prediction input must be finite, got {x}")));
        }
        let kx = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|&xi| self.cov(x, xi)));
        let weights = self.chol.solve(&kx);
        let mut variance = self.gamma - kx.dot(&weights);
        if variance < 0.0 {
            if variance < -1e-8 {
                return Err(Error::Factorization(format!("negative conditional variance {variance:e} at x = {x}")));
            }
            variance = 0.0;
        }
        Ok(GpPredictor { x, weights: weights.iter().copied().collect(), variance })
    }
}

/// Reusable conditioning of one GP coordinate at a fixed new input.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPredictor {
    pub x: f64,
    pub weights: Vec<f64>,
    pub variance: f64,
}

impl GpPredictor {
    /// Conditional mean `slope * x + w' (values - slope * xs)`, where `values`
    /// yields the coordinate's values at the kernel design points.
    pub fn mean(&self, xs: &[f64], values: impl Iterator<Item = f64>, slope: f64) -> f64 {
        let resid: f64 = self.weights.iter().zip(xs).zip(values).map(|((w, x), v)| w * (v - slope * x)).sum();
        slope * self.x + resid
    }
}

/// Gaussian conditioning of a `k`-variate GP path observed at the kernel's
/// design points: per-coordinate mean and the shared scalar variance.
pub fn gp_conditional(kern: &GpKernel, observed: &[Vec<f64>], c1: &[f64], x_new: f64) -> Result<(Vec<f64>, f64)> {
    if observed.len() != kern.xs.len() {
        return Err(Error::DimensionMismatch { expected: kern.xs.len(), got: observed.len() });
    }
    let k = c1.len();
    if let Some(o) = observed.iter().find(|o| o.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: o.len() });
    }
    let pred = kern.predictor(x_new)?;
    let mean = (0..k).map(|c| pred.mean(&kern.xs, observed.iter().map(|o| o[c]), c1[c])).collect();
    Ok((mean, pred.variance))
}
