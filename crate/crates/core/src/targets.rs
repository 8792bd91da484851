//! Unnormalized targets `π ∝ exp(−F)`.
//!
//! Every built-in carries a smoothness constant `L` derived by hand from its
//! Hessian; `verify_smoothness` only probes it. `log_normalizer` returns
//! `log ∫ exp(−F)` so that `F + log Z` is the normalized potential.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, positive, Error, Result};

/// Default iteration cap for [`find_stationary_point`].
pub const STATIONARY_MAX_ITERS: usize = 100_000;

pub trait Target: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// `F(x)`; the caller guarantees `x.len() == dim()`.
    fn potential(&self, x: &[f64]) -> f64;

    /// Writes `∇F(x)` into `out`; both slices have length `dim()`.
    fn grad_into(&self, x: &[f64], out: &mut [f64]);

    /// Declared bound on the operator norm of the Hessian of `F`.
    fn smoothness(&self) -> f64;

    /// A known stationary point, if the target has a closed-form one.
    fn stationary_point(&self) -> Option<Vec<f64>> {
        None
    }

    /// `log ∫ exp(−F(x)) dx`.
    fn log_normalizer(&self) -> Option<f64> {
        None
    }

    /// `n` exact draws from `π`, row-major.
    fn sample(&self, _rng: &mut dyn RngCore, _n: usize) -> Option<Vec<f64>> {
        None
    }

    /// Checked gradient.
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; x.len()];
        self.grad_into(x, &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFinite("target gradient"))
        }
    }

    /// `log π(x)` for a normalized density, when `log Z` is known.
    fn log_density(&self, x: &[f64]) -> Option<f64> {
        self.log_normalizer().map(|lz| -self.potential(x) - lz)
    }
}

fn normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

/// `N(mean, diag(1/precision))`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    name: String,
    mean: Vec<f64>,
    precision: Vec<f64>,
}

impl Gaussian {
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn new(mean: Vec<f64>, precision: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::Empty("gaussian mean"));
        }
        check_dim(mean.len(), precision.len())?;
        for &p in &precision {
            positive("gaussian precision", p)?;
        }
        let standard = mean.iter().all(|&m| m == 0.0) && precision.iter().all(|&p| p == 1.0);
        let name = if standard { "gaussian" } else { "anisotropic_gaussian" };
        Ok(Self { name: name.into(), mean, precision })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }
}

impl Target for Gaussian {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn potential(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .zip(&self.precision)
            .map(|((xi, m), p)| 0.5 * p * (xi - m) * (xi - m))
            .sum()
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.precision[i] * (x[i] - self.mean[i]);
        }
    }

    fn smoothness(&self) -> f64 {
        self.precision.iter().cloned().fold(0.0, f64::max)
    }

    fn stationary_point(&self) -> Option<Vec<f64>> {
        Some(self.mean.clone())
    }

    fn log_normalizer(&self) -> Option<f64> {
        Some(
            self.precision
                .iter()
                .map(|p| 0.5 * (2.0 * std::f64::consts::PI / p).ln())
                .sum(),
        )
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Option<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            for i in 0..d {
                out.push(self.mean[i] + normal(rng) / self.precision[i].sqrt());
            }
        }
        Some(out)
    }
}

/// Finite mixture `Σ_k w_k N(m_k, s² I)` with a shared isotropic variance.
///
/// `F` is the fully normalized negative log density, so `log Z = 0`. The
/// Hessian is `I/s² − Cov_r(m)/s⁴` where `r` are the posterior component
/// responsibilities; `Cov_r(m)` is bounded by `D²/4` for a component set of
/// diameter `D`, which gives `L = max(1/s², D²/(4s⁴) − 1/s²)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    means: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    variance: f64,
    smoothness: f64,
}

impl GaussianMixture {
    pub fn new(means: Vec<Vec<f64>>, weights: Vec<f64>, variance: f64) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        check_dim(means.len(), weights.len())?;
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter("mixture dimension must be >= 1".into()));
        }
        for m in &means {
            check_dim(dim, m.len())?;
        }
        positive("mixture variance", variance)?;
        for &w in &weights {
            positive("mixture weight", w)?;
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut diameter2: f64 = 0.0;
        for a in &means {
            for b in &means {
                diameter2 = diameter2.max(crate::kernels::sq_dist(a, b));
            }
        }
        let inv = 1.0 / variance;
        let smoothness = inv.max(diameter2 * inv * inv / 4.0 - inv);
        Ok(Self {
            dim,
            means,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            variance,
            smoothness,
        })
    }

    /// Equal-weight, unit-variance mixture with components at `±mean`.
    pub fn symmetric(mean: Vec<f64>) -> Result<Self> {
        let neg = mean.iter().map(|v| -v).collect();
        Self::new(vec![mean, neg], vec![0.5, 0.5], 1.0)
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    // log of w_k N(x; m_k, s²I) without the shared Gaussian constant
    fn component_logs(&self, x: &[f64]) -> Vec<f64> {
        self.means
            .iter()
            .zip(&self.log_weights)
            .map(|(m, lw)| lw - crate::kernels::sq_dist(x, m) / (2.0 * self.variance))
            .collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Target for GaussianMixture {
    fn name(&self) -> &str {
        "mixture"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, x: &[f64]) -> f64 {
        let norm = 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI * self.variance).ln();
        norm - log_sum_exp(&self.component_logs(x))
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let logs = self.component_logs(x);
        let lse = log_sum_exp(&logs);
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = xi / self.variance);
        for (m, l) in self.means.iter().zip(&logs) {
            let r = (l - lse).exp();
            for (o, mi) in out.iter_mut().zip(m) {
                *o -= r * mi / self.variance;
            }
        }
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn log_normalizer(&self) -> Option<f64> {
        Some(0.0)
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Option<Vec<f64>> {
        let sd = self.variance.sqrt();
        let mut out = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = self.means.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            for mi in &self.means[k] {
                out.push(mi + sd * normal(rng));
            }
        }
        Some(out)
    }
}

/// One-dimensional double well `F(x) = (x² − 1)²/4`.
///
/// `F'' = 3x² − 1` is unbounded, so the declared `L = max(1, 3R² − 1)` only
/// holds on the box `|x| ≤ R`.
#[derive(Debug, Clone)]
pub struct DoubleWell {
    radius: f64,
    log_z: f64,
}

impl DoubleWell {
    pub fn new(radius: f64) -> Result<Self> {
        positive("double-well radius", radius)?;
        let log_z = log_normalizer_quadrature_1d(|x| (x * x - 1.0).powi(2) / 4.0, -8.0, 8.0, 40_001);
        Ok(Self { radius, log_z })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl Target for DoubleWell {
    fn name(&self) -> &str {
        "double_well"
    }

    fn dim(&self) -> usize {
        1
    }

    fn potential(&self, x: &[f64]) -> f64 {
        (x[0] * x[0] - 1.0).powi(2) / 4.0
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0] * x[0] - x[0];
    }

    fn smoothness(&self) -> f64 {
        (3.0 * self.radius * self.radius - 1.0).max(1.0)
    }

    fn log_normalizer(&self) -> Option<f64> {
        Some(self.log_z)
    }
}

type PotentialFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// User supplied target: potential, gradient and a declared `L`.
pub struct CustomTarget {
    name: String,
    dim: usize,
    potential: Box<PotentialFn>,
    gradient: Box<GradientFn>,
    smoothness: f64,
    log_z: Option<f64>,
    stationary: Option<Vec<f64>>,
}

impl CustomTarget {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        smoothness: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("target dimension must be >= 1".into()));
        }
        positive("target.L", smoothness)?;
        Ok(Self {
            name: name.into(),
            dim,
            potential: Box::new(potential),
            gradient: Box::new(gradient),
            smoothness,
            log_z: None,
            stationary: None,
        })
    }

    pub fn with_log_normalizer(mut self, log_z: f64) -> Self {
        self.log_z = Some(log_z);
        self
    }

    pub fn with_stationary_point(mut self, x: Vec<f64>) -> Self {
        self.stationary = Some(x);
        self
    }
}

impl Target for CustomTarget {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, x: &[f64]) -> f64 {
        (self.potential)(x)
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn stationary_point(&self) -> Option<Vec<f64>> {
        self.stationary.clone()
    }

    fn log_normalizer(&self) -> Option<f64> {
        self.log_z
    }
}

/// Wraps a target with a larger (looser but still valid) smoothness constant.
pub struct DeclaredSmoothness<T> {
    inner: T,
    smoothness: f64,
}

impl<T: Target> DeclaredSmoothness<T> {
    pub fn new(inner: T, smoothness: f64) -> Result<Self> {
        positive("target.L", smoothness)?;
        if smoothness < inner.smoothness() {
            return Err(Error::InvalidParameter(format!(
                "declared L = {smoothness} is below the analytic bound {} for {}",
                inner.smoothness(),
                inner.name()
            )));
        }
        Ok(Self { inner, smoothness })
    }
}

impl<T: Target> Target for DeclaredSmoothness<T> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn potential(&self, x: &[f64]) -> f64 {
        self.inner.potential(x)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.grad_into(x, out)
    }
    fn smoothness(&self) -> f64 {
        self.smoothness
    }
    fn stationary_point(&self) -> Option<Vec<f64>> {
        self.inner.stationary_point()
    }
    fn log_normalizer(&self) -> Option<f64> {
        self.inner.log_normalizer()
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Option<Vec<f64>> {
        self.inner.sample(rng, n)
    }
}

impl<T: Target + ?Sized> Target for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn potential(&self, x: &[f64]) -> f64 {
        (**self).potential(x)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).grad_into(x, out)
    }
    fn smoothness(&self) -> f64 {
        (**self).smoothness()
    }
    fn stationary_point(&self) -> Option<Vec<f64>> {
        (**self).stationary_point()
    }
    fn log_normalizer(&self) -> Option<f64> {
        (**self).log_normalizer()
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Option<Vec<f64>> {
        (**self).sample(rng, n)
    }
}

/// Trapezoidal `log ∫_lo^hi exp(−F)`, shifted by `min F` for stability.
pub fn log_normalizer_quadrature_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|i| f(lo + h * i as f64)).collect();
    let fmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut s = 0.0;
    for (i, v) in vals.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        s += w * (fmin - v).exp();
    }
    (s * h).ln() - fmin
}

/// Gradient descent with step `1/L` until `‖∇F(x)‖ ≤ tol`.
pub fn find_stationary_point(
    target: &dyn Target,
    x0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    check_dim(target.dim(), x0.len())?;
    positive("tol", tol)?;
    let step = 1.0 / target.smoothness();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..=max_iters {
        target.grad_into(&x, &mut g);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient during stationary-point search"));
        }
        if norm <= tol {
            return Ok(x);
        }
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= step * gi);
    }
    target.grad_into(&x, &mut g);
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

/// Largest observed `‖∇F(x) − ∇F(y)‖ / ‖x − y‖` over random pairs in the
/// box `[−half_width, half_width]^d`. Half the probes are nearby pairs.
pub fn verify_smoothness(target: &dyn Target, n_probes: usize, seed: u64, half_width: f64) -> f64 {
    let d = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
    let mut best: f64 = 0.0;
    for probe in 0..n_probes {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect();
        let y: Vec<f64> = if probe % 2 == 0 {
            (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect()
        } else {
            x.iter()
                .map(|v| (v + 1e-3 * rng.random_range(-1.0..1.0)).clamp(-half_width, half_width))
                .collect()
        };
        let dist = crate::kernels::sq_dist(&x, &y).sqrt();
        if dist == 0.0 {
            continue;
        }
        target.grad_into(&x, &mut gx);
        target.grad_into(&y, &mut gy);
        best = best.max(crate::kernels::sq_dist(&gx, &gy).sqrt() / dist);
    }
    best
}
