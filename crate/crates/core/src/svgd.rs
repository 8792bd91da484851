//! Stein variational gradient descent with pushforward log-density tracking.
//!
//! One step maps every particle through `T(x) = x − γ h_μ(x)` where
//!
//! `h_μ(x) = (1/N) Σⱼ [k(x, xⱼ) ∇F(xⱼ) − ∇_y k(x, xⱼ)]`
//!
//! is evaluated against the pre-step ensemble (synchronous update). When the
//! ensemble carries `log μ₀(x₀ⁱ)`, each entry is moved along with its particle
//! and decremented by `log|det(I − γ J_h(x))|`, so it stays equal to the log
//! density of the pushforward measure at the particle.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_dim, Error, Result};
use crate::kernels::Kernel;
use crate::ksd::{gradients, SteinKernel};
use crate::metrics;
use crate::targets::Target;
use crate::theory::TheoryConstants;

/// Particle positions (row-major, `N × d`) with optional transported log density.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    positions: Vec<f64>,
    dim: usize,
    logdens: Option<Vec<f64>>,
    iter: usize,
}

impl Ensemble {
    pub fn new(positions: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("ensemble dimension must be >= 1".into()));
        }
        if !positions.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates do not split into rows of {dim}",
                positions.len()
            )));
        }
        if !positions.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ensemble positions"));
        }
        Ok(Self { positions, dim, logdens: None, iter: 0 })
    }

    /// Attaches `log μ₀` evaluated at each particle.
    pub fn with_logdens(mut self, logdens: Vec<f64>) -> Result<Self> {
        check_dim(self.len(), logdens.len())?;
        if !logdens.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("log densities"));
        }
        self.logdens = Some(logdens);
        Ok(self)
    }

    pub fn without_logdens(mut self) -> Self {
        self.logdens = None;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter_index(&self) -> usize {
        self.iter
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks(self.dim)
    }

    pub fn logdens(&self) -> Option<&[f64]> {
        self.logdens.as_deref()
    }
}

/// How `μ₀` is drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// i.i.d. `N(mean, std² I)`.
    Gaussian { mean: Vec<f64>, std: f64 },
    /// `N(mean, std² I)` by Latin-hypercube inverse-CDF sampling: each
    /// coordinate's marginal sample is stratified into `N` equal-mass cells.
    /// The joint density is still the Gaussian one, so `logdens` is exact.
    Stratified { mean: Vec<f64>, std: f64 },
    /// Exact draws from the target.
    Target,
    /// Explicit particles.
    Points(Ensemble),
}

impl InitSpec {
    /// `μ₀ = N(x*, I/L)`.
    pub fn gaussian_at(x_star: Vec<f64>, l: f64) -> Self {
        InitSpec::Gaussian { mean: x_star, std: 1.0 / l.sqrt() }
    }

    pub fn initialize(&self, target: &dyn Target, n: usize, rng: &mut ChaCha8Rng) -> Result<Ensemble> {
        let d = target.dim();
        match self {
            InitSpec::Gaussian { mean, std } | InitSpec::Stratified { mean, std } => {
                check_dim(d, mean.len())?;
                crate::error::positive("init std", *std)?;
                let mut pos = vec![0.0; n * d];
                if matches!(self, InitSpec::Gaussian { .. }) {
                    for (i, v) in pos.iter_mut().enumerate() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = mean[i % d] + std * z;
                    }
                } else {
                    let unit = Normal::standard();
                    let mut cells: Vec<usize> = (0..n).collect();
                    for a in 0..d {
                        cells.shuffle(rng);
                        for (i, &c) in cells.iter().enumerate() {
                            let u = (c as f64 + rng.random::<f64>()) / n as f64;
                            let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                            pos[i * d + a] = mean[a] + std * unit.inverse_cdf(u);
                        }
                    }
                }
                let logdens = pos
                    .chunks(d)
                    .map(|x| gaussian_log_density(x, mean, *std))
                    .collect();
                Ensemble::new(pos, d)?.with_logdens(logdens)
            }
            InitSpec::Target => {
                let pos = target.sample(rng, n).ok_or(Error::MissingSampler)?;
                let e = Ensemble::new(pos, d)?;
                match target.log_normalizer() {
                    Some(lz) => {
                        let logdens = e.points().map(|x| -target.potential(x) - lz).collect();
                        e.with_logdens(logdens)
                    }
                    None => Ok(e),
                }
            }
            InitSpec::Points(e) => {
                check_dim(d, e.dim())?;
                Ok(e.clone())
            }
        }
    }
}

fn gaussian_log_density(x: &[f64], mean: &[f64], std: f64) -> f64 {
    let d = x.len() as f64;
    let q: f64 = x.iter().zip(mean).map(|(a, m)| (a - m) * (a - m)).sum();
    -0.5 * q / (std * std) - d * std.ln() - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
}

/// `h_μ` and its Jacobian for a fixed ensemble with cached gradients.
struct Field<'a> {
    kernel: &'a Kernel,
    positions: &'a [f64],
    grads: &'a [f64],
    dim: usize,
}

impl Field<'_> {
    fn n(&self) -> usize {
        self.positions.len() / self.dim
    }

    fn h(&self, x: &[f64], h: &mut [f64]) {
        let d = self.dim;
        h.fill(0.0);
        for (y, g) in self.positions.chunks(d).zip(self.grads.chunks(d)) {
            let r2 = crate::kernels::sq_dist(x, y);
            let p = self.kernel.profile(r2);
            for a in 0..d {
                h[a] += p.value * g[a] + 2.0 * p.d1 * (x[a] - y[a]);
            }
        }
        let inv = 1.0 / self.n() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
    }

    /// Writes `h(x)` and the row-major Jacobian `J[a][b] = ∂h_a/∂x_b`.
    fn h_and_jacobian(&self, x: &[f64], h: &mut [f64], jac: &mut [f64]) {
        let d = self.dim;
        h.fill(0.0);
        jac.fill(0.0);
        let mut delta = vec![0.0; d];
        for (y, g) in self.positions.chunks(d).zip(self.grads.chunks(d)) {
            let mut r2 = 0.0;
            for a in 0..d {
                delta[a] = x[a] - y[a];
                r2 += delta[a] * delta[a];
            }
            let p = self.kernel.profile(r2);
            for a in 0..d {
                h[a] += p.value * g[a] + 2.0 * p.d1 * delta[a];
                for b in 0..d {
                    let diag = if a == b { 2.0 * p.d1 } else { 0.0 };
                    jac[a * d + b] += 2.0 * p.d1 * g[a] * delta[b] + diag + 4.0 * p.d2 * delta[a] * delta[b];
                }
            }
        }
        let inv = 1.0 / self.n() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        jac.iter_mut().for_each(|v| *v *= inv);
    }
}

fn check_inputs(ensemble: &Ensemble, target: &dyn Target, kernel: &Kernel) -> Result<()> {
    check_dim(target.dim(), ensemble.dim())?;
    check_dim(kernel.dim(), ensemble.dim())?;
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    Ok(())
}

/// `h_μ(x)` for the empirical measure of `ensemble`.
pub fn h_mu(ensemble: &Ensemble, target: &dyn Target, kernel: &Kernel, x: &[f64]) -> Result<Vec<f64>> {
    check_inputs(ensemble, target, kernel)?;
    check_dim(ensemble.dim(), x.len())?;
    let grads = gradients(target, ensemble)?;
    let field = Field { kernel, positions: ensemble.positions(), grads: &grads, dim: ensemble.dim() };
    let mut h = vec![0.0; x.len()];
    field.h(x, &mut h);
    Ok(h)
}

/// Row-major `d×d` Jacobian of `h_μ` at `x`.
pub fn jacobian_h(ensemble: &Ensemble, target: &dyn Target, kernel: &Kernel, x: &[f64]) -> Result<Vec<f64>> {
    check_inputs(ensemble, target, kernel)?;
    check_dim(ensemble.dim(), x.len())?;
    let d = x.len();
    let grads = gradients(target, ensemble)?;
    let field = Field { kernel, positions: ensemble.positions(), grads: &grads, dim: d };
    let (mut h, mut jac) = (vec![0.0; d], vec![0.0; d * d]);
    field.h_and_jacobian(x, &mut h, &mut jac);
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub gamma: f64,
    /// `‖h_μ‖_H` of the pre-step ensemble.
    pub h_norm: f64,
    /// `max_i ‖x_i' − x_i‖`.
    pub max_displacement: f64,
    /// `max_i |log det(I − γ J_h(x_i))|`.
    pub logdet_max: f64,
    /// `γ B ‖h_μ‖_H`; it bounds `γ‖J_h(x)‖_op` at every `x`.
    pub margin: f64,
}

impl StepReport {
    pub fn ksd_squared(&self) -> f64 {
        self.h_norm * self.h_norm
    }

    /// Whether `γ B ‖h_μ‖_H ≤ (α − 1)/α`.
    pub fn within_alpha_regime(&self, alpha: f64) -> bool {
        self.margin <= (alpha - 1.0) / alpha
    }
}

/// One synchronous update. Rejects the step when `γ B ‖h_μ‖_H ≥ 1`.
pub fn step(ensemble: &Ensemble, target: &dyn Target, kernel: &Kernel, gamma: f64) -> Result<(Ensemble, StepReport)> {
    check_inputs(ensemble, target, kernel)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let d = ensemble.dim();
    let stein = SteinKernel::new(target, kernel)?;
    let scored = stein.score(ensemble)?;
    let grads = scored.all_grads();
    let h_norm = stein.self_sum(&scored).max(0.0).sqrt();
    let margin = gamma * kernel.bound_b() * h_norm;
    if margin >= 1.0 {
        return Err(Error::StepTooLarge { margin });
    }
    let field = Field { kernel, positions: ensemble.positions(), grads, dim: d };

    let moves: Vec<(Vec<f64>, f64)> = ensemble
        .positions()
        .par_chunks(d)
        .map(|x| {
            let (mut h, mut jac) = (vec![0.0; d], vec![0.0; d * d]);
            field.h_and_jacobian(x, &mut h, &mut jac);
            let mut m = DMatrix::<f64>::identity(d, d);
            for a in 0..d {
                for b in 0..d {
                    m[(a, b)] -= gamma * jac[a * d + b];
                }
            }
            let det = if d == 1 { m[(0, 0)] } else { m.lu().determinant() };
            let new_x: Vec<f64> = x.iter().zip(&h).map(|(xi, hi)| xi - gamma * hi).collect();
            (new_x, det)
        })
        .collect();

    let mut positions = Vec::with_capacity(ensemble.positions.len());
    let mut logdets = Vec::with_capacity(moves.len());
    let mut max_displacement: f64 = 0.0;
    for (i, (x, det)) in moves.into_iter().enumerate() {
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularJacobian { particle: i });
        }
        max_displacement = max_displacement.max(crate::kernels::sq_dist(&x, ensemble.point(i)).sqrt());
        positions.extend_from_slice(&x);
        logdets.push(det.abs().ln());
    }
    if !positions.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("updated positions"));
    }
    let logdet_max = logdets.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let logdens = ensemble
        .logdens
        .as_ref()
        .map(|ld| ld.iter().zip(&logdets).map(|(l, g)| l - g).collect());
    let next = Ensemble { positions, dim: d, logdens, iter: ensemble.iter + 1 };
    Ok((next, StepReport { gamma, h_norm, max_displacement, logdet_max, margin }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum GammaRule {
    Fixed(f64),
    /// The minimum of the theory ceilings carried by the constants.
    Theorem1(Box<TheoryConstants>),
}

impl GammaRule {
    pub fn gamma(&self) -> f64 {
        match self {
            GammaRule::Fixed(g) => *g,
            GammaRule::Theorem1(c) => c.gamma,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub n_particles: usize,
    pub n_iters: usize,
    pub record_every: usize,
    pub gamma: GammaRule,
    pub init: InitSpec,
    pub track_logdens: bool,
    pub seed: u64,
    /// Exact target draws used for W1 diagnostics; `0` disables them.
    pub reference_size: usize,
    /// Keep every iterate `μ_0 … μ_{n_iters}`.
    pub keep_snapshots: bool,
}

impl RunSpec {
    pub fn new(n_particles: usize, n_iters: usize, gamma: GammaRule, init: InitSpec, seed: u64) -> Self {
        Self {
            n_particles,
            n_iters,
            record_every: 1,
            gamma,
            init,
            track_logdens: true,
            seed,
            reference_size: 0,
            keep_snapshots: false,
        }
    }
}

/// Diagnostics of iterate `μ_iter` together with the step taken from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub gamma: f64,
    pub ksd2: f64,
    pub kl: Option<f64>,
    pub kl_stderr: Option<f64>,
    pub w1: Option<f64>,
    pub w1_stderr: Option<f64>,
    pub h_norm: f64,
    pub logdet_max: f64,
    pub margin: f64,
    pub wall_time_ms: f64,
}

pub struct StepEvent<'a> {
    pub iter: usize,
    pub before: &'a Ensemble,
    pub after: &'a Ensemble,
    pub report: &'a StepReport,
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<TrajectoryRecord>,
    pub snapshots: Vec<Ensemble>,
    pub final_ensemble: Ensemble,
    pub gamma: f64,
    /// Set when the run stopped early; `records` then hold the partial trajectory.
    pub abort: Option<Error>,
}

/// RNG stream for `μ₀`; the W1 reference uses stream 1 of the same seed.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn reference_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn run(target: &dyn Target, kernel: &Kernel, spec: &RunSpec) -> Result<RunOutput> {
    run_with_observer(target, kernel, spec, |_| {})
}

/// Iterates [`step`] `n_iters` times, calling `observer` after every step.
pub fn run_with_observer(
    target: &dyn Target,
    kernel: &Kernel,
    spec: &RunSpec,
    mut observer: impl FnMut(StepEvent<'_>),
) -> Result<RunOutput> {
    if spec.n_iters == 0 {
        return Err(Error::InvalidParameter("n_iters must be >= 1".into()));
    }
    if spec.record_every == 0 {
        return Err(Error::InvalidParameter("record_every must be >= 1".into()));
    }
    if spec.n_particles == 0 {
        return Err(Error::Empty("ensemble"));
    }
    let gamma = spec.gamma.gamma();
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    let mut ensemble = spec.init.initialize(target, spec.n_particles, &mut init_rng(spec.seed))?;
    if !spec.track_logdens {
        ensemble = ensemble.without_logdens();
    }
    let reference = if spec.reference_size > 0 {
        target.sample(&mut reference_rng(spec.seed), spec.reference_size)
    } else {
        None
    };
    let kl_available = ensemble.logdens().is_some() && target.log_normalizer().is_some();

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let start = Instant::now();
    for n in 0..spec.n_iters {
        if spec.keep_snapshots {
            snapshots.push(ensemble.clone());
        }
        let (next, report) = match step(&ensemble, target, kernel, gamma) {
            Ok(r) => r,
            Err(e) => {
                return Ok(RunOutput { records, snapshots, final_ensemble: ensemble, gamma, abort: Some(e) });
            }
        };
        if n % spec.record_every == 0 {
            let (kl, kl_stderr) = if kl_available {
                let est = metrics::kl_estimate(&ensemble, target)?;
                (Some(est.value), Some(est.stderr))
            } else {
                (None, None)
            };
            let (w1, w1_stderr) = match &reference {
                Some(r) => {
                    let est = metrics::w1_to_reference(ensemble.positions(), r, ensemble.dim(), spec.seed ^ n as u64)?;
                    (Some(est.value), est.stderr)
                }
                None => (None, None),
            };
            records.push(TrajectoryRecord {
                iter: n,
                gamma,
                ksd2: report.ksd_squared(),
                kl,
                kl_stderr,
                w1,
                w1_stderr,
                h_norm: report.h_norm,
                logdet_max: report.logdet_max,
                margin: report.margin,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        observer(StepEvent { iter: n, before: &ensemble, after: &next, report: &report });
        ensemble = next;
    }
    if spec.keep_snapshots {
        snapshots.push(ensemble.clone());
    }
    Ok(RunOutput { records, snapshots, final_ensemble: ensemble, gamma, abort: None })
}
