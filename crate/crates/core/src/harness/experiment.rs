//! Turns a parsed config into targets, kernels, initial ensembles and the
//! theory constant bundle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{
    ExperimentConfig, GammaSetting, InitKind, KernelConfig, KernelFamilyName, LambdaSource, TargetConfig,
    TargetSpec,
};
use crate::error::{Error, Result};
use crate::kernels::{BandwidthRule, Kernel};
use crate::metrics::{first_abs_moment, t1_lambda_upper, T1Estimate, T1Grid};
use crate::svgd::{init_rng, Ensemble, GammaRule, InitSpec};
use crate::targets::{
    find_stationary_point, DeclaredSmoothness, DoubleWell, Gaussian, GaussianMixture, Target, STATIONARY_MAX_ITERS,
};
use crate::theory::{cor3_constants, TheoryConstants};

const STATIONARY_TOL: f64 = 1e-10;

pub fn build_target(cfg: &TargetConfig) -> Result<Box<dyn Target>> {
    let inner: Box<dyn Target> = match &cfg.spec {
        TargetSpec::Gaussian { dim } => Box::new(Gaussian::standard(*dim)?),
        TargetSpec::Anisotropic { mean, precision } => Box::new(Gaussian::new(mean.clone(), precision.clone())?),
        TargetSpec::Mixture { means, weights, variance } => {
            Box::new(GaussianMixture::new(means.clone(), weights.clone(), *variance)?)
        }
        TargetSpec::DoubleWell { radius } => Box::new(DoubleWell::new(*radius)?),
    };
    match cfg.l {
        Some(l) => Ok(Box::new(DeclaredSmoothness::new(inner, l)?)),
        None => Ok(inner),
    }
}

/// The T1 constant when it is known in closed form: `min precision` for Gaussians.
pub fn analytic_lambda(spec: &TargetSpec) -> Option<f64> {
    match spec {
        TargetSpec::Gaussian { .. } => Some(1.0),
        TargetSpec::Anisotropic { precision, .. } => precision.iter().copied().reduce(f64::min),
        _ => None,
    }
}

/// Builds the kernel; the median rule looks at the initial particles.
pub fn build_kernel(cfg: &KernelConfig, dim: usize, init: &Ensemble) -> Result<Kernel> {
    match (cfg.family, cfg.bandwidth_rule) {
        (KernelFamilyName::Imq, BandwidthRule::MedianInit) => {
            Err(Error::Config("kernel.bandwidth_rule = median_init applies to the gaussian family only".into()))
        }
        (KernelFamilyName::Imq, BandwidthRule::Fixed) => Kernel::inverse_multiquadric(cfg.c, dim),
        (KernelFamilyName::Gaussian, BandwidthRule::MedianInit) => Kernel::gaussian_median(init.positions(), dim),
        (KernelFamilyName::Gaussian, BandwidthRule::Fixed) => match cfg.sigma {
            Some(s) => Kernel::gaussian(s, dim),
            None => Kernel::gaussian_default(dim),
        },
    }
}

/// Everything the step-size theory needs, with where each input came from.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryInputs {
    pub x_star: Vec<f64>,
    pub lambda_source: &'static str,
    pub t1: Option<T1Estimate>,
    pub grad_f0_norm: f64,
    /// Monte Carlo estimate of `∫‖x‖dπ`, when the target can be sampled.
    pub first_moment_pi: Option<f64>,
    pub constants: TheoryConstants,
}

/// RNG for the exact draws behind `λ̂` and `∫‖x‖dπ`.
pub fn theory_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

pub fn stationary_point(target: &dyn Target, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    match (x0, target.stationary_point()) {
        (None, Some(x)) => Ok(x),
        (x0, _) => {
            let start = x0.map_or_else(|| vec![0.0; target.dim()], <[f64]>::to_vec);
            find_stationary_point(target, &start, STATIONARY_TOL, STATIONARY_MAX_ITERS)
        }
    }
}

pub fn theory_inputs(cfg: &ExperimentConfig, target: &dyn Target, kernel: &Kernel, seed: u64) -> Result<TheoryInputs> {
    let d = target.dim();
    let x_star = stationary_point(target, cfg.target.x0.as_deref())?;
    let log_z = target.log_normalizer().ok_or(Error::MissingLogNormalizer)?;
    let f_at_xstar = target.potential(&x_star) + log_z;

    let samples = if cfg.theory.samples > 0 { target.sample(&mut theory_rng(seed), cfg.theory.samples) } else { None };
    let (lambda, lambda_source, t1) = match cfg.theory.lambda_source {
        LambdaSource::Analytic => {
            let l = cfg.theory.lambda.or_else(|| analytic_lambda(&cfg.target.spec)).ok_or_else(|| {
                Error::Config("theory.lambda_source = analytic needs theory.lambda for this target".into())
            })?;
            (l, if cfg.theory.lambda.is_some() { "configured" } else { "analytic" }, None)
        }
        LambdaSource::Estimated => {
            let s = samples.as_deref().ok_or_else(|| {
                Error::Config("theory.lambda_source = estimated needs an exact sampler and theory.samples > 0".into())
            })?;
            let est = t1_lambda_upper(s, d, &T1Grid::default())?;
            (est.lambda_hat, "estimated", Some(est))
        }
    };
    let grad_f0_norm = target.grad(&vec![0.0; d])?.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut constants =
        cor3_constants(kernel.bound_b(), target.smoothness(), lambda, f_at_xstar, d, cfg.theory.alpha)?;
    let first_moment_pi = match &samples {
        Some(s) => Some(first_abs_moment(s, d, &vec![0.0; d])?),
        None => None,
    };
    if let Some(m) = first_moment_pi {
        constants = constants.with_pi_ceiling(grad_f0_norm, m)?;
    }
    Ok(TheoryInputs { x_star, lambda_source, t1, grad_f0_norm, first_moment_pi, constants })
}

pub fn init_spec(kind: InitKind, x_star: &[f64], l: f64) -> InitSpec {
    let std = 1.0 / l.sqrt();
    match kind {
        InitKind::Gaussian => InitSpec::Gaussian { mean: x_star.to_vec(), std },
        InitKind::Stratified => InitSpec::Stratified { mean: x_star.to_vec(), std },
        InitKind::Target => InitSpec::Target,
    }
}

/// A fully resolved experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub target: Box<dyn Target>,
    pub kernel: Kernel,
    pub initial: Ensemble,
    /// Present when the theory bundle could be computed.
    pub theory: Option<TheoryInputs>,
    pub gamma: GammaRule,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let seed = config.require_seed()?;
        let target = build_target(&config.target)?;
        let d = target.dim();
        let x_star = stationary_point(target.as_ref(), config.target.x0.as_deref())?;
        let spec = init_spec(config.svgd.init, &x_star, target.smoothness());
        let mut initial = spec.initialize(target.as_ref(), config.svgd.n_particles, &mut init_rng(seed))?;
        if !config.svgd.track_logdens {
            initial = initial.without_logdens();
        }
        let kernel = build_kernel(&config.kernel, d, &initial)?;
        let (theory, gamma) = match config.svgd.gamma {
            GammaSetting::AutoTheorem1 => {
                let t = theory_inputs(config, target.as_ref(), &kernel, seed)?;
                let rule = GammaRule::Theorem1(Box::new(t.constants.clone()));
                (Some(t), rule)
            }
            GammaSetting::Fixed(g) => {
                let t = if target.log_normalizer().is_some() {
                    theory_inputs(config, target.as_ref(), &kernel, seed).ok()
                } else {
                    None
                };
                (t, GammaRule::Fixed(g))
            }
        };
        Ok(Self { config: config.clone(), seed, target, kernel, initial, theory, gamma })
    }
}
