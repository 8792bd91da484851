//! The six subcommands. Each returns a process exit code; errors map through
//! [`exit_code_for`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, GammaSetting, TargetSpec};
use super::experiment::{build_kernel, build_target, theory_inputs, Experiment, TheoryInputs};
use super::io::{read_points, trajectory_csv, trajectory_svg};
use crate::error::{Error, Result};
use crate::ksd::{ksd_squared, MixtureKsd};
use crate::metrics::{kl_estimate, t1_lambda_upper, w1_to_reference, T1Grid};
use crate::sum::mean_and_stderr;
use crate::svgd::{reference_rng, run, run_with_observer, Ensemble, InitSpec, RunOutput, RunSpec};
use crate::targets::Target;
use crate::theory::{cor3_constants, rate_bound, TheoryConstants};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Descent is asserted up to this many Monte Carlo standard errors.
pub const DESCENT_SIGMAS: f64 = 3.0;
/// Independent exact-sample ensembles averaged for the noise floor.
pub const FLOOR_REPLICATES: usize = 5;

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch { .. }
        | Error::Empty(_)
        | Error::MissingLogDensity
        | Error::MissingLogNormalizer
        | Error::MissingSampler => EXIT_CONFIG,
        _ => EXIT_ABORT,
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn run_spec(exp: &Experiment, reference_size: usize) -> RunSpec {
    let c = &exp.config.svgd;
    let mut spec = RunSpec::new(c.n_particles, c.n_iters, exp.gamma.clone(), InitSpec::Points(exp.initial.clone()), exp.seed);
    spec.record_every = c.record_every;
    spec.track_logdens = c.track_logdens;
    spec.reference_size = reference_size;
    spec
}

/// `run`: writes `trajectory.csv` (and `trajectory.svg` when enabled).
/// An aborted run still writes the rows recorded so far and exits 3.
pub fn cmd_run(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<i32> {
    let exp = Experiment::prepare(cfg)?;
    let reference = if exp.target.sample(&mut reference_rng(exp.seed), 1).is_some() { cfg.metrics.w1_reference } else { 0 };
    let output = run(exp.target.as_ref(), &exp.kernel, &run_spec(&exp, reference))?;
    let dir = output_dir(cfg);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(&output.records))?;
    if cfg.metrics.svg {
        let title = format!("SVGD on {} (N = {})", exp.target.name(), cfg.svgd.n_particles);
        fs::write(dir.join("trajectory.svg"), trajectory_svg(&title, &output.records))?;
    }
    writeln!(out, "target={} dim={} gamma={}", exp.target.name(), exp.target.dim(), output.gamma)?;
    writeln!(out, "records={} csv={}", output.records.len(), dir.join("trajectory.csv").display())?;
    match output.abort {
        Some(e) => {
            writeln!(out, "aborted: {e}")?;
            Ok(EXIT_ABORT)
        }
        None => Ok(EXIT_OK),
    }
}

/// One inequality of the verification suite. `pass == None` means the
/// check was skipped (not applicable or below the noise floor).
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: Option<bool>,
    pub slack: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, slack: f64, detail: String) -> Self {
        Self { name: name.into(), pass: Some(pass), slack, detail }
    }

    fn skipped(name: &str, detail: String) -> Self {
        Self { name: name.into(), pass: None, slack: f64::NAN, detail }
    }

    pub fn line(&self) -> String {
        let tag = match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        format!("{tag} {} slack={:.6e} {}", self.name, self.slack, self.detail)
    }
}

/// KSD² of exact target draws at the configured particle count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFloor {
    pub ksd2: f64,
    pub ksd2_stderr: f64,
    /// W1 between `N` exact draws and the reference sample.
    pub w1: Option<f64>,
}

pub fn noise_floor(target: &dyn Target, kernel: &crate::Kernel, n: usize, reference: Option<&[f64]>, seed: u64) -> Result<Option<NoiseFloor>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let d = target.dim();
    let mut ksd = Vec::with_capacity(FLOOR_REPLICATES);
    let mut w1 = Vec::with_capacity(FLOOR_REPLICATES);
    for _ in 0..FLOOR_REPLICATES {
        let Some(s) = target.sample(&mut rng, n) else { return Ok(None) };
        if let Some(r) = reference {
            w1.push(w1_to_reference(&s, r, d, seed)?.value);
        }
        ksd.push(ksd_squared(&Ensemble::new(s, d)?, target, kernel)?);
    }
    let (ksd2, ksd2_stderr) = mean_and_stderr(&ksd);
    let w1 = (!w1.is_empty()).then(|| mean_and_stderr(&w1).0);
    Ok(Some(NoiseFloor { ksd2, ksd2_stderr, w1 }))
}

#[derive(Debug)]
pub struct VerifyReport {
    pub gamma: f64,
    pub theory: TheoryInputs,
    pub floor: Option<NoiseFloor>,
    pub checks: Vec<Check>,
    /// Per recorded step: `(iter, measured decrease, stderr, guaranteed decrease)`.
    pub descent: Vec<(usize, f64, f64, f64)>,
    /// `(n, mixture KSD², bound)` at the rate checkpoints.
    pub rate: Vec<(usize, f64, f64)>,
    /// `(iter, W1 to the reference)` at the W1 checkpoints.
    pub w1: Vec<(usize, f64)>,
    pub output: RunOutput,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        match &self.output.abort {
            Some(Error::StepTooLarge { .. }) | None => {
                if self.checks.iter().any(|c| c.pass == Some(false)) {
                    EXIT_VIOLATION
                } else {
                    EXIT_OK
                }
            }
            Some(_) => EXIT_ABORT,
        }
    }
}

/// Runs the configured experiment and checks the descent inequality at every
/// recorded step, the averaged-iterate rate at the checkpoints, the step-size
/// ceilings, the diffeomorphism margin and W1 decrease.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let exp = Experiment::prepare(cfg)?;
    let target = exp.target.as_ref();
    let d = target.dim();
    if d > 2 {
        return Err(Error::Config(format!("verify needs a logdens-capable target (d <= 2), got d = {d}")));
    }
    if !cfg.svgd.track_logdens {
        return Err(Error::Config("verify needs svgd.track_logdens = true".into()));
    }
    let theory = match exp.theory.clone() {
        Some(t) => t,
        None => theory_inputs(cfg, target, &exp.kernel, exp.seed)?,
    };
    let consts = &theory.constants;
    let gamma = exp.gamma.gamma();
    let alpha = cfg.theory.alpha;
    let n_iters = cfg.svgd.n_iters;

    let reference = if cfg.metrics.w1_reference > 0 {
        target.sample(&mut reference_rng(exp.seed), cfg.metrics.w1_reference)
    } else {
        None
    };
    let floor = noise_floor(target, &exp.kernel, cfg.svgd.n_particles, reference.as_deref(), exp.seed)?;

    let rate_points: Vec<usize> = cfg.verify.rate_checkpoints.iter().copied().filter(|&n| n >= 1 && n <= n_iters).collect();
    let last_rate = rate_points.iter().copied().max().unwrap_or(0);
    let w1_points: Vec<usize> = cfg.verify.w1_checkpoints.iter().copied().filter(|&n| n <= n_iters).collect();

    let mut mixture = MixtureKsd::new(target, &exp.kernel)?;
    let mut descent = Vec::new();
    let mut rate = Vec::new();
    let mut w1 = Vec::new();
    let mut worst_margin = 0.0f64;
    let mut failure: Option<Error> = None;
    let w1_at = |e: &Ensemble, n: usize| -> Result<Option<(usize, f64)>> {
        match &reference {
            Some(r) if w1_points.contains(&n) => Ok(Some((n, w1_to_reference(e.positions(), r, d, exp.seed)?.value))),
            _ => Ok(None),
        }
    };

    let spec = run_spec(&exp, 0);
    let output = run_with_observer(target, &exp.kernel, &spec, |ev| {
        if failure.is_some() {
            return;
        }
        let mut body = || -> Result<()> {
            worst_margin = worst_margin.max(ev.report.margin);
            if ev.iter % cfg.svgd.record_every == 0 {
                let (before, after) = (ev.before.logdens().unwrap_or(&[]), ev.after.logdens().unwrap_or(&[]));
                let terms: Vec<f64> = (0..ev.before.len())
                    .map(|i| {
                        (before[i] + target.potential(ev.before.point(i)))
                            - (after[i] + target.potential(ev.after.point(i)))
                    })
                    .collect();
                let (dec, se) = mean_and_stderr(&terms);
                let bound = consts.descent_coefficient(ev.report.gamma) * ev.report.ksd_squared();
                descent.push((ev.iter, dec, se, bound));
            }
            if ev.iter < last_rate {
                let value = mixture.push(ev.before)?;
                let n = ev.iter + 1;
                if rate_points.contains(&n) {
                    rate.push((n, value, rate_bound(consts.kl0_bound, ev.report.gamma, n)?));
                }
            }
            if let Some(p) = w1_at(ev.before, ev.iter)? {
                w1.push(p);
            }
            Ok(())
        };
        if let Err(e) = body() {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if output.abort.is_none() {
        if let Some(p) = w1_at(&output.final_ensemble, n_iters)? {
            w1.push(p);
        }
    }

    let mut checks = Vec::new();
    let ceiling = consts.gamma;
    checks.push(Check::new(
        "step-size ceiling",
        gamma <= ceiling,
        ceiling - gamma,
        format!(
            "gamma={gamma:.6e} ceiling={ceiling:.6e} (descent {:.6e}, mu0 {:.6e}, pi {})",
            consts.gamma_ceiling_descent,
            consts.gamma_ceiling_mu0,
            consts.gamma_ceiling_pi.map_or("n/a".into(), |c| format!("{c:.6e}"))
        ),
    ));
    let margin_limit = (alpha - 1.0) / alpha;
    match &output.abort {
        Some(Error::StepTooLarge { margin }) => checks.push(Check::new(
            "diffeomorphism margin",
            false,
            margin_limit - margin,
            format!("step rejected at iteration {}: margin={margin:.6e} >= 1", output.final_ensemble.iter_index()),
        )),
        _ => checks.push(Check::new(
            "diffeomorphism margin",
            worst_margin <= margin_limit,
            margin_limit - worst_margin,
            format!("max gamma*B*|h|_H={worst_margin:.6e} limit (alpha-1)/alpha={margin_limit:.6e}"),
        )),
    }
    if descent.is_empty() {
        checks.push(Check::skipped("descent", "no completed steps".into()));
    } else {
        let (mut worst, mut at) = (f64::INFINITY, 0);
        for &(iter, dec, se, bound) in &descent {
            let slack = dec - bound + DESCENT_SIGMAS * se;
            if slack < worst {
                worst = slack;
                at = iter;
            }
        }
        checks.push(Check::new(
            "descent",
            worst >= 0.0,
            worst,
            format!("{} steps, KL decrease >= gamma(1-gamma*K/2)*KSD^2 - {DESCENT_SIGMAS}se, tightest at iter {at}", descent.len()),
        ));
    }
    for &(n, value, bound) in &rate {
        checks.push(Check::new(
            &format!("rate n={n}"),
            value <= bound,
            bound - value,
            format!("mixture KSD^2={value:.6e} bound 2*KL0/(n*gamma)={bound:.6e}"),
        ));
    }
    if rate.is_empty() && output.abort.is_none() {
        checks.push(Check::skipped("rate", "no checkpoint within n_iters".into()));
    }
    checks.push(w1_check(&w1, &w1_points, floor.and_then(|f| f.w1)));
    if let (Some(f), Some(last)) = (floor, output.records.last()) {
        let detail = format!("final KSD^2={:.6e} floor={:.6e}+-{:.1e}", last.ksd2, f.ksd2, f.ksd2_stderr);
        let first = output.records[0].ksd2;
        if first <= f.ksd2 + 2.0 * f.ksd2_stderr {
            checks.push(Check::skipped("ksd decrease", format!("{detail}; initial value already at the floor")));
        } else {
            checks.push(Check::new("ksd decrease", last.ksd2 < first, first - last.ksd2, detail));
        }
    }
    Ok(VerifyReport { gamma, theory, floor, checks, descent, rate, w1, output })
}

fn w1_check(w1: &[(usize, f64)], wanted: &[usize], floor: Option<f64>) -> Check {
    const NAME: &str = "w1 decrease";
    if wanted.len() < 2 || w1.len() != wanted.len() {
        return Check::skipped(NAME, "W1 checkpoints unavailable".into());
    }
    let values: Vec<String> = w1.iter().map(|(n, v)| format!("{n}:{v:.4e}")).collect();
    let (first, last) = (w1[0].1, w1[w1.len() - 1].1);
    if let Some(f) = floor {
        if first / 2.0 <= f {
            return Check::skipped(NAME, format!("[{}] half the initial W1 is below the floor {f:.4e}", values.join(" ")));
        }
    }
    let strictly = w1.windows(2).all(|p| p[1].1 < p[0].1);
    let slack = (first / 2.0 - last).min(w1.windows(2).map(|p| p[0].1 - p[1].1).fold(f64::INFINITY, f64::min));
    Check::new(NAME, strictly && last < first / 2.0, slack, format!("[{}] strictly decreasing, final < initial/2", values.join(" ")))
}

pub fn cmd_verify(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<i32> {
    let report = verify(cfg)?;
    let c = &report.theory.constants;
    writeln!(out, "gamma={:.6e} lambda={:.6e} ({}) kl0_bound={:.6e} K={:.6e}", report.gamma, c.lambda, report.theory.lambda_source, c.kl0_bound, c.k_taylor)?;
    match report.floor {
        Some(f) => writeln!(out, "noise floor: KSD^2={:.6e} +- {:.1e} at N={}", f.ksd2, f.ksd2_stderr, cfg.svgd.n_particles)?,
        None => writeln!(out, "noise floor: unavailable (no exact sampler); convergence claims not asserted")?,
    }
    for check in &report.checks {
        writeln!(out, "{}", check.line())?;
    }
    if let Some(e) = &report.output.abort {
        writeln!(out, "run stopped early: {e}")?;
    }
    Ok(report.exit_code())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub d: usize,
    pub gamma: f64,
    /// First `n` with mixture KSD² of `μ₀ … μ_{n−1}` at most `ε`.
    pub n_to_eps: Option<u64>,
    pub n_predicted: u64,
    pub constants: TheoryConstants,
}

fn spec_in_dim(spec: &TargetSpec, d: usize) -> Result<TargetSpec> {
    match spec {
        TargetSpec::Gaussian { .. } => Ok(TargetSpec::Gaussian { dim: d }),
        TargetSpec::Mixture { means, variance, .. } if means.len() == 2 => {
            let a = means[0].iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut m = vec![0.0; d];
            m[0] = a;
            let neg = m.iter().map(|v| -v).collect();
            Ok(TargetSpec::Mixture { means: vec![m, neg], weights: vec![0.5, 0.5], variance: *variance })
        }
        _ => Err(Error::Config("sweep supports gaussian and two-component mixture targets".into())),
    }
}

/// Iterations to reach `ε` against the complexity prediction, per dimension.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let seed = cfg.require_seed()?;
    if cfg.sweep.dims.is_empty() {
        return Err(Error::Config("sweep.dims must not be empty".into()));
    }
    let eps = cfg.sweep.eps;
    let mut rows = Vec::new();
    for &d in &cfg.sweep.dims {
        let mut c = cfg.clone();
        c.target.spec = spec_in_dim(&cfg.target.spec, d)?;
        c.target.x0 = None;
        c.svgd.gamma = GammaSetting::AutoTheorem1;
        let target = build_target(&c.target)?;
        if target.sample(&mut reference_rng(seed), 1).is_none() {
            return Err(Error::MissingSampler);
        }
        let exp_probe = Experiment::prepare(&c)?;
        let th = exp_probe.theory.as_ref().ok_or(Error::MissingLogNormalizer)?;
        let kernel = exp_probe.kernel;
        let constants = cor3_constants(kernel.bound_b(), target.smoothness(), th.constants.lambda, th.constants.f_at_xstar, d, c.theory.alpha)?
            .with_eps(eps)?;
        let predicted = constants.n_predicted.unwrap_or(0);
        let mut mixture = MixtureKsd::new(target.as_ref(), &kernel)?;
        let mut ensemble = exp_probe.initial.clone().without_logdens();
        let mut observed = None;
        let cap = predicted.max(1);
        for n in 1..=cap {
            if mixture.push(&ensemble)? <= eps {
                observed = Some(n);
                break;
            }
            if n < cap {
                ensemble = crate::svgd::step(&ensemble, target.as_ref(), &kernel, constants.gamma)?.0;
            }
        }
        rows.push(SweepRow { d, gamma: constants.gamma, n_to_eps: observed, n_predicted: predicted, constants });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("d,gamma,n_to_eps,n_predicted\n");
    for r in rows {
        let obs = r.n_to_eps.map_or_else(String::new, |n| n.to_string());
        s.push_str(&format!("{},{},{},{}\n", r.d, r.gamma, obs, r.n_predicted));
    }
    s
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<i32> {
    let rows = sweep(cfg)?;
    let dir = output_dir(cfg);
    fs::create_dir_all(&dir)?;
    let csv = sweep_csv(&rows);
    fs::write(dir.join("sweep.csv"), &csv)?;
    write!(out, "{csv}")?;
    let mut code = EXIT_OK;
    for r in &rows {
        let ok = r.n_to_eps.is_some_and(|n| n <= r.n_predicted);
        if !ok {
            code = EXIT_VIOLATION;
        }
        writeln!(out, "{} d={} observed={} predicted={}", if ok { "PASS" } else { "FAIL" }, r.d, r.n_to_eps.map_or("never".into(), |n| n.to_string()), r.n_predicted)?;
    }
    Ok(code)
}

/// `ksd`: V-statistic KSD² of a particle CSV under the configured target and kernel.
pub fn cmd_ksd(cfg: &ExperimentConfig, particles: &Path, out: &mut dyn Write) -> Result<i32> {
    let (points, dim) = read_points(particles)?;
    let mut c = cfg.clone();
    if let TargetSpec::Gaussian { .. } = c.target.spec {
        c.target.spec = TargetSpec::Gaussian { dim };
    }
    let target = build_target(&c.target)?;
    if target.dim() != dim {
        return Err(Error::Config(format!("particle file has {dim} columns, target has dimension {}", target.dim())));
    }
    let ens = Ensemble::new(points, dim)?;
    let kernel = build_kernel(&c.kernel, dim, &ens)?;
    writeln!(out, "{}", ksd_squared(&ens, target.as_ref(), &kernel)?)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMode {
    Kl,
    W1,
    T1,
}

/// `metrics`: prints one `metric,value,stderr` line.
///
/// `kl` reads particles with a trailing log-density column; `w1` compares
/// `input` to `reference`; `t1` estimates the T1 constant of `input`.
pub fn cmd_metrics(
    cfg: &ExperimentConfig,
    mode: MetricMode,
    input: &Path,
    reference: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let (points, width) = read_points(input)?;
    writeln!(out, "metric,value,stderr")?;
    match mode {
        MetricMode::Kl => {
            if width < 2 {
                return Err(Error::Config("kl mode needs position columns plus a log-density column".into()));
            }
            let dim = width - 1;
            let mut c = cfg.clone();
            if let TargetSpec::Gaussian { .. } = c.target.spec {
                c.target.spec = TargetSpec::Gaussian { dim };
            }
            let target = build_target(&c.target)?;
            let (pos, ld): (Vec<f64>, Vec<f64>) = {
                let mut pos = Vec::new();
                let mut ld = Vec::new();
                for row in points.chunks(width) {
                    pos.extend_from_slice(&row[..dim]);
                    ld.push(row[dim]);
                }
                (pos, ld)
            };
            let ens = Ensemble::new(pos, dim)?.with_logdens(ld)?;
            let est = kl_estimate(&ens, target.as_ref())?;
            writeln!(out, "kl,{},{}", est.value, est.stderr)?;
        }
        MetricMode::W1 => {
            let path = reference.ok_or_else(|| Error::Config("w1 mode needs --reference".into()))?;
            let (other, w) = read_points(path)?;
            if w != width {
                return Err(Error::Config(format!("column mismatch: {width} vs {w}")));
            }
            let est = w1_to_reference(&points, &other, width, cfg.seed.unwrap_or(0))?;
            writeln!(out, "w1,{},{}", est.value, est.stderr.map_or_else(String::new, |s| s.to_string()))?;
        }
        MetricMode::T1 => {
            let est = t1_lambda_upper(&points, width, &T1Grid::default())?;
            writeln!(out, "t1_lambda,{},", est.lambda_hat)?;
        }
    }
    Ok(EXIT_OK)
}

/// `theory`: the constant bundle as `key=value` lines followed by JSON.
pub fn cmd_theory(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<i32> {
    let seed = cfg.seed.unwrap_or(0);
    let mut c = cfg.clone();
    c.seed = Some(seed);
    c.svgd.gamma = GammaSetting::AutoTheorem1;
    let exp = Experiment::prepare(&c)?;
    let mut th = exp.theory.ok_or(Error::MissingLogNormalizer)?;
    th.constants = th.constants.with_eps(cfg.sweep.eps)?;
    write!(out, "{}", th.constants.to_key_values())?;
    writeln!(out, "lambda_source={}", th.lambda_source)?;
    writeln!(out, "x_star={}", th.x_star.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(","))?;
    let json = serde_json::to_string_pretty(&th).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(out, "{json}")?;
    Ok(EXIT_OK)
}

