//! Flat `key = value` experiment configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment
//! [svgd]               # optional section header, prefixes following keys
//! n_particles = 500    # same as `svgd.n_particles = 500` at top level
//! ```
//!
//! Lists are comma separated; mixture components are separated by `;`.
//! Unknown keys and duplicate keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::kernels::BandwidthRule;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Gaussian { dim: usize },
    Anisotropic { mean: Vec<f64>, precision: Vec<f64> },
    Mixture { means: Vec<Vec<f64>>, weights: Vec<f64>, variance: f64 },
    DoubleWell { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetConfig {
    pub spec: TargetSpec,
    /// Declared smoothness override; must dominate the analytic value.
    pub l: Option<f64>,
    /// Start of the stationary-point search.
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamilyName {
    Gaussian,
    Imq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub family: KernelFamilyName,
    /// Gaussian bandwidth; `None` means `σ = √d`.
    pub sigma: Option<f64>,
    pub c: f64,
    pub bandwidth_rule: BandwidthRule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSetting {
    AutoTheorem1,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// `N(x*, I/L)`.
    Gaussian,
    /// `N(x*, I/L)`, Latin-hypercube stratified.
    Stratified,
    /// Exact target draws.
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgdConfig {
    pub n_particles: usize,
    pub n_iters: usize,
    pub gamma: GammaSetting,
    pub track_logdens: bool,
    pub record_every: usize,
    pub init: InitKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    /// Reference draws for W1 diagnostics; `0` disables W1.
    pub w1_reference: usize,
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSource {
    Analytic,
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConfig {
    pub alpha: f64,
    pub lambda_source: LambdaSource,
    /// Explicit λ for the analytic source.
    pub lambda: Option<f64>,
    /// Exact draws used for λ̂ and `∫‖x‖dπ`.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// Iterations at which the averaged-iterate rate bound is checked.
    pub rate_checkpoints: Vec<usize>,
    /// Iterations at which W1 to the reference must strictly decrease.
    pub w1_checkpoints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub target: TargetConfig,
    pub kernel: KernelConfig,
    pub svgd: SvgdConfig,
    pub metrics: MetricsConfig,
    pub theory: TheoryConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: None,
            target: TargetConfig { spec: TargetSpec::Gaussian { dim: 1 }, l: None, x0: None },
            kernel: KernelConfig {
                family: KernelFamilyName::Gaussian,
                sigma: None,
                c: 1.0,
                bandwidth_rule: BandwidthRule::Fixed,
            },
            svgd: SvgdConfig {
                n_particles: 500,
                n_iters: 200,
                gamma: GammaSetting::AutoTheorem1,
                track_logdens: true,
                record_every: 1,
                init: InitKind::Gaussian,
            },
            metrics: MetricsConfig { w1_reference: 2000, svg: false },
            theory: TheoryConfig {
                alpha: crate::theory::DEFAULT_ALPHA,
                lambda_source: LambdaSource::Estimated,
                lambda: None,
                samples: 100_000,
            },
            sweep: SweepConfig { dims: vec![1, 2, 4], eps: 0.05 },
            verify: VerifyConfig { rate_checkpoints: vec![10, 50, 200], w1_checkpoints: vec![0, 50, 200] },
        }
    }
}

fn err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| err(line, format!("{key}: expected a number, got {v:?}")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| err(line, format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(err(line, format!("{key}: expected true or false, got {other:?}"))),
    }
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(line, key, s)).collect()
}

fn parse_usize_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse_usize(line, key, s)).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn fmt_usize_list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line_no, "unterminated section header"))?
                    .trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(err(line_no, format!("bad section name {name:?}")));
                }
                section = format!("{name}.");
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected `key = value`, got {line:?}")))?;
            let key = format!("{section}{}", k.trim());
            let value = v.trim().to_string();
            if value.is_empty() {
                return Err(err(line_no, format!("{key}: empty value")));
            }
            if entries.insert(key.clone(), (line_no, value)).is_some() {
                return Err(err(line_no, format!("duplicate key {key}")));
            }
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut entries: BTreeMap<String, (usize, String)>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut take = |key: &str| entries.remove(key);

        if let Some((l, v)) = take("seed") {
            cfg.seed = Some(v.parse().map_err(|_| err(l, format!("seed: expected u64, got {v:?}")))?);
        }
        if let Some((_, v)) = take("output.dir") {
            cfg.output_dir = Some(PathBuf::from(v));
        }

        // target
        let name = take("target.name");
        let dim = take("target.dim");
        let mean = take("target.mean");
        let precision = take("target.precision");
        let means = take("target.means");
        let weights = take("target.weights");
        let variance = take("target.variance");
        let radius = take("target.radius");
        let reject = |opt: &Option<(usize, String)>, key: &str, kind: &str| -> Result<()> {
            match opt {
                Some((l, _)) => Err(err(*l, format!("{key} does not apply to target {kind}"))),
                None => Ok(()),
            }
        };
        let (name_line, name_val) = name.clone().unwrap_or((0, "gaussian".into()));
        cfg.target.spec = match name_val.as_str() {
            "gaussian" => {
                for (o, k) in [(&mean, "target.mean"), (&precision, "target.precision"), (&means, "target.means"),
                    (&weights, "target.weights"), (&variance, "target.variance"), (&radius, "target.radius")] {
                    reject(o, k, "gaussian")?;
                }
                let dim = match &dim {
                    Some((l, v)) => parse_usize(*l, "target.dim", v)?,
                    None => 1,
                };
                TargetSpec::Gaussian { dim }
            }
            "anisotropic_gaussian" => {
                for (o, k) in [(&means, "target.means"), (&weights, "target.weights"),
                    (&variance, "target.variance"), (&radius, "target.radius"), (&dim, "target.dim")] {
                    reject(o, k, "anisotropic_gaussian")?;
                }
                let (l, v) = precision.clone().ok_or_else(|| err(name_line, "anisotropic_gaussian needs target.precision"))?;
                let precision = parse_list(l, "target.precision", &v)?;
                let mean = match &mean {
                    Some((l, v)) => parse_list(*l, "target.mean", v)?,
                    None => vec![0.0; precision.len()],
                };
                TargetSpec::Anisotropic { mean, precision }
            }
            "mixture" => {
                for (o, k) in [(&mean, "target.mean"), (&precision, "target.precision"), (&radius, "target.radius"), (&dim, "target.dim")] {
                    reject(o, k, "mixture")?;
                }
                let (l, v) = means.clone().ok_or_else(|| err(name_line, "mixture needs target.means"))?;
                let comps: Vec<Vec<f64>> = v
                    .split(';')
                    .map(|c| parse_list(l, "target.means", c))
                    .collect::<Result<_>>()?;
                let weights = match &weights {
                    Some((l, v)) => parse_list(*l, "target.weights", v)?,
                    None => vec![1.0 / comps.len() as f64; comps.len()],
                };
                let variance = match &variance {
                    Some((l, v)) => parse_f64(*l, "target.variance", v)?,
                    None => 1.0,
                };
                TargetSpec::Mixture { means: comps, weights, variance }
            }
            "double_well" => {
                for (o, k) in [(&mean, "target.mean"), (&precision, "target.precision"), (&means, "target.means"),
                    (&weights, "target.weights"), (&variance, "target.variance"), (&dim, "target.dim")] {
                    reject(o, k, "double_well")?;
                }
                let radius = match &radius {
                    Some((l, v)) => parse_f64(*l, "target.radius", v)?,
                    None => 2.0,
                };
                TargetSpec::DoubleWell { radius }
            }
            other => {
                return Err(err(
                    name_line,
                    format!("unknown target.name {other:?} (gaussian, anisotropic_gaussian, mixture, double_well)"),
                ))
            }
        };
        if let Some((l, v)) = take("target.L") {
            cfg.target.l = Some(parse_f64(l, "target.L", &v)?);
        }
        if let Some((l, v)) = take("target.x0") {
            cfg.target.x0 = Some(parse_list(l, "target.x0", &v)?);
        }

        // kernel
        if let Some((l, v)) = take("kernel.family") {
            cfg.kernel.family = match v.as_str() {
                "gaussian" => KernelFamilyName::Gaussian,
                "imq" | "inverse_multiquadric" => KernelFamilyName::Imq,
                other => return Err(err(l, format!("unknown kernel.family {other:?} (gaussian, imq)"))),
            };
        }
        if let Some((l, v)) = take("kernel.sigma") {
            cfg.kernel.sigma = Some(parse_f64(l, "kernel.sigma", &v)?);
        }
        if let Some((l, v)) = take("kernel.c") {
            cfg.kernel.c = parse_f64(l, "kernel.c", &v)?;
        }
        if let Some((l, v)) = take("kernel.bandwidth_rule") {
            cfg.kernel.bandwidth_rule = match v.as_str() {
                "fixed" => BandwidthRule::Fixed,
                "median_init" => BandwidthRule::MedianInit,
                other => return Err(err(l, format!("unknown kernel.bandwidth_rule {other:?} (fixed, median_init)"))),
            };
        }

        // svgd
        if let Some((l, v)) = take("svgd.n_particles") {
            cfg.svgd.n_particles = parse_usize(l, "svgd.n_particles", &v)?;
        }
        if let Some((l, v)) = take("svgd.n_iters") {
            cfg.svgd.n_iters = parse_usize(l, "svgd.n_iters", &v)?;
        }
        if let Some((l, v)) = take("svgd.gamma") {
            cfg.svgd.gamma = if v == "auto_theorem1" {
                GammaSetting::AutoTheorem1
            } else if let Some(x) = v.strip_prefix("fixed:") {
                GammaSetting::Fixed(parse_f64(l, "svgd.gamma", x)?)
            } else {
                return Err(err(l, format!("svgd.gamma must be auto_theorem1 or fixed:<value>, got {v:?}")));
            };
        }
        if let Some((l, v)) = take("svgd.track_logdens") {
            cfg.svgd.track_logdens = parse_bool(l, "svgd.track_logdens", &v)?;
        }
        if let Some((l, v)) = take("svgd.record_every") {
            cfg.svgd.record_every = parse_usize(l, "svgd.record_every", &v)?;
        }
        if let Some((l, v)) = take("svgd.init") {
            cfg.svgd.init = match v.as_str() {
                "gaussian" => InitKind::Gaussian,
                "stratified" => InitKind::Stratified,
                "target" => InitKind::Target,
                other => return Err(err(l, format!("unknown svgd.init {other:?} (gaussian, stratified, target)"))),
            };
        }

        // metrics
        if let Some((l, v)) = take("metrics.w1_reference") {
            cfg.metrics.w1_reference = parse_usize(l, "metrics.w1_reference", &v)?;
        }
        if let Some((l, v)) = take("metrics.svg") {
            cfg.metrics.svg = parse_bool(l, "metrics.svg", &v)?;
        }

        // theory
        if let Some((l, v)) = take("theory.alpha") {
            cfg.theory.alpha = parse_f64(l, "theory.alpha", &v)?;
        }
        if let Some((l, v)) = take("theory.lambda_source") {
            cfg.theory.lambda_source = match v.as_str() {
                "analytic" => LambdaSource::Analytic,
                "estimated" => LambdaSource::Estimated,
                other => return Err(err(l, format!("unknown theory.lambda_source {other:?} (analytic, estimated)"))),
            };
        }
        if let Some((l, v)) = take("theory.lambda") {
            cfg.theory.lambda = Some(parse_f64(l, "theory.lambda", &v)?);
        }
        if let Some((l, v)) = take("theory.samples") {
            cfg.theory.samples = parse_usize(l, "theory.samples", &v)?;
        }

        // sweep / verify
        if let Some((l, v)) = take("sweep.dims") {
            cfg.sweep.dims = parse_usize_list(l, "sweep.dims", &v)?;
        }
        if let Some((l, v)) = take("sweep.eps") {
            cfg.sweep.eps = parse_f64(l, "sweep.eps", &v)?;
        }
        if let Some((l, v)) = take("verify.rate_checkpoints") {
            cfg.verify.rate_checkpoints = parse_usize_list(l, "verify.rate_checkpoints", &v)?;
        }
        if let Some((l, v)) = take("verify.w1_checkpoints") {
            cfg.verify.w1_checkpoints = parse_usize_list(l, "verify.w1_checkpoints", &v)?;
        }

        if let Some((key, (l, _))) = entries.into_iter().next() {
            return Err(err(l, format!("unknown key {key}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.svgd.n_particles == 0 {
            return bad("svgd.n_particles must be >= 1".into());
        }
        if self.svgd.n_iters == 0 {
            return bad("svgd.n_iters must be >= 1".into());
        }
        if self.svgd.record_every == 0 {
            return bad("svgd.record_every must be >= 1".into());
        }
        if let GammaSetting::Fixed(g) = self.svgd.gamma {
            if !(g.is_finite() && g > 0.0) {
                return bad(format!("svgd.gamma must be positive, got {g}"));
            }
        }
        if !(self.theory.alpha.is_finite() && self.theory.alpha > 1.0) {
            return bad(format!("theory.alpha must be > 1, got {}", self.theory.alpha));
        }
        if let Some(l) = self.theory.lambda {
            if !(l.is_finite() && l > 0.0) {
                return bad(format!("theory.lambda must be positive, got {l}"));
            }
        }
        if self.sweep.dims.is_empty() {
            return bad("sweep.dims must not be empty".into());
        }
        if let Some(d) = self.sweep.dims.iter().find(|d| ![1, 2, 4, 8].contains(*d)) {
            return bad(format!("sweep.dims entries must be in {{1,2,4,8}}, got {d}"));
        }
        if !(self.sweep.eps.is_finite() && self.sweep.eps > 0.0) {
            return bad(format!("sweep.eps must be positive, got {}", self.sweep.eps));
        }
        Ok(())
    }

    /// Renders every field; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        if let Some(dir) = &self.output_dir {
            let _ = writeln!(s, "output.dir = {}", dir.display());
        }
        match &self.target.spec {
            TargetSpec::Gaussian { dim } => {
                let _ = writeln!(s, "target.name = gaussian\ntarget.dim = {dim}");
            }
            TargetSpec::Anisotropic { mean, precision } => {
                let _ = writeln!(
                    s,
                    "target.name = anisotropic_gaussian\ntarget.mean = {}\ntarget.precision = {}",
                    fmt_list(mean),
                    fmt_list(precision)
                );
            }
            TargetSpec::Mixture { means, weights, variance } => {
                let comps = means.iter().map(|m| fmt_list(m)).collect::<Vec<_>>().join(";");
                let _ = writeln!(
                    s,
                    "target.name = mixture\ntarget.means = {comps}\ntarget.weights = {}\ntarget.variance = {variance:?}",
                    fmt_list(weights)
                );
            }
            TargetSpec::DoubleWell { radius } => {
                let _ = writeln!(s, "target.name = double_well\ntarget.radius = {radius:?}");
            }
        }
        if let Some(l) = self.target.l {
            let _ = writeln!(s, "target.L = {l:?}");
        }
        if let Some(x0) = &self.target.x0 {
            let _ = writeln!(s, "target.x0 = {}", fmt_list(x0));
        }
        let family = match self.kernel.family {
            KernelFamilyName::Gaussian => "gaussian",
            KernelFamilyName::Imq => "imq",
        };
        let _ = writeln!(s, "kernel.family = {family}");
        if let Some(sigma) = self.kernel.sigma {
            let _ = writeln!(s, "kernel.sigma = {sigma:?}");
        }
        let _ = writeln!(s, "kernel.c = {:?}", self.kernel.c);
        let rule = match self.kernel.bandwidth_rule {
            BandwidthRule::Fixed => "fixed",
            BandwidthRule::MedianInit => "median_init",
        };
        let _ = writeln!(s, "kernel.bandwidth_rule = {rule}");
        let gamma = match self.svgd.gamma {
            GammaSetting::AutoTheorem1 => "auto_theorem1".to_string(),
            GammaSetting::Fixed(g) => format!("fixed:{g:?}"),
        };
        let init = match self.svgd.init {
            InitKind::Gaussian => "gaussian",
            InitKind::Stratified => "stratified",
            InitKind::Target => "target",
        };
        let _ = writeln!(
            s,
            "svgd.n_particles = {}\nsvgd.n_iters = {}\nsvgd.gamma = {gamma}\nsvgd.track_logdens = {}\nsvgd.record_every = {}\nsvgd.init = {init}",
            self.svgd.n_particles, self.svgd.n_iters, self.svgd.track_logdens, self.svgd.record_every
        );
        let _ = writeln!(s, "metrics.w1_reference = {}\nmetrics.svg = {}", self.metrics.w1_reference, self.metrics.svg);
        let source = match self.theory.lambda_source {
            LambdaSource::Analytic => "analytic",
            LambdaSource::Estimated => "estimated",
        };
        let _ = writeln!(s, "theory.alpha = {:?}\ntheory.lambda_source = {source}", self.theory.alpha);
        if let Some(l) = self.theory.lambda {
            let _ = writeln!(s, "theory.lambda = {l:?}");
        }
        let _ = writeln!(s, "theory.samples = {}", self.theory.samples);
        let _ = writeln!(s, "sweep.dims = {}\nsweep.eps = {:?}", fmt_usize_list(&self.sweep.dims), self.sweep.eps);
        let _ = writeln!(
            s,
            "verify.rate_checkpoints = {}\nverify.w1_checkpoints = {}",
            fmt_usize_list(&self.verify.rate_checkpoints),
            fmt_usize_list(&self.verify.w1_checkpoints)
        );
        s
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("seed is required for stochastic runs (config `seed` or --seed)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIXTURE: &str = "
seed = 7
target.name = mixture
target.means = 1.5; -1.5
[svgd]
n_particles = 100   # particles
n_iters = 20
gamma = fixed:0.05
[kernel]
family = imq
c = 0.5
";

    #[test]
    fn parses_sections_and_comments() {
        let cfg = ExperimentConfig::parse(MIXTURE).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(
            cfg.target.spec,
            TargetSpec::Mixture { means: vec![vec![1.5], vec![-1.5]], weights: vec![0.5, 0.5], variance: 1.0 }
        );
        assert_eq!(cfg.svgd.n_particles, 100);
        assert_eq!(cfg.svgd.gamma, GammaSetting::Fixed(0.05));
        assert_eq!(cfg.kernel.family, KernelFamilyName::Imq);
        assert_eq!(cfg.kernel.c, 0.5);
    }

    #[test]
    fn rendering_round_trips() {
        let cfg = ExperimentConfig::parse(MIXTURE).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let mut other = ExperimentConfig::default();
        other.target.spec = TargetSpec::Anisotropic { mean: vec![0.1, 1.0 / 3.0], precision: vec![2.0, 0.7] };
        other.target.l = Some(3.0);
        other.theory.lambda = Some(0.123456789);
        other.output_dir = Some("out/x".into());
        assert_eq!(ExperimentConfig::parse(&other.to_text()).unwrap(), other);
    }

    #[test]
    fn rejects_bad_input() {
        for (text, needle) in [
            ("target.nmae = gaussian", "unknown key"),
            ("seed = 1\nseed = 2", "duplicate"),
            ("svgd.n_iters = 0", "n_iters"),
            ("svgd.gamma = fast", "auto_theorem1"),
            ("just words", "key = value"),
            ("[svgd\nn_iters = 3", "section"),
            ("target.name = gaussian\ntarget.means = 1;2", "does not apply"),
            ("sweep.dims = 3", "sweep.dims"),
            ("sweep.dims = 1,x", "integer"),
            ("theory.alpha = 1", "alpha"),
        ] {
            let e = ExperimentConfig::parse(text).unwrap_err().to_string();
            assert!(e.contains(needle), "{text:?}: {e}");
        }
    }

    #[test]
    fn seed_is_mandatory_for_runs() {
        let cfg = ExperimentConfig::parse("target.name = gaussian").unwrap();
        assert!(cfg.require_seed().is_err());
    }
}
