//! Stein variational gradient descent with closed-form kernelized Stein
//! discrepancy, pushforward KL tracking and the step-size / rate constants
//! of its non-asymptotic analysis.

pub mod error;
pub mod harness;
pub mod kernels;
pub mod ksd;
pub mod metrics;
pub mod sum;
pub mod svgd;
pub mod targets;
pub mod theory;

pub use error::{Error, Result};
pub use kernels::{BandwidthRule, Kernel, KernelFamily};
pub use ksd::{ksd_squared, ksd_squared_mixture, stein_kernel, MixtureKsd};
pub use svgd::{Ensemble, GammaRule, InitSpec, RunSpec, StepReport, TrajectoryRecord};
pub use targets::Target;
pub use theory::TheoryConstants;
