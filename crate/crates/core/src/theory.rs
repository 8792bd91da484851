//! Convergence constants as plain arithmetic.
//!
//! Nothing here samples or integrates: moments and `λ` arrive precomputed.
//! Notation: `L` smoothness of `F`, `B` kernel bound, `α > 1` the slack
//! parameter of the step-size conditions, `λ` the T1 constant and `KL₀`
//! the (bound on the) initial KL divergence.

use serde::Serialize;

use crate::error::{positive, Error, Result};

pub const DEFAULT_ALPHA: f64 = 2.0;

fn alpha_ok(alpha: f64) -> Result<f64> {
    if alpha.is_finite() && alpha > 1.0 {
        Ok(alpha)
    } else {
        Err(Error::InvalidParameter(format!("alpha must be > 1, got {alpha}")))
    }
}

fn nonneg(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")))
    }
}

/// Constant of the Taylor inequality, `(α² + L)B`.
pub fn taylor_k(alpha: f64, l: f64, b: f64) -> Result<f64> {
    alpha_ok(alpha)?;
    positive("L", l)?;
    positive("B", b)?;
    Ok((alpha * alpha + l) * b)
}

/// Step ceiling built from moments of `π`:
/// `(α−1) / (αB²(1 + ‖∇F(0)‖ + L∫‖x‖dπ + L√(2KL₀/λ)))`.
pub fn gamma_ceiling_pi(
    alpha: f64,
    b: f64,
    l: f64,
    grad_f0_norm: f64,
    first_moment_pi: f64,
    kl0: f64,
    lambda: f64,
) -> Result<f64> {
    alpha_ok(alpha)?;
    positive("B", b)?;
    positive("L", l)?;
    positive("lambda", lambda)?;
    nonneg("|grad F(0)|", grad_f0_norm)?;
    nonneg("first moment of pi", first_moment_pi)?;
    nonneg("KL0", kl0)?;
    let inner = 1.0 + grad_f0_norm + l * first_moment_pi + l * (2.0 * kl0 / lambda).sqrt();
    Ok((alpha - 1.0) / (alpha * b * b * inner))
}

/// Step ceiling built around a stationary point `x*`:
/// `(α−1) / (αB²(1 + 2L√(2KL₀/λ) + L∫‖x − x*‖dμ₀))`.
pub fn gamma_ceiling_mu0(
    alpha: f64,
    b: f64,
    l: f64,
    kl0: f64,
    lambda: f64,
    first_abs_moment_mu0: f64,
) -> Result<f64> {
    alpha_ok(alpha)?;
    positive("B", b)?;
    positive("L", l)?;
    positive("lambda", lambda)?;
    nonneg("KL0", kl0)?;
    nonneg("first moment of mu0 about x*", first_abs_moment_mu0)?;
    let inner = 1.0 + 2.0 * l * (2.0 * kl0 / lambda).sqrt() + l * first_abs_moment_mu0;
    Ok((alpha - 1.0) / (alpha * b * b * inner))
}

/// `2 / (B(α² + L))`, the ceiling under which the averaged-iterate rate holds.
pub fn gamma_ceiling_descent(alpha: f64, b: f64, l: f64) -> Result<f64> {
    Ok(2.0 / taylor_k(alpha, l, b)?)
}

/// Upper bound on `∫‖x − x*‖ dN(x*, I/L)`, namely `√(d/L)`.
pub fn gaussian_init_moment_bound(d: usize, l: f64) -> f64 {
    (d as f64 / l).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kl0Bound {
    pub raw: f64,
    pub clamped: f64,
}

/// `F(x*) + (d/2) log(L/2π)` for `μ₀ = N(x*, I/L)`, with `F` normalized.
pub fn kl0_bound(f_at_xstar: f64, l: f64, d: usize) -> Result<Kl0Bound> {
    positive("L", l)?;
    let raw = f_at_xstar + 0.5 * d as f64 * (l / (2.0 * std::f64::consts::PI)).ln();
    Ok(Kl0Bound { raw, clamped: raw.max(0.0) })
}

/// `2 KL₀ / (nγ)`.
pub fn rate_bound(kl0: f64, gamma: f64, n: usize) -> Result<f64> {
    nonneg("KL0", kl0)?;
    positive("gamma", gamma)?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    Ok(2.0 * kl0 / (n as f64 * gamma))
}

/// `⌈2 KL₀ / (γ ε)⌉`.
pub fn n_sufficient(kl0: f64, gamma: f64, eps: f64) -> Result<u64> {
    nonneg("KL0", kl0)?;
    positive("gamma", gamma)?;
    positive("eps", eps)?;
    let n = (2.0 * kl0 / (gamma * eps)).ceil();
    if !n.is_finite() || n > u64::MAX as f64 {
        return Err(Error::InvalidParameter("iteration count overflows".into()));
    }
    Ok(n as u64)
}

/// Bound on `‖h_μ‖_H` through moments of `π`:
/// `B(1 + ‖∇F(0)‖ + L∫‖x‖dπ) + BL√(2KL(μ)/λ)`.
pub fn hnorm_upper(
    b: f64,
    l: f64,
    grad_f0_norm: f64,
    first_moment_pi: f64,
    kl_mu: f64,
    lambda: f64,
) -> Result<f64> {
    nonneg("B", b)?;
    nonneg("L", l)?;
    positive("lambda", lambda)?;
    nonneg("|grad F(0)|", grad_f0_norm)?;
    nonneg("first moment of pi", first_moment_pi)?;
    nonneg("KL(mu)", kl_mu)?;
    Ok(b * (1.0 + grad_f0_norm + l * first_moment_pi) + b * l * (2.0 * kl_mu / lambda).sqrt())
}

/// The `x*`-centred variant:
/// `B(1 + L√(2KL₀/λ) + L√(2KL(μ)/λ) + L∫‖x − x*‖dμ₀)`.
pub fn hnorm_upper_centered(
    b: f64,
    l: f64,
    kl0: f64,
    kl_mu: f64,
    lambda: f64,
    first_abs_moment_mu0: f64,
) -> Result<f64> {
    nonneg("B", b)?;
    nonneg("L", l)?;
    positive("lambda", lambda)?;
    nonneg("KL0", kl0)?;
    nonneg("KL(mu)", kl_mu)?;
    nonneg("first moment of mu0 about x*", first_abs_moment_mu0)?;
    Ok(b * (1.0
        + l * (2.0 * kl0 / lambda).sqrt()
        + l * (2.0 * kl_mu / lambda).sqrt()
        + l * first_abs_moment_mu0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub l: f64,
    pub b: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub dim: usize,
    pub f_at_xstar: f64,
    pub kl0_bound_raw: f64,
    pub kl0_bound: f64,
    pub k_taylor: f64,
    pub k_cor3: f64,
    pub gamma_ceiling_mu0: f64,
    pub gamma_ceiling_descent: f64,
    /// Only available when `‖∇F(0)‖` and `∫‖x‖dπ` are supplied.
    pub gamma_ceiling_pi: Option<f64>,
    pub gamma: f64,
    pub eps: Option<f64>,
    pub n_predicted: Option<u64>,
}

/// Constant bundle for the Gaussian initialization `μ₀ = N(x*, I/L)`.
///
/// `K_cor3 = B²(1 + 2L√(2/λ)√KL₀ + √(Ld))` with the clamped `KL₀` bound, and
/// `γ = min(2/(B(α²+L)), (α−1)/(αK_cor3))`.
pub fn cor3_constants(
    b: f64,
    l: f64,
    lambda: f64,
    f_at_xstar: f64,
    d: usize,
    alpha: f64,
) -> Result<TheoryConstants> {
    alpha_ok(alpha)?;
    positive("B", b)?;
    positive("L", l)?;
    positive("lambda", lambda)?;
    if d == 0 {
        return Err(Error::InvalidParameter("d must be >= 1".into()));
    }
    let kl0 = kl0_bound(f_at_xstar, l, d)?;
    let k_cor3 = b * b * (1.0 + 2.0 * l * (2.0 / lambda).sqrt() * kl0.clamped.sqrt() + (l * d as f64).sqrt());
    let k_taylor = taylor_k(alpha, l, b)?;
    let descent = gamma_ceiling_descent(alpha, b, l)?;
    let mu0 = gamma_ceiling_mu0(alpha, b, l, kl0.clamped, lambda, gaussian_init_moment_bound(d, l))?;
    // same quantity as `mu0` up to rounding; taking both keeps γ ≤ every ceiling
    let gamma = descent.min((alpha - 1.0) / (alpha * k_cor3)).min(mu0);
    Ok(TheoryConstants {
        l,
        b,
        alpha,
        lambda,
        dim: d,
        f_at_xstar,
        kl0_bound_raw: kl0.raw,
        kl0_bound: kl0.clamped,
        k_taylor,
        k_cor3,
        gamma_ceiling_mu0: mu0,
        gamma_ceiling_descent: descent,
        gamma_ceiling_pi: None,
        gamma,
        eps: None,
        n_predicted: None,
    })
}

impl TheoryConstants {
    /// Adds the `π`-moment ceiling; `gamma` becomes the minimum of all ceilings.
    pub fn with_pi_ceiling(mut self, grad_f0_norm: f64, first_moment_pi: f64) -> Result<Self> {
        let c = gamma_ceiling_pi(
            self.alpha,
            self.b,
            self.l,
            grad_f0_norm,
            first_moment_pi,
            self.kl0_bound,
            self.lambda,
        )?;
        self.gamma_ceiling_pi = Some(c);
        self.gamma = self.gamma.min(c);
        if let Some(eps) = self.eps {
            self.n_predicted = Some(n_sufficient(self.kl0_bound, self.gamma, eps)?);
        }
        Ok(self)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        self.n_predicted = Some(n_sufficient(self.kl0_bound, self.gamma, eps)?);
        self.eps = Some(eps);
        Ok(self)
    }

    /// Guaranteed per-step decrease coefficient `γ(1 − γK/2)`.
    pub fn descent_coefficient(&self, gamma: f64) -> f64 {
        gamma * (1.0 - gamma * self.k_taylor / 2.0)
    }

    /// `key=value` lines, one per field.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.17e}"));
        let mut s = String::new();
        let rows: Vec<(&str, String)> = vec![
            ("L", format!("{:.17e}", self.l)),
            ("B", format!("{:.17e}", self.b)),
            ("alpha", format!("{:.17e}", self.alpha)),
            ("lambda", format!("{:.17e}", self.lambda)),
            ("d", self.dim.to_string()),
            ("F_at_xstar", format!("{:.17e}", self.f_at_xstar)),
            ("kl0_bound_raw", format!("{:.17e}", self.kl0_bound_raw)),
            ("kl0_bound", format!("{:.17e}", self.kl0_bound)),
            ("K_taylor", format!("{:.17e}", self.k_taylor)),
            ("K_cor3", format!("{:.17e}", self.k_cor3)),
            ("gamma_ceiling_pi", opt(self.gamma_ceiling_pi)),
            ("gamma_ceiling_mu0", format!("{:.17e}", self.gamma_ceiling_mu0)),
            ("gamma_ceiling_descent", format!("{:.17e}", self.gamma_ceiling_descent)),
            ("gamma", format!("{:.17e}", self.gamma)),
            ("eps", opt(self.eps)),
            ("n_predicted", self.n_predicted.map_or("none".into(), |n| n.to_string())),
        ];
        for (k, v) in rows {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }
}
