//! Kernelized Stein discrepancy in closed form.
//!
//! For an empirical measure `μ = (1/N)Σδ_{xᵢ}` the squared RKHS norm of the
//! update direction is the V-statistic `(1/N²)Σᵢⱼ u(xᵢ, xⱼ)` with the Stein
//! kernel
//!
//! `u(x,y) = ∇F(x)·∇F(y) k(x,y) − ∇F(y)·∇ₓk(x,y) − ∇F(x)·∇_y k(x,y) + Σᵢ∂_{xᵢ}∂_{yᵢ}k(x,y)`.
//!
//! The diagonal `i = j` is kept. Row sums are accumulated sequentially with
//! compensated summation and merged in row order, so the result does not
//! depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kernels::Kernel;
use crate::sum::{compensated_sum, Compensated};
use crate::svgd::Ensemble;
use crate::targets::Target;

/// Stein kernel bound to a `(target, kernel)` pair.
#[derive(Clone, Copy)]
pub struct SteinKernel<'a> {
    target: &'a dyn Target,
    kernel: &'a Kernel,
}

impl<'a> SteinKernel<'a> {
    pub fn new(target: &'a dyn Target, kernel: &'a Kernel) -> Result<Self> {
        check_dim(target.dim(), kernel.dim())?;
        Ok(Self { target, kernel })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let gx = self.target.grad(x)?;
        let gy = self.target.grad(y)?;
        check_dim(self.kernel.dim(), y.len())?;
        Ok(self.eval_with_grads(x, &gx, y, &gy))
    }

    /// `u(x, y)` given precomputed gradients.
    #[inline]
    pub fn eval_with_grads(&self, x: &[f64], gx: &[f64], y: &[f64], gy: &[f64]) -> f64 {
        let mut r2 = 0.0;
        let mut gg = 0.0;
        let mut gy_delta = 0.0;
        let mut gx_delta = 0.0;
        for i in 0..x.len() {
            let delta = x[i] - y[i];
            r2 += delta * delta;
            gg += gx[i] * gy[i];
            gy_delta += gy[i] * delta;
            gx_delta += gx[i] * delta;
        }
        let p = self.kernel.profile(r2);
        // ∇ₓk = 2φ'δ, ∇_y k = −2φ'δ
        p.value * gg - 2.0 * p.d1 * gy_delta + 2.0 * p.d1 * gx_delta
            - 2.0 * p.d1 * x.len() as f64
            - 4.0 * p.d2 * r2
    }

    /// Positions paired with their target gradients.
    pub fn score(&self, ensemble: &Ensemble) -> Result<Scored> {
        check_dim(self.kernel.dim(), ensemble.dim())?;
        check_dim(self.target.dim(), ensemble.dim())?;
        if ensemble.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        Ok(Scored {
            dim: ensemble.dim(),
            positions: ensemble.positions().to_vec(),
            grads: gradients(self.target, ensemble)?,
        })
    }

    #[inline]
    fn row_sum(&self, x: &[f64], gx: &[f64], ys: &[f64], gys: &[f64]) -> f64 {
        let d = x.len();
        ys.chunks_exact(d)
            .zip(gys.chunks_exact(d))
            .map(|(y, gy)| self.eval_with_grads(x, gx, y, gy))
            .sum()
    }

    /// `(1/N²) Σᵢⱼ u(xᵢ, xⱼ)` using the symmetry of `u`.
    pub fn self_sum(&self, s: &Scored) -> f64 {
        let n = s.len();
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (xi, gi) = (s.point(i), s.grad(i));
                let d = s.dim;
                let tail = self.row_sum(xi, gi, &s.positions[(i + 1) * d..], &s.grads[(i + 1) * d..]);
                self.eval_with_grads(xi, gi, xi, gi) + 2.0 * tail
            })
            .collect();
        compensated_sum(rows) / (n as f64 * n as f64)
    }

    /// `(1/(N_a N_b)) Σᵢⱼ u(aᵢ, bⱼ)`, the inner product `⟨h_a, h_b⟩_H`.
    pub fn cross_sum(&self, a: &Scored, b: &Scored) -> f64 {
        let rows: Vec<f64> = (0..a.len())
            .into_par_iter()
            .map(|i| {
                let (xi, gi) = (a.point(i), a.grad(i));
                self.row_sum(xi, gi, &b.positions, &b.grads)
            })
            .collect();
        compensated_sum(rows) / (a.len() as f64 * b.len() as f64)
    }
}

/// Positions with cached `∇F`, row-major.
#[derive(Debug, Clone)]
pub struct Scored {
    dim: usize,
    positions: Vec<f64>,
    grads: Vec<f64>,
}

impl Scored {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn grad(&self, i: usize) -> &[f64] {
        &self.grads[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn all_grads(&self) -> &[f64] {
        &self.grads
    }
}

pub(crate) fn gradients(target: &dyn Target, ensemble: &Ensemble) -> Result<Vec<f64>> {
    let d = ensemble.dim();
    let mut grads = vec![0.0; ensemble.positions().len()];
    grads
        .par_chunks_mut(d)
        .zip(ensemble.positions().par_chunks(d))
        .for_each(|(g, x)| target.grad_into(x, g));
    if grads.iter().all(|v| v.is_finite()) {
        Ok(grads)
    } else {
        Err(Error::NonFinite("target gradient"))
    }
}

pub fn stein_kernel(target: &dyn Target, kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    SteinKernel::new(target, kernel)?.eval(x, y)
}

/// `KSD²(μ|π) = ‖h_μ‖²_H` for the empirical measure of `ensemble`.
pub fn ksd_squared(ensemble: &Ensemble, target: &dyn Target, kernel: &Kernel) -> Result<f64> {
    let sk = SteinKernel::new(target, kernel)?;
    let s = sk.score(ensemble)?;
    Ok(sk.self_sum(&s).max(0.0))
}

/// `‖h_{μ̄}‖²_H` for the uniform mixture `μ̄ = (1/n)Σ_k μ_k` of the given
/// ensembles, i.e. `(1/n²) Σ_{k,l} ⟨h_{μ_k}, h_{μ_l}⟩_H`.
pub fn ksd_squared_mixture(
    ensembles: &[Ensemble],
    target: &dyn Target,
    kernel: &Kernel,
) -> Result<f64> {
    if ensembles.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut acc = MixtureKsd::new(target, kernel)?;
    for e in ensembles {
        acc.push(e)?;
    }
    Ok(acc.value())
}

/// Incremental `‖h_{μ̄_n}‖²_H` as ensembles are appended.
///
/// Pushing the `n`-th ensemble costs `n` cross sums.
pub struct MixtureKsd<'a> {
    stein: SteinKernel<'a>,
    scored: Vec<Scored>,
    total: Compensated,
}

impl<'a> MixtureKsd<'a> {
    pub fn new(target: &'a dyn Target, kernel: &'a Kernel) -> Result<Self> {
        Ok(Self {
            stein: SteinKernel::new(target, kernel)?,
            scored: Vec::new(),
            total: Compensated::default(),
        })
    }

    /// Appends an ensemble and returns the updated mixture value.
    pub fn push(&mut self, ensemble: &Ensemble) -> Result<f64> {
        let s = self.stein.score(ensemble)?;
        let crosses: Vec<f64> = self.scored.iter().map(|prev| self.stein.cross_sum(prev, &s)).collect();
        for c in crosses {
            self.total.add(2.0 * c);
        }
        self.total.add(self.stein.self_sum(&s));
        self.scored.push(s);
        Ok(self.value())
    }

    pub fn len(&self) -> usize {
        self.scored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scored.is_empty()
    }

    pub fn value(&self) -> f64 {
        let n = self.scored.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        (self.total.value() / (n * n)).max(0.0)
    }
}
