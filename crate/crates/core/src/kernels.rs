//! Radial positive-definite kernels and their derivatives.
//!
//! Both families are written as `k(x, y) = φ(‖x − y‖²)`, so every derivative
//! the sampler needs follows from `φ`, `φ'` and `φ''`:
//!
//! * `∇_y k = −2φ'·(x − y)` and `∇_x k = 2φ'·(x − y)`
//! * `∂_{x_a}∂_{y_b} k = −2φ'·δ_ab − 4φ''·(x − y)_a (x − y)_b`
//!
//! The gradient in the second argument (`grad2`) is the one used by the
//! update rule; `grad1(x, y) = grad2(y, x)`.

use crate::error::{check_dim, positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `exp(−‖x − y‖² / (2σ²))`
    Gaussian { sigma: f64 },
    /// `(c² + ‖x − y‖²)^{−1/2}`
    InverseMultiquadric { c: f64 },
}

/// How the bandwidth is chosen. The median rule is applied once, on the
/// initial ensemble, and never re-evaluated during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandwidthRule {
    #[default]
    Fixed,
    MedianInit,
}

/// Radial profile `φ(r²)` together with its first two derivatives in `r²`.
#[derive(Debug, Clone, Copy)]
pub struct Radial {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    dim: usize,
    // 1/(2σ²) for the Gaussian family, unused otherwise
    half_inv_s2: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("kernel dimension must be >= 1".into()));
        }
        let half_inv_s2 = match family {
            KernelFamily::Gaussian { sigma } => 0.5 / (positive("kernel.sigma", sigma)? * sigma),
            KernelFamily::InverseMultiquadric { c } => {
                positive("kernel.c", c)?;
                0.0
            }
        };
        Ok(Self { family, dim, half_inv_s2 })
    }

    pub fn gaussian(sigma: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Gaussian { sigma }, dim)
    }

    /// Gaussian kernel with `σ² = d`, which keeps `B = 1` in every dimension.
    pub fn gaussian_default(dim: usize) -> Result<Self> {
        Self::gaussian((dim as f64).sqrt(), dim)
    }

    pub fn inverse_multiquadric(c: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::InverseMultiquadric { c }, dim)
    }

    /// Gaussian kernel whose σ is the median pairwise distance of `points`
    /// (row-major, `dim` columns).
    pub fn gaussian_median(points: &[f64], dim: usize) -> Result<Self> {
        let sigma = median_pairwise_distance(points, dim)?;
        Self::gaussian(sigma, dim)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn profile(&self, r2: f64) -> Radial {
        match self.family {
            KernelFamily::Gaussian { .. } => {
                let a = self.half_inv_s2;
                let value = (-r2 * a).exp();
                Radial { value, d1: -value * a, d2: value * a * a }
            }
            KernelFamily::InverseMultiquadric { c } => {
                let s = c * c + r2;
                let value = s.powf(-0.5);
                let v3 = value / s;
                Radial {
                    value,
                    d1: -0.5 * v3,
                    d2: 0.75 * v3 / s,
                }
            }
        }
    }

    fn checked(&self, x: &[f64], y: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.checked(x, y)?;
        Ok(self.profile(sq_dist(x, y)).value)
    }

    /// `∇_y k(x, y)`.
    pub fn grad2(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.checked(x, y)?;
        let p = self.profile(sq_dist(x, y));
        Ok(x.iter().zip(y).map(|(a, b)| -2.0 * p.d1 * (a - b)).collect())
    }

    /// `∇_x k(x, y)`.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.grad2(y, x)
    }

    /// `Σᵢ ∂_{xᵢ}∂_{yᵢ} k(x, y)`.
    pub fn mixed_div(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.checked(x, y)?;
        let r2 = sq_dist(x, y);
        let p = self.profile(r2);
        Ok(-2.0 * p.d1 * self.dim as f64 - 4.0 * p.d2 * r2)
    }

    /// Row-major `d×d` matrix with entry `(a, b) = ∂_{x_a}∂_{y_b} k(x, y)`.
    pub fn cross_hessian(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.checked(x, y)?;
        let d = self.dim;
        let p = self.profile(sq_dist(x, y));
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                let diag = if a == b { -2.0 * p.d1 } else { 0.0 };
                out[a * d + b] = diag - 4.0 * p.d2 * (x[a] - y[a]) * (x[b] - y[b]);
            }
        }
        Ok(out)
    }

    /// The constant `B` with `k(x,x) ≤ B²` and `Σᵢ ∂_{xᵢ}∂_{yᵢ}k(x,x) ≤ B²`.
    pub fn bound_b(&self) -> f64 {
        let d = self.dim as f64;
        // both families are translation invariant: evaluate the diagonal at r = 0
        let p = self.profile(0.0);
        let diag = p.value;
        let mixed = -2.0 * p.d1 * d;
        let b2 = diag.max(mixed);
        // round up so that B·B never falls below the diagonal values
        let b = b2.sqrt();
        if b * b < b2 {
            b.next_up()
        } else {
            b
        }
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn median_pairwise_distance(points: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter("point buffer is not a multiple of the dimension".into()));
    }
    let n = points.len() / dim;
    if n < 2 {
        return Err(Error::Empty("median heuristic needs at least two points"));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(&points[i * dim..(i + 1) * dim], &points[j * dim..(j + 1) * dim]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::InvalidParameter("median pairwise distance is zero".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn kernels(d: usize) -> Vec<Kernel> {
        vec![
            Kernel::gaussian(1.0, d).unwrap(),
            Kernel::gaussian(0.7, d).unwrap(),
            Kernel::inverse_multiquadric(1.0, d).unwrap(),
            Kernel::inverse_multiquadric(0.5, d).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        let k = Kernel::gaussian(1.0, 3).unwrap();
        assert_eq!(k.eval(&[0.3, -1.0, 2.0], &[0.3, -1.0, 2.0]).unwrap(), 1.0);
        let k1 = Kernel::gaussian(1.0, 1).unwrap();
        let v = k1.eval(&[0.0], &[2f64.sqrt()]).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        let imq = Kernel::inverse_multiquadric(1.0, 2).unwrap();
        assert_eq!(imq.eval(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = Kernel::gaussian(1.0, 2).unwrap();
        assert!(matches!(k.eval(&[0.0], &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(k.grad2(&[0.0, 0.0], &[0.0]).is_err());
        assert!(k.mixed_div(&[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn invalid_bandwidth_rejected() {
        assert!(Kernel::gaussian(0.0, 1).is_err());
        assert!(Kernel::gaussian(f64::NAN, 1).is_err());
        assert!(Kernel::inverse_multiquadric(-1.0, 1).is_err());
        assert!(Kernel::gaussian(1.0, 0).is_err());
    }

    #[test]
    fn grad2_examples() {
        for k in kernels(2) {
            assert_eq!(k.grad2(&[0.4, 0.1], &[0.4, 0.1]).unwrap(), vec![0.0, 0.0]);
        }
        let k = Kernel::gaussian(1.0, 1).unwrap();
        let g = k.grad2(&[0.0], &[1.0]).unwrap();
        assert!((g[0] + (-0.5f64).exp()).abs() < 1e-15);
        assert!((g[0] + 0.606531).abs() < 1e-6);
        let k2 = Kernel::gaussian(2.0, 2).unwrap();
        assert_eq!(k2.grad2(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn mixed_div_examples() {
        let k = Kernel::gaussian(1.0, 3).unwrap();
        assert!((k.mixed_div(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 3.0).abs() < 1e-15);
        let k = Kernel::gaussian(0.5, 2).unwrap();
        assert!((k.mixed_div(&[0.0, 0.0], &[0.0, 0.0]).unwrap() - 8.0).abs() < 1e-12);
        // σ=1, d=1, x=0, y=2: k(1 − 4) = −3e⁻²
        let k = Kernel::gaussian(1.0, 1).unwrap();
        let v = k.mixed_div(&[0.0], &[2.0]).unwrap();
        assert!((v + 3.0 * (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bound_examples() {
        assert!((Kernel::gaussian(2.0, 4).unwrap().bound_b() - 1.0).abs() < 1e-15);
        assert!((Kernel::gaussian_default(7).unwrap().bound_b() - 1.0).abs() < 1e-12);
        assert!((Kernel::gaussian(1.0, 4).unwrap().bound_b() - 2.0).abs() < 1e-15);
        assert_eq!(Kernel::gaussian(10.0, 1).unwrap().bound_b(), 1.0);
        // IMQ: max(c^{-1/2}, √d c^{-3/2})
        let b = Kernel::inverse_multiquadric(0.5, 2).unwrap().bound_b();
        assert!((b - 2f64.sqrt() * 0.5f64.powf(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn bound_holds_on_random_diagonals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [1, 3] {
            for k in kernels(d) {
                let b2 = k.bound_b().powi(2);
                for _ in 0..10_000 {
                    let x = random_point(&mut rng, d);
                    assert!(k.eval(&x, &x).unwrap() <= b2);
                    assert!(k.mixed_div(&x, &x).unwrap() <= b2);
                }
            }
        }
    }

    #[test]
    fn symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in kernels(3) {
            for _ in 0..100 {
                let x = random_point(&mut rng, 3);
                let y = random_point(&mut rng, 3);
                assert_eq!(k.eval(&x, &y).unwrap(), k.eval(&y, &x).unwrap());
                assert!((k.mixed_div(&x, &y).unwrap() - k.mixed_div(&y, &x).unwrap()).abs() < 1e-15);
                assert_eq!(k.grad1(&x, &y).unwrap(), k.grad2(&y, &x).unwrap());
            }
        }
    }

    #[test]
    fn cross_hessian_trace_is_mixed_div() {
        let k = Kernel::inverse_multiquadric(0.8, 3).unwrap();
        let (x, y) = ([0.1, 0.5, -0.3], [1.0, -0.2, 0.4]);
        let h = k.cross_hessian(&x, &y).unwrap();
        let tr = h[0] + h[4] + h[8];
        assert!((tr - k.mixed_div(&x, &y).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn median_heuristic() {
        let pts = [0.0, 1.0, 3.0];
        // distances 1, 3, 2
        assert_eq!(median_pairwise_distance(&pts, 1).unwrap(), 2.0);
        let k = Kernel::gaussian_median(&pts, 1).unwrap();
        assert_eq!(k.family(), KernelFamily::Gaussian { sigma: 2.0 });
        assert!(median_pairwise_distance(&[1.0], 1).is_err());
        assert!(median_pairwise_distance(&[1.0, 1.0], 1).is_err());
    }
}
