//! KL, Wasserstein-1 and T1-constant estimators.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::sum::{mean_and_stderr, Compensated};
use crate::svgd::Ensemble;
use crate::targets::Target;

/// Largest number of points per side accepted by the exact transport LP.
pub const LP_MAX_POINTS: usize = 512;
/// Subsample size and resample count for approximate W1 in `d ≥ 2`.
pub const W1_SUBSAMPLE: usize = 256;
pub const W1_RESAMPLES: usize = 8;

/// Fraction of the largest MGF terms inspected by the divergence test.
pub const MGF_TOP_FRACTION: f64 = 0.01;
/// The MGF estimate is declared divergent once the top terms carry more
/// than this share of the total.
pub const MGF_TOP_SHARE_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// `KL(μ|π) ≈ (1/N) Σᵢ [log μ(xᵢ) + F(xᵢ) + log Z]` from transported log densities.
pub fn kl_estimate(ensemble: &Ensemble, target: &dyn Target) -> Result<Estimate> {
    let logdens = ensemble.logdens().ok_or(Error::MissingLogDensity)?;
    let log_z = target.log_normalizer().ok_or(Error::MissingLogNormalizer)?;
    check_dim(target.dim(), ensemble.dim())?;
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let terms: Vec<f64> = ensemble
        .points()
        .zip(logdens)
        .map(|(x, ld)| ld + target.potential(x) + log_z)
        .collect();
    let (value, stderr) = mean_and_stderr(&terms);
    Ok(Estimate { value, stderr })
}

fn rows(points: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter("point buffer is not a multiple of the dimension".into()));
    }
    if points.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    Ok(points.len() / dim)
}

/// Exact W1 between two empirical measures: closed form in one dimension,
/// transport LP otherwise.
pub fn w1(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    rows(a, dim)?;
    rows(b, dim)?;
    if dim == 1 {
        w1_1d(a, b)
    } else {
        w1_lp(a, b, dim)
    }
}

/// One-dimensional W1 with equal counts by sorted matching.
pub fn w1_sorted_matching(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    check_dim(a.len(), b.len())?;
    let (mut sa, mut sb) = (a.to_vec(), b.to_vec());
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let total: Compensated = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).collect();
    Ok(total.value() / a.len() as f64)
}

/// One-dimensional W1 for arbitrary counts: `∫ |F_a(t) − F_b(t)| dt`.
pub fn w1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    if a.len() == b.len() {
        return w1_sorted_matching(a, b);
    }
    let (wa, wb) = (1.0 / a.len() as f64, 1.0 / b.len() as f64);
    let mut events: Vec<(f64, f64)> = a.iter().map(|&x| (x, wa)).chain(b.iter().map(|&x| (x, -wb))).collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_gap = 0.0;
    let mut total = Compensated::default();
    for w in events.windows(2) {
        cdf_gap += w[0].1;
        total.add(cdf_gap.abs() * (w[1].0 - w[0].0));
    }
    Ok(total.value())
}

/// Exact W1 by solving the discrete transport linear program.
///
/// Uniform weights `1/n` and `1/m` are scaled to integer supplies `m` and
/// demands `n`; the program is solved as a min-cost flow by successive
/// shortest paths with Johnson potentials.
pub fn w1_lp(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    let n = rows(a, dim)?;
    let m = rows(b, dim)?;
    let size = n.max(m);
    if size > LP_MAX_POINTS {
        return Err(Error::TransportTooLarge { size, cap: LP_MAX_POINTS });
    }
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| {
            let ai = &a[i * dim..(i + 1) * dim];
            (0..m).map(move |j| crate::kernels::sq_dist(ai, &b[j * dim..(j + 1) * dim]).sqrt())
        })
        .collect();
    let flow = transport(&cost, n, m);
    let total: Compensated = flow.iter().zip(&cost).map(|(&f, &c)| f as f64 * c).collect();
    Ok(total.value() / (n as f64 * m as f64))
}

// Min-cost flow on source → rows → columns → sink, dense residual graph.
fn transport(cost: &[f64], n: usize, m: usize) -> Vec<u64> {
    let mut supply = vec![m as u64; n];
    let mut demand = vec![n as u64; m];
    let mut flow = vec![0u64; n * m];
    // node layout: 0 source, 1..=n rows, n+1..=n+m columns, n+m+1 sink
    let nodes = n + m + 2;
    let (src, sink) = (0, n + m + 1);
    let row = |i: usize| 1 + i;
    let col = |j: usize| 1 + n + j;
    let mut pot = vec![0.0f64; nodes];
    let mut remaining = (n * m) as u64;
    while remaining > 0 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut parent = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        dist[src] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, c: f64, dist: &mut [f64], parent: &mut [usize]| {
                let nd = dist[u] + c + pot[u] - pot[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = u;
                }
            };
            if u == src {
                for (i, _) in supply.iter().enumerate().take(n).filter(|(_, s)| **s > 0) {
                    relax(row(i), 0.0, &mut dist, &mut parent);
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    if !done[col(j)] {
                        relax(col(j), cost[i * m + j], &mut dist, &mut parent);
                    }
                }
            } else if u < sink {
                let j = u - 1 - n;
                for i in 0..n {
                    if flow[i * m + j] > 0 && !done[row(i)] {
                        relax(row(i), -cost[i * m + j], &mut dist, &mut parent);
                    }
                }
                if demand[j] > 0 {
                    relax(sink, 0.0, &mut dist, &mut parent);
                }
            }
        }
        debug_assert!(dist[sink].is_finite());
        for v in 0..nodes {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }
        // bottleneck along the path
        let mut push = u64::MAX;
        let mut v = sink;
        while v != src {
            let u = parent[v];
            if u == src {
                push = push.min(supply[v - 1]);
            } else if v == sink {
                push = push.min(demand[u - 1 - n]);
            } else if u > n {
                // backward edge column → row
                push = push.min(flow[(v - 1) * m + (u - 1 - n)]);
            }
            v = u;
        }
        let mut v = sink;
        while v != src {
            let u = parent[v];
            if u == src {
                supply[v - 1] -= push;
            } else if v == sink {
                demand[u - 1 - n] -= push;
            } else if u <= n {
                flow[(u - 1) * m + (v - 1 - n)] += push;
            } else {
                flow[(v - 1) * m + (u - 1 - n)] -= push;
            }
            v = u;
        }
        remaining -= push;
    }
    flow
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct W1Estimate {
    pub value: f64,
    /// Present only for the subsampled approximation.
    pub stderr: Option<f64>,
    pub exact: bool,
}

/// W1 between particles and reference draws. Exact in one dimension and
/// for LP-sized inputs; otherwise the mean over [`W1_RESAMPLES`] exact
/// solves on subsamples of [`W1_SUBSAMPLE`] points each (flagged inexact).
pub fn w1_to_reference(particles: &[f64], reference: &[f64], dim: usize, seed: u64) -> Result<W1Estimate> {
    let n = rows(particles, dim)?;
    let m = rows(reference, dim)?;
    if dim == 1 || n.max(m) <= LP_MAX_POINTS {
        return Ok(W1Estimate { value: w1(particles, reference, dim)?, stderr: None, exact: true });
    }
    let (mean, stderr) = w1_subsampled(particles, reference, dim, W1_SUBSAMPLE, W1_RESAMPLES, seed)?;
    Ok(W1Estimate { value: mean, stderr: Some(stderr), exact: false })
}

/// Mean and standard error of exact W1 over random subsamples.
pub fn w1_subsampled(
    a: &[f64],
    b: &[f64],
    dim: usize,
    size: usize,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = rows(a, dim)?;
    let m = rows(b, dim)?;
    if resamples == 0 || size == 0 {
        return Err(Error::InvalidParameter("subsample size and count must be >= 1".into()));
    }
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let pick = |pts: &[f64], count: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
                sample_indices(rng, count, size.min(count))
                    .iter()
                    .flat_map(|i| pts[i * dim..(i + 1) * dim].iter().copied())
                    .collect()
            };
            let sa = pick(a, n, &mut rng);
            let sb = pick(b, m, &mut rng);
            w1(&sa, &sb, dim)
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_stderr(&values))
}

/// `∫‖x − center‖ dμ` over an empirical sample.
pub fn first_abs_moment(points: &[f64], dim: usize, center: &[f64]) -> Result<f64> {
    let n = rows(points, dim)?;
    check_dim(dim, center.len())?;
    let total: Compensated = points
        .chunks(dim)
        .map(|x| crate::kernels::sq_dist(x, center).sqrt())
        .collect();
    Ok(total.value() / n as f64)
}

/// Search grid for the T1 constant.
#[derive(Debug, Clone, PartialEq)]
pub struct T1Grid {
    pub beta_min: f64,
    pub beta_max: f64,
    pub n_beta: usize,
    /// Centers per axis, spread over `mean ± center_span · std`.
    pub n_center: usize,
    pub center_span: f64,
}

impl Default for T1Grid {
    fn default() -> Self {
        Self { beta_min: 1e-3, beta_max: 10.0, n_beta: 160, n_center: 11, center_span: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct T1Estimate {
    pub lambda_hat: f64,
    /// The minimized objective, `1/λ̂`.
    pub inverse_lambda: f64,
    pub center: Vec<f64>,
    pub beta: f64,
    pub sample_size: usize,
}

/// `1/λ̂ = min_{a,β} (1/β²)(1 + log (1/N)Σᵢ exp(β‖xᵢ − a‖²))` over the grid,
/// skipping every `β` at or beyond the first one where the MGF estimate
/// looks divergent for that center.
pub fn t1_lambda_upper(samples: &[f64], dim: usize, grid: &T1Grid) -> Result<T1Estimate> {
    let n = rows(samples, dim)?;
    if grid.n_beta < 2 || grid.n_center == 0 || !(grid.beta_min > 0.0 && grid.beta_max > grid.beta_min) {
        return Err(Error::InvalidParameter("degenerate T1 grid".into()));
    }
    let mut mean = vec![0.0; dim];
    for x in samples.chunks(dim) {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n as f64);
    }
    let mut std = vec![0.0; dim];
    for x in samples.chunks(dim) {
        std.iter_mut()
            .zip(x.iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n as f64);
    }
    std.iter_mut().for_each(|s| *s = s.sqrt());

    let mut centers = vec![mean.clone()];
    if grid.n_center > 1 {
        for a in 0..dim {
            for c in 0..grid.n_center {
                let t = -grid.center_span + 2.0 * grid.center_span * c as f64 / (grid.n_center - 1) as f64;
                if t == 0.0 {
                    continue;
                }
                let mut p = mean.clone();
                p[a] += t * std[a];
                centers.push(p);
            }
        }
    }
    let ratio = (grid.beta_max / grid.beta_min).ln() / (grid.n_beta - 1) as f64;
    let betas: Vec<f64> = (0..grid.n_beta).map(|i| grid.beta_min * (ratio * i as f64).exp()).collect();
    let top = ((n as f64 * MGF_TOP_FRACTION).ceil() as usize).max(1);

    let best = centers
        .par_iter()
        .map(|center| {
            let mut r2: Vec<f64> = samples.chunks(dim).map(|x| crate::kernels::sq_dist(x, center)).collect();
            r2.sort_by(f64::total_cmp);
            let r2_max = r2[n - 1];
            let mut best: Option<(f64, f64)> = None;
            for &beta in &betas {
                // shift by the largest exponent; the top-`top` terms are the largest distances
                let mut all = Compensated::default();
                let mut head = Compensated::default();
                for (k, v) in r2.iter().enumerate() {
                    let w = (beta * (v - r2_max)).exp();
                    all.add(w);
                    if k >= n - top {
                        head.add(w);
                    }
                }
                if head.value() > MGF_TOP_SHARE_LIMIT * all.value() {
                    break;
                }
                let log_mgf = beta * r2_max + (all.value() / n as f64).ln();
                let objective = (1.0 + log_mgf) / (beta * beta);
                if best.is_none_or(|(o, _)| objective < o) {
                    best = Some((objective, beta));
                }
            }
            best.map(|(o, b)| (o, b, center.clone()))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .min_by(|p, q| p.0.total_cmp(&q.0));

    match best {
        Some((objective, beta, center)) => Ok(T1Estimate {
            lambda_hat: 1.0 / objective,
            inverse_lambda: objective,
            center,
            beta,
            sample_size: n,
        }),
        None => Err(Error::MgfDivergence),
    }
}
