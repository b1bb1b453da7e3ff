//! Gauss-Legendre rules: 1-D nodes, composite tensor-product integration on
//! boxes with level refinement, and a small 1-D adaptive helper.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Refinement controls for [`integrate_box`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    /// Stop when successive levels differ by less than `rel_tol * |estimate|` ...
    pub rel_tol: f64,
    /// ... or by less than `abs_tol`.
    pub abs_tol: f64,
    /// Panels per axis at level `l` is `2^l`.
    pub max_level: u32,
    /// Gauss-Legendre nodes per panel and axis.
    pub nodes: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-8, abs_tol: 1e-14, max_level: 6, nodes: 8 }
    }
}

impl QuadOptions {
    /// Defaults with the level cap scaled to the dimension so the work stays bounded.
    pub fn for_dim(dim: usize) -> Self {
        let (max_level, rel_tol) = match dim {
            0 | 1 => (12, 1e-8),
            2 => (7, 1e-8),
            _ => (4, 1e-6),
        };
        QuadOptions { max_level, rel_tol, ..Default::default() }
    }
}

/// Result of a refined integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    /// Difference between the last two levels.
    pub error: f64,
    pub level: u32,
}

/// Composite tensor Gauss-Legendre integral of `f` over the cube `[lo, hi]^dim`.
///
/// Levels are refined until two successive estimates agree within the
/// tolerances; running out of levels is an error rather than a silent answer.
pub fn integrate_box<F>(f: F, dim: usize, lo: f64, hi: f64, opts: &QuadOptions) -> Result<QuadEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    if dim == 0 {
        return Err(Error::InvalidParameter("quadrature dimension must be positive".into()));
    }
    let (gx, gw) = gauss_legendre(opts.nodes);
    let mut prev = tensor_level(&f, dim, lo, hi, 0, &gx, &gw);
    for level in 1..=opts.max_level {
        let cur = tensor_level(&f, dim, lo, hi, level, &gx, &gw);
        let err = (cur - prev).abs();
        if err <= opts.rel_tol * cur.abs() || err <= opts.abs_tol {
            return Ok(QuadEstimate { value: cur, error: err, level });
        }
        if level == opts.max_level {
            return Err(Error::QuadratureNonConvergence { estimate: cur, error: err, level });
        }
        prev = cur;
    }
    // max_level == 0: a single level cannot certify anything.
    Err(Error::QuadratureNonConvergence { estimate: prev, error: f64::INFINITY, level: 0 })
}

fn tensor_level<F>(f: &F, dim: usize, lo: f64, hi: f64, level: u32, gx: &[f64], gw: &[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let panels = 1usize << level;
    let h = (hi - lo) / panels as f64;
    // 1-D composite nodes along one axis.
    let mut xs = Vec::with_capacity(panels * gx.len());
    let mut ws = Vec::with_capacity(panels * gx.len());
    for p in 0..panels {
        let a = lo + p as f64 * h;
        for (x, w) in gx.iter().zip(gw) {
            xs.push(a + 0.5 * h * (x + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    let n = xs.len();
    let mut idx = vec![0usize; dim];
    let mut point = vec![xs[0]; dim];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            point[k] = xs[i];
            weight *= ws[i];
        }
        total += weight * f(&point);
        // odometer increment
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == dim {
                return total;
            }
        }
    }
}

/// Fixed composite Gauss-Legendre rule on `[a, b]` with `panels` panels.
pub fn composite_rule(a: f64, b: f64, panels: usize, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(nodes);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * nodes);
    let mut ws = Vec::with_capacity(panels * nodes);
    for p in 0..panels {
        let left = a + p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(left + 0.5 * h * (x + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Composite 1-D integral on `[a, b]`, doubling panels until converged.
pub fn integrate_1d<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadEstimate>
where
    F: Fn(f64) -> f64,
{
    let mut prev: Option<f64> = None;
    for level in 0..=opts.max_level {
        let (xs, ws) = composite_rule(a, b, 1 << level, opts.nodes);
        let cur: f64 = xs.iter().zip(&ws).map(|(x, w)| w * f(*x)).sum();
        if let Some(p) = prev {
            let err = (cur - p).abs();
            if err <= opts.rel_tol * cur.abs() || err <= opts.abs_tol {
                return Ok(QuadEstimate { value: cur, error: err, level });
            }
            if level == opts.max_level {
                return Err(Error::QuadratureNonConvergence { estimate: cur, error: err, level });
            }
        }
        prev = Some(cur);
    }
    Err(Error::QuadratureNonConvergence { estimate: prev.unwrap_or(f64::NAN), error: f64::INFINITY, level: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn box_integral_of_gaussian_product() {
        let f = |x: &[f64]| x.iter().map(|t| (-t * t).exp()).product::<f64>();
        let est = integrate_box(f, 2, -1.0, 1.0, &QuadOptions::default()).unwrap();
        // (sqrt(pi) erf(1))^2
        let one_d = 1.493_648_265_624_854_f64;
        assert!((est.value - one_d * one_d).abs() < 1e-12);
    }

    #[test]
    fn kinked_integrand_needs_levels_and_can_fail() {
        let opts = QuadOptions { rel_tol: 1e-15, abs_tol: 0.0, max_level: 2, nodes: 4 };
        let r = integrate_box(|x| (x[0] - 0.3).abs(), 1, -1.0, 1.0, &opts);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
        let est =
            integrate_1d(|x| (x - 0.3).abs(), -1.0, 1.0, &QuadOptions { max_level: 16, ..Default::default() }).unwrap();
        assert!((est.value - 1.09).abs() < 1e-6);
    }
}
