//! Finitely supported measures, moments and mollification by the standard bump.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::norms::CostSpec;
use crate::quadrature::{integrate_1d, integrate_box, QuadOptions};
use crate::rng;

/// Finitely supported probability measure on R^d.
///
/// Construction merges repeated points, drops zero weights and renormalizes,
/// so every value of this type has distinct points and weights summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;
    fn try_from(r: RawMeasure) -> Result<Self> {
        DiscreteMeasure::new(r.points, r.weights)
    }
}

fn point_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point
    x.iter().map(|t| if *t == 0.0 { 0u64 } else { t.to_bits() }).collect()
}

impl DiscreteMeasure {
    /// Build from points and nonnegative weights (any positive total).
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidParameter(format!("{} points but {} weights", points.len(), weights.len())));
        }
        let dim = points.first().map(Vec::len).ok_or_else(|| Error::InvalidParameter("empty measure".into()))?;
        if dim == 0 {
            return Err(Error::InvalidParameter("points must have positive dimension".into()));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(points.len());
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        let mut ws: Vec<f64> = Vec::with_capacity(points.len());
        for (x, w) in points.into_iter().zip(weights) {
            check_dim(dim, x.len())?;
            if !(w >= 0.0 && w.is_finite()) || x.iter().any(|t| !t.is_finite()) {
                return Err(Error::InvalidParameter("weights must be finite and nonnegative, points finite".into()));
            }
            if w == 0.0 {
                continue;
            }
            match index.get(&point_key(&x)) {
                Some(&i) => ws[i] += w,
                None => {
                    index.insert(point_key(&x), pts.len());
                    pts.push(x);
                    ws.push(w);
                }
            }
        }
        let total: f64 = ws.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("total weight must be positive".into()));
        }
        // already-normalized input is kept bit-for-bit so serialization round-trips
        if (total - 1.0).abs() > 1e-14 {
            ws.iter_mut().for_each(|w| *w /= total);
        }
        Ok(DiscreteMeasure { points: pts, weights: ws })
    }

    pub fn dirac(x: Vec<f64>) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    /// Equal weights on the given points (repeated points accumulate weight).
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// `sum_i w_i f(x_i)`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Image measure under `map`; coincident images merge.
    pub fn pushforward<F: FnMut(&[f64]) -> Vec<f64>>(&self, mut map: F) -> Result<Self> {
        let pts = self.points.iter().map(|x| map(x)).collect();
        Self::new(pts, self.weights.clone())
    }

    /// Image under a per-atom map `f(index, point)`.
    pub fn pushforward_indexed<F: FnMut(usize, &[f64]) -> Vec<f64>>(&self, mut map: F) -> Result<Self> {
        let pts = self.points.iter().enumerate().map(|(i, x)| map(i, x)).collect();
        Self::new(pts, self.weights.clone())
    }

    /// Rows `[weight, x_1, ..., x_d]`, one per atom.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(|(x, w)| std::iter::once(w).chain(x.iter().copied()).collect()).collect()
    }

    /// Inverse of [`DiscreteMeasure::rows`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut pts = Vec::with_capacity(rows.len());
        let mut ws = Vec::with_capacity(rows.len());
        for r in rows {
            let (w, x) = r.split_first().ok_or_else(|| Error::InvalidParameter("empty row".into()))?;
            ws.push(*w);
            pts.push(x.to_vec());
        }
        Self::new(pts, ws)
    }

    /// Stable 64-bit fingerprint of the atoms, used to derive per-measure seeds.
    pub fn fingerprint(&self) -> u64 {
        let words: Vec<u64> =
            self.iter().flat_map(|(x, w)| std::iter::once(w.to_bits()).chain(x.iter().map(|t| t.to_bits()))).collect();
        rng::derive_seed(self.len() as u64, &words)
    }
}

/// One atom of a [`MetaMeasure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaAtom {
    pub mass: f64,
    pub measure: DiscreteMeasure,
}

/// Finite positive measure on the space of measures, finitely supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MetaAtom>", into = "Vec<MetaAtom>")]
pub struct MetaMeasure {
    atoms: Vec<MetaAtom>,
}

impl TryFrom<Vec<MetaAtom>> for MetaMeasure {
    type Error = Error;
    fn try_from(atoms: Vec<MetaAtom>) -> Result<Self> {
        MetaMeasure::new(atoms)
    }
}

impl From<MetaMeasure> for Vec<MetaAtom> {
    fn from(m: MetaMeasure) -> Self {
        m.atoms
    }
}

impl MetaMeasure {
    pub fn new(atoms: Vec<MetaAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("meta-measure needs at least one atom".into()));
        }
        if atoms.iter().any(|a| !(a.mass > 0.0 && a.mass.is_finite())) {
            return Err(Error::InvalidParameter("meta-measure masses must be positive and finite".into()));
        }
        Ok(MetaMeasure { atoms })
    }

    pub fn atoms(&self) -> &[MetaAtom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }
}

/// Scale `eps` of the standard mollifier plus the quadrature controls used with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub eps: f64,
    /// Overrides the per-dimension default quadrature controls.
    #[serde(default)]
    pub quad: Option<QuadOptions>,
}

impl MollifierSpec {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("mollifier scale must lie in (0, 1), got {eps}")));
        }
        Ok(MollifierSpec { eps, quad: None })
    }

    pub fn with_quad(mut self, quad: QuadOptions) -> Self {
        self.quad = Some(quad);
        self
    }

    pub fn quad_for(&self, dim: usize) -> QuadOptions {
        self.quad.unwrap_or_else(|| QuadOptions::for_dim(dim))
    }
}

/// `Gamma(n / 2)` for a positive integer `n`.
fn gamma_half(n: usize) -> f64 {
    let (mut g, mut x) = if n % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while x + 0.5 < n as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

fn bump_profile(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Normalizing constant of `exp(-1/(1-|z|^2))` on the unit ball of R^d,
/// by radial quadrature.
pub fn bump_normalizer(dim: usize) -> f64 {
    static CACHE: [OnceLock<f64>; 8] = [const { OnceLock::new() }; 8];
    let compute = || {
        let opts = QuadOptions { rel_tol: 1e-14, abs_tol: 0.0, max_level: 14, nodes: 10 };
        let radial = integrate_1d(|r| r.powi(dim as i32 - 1) * bump_profile(r * r), 0.0, 1.0, &opts)
            .expect("radial bump integral converges")
            .value;
        let sphere = 2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma_half(dim);
        sphere * radial
    };
    match CACHE.get(dim.wrapping_sub(1)) {
        Some(cell) => *cell.get_or_init(compute),
        None => compute(),
    }
}

/// Normalized standard bump `kappa(z)`, supported on the closed Euclidean unit ball.
pub fn bump_density(z: &[f64]) -> f64 {
    let r2: f64 = z.iter().map(|t| t * t).sum();
    bump_profile(r2) / bump_normalizer(z.len())
}

/// `sum_i w_i ||x_i||^p`, the unrooted p-th moment in the cost's norm.
pub fn moment_p(mu: &DiscreteMeasure, cost: &CostSpec) -> Result<f64> {
    check_dim(cost.dim(), mu.dim())?;
    Ok(mu.integrate(|x| cost.norm.norm(x).powf(cost.p)))
}

/// `int f d(mu * kappa_eps) = sum_i w_i int f(x_i + eps z) kappa(z) dz`,
/// with the inner integral by tensor Gauss-Legendre on `[-1, 1]^d`.
pub fn mollified_expectation<F>(mu: &DiscreteMeasure, moll: &MollifierSpec, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let d = mu.dim();
    let eps = moll.eps;
    let z_norm = bump_normalizer(d);
    let integrand = |z: &[f64]| {
        let r2: f64 = z.iter().map(|t| t * t).sum();
        if r2 >= 1.0 {
            return 0.0;
        }
        let k = bump_profile(r2) / z_norm;
        let mut y = vec![0.0; d];
        let mut acc = 0.0;
        for (x, w) in mu.iter() {
            for i in 0..d {
                y[i] = x[i] + eps * z[i];
            }
            acc += w * f(&y);
        }
        k * acc
    };
    Ok(integrate_box(integrand, d, -1.0, 1.0, &moll.quad_for(d))?.value)
}

/// `C_eps = int ||x||^p kappa_eps(x) dx`, the unrooted p-th kernel moment.
pub fn kernel_moment(moll: &MollifierSpec, cost: &CostSpec) -> Result<f64> {
    let d = cost.dim();
    let eps = moll.eps;
    let scale = eps.powi(-(d as i32));
    let integrand = |x: &[f64]| {
        let zz: Vec<f64> = x.iter().map(|t| t / eps).collect();
        cost.norm.norm(x).powf(cost.p) * scale * bump_density(&zz)
    };
    Ok(integrate_box(integrand, d, -eps, eps, &moll.quad_for(d))?.value)
}

/// `n` i.i.d. draws of `X + eps U`, `X ~ mu`, `U ~ kappa`, as an empirical measure.
pub fn sample_mollified(mu: &DiscreteMeasure, moll: &MollifierSpec, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, "sample_mollified");
    let d = mu.dim();
    let mut cum = Vec::with_capacity(mu.len());
    let mut acc = 0.0;
    for w in mu.weights() {
        acc += w;
        cum.push(acc);
    }
    let mut out = Vec::with_capacity(n);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let i = cum.partition_point(|c| *c <= u).min(mu.len() - 1);
        sample_bump(&mut rng, &mut z);
        out.push(mu.points()[i].iter().zip(&z).map(|(x, t)| x + moll.eps * t).collect());
    }
    DiscreteMeasure::uniform(out)
}

/// Rejection sampler for the bump: uniform proposals in the cube, acceptance
/// `e * exp(-1/(1-|z|^2))`, which is at most 1.
fn sample_bump(rng: &mut rng::Rng, z: &mut [f64]) {
    loop {
        for t in z.iter_mut() {
            *t = 2.0 * rng.random::<f64>() - 1.0;
        }
        let r2: f64 = z.iter().map(|t| t * t).sum();
        if r2 < 1.0 && rng.random::<f64>() < (1.0 - 1.0 / (1.0 - r2)).exp() {
            return;
        }
    }
}

/// Rooted moments around mollification: `s(mu_eps)^(1/p) <= s(mu)^(1/p) + C_eps^(1/p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentContraction {
    pub mollified: f64,
    pub original: f64,
    pub kernel: f64,
    /// `s(mu)^(1/p) + C_eps^(1/p) - s(mu_eps)^(1/p)`
    pub slack: f64,
}

pub fn moment_contraction(mu: &DiscreteMeasure, moll: &MollifierSpec, cost: &CostSpec) -> Result<MomentContraction> {
    let p = cost.p;
    let mollified = mollified_expectation(mu, moll, |y| cost.norm.norm(y).powf(p))?;
    let original = moment_p(mu, cost)?;
    let kernel = kernel_moment(moll, cost)?;
    let slack = original.powf(1.0 / p) + kernel.powf(1.0 / p) - mollified.powf(1.0 / p);
    Ok(MomentContraction { mollified, original, kernel, slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormSpec;

    fn euclid(d: usize, p: f64) -> CostSpec {
        CostSpec::new(NormSpec::euclidean(d).unwrap(), p).unwrap()
    }

    #[test]
    fn construction_merges_and_normalizes() {
        let m = DiscreteMeasure::new(
            vec![vec![1.0], vec![2.0], vec![1.0], vec![-0.0], vec![0.0]],
            vec![1.0, 1.0, 2.0, 0.5, 0.5],
        )
        .unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.points()[0], vec![1.0]);
        assert!((m.weights()[0] - 0.6).abs() < 1e-15);
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(DiscreteMeasure::new(vec![vec![1.0]], vec![0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0, 1.0]).is_err());
        let z = DiscreteMeasure::new(vec![vec![1.0], vec![3.0]], vec![0.0, 2.0]).unwrap();
        assert_eq!(z.len(), 1);
    }

    #[test]
    fn moment_examples() {
        let c2 = euclid(2, 2.0);
        assert_eq!(moment_p(&DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap(), &c2).unwrap(), 0.0);
        let m = DiscreteMeasure::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((moment_p(&m, &c2).unwrap() - 1.0).abs() < 1e-15);
        let r = DiscreteMeasure::new(vec![vec![2.0], vec![-1.0]], vec![0.25, 0.75]).unwrap();
        assert!((moment_p(&r, &euclid(1, 3.0)).unwrap() - 2.75).abs() < 1e-14);
    }

    #[test]
    fn bump_normalizer_reference() {
        // independent high-precision value of int_{-1}^{1} exp(-1/(1-t^2)) dt
        assert!((bump_normalizer(1) - 0.443_993_816_168_079_4).abs() < 1e-13);
        // d = 2: 2 pi int_0^1 r exp(-1/(1-r^2)) dr
        assert!((bump_normalizer(2) - 0.466_512_393_178_330).abs() < 1e-11);
    }

    #[test]
    fn kernel_integrates_to_one() {
        for d in 1..=3 {
            let mu = DiscreteMeasure::dirac(vec![0.3; d]).unwrap();
            let moll = MollifierSpec::new(0.2).unwrap();
            let one = mollified_expectation(&mu, &moll, |_| 1.0).unwrap();
            assert!((one - 1.0).abs() < 1e-6, "d={d}: {one}");
        }
    }

    #[test]
    fn linear_fields_pass_through() {
        let mu = DiscreteMeasure::new(vec![vec![0.5, -1.0], vec![2.0, 0.25]], vec![0.3, 0.7]).unwrap();
        let moll = MollifierSpec::new(0.4).unwrap();
        let f = |x: &[f64]| 2.0 * x[0] - 3.0 * x[1];
        let exact = mu.integrate(f);
        assert!((mollified_expectation(&mu, &moll, f).unwrap() - exact).abs() < 1e-10);
    }

    #[test]
    fn kernel_moment_regression_and_scaling() {
        let c = euclid(1, 2.0);
        let m1 = kernel_moment(&MollifierSpec::new(0.5).unwrap(), &c).unwrap();
        // int t^2 kappa(t) dt for the 1-D bump, from an independent high-precision quadrature
        let unit = 0.158_113_636_263_798;
        assert!((m1 / 0.25 - unit).abs() < 1e-9, "{}", m1 / 0.25);
        let m2 = kernel_moment(&MollifierSpec::new(0.1).unwrap(), &c).unwrap();
        assert!((m2 / 0.01 - unit).abs() < 1e-9);
        // support bound: C_eps <= eps^p eta'^p
        let one = CostSpec::new(NormSpec::one_norm(2).unwrap(), 3.0).unwrap();
        let eps = 0.3;
        let m = kernel_moment(&MollifierSpec::new(eps).unwrap(), &one).unwrap();
        assert!(m <= (eps * one.norm.eta_prime()).powf(3.0));
    }

    #[test]
    fn sampler_support_and_determinism() {
        let mu = DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![3.0, 1.0]], vec![0.5, 0.5]).unwrap();
        let moll = MollifierSpec::new(1e-3).unwrap();
        let s = sample_mollified(&mu, &moll, 500, 11).unwrap();
        assert_eq!(s, sample_mollified(&mu, &moll, 500, 11).unwrap());
        assert_ne!(s, sample_mollified(&mu, &moll, 500, 12).unwrap());
        for (y, _) in s.iter() {
            let near = mu.points().iter().any(|x| crate::norms::l2(&[y[0] - x[0], y[1] - x[1]]) <= 1e-3);
            assert!(near);
        }
        let one = sample_mollified(&mu, &moll, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.weights(), &[1.0]);
    }

    #[test]
    fn contraction_holds_rooted() {
        let mu = DiscreteMeasure::new(vec![vec![1.0, 0.5], vec![-0.5, 2.0]], vec![0.4, 0.6]).unwrap();
        let moll = MollifierSpec::new(0.3).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let r = moment_contraction(&mu, &moll, &euclid(2, p)).unwrap();
            assert!(r.slack >= -1e-9, "p={p}: {r:?}");
        }
    }
}
