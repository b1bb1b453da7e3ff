//! Cylinder functions `F(mu) = psi(int phi_1 dmu, ..., int phi_N dmu)`, their
//! Wasserstein differential, and two-sided probes of the metric slope.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::measures::DiscreteMeasure;
use crate::norms::{approx_duality_map, default_direction_count, direction_dictionary, duality_map, CostSpec};
use crate::quadrature::composite_rule;
use crate::rng;
use crate::transport::{solve_ot, TransportSolution};

/// `s_L(t) = t` on `[-L, L]`, then saturating smoothly (C^1) towards `+-(L + 1)`.
pub fn smooth_clamp(t: f64, level: f64) -> f64 {
    if t.abs() <= level {
        t
    } else {
        t.signum() * (level + 1.0 - (-(t.abs() - level)).exp())
    }
}

pub fn smooth_clamp_derivative(t: f64, level: f64) -> f64 {
    if t.abs() <= level {
        1.0
    } else {
        (-(t.abs() - level)).exp()
    }
}

/// `coef * prod_k z_k^powers[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

fn poly_value_grad(terms: &[Monomial], z: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let mut value = 0.0;
    for m in terms {
        value += m.coef * m.powers.iter().zip(z).map(|(e, t)| t.powi(*e as i32)).product::<f64>();
    }
    if let Some(g) = grad {
        g.iter_mut().for_each(|t| *t = 0.0);
        for m in terms {
            for k in 0..z.len() {
                if m.powers[k] == 0 {
                    continue;
                }
                let mut term = m.coef * m.powers[k] as f64 * z[k].powi(m.powers[k] as i32 - 1);
                for (l, (e, t)) in m.powers.iter().zip(z).enumerate() {
                    if l != k {
                        term *= t.powi(*e as i32);
                    }
                }
                g[k] += term;
            }
        }
    }
    value
}

fn check_terms(terms: &[Monomial], arity: usize) -> Result<()> {
    for m in terms {
        check_dim(arity, m.powers.len())?;
        if !m.coef.is_finite() {
            return Err(Error::InvalidParameter("non-finite polynomial coefficient".into()));
        }
    }
    Ok(())
}

/// Bounded C^1 field on R^d from the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothScalarField {
    /// `P(s_C(x_1), ..., s_C(x_d))`: the polynomial itself on `[-C, C]^d`.
    ClampedPolynomial { terms: Vec<Monomial>, clamp: f64 },
    /// `A exp(-|x - c|^2 / (2 w^2))`
    GaussianBump { center: Vec<f64>, width: f64, amplitude: f64 },
    /// `s_L(<a, x>)`
    ClampedLinear { covector: Vec<f64>, level: f64 },
}

impl SmoothScalarField {
    pub fn dim(&self) -> usize {
        match self {
            SmoothScalarField::ClampedPolynomial { terms, .. } => terms.first().map_or(0, |m| m.powers.len()),
            SmoothScalarField::GaussianBump { center, .. } => center.len(),
            SmoothScalarField::ClampedLinear { covector, .. } => covector.len(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            SmoothScalarField::ClampedPolynomial { terms, clamp } => {
                if terms.is_empty() || !(*clamp > 0.0) {
                    return Err(Error::InvalidParameter("polynomial field needs terms and a positive clamp".into()));
                }
                check_terms(terms, dim)
            }
            SmoothScalarField::GaussianBump { center, width, amplitude } => {
                check_dim(dim, center.len())?;
                if !(*width > 0.0 && amplitude.is_finite()) {
                    return Err(Error::InvalidParameter("bump needs positive width".into()));
                }
                Ok(())
            }
            SmoothScalarField::ClampedLinear { covector, level } => {
                check_dim(dim, covector.len())?;
                if !(*level > 0.0) {
                    return Err(Error::InvalidParameter("linear field needs a positive saturation level".into()));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            SmoothScalarField::ClampedPolynomial { terms, clamp } => {
                let z: Vec<f64> = x.iter().map(|t| smooth_clamp(*t, *clamp)).collect();
                poly_value_grad(terms, &z, None)
            }
            SmoothScalarField::GaussianBump { center, width, amplitude } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            SmoothScalarField::ClampedLinear { covector, level } => {
                smooth_clamp(covector.iter().zip(x).map(|(a, t)| a * t).sum(), *level)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SmoothScalarField::ClampedPolynomial { terms, clamp } => {
                let z: Vec<f64> = x.iter().map(|t| smooth_clamp(*t, *clamp)).collect();
                let mut g = vec![0.0; x.len()];
                poly_value_grad(terms, &z, Some(&mut g));
                for (gk, t) in g.iter_mut().zip(x) {
                    *gk *= smooth_clamp_derivative(*t, *clamp);
                }
                g
            }
            SmoothScalarField::GaussianBump { center, width, amplitude } => {
                let w2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let e = amplitude * (-r2 / (2.0 * w2)).exp();
                x.iter().zip(center).map(|(a, c)| -e * (a - c) / w2).collect()
            }
            SmoothScalarField::ClampedLinear { covector, level } => {
                let s = smooth_clamp_derivative(covector.iter().zip(x).map(|(a, t)| a * t).sum(), *level);
                covector.iter().map(|a| s * a).collect()
            }
        }
    }

    /// Bound on the Euclidean norm of the gradient over all of R^d.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            SmoothScalarField::ClampedPolynomial { terms, clamp } => {
                let b = clamp + 1.0;
                let d = self.dim();
                let per_axis: Vec<f64> = (0..d)
                    .map(|k| {
                        terms
                            .iter()
                            .filter(|m| m.powers[k] > 0)
                            .map(|m| {
                                let deg: u32 = m.powers.iter().sum();
                                m.coef.abs() * m.powers[k] as f64 * b.powi(deg as i32 - 1)
                            })
                            .sum::<f64>()
                    })
                    .collect();
                per_axis.iter().map(|t| t * t).sum::<f64>().sqrt()
            }
            SmoothScalarField::GaussianBump { width, amplitude, .. } => amplitude.abs() / (width * 1f64.exp().sqrt()),
            SmoothScalarField::ClampedLinear { covector, .. } => covector.iter().map(|a| a * a).sum::<f64>().sqrt(),
        }
    }
}

/// Smooth outer map `psi: R^N -> R` with gradient oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuterMap {
    /// `s_L(u)`, `N = 1`; the identity on `[-L, L]`.
    Clamp {
        level: f64,
    },
    /// `P(s_C(u_1), ..., s_C(u_N))`
    Polynomial {
        terms: Vec<Monomial>,
        clamp: f64,
    },
    /// `left(u[..split]) + right(u[split..])`
    Sum {
        left: Box<OuterMap>,
        right: Box<OuterMap>,
        split: usize,
    },
    Scale {
        factor: f64,
        inner: Box<OuterMap>,
    },
    /// `inner(u[map[0]], ..., u[map[M-1]])` for `u` of length `arity`.
    Reindex {
        arity: usize,
        map: Vec<usize>,
        inner: Box<OuterMap>,
    },
    /// `s_L(inner(u))`
    ClampAfter {
        level: f64,
        inner: Box<OuterMap>,
    },
    Constant {
        value: f64,
        arity: usize,
    },
}

impl OuterMap {
    pub fn arity(&self) -> usize {
        match self {
            OuterMap::Clamp { .. } => 1,
            OuterMap::Polynomial { terms, .. } => terms.first().map_or(0, |m| m.powers.len()),
            OuterMap::Sum { right, split, .. } => split + right.arity(),
            OuterMap::Scale { inner, .. } | OuterMap::ClampAfter { inner, .. } => inner.arity(),
            OuterMap::Reindex { arity, .. } | OuterMap::Constant { arity, .. } => *arity,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            OuterMap::Clamp { level } | OuterMap::ClampAfter { level, .. } if !(*level > 0.0) => {
                Err(Error::InvalidParameter("clamp level must be positive".into()))
            }
            OuterMap::Polynomial { terms, clamp } => {
                if terms.is_empty() || !(*clamp > 0.0) {
                    return Err(Error::InvalidParameter("outer polynomial needs terms and a positive clamp".into()));
                }
                check_terms(terms, self.arity())
            }
            OuterMap::Sum { left, right, split } => {
                check_dim(*split, left.arity())?;
                left.validate()?;
                right.validate()
            }
            OuterMap::Scale { factor, inner } => {
                if !factor.is_finite() {
                    return Err(Error::InvalidParameter("non-finite scale".into()));
                }
                inner.validate()
            }
            OuterMap::Reindex { arity, map, inner } => {
                check_dim(inner.arity(), map.len())?;
                if let Some(bad) = map.iter().find(|&&k| k >= *arity) {
                    return Err(Error::OutOfRange(format!("reindex target {bad} >= arity {arity}")));
                }
                inner.validate()
            }
            OuterMap::ClampAfter { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    /// Value, with the gradient accumulated into `grad` (which is overwritten).
    pub fn value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            OuterMap::Clamp { level } => {
                grad[0] = smooth_clamp_derivative(u[0], *level);
                smooth_clamp(u[0], *level)
            }
            OuterMap::Polynomial { terms, clamp } => {
                let z: Vec<f64> = u.iter().map(|t| smooth_clamp(*t, *clamp)).collect();
                let v = poly_value_grad(terms, &z, Some(grad));
                for (g, t) in grad.iter_mut().zip(u) {
                    *g *= smooth_clamp_derivative(*t, *clamp);
                }
                v
            }
            OuterMap::Sum { left, right, split } => {
                let (gl, gr) = grad.split_at_mut(*split);
                left.value_grad(&u[..*split], gl) + right.value_grad(&u[*split..], gr)
            }
            OuterMap::Scale { factor, inner } => {
                let v = inner.value_grad(u, grad);
                grad.iter_mut().for_each(|g| *g *= factor);
                factor * v
            }
            OuterMap::Reindex { map, inner, .. } => {
                let w: Vec<f64> = map.iter().map(|&k| u[k]).collect();
                let mut gi = vec![0.0; map.len()];
                let v = inner.value_grad(&w, &mut gi);
                grad.iter_mut().for_each(|g| *g = 0.0);
                for (&k, g) in map.iter().zip(gi) {
                    grad[k] += g;
                }
                v
            }
            OuterMap::ClampAfter { level, inner } => {
                let v = inner.value_grad(u, grad);
                let s = smooth_clamp_derivative(v, *level);
                grad.iter_mut().for_each(|g| *g *= s);
                smooth_clamp(v, *level)
            }
            OuterMap::Constant { value, .. } => {
                grad.iter_mut().for_each(|g| *g = 0.0);
                *value
            }
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let mut g = vec![0.0; u.len()];
        self.value_grad(u, &mut g)
    }
}

/// `F = psi o L_phi` with its representation `(psi, phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCylinder")]
pub struct CylinderFunction {
    dim: usize,
    inner: Vec<SmoothScalarField>,
    outer: OuterMap,
}

#[derive(Deserialize)]
struct RawCylinder {
    dim: usize,
    inner: Vec<SmoothScalarField>,
    outer: OuterMap,
}

impl TryFrom<RawCylinder> for CylinderFunction {
    type Error = Error;
    fn try_from(r: RawCylinder) -> Result<Self> {
        CylinderFunction::new(r.dim, r.inner, r.outer)
    }
}

impl CylinderFunction {
    pub fn new(dim: usize, inner: Vec<SmoothScalarField>, outer: OuterMap) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        check_dim(outer.arity(), inner.len())?;
        outer.validate()?;
        for f in &inner {
            f.validate(dim)?;
        }
        Ok(CylinderFunction { dim, inner, outer })
    }

    /// `F(mu) = c` for every `mu`.
    pub fn constant(dim: usize, value: f64) -> Self {
        CylinderFunction { dim, inner: Vec::new(), outer: OuterMap::Constant { value, arity: 0 } }
    }

    /// `F(mu) = s_L(int <a, x> dmu)` with the inner field saturating at the same level.
    pub fn linear(covector: Vec<f64>, level: f64) -> Result<Self> {
        let dim = covector.len();
        Self::new(dim, vec![SmoothScalarField::ClampedLinear { covector, level }], OuterMap::Clamp { level })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner(&self) -> &[SmoothScalarField] {
        &self.inner
    }

    pub fn outer(&self) -> &OuterMap {
        &self.outer
    }

    /// `L_phi` of the weighted points.
    pub fn linear_statistics<'a, I>(&self, atoms: I) -> Vec<f64>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut l = vec![0.0; self.inner.len()];
        for (x, w) in atoms {
            for (ln, f) in l.iter_mut().zip(&self.inner) {
                *ln += w * f.value(x);
            }
        }
        l
    }

    /// `d psi` at `L_phi(mu)`.
    pub fn outer_gradient(&self, mu: &DiscreteMeasure) -> Vec<f64> {
        let l = self.linear_statistics(mu.iter());
        let mut g = vec![0.0; l.len()];
        self.outer.value_grad(&l, &mut g);
        g
    }

    /// `sum_n g_n grad phi_n(x)` for a precomputed outer gradient `g`.
    pub fn differential_with(&self, outer_grad: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (g, f) in outer_grad.iter().zip(&self.inner) {
            if *g != 0.0 {
                for (o, t) in out.iter_mut().zip(f.gradient(x)) {
                    *o += g * t;
                }
            }
        }
        out
    }
}

pub fn eval_cylinder(f: &CylinderFunction, mu: &DiscreteMeasure) -> Result<f64> {
    check_dim(f.dim, mu.dim())?;
    Ok(f.outer.value(&f.linear_statistics(mu.iter())))
}

/// `DF[mu](x) = sum_n d_n psi(L_phi(mu)) grad phi_n(x)`.
pub fn differential(f: &CylinderFunction, mu: &DiscreteMeasure, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(f.dim, mu.dim())?;
    check_dim(f.dim, x.len())?;
    Ok(f.differential_with(&f.outer_gradient(mu), x))
}

/// `(sum_i w_i ||DF[mu](x_i)||_*^{p'})^{1/p'}`.
pub fn differential_norm(f: &CylinderFunction, mu: &DiscreteMeasure, cost: &CostSpec) -> Result<f64> {
    check_dim(f.dim, mu.dim())?;
    check_dim(f.dim, cost.dim())?;
    let g = f.outer_gradient(mu);
    let q = cost.p_conj();
    let s: f64 = mu.iter().map(|(x, w)| w * cost.norm.dual(&f.differential_with(&g, x)).powf(q)).sum();
    Ok(s.powf(1.0 / q))
}

/// `d/dt F((id + t u)_# mu)` at `t = 0`, with `u[i]` the displacement of atom `i`.
pub fn directional_derivative(f: &CylinderFunction, mu: &DiscreteMeasure, u: &[Vec<f64>]) -> Result<f64> {
    check_dim(mu.len(), u.len())?;
    let g = f.outer_gradient(mu);
    Ok(mu.iter().zip(u).map(|((x, w), ui)| w * dot(&f.differential_with(&g, x), ui)).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(s, t)| s * t).sum()
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

/// Displacement interpolation `((1-t) x + t y)_# plan`.
pub fn geodesic_interpolate(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    sol: &TransportSolution,
    t: f64,
) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange(format!("interpolation time {t} outside [0, 1]")));
    }
    let (pts, ws) = sol.plan.iter().map(|&(i, j, g)| (lerp(&mu.points()[i], &nu.points()[j], t), g)).unzip();
    DiscreteMeasure::new(pts, ws)
}

/// `int <DF[mu_s](x^s), y - x> dplan`, the derivative of `F` along the interpolation.
pub fn derivative_along_curve(
    f: &CylinderFunction,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    sol: &TransportSolution,
    s: f64,
) -> Result<f64> {
    let mid = geodesic_interpolate(mu, nu, sol, s)?;
    let g = f.outer_gradient(&mid);
    Ok(sol
        .plan
        .iter()
        .map(|&(i, j, w)| {
            let (x, y) = (&mu.points()[i], &nu.points()[j]);
            let v: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
            w * dot(&f.differential_with(&g, &lerp(x, y, s)), &v)
        })
        .sum())
}

/// Default `t` schedule for [`slope_lower_bound`].
pub const DEFAULT_T_SCHEDULE: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Difference quotients along `(id + t u_eps)_# mu` and their limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeLower {
    /// Extrapolation to `t -> 0` of the quotients at the three smallest `t`.
    pub value: f64,
    /// `(t, (F(nu_t) - F(mu)) / (t ||u_eps||_{L^p(mu)}))`
    pub ratios: Vec<(f64, f64)>,
    pub max_ratio: f64,
}

/// Value at 0 of the polynomial through the given points.
fn neville_at_zero(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len();
    let mut p: Vec<f64> = pts.iter().map(|q| q.1).collect();
    for k in 1..n {
        for i in 0..n - k {
            let (ti, tk) = (pts[i].0, pts[i + k].0);
            p[i] = (tk * p[i] - ti * p[i + 1]) / (tk - ti);
        }
    }
    p[0]
}

pub fn slope_lower_bound(
    f: &CylinderFunction,
    mu: &DiscreteMeasure,
    cost: &CostSpec,
    eps: f64,
    t_schedule: &[f64],
) -> Result<SlopeLower> {
    let dirs = direction_dictionary(&cost.norm, default_direction_count(cost.dim()));
    slope_lower_bound_with(f, mu, cost, eps, t_schedule, &dirs)
}

/// [`slope_lower_bound`] over a caller-supplied direction dictionary.
pub fn slope_lower_bound_with(
    f: &CylinderFunction,
    mu: &DiscreteMeasure,
    cost: &CostSpec,
    eps: f64,
    t_schedule: &[f64],
    directions: &[Vec<f64>],
) -> Result<SlopeLower> {
    check_dim(f.dim, mu.dim())?;
    check_dim(f.dim, cost.dim())?;
    if t_schedule.is_empty() || t_schedule.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter("t schedule must be nonempty and positive".into()));
    }
    let g = f.outer_gradient(mu);
    let u: Vec<Vec<f64>> = mu
        .points()
        .iter()
        .map(|x| approx_duality_map(cost, &f.differential_with(&g, x), eps, directions))
        .collect::<Result<_>>()?;
    let unorm =
        mu.iter().zip(&u).map(|((_, w), ui)| w * cost.norm.norm(ui).powf(cost.p)).sum::<f64>().powf(1.0 / cost.p);
    if unorm == 0.0 {
        return Ok(SlopeLower { value: 0.0, ratios: t_schedule.iter().map(|t| (*t, 0.0)).collect(), max_ratio: 0.0 });
    }
    let f0 = eval_cylinder(f, mu)?;
    let mut ratios = Vec::with_capacity(t_schedule.len());
    for &t in t_schedule {
        let moved = mu.iter().zip(&u).map(|((x, w), ui)| {
            let y: Vec<f64> = x.iter().zip(ui).map(|(a, b)| a + t * b).collect();
            (y, w)
        });
        let l = {
            let pts: Vec<(Vec<f64>, f64)> = moved.collect();
            f.linear_statistics(pts.iter().map(|(y, w)| (y.as_slice(), *w)))
        };
        ratios.push((t, (f.outer.value(&l) - f0) / (t * unorm)));
    }
    let max_ratio = ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let mut smallest = ratios.clone();
    smallest.sort_by(|a, b| a.0.total_cmp(&b.0));
    smallest.truncate(3);
    Ok(SlopeLower { value: neville_at_zero(&smallest), ratios, max_ratio })
}

/// One radius of the upper slope probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeEntry {
    pub radius: f64,
    /// Max quotient over all pairs sampled at this radius or smaller.
    pub max_ratio: f64,
    /// Max quotient among the pairs sampled at exactly this radius.
    pub own_max_ratio: f64,
    /// Largest per-pair certificate `int_0^1 ||DF[mu_t]|| dt` at this radius.
    pub max_certificate: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperProbe {
    pub entries: Vec<ProbeEntry>,
    /// Pairs whose quotient exceeded their own certificate.
    pub certificate_violations: usize,
    pub skipped: usize,
}

fn steepest_field(f: &CylinderFunction, mu: &DiscreteMeasure, cost: &CostSpec) -> Result<Vec<Vec<f64>>> {
    let g = f.outer_gradient(mu);
    let diffs: Vec<Vec<f64>> = mu.points().iter().map(|x| f.differential_with(&g, x)).collect();
    match diffs.iter().map(|v| duality_map(cost, v)).collect::<Result<Vec<_>>>() {
        Ok(j) => Ok(j),
        Err(Error::NonDifferentiable(_)) => {
            let dirs = direction_dictionary(&cost.norm, default_direction_count(cost.dim()));
            diffs.iter().map(|v| approx_duality_map(cost, v, 1e-3, &dirs)).collect()
        }
        Err(e) => Err(e),
    }
}

fn lp_norm(mu: &DiscreteMeasure, v: &[Vec<f64>], cost: &CostSpec) -> f64 {
    mu.weights().iter().zip(v).map(|(w, vi)| w * cost.norm.norm(vi).powf(cost.p)).sum::<f64>().powf(1.0 / cost.p)
}

/// Difference quotients `|F(mu') - F(mu'')| / W_p(mu', mu'')` over pairs
/// `mu', mu'' = (id -+ (r/2) v)_# mu` with `||v||_{L^p(mu)} = 1`, so both lie in the
/// `r/2`-ball around `mu`. The first pair at each radius follows the steepest
/// field `j(DF)`; the others blend it with bounded random fields.
pub fn slope_upper_probe(
    f: &CylinderFunction,
    mu: &DiscreteMeasure,
    cost: &CostSpec,
    radius_schedule: &[f64],
    pairs_per_radius: usize,
    seed: u64,
) -> Result<UpperProbe> {
    check_dim(f.dim, mu.dim())?;
    check_dim(f.dim, cost.dim())?;
    if radius_schedule.iter().any(|r| !(*r > 0.0)) || radius_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("radius schedule must be positive and strictly decreasing".into()));
    }
    let d = f.dim;
    let steep = steepest_field(f, mu, cost)?;
    let steep_norm = lp_norm(mu, &steep, cost);
    let (gl_t, gl_w) = composite_rule(0.0, 1.0, 2, 6);
    let mut rng = rng::stream(seed, "slope_upper_probe");
    let mut raw = Vec::with_capacity(radius_schedule.len());
    let mut violations = 0;
    let mut skipped = 0;
    for &r in radius_schedule {
        let mut best = 0.0f64;
        let mut best_cert = 0.0f64;
        let mut used = 0;
        for k in 0..pairs_per_radius {
            let alpha = if k == 0 { 1.0 } else { rng.random::<f64>() };
            let noise: Vec<Vec<f64>> =
                (0..mu.len()).map(|_| (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()).collect();
            let noise_norm = lp_norm(mu, &noise, cost);
            let a = if steep_norm > 0.0 { alpha / steep_norm } else { 0.0 };
            let b = if steep_norm > 0.0 { (1.0 - alpha) / noise_norm } else { 1.0 / noise_norm };
            let mut v: Vec<Vec<f64>> =
                steep.iter().zip(&noise).map(|(s, e)| s.iter().zip(e).map(|(x, y)| a * x + b * y).collect()).collect();
            let vn = lp_norm(mu, &v, cost);
            if !(vn > 0.0) {
                skipped += 1;
                continue;
            }
            v.iter_mut().flatten().for_each(|t| *t /= vn);
            let shift = |sign: f64| {
                mu.pushforward_indexed(|i, x| x.iter().zip(&v[i]).map(|(p, q)| p + sign * 0.5 * r * q).collect())
            };
            let (m1, m2) = (shift(-1.0)?, shift(1.0)?);
            let sol = solve_ot(&m1, &m2, cost)?;
            if !(sol.wp > 0.0) {
                skipped += 1;
                continue;
            }
            let ratio = (eval_cylinder(f, &m2)? - eval_cylinder(f, &m1)?).abs() / sol.wp;
            let mut cert = 0.0;
            for (t, w) in gl_t.iter().zip(&gl_w) {
                cert += w * differential_norm(f, &geodesic_interpolate(&m1, &m2, &sol, *t)?, cost)?;
            }
            if ratio > cert + 1e-6 * (1.0 + cert) {
                violations += 1;
            }
            best = best.max(ratio);
            best_cert = best_cert.max(cert);
            used += 1;
        }
        raw.push((r, best, best_cert, used));
    }
    let mut entries = Vec::with_capacity(raw.len());
    let mut running = 0.0f64;
    for &(radius, own, cert, pairs) in raw.iter().rev() {
        running = running.max(own);
        entries.push(ProbeEntry { radius, max_ratio: running, own_max_ratio: own, max_certificate: cert, pairs });
    }
    entries.reverse();
    Ok(UpperProbe { entries, certificate_violations: violations, skipped })
}

/// Vector-space operations on representations.
pub trait LinearSpace: Sized {
    fn add(&self, other: &Self) -> Result<Self>;
    fn sub(&self, other: &Self) -> Result<Self>;
    fn scale(&self, factor: f64) -> Self;
}

impl LinearSpace for CylinderFunction {
    /// Concatenated inner fields under a split sum of the outer maps.
    fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut inner = self.inner.clone();
        inner.extend(other.inner.iter().cloned());
        let outer = OuterMap::Sum {
            left: Box::new(self.outer.clone()),
            right: Box::new(other.outer.clone()),
            split: self.inner.len(),
        };
        CylinderFunction::new(self.dim, inner, outer)
    }

    fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    fn scale(&self, factor: f64) -> Self {
        CylinderFunction {
            dim: self.dim,
            inner: self.inner.clone(),
            outer: OuterMap::Scale { factor, inner: Box::new(self.outer.clone()) },
        }
    }
}

/// Random cylinder function whose clamps stay inactive on the `radius`-box.
///
/// Two or three inner fields drawn from the catalog under an outer polynomial
/// with linear and quadratic terms.
pub fn random_cylinder(rng: &mut rng::Rng, dim: usize, radius: f64) -> CylinderFunction {
    let n = rng.random_range(2..=3);
    let mut inner = Vec::with_capacity(n);
    for k in 0..n {
        let field = match (k + rng.random_range(0..3)) % 3 {
            0 => {
                let covector: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                let level = covector.iter().map(|a| a.abs()).sum::<f64>() * (radius + 1.0) + 1.0;
                SmoothScalarField::ClampedLinear { covector, level }
            }
            1 => SmoothScalarField::GaussianBump {
                center: (0..dim).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect(),
                width: radius * (0.5 + rng.random::<f64>()),
                amplitude: 2.0 * rng.random::<f64>() - 1.0,
            },
            _ => {
                let mut terms = Vec::new();
                for i in 0..dim {
                    let mut lin = vec![0; dim];
                    lin[i] = 1;
                    terms.push(Monomial { coef: rng.random::<f64>() - 0.5, powers: lin });
                    let mut quad = vec![0; dim];
                    quad[i] = 2;
                    quad[(i + 1) % dim] += 1;
                    terms.push(Monomial { coef: 0.3 * (rng.random::<f64>() - 0.5), powers: quad });
                }
                SmoothScalarField::ClampedPolynomial { terms, clamp: radius + 1.0 }
            }
        };
        inner.push(field);
    }
    let mut terms: Vec<Monomial> = (0..n)
        .map(|i| {
            let mut e = vec![0; n];
            e[i] = 1;
            Monomial { coef: 2.0 * rng.random::<f64>() - 1.0, powers: e }
        })
        .collect();
    let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
    let mut e = vec![0; n];
    e[a] += 1;
    e[b] += 1;
    terms.push(Monomial { coef: rng.random::<f64>() - 0.5, powers: e });
    let bound = inner
        .iter()
        .map(|f| match f {
            SmoothScalarField::ClampedLinear { level, .. } => level + 1.0,
            SmoothScalarField::GaussianBump { amplitude, .. } => amplitude.abs(),
            SmoothScalarField::ClampedPolynomial { terms, clamp } => {
                terms.iter().map(|m| m.coef.abs() * (clamp + 1.0).powi(m.powers.iter().sum::<u32>() as i32)).sum()
            }
        })
        .fold(0.0, f64::max);
    CylinderFunction::new(dim, inner, OuterMap::Polynomial { terms, clamp: bound + 1.0 })
        .expect("generated representation is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormSpec;

    fn euclid(d: usize, p: f64) -> CostSpec {
        CostSpec::new(NormSpec::euclidean(d).unwrap(), p).unwrap()
    }

    fn random_measure(rng: &mut rng::Rng, n: usize, d: usize) -> DiscreteMeasure {
        let pts = (0..n).map(|_| (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()).collect();
        DiscreteMeasure::new(pts, (0..n).map(|_| 0.1 + rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn clamp_is_c1() {
        let l = 2.0;
        for t in [l - 1e-9, l + 1e-9, -l - 1e-9] {
            assert!((smooth_clamp(t, l) - t).abs() < 1e-8);
            assert!((smooth_clamp_derivative(t, l) - 1.0).abs() < 1e-8);
        }
        assert!(smooth_clamp(1e9, l) <= l + 1.0 && smooth_clamp(10.0, l) < l + 1.0);
    }

    #[test]
    fn linear_examples() {
        let f = CylinderFunction::linear(vec![1.0], 100.0).unwrap();
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(eval_cylinder(&f, &mu).unwrap(), 1.0);
        assert_eq!(differential(&f, &mu, &[0.3]).unwrap(), vec![1.0]);
        let g = CylinderFunction::linear(vec![3.0, -4.0], 100.0).unwrap();
        let nu = DiscreteMeasure::uniform(vec![vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!((differential_norm(&g, &nu, &euclid(2, 2.0)).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn constants_have_no_differential() {
        let f = CylinderFunction::constant(2, 4.5);
        let mu = DiscreteMeasure::dirac(vec![1.0, 2.0]).unwrap();
        assert_eq!(eval_cylinder(&f, &mu).unwrap(), 4.5);
        assert_eq!(differential(&f, &mu, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(differential_norm(&f, &mu, &euclid(2, 3.0)).unwrap(), 0.0);
        let lo = slope_lower_bound(&f, &mu, &euclid(2, 2.0), 1e-3, &DEFAULT_T_SCHEDULE).unwrap();
        assert_eq!(lo.value, 0.0);
        let up = slope_upper_probe(&f, &mu, &euclid(2, 2.0), &[0.5, 0.1], 4, 1).unwrap();
        assert!(up.entries.iter().all(|e| e.max_ratio == 0.0));
    }

    #[test]
    fn product_of_bumps_by_direct_summation() {
        let b1 = SmoothScalarField::GaussianBump { center: vec![0.0, 0.5], width: 0.7, amplitude: 1.2 };
        let b2 = SmoothScalarField::GaussianBump { center: vec![-0.3, 0.1], width: 1.1, amplitude: -0.4 };
        let outer = OuterMap::Polynomial { terms: vec![Monomial { coef: 1.0, powers: vec![1, 1] }], clamp: 10.0 };
        let f = CylinderFunction::new(2, vec![b1, b2], outer).unwrap();
        let mu = DiscreteMeasure::new(vec![vec![0.2, 0.4], vec![-1.0, 0.3]], vec![0.25, 0.75]).unwrap();
        let g1 = |x: f64, y: f64| 1.2 * (-(x * x + (y - 0.5) * (y - 0.5)) / (2.0 * 0.49)).exp();
        let g2 = |x: f64, y: f64| -0.4 * (-((x + 0.3) * (x + 0.3) + (y - 0.1) * (y - 0.1)) / (2.0 * 1.21)).exp();
        let u = 0.25 * g1(0.2, 0.4) + 0.75 * g1(-1.0, 0.3);
        let v = 0.25 * g2(0.2, 0.4) + 0.75 * g2(-1.0, 0.3);
        assert!((eval_cylinder(&f, &mu).unwrap() - u * v).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng::stream(1, "cyl-grad");
        for _ in 0..20 {
            let f = random_cylinder(&mut rng, 3, 1.0);
            for field in f.inner() {
                let x: Vec<f64> = (0..3).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
                let g = field.gradient(&x);
                let gn = g.iter().map(|t| t * t).sum::<f64>().sqrt();
                assert!(gn <= field.lipschitz_bound() * (1.0 + 1e-12));
                for k in 0..3 {
                    let h = 1e-5;
                    let (mut a, mut b) = (x.clone(), x.clone());
                    a[k] += h;
                    b[k] -= h;
                    let fd = (field.value(&a) - field.value(&b)) / (2.0 * h);
                    assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + gn), "{field:?}");
                }
            }
        }
    }

    #[test]
    fn differential_matches_finite_differences() {
        let mut rng = rng::stream(2, "cyl-diff");
        for _ in 0..20 {
            let f = random_cylinder(&mut rng, 2, 1.0);
            let mu = random_measure(&mut rng, 6, 2);
            let u: Vec<Vec<f64>> =
                (0..mu.len()).map(|_| vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).collect();
            let exact = directional_derivative(&f, &mu, &u).unwrap();
            let h = 1e-5;
            let push = |s: f64| mu.pushforward_indexed(|i, x| vec![x[0] + s * u[i][0], x[1] + s * u[i][1]]).unwrap();
            let fd = (eval_cylinder(&f, &push(h)).unwrap() - eval_cylinder(&f, &push(-h)).unwrap()) / (2.0 * h);
            assert!((fd - exact).abs() <= 1e-3 * exact.abs().max(1e-6), "{fd} vs {exact}");
        }
    }

    #[test]
    fn representations_agree() {
        let mut rng = rng::stream(3, "cyl-repr");
        let cost = euclid(2, 3.0);
        let f = random_cylinder(&mut rng, 2, 1.0);
        let n = f.inner().len();
        let mut rev = f.inner().to_vec();
        rev.reverse();
        let g = CylinderFunction::new(
            2,
            rev,
            OuterMap::ClampAfter {
                level: 1e6,
                inner: Box::new(OuterMap::Reindex {
                    arity: n,
                    map: (0..n).rev().collect(),
                    inner: Box::new(f.outer().clone()),
                }),
            },
        )
        .unwrap();
        for _ in 0..100 {
            let mu = random_measure(&mut rng, 5, 2);
            let a = differential_norm(&f, &mu, &cost).unwrap();
            let b = differential_norm(&g, &mu, &cost).unwrap();
            assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }

    #[test]
    fn linear_space_operations() {
        let mut rng = rng::stream(4, "cyl-lin");
        let f = random_cylinder(&mut rng, 2, 1.0);
        let g = random_cylinder(&mut rng, 2, 1.0);
        let mu = random_measure(&mut rng, 4, 2);
        let (fv, gv) = (eval_cylinder(&f, &mu).unwrap(), eval_cylinder(&g, &mu).unwrap());
        assert!((eval_cylinder(&f.add(&g).unwrap(), &mu).unwrap() - (fv + gv)).abs() < 1e-14);
        assert!((eval_cylinder(&f.sub(&g).unwrap(), &mu).unwrap() - (fv - gv)).abs() < 1e-14);
        assert!((eval_cylinder(&f.scale(2.5), &mu).unwrap() - 2.5 * fv).abs() < 1e-14);
    }

    #[test]
    fn interpolation_endpoints_and_diracs() {
        let cost = euclid(2, 2.0);
        let mu = DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap();
        let nu = DiscreteMeasure::dirac(vec![2.0, 4.0]).unwrap();
        let sol = solve_ot(&mu, &nu, &cost).unwrap();
        assert_eq!(geodesic_interpolate(&mu, &nu, &sol, 0.25).unwrap().points(), &[vec![0.5, 1.0]]);
        assert_eq!(geodesic_interpolate(&mu, &nu, &sol, 0.0).unwrap(), mu);
        assert_eq!(geodesic_interpolate(&mu, &nu, &sol, 1.0).unwrap(), nu);
        assert!(geodesic_interpolate(&mu, &nu, &sol, 1.5).is_err());
        let f = CylinderFunction::linear(vec![1.0, -0.5], 100.0).unwrap();
        for s in [0.0, 0.3, 1.0] {
            assert!((derivative_along_curve(&f, &mu, &nu, &sol, s).unwrap() - 0.0).abs() < 1e-15);
        }
        let g = CylinderFunction::linear(vec![1.0, 0.5], 100.0).unwrap();
        assert!((derivative_along_curve(&g, &mu, &nu, &sol, 0.6).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn neville_recovers_polynomials() {
        let pts: Vec<(f64, f64)> = [0.1, 0.01, 0.001].iter().map(|&t| (t, 2.0 - 3.0 * t + 5.0 * t * t)).collect();
        assert!((neville_at_zero(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_for_linear_functional() {
        let a = vec![0.6, -0.8];
        let f = CylinderFunction::linear(a, 100.0).unwrap();
        let mu = DiscreteMeasure::uniform(vec![vec![0.0, 0.0], vec![1.0, 0.5]]).unwrap();
        let lo = slope_lower_bound(&f, &mu, &euclid(2, 2.0), 1e-3, &DEFAULT_T_SCHEDULE).unwrap();
        assert!(lo.value >= 0.99 && lo.value <= 1.0 + 1e-12, "{lo:?}");
        let up = slope_upper_probe(&f, &mu, &euclid(2, 2.0), &[0.5, 0.1], 8, 3).unwrap();
        assert_eq!(up.certificate_violations, 0);
        for e in &up.entries {
            assert!(e.max_ratio <= 1.0 + 1e-9 && e.max_ratio >= 0.999, "{e:?}");
        }
    }

    #[test]
    fn cylinder_json_round_trip() {
        let mut rng = rng::stream(5, "cyl-json");
        let f = random_cylinder(&mut rng, 2, 1.0);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"kind\""));
        assert_eq!(serde_json::from_str::<CylinderFunction>(&s).unwrap(), f);
    }
}
