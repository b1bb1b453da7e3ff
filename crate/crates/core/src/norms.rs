//! Norms on R^d: evaluation, dual norms, duality maps, approximate selections
//! and the smoothed monotone family.
//!
//! Serialized form is `{dim, kind, params}`:
//!
//! | kind         | params                                   |
//! |--------------|------------------------------------------|
//! | `euclidean`  | none                                     |
//! | `p_norm`     | `{p}` with `p > 1`, `"inf"` for the sup norm |
//! | `one_norm`   | none                                     |
//! | `weighted_p` | `{p, weights}`, weights positive, one per axis |
//! | `smoothed`   | `{base, k}`, base a non-smoothed norm, `k >= 1` |

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{check_dim, Error, Result};

/// Which norm a [`NormSpec`] describes.
#[derive(Debug, Clone, PartialEq)]
pub enum NormKind {
    Euclidean,
    /// `p` in `(1, inf]`; `f64::INFINITY` is the sup norm.
    PNorm {
        p: f64,
    },
    OneNorm,
    /// `(sum_i w_i |x_i|^p)^(1/p)` with finite `p > 1`.
    WeightedP {
        p: f64,
        weights: Vec<f64>,
    },
    /// Gauge of `C_k = A_k + B(0, 1/k)` built over `base`.
    Smoothed {
        base: Box<NormSpec>,
        k: u32,
    },
}

/// A norm on R^d.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "RawNorm", into = "RawNorm")]
pub struct NormSpec {
    dim: usize,
    kind: NormKind,
    cache: Arc<OnceLock<SmoothData>>,
}

impl PartialEq for NormSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.kind == other.kind
    }
}

impl fmt::Debug for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormSpec").field("dim", &self.dim).field("kind", &self.kind).finish()
    }
}

#[derive(Serialize, Deserialize)]
struct RawNorm {
    dim: usize,
    kind: String,
    #[serde(default)]
    params: Value,
}

impl TryFrom<RawNorm> for NormSpec {
    type Error = Error;

    fn try_from(raw: RawNorm) -> Result<Self> {
        let bad = |m: &str| Error::InvalidParameter(format!("{} norm: {m}", raw.kind));
        let get_p = |v: &Value| -> Result<f64> {
            match v.get("p") {
                Some(Value::Number(n)) => n.as_f64().ok_or_else(|| bad("p is not a number")),
                Some(Value::String(s)) if s == "inf" || s == "infinity" => Ok(f64::INFINITY),
                _ => Err(bad("missing exponent p")),
            }
        };
        match raw.kind.as_str() {
            "euclidean" => NormSpec::euclidean(raw.dim),
            "one_norm" => NormSpec::one_norm(raw.dim),
            "p_norm" => NormSpec::p_norm(raw.dim, get_p(&raw.params)?),
            "weighted_p" => {
                let p = get_p(&raw.params)?;
                let weights: Vec<f64> = raw
                    .params
                    .get("weights")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()
                    .map_err(|e| bad(&e.to_string()))?
                    .ok_or_else(|| bad("missing weights"))?;
                if weights.len() != raw.dim {
                    return Err(Error::DimensionMismatch { expected: raw.dim, got: weights.len() });
                }
                NormSpec::weighted_p(p, weights)
            }
            "smoothed" => {
                let base: NormSpec = raw
                    .params
                    .get("base")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()
                    .map_err(|e| bad(&e.to_string()))?
                    .ok_or_else(|| bad("missing base"))?;
                check_dim(raw.dim, base.dim)?;
                let k = raw.params.get("k").and_then(Value::as_u64).ok_or_else(|| bad("missing k"))?;
                NormSpec::smoothed(base, u32::try_from(k).map_err(|_| bad("k too large"))?)
            }
            other => Err(Error::InvalidParameter(format!("unknown norm kind '{other}'"))),
        }
    }
}

impl From<NormSpec> for RawNorm {
    fn from(n: NormSpec) -> Self {
        let p_value = |p: f64| if p.is_infinite() { json!("inf") } else { json!(p) };
        let (kind, params) = match &n.kind {
            NormKind::Euclidean => ("euclidean", json!({})),
            NormKind::OneNorm => ("one_norm", json!({})),
            NormKind::PNorm { p } => ("p_norm", json!({ "p": p_value(*p) })),
            NormKind::WeightedP { p, weights } => ("weighted_p", json!({ "p": p, "weights": weights })),
            NormKind::Smoothed { base, k } => {
                ("smoothed", json!({ "base": serde_json::to_value(base.as_ref()).unwrap_or(Value::Null), "k": k }))
            }
        };
        RawNorm { dim: n.dim, kind: kind.to_string(), params }
    }
}

impl NormSpec {
    fn make(dim: usize, kind: NormKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("norm dimension must be positive".into()));
        }
        Ok(NormSpec { dim, kind, cache: Arc::new(OnceLock::new()) })
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::make(dim, NormKind::Euclidean)
    }

    pub fn one_norm(dim: usize) -> Result<Self> {
        Self::make(dim, NormKind::OneNorm)
    }

    /// l^p norm, `p` in `(1, inf]`.
    pub fn p_norm(dim: usize, p: f64) -> Result<Self> {
        if !(p > 1.0) || p.is_nan() {
            return Err(Error::InvalidParameter(format!("p_norm exponent must lie in (1, inf], got {p}")));
        }
        Self::make(dim, NormKind::PNorm { p })
    }

    pub fn sup_norm(dim: usize) -> Result<Self> {
        Self::p_norm(dim, f64::INFINITY)
    }

    pub fn weighted_p(p: f64, weights: Vec<f64>) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("weighted_p exponent must be finite and > 1, got {p}")));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("weights must be positive and finite".into()));
        }
        Self::make(weights.len(), NormKind::WeightedP { p, weights })
    }

    /// Smoothed norm with index `k` over a non-smoothed base, `dim <= 3`.
    pub fn smoothed(base: NormSpec, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("smoothing index k must be positive".into()));
        }
        if matches!(base.kind, NormKind::Smoothed { .. }) {
            return Err(Error::InvalidParameter("smoothed base must not itself be smoothed".into()));
        }
        if base.dim > 3 {
            return Err(Error::InvalidParameter(format!("smoothed norms need dim <= 3, got {}", base.dim)));
        }
        let dim = base.dim;
        Self::make(dim, NormKind::Smoothed { base: Box::new(base), k })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    /// `||x||`. Panics if `x.len() != dim`; see [`eval_norm`] for the checked form.
    pub fn norm(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "vector length does not match norm dimension");
        match &self.kind {
            NormKind::Euclidean => l2(x),
            NormKind::OneNorm => x.iter().map(|t| t.abs()).sum(),
            NormKind::PNorm { p } => lp(x, *p),
            NormKind::WeightedP { p, weights } => weighted_lp(x, *p, weights),
            NormKind::Smoothed { .. } => self.smooth().gauge(x),
        }
    }

    /// `||v||_* = sup { <v, x> : ||x|| <= 1 }`. Panics on length mismatch.
    pub fn dual(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.dim, "covector length does not match norm dimension");
        match &self.kind {
            NormKind::Euclidean => l2(v),
            NormKind::OneNorm => v.iter().fold(0.0, |m, t| m.max(t.abs())),
            NormKind::PNorm { p } => lp(v, conjugate(*p)),
            NormKind::WeightedP { p, weights } => {
                let q = conjugate(*p);
                let s: f64 = v.iter().zip(weights).map(|(t, w)| w.powf(1.0 - q) * t.abs().powf(q)).sum();
                s.powf(1.0 / q)
            }
            NormKind::Smoothed { .. } => self.smooth().dual(v),
        }
    }

    /// Gradient of `v -> ||v||_*` at `v != 0`.
    pub fn dual_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        let n = self.dual(v);
        if n == 0.0 {
            return Err(Error::NonDifferentiable(v.to_vec()));
        }
        match &self.kind {
            NormKind::Euclidean => Ok(v.iter().map(|t| t / n).collect()),
            NormKind::PNorm { p } if p.is_infinite() => {
                if v.contains(&0.0) {
                    return Err(Error::NonDifferentiable(v.to_vec()));
                }
                Ok(v.iter().map(|t| t.signum()).collect())
            }
            NormKind::PNorm { p } => {
                let q = conjugate(*p);
                if q.is_infinite() {
                    return sup_gradient(v);
                }
                Ok(v.iter().map(|t| t.signum() * (t.abs() / n).powf(q - 1.0)).collect())
            }
            NormKind::OneNorm => sup_gradient(v),
            NormKind::WeightedP { p, weights } => {
                let q = conjugate(*p);
                Ok(v.iter()
                    .zip(weights)
                    .map(|(t, w)| w.powf(1.0 - q) * t.signum() * (t.abs() / n).powf(q - 1.0))
                    .collect())
            }
            NormKind::Smoothed { .. } => {
                let h = 1e-6 * (1.0 + n);
                Ok(central_difference(|u| self.dual(u), v, h))
            }
        }
    }

    /// `eta = max |x| / ||x||`, so that `|x| <= eta ||x||`.
    pub fn eta(&self) -> f64 {
        let d = self.dim as f64;
        match &self.kind {
            NormKind::Euclidean | NormKind::OneNorm => 1.0,
            NormKind::PNorm { p } => d.powf((0.5 - 1.0 / p).max(0.0)),
            _ => 1.0 / sphere_optimize(self.dim, |u| -self.norm(u)).1.abs(),
        }
    }

    /// `eta' = max ||x|| / |x|`, so that `||x|| <= eta' |x|`.
    pub fn eta_prime(&self) -> f64 {
        let d = self.dim as f64;
        match &self.kind {
            NormKind::Euclidean => 1.0,
            NormKind::OneNorm => d.sqrt(),
            NormKind::PNorm { p } => d.powf((1.0 / p - 0.5).max(0.0)),
            _ => sphere_optimize(self.dim, |u| self.norm(u)).1,
        }
    }

    fn smooth(&self) -> &SmoothData {
        self.cache.get_or_init(|| match &self.kind {
            NormKind::Smoothed { base, k } => SmoothData::new(base, *k),
            _ => unreachable!("smoothing data requested for a plain norm"),
        })
    }
}

/// Conjugate exponent `p / (p - 1)`, with `1 <-> inf`.
pub fn conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

pub(crate) fn l2(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

fn lp(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return x.iter().fold(0.0, |m, t| m.max(t.abs()));
    }
    if p == 1.0 {
        return x.iter().map(|t| t.abs()).sum();
    }
    // scale by the max entry to avoid overflow for large p
    let m = x.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * x.iter().map(|t| (t.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn weighted_lp(x: &[f64], p: f64, w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(t, w)| w * t.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn sup_gradient(v: &[f64]) -> Result<Vec<f64>> {
    let m = v.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let hits: Vec<usize> = (0..v.len()).filter(|&i| v[i].abs() == m).collect();
    if hits.len() != 1 {
        return Err(Error::NonDifferentiable(v.to_vec()));
    }
    let mut g = vec![0.0; v.len()];
    g[hits[0]] = v[hits[0]].signum();
    Ok(g)
}

fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Norm plus exponent: the cost `c(x, y) = ||x - y||^p / p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCost")]
pub struct CostSpec {
    pub norm: NormSpec,
    pub p: f64,
}

#[derive(Deserialize)]
struct RawCost {
    norm: NormSpec,
    p: f64,
}

impl TryFrom<RawCost> for CostSpec {
    type Error = Error;
    fn try_from(r: RawCost) -> Result<Self> {
        CostSpec::new(r.norm, r.p)
    }
}

impl CostSpec {
    pub fn new(norm: NormSpec, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("cost exponent must lie in (1, inf), got {p}")));
        }
        Ok(CostSpec { norm, p })
    }

    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    /// Conjugate exponent `p'`.
    pub fn p_conj(&self) -> f64 {
        conjugate(self.p)
    }

    /// `||x - y||^p / p`.
    pub fn c(&self, x: &[f64], y: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.norm.norm(&diff).powf(self.p) / self.p
    }

    /// Same exponent over a different norm.
    pub fn with_norm(&self, norm: NormSpec) -> CostSpec {
        CostSpec { norm, p: self.p }
    }
}

/// Checked `||x||`.
pub fn eval_norm(spec: &NormSpec, x: &[f64]) -> Result<f64> {
    check_dim(spec.dim(), x.len())?;
    Ok(spec.norm(x))
}

/// Checked `||v||_*`.
pub fn eval_dual_norm(spec: &NormSpec, v: &[f64]) -> Result<f64> {
    check_dim(spec.dim(), v.len())?;
    Ok(spec.dual(v))
}

/// `j_{p'}(v)`, the gradient of `||v||_*^{p'} / p'`; zero at `v = 0`.
pub fn duality_map(cost: &CostSpec, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(cost.dim(), v.len())?;
    let n = cost.norm.dual(v);
    if n == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let q = cost.p_conj();
    if let NormKind::Smoothed { .. } = cost.norm.kind() {
        let h = 1e-6 * (1.0 + n);
        return Ok(central_difference(|u| cost.norm.dual(u).powf(q) / q, v, h));
    }
    let g = cost.norm.dual_gradient(v)?;
    let scale = n.powf(q - 1.0);
    Ok(g.into_iter().map(|t| scale * t).collect())
}

/// `j_{p',eps}(v) = ||v||_*^{p'/p} x_N` with `N` the first direction such that
/// `<v, x_N> >= ||v||_* - eps`. Directions are rescaled to unit norm first.
pub fn approx_duality_map(cost: &CostSpec, v: &[f64], eps: f64, directions: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_dim(cost.dim(), v.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let n = cost.norm.dual(v);
    if n == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let scale = n.powf(cost.p_conj() / cost.p);
    for x in directions {
        check_dim(cost.dim(), x.len())?;
        let len = cost.norm.norm(x);
        if len == 0.0 {
            continue;
        }
        let pair: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / len;
        if pair >= n - eps {
            return Ok(x.iter().map(|t| scale * t / len).collect());
        }
    }
    Err(Error::NoNearSupremum { eps })
}

/// Default dictionary size per dimension.
pub fn default_direction_count(dim: usize) -> usize {
    match dim {
        1 => 2,
        2 => 4096,
        3 => 20_000,
        _ => 200_000,
    }
}

/// Deterministic low-discrepancy directions, unit in `norm`, led by the signed axes.
pub fn direction_dictionary(norm: &NormSpec, count: usize) -> Vec<Vec<f64>> {
    let d = norm.dim();
    let mut out = Vec::with_capacity(count + 2 * d);
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            out.push(e);
        }
    }
    if d > 1 {
        out.extend(sphere_points(d, count));
    }
    for x in &mut out {
        let n = norm.norm(x);
        x.iter_mut().for_each(|t| *t /= n);
    }
    out
}

/// Points on the Euclidean unit sphere: equal angles (d = 2), a Fibonacci
/// lattice (d = 3), radially projected Halton points (d >= 4).
pub fn sphere_points(d: usize, m: usize) -> Vec<Vec<f64>> {
    match d {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..m)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / m as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => {
            let primes = first_primes(d);
            let mut out = Vec::with_capacity(m);
            let mut i = 1u64;
            while out.len() < m {
                let x: Vec<f64> = primes.iter().map(|&b| 2.0 * radical_inverse(i, b) - 1.0).collect();
                i += 1;
                let n = l2(&x);
                if n > 1e-3 {
                    out.push(x.iter().map(|t| t / n).collect());
                }
            }
            out
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if (2..c).take_while(|k| k * k <= c).all(|k| c % k != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Maximize `f` over the Euclidean unit sphere: dense scan then a compass
/// search in the tangent space. Returns `(argmax, max)`.
pub(crate) fn sphere_optimize<F: Fn(&[f64]) -> f64>(d: usize, f: F) -> (Vec<f64>, f64) {
    let m = match d {
        1 => 2,
        2 => 2048,
        3 => 4000,
        _ => 20_000,
    };
    let start = sphere_points(d, m);
    let mut best = start[0].clone();
    let mut best_val = f(&best);
    for u in &start[1..] {
        let v = f(u);
        if v > best_val {
            best_val = v;
            best = u.clone();
        }
    }
    if d == 1 {
        return (best, best_val);
    }
    let step = 4.0 / (m as f64).powf(1.0 / (d as f64 - 1.0));
    refine_on_sphere(&f, best, best_val, step)
}

/// Compass search for a local maximum of `f` on the unit sphere near `u`.
fn refine_on_sphere<F: Fn(&[f64]) -> f64>(f: &F, mut u: Vec<f64>, mut val: f64, mut step: f64) -> (Vec<f64>, f64) {
    let d = u.len();
    let mut trial = vec![0.0; d];
    while step > 1e-13 {
        let basis = tangent_basis(&u);
        let mut improved = false;
        for e in &basis {
            for s in [1.0, -1.0] {
                for i in 0..d {
                    trial[i] = u[i] + s * step * e[i];
                }
                let n = l2(&trial);
                trial.iter_mut().for_each(|t| *t /= n);
                let v = f(&trial);
                if v > val {
                    val = v;
                    u.copy_from_slice(&trial);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (u, val)
}

fn tangent_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let d = u.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    for axis in 0..d {
        if basis.len() == d - 1 {
            break;
        }
        let mut e = vec![0.0; d];
        e[axis] = 1.0;
        let mut project = |w: &[f64]| {
            let dot: f64 = e.iter().zip(w).map(|(a, b)| a * b).sum();
            e.iter_mut().zip(w).for_each(|(a, b)| *a -= dot * b);
        };
        project(u);
        for b in &basis {
            project(b);
        }
        let n = l2(&e);
        if n > 1e-6 {
            basis.push(e.iter().map(|t| t / n).collect());
        }
    }
    basis
}

/// Precomputed geometry of `A_k = {a : ||a|| + |a|^2 / k <= 1 + eta^2 / k}`.
#[derive(Debug)]
struct SmoothData {
    base: NormSpec,
    /// `1 + eta^2 / k`
    c: f64,
    /// `1 / k`, radius of the added base-norm ball
    r: f64,
    /// coarse Euclidean unit directions with their boundary points on `A_k`
    dirs: Vec<Vec<f64>>,
    bnd: Vec<Vec<f64>>,
    step: f64,
}

impl SmoothData {
    fn new(base: &NormSpec, k: u32) -> Self {
        let eta = base.eta();
        let kf = f64::from(k);
        let d = base.dim();
        let m = match d {
            1 => 2,
            2 => 512,
            _ => 2000,
        };
        let mut sd = SmoothData {
            base: base.clone(),
            c: 1.0 + eta * eta / kf,
            r: 1.0 / kf,
            dirs: sphere_points(d, m),
            bnd: Vec::new(),
            step: if d == 1 { 0.0 } else { 4.0 / (m as f64).powf(1.0 / (d as f64 - 1.0)) },
        };
        sd.bnd = sd.dirs.iter().map(|u| sd.boundary_point(u)).collect();
        sd
    }

    /// Gauge of `A_k` in closed form: `t ||u|| + t^2 |u|^2 / k = c` solved for `t`.
    fn gauge_a(&self, u: &[f64]) -> f64 {
        let n = self.base.norm(u);
        let e2: f64 = u.iter().map(|t| t * t).sum();
        (n + (n * n + 4.0 * self.c * e2 * self.r).sqrt()) / (2.0 * self.c)
    }

    fn boundary_point(&self, u: &[f64]) -> Vec<f64> {
        let g = self.gauge_a(u);
        u.iter().map(|t| t / g).collect()
    }

    /// Max over the boundary of `A_k` of `obj(a)`, with the direction that attains it.
    fn boundary_max<F: Fn(&[f64]) -> f64>(&self, obj: F) -> f64 {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, a) in self.bnd.iter().enumerate() {
            let v = obj(a);
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        if self.base.dim() == 1 {
            return best_val;
        }
        let along = |u: &[f64]| obj(&self.boundary_point(u));
        refine_on_sphere(&along, self.dirs[best].clone(), best_val, self.step).1
    }

    /// Base-norm distance from `x` to `lambda A_k`.
    fn dist(&self, x: &[f64], lambda: f64) -> f64 {
        if self.gauge_a(x) <= lambda {
            return 0.0;
        }
        let neg = self.boundary_max(|a| {
            let diff: Vec<f64> = x.iter().zip(a).map(|(s, t)| s - lambda * t).collect();
            -self.base.norm(&diff)
        });
        -neg
    }

    /// Gauge of `C_k = A_k + B(0, 1/k)`: smallest `lambda` with `dist(x, lambda A_k) <= lambda / k`.
    fn gauge(&self, x: &[f64]) -> f64 {
        let nx = self.base.norm(x);
        if nx == 0.0 {
            return 0.0;
        }
        let f = |lam: f64| self.dist(x, lam) - lam * self.r;
        let lo = nx / (self.c + self.r);
        let mut hi = nx / (1.0 + self.r);
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        brent_root(f, lo, hi, 1e-15 * nx)
    }

    /// Support function of `C_k`: `h_A(v) + ||v||_{base,*} / k`.
    fn dual(&self, v: &[f64]) -> f64 {
        if v.iter().all(|t| *t == 0.0) {
            return 0.0;
        }
        let h_a = self.boundary_max(|a| a.iter().zip(v).map(|(s, t)| s * t).sum());
        h_a + self.r * self.base.dual(v)
    }
}

/// Brent's method for a sign change of `f` on `[a, b]` with `f(a) >= 0 >= f(b)` or vice versa.
pub(crate) fn brent_root<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    b
}
