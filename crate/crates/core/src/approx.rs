//! Max-of-potentials approximation `G_k` of `mu -> W_p^p(mu_eps, nu) / p` and
//! coordinate projections.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::measures::{
    bump_density, kernel_moment, mollified_expectation, moment_p, sample_mollified, DiscreteMeasure, MollifierSpec,
};
use crate::norms::{CostSpec, NormKind, NormSpec};
use crate::quadrature::{integrate_1d, QuadOptions};
use crate::rng;
use crate::transport::{dual_potentials, solve_ot, wasserstein};

/// Seed of the mollification sample of `mu`: a function of the run seed and of
/// `mu` itself, so a measure is sampled identically wherever it appears.
pub fn sample_seed(seed: u64, mu: &DiscreteMeasure) -> u64 {
    rng::derive_seed(seed, &[mu.fingerprint()])
}

/// One dictionary member: potentials for `(nu, sampled mu^h_eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub grid: DiscreteMeasure,
    pub sample_seed: u64,
    /// Potential over `supp nu`, normalized at the anchor.
    pub phi_nu: Vec<f64>,
    /// `a_h = int phi_nu dnu`
    pub a: f64,
    /// `(1/p) W_p^p` of the sampled instance.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialDictionary {
    pub nu: DiscreteMeasure,
    pub radius: f64,
    pub cost: CostSpec,
    pub moll: MollifierSpec,
    pub sample_n: usize,
    pub seed: u64,
    pub entries: Vec<DictionaryEntry>,
}

impl PotentialDictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `u_h(y) = min_x (c(x, y) - phi_h(x)) + a_h` over `supp nu`.
    pub fn u(&self, h: usize, y: &[f64]) -> f64 {
        let e = &self.entries[h];
        self.active_piece(h, y).1 + e.a
    }

    /// Index of the minimizing `nu` atom (lowest on ties) and the minimum.
    fn active_piece(&self, h: usize, y: &[f64]) -> (usize, f64) {
        let e = &self.entries[h];
        let mut best = (0, f64::INFINITY);
        for (j, (x, f)) in self.nu.points().iter().zip(&e.phi_nu).enumerate() {
            let v = self.cost.c(x, y) - f;
            if v < best.1 {
                best = (j, v);
            }
        }
        best
    }
}

/// Solve every grid member against `nu` (in parallel) and record its potentials.
pub fn build_dictionary(
    nu: &DiscreteMeasure,
    grid: &[DiscreteMeasure],
    cost: &CostSpec,
    moll: &MollifierSpec,
    sample_n: usize,
    seed: u64,
) -> Result<PotentialDictionary> {
    check_dim(cost.dim(), nu.dim())?;
    let radius = nu.points().iter().map(|y| cost.norm.norm(y)).fold(0.0, f64::max);
    let entries = grid
        .par_iter()
        .map(|mu| {
            check_dim(cost.dim(), mu.dim())?;
            let s = sample_seed(seed, mu);
            let sample = sample_mollified(mu, moll, sample_n, s)?;
            let sol = solve_ot(&sample, nu, cost)?;
            let pot = dual_potentials(&sample, nu, cost, &sol)?;
            let a = nu.weights().iter().zip(&pot.psi).map(|(w, f)| w * f).sum();
            Ok(DictionaryEntry { grid: mu.clone(), sample_seed: s, phi_nu: pot.psi, a, value: sol.primal_cost })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialDictionary { nu: nu.clone(), radius, cost: cost.clone(), moll: moll.clone(), sample_n, seed, entries })
}

fn segment_quad() -> QuadOptions {
    QuadOptions { rel_tol: 1e-11, abs_tol: 1e-15, max_level: 14, nodes: 8 }
}

/// `int u_h d(delta_x * kappa_eps)` on the line, split at the kinks of `u_h`
/// (where the active `nu` atom changes) and at the `nu` atoms themselves.
fn mollified_u_1d(dict: &PotentialDictionary, h: usize, x: f64, eps: f64) -> Result<f64> {
    let (lo, hi) = (x - eps, x + eps);
    let piece = |y: f64| dict.active_piece(h, &[y]).0;
    let mut cuts = vec![lo, hi];
    let probes = 64;
    let grid: Vec<f64> = (0..=probes).map(|k| lo + (hi - lo) * k as f64 / probes as f64).collect();
    let tol = 1e-13 * (1.0 + x.abs() + eps);
    let mut stack: Vec<(f64, usize, f64, usize)> =
        grid.windows(2).map(|w| (w[0], piece(w[0]), w[1], piece(w[1]))).filter(|s| s.1 != s.3).collect();
    while let Some((a, pa, b, pb)) = stack.pop() {
        if b - a <= tol {
            cuts.push(0.5 * (a + b));
            continue;
        }
        let m = 0.5 * (a + b);
        let pm = piece(m);
        if pm != pa {
            stack.push((a, pa, m, pm));
        }
        if pm != pb {
            stack.push((m, pm, b, pb));
        }
    }
    cuts.extend(dict.nu.points().iter().map(|y| y[0]).filter(|y| *y > lo && *y < hi));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let e = &dict.entries[h];
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (s, t) = (w[0], w[1]);
        if t <= s {
            continue;
        }
        let j = piece(0.5 * (s + t));
        let xj = &dict.nu.points()[j];
        let fj = e.phi_nu[j];
        let f = |y: f64| bump_density(&[(y - x) / eps]) / eps * (dict.cost.c(xj, &[y]) - fj);
        total += integrate_1d(f, s, t, &segment_quad())?.value;
    }
    Ok(total + e.a)
}

/// `int u_h dmu_eps` for every dictionary member.
pub fn mollified_potential_integrals(dict: &PotentialDictionary, mu: &DiscreteMeasure) -> Result<Vec<f64>> {
    check_dim(dict.cost.dim(), mu.dim())?;
    let eps = dict.moll.eps;
    (0..dict.len())
        .into_par_iter()
        .map(|h| {
            if mu.dim() == 1 {
                let mut acc = 0.0;
                for (x, w) in mu.iter() {
                    acc += w * mollified_u_1d(dict, h, x[0], eps)?;
                }
                Ok(acc)
            } else {
                mollified_expectation(mu, &dict.moll, |y| dict.u(h, y))
            }
        })
        .collect()
}

/// `G_k(mu)` with its argmax (lowest index on ties).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GkValue {
    pub value: f64,
    pub argmax: usize,
}

/// Prefix maxima `G_1(mu), ..., G_K(mu)` of precomputed integrals.
pub fn prefix_max(integrals: &[f64]) -> Vec<GkValue> {
    let mut out: Vec<GkValue> = Vec::with_capacity(integrals.len());
    for (h, v) in integrals.iter().enumerate() {
        match out.last() {
            Some(prev) if prev.value >= *v => out.push(*prev),
            _ => out.push(GkValue { value: *v, argmax: h }),
        }
    }
    out
}

#[allow(non_snake_case)]
pub fn G_k(dict: &PotentialDictionary, mu: &DiscreteMeasure, k: usize) -> Result<GkValue> {
    if k == 0 || k > dict.len() {
        return Err(Error::OutOfRange(format!("k = {k} outside 1..={}", dict.len())));
    }
    let mut sub = dict.clone();
    sub.entries.truncate(k);
    Ok(*prefix_max(&mollified_potential_integrals(&sub, mu)?).last().expect("k >= 1"))
}

/// Monte-Carlo value of `(1/p) W_p^p(mu_eps, nu)` with a bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FEstimate {
    pub value: f64,
    pub stderr: f64,
    pub resamples: usize,
}

#[allow(non_snake_case)]
pub fn F_nu_eps(
    nu: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    cost: &CostSpec,
    moll: &MollifierSpec,
    sample_n: usize,
    seed: u64,
    resamples: usize,
) -> Result<FEstimate> {
    let s = sample_seed(seed, mu);
    let sample = sample_mollified(mu, moll, sample_n, s)?;
    let value = solve_ot(&sample, nu, cost)?.primal_cost;
    if resamples < 2 {
        return Ok(FEstimate { value, stderr: 0.0, resamples });
    }
    let reps = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::indexed_stream(s, "bootstrap", b as u64);
            let pts = (0..sample.len()).map(|_| sample.points()[r.random_range(0..sample.len())].clone()).collect();
            Ok(solve_ot(&DiscreteMeasure::uniform(pts)?, nu, cost)?.primal_cost)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = reps.iter().sum::<f64>() / resamples as f64;
    let var = reps.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (resamples - 1) as f64;
    Ok(FEstimate { value, stderr: var.sqrt(), resamples })
}

/// Per-member convergence record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberReport {
    /// `G_k` for `k = 1..K`.
    pub g: Vec<f64>,
    pub argmax: Vec<usize>,
    pub f: FEstimate,
    /// `F - G_k` for `k = 1..K`.
    pub gaps: Vec<f64>,
    /// Position of the member in the dictionary grid, if present.
    pub grid_index: Option<usize>,
    pub monotone: bool,
    /// `G_k <= F + 3 stderr` for all k.
    pub below_f: bool,
    /// For grid members: `F - G_K <= 3 stderr`.
    pub exact_on_grid: Option<bool>,
}

/// `|G_K(mu) - G_K(mu')|` against the potential-estimate Lipschitz bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzCheck {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub bound: f64,
    pub wp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub members: Vec<MemberReport>,
    pub lipschitz: Vec<LipschitzCheck>,
    pub kernel_moment: f64,
}

impl ConvergenceReport {
    pub fn violations(&self) -> usize {
        let m = self
            .members
            .iter()
            .map(|r| usize::from(!r.monotone) + usize::from(!r.below_f) + usize::from(r.exact_on_grid == Some(false)))
            .sum::<usize>();
        m + self.lipschitz.iter().filter(|l| l.lhs > l.bound).count()
    }
}

/// `2^(p-1) W (2 R^(p-1) + (s(mu)^(1/p) + C^(1/p))^(p-1) + (s(mu')^(1/p) + C^(1/p))^(p-1))`
pub fn lipschitz_bound(p: f64, radius: f64, wp: f64, moment_mu: f64, moment_nu: f64, kernel: f64) -> f64 {
    let arm = |m: f64| (m.powf(1.0 / p) + kernel.powf(1.0 / p)).powf(p - 1.0);
    2f64.powf(p - 1.0) * wp * (2.0 * radius.powf(p - 1.0) + arm(moment_mu) + arm(moment_nu))
}

pub fn convergence_report(
    dict: &PotentialDictionary,
    battery: &[DiscreteMeasure],
    resamples: usize,
) -> Result<ConvergenceReport> {
    if dict.is_empty() {
        return Err(Error::Precondition("dictionary is empty".into()));
    }
    let cost = &dict.cost;
    let mut members = Vec::with_capacity(battery.len());
    let mut finals = Vec::with_capacity(battery.len());
    for mu in battery {
        let gk = prefix_max(&mollified_potential_integrals(dict, mu)?);
        let f = F_nu_eps(&dict.nu, mu, cost, &dict.moll, dict.sample_n, dict.seed, resamples)?;
        let g: Vec<f64> = gk.iter().map(|v| v.value).collect();
        let gaps: Vec<f64> = g.iter().map(|v| f.value - v).collect();
        let grid_index = dict.entries.iter().position(|e| &e.grid == mu);
        let margin = 3.0 * f.stderr;
        let last_gap = *gaps.last().expect("nonempty dictionary");
        finals.push(*g.last().expect("nonempty dictionary"));
        members.push(MemberReport {
            monotone: g.windows(2).all(|w| w[1] >= w[0]),
            below_f: gaps.iter().all(|gap| *gap >= -margin),
            exact_on_grid: grid_index.map(|_| last_gap <= margin),
            argmax: gk.iter().map(|v| v.argmax).collect(),
            g,
            gaps,
            grid_index,
            f,
        });
    }
    let kernel = kernel_moment(&dict.moll, cost)?;
    let mut lipschitz = Vec::new();
    for i in 0..battery.len() {
        for j in i..battery.len() {
            let wp = wasserstein(&battery[i], &battery[j], cost)?;
            let (mi, mj) = (moment_p(&battery[i], cost)?, moment_p(&battery[j], cost)?);
            // quadrature error allowance on each side
            let slack = 1e-9 * (2.0 + finals[i].abs() + finals[j].abs());
            let bound = lipschitz_bound(cost.p, dict.radius, wp, mi, mj, kernel) + slack;
            lipschitz.push(LipschitzCheck { i, j, lhs: (finals[i] - finals[j]).abs(), bound, wp });
        }
    }
    Ok(ConvergenceReport { members, lipschitz, kernel_moment: kernel })
}

/// Keep the first `h` coordinates; coincident images merge.
pub fn project_measure(mu: &DiscreteMeasure, h: usize) -> Result<DiscreteMeasure> {
    if h == 0 || h > mu.dim() {
        return Err(Error::OutOfRange(format!("projection rank {h} outside 1..={}", mu.dim())));
    }
    mu.pushforward(|x| x[..h].to_vec())
}

/// The same family of norm on the first `h` coordinates.
pub fn truncate_norm(norm: &NormSpec, h: usize) -> Result<NormSpec> {
    if h == 0 || h > norm.dim() {
        return Err(Error::OutOfRange(format!("projection rank {h} outside 1..={}", norm.dim())));
    }
    match norm.kind() {
        NormKind::Euclidean => NormSpec::euclidean(h),
        NormKind::OneNorm => NormSpec::one_norm(h),
        NormKind::PNorm { p } => NormSpec::p_norm(h, *p),
        NormKind::WeightedP { p, weights } => NormSpec::weighted_p(*p, weights[..h].to_vec()),
        NormKind::Smoothed { .. } => {
            Err(Error::InvalidParameter("smoothed norms do not restrict to coordinates".into()))
        }
    }
}

/// `W_p(pi^h mu, pi^h nu)` for `h = 1..=d`.
pub fn projection_sequence(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostSpec) -> Result<Vec<f64>> {
    check_dim(cost.dim(), mu.dim())?;
    check_dim(cost.dim(), nu.dim())?;
    (1..=cost.dim())
        .map(|h| {
            let c = cost.with_norm(truncate_norm(&cost.norm, h)?);
            wasserstein(&project_measure(mu, h)?, &project_measure(nu, h)?, &c)
        })
        .collect()
}
