//! Pre-Cheeger energy over atomic meta-measures, the Sobolev-type surrogate
//! norm, and empirical Boas (generalized Clarkson) checks.

use serde::{Deserialize, Serialize};

pub use crate::cylinder::LinearSpace;
use crate::cylinder::{differential_norm, eval_cylinder, CylinderFunction};
use crate::error::{Error, Result};
use crate::measures::MetaMeasure;
use crate::norms::{conjugate, CostSpec};
use crate::rng;

impl LinearSpace for Vec<f64> {
    fn add(&self, other: &Self) -> Result<Self> {
        crate::error::check_dim(self.len(), other.len())?;
        Ok(self.iter().zip(other).map(|(a, b)| a + b).collect())
    }

    fn sub(&self, other: &Self) -> Result<Self> {
        crate::error::check_dim(self.len(), other.len())?;
        Ok(self.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    fn scale(&self, factor: f64) -> Self {
        self.iter().map(|a| factor * a).collect()
    }
}

fn check_exponent(name: &str, v: f64) -> Result<()> {
    if v > 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (1, inf), got {v}")))
    }
}

/// Exponents of the `(r, s)`-Boas inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoasParams {
    pub r: f64,
    pub s: f64,
}

impl BoasParams {
    pub fn new(r: f64, s: f64) -> Result<Self> {
        check_exponent("r", r)?;
        check_exponent("s", s)?;
        Ok(BoasParams { r, s })
    }

    pub fn r_conj(&self) -> f64 {
        conjugate(self.r)
    }

    pub fn s_conj(&self) -> f64 {
        conjugate(self.s)
    }

    /// `r' <= s <= q <= r`, the range in which q-sums of Boas functionals stay Boas.
    pub fn check_sobolev_range(&self, q: f64) -> Result<()> {
        let ok = self.r_conj() <= self.s * (1.0 + 1e-12) && self.s <= q && q <= self.r;
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "need r' <= s <= q <= r, got r' = {}, s = {}, q = {q}, r = {}",
                self.r_conj(),
                self.s,
                self.r
            )))
        }
    }
}

/// `sum_a m_a ||DF[mu_a]||^q`.
pub fn pre_cheeger(f: &CylinderFunction, m: &MetaMeasure, cost: &CostSpec, q: f64) -> Result<f64> {
    check_exponent("q", q)?;
    let mut total = 0.0;
    for a in m.atoms() {
        total += a.mass * differential_norm(f, &a.measure, cost)?.powf(q);
    }
    Ok(total)
}

/// Contribution of one meta-atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AtomEnergy {
    pub mass: f64,
    pub value: f64,
    pub slope: f64,
}

/// `||F||^q = int |F|^q dm + pCE_q(F)`, an upper surrogate for the Sobolev norm
/// (the pre-Cheeger energy bounds its relaxation from above).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub q: f64,
    pub pce_q: f64,
    pub lq_norm_q: f64,
    pub sobolev_norm: f64,
    pub per_atom: Vec<AtomEnergy>,
}

pub fn sobolev_functional(f: &CylinderFunction, m: &MetaMeasure, cost: &CostSpec, q: f64) -> Result<EnergyReport> {
    check_exponent("q", q)?;
    let mut per_atom = Vec::with_capacity(m.atoms().len());
    let (mut pce_q, mut lq_norm_q) = (0.0, 0.0);
    for a in m.atoms() {
        let value = eval_cylinder(f, &a.measure)?;
        let slope = differential_norm(f, &a.measure, cost)?;
        pce_q += a.mass * slope.powf(q);
        lq_norm_q += a.mass * value.abs().powf(q);
        per_atom.push(AtomEnergy { mass: a.mass, value, slope });
    }
    Ok(EnergyReport { q, pce_q, lq_norm_q, sobolev_norm: (lq_norm_q + pce_q).powf(1.0 / q), per_atom })
}

/// `2^{1/s'} (J(u)^s + J(v)^s)^{1/s} - (J(u+v)^r + J(u-v)^r)^{1/r}`; the
/// inequality holds at `(u, v)` iff this is nonnegative.
pub fn boas_residual<T, J>(j: J, u: &T, v: &T, params: &BoasParams) -> Result<f64>
where
    T: LinearSpace,
    J: Fn(&T) -> Result<f64>,
{
    let vals = [j(u)?, j(v)?, j(&u.add(v)?)?, j(&u.sub(v)?)?];
    if vals.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::Precondition(format!("functional must be nonnegative, got {vals:?}")));
    }
    let (r, s) = (params.r, params.s);
    let lhs = 2f64.powf(1.0 / params.s_conj()) * (vals[0].powf(s) + vals[1].powf(s)).powf(1.0 / s);
    let rhs = (vals[2].powf(r) + vals[3].powf(r)).powf(1.0 / r);
    Ok(lhs - rhs)
}

/// Outcome of a q-sum preservation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsumReport {
    pub trials: usize,
    pub min_residual: f64,
    /// Trials where a summand satisfied the inequality but the q-sum did not.
    pub counterexamples: usize,
    /// Trials where a summand itself failed (the lemma's hypothesis is void there).
    pub summand_failures: usize,
    pub residuals: Vec<f64>,
}

/// Residuals of `J = (J1^q + J2^q)^{1/q}` on sampled pairs; `s <= q <= r` required.
pub fn boas_qsum_preservation<T, J1, J2, S>(
    j1: J1,
    j2: J2,
    q: f64,
    params: &BoasParams,
    trials: usize,
    mut sampler: S,
    seed: u64,
) -> Result<QsumReport>
where
    T: LinearSpace,
    J1: Fn(&T) -> Result<f64>,
    J2: Fn(&T) -> Result<f64>,
    S: FnMut(&mut rng::Rng) -> (T, T),
{
    check_exponent("q", q)?;
    if !(params.s <= q && q <= params.r) {
        return Err(Error::Precondition(format!("need s <= q <= r, got s = {}, q = {q}, r = {}", params.s, params.r)));
    }
    let joint = |x: &T| Ok((j1(x)?.powf(q) + j2(x)?.powf(q)).powf(1.0 / q));
    let mut rng = rng::stream(seed, "boas_qsum");
    let tol = 1e-9;
    let mut report = QsumReport {
        trials,
        min_residual: f64::INFINITY,
        counterexamples: 0,
        summand_failures: 0,
        residuals: Vec::new(),
    };
    for _ in 0..trials {
        let (u, v) = sampler(&mut rng);
        let a = boas_residual(&j1, &u, &v, params)?;
        let b = boas_residual(&j2, &u, &v, params)?;
        let c = boas_residual(joint, &u, &v, params)?;
        if a < -tol || b < -tol {
            report.summand_failures += 1;
        } else if c < -tol {
            report.counterexamples += 1;
        }
        report.min_residual = report.min_residual.min(c);
        report.residuals.push(c);
    }
    Ok(report)
}

/// Sampled midpoint gaps and their lower envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusTable {
    /// `(J(u - v), 1 - J((u+v)/2)^t)` per pair, with `J(u) = J(v) = 1`.
    pub samples: Vec<(f64, f64)>,
    /// `(eps, min over samples with J(u-v) >= eps of the gap)` at every sampled
    /// distance, ascending; nondecreasing in `eps` by construction.
    pub envelope: Vec<(f64, f64)>,
}

/// Empirical modulus of uniform convexity of `J` with power `t`.
pub fn convexity_modulus_probe<T, J, S>(j: J, t: f64, trials: usize, mut sampler: S, seed: u64) -> Result<ModulusTable>
where
    T: LinearSpace,
    J: Fn(&T) -> Result<f64>,
    S: FnMut(&mut rng::Rng) -> (T, T),
{
    check_exponent("t", t)?;
    let mut rng = rng::stream(seed, "convexity_modulus");
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (u, v) = sampler(&mut rng);
        let (ju, jv) = (j(&u)?, j(&v)?);
        if !(ju > 0.0 && jv > 0.0) {
            continue;
        }
        for (x, jx) in [(&u, ju), (&v, jv)] {
            let j2 = j(&x.scale(2.0))?;
            if (j2 - 2.0 * jx).abs() > 1e-9 * jx {
                return Err(Error::Precondition("functional is not positively homogeneous".into()));
            }
        }
        let (u, v) = (u.scale(1.0 / ju), v.scale(1.0 / jv));
        let delta = j(&u.sub(&v)?)?;
        let mid = j(&u.add(&v)?.scale(0.5))?;
        samples.push((delta, 1.0 - mid.powf(t)));
    }
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut envelope = vec![(0.0, 0.0); sorted.len()];
    let mut running = f64::INFINITY;
    for (k, (delta, gap)) in sorted.iter().enumerate().rev() {
        running = running.min(*gap);
        envelope[k] = (*delta, running);
    }
    Ok(ModulusTable { samples, envelope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{DiscreteMeasure, MetaAtom};
    use crate::norms::NormSpec;
    use rand::Rng as _;

    fn euclid(v: &Vec<f64>) -> Result<f64> {
        Ok(v.iter().map(|t| t * t).sum::<f64>().sqrt())
    }

    fn cost2() -> CostSpec {
        CostSpec::new(NormSpec::euclidean(2).unwrap(), 2.0).unwrap()
    }

    fn meta() -> MetaMeasure {
        MetaMeasure::new(vec![
            MetaAtom { mass: 0.5, measure: DiscreteMeasure::dirac(vec![0.0, 1.0]).unwrap() },
            MetaAtom { mass: 1.5, measure: DiscreteMeasure::uniform(vec![vec![1.0, 0.0], vec![-1.0, 2.0]]).unwrap() },
        ])
        .unwrap()
    }

    #[test]
    fn parallelogram_equality() {
        let p = BoasParams::new(2.0, 2.0).unwrap();
        let r = boas_residual(euclid, &vec![1.0, 0.0], &vec![0.0, 1.0], &p).unwrap();
        assert!(r.abs() < 1e-15);
        let z = boas_residual(euclid, &vec![0.0, 0.0], &vec![0.0, 0.0], &p).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn zero_second_argument() {
        let u = vec![3.0, 4.0];
        for (r, s) in [(2.0, 2.0), (3.0, 1.5), (4.0, 4.0)] {
            let p = BoasParams::new(r, s).unwrap();
            let res = boas_residual(euclid, &u, &vec![0.0, 0.0], &p).unwrap();
            let expect = 5.0 * (2f64.powf(1.0 / p.s_conj()) - 2f64.powf(1.0 / r));
            assert!((res - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_of_linear_functional() {
        let f = CylinderFunction::linear(vec![3.0, 4.0], 100.0).unwrap();
        let m = meta();
        for q in [1.5, 2.0, 3.0] {
            let e = pre_cheeger(&f, &m, &cost2(), q).unwrap();
            assert!((e - 2.0 * 5f64.powf(q)).abs() < 1e-10);
        }
        let single = MetaMeasure::new(vec![MetaAtom { mass: 1.0, measure: m.atoms()[1].measure.clone() }]).unwrap();
        let rep = sobolev_functional(&f, &single, &cost2(), 2.0).unwrap();
        let value = eval_cylinder(&f, &single.atoms()[0].measure).unwrap();
        assert!((rep.sobolev_norm - (value * value + 25.0).sqrt()).abs() < 1e-12);
        assert!((rep.sobolev_norm.powf(2.0) - rep.lq_norm_q - rep.pce_q).abs() <= 1e-10 * rep.sobolev_norm.powi(2));
    }

    #[test]
    fn constant_functional() {
        let f = CylinderFunction::constant(2, -3.0);
        let m = meta();
        assert_eq!(pre_cheeger(&f, &m, &cost2(), 2.0).unwrap(), 0.0);
        let rep = sobolev_functional(&f, &m, &cost2(), 3.0).unwrap();
        assert!((rep.sobolev_norm - 3.0 * 2f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn qsum_of_euclidean_norms() {
        let p = BoasParams::new(2.0, 2.0).unwrap();
        let sampler = |rng: &mut rng::Rng| {
            let mut v = || (0..3).map(|_| rng.random::<f64>() - 0.5).collect::<Vec<f64>>();
            (v(), v())
        };
        let rep = boas_qsum_preservation(euclid, euclid, 2.0, &p, 200, sampler, 1).unwrap();
        assert_eq!(rep.counterexamples, 0);
        assert!(rep.min_residual >= -1e-12);
        let bad = BoasParams::new(2.0, 2.0).unwrap();
        assert!(boas_qsum_preservation(euclid, euclid, 3.0, &bad, 1, sampler, 1).is_err());
    }

    #[test]
    fn euclidean_modulus_is_quarter_square() {
        let sampler = |rng: &mut rng::Rng| {
            let mut v = || (0..2).map(|_| rng.random::<f64>() - 0.5).collect::<Vec<f64>>();
            (v(), v())
        };
        let table = convexity_modulus_probe(euclid, 2.0, 300, sampler, 2).unwrap();
        for (eps, g) in &table.envelope {
            assert!((g - eps * eps / 4.0).abs() < 1e-12, "{eps} {g}");
        }
        assert!(table.envelope.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn max_norm_has_flat_faces() {
        let sup = |v: &Vec<f64>| Ok(v.iter().fold(0.0f64, |a, t| a.max(t.abs())));
        let face = |rng: &mut rng::Rng| {
            (vec![1.0, 2.0 * rng.random::<f64>() - 1.0], vec![1.0, 2.0 * rng.random::<f64>() - 1.0])
        };
        let table = convexity_modulus_probe(sup, 2.0, 200, face, 3).unwrap();
        for (eps, g) in &table.envelope {
            if *eps <= 1.0 {
                assert!(g.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sobolev_range() {
        assert!(BoasParams::new(3.0, 1.5).unwrap().check_sobolev_range(2.0).is_ok());
        assert!(BoasParams::new(2.0, 2.0).unwrap().check_sobolev_range(2.0).is_ok());
        assert!(BoasParams::new(3.0, 1.2).unwrap().check_sobolev_range(2.0).is_err());
        assert!(BoasParams::new(1.0, 2.0).is_err());
    }
}
