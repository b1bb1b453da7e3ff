//! One runner per experiment kind. Instances fan out over rayon and are
//! collected in index order, so reports do not depend on the thread count.

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;
use wslab_core::approx::{build_dictionary, convergence_report, projection_sequence};
use wslab_core::cylinder::{
    differential_norm, eval_cylinder, random_cylinder, slope_lower_bound, slope_upper_probe, CylinderFunction,
    LinearSpace,
};
use wslab_core::energy::{boas_qsum_preservation, boas_residual, convexity_modulus_probe, pre_cheeger, BoasParams};
use wslab_core::measures::{MetaMeasure, MollifierSpec};
use wslab_core::rng::{self, derive_seed, indexed_stream};
use wslab_core::transport::{check_potential_estimates, dual_potentials, optimality_residuals, solve_ot, wasserstein};
use wslab_core::{CostSpec, Result};

use crate::config::*;
use crate::generate::{ball_measure, box_measure, meta_measure};
use crate::report::{num, SuiteReport, Table};
use crate::CliError;

pub fn run_suite(cfg: &ExperimentConfig) -> std::result::Result<SuiteReport, CliError> {
    info!("running {} (seed {})", cfg.suite.kind(), cfg.seed);
    let report = match &cfg.suite {
        Suite::SlopeCheck(s) => slope_check(cfg, s)?,
        Suite::DualityGap(s) => duality_gap(cfg, s)?,
        Suite::PotentialEstimates(s) => potential_estimates(cfg, s)?,
        Suite::MaxpotConvergence(s) => maxpot(cfg, s)?,
        Suite::BoasSuite(s) => boas(cfg, s)?,
        Suite::ProjectionConvergence(s) => projection(cfg, s)?,
        Suite::ModulusProbe(s) => modulus(cfg, s)?,
    };
    info!("{}: {} instances, {} violations", cfg.suite.kind(), report.instances, report.violations);
    Ok(report)
}

fn p_list(cfg: &ExperimentConfig, ps: &Option<Vec<f64>>) -> Vec<f64> {
    ps.clone().unwrap_or_else(|| vec![cfg.cost.p])
}

fn cost_with_p(cfg: &ExperimentConfig, p: f64) -> Result<CostSpec> {
    CostSpec::new(cfg.cost.norm.clone(), p)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

struct SlopeRow {
    p: f64,
    dn: f64,
    lower: f64,
    upper: f64,
    width: f64,
    certificate_violations: usize,
    curve: Vec<(f64, f64)>,
}

fn slope_check(cfg: &ExperimentConfig, s: &SlopeCheck) -> Result<SuiteReport> {
    let d = cfg.cost.dim();
    let ps = p_list(cfg, &s.p_values);
    let n = s.functions * ps.len();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = ps[i / s.functions];
            let cost = cost_with_p(cfg, p)?;
            let mut r = indexed_stream(cfg.seed, "slope_check", i as u64);
            let f = match s.family {
                FunctionFamily::Random => random_cylinder(&mut r, d, s.support),
                FunctionFamily::Constant => CylinderFunction::constant(d, 2.0 * r.random::<f64>() - 1.0),
                FunctionFamily::Linear => {
                    let a: Vec<f64> = (0..d).map(|_| 2.0 * r.random::<f64>() - 1.0).collect();
                    let level = 10.0 * (1.0 + s.support) * a.iter().map(|t| t.abs()).sum::<f64>() + 1.0;
                    CylinderFunction::linear(a, level)?
                }
            };
            let mu = box_measure(&mut r, s.atoms, d, s.support)?;
            let dn = differential_norm(&f, &mu, &cost)?;
            let lower = slope_lower_bound(&f, &mu, &cost, s.eps, &s.t_schedule)?.value;
            let probe =
                slope_upper_probe(&f, &mu, &cost, &s.radii, s.pairs_per_radius, derive_seed(cfg.seed, &[i as u64]))?;
            let upper = probe.entries.last().map_or(0.0, |e| e.max_ratio);
            // span of {lower, upper, dn}, relative to dn
            let span = lower.max(upper).max(dn) - lower.min(upper).min(dn);
            let width = if dn > 0.0 { span / dn } else { span };
            debug!("slope {i}: p = {p}, [{lower}, {upper}] around {dn}");
            Ok(SlopeRow {
                p,
                dn,
                lower,
                upper,
                width,
                certificate_violations: probe.certificate_violations,
                curve: probe.entries.iter().map(|e| (e.radius, e.max_ratio)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (wtol, slack) = (cfg.tol("bracket_width"), cfg.tol("lower_slack"));
    let mut details = Table::new(&[
        "instance",
        "p",
        "differential_norm",
        "lower",
        "upper",
        "width_rel",
        "certificate_violations",
        "ok",
    ]);
    let mut curves = Table::new(&["instance", "radius", "slope", "lower", "differential_norm"]);
    let mut violations = 0;
    for (i, r) in rows.iter().enumerate() {
        let ok = r.lower <= r.dn * (1.0 + slack) && r.width <= wtol && r.certificate_violations == 0;
        violations += usize::from(!ok);
        details.push(vec![
            i.to_string(),
            num(r.p),
            num(r.dn),
            num(r.lower),
            num(r.upper),
            num(r.width),
            r.certificate_violations.to_string(),
            ok.to_string(),
        ]);
        for (radius, slope) in &r.curve {
            curves.push(vec![i.to_string(), num(*radius), num(*slope), num(r.lower), num(r.dn)]);
        }
    }
    let mut rep = SuiteReport::new(details);
    rep.instances = n;
    rep.violations = violations;
    rep.metric("max_width_rel", max_of(rows.iter().map(|r| r.width)));
    rep.metric("max_lower_excess", max_of(rows.iter().map(|r| r.lower - r.dn)));
    rep.metric("certificate_violations", rows.iter().map(|r| r.certificate_violations).sum::<usize>());
    rep.plots.push(("slope_brackets.csv", curves));
    Ok(rep)
}

fn duality_gap(cfg: &ExperimentConfig, s: &DualityGap) -> Result<SuiteReport> {
    let d = cfg.cost.dim();
    let ps = p_list(cfg, &s.p_values);
    let rows = (0..s.instances)
        .into_par_iter()
        .map(|i| {
            let p = ps[i % ps.len()];
            let cost = cost_with_p(cfg, p)?;
            let mut r = indexed_stream(cfg.seed, "duality_gap", i as u64);
            let m = r.random_range(s.min_atoms..=s.max_atoms);
            let n = r.random_range(s.min_atoms..=s.max_atoms);
            let mu = box_measure(&mut r, m, d, s.support)?;
            let nu = box_measure(&mut r, n, d, s.support)?;
            let sol = solve_ot(&mu, &nu, &cost)?;
            let pot = dual_potentials(&mu, &nu, &cost, &sol)?;
            Ok((m, n, p, optimality_residuals(&mu, &nu, &cost, &sol, &pot)))
        })
        .collect::<Result<Vec<_>>>()?;
    let tols = [cfg.tol("gap"), cfg.tol("feasibility"), cfg.tol("slackness"), cfg.tol("fixpoint")];
    let mut details =
        Table::new(&["instance", "m", "n", "p", "gap_rel", "feasibility", "slackness", "fixpoint", "marginals", "ok"]);
    let mut violations = 0;
    for (i, (m, n, p, res)) in rows.iter().enumerate() {
        let vals = [res.gap_rel, res.feasibility, res.slackness, res.fixpoint];
        let ok = vals.iter().zip(&tols).all(|(v, t)| v <= t);
        violations += usize::from(!ok);
        details.push(vec![
            i.to_string(),
            m.to_string(),
            n.to_string(),
            num(*p),
            num(res.gap_rel),
            num(res.feasibility),
            num(res.slackness),
            num(res.fixpoint),
            num(res.marginals),
            ok.to_string(),
        ]);
    }
    let mut rep = SuiteReport::new(details);
    rep.instances = s.instances;
    rep.violations = violations;
    rep.metric("max_gap_rel", max_of(rows.iter().map(|r| r.3.gap_rel)));
    rep.metric("max_feasibility", max_of(rows.iter().map(|r| r.3.feasibility)));
    rep.metric("max_slackness", max_of(rows.iter().map(|r| r.3.slackness)));
    rep.metric("max_fixpoint", max_of(rows.iter().map(|r| r.3.fixpoint)));
    Ok(rep)
}

fn potential_estimates(cfg: &ExperimentConfig, s: &PotentialEstimates) -> Result<SuiteReport> {
    let d = cfg.cost.dim();
    let ps = p_list(cfg, &s.p_values);
    let rows = (0..s.instances)
        .into_par_iter()
        .map(|i| {
            let radius = s.radii[i % s.radii.len()];
            let p = ps[(i / s.radii.len()) % ps.len()];
            let cost = cost_with_p(cfg, p)?;
            let mut r = indexed_stream(cfg.seed, "potential_estimates", i as u64);
            let nu = ball_measure(&mut r, s.nu_atoms, &cost.norm, radius)?;
            let mu = box_measure(&mut r, s.mu_atoms, d, 2.0 * radius)?;
            let sol = solve_ot(&mu, &nu, &cost)?;
            let pot = dual_potentials(&mu, &nu, &cost, &sol)?;
            let est =
                check_potential_estimates(&pot, &mu, &nu, radius, &cost, s.pairs, derive_seed(cfg.seed, &[i as u64]))?;
            Ok((p, radius, est))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut details = Table::new(&[
        "instance",
        "p",
        "radius",
        "growth_constant",
        "lipschitz_min",
        "growth_min",
        "lower_min",
        "violations",
    ]);
    for (i, (p, radius, e)) in rows.iter().enumerate() {
        details.push(vec![
            i.to_string(),
            num(*p),
            num(*radius),
            num(e.growth_constant),
            num(e.lipschitz_min),
            num(e.growth_min),
            num(e.lower_min),
            e.violations.to_string(),
        ]);
    }
    let mut rep = SuiteReport::new(details);
    rep.instances = s.instances;
    rep.violations = rows.iter().map(|r| r.2.violations).sum();
    rep.metric("pairs_per_instance", s.pairs);
    rep.metric("min_lipschitz_margin", rows.iter().map(|r| r.2.lipschitz_min).fold(f64::INFINITY, f64::min));
    rep.metric("min_lower_margin", rows.iter().map(|r| r.2.lower_min).fold(f64::INFINITY, f64::min));
    Ok(rep)
}

fn maxpot(cfg: &ExperimentConfig, s: &MaxpotConvergence) -> Result<SuiteReport> {
    let d = cfg.cost.dim();
    let mut r = rng::stream(cfg.seed, "maxpot_instances");
    let nu = ball_measure(&mut r, s.nu_atoms, &cfg.cost.norm, s.radius)?;
    let draw = |r: &mut rng::Rng| {
        let k = r.random_range(1..=s.max_grid_atoms);
        box_measure(r, k, d, s.support)
    };
    let battery = (0..s.battery).map(|_| draw(&mut r)).collect::<Result<Vec<_>>>()?;
    let inside = s.battery_in_grid.unwrap_or(s.battery);
    let mut grid = (0..s.grid_size - inside).map(|_| draw(&mut r)).collect::<Result<Vec<_>>>()?;
    // spread the battery members evenly through the grid
    for (j, mu) in battery.iter().take(inside).enumerate() {
        let at = ((j + 1) * s.grid_size / (inside + 1)).min(grid.len());
        grid.insert(at, mu.clone());
    }
    let moll = MollifierSpec::new(s.eps)?;
    info!("building dictionary over {} grid measures", grid.len());
    let dict = build_dictionary(&nu, &grid, &cfg.cost, &moll, s.sample_n, cfg.seed)?;
    info!("evaluating G_k and F on {} battery members", battery.len());
    let mut conv = convergence_report(&dict, &battery, s.bootstrap)?;
    // re-judge with the configured multiple of the standard error
    let m = cfg.tol("stderr_multiple");
    for mem in &mut conv.members {
        let margin = m * mem.f.stderr;
        mem.below_f = mem.gaps.iter().all(|g| *g >= -margin);
        mem.exact_on_grid = mem.grid_index.map(|_| *mem.gaps.last().expect("nonempty") <= margin);
    }
    let mut details = Table::new(&[
        "member",
        "grid_index",
        "F",
        "stderr",
        "G_final",
        "final_gap",
        "argmax_final",
        "monotone",
        "below_f",
        "exact_on_grid",
    ]);
    let mut curves = Table::new(&["member", "k", "G_k", "F", "stderr"]);
    for (i, mem) in conv.members.iter().enumerate() {
        details.push(vec![
            i.to_string(),
            mem.grid_index.map_or(String::new(), |h| h.to_string()),
            num(mem.f.value),
            num(mem.f.stderr),
            num(*mem.g.last().expect("nonempty")),
            num(*mem.gaps.last().expect("nonempty")),
            mem.argmax.last().expect("nonempty").to_string(),
            mem.monotone.to_string(),
            mem.below_f.to_string(),
            mem.exact_on_grid.map_or(String::new(), |b| b.to_string()),
        ]);
        for (k, g) in mem.g.iter().enumerate() {
            curves.push(vec![i.to_string(), (k + 1).to_string(), num(*g), num(mem.f.value), num(mem.f.stderr)]);
        }
    }
    let mut rep = SuiteReport::new(details);
    rep.instances = battery.len();
    rep.violations = conv.violations();
    rep.metric("grid_size", grid.len());
    rep.metric("kernel_moment", conv.kernel_moment);
    rep.metric(
        "max_gap_in_stderr",
        conv.members
            .iter()
            .filter(|m| m.grid_index.is_some())
            .map(|m| m.gaps.last().unwrap() / m.f.stderr.max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max),
    );
    rep.metric("lipschitz_checks", conv.lipschitz.len());
    rep.metric(
        "lipschitz_max_ratio",
        max_of(conv.lipschitz.iter().map(|l| if l.bound > 0.0 { l.lhs / l.bound } else { 0.0 })),
    );
    rep.plots.push(("maxpot_curves.csv", curves));
    if s.save_dictionary {
        rep.artifacts.push(("dictionary.json", serde_json::to_value(&dict).expect("dictionary serializes")));
    }
    Ok(rep)
}

fn lq_norm(f: &CylinderFunction, m: &MetaMeasure, q: f64) -> Result<f64> {
    let mut s = 0.0;
    for a in m.atoms() {
        s += a.mass * eval_cylinder(f, &a.measure)?.abs().powf(q);
    }
    Ok(s.powf(1.0 / q))
}

fn boas(cfg: &ExperimentConfig, s: &BoasSuite) -> Result<SuiteReport> {
    let d = cfg.cost.dim();
    let rtol = cfg.tol("residual");
    let ptol = cfg.tol("parallelogram");
    let mut details = Table::new(&["preset", "pair", "pce_residual", "sobolev_residual", "parallelogram_rel"]);
    let mut rep_metrics = Vec::new();
    let mut violations = 0;
    let mut instances = 0;
    for (k, pr) in s.presets.iter().enumerate() {
        let cost = cost_with_p(cfg, pr.p_conj / (pr.p_conj - 1.0))?;
        let params = BoasParams::new(pr.r, pr.s)?;
        let meta =
            meta_measure(&mut indexed_stream(cfg.seed, "boas_meta", k as u64), s.meta_atoms, s.measure_atoms, d)?;
        let pce = |f: &CylinderFunction| Ok(pre_cheeger(f, &meta, &cost, pr.q)?.powf(1.0 / pr.q));
        let lq = |f: &CylinderFunction| lq_norm(f, &meta, pr.q);
        let sampler = |r: &mut rng::Rng| (random_cylinder(r, d, 1.0), random_cylinder(r, d, 1.0));
        let mut r = indexed_stream(cfg.seed, "boas_pairs", k as u64);
        let pairs: Vec<_> = (0..s.pairs).map(|_| sampler(&mut r)).collect();
        let mut feed = pairs.iter().cloned();
        let sob =
            boas_qsum_preservation(lq, pce, pr.q, &params, s.pairs, |_| feed.next().expect("one pair per trial"), 0)?;
        let hilbert = pr.p_conj == 2.0 && pr.q == 2.0;
        let mut min_pce = f64::INFINITY;
        let mut max_par = 0.0f64;
        for (t, ((u, v), sob_res)) in pairs.iter().zip(&sob.residuals).enumerate() {
            let res = boas_residual(pce, u, v, &params)?;
            min_pce = min_pce.min(res);
            let par = if hilbert {
                let e = |h: &CylinderFunction| pre_cheeger(h, &meta, &cost, 2.0);
                let lhs = e(&u.add(v)?)? + e(&u.sub(v)?)?;
                let rhs = 2.0 * (e(u)? + e(v)?);
                (lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE)
            } else {
                0.0
            };
            max_par = max_par.max(par);
            violations += usize::from(res < -rtol) + usize::from(*sob_res < -rtol) + usize::from(par > ptol);
            details.push(vec![k.to_string(), t.to_string(), num(res), num(*sob_res), num(par)]);
        }
        violations += sob.counterexamples + sob.summand_failures;
        instances += s.pairs;
        rep_metrics.push(serde_json::json!({
            "p_conj": pr.p_conj, "r": pr.r, "s": pr.s, "q": pr.q,
            "min_pce_residual": min_pce,
            "min_sobolev_residual": sob.min_residual,
            "qsum_counterexamples": sob.counterexamples,
            "summand_failures": sob.summand_failures,
            "max_parallelogram_rel": if hilbert { serde_json::json!(max_par) } else { serde_json::Value::Null },
        }));
    }
    let mut rep = SuiteReport::new(details);
    rep.instances = instances;
    rep.violations = violations;
    rep.metric("presets", rep_metrics);
    Ok(rep)
}

fn projection(cfg: &ExperimentConfig, s: &ProjectionConvergence) -> Result<SuiteReport> {
    let d = cfg.cost.dim();
    let rows = (0..s.instances)
        .into_par_iter()
        .map(|i| {
            let mut r = indexed_stream(cfg.seed, "projection", i as u64);
            let mu = box_measure(&mut r, s.mu_atoms, d, s.support)?;
            let nu = box_measure(&mut r, s.nu_atoms, d, s.support)?;
            Ok((projection_sequence(&mu, &nu, &cfg.cost)?, wasserstein(&mu, &nu, &cfg.cost)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mtol, etol) = (cfg.tol("monotone"), cfg.tol("endpoint"));
    let mut details = Table::new(&["instance", "h", "w_h", "w_full"]);
    let mut violations = 0;
    let mut worst_drop = 0.0f64;
    let mut worst_end = 0.0f64;
    for (i, (seq, full)) in rows.iter().enumerate() {
        let drop = max_of(seq.windows(2).map(|w| w[0] - w[1]));
        let end = (seq[d - 1] - full).abs();
        worst_drop = worst_drop.max(drop);
        worst_end = worst_end.max(end);
        violations += usize::from(drop > mtol || end > etol);
        for (h, w) in seq.iter().enumerate() {
            details.push(vec![i.to_string(), (h + 1).to_string(), num(*w), num(*full)]);
        }
    }
    let mut rep = SuiteReport::new(details);
    rep.instances = s.instances;
    rep.violations = violations;
    rep.metric("max_decrease", worst_drop);
    rep.metric("max_endpoint_error", worst_end);
    Ok(rep)
}

fn modulus(cfg: &ExperimentConfig, s: &ModulusProbe) -> Result<SuiteReport> {
    let d = cfg.cost.dim();
    let meta = meta_measure(&mut rng::stream(cfg.seed, "modulus_meta"), s.meta_atoms, s.measure_atoms, d)?;
    let j = |f: &CylinderFunction| Ok(pre_cheeger(f, &meta, &cfg.cost, s.q)?.powf(1.0 / s.q));
    let sampler = |r: &mut rng::Rng| (random_cylinder(r, d, 1.0), random_cylinder(r, d, 1.0));
    let table = convexity_modulus_probe(j, s.t, s.trials, sampler, cfg.seed)?;
    let tol = cfg.tol("convexity");
    let mut details = Table::new(&["sample", "distance", "midpoint_gap"]);
    for (i, (delta, gap)) in table.samples.iter().enumerate() {
        details.push(vec![i.to_string(), num(*delta), num(*gap)]);
    }
    let mut env = Table::new(&["eps", "envelope"]);
    for (e, g) in &table.envelope {
        env.push(vec![num(*e), num(*g)]);
    }
    let mut rep = SuiteReport::new(details);
    rep.instances = table.samples.len();
    rep.violations = table.envelope.iter().filter(|(_, g)| *g < -tol).count();
    rep.metric("min_envelope", table.envelope.iter().map(|e| e.1).fold(f64::INFINITY, f64::min));
    rep.metric("max_distance", max_of(table.samples.iter().map(|s| s.0)));
    rep.plots.push(("modulus_envelope.csv", env));
    Ok(rep)
}
