//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Suite-backed criteria run the shipped configs in `configs/` through the same
//! runner the `wslab` binary uses.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::Rng;
use wslab_cli::{suites, ExperimentConfig, SuiteReport};
use wslab_core::cylinder::{
    derivative_along_curve, eval_cylinder, geodesic_interpolate, random_cylinder, CylinderFunction, LinearSpace,
};
use wslab_core::energy::pre_cheeger;
use wslab_core::measures::{DiscreteMeasure, MetaAtom, MetaMeasure};
use wslab_core::norms::duality_map;
use wslab_core::transport::solve_ot;
use wslab_core::{rng, CostSpec, NormSpec};

struct Outcome {
    pass: bool,
    note: String,
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn suite(name: &str) -> Result<SuiteReport, String> {
    let cfg = ExperimentConfig::load(&configs().join(name)).map_err(|e| e.to_string())?;
    suites::run_suite(&cfg).map_err(|e| e.to_string())
}

fn metric(rep: &SuiteReport, name: &str) -> String {
    rep.metrics.get(name).map_or("-".into(), |v| v.to_string())
}

fn suite_outcome(name: &str, metrics: &[&str]) -> Outcome {
    match suite(name) {
        Ok(rep) => {
            let shown: Vec<String> = metrics.iter().map(|m| format!("{m}={}", metric(&rep, m))).collect();
            Outcome {
                pass: rep.violations == 0,
                note: format!("{} instances, {} violations; {}", rep.instances, rep.violations, shown.join(", ")),
            }
        }
        Err(e) => Outcome { pass: false, note: e },
    }
}

fn random_measure(r: &mut rng::Rng, n: usize, d: usize) -> DiscreteMeasure {
    let pts = (0..n).map(|_| (0..d).map(|_| 2.0 * r.random::<f64>() - 1.0).collect()).collect();
    DiscreteMeasure::new(pts, (0..n).map(|_| 0.1 + r.random::<f64>()).collect()).unwrap()
}

fn duality_identity() -> Outcome {
    let mut r = rng::stream(1, "acceptance_duality");
    let mut worst = 0.0f64;
    let mut count = 0;
    for d in [2, 4, 8] {
        let presets = [
            NormSpec::euclidean(d).unwrap(),
            NormSpec::p_norm(d, 1.5).unwrap(),
            NormSpec::p_norm(d, 4.0).unwrap(),
            NormSpec::one_norm(d).unwrap(),
            NormSpec::weighted_p(3.0, (0..d).map(|i| 1.0 + 0.5 * i as f64).collect()).unwrap(),
        ];
        for norm in presets {
            for p in [1.5, 2.0, 3.0] {
                let cost = CostSpec::new(norm.clone(), p).unwrap();
                for _ in 0..1000 {
                    let v: Vec<f64> = (0..d).map(|_| 4.0 * r.random::<f64>() - 2.0).collect();
                    let j = match duality_map(&cost, &v) {
                        Ok(j) => j,
                        Err(e) => return Outcome { pass: false, note: e.to_string() },
                    };
                    let target = cost.norm.dual(&v).powf(cost.p_conj());
                    let pair: f64 = j.iter().zip(&v).map(|(a, b)| a * b).sum();
                    worst = worst.max((pair - target).abs() / target);
                    worst = worst.max((cost.norm.norm(&j).powf(p) - target).abs() / target);
                    count += 1;
                }
            }
        }
    }
    Outcome { pass: worst <= 1e-9, note: format!("{count} covectors, max rel residual {worst:.2e}") }
}

fn chain_rule() -> Outcome {
    let mut r = rng::stream(5, "acceptance_chain");
    let mut worst = 0.0f64;
    for k in 0..200 {
        let p = [2.0, 2.5, 3.0][k % 3];
        let cost = CostSpec::new(NormSpec::euclidean(2).unwrap(), p).unwrap();
        let f = random_cylinder(&mut r, 2, 1.5);
        let mu = random_measure(&mut r, 5, 2);
        let nu = random_measure(&mut r, 7, 2);
        let s = 0.05 + 0.9 * r.random::<f64>();
        let res = (|| {
            let sol = solve_ot(&mu, &nu, &cost)?;
            let exact = derivative_along_curve(&f, &mu, &nu, &sol, s)?;
            let h = 1e-5;
            let at = |t: f64| eval_cylinder(&f, &geodesic_interpolate(&mu, &nu, &sol, t)?);
            let fd = (at(s + h)? - at(s - h)?) / (2.0 * h);
            Ok::<f64, wslab_core::Error>((fd - exact).abs() / exact.abs().max(fd.abs()).max(1e-6))
        })();
        match res {
            Ok(e) => worst = worst.max(e),
            Err(e) => return Outcome { pass: false, note: e.to_string() },
        }
    }
    Outcome { pass: worst <= 1e-3, note: format!("200 triples, max rel error {worst:.2e}") }
}

fn parallelogram() -> Outcome {
    let mut r = rng::stream(6, "acceptance_parallelogram");
    let cost = CostSpec::new(NormSpec::euclidean(2).unwrap(), 2.0).unwrap();
    let atoms =
        (0..10).map(|_| MetaAtom { mass: 0.1 + r.random::<f64>(), measure: random_measure(&mut r, 4, 2) }).collect();
    let m = MetaMeasure::new(atoms).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = random_cylinder(&mut r, 2, 1.0);
        let g = random_cylinder(&mut r, 2, 1.0);
        let e = |h: &CylinderFunction| pre_cheeger(h, &m, &cost, 2.0).unwrap();
        let lhs = e(&f.add(&g).unwrap()) + e(&f.sub(&g).unwrap());
        let rhs = 2.0 * (e(&f) + e(&g));
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Outcome { pass: worst <= 1e-8, note: format!("100 pairs, max rel residual {worst:.2e}") }
}

fn smoothed_family() -> Outcome {
    let base = NormSpec::one_norm(2).unwrap();
    let ks = [5, 10, 20, 40];
    let family: Vec<NormSpec> = ks.iter().map(|&k| NormSpec::smoothed(base.clone(), k).unwrap()).collect();
    let mut r = rng::stream(10, "acceptance_smoothed");
    let mut gaps = [0.0f64; 4];
    let mut order_failures = 0;
    for _ in 0..1000 {
        let x = [4.0 * r.random::<f64>() - 2.0, 4.0 * r.random::<f64>() - 2.0];
        let b = base.norm(&x);
        let vals: Vec<f64> = family.iter().map(|n| n.norm(&x)).collect();
        if !(vals.windows(2).all(|w| w[0] <= w[1]) && vals[3] <= b) {
            order_failures += 1;
        }
        for (g, v) in gaps.iter_mut().zip(&vals) {
            *g = g.max((b - v) / b);
        }
    }
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        pass: order_failures == 0 && decreasing,
        note: format!(
            "1000 samples, {order_failures} order failures, max rel gap by k: {}",
            gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(" > ")
        ),
    }
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_wslab");
    let cfg = configs().join("duality_gap_20x20.toml");
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return Outcome { pass: false, note: e.to_string() },
    };
    let mut outputs = Vec::new();
    for (run, jobs) in [("a", "1"), ("b", "2")] {
        let dir = tmp.path().join(run);
        let status = Command::new(bin)
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .args(["--jobs", jobs])
            .stdout(Stdio::null())
            .status();
        match status {
            Ok(s) if s.success() => {}
            other => return Outcome { pass: false, note: format!("run {run} failed: {other:?}") },
        }
        let read = |f: &str| std::fs::read(dir.join(f)).unwrap_or_default();
        outputs.push((read("summary.json"), read("details.csv")));
    }
    let same = outputs[0] == outputs[1] && !outputs[0].0.is_empty();
    Outcome {
        pass: same,
        note: format!("summary.json {} bytes, identical across --jobs 1/2: {same}", outputs[0].0.len()),
    }
}

fn main() {
    type Check = Box<dyn Fn() -> Outcome>;
    let checks: Vec<(&str, u64, Check)> = vec![
        ("duality-map identity", 1, Box::new(duality_identity)),
        (
            "duality gap and potential invariants",
            30,
            Box::new(|| {
                suite_outcome("duality_gap.toml", &["max_gap_rel", "max_feasibility", "max_slackness", "max_fixpoint"])
            }),
        ),
        (
            "potential estimates",
            60,
            Box::new(|| suite_outcome("potential_estimates.toml", &["pairs_per_instance", "min_lower_margin"])),
        ),
        ("slope bracket", 300, Box::new(|| suite_outcome("slope_check.toml", &["max_width_rel", "max_lower_excess"]))),
        ("chain-rule derivatives", 30, Box::new(chain_rule)),
        ("pre-Cheeger parallelogram identity", 10, Box::new(parallelogram)),
        ("Boas suites and q-sum preservation", 60, Box::new(|| suite_outcome("boas_suite.toml", &["presets"]))),
        (
            "max-of-potentials convergence",
            600,
            Box::new(|| suite_outcome("maxpot_convergence.toml", &["max_gap_in_stderr", "lipschitz_max_ratio"])),
        ),
        (
            "projection monotone contraction",
            60,
            Box::new(|| suite_outcome("projection_convergence.toml", &["max_decrease", "max_endpoint_error"])),
        ),
        ("smoothed-norm monotone family", 60, Box::new(smoothed_family)),
        ("deterministic CLI summaries", 30, Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*limit);
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let time_note = if in_time { String::new() } else { format!(" [over {limit} s budget]") };
        println!(
            "{} {:02} {name} ({:.2} s){time_note}: {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            out.note
        );
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
