use rand::Rng;
use wslab_core::cylinder::*;
use wslab_core::measures::DiscreteMeasure;
use wslab_core::rng;
use wslab_core::transport::{solve_ot, wasserstein};
use wslab_core::{CostSpec, NormSpec};

fn random_measure(rng: &mut rng::Rng, n: usize, d: usize) -> DiscreteMeasure {
    let pts = (0..n).map(|_| (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()).collect();
    DiscreteMeasure::new(pts, (0..n).map(|_| 0.1 + rng.random::<f64>()).collect()).unwrap()
}

#[test]
fn slope_bracket_on_random_battery() {
    let mut rng = rng::stream(11, "bracket");
    for p in [2.0, 3.0] {
        let cost = CostSpec::new(NormSpec::euclidean(2).unwrap(), p).unwrap();
        for _ in 0..4 {
            let f = random_cylinder(&mut rng, 2, 1.0);
            let mu = random_measure(&mut rng, 8, 2);
            let dn = differential_norm(&f, &mu, &cost).unwrap();
            let lo = slope_lower_bound(&f, &mu, &cost, 1e-4, &DEFAULT_T_SCHEDULE).unwrap();
            let up = slope_upper_probe(&f, &mu, &cost, &[0.5, 0.25, 0.1, 0.05, 0.01], 10, 7).unwrap();
            let last = up.entries.last().unwrap().max_ratio;
            assert!(lo.value <= dn * (1.0 + 1e-9), "lower {} > {dn}", lo.value);
            assert_eq!(up.certificate_violations, 0);
            assert!(up.entries.windows(2).all(|w| w[1].max_ratio <= w[0].max_ratio));
            assert!((last - lo.value) / dn <= 0.05, "p={p}: [{}, {last}] around {dn}", lo.value);
        }
    }
}

#[test]
fn chain_rule_along_plans() {
    let mut rng = rng::stream(12, "chain");
    for k in 0..40 {
        let p = [2.0, 2.5, 3.0][k % 3];
        let cost = CostSpec::new(NormSpec::euclidean(2).unwrap(), p).unwrap();
        let f = random_cylinder(&mut rng, 2, 1.5);
        let mu = random_measure(&mut rng, 5, 2);
        let nu = random_measure(&mut rng, 7, 2);
        let sol = solve_ot(&mu, &nu, &cost).unwrap();
        let s = 0.05 + 0.9 * rng.random::<f64>();
        let exact = derivative_along_curve(&f, &mu, &nu, &sol, s).unwrap();
        let h = 1e-5;
        let at = |t: f64| eval_cylinder(&f, &geodesic_interpolate(&mu, &nu, &sol, t).unwrap()).unwrap();
        let fd = (at(s + h) - at(s - h)) / (2.0 * h);
        assert!((fd - exact).abs() <= 1e-3 * exact.abs().max(fd.abs()).max(1e-6), "{fd} vs {exact}");
    }
}

#[test]
fn interpolants_have_constant_speed() {
    let mut rng = rng::stream(13, "speed");
    for p in [2.0, 3.0] {
        let cost = CostSpec::new(NormSpec::euclidean(2).unwrap(), p).unwrap();
        let mu = random_measure(&mut rng, 6, 2);
        let nu = random_measure(&mut rng, 9, 2);
        let sol = solve_ot(&mu, &nu, &cost).unwrap();
        let times = [0.0, 0.25, 0.5, 1.0];
        let curve: Vec<DiscreteMeasure> =
            times.iter().map(|t| geodesic_interpolate(&mu, &nu, &sol, *t).unwrap()).collect();
        for a in 0..4 {
            for b in a + 1..4 {
                let w = wasserstein(&curve[a], &curve[b], &cost).unwrap();
                let expect = (times[b] - times[a]) * sol.wp;
                assert!((w - expect).abs() <= 1e-8 * (1.0 + sol.wp), "p={p}, {a}->{b}: {w} vs {expect}");
            }
        }
    }
}
