//! Random instances for the suites.

use rand::Rng;
use wslab_core::measures::{DiscreteMeasure, MetaAtom, MetaMeasure};
use wslab_core::rng::Rng as Stream;
use wslab_core::{NormSpec, Result};

/// `n` atoms uniform in `[-half, half]^d` with weights in `[0.1, 1.1)`.
pub fn box_measure(rng: &mut Stream, n: usize, d: usize, half: f64) -> Result<DiscreteMeasure> {
    let pts = (0..n).map(|_| (0..d).map(|_| half * (2.0 * rng.random::<f64>() - 1.0)).collect()).collect();
    DiscreteMeasure::new(pts, (0..n).map(|_| 0.1 + rng.random::<f64>()).collect())
}

/// Like [`box_measure`], with points outside the `norm`-ball of radius `r` pulled onto its boundary.
pub fn ball_measure(rng: &mut Stream, n: usize, norm: &NormSpec, r: f64) -> Result<DiscreteMeasure> {
    let d = norm.dim();
    let pts = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| r * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let len = norm.norm(&x);
            if len > r {
                x.iter().map(|t| t * r / len).collect()
            } else {
                x
            }
        })
        .collect();
    DiscreteMeasure::new(pts, (0..n).map(|_| 0.1 + rng.random::<f64>()).collect())
}

pub fn meta_measure(rng: &mut Stream, atoms: usize, measure_atoms: usize, d: usize) -> Result<MetaMeasure> {
    let mut out = Vec::with_capacity(atoms);
    for _ in 0..atoms {
        let measure = box_measure(rng, measure_atoms, d, 1.0)?;
        out.push(MetaAtom { mass: 0.1 + rng.random::<f64>(), measure });
    }
    MetaMeasure::new(out)
}
