//! Fixtures shared by the criterion benches.

use wslab_core::measures::DiscreteMeasure;

/// Deterministic quasi-random measure on `[-1, 1]^d` (golden-ratio sequence).
pub fn lattice_measure(n: usize, d: usize, offset: f64) -> DiscreteMeasure {
    let phi = 0.618_033_988_749_894_9;
    let pts = (0..n)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let t = (offset + (i * d + k + 1) as f64 * phi).fract();
                    2.0 * t - 1.0
                })
                .collect()
        })
        .collect();
    let weights = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
    DiscreteMeasure::new(pts, weights).expect("distinct points, positive weights")
}
