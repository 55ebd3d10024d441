//! Inputs shared by the benchmarks.

use nodalcert::field::{FamilyParams, Point};

/// Deterministic points spread over the unit ball of `R^n`.
pub fn sample_points(params: &FamilyParams, count: usize) -> Vec<Point> {
    (0..count)
        .map(|i| {
            let coords: Vec<f64> = (0..params.n)
                .map(|d| {
                    let t = ((i * (d + 3) + 7 * d) % 97) as f64 / 97.0;
                    (2.0 * t - 1.0) / (params.n as f64).sqrt()
                })
                .collect();
            Point::from_coords(params, &coords).expect("n coordinates")
        })
        .collect()
}
