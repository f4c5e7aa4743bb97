//! Local-linear (kernel-weighted) regression with a Gaussian kernel.

use crate::error::{Error, Result};
use crate::stats::{percentile, sample_std};

pub const MIN_CLUSTER_POINTS: usize = 25;
pub const BANDWIDTH_FLOOR_FRACTION: f64 = 0.05;

/// Silverman rule-of-thumb bandwidth on the predictor sample, floored at
/// `floor_fraction` of the sample range so sparse tails do not collapse the
/// kernel.
pub fn silverman_bandwidth(xs: &[f64], floor_fraction: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("silverman_bandwidth"));
    }
    let sd = sample_std(xs);
    let iqr = percentile(xs, 75.0)? - percentile(xs, 25.0)?;
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (xs.len() as f64).powf(-0.2);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = floor_fraction * (hi - lo);
    Ok(h.max(floor).max(1e-12))
}

/// Local-linear estimate at `x0`: weighted least squares of y on (1, x−x0),
/// returning the intercept. Falls back to the weighted mean when the local
/// design is degenerate (all predictors effectively equal).
pub fn local_linear_at(points: &[(f64, f64)], bandwidth: f64, x0: f64) -> f64 {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut t0 = 0.0;
    let mut t1 = 0.0;
    for &(x, y) in points {
        let u = (x - x0) / bandwidth;
        let w = (-0.5 * u * u).exp();
        let dx = x - x0;
        s0 += w;
        s1 += w * dx;
        s2 += w * dx * dx;
        t0 += w * y;
        t1 += w * dx * y;
    }
    if s0 <= 0.0 {
        return f64::NAN;
    }
    let denom = s0 * s2 - s1 * s1;
    if denom.abs() <= 1e-12 * s0 * s2.max(1e-300) {
        t0 / s0
    } else {
        (s2 * t0 - s1 * t1) / denom
    }
}

/// Mean curve on `grid` with an explicit bandwidth and minimum point count.
pub fn local_regression_with(
    points: &[(f64, f64)],
    grid: &[f64],
    bandwidth: f64,
    min_points: usize,
) -> Result<Vec<f64>> {
    if points.len() < min_points {
        return Err(Error::InsufficientObservations {
            needed: min_points,
            got: points.len(),
            context: "local regression cluster observations",
        });
    }
    Ok(grid
        .iter()
        .map(|&g| local_linear_at(points, bandwidth, g))
        .collect())
}

/// Local-linear regression of the target points on the grid with the
/// rule-of-thumb bandwidth; requires at least 25 points.
pub fn local_regression(points: &[(f64, f64)], grid: &[f64]) -> Result<Vec<f64>> {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let h = silverman_bandwidth(&xs, BANDWIDTH_FLOOR_FRACTION)?;
    local_regression_with(points, grid, h, MIN_CLUSTER_POINTS)
}

/// Equally spaced grid between the `lo_pct` and `hi_pct` percentiles of the
/// sample.
pub fn percentile_grid(xs: &[f64], lo_pct: f64, hi_pct: f64, n: usize) -> Result<Vec<f64>> {
    let lo = percentile(xs, lo_pct)?;
    let hi = percentile(xs, hi_pct)?;
    if n == 1 || hi <= lo {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spread_points(n: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let x = 0.5 + i as f64 / n as f64;
                (x, f(x))
            })
            .collect()
    }

    #[test]
    fn constant_targets_reproduced_exactly() {
        let pts = spread_points(30, |_| 1.7);
        let grid = [0.6, 0.9, 1.2];
        let curve = local_regression(&pts, &grid).unwrap();
        for c in curve {
            assert_relative_eq!(c, 1.7, epsilon = 1e-10);
        }
    }

    #[test]
    fn linear_targets_reproduced_to_1e8() {
        let pts = spread_points(40, |x| -0.3 + 2.5 * x);
        let grid: Vec<f64> = (0..10).map(|i| 0.55 + 0.09 * i as f64).collect();
        let curve = local_regression(&pts, &grid).unwrap();
        for (g, c) in grid.iter().zip(curve) {
            assert_relative_eq!(c, -0.3 + 2.5 * g, epsilon = 1e-8);
        }
    }

    #[test]
    fn fewer_than_25_points_is_an_error() {
        let pts = spread_points(24, |x| x);
        assert!(matches!(
            local_regression(&pts, &[0.7]),
            Err(Error::InsufficientObservations { needed: 25, got: 24, .. })
        ));
    }

    #[test]
    fn matches_pointwise_wls_oracle() {
        // independent 2x2 weighted normal equations solved with nalgebra
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<(f64, f64)> = (0..60)
            .map(|_| {
                let x: f64 = rng.gen_range(0.4..1.6);
                let y = (2.0 * x).sin() + rng.gen_range(-0.1..0.1);
                (x, y)
            })
            .collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let h = silverman_bandwidth(&xs, BANDWIDTH_FLOOR_FRACTION).unwrap();
        let grid: Vec<f64> = (0..12).map(|i| 0.5 + 0.09 * i as f64).collect();
        let curve = local_regression_with(&pts, &grid, h, 25).unwrap();
        for (&g, &c) in grid.iter().zip(&curve) {
            let mut xtx = nalgebra::Matrix2::<f64>::zeros();
            let mut xty = nalgebra::Vector2::<f64>::zeros();
            for &(x, y) in &pts {
                let w = (-0.5 * ((x - g) / h).powi(2)).exp();
                let row = nalgebra::Vector2::new(1.0, x - g);
                xtx += w * row * row.transpose();
                xty += w * row * y;
            }
            let beta = xtx.lu().solve(&xty).unwrap();
            assert_relative_eq!(c, beta[0], epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn bandwidth_floor_kicks_in() {
        // tight cluster of x values: Silverman would give ~0, floor saves it
        let mut xs = vec![1.0; 30];
        xs.push(2.0);
        let h = silverman_bandwidth(&xs, 0.05).unwrap();
        assert!(h >= 0.05 * 1.0);
    }

    #[test]
    fn percentile_grid_spans_requested_range() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let grid = percentile_grid(&xs, 5.0, 95.0, 50).unwrap();
        assert_eq!(grid.len(), 50);
        assert_relative_eq!(grid[0], 5.95, epsilon = 1e-12);
        assert_relative_eq!(grid[49], 95.05, epsilon = 1e-12);
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }
}
