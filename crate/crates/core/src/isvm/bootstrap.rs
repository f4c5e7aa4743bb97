//! Bootstrap standard errors for the smoothed curves.
//!
//! Each replicate resamples every timestamp's observation set with
//! replacement (preserving the per-timestamp count), reruns surface fit →
//! inversion → local regression on the common grid, and the pointwise
//! standard deviation across replicates sets the band half-width (2 standard
//! deviations around the point-estimate curve). Replicates whose surface fit
//! degenerates are redrawn up to 10 times, then skipped with a warning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::invert::CoefficientInversion;
use super::smooth::local_regression_with;
use super::TimestampSample;
use crate::error::{Error, Result};
use crate::market_data::IvObservation;
use crate::surface::fit_surface;

const REDRAW_ATTEMPTS: u64 = 10;

/// Pointwise standard deviations per function, plus bookkeeping.
#[derive(Debug, Clone)]
pub struct BandStdDev {
    pub mu_sd: Vec<f64>,
    pub gamma_sd: Vec<f64>,
    pub eta2_sd: Vec<f64>,
    /// Replicates that produced curves.
    pub n_used: usize,
    pub warnings: Vec<String>,
}

fn replicate_curves(
    samples: &[&TimestampSample],
    grid: &[f64],
    bandwidth: f64,
    inversion: &dyn CoefficientInversion,
    min_points: usize,
    rng: &mut ChaCha8Rng,
) -> Result<[Vec<f64>; 3]> {
    let mut mu_pts = Vec::with_capacity(samples.len());
    let mut gamma_pts = Vec::with_capacity(samples.len());
    let mut eta2_pts = Vec::with_capacity(samples.len());
    for sample in samples {
        let n = sample.observations.len();
        let resampled: Vec<IvObservation> = (0..n)
            .map(|_| sample.observations[rng.gen_range(0..n)].clone())
            .collect();
        let coeffs = fit_surface(&resampled)?;
        let (gamma, eta2, mu) = inversion.invert(&coeffs, sample.v)?;
        mu_pts.push((sample.v, mu));
        gamma_pts.push((sample.v, gamma));
        eta2_pts.push((sample.v, eta2));
    }
    Ok([
        local_regression_with(&mu_pts, grid, bandwidth, min_points)?,
        local_regression_with(&gamma_pts, grid, bandwidth, min_points)?,
        local_regression_with(&eta2_pts, grid, bandwidth, min_points)?,
    ])
}

/// Run `n_boot` replicates (in parallel, deterministically seeded as
/// `base_seed + replicate`) and return the pointwise standard deviation of
/// the three curves.
pub fn bootstrap_band_sd(
    samples: &[&TimestampSample],
    grid: &[f64],
    bandwidth: f64,
    inversion: &dyn CoefficientInversion,
    n_boot: usize,
    base_seed: u64,
    min_points: usize,
) -> Result<BandStdDev> {
    if n_boot < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 replicates, got {n_boot}"
        )));
    }
    let replicates: Vec<Option<[Vec<f64>; 3]>> = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..REDRAW_ATTEMPTS {
                let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(i as u64));
                rng.set_stream(attempt);
                if let Ok(curves) =
                    replicate_curves(samples, grid, bandwidth, inversion, min_points, &mut rng)
                {
                    return Some(curves);
                }
            }
            None
        })
        .collect();

    let mut warnings = Vec::new();
    let used: Vec<&[Vec<f64>; 3]> = replicates.iter().flatten().collect();
    let skipped = n_boot - used.len();
    if skipped > 0 {
        warnings.push(format!(
            "{skipped} of {n_boot} bootstrap replicates failed after {REDRAW_ATTEMPTS} redraws and were skipped"
        ));
    }
    if used.len() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: used.len(),
            context: "surviving bootstrap replicates",
        });
    }

    let pointwise_sd = |f_idx: usize| -> Vec<f64> {
        (0..grid.len())
            .map(|g| {
                let vals: Vec<f64> = used.iter().map(|c| c[f_idx][g]).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let ss: f64 = vals.iter().map(|x| (x - m) * (x - m)).sum();
                (ss / (vals.len() - 1) as f64).sqrt()
            })
            .collect()
    };
    Ok(BandStdDev {
        mu_sd: pointwise_sd(0),
        gamma_sd: pointwise_sd(1),
        eta2_sd: pointwise_sd(2),
        n_used: used.len(),
        warnings,
    })
}
