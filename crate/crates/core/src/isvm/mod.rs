//! Per-regime nonparametric recovery of the volatility functions.
//!
//! Each timestamp contributes one target triple (μ, γ, η²) obtained by
//! inverting its fitted surface coefficients at the instantaneous
//! volatility. Per cluster, targets are smoothed over the volatility state
//! with local-linear regression on a percentile grid, and bootstrap
//! resampling of the per-timestamp surfaces supplies two-standard-deviation
//! confidence bands.

mod bootstrap;
mod invert;
mod smooth;

pub use bootstrap::{bootstrap_band_sd, BandStdDev};
pub use invert::{invert_coefficients, CoefficientInversion, InversionTargets, LeadingOrderInversion};
pub use smooth::{
    local_linear_at, local_regression, local_regression_with, percentile_grid,
    silverman_bandwidth, BANDWIDTH_FLOOR_FRACTION, MIN_CLUSTER_POINTS,
};

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::IvObservation;
use crate::stats::fmt_g12;
use crate::surface::fit_surface;

/// All inputs the per-timestamp pipeline stage needs: the filtered
/// observations, the instantaneous volatility, and the regime label.
#[derive(Debug, Clone)]
pub struct TimestampSample {
    pub timestamp: DateTime<Utc>,
    pub v: f64,
    pub label: usize,
    pub observations: Vec<IvObservation>,
}

/// Inverted targets for one timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsvmTargets {
    pub timestamp: DateTime<Utc>,
    pub label: usize,
    pub v: f64,
    pub mu_target: f64,
    pub gamma_target: f64,
    pub eta2_target: f64,
}

impl IsvmTargets {
    pub fn value(&self, function: FunctionKind) -> f64 {
        match function {
            FunctionKind::Mu => self.mu_target,
            FunctionKind::Gamma => self.gamma_target,
            FunctionKind::Eta2 => self.eta2_target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Mu,
    Gamma,
    Eta2,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 3] = [FunctionKind::Mu, FunctionKind::Gamma, FunctionKind::Eta2];

    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionKind::Mu => "mu",
            FunctionKind::Gamma => "gamma",
            FunctionKind::Eta2 => "eta2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mu" => Some(FunctionKind::Mu),
            "gamma" => Some(FunctionKind::Gamma),
            "eta2" => Some(FunctionKind::Eta2),
            _ => None,
        }
    }
}

/// Mean curve with two-standard-deviation bootstrap bands.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionCurve {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub band_sd: Vec<f64>,
}

impl FunctionCurve {
    fn from_mean_and_sd(mean: Vec<f64>, sd: Vec<f64>) -> Self {
        let lower = mean.iter().zip(&sd).map(|(m, s)| m - 2.0 * s).collect();
        let upper = mean.iter().zip(&sd).map(|(m, s)| m + 2.0 * s).collect();
        FunctionCurve {
            mean,
            lower,
            upper,
            band_sd: sd,
        }
    }

    fn bandless(mean: Vec<f64>) -> Self {
        let sd = vec![0.0; mean.len()];
        Self::from_mean_and_sd(mean, sd)
    }
}

/// Fitted curves for one cluster.
#[derive(Debug, Clone)]
pub struct ClusterIsvmFit {
    pub label: usize,
    pub n_points: usize,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub mu: FunctionCurve,
    pub gamma: FunctionCurve,
    pub eta2: FunctionCurve,
    pub n_bootstrap_used: usize,
    pub targets: Vec<IsvmTargets>,
}

impl ClusterIsvmFit {
    pub fn curve(&self, function: FunctionKind) -> &FunctionCurve {
        match function {
            FunctionKind::Mu => &self.mu,
            FunctionKind::Gamma => &self.gamma,
            FunctionKind::Eta2 => &self.eta2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedCluster {
    pub label: usize,
    pub n_points: usize,
}

#[derive(Debug)]
pub struct IsvmFitReport {
    pub fits: Vec<ClusterIsvmFit>,
    pub skipped: Vec<SkippedCluster>,
    /// Timestamps whose surface fit or inversion failed and were dropped.
    pub n_timestamp_failures: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsvmConfig {
    /// Minimum targets per processed cluster.
    pub min_points: usize,
    /// Bootstrap replicates; 0 disables bands.
    pub n_bootstrap: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub grid_percentiles: (f64, f64),
    pub bandwidth_floor_fraction: f64,
}

impl Default for IsvmConfig {
    fn default() -> Self {
        IsvmConfig {
            min_points: MIN_CLUSTER_POINTS,
            n_bootstrap: 500,
            seed: 0,
            grid_points: 50,
            grid_percentiles: (5.0, 95.0),
            bandwidth_floor_fraction: BANDWIDTH_FLOOR_FRACTION,
        }
    }
}

/// Fit one cluster's samples: surface fits → targets → smoothing → bands.
fn fit_cluster(
    label: usize,
    samples: &[&TimestampSample],
    cfg: &IsvmConfig,
    inversion: &dyn CoefficientInversion,
) -> Result<std::result::Result<ClusterIsvmFit, SkippedCluster>> {
    let mut usable: Vec<&TimestampSample> = Vec::with_capacity(samples.len());
    let mut targets: Vec<IsvmTargets> = Vec::with_capacity(samples.len());
    for sample in samples {
        let coeffs = match fit_surface(&sample.observations) {
            Ok(c) => c,
            Err(_) => continue,
        };
        match inversion.invert(&coeffs, sample.v) {
            Ok((gamma, eta2, mu)) => {
                usable.push(sample);
                targets.push(IsvmTargets {
                    timestamp: sample.timestamp,
                    label,
                    v: sample.v,
                    mu_target: mu,
                    gamma_target: gamma,
                    eta2_target: eta2,
                });
            }
            Err(_) => continue,
        }
    }
    if targets.len() < cfg.min_points {
        return Ok(Err(SkippedCluster {
            label,
            n_points: targets.len(),
        }));
    }

    let vs: Vec<f64> = targets.iter().map(|t| t.v).collect();
    let grid = percentile_grid(
        &vs,
        cfg.grid_percentiles.0,
        cfg.grid_percentiles.1,
        cfg.grid_points,
    )?;
    let bandwidth = silverman_bandwidth(&vs, cfg.bandwidth_floor_fraction)?;

    let points_for = |f: FunctionKind| -> Vec<(f64, f64)> {
        targets.iter().map(|t| (t.v, t.value(f))).collect()
    };
    let mu_mean = local_regression_with(&points_for(FunctionKind::Mu), &grid, bandwidth, cfg.min_points)?;
    let gamma_mean =
        local_regression_with(&points_for(FunctionKind::Gamma), &grid, bandwidth, cfg.min_points)?;
    let eta2_mean =
        local_regression_with(&points_for(FunctionKind::Eta2), &grid, bandwidth, cfg.min_points)?;

    let (mu, gamma, eta2, n_boot_used, warnings) = if cfg.n_bootstrap >= 2 {
        let sd = bootstrap_band_sd(
            &usable,
            &grid,
            bandwidth,
            inversion,
            cfg.n_bootstrap,
            cfg.seed,
            cfg.min_points,
        )?;
        (
            FunctionCurve::from_mean_and_sd(mu_mean, sd.mu_sd),
            FunctionCurve::from_mean_and_sd(gamma_mean, sd.gamma_sd),
            FunctionCurve::from_mean_and_sd(eta2_mean, sd.eta2_sd),
            sd.n_used,
            sd.warnings,
        )
    } else {
        (
            FunctionCurve::bandless(mu_mean),
            FunctionCurve::bandless(gamma_mean),
            FunctionCurve::bandless(eta2_mean),
            0,
            Vec::new(),
        )
    };

    Ok(Ok(ClusterIsvmFit {
        label,
        n_points: targets.len(),
        bandwidth,
        grid,
        mu,
        gamma,
        eta2,
        n_bootstrap_used: n_boot_used,
        targets,
    }))
}

/// Fit every cluster present in the samples; clusters with fewer than
/// `min_points` usable targets are skipped and reported. Errors only when
/// every cluster was skipped.
pub fn fit_isvm(
    samples: &[TimestampSample],
    cfg: &IsvmConfig,
    inversion: &dyn CoefficientInversion,
) -> Result<IsvmFitReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("fit_isvm: samples"));
    }
    let mut by_label: BTreeMap<usize, Vec<&TimestampSample>> = BTreeMap::new();
    for s in samples {
        by_label.entry(s.label).or_default().push(s);
    }
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    let mut n_failures = 0usize;
    for (label, group) in by_label {
        let group_size = group.len();
        match fit_cluster(label, &group, cfg, inversion)? {
            Ok(fit) => {
                n_failures += group_size - fit.n_points;
                fits.push(fit);
            }
            Err(skip) => {
                n_failures += group_size - skip.n_points;
                skipped.push(skip);
            }
        }
    }
    if fits.is_empty() {
        return Err(Error::AllClustersSkipped);
    }
    for f in &fits {
        if f.n_bootstrap_used > 0 && f.n_bootstrap_used < cfg.n_bootstrap {
            warnings.push(format!(
                "cluster {}: only {} of {} bootstrap replicates usable",
                f.label, f.n_bootstrap_used, cfg.n_bootstrap
            ));
        }
    }
    Ok(IsvmFitReport {
        fits,
        skipped,
        n_timestamp_failures: n_failures,
        warnings,
    })
}

/// The unclustered baseline: every sample relabelled to cluster 0 and fitted
/// through the identical path.
pub fn fit_unclustered(
    samples: &[TimestampSample],
    cfg: &IsvmConfig,
    inversion: &dyn CoefficientInversion,
) -> Result<ClusterIsvmFit> {
    let relabelled: Vec<TimestampSample> = samples
        .iter()
        .map(|s| TimestampSample {
            label: 0,
            ..s.clone()
        })
        .collect();
    let mut report = fit_isvm(&relabelled, cfg, inversion)?;
    Ok(report.fits.remove(0))
}

pub const CURVE_HEADER: &str = "scope,function,v,mean,lower,upper";

/// One row of the curve table; `scope` is `all` for the unclustered fit or
/// `c<label>` for a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub scope: String,
    pub function: FunctionKind,
    pub v: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn cluster_scope(label: usize) -> String {
    format!("c{label}")
}

pub fn curve_rows(scope: &str, fit: &ClusterIsvmFit) -> Vec<CurveRow> {
    let mut rows = Vec::with_capacity(3 * fit.grid.len());
    for function in FunctionKind::ALL {
        let curve = fit.curve(function);
        for (i, &v) in fit.grid.iter().enumerate() {
            rows.push(CurveRow {
                scope: scope.to_string(),
                function,
                v,
                mean: curve.mean[i],
                lower: curve.lower[i],
                upper: curve.upper[i],
            });
        }
    }
    rows
}

pub fn write_curves(path: &Path, rows: &[CurveRow], header: Option<&str>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(h) = header {
        writeln!(f, "# {h}")?;
    }
    writeln!(f, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.scope,
            r.function.as_str(),
            fmt_g12(r.v),
            fmt_g12(r.mean),
            fmt_g12(r.lower),
            fmt_g12(r.upper),
        )?;
    }
    Ok(())
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == CURVE_HEADER {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let function = FunctionKind::parse(fields[1]).ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("unknown function `{}`", fields[1]),
        })?;
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("field {i}: {e}"),
            })
        };
        rows.push(CurveRow {
            scope: fields[0].to_string(),
            function,
            v: num(2)?,
            mean: num(3)?,
            lower: num(4)?,
            upper: num(5)?,
        });
    }
    Ok(rows)
}

pub const TARGET_HEADER: &str = "timestamp,scope,v,mu,gamma,eta2";

pub fn write_targets(
    path: &Path,
    entries: &[(String, Vec<IsvmTargets>)],
    header: Option<&str>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(h) = header {
        writeln!(f, "# {h}")?;
    }
    writeln!(f, "{TARGET_HEADER}")?;
    for (scope, targets) in entries {
        for t in targets {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                t.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                scope,
                fmt_g12(t.v),
                fmt_g12(t.mu_target),
                fmt_g12(t.gamma_target),
                fmt_g12(t.eta2_target),
            )?;
        }
    }
    Ok(())
}

/// Rows of the target table grouped by scope, preserving file order.
pub fn read_targets(path: &Path) -> Result<Vec<(String, Vec<IsvmTargets>)>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut groups: Vec<(String, Vec<IsvmTargets>)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == TARGET_HEADER {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let timestamp = DateTime::parse_from_rfc3339(fields[0])
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("timestamp: {e}"),
            })?
            .with_timezone(&Utc);
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("field {i}: {e}"),
            })
        };
        let scope = fields[1].to_string();
        let t = IsvmTargets {
            timestamp,
            label: 0,
            v: num(2)?,
            mu_target: num(3)?,
            gamma_target: num(4)?,
            eta2_target: num(5)?,
        };
        match groups.last_mut() {
            Some((s, list)) if *s == scope => list.push(t),
            _ => groups.push((scope, vec![t])),
        }
    }
    Ok(groups)
}
