//! Inverse-covariance clustering of panel timestamps into market regimes.
//!
//! Each timestamp's cross-section `r_t` is assigned to the cluster with the
//! largest penalized gain
//!
//! ```text
//! G̃_{t,k} = G_{t,k} − λ·1{k ≠ k_{t−1}}
//! ```
//!
//! where the gain is either minus the squared Euclidean distance to the
//! cluster mean or the Gaussian-likelihood form
//! `½·log|Σ̂_k⁻¹| − n·d²_{t,k}/2` with `d²` the Mahalanobis distance under
//! the cluster's LoGo sparse precision. Assignment sweeps run in temporal
//! order (the penalty references the label just assigned at `t−1`; the first
//! timestamp is unpenalized) and alternate with cluster-statistic refits
//! until the labels stop changing.
//!
//! The switch penalty λ anneals: if a fit leaves some cluster below the
//! minimum size, λ is scaled down by `lambda_decay` and the fit retried,
//! after first verifying that a λ = 0 fit succeeds at all.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering_network::{build_tmfg, log_det, logo_precision, SparsePrecision};
use crate::market_data::PanelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    Euclidean,
    GaussianLikelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccConfig {
    /// Number of regimes, at least 2.
    pub k: usize,
    /// Switch penalty λ.
    pub lambda: f64,
    pub gain_kind: GainKind,
    pub max_iterations: usize,
    pub seed: u64,
    /// Minimum members per cluster; `None` resolves to max(n_assets + 1, 25).
    pub min_cluster_size: Option<usize>,
    /// Geometric annealing factor applied to λ after a degenerate fit.
    pub lambda_decay: f64,
    /// Scale the Mahalanobis term by the panel dimension n (the printed form
    /// of the likelihood gain); `false` gives the textbook −d²/2.
    pub dimension_scaled_gain: bool,
}

impl IccConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            lambda: 0.5,
            gain_kind: GainKind::GaussianLikelihood,
            max_iterations: 40,
            seed,
            min_cluster_size: None,
            lambda_decay: 0.75,
            dimension_scaled_gain: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!(
                "clustering requires k >= 2, got {}",
                self.k
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.lambda_decay > 0.0 && self.lambda_decay < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda_decay {} outside (0, 1)",
                self.lambda_decay
            )));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidArgument("lambda must be finite".into()));
        }
        Ok(())
    }

    pub fn resolved_min_cluster_size(&self, n_assets: usize) -> usize {
        self.min_cluster_size.unwrap_or((n_assets + 1).max(25))
    }
}

/// Per-cluster sufficient statistics used by the gain functions.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    pub mean: DVector<f64>,
    pub precision: SparsePrecision,
    pub log_det_precision: f64,
    pub member_count: usize,
}

#[derive(Debug, Clone)]
pub struct RegimeAssignment {
    /// Cluster id per timestamp.
    pub labels: Vec<usize>,
    /// Final per-cluster statistics; `None` for clusters that ended empty or
    /// too degenerate to refit.
    pub stats: Vec<Option<ClusterStats>>,
    pub n_switches: usize,
    pub converged: bool,
    pub iterations_used: usize,
    /// The switch penalty actually used (after any annealing).
    pub lambda_used: f64,
}

impl RegimeAssignment {
    pub fn member_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0usize; k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Minus the squared Euclidean distance to the cluster mean.
pub fn gain_euclidean(r_t: &DVector<f64>, stats: &ClusterStats) -> f64 {
    let d = r_t - &stats.mean;
    -d.dot(&d)
}

/// Gaussian-likelihood gain `½·log|Σ̂⁻¹| − scale·d²/2` with the Mahalanobis
/// distance `d² = (r−μ̂)ᵀ Σ̂⁻¹ (r−μ̂)`; `scale` is the panel dimension when
/// `dimension_scaled` is set and 1 otherwise.
pub fn gain_gaussian(
    r_t: &DVector<f64>,
    stats: &ClusterStats,
    n: usize,
    dimension_scaled: bool,
) -> Result<f64> {
    let d = r_t - &stats.mean;
    let d2 = (&stats.precision.matrix * &d).dot(&d);
    if d2 < -1e-9 {
        return Err(Error::NotPositiveDefinite("gain_gaussian quadratic form"));
    }
    let scale = if dimension_scaled { n as f64 } else { 1.0 };
    Ok(0.5 * stats.log_det_precision - scale * d2.max(0.0) / 2.0)
}

/// Apply the switch penalty: `G − λ·1{current ≠ previous}`; the first
/// timestamp (no previous label) is never penalized.
pub fn penalized_gain(gain: f64, current: usize, previous: Option<usize>, lambda: f64) -> f64 {
    match previous {
        Some(p) if p != current => gain - lambda,
        _ => gain,
    }
}

fn squared_correlation(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            let denom = cov[(i, i)] * cov[(j, j)];
            if denom > 0.0 {
                let c = cov[(i, j)];
                (c * c / denom).min(1.0)
            } else {
                0.0
            }
        }
    })
}

/// Mean and biased (1/m) covariance, then TMFG on the squared correlation and
/// LoGo for the sparse precision. A non-positive-definite precision is
/// retried once with a ridged covariance before giving up.
fn compute_cluster_stats(
    columns: &[DVector<f64>],
    members: &[usize],
    n: usize,
) -> Result<ClusterStats> {
    if members.is_empty() {
        return Err(Error::EmptyInput("cluster has no members"));
    }
    let m = members.len() as f64;
    let mut mean = DVector::zeros(n);
    for &t in members {
        mean += &columns[t];
    }
    mean /= m;
    let mut cov = DMatrix::zeros(n, n);
    for &t in members {
        let d = &columns[t] - &mean;
        cov.syger(1.0 / m, &d, &d, 1.0);
    }
    // syger fills the lower triangle only; mirror it.
    for i in 0..n {
        for j in (i + 1)..n {
            cov[(i, j)] = cov[(j, i)];
        }
    }

    let build = |cov: &DMatrix<f64>| -> Result<(SparsePrecision, f64)> {
        let graph = build_tmfg(&squared_correlation(cov))?;
        let precision = logo_precision(cov, &graph)?;
        let ld = log_det(&precision)?;
        Ok((precision, ld))
    };
    let (precision, log_det_precision) = match build(&cov) {
        Ok(ok) => ok,
        Err(_) => {
            let ridge = (cov.trace() / n as f64).max(1e-12) * 1e-6;
            let ridged = &cov + DMatrix::identity(n, n) * ridge;
            build(&ridged)?
        }
    };
    Ok(ClusterStats {
        mean,
        precision,
        log_det_precision,
        member_count: members.len(),
    })
}

fn members_of(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (t, &l) in labels.iter().enumerate() {
        members[l].push(t);
    }
    members
}

fn gain_for(
    columns: &[DVector<f64>],
    t: usize,
    stats: &ClusterStats,
    cfg: &IccConfig,
    n: usize,
) -> Result<f64> {
    match cfg.gain_kind {
        GainKind::Euclidean => Ok(gain_euclidean(&columns[t], stats)),
        GainKind::GaussianLikelihood => {
            gain_gaussian(&columns[t], stats, n, cfg.dimension_scaled_gain)
        }
    }
}

/// Refit all cluster statistics, re-seeding clusters that fell below the
/// minimum size with the lowest-gain points from the healthy clusters.
/// May mutate `labels` (the re-seeding).
fn refit_stats(
    columns: &[DVector<f64>],
    labels: &mut [usize],
    cfg: &IccConfig,
    min_size: usize,
    n: usize,
) -> Result<Vec<ClusterStats>> {
    const REPAIR_ROUNDS: usize = 3;
    for _ in 0..REPAIR_ROUNDS {
        let members = members_of(labels, cfg.k);
        let deficient: Vec<usize> = (0..cfg.k).filter(|&k| members[k].len() < min_size).collect();
        if deficient.is_empty() {
            break;
        }
        let healthy: Vec<usize> = (0..cfg.k).filter(|&k| members[k].len() >= min_size).collect();
        if healthy.is_empty() {
            return Err(Error::CannotCluster {
                k: cfg.k,
                reason: "no cluster reaches the minimum size during repair".into(),
            });
        }
        let mut healthy_stats = vec![None; cfg.k];
        for &k in &healthy {
            healthy_stats[k] = Some(compute_cluster_stats(columns, &members[k], n)?);
        }
        for &k in &deficient {
            // rank points in healthy clusters by how poorly they fit where
            // they are
            let mut candidates: Vec<(f64, usize)> = Vec::new();
            for (t, &l) in labels.iter().enumerate() {
                if let Some(stats) = healthy_stats[l].as_ref() {
                    candidates.push((gain_for(columns, t, stats, cfg, n)?, t));
                }
            }
            candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, t) in candidates.iter().take(min_size) {
                labels[t] = k;
            }
        }
    }
    let members = members_of(labels, cfg.k);
    let mut stats = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        stats.push(compute_cluster_stats(columns, &members[k], n)?);
    }
    Ok(stats)
}

fn panel_columns(panel: &PanelMatrix) -> Vec<DVector<f64>> {
    (0..panel.n_timestamps())
        .map(|t| DVector::from_vec(panel.column(t)))
        .collect()
}

/// Total penalized gain of a label path under fixed cluster statistics
/// (diagnostic; the quantity each assignment sweep works on).
pub fn total_penalized_gain(
    panel: &PanelMatrix,
    labels: &[usize],
    stats: &[ClusterStats],
    cfg: &IccConfig,
) -> Result<f64> {
    let columns = panel_columns(panel);
    let n = panel.n_assets();
    let mut total = 0.0;
    let mut prev = None;
    for (t, &l) in labels.iter().enumerate() {
        let g = gain_for(&columns, t, &stats[l], cfg, n)?;
        total += penalized_gain(g, l, prev, cfg.lambda);
        prev = Some(l);
    }
    Ok(total)
}

fn count_switches(labels: &[usize]) -> usize {
    labels.windows(2).filter(|w| w[0] != w[1]).count()
}

/// One full ICC fit at the configured λ: random initial labels, then
/// alternate statistic refits with temporal assignment sweeps until the
/// labels reach a fixed point or `max_iterations` is exhausted.
pub fn fit(panel: &PanelMatrix, cfg: &IccConfig) -> Result<RegimeAssignment> {
    cfg.validate()?;
    let n = panel.n_assets();
    let t_len = panel.n_timestamps();
    let min_size = cfg.resolved_min_cluster_size(n);
    if t_len < cfg.k * min_size {
        return Err(Error::InsufficientObservations {
            needed: cfg.k * min_size,
            got: t_len,
            context: "panel timestamps vs k * min_cluster_size",
        });
    }
    let columns = panel_columns(panel);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels: Vec<usize> = (0..t_len).map(|_| rng.gen_range(0..cfg.k)).collect();

    let mut converged = false;
    let mut iterations_used = 0;
    for _ in 0..cfg.max_iterations {
        iterations_used += 1;
        let before = labels.clone();
        let stats = refit_stats(&columns, &mut labels, cfg, min_size, n)?;
        let mut prev: Option<usize> = None;
        for t in 0..t_len {
            let mut best_gain = f64::NEG_INFINITY;
            let mut best_k = 0;
            for k in 0..cfg.k {
                let pg = penalized_gain(gain_for(&columns, t, &stats[k], cfg, n)?, k, prev, cfg.lambda);
                if pg > best_gain {
                    best_gain = pg;
                    best_k = k;
                }
            }
            labels[t] = best_k;
            prev = Some(best_k);
        }
        if labels == before {
            converged = true;
            break;
        }
    }

    let members = members_of(&labels, cfg.k);
    let stats = members
        .iter()
        .map(|m| {
            if m.is_empty() {
                None
            } else {
                compute_cluster_stats(&columns, m, n).ok()
            }
        })
        .collect();
    Ok(RegimeAssignment {
        n_switches: count_switches(&labels),
        labels,
        stats,
        converged,
        iterations_used,
        lambda_used: cfg.lambda,
    })
}

fn assignment_meets_min_size(assignment: &RegimeAssignment, k: usize, min_size: usize) -> bool {
    assignment
        .member_counts(k)
        .iter()
        .all(|&count| count >= min_size)
}

/// Annealed fit: verify the data clusters at λ = 0 at all, then try the
/// target λ, scaling it down by `lambda_decay` after each degenerate attempt
/// until it drops below 1e−6 (at which point the λ = 0 fit is returned).
pub fn fit_with_annealing(panel: &PanelMatrix, cfg: &IccConfig) -> Result<RegimeAssignment> {
    cfg.validate()?;
    let min_size = cfg.resolved_min_cluster_size(panel.n_assets());
    let base_cfg = IccConfig {
        lambda: 0.0,
        ..cfg.clone()
    };
    let base = fit(panel, &base_cfg)?;
    if !assignment_meets_min_size(&base, cfg.k, min_size) {
        return Err(Error::CannotCluster {
            k: cfg.k,
            reason: format!(
                "unpenalized fit left cluster sizes {:?}, need {min_size} each",
                base.member_counts(cfg.k)
            ),
        });
    }
    if cfg.lambda == 0.0 {
        return Ok(base);
    }
    let mut lambda = cfg.lambda;
    while lambda >= 1e-6 {
        let attempt_cfg = IccConfig {
            lambda,
            ..cfg.clone()
        };
        if let Ok(assignment) = fit(panel, &attempt_cfg) {
            if assignment_meets_min_size(&assignment, cfg.k, min_size) {
                return Ok(assignment);
            }
        }
        lambda *= cfg.lambda_decay;
    }
    Ok(base)
}

/// The λ sequence annealing would attempt, for diagnostics and tests.
pub fn annealing_schedule(lambda: f64, decay: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut lam = lambda;
    while lam >= 1e-6 {
        out.push(lam);
        lam *= decay;
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssignmentSummary {
    pub k: usize,
    pub lambda_used: f64,
    pub n_switches: usize,
    pub converged: bool,
    pub iterations_used: usize,
    pub member_counts: Vec<usize>,
    /// Per-cluster mean vectors (None for empty clusters).
    pub cluster_means: Vec<Option<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

impl AssignmentSummary {
    pub fn from_assignment(a: &RegimeAssignment, k: usize, manifest_hash: Option<String>) -> Self {
        AssignmentSummary {
            k,
            lambda_used: a.lambda_used,
            n_switches: a.n_switches,
            converged: a.converged,
            iterations_used: a.iterations_used,
            member_counts: a.member_counts(k),
            cluster_means: a
                .stats
                .iter()
                .map(|s| s.as_ref().map(|s| s.mean.iter().copied().collect()))
                .collect(),
            manifest_hash,
        }
    }
}

/// Two-column delimited label file: `timestamp,label`.
pub fn write_labels(
    path: &Path,
    timestamps: &[DateTime<Utc>],
    labels: &[usize],
    header: Option<&str>,
) -> Result<()> {
    if timestamps.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: timestamps.len(),
            right: labels.len(),
            context: "write_labels",
        });
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(h) = header {
        writeln!(f, "# {h}")?;
    }
    writeln!(f, "timestamp,label")?;
    for (ts, l) in timestamps.iter().zip(labels) {
        writeln!(
            f,
            "{},{}",
            ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            l
        )?;
    }
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<(DateTime<Utc>, usize)>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == "timestamp,label" {
            continue;
        }
        let (ts, label) = trimmed.split_once(',').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: "expected timestamp,label".into(),
        })?;
        let ts = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("timestamp: {e}"),
            })?
            .with_timezone(&Utc);
        let label = label.parse::<usize>().map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("label: {e}"),
        })?;
        out.push((ts, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
