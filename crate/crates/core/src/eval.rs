//! Fit-quality metrics: RMSE/MAE, percentile summary tables, the
//! clustered-vs-unclustered comparison, and label-recovery scoring against
//! synthetic truth.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isvm::FunctionKind;
use crate::stats::{fmt_g12, interp_linear, mean, percentile};

pub fn rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("rmse"));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

pub fn mae(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("mae"));
    }
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64)
}

/// Residuals of a sampled curve against targets: curve(v) − target, with the
/// curve evaluated by linear interpolation on its grid. Targets outside the
/// grid range are skipped (the grid deliberately stops at the 5th/95th
/// percentiles, so tail targets have no curve value).
pub fn curve_residuals(grid: &[f64], curve: &[f64], targets: &[(f64, f64)]) -> Vec<f64> {
    targets
        .iter()
        .filter_map(|&(v, target)| interp_linear(grid, curve, v).map(|c| c - target))
        .collect()
}

/// The scope of an error population: the unclustered baseline or one
/// cluster.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    All,
    Cluster(usize),
}

impl Scope {
    pub fn as_string(&self) -> String {
        match self {
            Scope::All => "all".to_string(),
            Scope::Cluster(c) => format!("c{c}"),
        }
    }

    pub fn parse(s: &str) -> Option<Scope> {
        if s == "all" {
            return Some(Scope::All);
        }
        s.strip_prefix('c')?.parse().ok().map(Scope::Cluster)
    }
}

/// One error population: a function within a scope, with one value per
/// dataset (rolling window or seeded run).
#[derive(Debug, Clone)]
pub struct ErrorGroup {
    pub function: FunctionKind,
    pub scope: Scope,
    pub values: Vec<f64>,
}

/// Summary row in the layout of the RMSE comparison table: mean, 5th/95th
/// percentile and their spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub function: FunctionKind,
    pub scope: Scope,
    pub mean: f64,
    pub pctile5: f64,
    pub pctile95: f64,
    pub spread: f64,
}

/// Mean and empirical 5/95 percentiles (linear interpolation between order
/// statistics) per group.
pub fn summarize(groups: &[ErrorGroup]) -> Result<Vec<ErrorSummary>> {
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        if g.values.is_empty() {
            return Err(Error::EmptyInput("summarize: empty error group"));
        }
        let p5 = percentile(&g.values, 5.0)?;
        let p95 = percentile(&g.values, 95.0)?;
        out.push(ErrorSummary {
            function: g.function,
            scope: g.scope.clone(),
            mean: mean(&g.values)?,
            pctile5: p5,
            pctile95: p95,
            spread: p95 - p5,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterComparison {
    pub function: FunctionKind,
    pub scope: Scope,
    pub cluster_mean: f64,
    pub unclustered_mean: f64,
    pub cluster_spread: f64,
    pub unclustered_spread: f64,
    pub mean_improved: bool,
    pub spread_reduced: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ClusterComparison>,
    /// Fraction of (function, cluster) pairs whose mean error is at most the
    /// unclustered mean.
    pub improved_fraction: f64,
    pub any_spread_reduced: bool,
}

/// Compare per-cluster summaries against the unclustered baseline, function
/// by function.
pub fn compare_clustered(
    unclustered: &[ErrorSummary],
    clustered: &[ErrorSummary],
) -> Result<ComparisonReport> {
    let baseline = |f: FunctionKind| -> Result<&ErrorSummary> {
        unclustered
            .iter()
            .find(|s| s.function == f && s.scope == Scope::All)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "no unclustered baseline for function {}",
                    f.as_str()
                ))
            })
    };
    if clustered.is_empty() {
        return Err(Error::EmptyInput("compare_clustered: clustered summaries"));
    }
    let mut rows = Vec::new();
    for c in clustered {
        if c.scope == Scope::All {
            return Err(Error::InvalidArgument(
                "clustered summaries must not carry the `all` scope".into(),
            ));
        }
        let u = baseline(c.function)?;
        rows.push(ClusterComparison {
            function: c.function,
            scope: c.scope.clone(),
            cluster_mean: c.mean,
            unclustered_mean: u.mean,
            cluster_spread: c.spread,
            unclustered_spread: u.spread,
            mean_improved: c.mean <= u.mean,
            spread_reduced: c.spread < u.spread,
        });
    }
    let improved = rows.iter().filter(|r| r.mean_improved).count();
    Ok(ComparisonReport {
        improved_fraction: improved as f64 / rows.len() as f64,
        any_spread_reduced: rows.iter().any(|r| r.spread_reduced),
        rows,
    })
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    // Heap's algorithm; k stays tiny (exhaustive search is the point).
    let mut items: Vec<usize> = (0..k).collect();
    let mut out = Vec::new();
    fn heap(items: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if n <= 1 {
            out.push(items.clone());
            return;
        }
        for i in 0..n {
            heap(items, n - 1, out);
            if n % 2 == 0 {
                items.swap(i, n - 1);
            } else {
                items.swap(0, n - 1);
            }
        }
    }
    heap(&mut items, k, &mut out);
    out
}

/// Best-permutation label accuracy: the maximum fraction of matching labels
/// over all relabelings of the predicted clusters (exhaustive; intended for
/// small k).
pub fn label_accuracy(predicted: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
            context: "label_accuracy",
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("label_accuracy"));
    }
    if k == 0 || k > 8 {
        return Err(Error::InvalidArgument(format!(
            "label_accuracy supports 1 <= k <= 8, got {k}"
        )));
    }
    if let Some(&bad) = predicted.iter().chain(truth).find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for k = {k}"
        )));
    }
    // confusion counts make each permutation O(k²) instead of O(T)
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let mut best = 0usize;
    for perm in permutations(k) {
        let matched: usize = (0..k).map(|p| confusion[p][perm[p]]).sum();
        best = best.max(matched);
    }
    Ok(best as f64 / predicted.len() as f64)
}

pub const SUMMARY_HEADER: &str = "func,mean,pctile5,pctile95,diff";

fn summary_func_name(s: &ErrorSummary) -> String {
    match &s.scope {
        Scope::All => s.function.as_str().to_string(),
        Scope::Cluster(c) => format!("{}_c{c}", s.function.as_str()),
    }
}

/// Delimited summary table in the comparison-table layout
/// (`func,mean,pctile5,pctile95,diff`).
pub fn write_summary_table(
    path: &Path,
    summaries: &[ErrorSummary],
    header: Option<&str>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(h) = header {
        writeln!(f, "# {h}")?;
    }
    writeln!(f, "{SUMMARY_HEADER}")?;
    for s in summaries {
        writeln!(
            f,
            "{},{},{},{},{}",
            summary_func_name(s),
            fmt_g12(s.mean),
            fmt_g12(s.pctile5),
            fmt_g12(s.pctile95),
            fmt_g12(s.spread),
        )?;
    }
    Ok(())
}

pub fn read_summary_table(path: &Path) -> Result<Vec<ErrorSummary>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == SUMMARY_HEADER {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let (function, scope) = match fields[0].split_once("_c") {
            Some((f, c)) => (
                FunctionKind::parse(f),
                c.parse().ok().map(Scope::Cluster),
            ),
            None => (FunctionKind::parse(fields[0]), Some(Scope::All)),
        };
        let (function, scope) = match (function, scope) {
            (Some(f), Some(s)) => (f, s),
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("bad func label `{}`", fields[0]),
                })
            }
        };
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("field {i}: {e}"),
            })
        };
        out.push(ErrorSummary {
            function,
            scope,
            mean: num(1)?,
            pctile5: num(2)?,
            pctile95: num(3)?,
            spread: num(4)?,
        });
    }
    Ok(out)
}
