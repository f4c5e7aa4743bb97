//! Per-timestamp bivariate IV-surface regression.
//!
//! At each timestamp the observed implied volatilities are regressed on the
//! polynomial basis {1, τ, τ², k, τk, τ²k, k²} by least squares. The
//! coefficient names follow the superscript convention `b{a}{b}` for the
//! τ^a·k^b-adjacent ordering in which the intercept is `b10` and the τ
//! coefficient is `b00`; the names are kept verbatim so downstream consumers
//! match the tabulated output.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::IvObservation;
use crate::stats::fmt_g12;

pub const N_COEFFS: usize = 7;

/// Fitted surface coefficients for one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCoefficients {
    pub timestamp: DateTime<Utc>,
    /// Intercept.
    pub b10: f64,
    /// τ coefficient.
    pub b00: f64,
    /// τ² coefficient.
    pub b20: f64,
    /// k coefficient (skew).
    pub b01: f64,
    /// τk coefficient.
    pub b11: f64,
    /// τ²k coefficient.
    pub b21: f64,
    /// k² coefficient (curvature).
    pub b02: f64,
    pub n_obs: usize,
    pub residual_rmse: f64,
}

fn regressors(tau: f64, k: f64) -> [f64; N_COEFFS] {
    [1.0, tau, tau * tau, k, tau * k, tau * tau * k, k * k]
}

/// Least-squares fit of the surface polynomial at one timestamp.
///
/// Requires at least 7 observations and a full-rank design; rank deficiency
/// (e.g. a single maturity or a single strike) is reported as a degenerate
/// surface sample so the caller can skip the timestamp.
pub fn fit_surface(obs: &[IvObservation]) -> Result<SurfaceCoefficients> {
    let first = obs
        .first()
        .ok_or(Error::EmptyInput("fit_surface: observations"))?;
    let timestamp = first.timestamp;
    if obs.len() < N_COEFFS {
        return Err(Error::InsufficientObservations {
            needed: N_COEFFS,
            got: obs.len(),
            context: "surface fit",
        });
    }
    let m = obs.len();
    let design = DMatrix::from_fn(m, N_COEFFS, |r, c| regressors(obs[r].tau, obs[r].k)[c]);
    let y = DVector::from_fn(m, |r, _| obs[r].iv);

    // QR with column pivoting: better conditioned than normal equations for
    // the near-collinear τ, τ² columns at short maturities, and the pivoted R
    // diagonal exposes rank deficiency. Least squares via the thin factors:
    // X·P = Q·R  ⇒  β = P · R⁻¹ · Qᵀy.
    let qr = design.clone().col_piv_qr();
    let r = qr.r();
    let r_max = (0..N_COEFFS).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank_tol = r_max * (m as f64).sqrt() * f64::EPSILON * 64.0;
    if (0..N_COEFFS).any(|i| r[(i, i)].abs() <= rank_tol) {
        return Err(Error::DegenerateSurface {
            timestamp: timestamp.to_rfc3339(),
            reason: "rank-deficient design (degenerate surface sample)".into(),
        });
    }
    let mut beta = qr.q().transpose() * &y;
    let solved = r.solve_upper_triangular_mut(&mut beta);
    if !solved {
        return Err(Error::DegenerateSurface {
            timestamp: timestamp.to_rfc3339(),
            reason: "least-squares solve failed".into(),
        });
    }
    qr.p().inv_permute_rows(&mut beta);

    let residuals = &design * &beta - &y;
    let rmse = (residuals.dot(&residuals) / m as f64).sqrt();
    Ok(SurfaceCoefficients {
        timestamp,
        b10: beta[0],
        b00: beta[1],
        b20: beta[2],
        b01: beta[3],
        b11: beta[4],
        b21: beta[5],
        b02: beta[6],
        n_obs: m,
        residual_rmse: rmse,
    })
}

/// Forward evaluation of the surface polynomial at (τ, k). May return
/// non-positive values; downstream consumers work with the coefficients, so
/// no clipping is applied here.
pub fn evaluate_surface(c: &SurfaceCoefficients, tau: f64, k: f64) -> f64 {
    let x = regressors(tau, k);
    c.b10 * x[0] + c.b00 * x[1] + c.b20 * x[2] + c.b01 * x[3] + c.b11 * x[4] + c.b21 * x[5] + c.b02 * x[6]
}

pub const SURFACE_HEADER: &str =
    "timestamp,b10,b00,b20,b01,b11,b21,b02,n_obs,residual_rmse";

pub fn write_surfaces(
    path: &Path,
    coeffs: &[SurfaceCoefficients],
    header: Option<&str>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(h) = header {
        writeln!(f, "# {h}")?;
    }
    writeln!(f, "{SURFACE_HEADER}")?;
    for c in coeffs {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            c.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            fmt_g12(c.b10),
            fmt_g12(c.b00),
            fmt_g12(c.b20),
            fmt_g12(c.b01),
            fmt_g12(c.b11),
            fmt_g12(c.b21),
            fmt_g12(c.b02),
            c.n_obs,
            fmt_g12(c.residual_rmse),
        )?;
    }
    Ok(())
}

pub fn read_surfaces(path: &Path) -> Result<Vec<SurfaceCoefficients>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == SURFACE_HEADER {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let ts = DateTime::parse_from_rfc3339(fields[0])
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("timestamp: {e}"),
            })?
            .with_timezone(&Utc);
        let f = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("field {i}: {e}"),
            })
        };
        out.push(SurfaceCoefficients {
            timestamp: ts,
            b10: f(1)?,
            b00: f(2)?,
            b20: f(3)?,
            b01: f(4)?,
            b11: f(5)?,
            b21: f(6)?,
            b02: f(7)?,
            n_obs: fields[8].parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("n_obs: {e}"),
            })?,
            residual_rmse: f(9)?,
        });
    }
    Ok(out)
}
