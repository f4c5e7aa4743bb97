//! Surface-coefficient inversion into stochastic-volatility targets.
//!
//! The default inversion uses the leading-order short-maturity relations
//! between the smile shape at (τ, k) → (0, 0) and the volatility dynamics
//! dv = μ(v)dt + γ(v)dW₁ + η(v)dW₂:
//!
//! ```text
//! γ  = 2·v·b01                      (ATM skew)
//! η² = 3·v³·b02 + 2·v²·b01²         (smile curvature)
//! μ  = 2·b00 − (γ² + η²)/(2v)       (ATM term-structure slope)
//! ```
//!
//! The trait keeps the inversion pluggable so higher-order relations can
//! replace the defaults without touching the pipeline; the synthetic
//! round-trip suite is the arbiter of adequacy.

use crate::error::{Error, Result};
use crate::surface::SurfaceCoefficients;

/// (gamma, eta², mu) targets for one timestamp.
pub type InversionTargets = (f64, f64, f64);

pub trait CoefficientInversion: Sync {
    fn invert(&self, coeffs: &SurfaceCoefficients, v: f64) -> Result<InversionTargets>;
}

/// The default first-order inversion described in the module docs.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeadingOrderInversion;

impl CoefficientInversion for LeadingOrderInversion {
    fn invert(&self, coeffs: &SurfaceCoefficients, v: f64) -> Result<InversionTargets> {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "instantaneous volatility must be positive, got {v}"
            )));
        }
        let gamma = 2.0 * v * coeffs.b01;
        let eta2 = 3.0 * v.powi(3) * coeffs.b02 + 2.0 * v * v * coeffs.b01 * coeffs.b01;
        let mu = 2.0 * coeffs.b00 - (gamma * gamma + eta2) / (2.0 * v);
        Ok((gamma, eta2, mu))
    }
}

/// Free-function form of the default inversion.
pub fn invert_coefficients(coeffs: &SurfaceCoefficients, v: f64) -> Result<InversionTargets> {
    LeadingOrderInversion.invert(coeffs, v)
}
