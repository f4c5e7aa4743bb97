//! Lognormal-SABR (β = 1) smile expansion.
//!
//! For volatility dynamics dv = v·ν·(ρ dW₁ + √(1−ρ²) dW₂) with spot vol α,
//! the implied volatility at log-moneyness k = ln(K/F) and maturity τ is
//!
//! ```text
//! σ(k, τ) = α · z/x(z) · [1 + τ·(ρνα/4 + (2−3ρ²)ν²/24)]
//! z = −(ν/α)·k,   x(z) = ln[(√(1−2ρz+z²) + z − ρ)/(1−ρ)]
//! ```
//!
//! which is analytic truth for the round-trip validation of the surface
//! inversion: the leading-order smile has ATM level α, skew ρν/2 and
//! curvature (2−3ρ²)ν²/(12α).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SabrParams {
    /// Proportional vol-of-vol ν (dv = ν·v·dW).
    pub nu: f64,
    /// Correlation between the vol shock and the asset shock.
    pub rho: f64,
}

impl SabrParams {
    /// Implied volatility at spot vol `alpha`, log-moneyness `k` and
    /// maturity `tau`.
    pub fn implied_vol(&self, alpha: f64, k: f64, tau: f64) -> f64 {
        let (nu, rho) = (self.nu, self.rho);
        if nu == 0.0 {
            return alpha;
        }
        let z = -(nu / alpha) * k;
        let z_over_x = if z.abs() < 1e-6 {
            // series of x(z)/z inverted; avoids 0/0 at the money
            1.0 / (1.0 + 0.5 * rho * z + (rho * rho / 2.0 - 1.0 / 6.0) * z * z)
        } else {
            let x = (((1.0 - 2.0 * rho * z + z * z).sqrt() + z - rho) / (1.0 - rho)).ln();
            z / x
        };
        let correction = 1.0 + tau * (rho * nu * alpha / 4.0 + (2.0 - 3.0 * rho * rho) * nu * nu / 24.0);
        alpha * z_over_x * correction
    }

    /// True leverage function γ(v) = ρνv of the corresponding dynamics.
    pub fn gamma(&self, v: f64) -> f64 {
        self.rho * self.nu * v
    }

    /// True idiosyncratic vol-of-vol η(v) = √(1−ρ²)·ν·v.
    pub fn eta(&self, v: f64) -> f64 {
        (1.0 - self.rho * self.rho).sqrt() * self.nu * v
    }
}
