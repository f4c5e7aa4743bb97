//! Black–Scholes pricing and implied-volatility inversion with continuous
//! rates — the pricing oracle behind the synthetic quote stream.

use crate::error::{Error, Result};
use crate::market_data::OptionKind;

/// Standard normal CDF via the complementary error function (double
/// precision; the polynomial approximations common in quick pricers are not
/// accurate enough for the 1e−10 round trips required here).
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// European option price under constant rates. `tau <= 0` returns intrinsic
/// value; `vol <= 0` returns the deterministic discounted-forward limit.
pub fn bs_price(
    spot: f64,
    strike: f64,
    tau: f64,
    r: f64,
    d: f64,
    vol: f64,
    kind: OptionKind,
) -> f64 {
    if tau <= 0.0 {
        return match kind {
            OptionKind::Call => (spot - strike).max(0.0),
            OptionKind::Put => (strike - spot).max(0.0),
        };
    }
    let df_spot = spot * (-d * tau).exp();
    let df_strike = strike * (-r * tau).exp();
    let sigma_rt = vol * tau.sqrt();
    if sigma_rt <= 0.0 {
        return match kind {
            OptionKind::Call => (df_spot - df_strike).max(0.0),
            OptionKind::Put => (df_strike - df_spot).max(0.0),
        };
    }
    let d1 = ((spot / strike).ln() + (r - d + 0.5 * vol * vol) * tau) / sigma_rt;
    let d2 = d1 - sigma_rt;
    match kind {
        OptionKind::Call => df_spot * norm_cdf(d1) - df_strike * norm_cdf(d2),
        OptionKind::Put => df_strike * norm_cdf(-d2) - df_spot * norm_cdf(-d1),
    }
}

/// Black–Scholes vega (∂price/∂vol), shared by both option kinds.
pub fn bs_vega(spot: f64, strike: f64, tau: f64, r: f64, d: f64, vol: f64) -> f64 {
    if tau <= 0.0 || vol <= 0.0 {
        return 0.0;
    }
    let sigma_rt = vol * tau.sqrt();
    let d1 = ((spot / strike).ln() + (r - d + 0.5 * vol * vol) * tau) / sigma_rt;
    spot * (-d * tau).exp() * norm_pdf(d1) * tau.sqrt()
}

/// No-arbitrage price bounds (lower, upper) for the given contract.
pub fn price_bounds(spot: f64, strike: f64, tau: f64, r: f64, d: f64, kind: OptionKind) -> (f64, f64) {
    let df_spot = spot * (-d * tau).exp();
    let df_strike = strike * (-r * tau).exp();
    match kind {
        OptionKind::Call => ((df_spot - df_strike).max(0.0), df_spot),
        OptionKind::Put => ((df_strike - df_spot).max(0.0), df_strike),
    }
}

/// Invert the Black–Scholes formula for the volatility by safeguarded
/// Newton iteration (bisection fallback keeps the iterate bracketed).
pub fn implied_vol(
    price: f64,
    spot: f64,
    strike: f64,
    tau: f64,
    r: f64,
    d: f64,
    kind: OptionKind,
) -> Result<f64> {
    if tau <= 0.0 || spot <= 0.0 || strike <= 0.0 {
        return Err(Error::InvalidArgument(
            "implied_vol requires positive spot, strike and maturity".into(),
        ));
    }
    let (lower, upper) = price_bounds(spot, strike, tau, r, d, kind);
    let eps = 1e-14 * spot.max(strike);
    if price <= lower + eps || price >= upper - eps {
        return Err(Error::PriceOutOfBounds {
            price,
            lower,
            upper,
        });
    }

    let mut lo = 1e-9;
    let mut hi = 1.0;
    while bs_price(spot, strike, tau, r, d, hi, kind) < price && hi < 1e3 {
        hi *= 2.0;
    }
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = bs_price(spot, strike, tau, r, d, sigma, kind) - price;
        if f > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        if f.abs() <= 1e-14 * spot.max(strike) {
            return Ok(sigma);
        }
        let vega = bs_vega(spot, strike, tau, r, d, sigma);
        let newton = if vega > 1e-12 { sigma - f / vega } else { f64::NAN };
        sigma = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-12 {
            return Ok(sigma);
        }
    }
    Ok(sigma)
}
