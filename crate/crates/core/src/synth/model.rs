//! Regime model specifications for the synthetic market.

use serde::{Deserialize, Serialize};

use super::sabr::SabrParams;
use crate::error::{Error, Result};

/// Scalar function of the volatility state, restricted to shapes that stay
/// serializable and deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarFn {
    Constant(f64),
    /// intercept + slope·v
    Linear { intercept: f64, slope: f64 },
    /// slope·v
    Proportional(f64),
}

impl ScalarFn {
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            ScalarFn::Constant(c) => c,
            ScalarFn::Linear { intercept, slope } => intercept + slope * v,
            ScalarFn::Proportional(slope) => slope * v,
        }
    }

    fn proportional_slope(&self) -> Option<f64> {
        match *self {
            ScalarFn::Proportional(s) => Some(s),
            ScalarFn::Linear { intercept, slope } if intercept == 0.0 => Some(slope),
            ScalarFn::Constant(c) if c == 0.0 => Some(0.0),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.proportional_slope(), Some(0.0)) || matches!(self, ScalarFn::Constant(0.0))
    }
}

/// One regime's stochastic-volatility dynamics:
///
/// ```text
/// dS/S = (r − d − θ(v)·μ̄)·dt + v·dW₁ + (e^J − 1)·dN
/// dv   = μ(v)·dt + γ(v)·dW₁ + η(v)·dW₂
/// ```
///
/// with lognormal jump sizes J ~ N(jump_mean, jump_sd²), constant intensity
/// θ and compensator μ̄ = E[e^J − 1] = exp(jump_mean + jump_sd²/2) − 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvModelSpec {
    pub mu_fn: ScalarFn,
    pub gamma_fn: ScalarFn,
    pub eta_fn: ScalarFn,
    pub v0: f64,
    pub s0: f64,
    pub r: f64,
    pub d: f64,
    /// Jump intensity θ per year; 0 disables jumps.
    pub jump_intensity: f64,
    pub jump_mean: f64,
    pub jump_sd: f64,
}

impl SvModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0) {
            return Err(Error::InvalidArgument("v0 must be positive".into()));
        }
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidArgument("s0 must be positive".into()));
        }
        if self.jump_intensity < 0.0 {
            return Err(Error::InvalidArgument(
                "jump intensity must be non-negative".into(),
            ));
        }
        if self.jump_sd < 0.0 {
            return Err(Error::InvalidArgument("jump sd must be non-negative".into()));
        }
        Ok(())
    }

    /// Mean relative jump size μ̄ = E[e^J − 1] for lognormal jumps.
    pub fn mean_jump_size(&self) -> f64 {
        if self.jump_intensity == 0.0 {
            return 0.0;
        }
        (self.jump_mean + 0.5 * self.jump_sd * self.jump_sd).exp() - 1.0
    }

    /// A regime is SABR-like (analytic smile available) when the vol drift is
    /// zero, both diffusion loadings are proportional to v, and jumps are off:
    /// γ(v) = ρνv, η(v) = √(1−ρ²)νv.
    pub fn sabr_params(&self) -> Option<SabrParams> {
        if self.jump_intensity != 0.0 || !self.mu_fn.is_zero() {
            return None;
        }
        let g = self.gamma_fn.proportional_slope()?;
        let e = self.eta_fn.proportional_slope()?;
        if e < 0.0 {
            return None;
        }
        let nu = (g * g + e * e).sqrt();
        if nu == 0.0 {
            return Some(SabrParams { nu: 0.0, rho: 0.0 });
        }
        Some(SabrParams { nu, rho: g / nu })
    }

    /// Convenience constructor for a SABR-like regime.
    pub fn sabr_like(v0: f64, s0: f64, r: f64, d: f64, nu: f64, rho: f64) -> Self {
        SvModelSpec {
            mu_fn: ScalarFn::Constant(0.0),
            gamma_fn: ScalarFn::Proportional(rho * nu),
            eta_fn: ScalarFn::Proportional((1.0 - rho * rho).sqrt() * nu),
            v0,
            s0,
            r,
            d,
            jump_intensity: 0.0,
            jump_mean: 0.0,
            jump_sd: 0.0,
        }
    }
}

/// Piecewise-regime schedule over the simulation horizon. Segment
/// `start_step` indexes are in simulation steps, must start at 0 and be
/// strictly increasing. At each segment start the volatility state resets to
/// that segment's `v0` (a regime change is a volatility jump); the asset
/// price path stays continuous and later segments' `s0` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSchedule {
    pub segments: Vec<RegimeSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegment {
    pub start_step: usize,
    pub model: SvModelSpec,
}

impl RegimeSchedule {
    pub fn new(segments: Vec<RegimeSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyInput("regime schedule"));
        }
        if segments[0].start_step != 0 {
            return Err(Error::InvalidArgument(
                "first regime segment must start at step 0".into(),
            ));
        }
        for pair in segments.windows(2) {
            if pair[1].start_step <= pair[0].start_step {
                return Err(Error::InvalidArgument(
                    "regime segment starts must be strictly increasing".into(),
                ));
            }
        }
        for seg in &segments {
            seg.model.validate()?;
        }
        Ok(RegimeSchedule { segments })
    }

    pub fn single(model: SvModelSpec) -> Result<Self> {
        Self::new(vec![RegimeSegment {
            start_step: 0,
            model,
        }])
    }

    /// Index of the segment governing simulation step `step`.
    pub fn segment_at(&self, step: usize) -> usize {
        match self
            .segments
            .binary_search_by_key(&step, |s| s.start_step)
        {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn n_regimes(&self) -> usize {
        self.segments.len()
    }
}
