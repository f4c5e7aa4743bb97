//! Synthetic quote streams with ground-truth regime labels.
//!
//! Instruments are persistent contracts (fixed absolute strike and expiry)
//! so panel rows have history: strikes span a moneyness range of the initial
//! spot, expiries roll daily from a set of listing offsets. At each quote
//! timestamp every live contract inside the emission bounds is priced under
//! the current regime — analytically through the lognormal-SABR expansion
//! when the regime allows it, otherwise by antithetic Monte Carlo and IV
//! inversion.

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::bs::{bs_price, implied_vol, price_bounds};
use super::model::{RegimeSchedule, SvModelSpec};
use super::paths::{duration_years, SimulatedPath};
use crate::error::{Error, Result};
use crate::market_data::{OptionKind, OptionQuote, DAYS_PER_YEAR};

/// Contract universe for quote emission.
#[derive(Debug, Clone)]
pub struct QuoteGrid {
    /// Absolute strikes.
    pub strikes: Vec<f64>,
    /// Absolute expiry instants.
    pub expiries: Vec<DateTime<Utc>>,
    /// Emit only contracts with time-to-maturity at most this many days.
    pub max_tau_days: f64,
    /// Emit only contracts with spot moneyness strike/S inside this band
    /// (slightly wider than the downstream filters so the filters have work
    /// to do).
    pub emission_moneyness: (f64, f64),
}

impl QuoteGrid {
    /// Default universe: `n_strikes` strikes spanning `moneyness` of the
    /// initial spot, expiries listed daily from the offsets
    /// {3, 7, 14, 30, 60} days over the whole horizon.
    pub fn standard(
        s0: f64,
        start: DateTime<Utc>,
        horizon: Duration,
        n_strikes: usize,
        moneyness: (f64, f64),
    ) -> Self {
        let (lo, hi) = moneyness;
        let strikes = (0..n_strikes)
            .map(|i| {
                let frac = if n_strikes == 1 {
                    0.5
                } else {
                    i as f64 / (n_strikes - 1) as f64
                };
                s0 * (lo + frac * (hi - lo))
            })
            .collect();
        let horizon_days = (horizon.num_seconds() as f64 / 86_400.0).ceil() as i64;
        let mut expiry_days: Vec<i64> = Vec::new();
        for listing_day in 0..=horizon_days {
            for offset in [3_i64, 7, 14, 30, 60] {
                expiry_days.push(listing_day + offset);
            }
        }
        expiry_days.sort_unstable();
        expiry_days.dedup();
        let expiries = expiry_days
            .into_iter()
            .map(|day| start + Duration::days(day))
            .collect();
        QuoteGrid {
            strikes,
            expiries,
            max_tau_days: 60.0,
            emission_moneyness: (0.5, 2.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmittedQuotes {
    pub quotes: Vec<OptionQuote>,
    /// Ground-truth regime label per quote timestamp.
    pub labels: Vec<(DateTime<Utc>, usize)>,
}

/// Monte Carlo pricing controls for non-SABR regimes.
#[derive(Debug, Clone, Copy)]
pub struct McPricing {
    pub sub_paths: usize,
    pub max_step_days: f64,
    pub seed: u64,
}

impl Default for McPricing {
    fn default() -> Self {
        McPricing {
            sub_paths: 10_000,
            max_step_days: 1.0,
            seed: 0x5eed_cafe,
        }
    }
}

/// Expected discounted payoffs from `(s, v)` over `tau` under `model`, for
/// all strikes at once, using antithetic diffusion shocks (jumps sampled
/// independently per branch).
fn mc_prices(
    model: &SvModelSpec,
    s: f64,
    v: f64,
    tau: f64,
    strikes: &[f64],
    mc: &McPricing,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n_steps = ((tau * DAYS_PER_YEAR / mc.max_step_days).ceil() as usize).max(1);
    let dt = tau / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let drift = model.r - model.d - model.jump_intensity * model.mean_jump_size();
    let mut sums = vec![0.0; strikes.len()];
    let pair_count = mc.sub_paths / 2;
    for _ in 0..pair_count {
        let mut states = [(s, v), (s, v)];
        for _ in 0..n_steps {
            let z1: f64 = normal.sample(rng);
            let z2: f64 = normal.sample(rng);
            for (branch, state) in states.iter_mut().enumerate() {
                let sign = if branch == 0 { 1.0 } else { -1.0 };
                let (ref mut sb, ref mut vb) = *state;
                let mut log_jump = 0.0;
                if model.jump_intensity > 0.0 {
                    let poisson = rand_distr::Poisson::new(model.jump_intensity * dt)
                        .expect("positive rate");
                    let n_jumps = poisson.sample(rng) as usize;
                    for _ in 0..n_jumps {
                        log_jump += model.jump_mean + model.jump_sd * rng.sample::<f64, _>(normal);
                    }
                }
                *sb *= ((drift - 0.5 * *vb * *vb) * dt + *vb * sqrt_dt * sign * z1 + log_jump).exp();
                let dv = model.mu_fn.eval(*vb) * dt
                    + model.gamma_fn.eval(*vb) * sqrt_dt * sign * z1
                    + model.eta_fn.eval(*vb) * sqrt_dt * sign * z2;
                *vb = (*vb + dv).abs().max(1e-12);
            }
        }
        for (i, &strike) in strikes.iter().enumerate() {
            sums[i] += (states[0].0 - strike).max(0.0) + (states[1].0 - strike).max(0.0);
        }
    }
    let discount = (-model.r * tau).exp();
    sums.iter()
        .map(|sum| discount * sum / (2 * pair_count) as f64)
        .collect()
}

/// Emit quotes along the path at every `quote_interval`, pricing each live
/// contract under the regime in force at that timestamp. Returns the quotes
/// together with the ground-truth regime label per quote timestamp.
pub fn emit_quotes(
    path: &SimulatedPath,
    schedule: &RegimeSchedule,
    grid: &QuoteGrid,
    quote_interval: Duration,
    mc: &McPricing,
) -> Result<EmittedQuotes> {
    if grid.strikes.is_empty() || grid.expiries.is_empty() {
        return Err(Error::EmptyInput("quote grid"));
    }
    let dt_secs = path.dt.num_seconds();
    let q_secs = quote_interval.num_seconds();
    if q_secs <= 0 || q_secs % dt_secs != 0 {
        return Err(Error::InvalidArgument(format!(
            "quote interval {q_secs}s must be a positive multiple of the path step {dt_secs}s"
        )));
    }
    let stride = (q_secs / dt_secs) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    let mut quotes = Vec::new();
    let mut labels = Vec::new();
    let (m_lo, m_hi) = grid.emission_moneyness;

    for step in (0..path.n_steps()).step_by(stride) {
        let ts = path.timestamp(step);
        let s = path.spot[step];
        let v = path.vol[step];
        let regime = path.regime[step];
        let model = &schedule.segments[regime].model;
        let sabr = model.sabr_params();
        labels.push((ts, regime));

        for &expiry in &grid.expiries {
            if expiry <= ts {
                continue;
            }
            let tau = duration_years(expiry - ts);
            if tau > grid.max_tau_days / DAYS_PER_YEAR {
                continue;
            }
            let forward = s * ((model.r - model.d) * tau).exp();
            let live_strikes: Vec<f64> = grid
                .strikes
                .iter()
                .copied()
                .filter(|&k| {
                    let m = k / s;
                    m >= m_lo && m <= m_hi
                })
                .collect();
            if live_strikes.is_empty() {
                continue;
            }
            let ivs: Vec<f64> = match &sabr {
                Some(p) => live_strikes
                    .iter()
                    .map(|&strike| p.implied_vol(v, (strike / forward).ln(), tau))
                    .collect(),
                None => {
                    let prices = mc_prices(model, s, v, tau, &live_strikes, mc, &mut rng);
                    let mut out = Vec::with_capacity(live_strikes.len());
                    for (&strike, &price) in live_strikes.iter().zip(&prices) {
                        let (lower, upper) =
                            price_bounds(s, strike, tau, model.r, model.d, OptionKind::Call);
                        let clipped = price.clamp(
                            lower + 1e-10 * s.max(strike),
                            upper - 1e-10 * s.max(strike),
                        );
                        out.push(implied_vol(
                            clipped,
                            s,
                            strike,
                            tau,
                            model.r,
                            model.d,
                            OptionKind::Call,
                        )?);
                    }
                    out
                }
            };
            for (&strike, &iv) in live_strikes.iter().zip(&ivs) {
                if !(iv.is_finite() && iv > 0.0) {
                    continue;
                }
                quotes.push(OptionQuote {
                    timestamp: ts,
                    instrument_id: format!(
                        "SYN-{}-{}-C",
                        expiry.format("%Y%m%d"),
                        strike.round() as i64
                    ),
                    expiry,
                    strike,
                    option_kind: OptionKind::Call,
                    underlying_price: s,
                    implied_vol: iv,
                });
            }
        }
    }
    Ok(EmittedQuotes { quotes, labels })
}

/// Tabulate the true μ, γ, η² of each regime on a volatility grid — the
/// truth sidecar for evaluating recovered curves.
pub fn tabulate_truth(
    schedule: &RegimeSchedule,
    v_grid: &[f64],
) -> Vec<(usize, f64, f64, f64, f64)> {
    let mut rows = Vec::new();
    for (idx, seg) in schedule.segments.iter().enumerate() {
        for &v in v_grid {
            let gamma = seg.model.gamma_fn.eval(v);
            let eta = seg.model.eta_fn.eval(v);
            rows.push((idx, v, seg.model.mu_fn.eval(v), gamma, eta * eta));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data;
    use crate::synth::model::{RegimeSegment, ScalarFn};
    use crate::synth::paths::simulate_paths;
    use chrono::TimeZone;

    fn start() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 4, 13, 0, 0, 0).unwrap()
    }

    fn flat_model(v0: f64) -> SvModelSpec {
        SvModelSpec {
            mu_fn: ScalarFn::Constant(0.0),
            gamma_fn: ScalarFn::Constant(0.0),
            eta_fn: ScalarFn::Constant(0.0),
            v0,
            s0: 100.0,
            r: 0.0,
            d: 0.0,
            jump_intensity: 0.0,
            jump_mean: 0.0,
            jump_sd: 0.0,
        }
    }

    #[test]
    fn constant_vol_regime_emits_flat_smile() {
        let schedule = RegimeSchedule::single(flat_model(0.9)).unwrap();
        let path = simulate_paths(
            &schedule,
            Duration::minutes(20),
            Duration::hours(4),
            start(),
            5,
        )
        .unwrap();
        let grid = QuoteGrid::standard(100.0, start(), Duration::hours(4), 11, (0.8, 1.2));
        let out = emit_quotes(&path, &schedule, &grid, Duration::minutes(20), &McPricing::default())
            .unwrap();
        assert!(!out.quotes.is_empty());
        for q in &out.quotes {
            assert!((q.implied_vol - 0.9).abs() < 1e-12, "iv {}", q.implied_vol);
        }
    }

    #[test]
    fn sabr_regime_with_negative_rho_has_negative_skew_everywhere() {
        let schedule =
            RegimeSchedule::single(SvModelSpec::sabr_like(0.8, 100.0, 0.0, 0.0, 1.5, -0.5))
                .unwrap();
        let path = simulate_paths(
            &schedule,
            Duration::minutes(20),
            Duration::hours(8),
            start(),
            6,
        )
        .unwrap();
        let grid = QuoteGrid::standard(100.0, start(), Duration::hours(8), 11, (0.8, 1.2));
        let out = emit_quotes(&path, &schedule, &grid, Duration::minutes(20), &McPricing::default())
            .unwrap();
        // group by (timestamp, expiry): fit a simple slope sign
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<(DateTime<Utc>, DateTime<Utc>), Vec<(f64, f64)>> =
            BTreeMap::new();
        for q in &out.quotes {
            groups
                .entry((q.timestamp, q.expiry))
                .or_default()
                .push((q.strike, q.implied_vol));
        }
        for ((_, _), mut pts) in groups {
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            assert!(
                pts.first().unwrap().1 > pts.last().unwrap().1,
                "short-maturity skew must be negative under rho < 0"
            );
        }
    }

    #[test]
    fn two_regime_schedule_shifts_atm_level_at_boundary() {
        // CUSUM change-point oracle on the ATM IV series
        let a = SvModelSpec::sabr_like(0.6, 100.0, 0.0, 0.0, 1.0, -0.3);
        let b = SvModelSpec::sabr_like(1.4, 100.0, 0.0, 0.0, 1.0, -0.3);
        let boundary = 72usize;
        let schedule = RegimeSchedule::new(vec![
            RegimeSegment {
                start_step: 0,
                model: a,
            },
            RegimeSegment {
                start_step: boundary,
                model: b,
            },
        ])
        .unwrap();
        let path = simulate_paths(
            &schedule,
            Duration::minutes(20),
            Duration::minutes(20 * 143),
            start(),
            7,
        )
        .unwrap();
        let grid = QuoteGrid::standard(100.0, start(), Duration::days(2), 11, (0.8, 1.2));
        let out = emit_quotes(&path, &schedule, &grid, Duration::minutes(20), &McPricing::default())
            .unwrap();
        let groups = market_data::group_by_timestamp(
            &market_data::normalize(&out.quotes, 0.0, 0.0).unwrap().observations,
        );
        let atm_series: Vec<f64> = groups
            .values()
            .map(|g| market_data::estimate_instantaneous_vol(g).unwrap())
            .collect();
        assert_eq!(atm_series.len(), 144);
        // CUSUM: argmax |cumulative deviation from the global mean|
        let mean = atm_series.iter().sum::<f64>() / atm_series.len() as f64;
        let mut cum = 0.0;
        let mut best = (0usize, 0.0_f64);
        for (i, &x) in atm_series.iter().enumerate() {
            cum += x - mean;
            if cum.abs() > best.1 {
                best = (i, cum.abs());
            }
        }
        let detected = best.0 + 1;
        assert!(
            (detected as i64 - boundary as i64).abs() <= 3,
            "change point {detected} vs true boundary {boundary}"
        );
    }

    #[test]
    fn replayed_quotes_reproduce_construction_coordinates() {
        let schedule =
            RegimeSchedule::single(SvModelSpec::sabr_like(0.8, 30_000.0, 0.01, 0.002, 1.2, -0.4))
                .unwrap();
        let path = simulate_paths(
            &schedule,
            Duration::minutes(20),
            Duration::hours(2),
            start(),
            8,
        )
        .unwrap();
        let grid = QuoteGrid::standard(30_000.0, start(), Duration::hours(2), 5, (0.9, 1.1));
        let out = emit_quotes(&path, &schedule, &grid, Duration::minutes(20), &McPricing::default())
            .unwrap();
        let normalized = market_data::normalize(&out.quotes, 0.01, 0.002).unwrap();
        assert!(normalized.rejected.is_empty());
        for (q, o) in out.quotes.iter().zip(&normalized.observations) {
            let tau = duration_years(q.expiry - q.timestamp);
            let forward = q.underlying_price * ((0.01_f64 - 0.002) * tau).exp();
            let k = (q.strike / forward).ln();
            assert!((o.tau - tau).abs() < 1e-10);
            assert!((o.k - k).abs() < 1e-10);
            assert!((o.iv - q.implied_vol).abs() < 1e-15);
        }
    }

    #[test]
    fn mc_pricing_agrees_with_sabr_expansion() {
        // a SABR regime priced by MC must land near the expansion IV
        let model = SvModelSpec::sabr_like(0.8, 100.0, 0.0, 0.0, 1.0, -0.4);
        let sabr = model.sabr_params().unwrap();
        let tau = 14.0 / DAYS_PER_YEAR;
        let strikes = [92.0, 100.0, 108.0];
        let mc = McPricing {
            sub_paths: 60_000,
            max_step_days: 0.25,
            seed: 31,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
        let prices = mc_prices(&model, 100.0, 0.8, tau, &strikes, &mc, &mut rng);
        for (&strike, &price) in strikes.iter().zip(&prices) {
            let iv = implied_vol(price, 100.0, strike, tau, 0.0, 0.0, OptionKind::Call).unwrap();
            let expansion = sabr.implied_vol(0.8, (strike / 100.0_f64).ln(), tau);
            assert!(
                (iv - expansion).abs() < 0.02,
                "strike {strike}: MC iv {iv} vs expansion {expansion}"
            );
        }
    }

    #[test]
    fn mc_fallback_used_for_state_dependent_dynamics() {
        // mean-reverting drift disables the SABR shortcut
        let model = SvModelSpec {
            mu_fn: ScalarFn::Linear {
                intercept: 2.0 * 0.8,
                slope: -2.0,
            },
            gamma_fn: ScalarFn::Proportional(-0.5),
            eta_fn: ScalarFn::Proportional(0.9),
            v0: 0.8,
            s0: 100.0,
            r: 0.0,
            d: 0.0,
            jump_intensity: 0.0,
            jump_mean: 0.0,
            jump_sd: 0.0,
        };
        assert!(model.sabr_params().is_none());
        let schedule = RegimeSchedule::single(model).unwrap();
        let path = simulate_paths(
            &schedule,
            Duration::minutes(20),
            Duration::minutes(20),
            start(),
            1,
        )
        .unwrap();
        let grid = QuoteGrid {
            strikes: vec![95.0, 100.0, 105.0],
            expiries: vec![start() + Duration::days(14)],
            max_tau_days: 60.0,
            emission_moneyness: (0.5, 2.0),
        };
        let mc = McPricing {
            sub_paths: 4_000,
            max_step_days: 0.5,
            seed: 77,
        };
        let out = emit_quotes(&path, &schedule, &grid, Duration::minutes(20), &mc).unwrap();
        assert_eq!(out.quotes.len(), 6); // 3 strikes x 2 timestamps
        for q in &out.quotes {
            assert!(q.implied_vol > 0.3 && q.implied_vol < 1.5);
        }
    }
}
