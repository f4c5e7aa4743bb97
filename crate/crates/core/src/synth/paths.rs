//! Euler–Maruyama simulation of the regime-switching dynamics.

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::model::RegimeSchedule;
use crate::error::{Error, Result};
use crate::market_data::DAYS_PER_YEAR;

/// Discretized joint path of (S, v) with the governing regime per step.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub start: DateTime<Utc>,
    pub dt: Duration,
    /// dt in years (ACT/365).
    pub dt_years: f64,
    pub spot: Vec<f64>,
    pub vol: Vec<f64>,
    pub regime: Vec<usize>,
    pub jump_count: usize,
    /// Times the volatility state was reflected away from ≤ 0.
    pub reflection_count: usize,
}

impl SimulatedPath {
    pub fn n_steps(&self) -> usize {
        self.spot.len()
    }

    pub fn timestamp(&self, step: usize) -> DateTime<Utc> {
        self.start + self.dt * step as i32
    }
}

pub fn duration_years(d: Duration) -> f64 {
    d.num_seconds() as f64 / (DAYS_PER_YEAR * 86_400.0)
}

/// Simulate one path on a fixed grid. Log-Euler on the asset (exact
/// per-step martingale under the jump compensator `r − d − θμ̄`), Euler on
/// the volatility with reflection `v ← |v|` should the state be driven
/// non-positive. The state records `n_steps = horizon/dt + 1` points
/// including both endpoints; the volatility resets to each segment's `v0`
/// at the segment boundary.
pub fn simulate_paths(
    schedule: &RegimeSchedule,
    dt: Duration,
    horizon: Duration,
    start: DateTime<Utc>,
    seed: u64,
) -> Result<SimulatedPath> {
    if dt.num_seconds() <= 0 || horizon.num_seconds() <= 0 {
        return Err(Error::InvalidArgument(
            "dt and horizon must be positive".into(),
        ));
    }
    if horizon.num_seconds() % dt.num_seconds() != 0 {
        return Err(Error::InvalidArgument(format!(
            "horizon {}s is not a multiple of dt {}s",
            horizon.num_seconds(),
            dt.num_seconds()
        )));
    }
    let n_steps = (horizon.num_seconds() / dt.num_seconds()) as usize + 1;
    for seg in &schedule.segments {
        if seg.start_step >= n_steps {
            return Err(Error::InvalidArgument(format!(
                "segment start {} beyond horizon of {} steps",
                seg.start_step, n_steps
            )));
        }
    }
    let dt_years = duration_years(dt);
    let sqrt_dt = dt_years.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut spot = Vec::with_capacity(n_steps);
    let mut vol = Vec::with_capacity(n_steps);
    let mut regime = Vec::with_capacity(n_steps);
    let mut jump_count = 0usize;
    let mut reflections = 0usize;

    let mut s = schedule.segments[0].model.s0;
    let mut v = schedule.segments[0].model.v0;
    for step in 0..n_steps {
        let seg_idx = schedule.segment_at(step);
        let model = &schedule.segments[seg_idx].model;
        if step == schedule.segments[seg_idx].start_step && step > 0 {
            v = model.v0;
        }
        spot.push(s);
        vol.push(v);
        regime.push(seg_idx);
        if step + 1 == n_steps {
            break;
        }

        let z1: f64 = std_normal.sample(&mut rng);
        let z2: f64 = std_normal.sample(&mut rng);
        let mut log_jump = 0.0;
        if model.jump_intensity > 0.0 {
            let poisson =
                Poisson::new(model.jump_intensity * dt_years).expect("positive jump rate");
            let n_jumps = poisson.sample(&mut rng) as usize;
            jump_count += n_jumps;
            for _ in 0..n_jumps {
                log_jump += model.jump_mean + model.jump_sd * rng.sample::<f64, _>(std_normal);
            }
        }
        let drift = model.r - model.d - model.jump_intensity * model.mean_jump_size();
        s *= ((drift - 0.5 * v * v) * dt_years + v * sqrt_dt * z1 + log_jump).exp();

        let dv = model.mu_fn.eval(v) * dt_years
            + model.gamma_fn.eval(v) * sqrt_dt * z1
            + model.eta_fn.eval(v) * sqrt_dt * z2;
        v += dv;
        if v <= 0.0 {
            v = v.abs().max(1e-12);
            reflections += 1;
        }
    }

    Ok(SimulatedPath {
        start,
        dt,
        dt_years,
        spot,
        vol,
        regime,
        jump_count,
        reflection_count: reflections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::model::{RegimeSegment, ScalarFn, SvModelSpec};
    use chrono::TimeZone;

    fn start() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 4, 13, 0, 0, 0).unwrap()
    }

    fn constant_vol_model(v0: f64) -> SvModelSpec {
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
    fn constant_vol_log_return_variance_matches() {
        let schedule = RegimeSchedule::single(constant_vol_model(0.5)).unwrap();
        let dt = Duration::minutes(20);
        // 100_000 steps of 20 minutes
        let horizon = Duration::minutes(20 * 100_000);
        let path = simulate_paths(&schedule, dt, horizon, start(), 42).unwrap();
        assert!(path.vol.iter().all(|&v| v == 0.5));
        let dt_years = path.dt_years;
        let rets: Vec<f64> = path
            .spot
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .collect();
        let mean = rets.iter().sum::<f64>() / rets.len() as f64;
        let var = rets.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rets.len() as f64;
        let expected = 0.25 * dt_years;
        assert!(
            ((var - expected) / expected).abs() < 0.02,
            "variance {var} vs {expected}"
        );
    }

    #[test]
    fn discounted_asset_is_martingale_without_jumps() {
        let mut model = SvModelSpec::sabr_like(0.6, 100.0, 0.0, 0.0, 1.0, -0.4);
        model.s0 = 1.0;
        let schedule = RegimeSchedule::single(model).unwrap();
        let dt = Duration::hours(6);
        let horizon = Duration::days(30);
        let n_paths = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for seed in 0..n_paths {
            let path = simulate_paths(&schedule, dt, horizon, start(), 10_000 + seed).unwrap();
            let terminal = *path.spot.last().unwrap();
            sum += terminal;
            sum_sq += terminal * terminal;
        }
        let mean = sum / n_paths as f64;
        let var = sum_sq / n_paths as f64 - mean * mean;
        let se = (var / n_paths as f64).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "mean {mean}, se {se}: martingale violated"
        );
    }

    #[test]
    fn jump_count_is_poisson_with_rate_theta() {
        let mut model = constant_vol_model(0.5);
        model.jump_intensity = 50.0;
        model.jump_mean = 1.1_f64.ln();
        model.jump_sd = 0.0;
        let schedule = RegimeSchedule::single(model).unwrap();
        let horizon = Duration::days(365);
        let dt = Duration::hours(2);
        let n_paths = 200;
        let mut total = 0usize;
        for seed in 0..n_paths {
            let path = simulate_paths(&schedule, dt, horizon, start(), 777 + seed).unwrap();
            total += path.jump_count;
        }
        // total ~ Poisson(n_paths · θ · T)
        let expected = n_paths as f64 * 50.0;
        let se = expected.sqrt();
        assert!(
            ((total as f64) - expected).abs() <= 3.0 * se,
            "total jumps {total} vs {expected} ± {se}"
        );
    }

    #[test]
    fn regime_boundary_resets_vol_state() {
        let a = constant_vol_model(0.4);
        let b = constant_vol_model(1.2);
        let schedule = RegimeSchedule::new(vec![
            RegimeSegment {
                start_step: 0,
                model: a,
            },
            RegimeSegment {
                start_step: 10,
                model: b,
            },
        ])
        .unwrap();
        let path = simulate_paths(
            &schedule,
            Duration::minutes(20),
            Duration::minutes(20 * 19),
            start(),
            3,
        )
        .unwrap();
        assert_eq!(path.vol[9], 0.4);
        assert_eq!(path.vol[10], 1.2);
        assert_eq!(path.regime[9], 0);
        assert_eq!(path.regime[10], 1);
        assert_eq!(path.n_steps(), 20);
    }

    #[test]
    fn horizon_must_be_multiple_of_dt() {
        let schedule = RegimeSchedule::single(constant_vol_model(0.5)).unwrap();
        assert!(simulate_paths(
            &schedule,
            Duration::minutes(20),
            Duration::minutes(50),
            start(),
            1
        )
        .is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let schedule = RegimeSchedule::single(SvModelSpec::sabr_like(0.7, 50.0, 0.01, 0.0, 1.5, -0.6)).unwrap();
        let a = simulate_paths(&schedule, Duration::minutes(20), Duration::days(2), start(), 9).unwrap();
        let b = simulate_paths(&schedule, Duration::minutes(20), Duration::days(2), start(), 9).unwrap();
        assert_eq!(a.spot, b.spot);
        assert_eq!(a.vol, b.vol);
    }
}
