//! Small shared statistics and formatting helpers.

use crate::error::{Error, Result};

/// Arithmetic mean. Errors on empty input.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mean"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Unbiased sample standard deviation (n-1 denominator); 0 for fewer than 2 points.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Empirical percentile with linear interpolation between order statistics
/// (rank h = (n-1)·p/100 on the sorted sample). `p` in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in percentile"));
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        return Ok(sorted[lo]);
    }
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Fixed 12-significant-digit rendering used by every artifact writer so that
/// repeated runs produce byte-identical files.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let s = format!("{:.11e}", x);
    // Trim trailing zeros in the mantissa ("1.20000000000e2" -> "1.2e2").
    let (mantissa, exp) = s.split_once('e').expect("exponent in {:e} format");
    let mantissa = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    let exp: i32 = exp.parse().expect("numeric exponent");
    if (-4..=14).contains(&exp) {
        // Re-render compactly without the exponent for human-friendly files.
        let digits = 11_i32 - exp;
        let out = format!("{:.*}", digits.max(0) as usize, x);
        if out.contains('.') {
            out.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            out
        }
    } else {
        format!("{mantissa}e{exp}")
    }
}

/// Linear interpolation of a sampled curve at `x`; returns None outside the
/// grid range. Grid must be strictly increasing.
pub fn interp_linear(grid: &[f64], values: &[f64], x: f64) -> Option<f64> {
    if grid.len() != values.len() || grid.is_empty() {
        return None;
    }
    if grid.len() == 1 {
        return (x == grid[0]).then(|| values[0]);
    }
    if x < grid[0] || x > grid[grid.len() - 1] {
        return None;
    }
    let idx = match grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
        Ok(i) => return Some(values[i]),
        Err(i) => i,
    };
    let (x0, x1) = (grid[idx - 1], grid[idx]);
    let t = (x - x0) / (x1 - x0);
    Some(values[idx - 1] + t * (values[idx] - values[idx - 1]))
}
