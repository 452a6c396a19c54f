//! Numeric tolerances shared by every module.
//!
//! Times, delay values and distances are `f64`; comparisons that decide
//! membership, criticality or feasibility go through the helpers here so a
//! single knob controls all of them. The knob is the `METRIC_SERVE_EPS`
//! environment variable (default `1e-9`), read once per process.

use std::sync::OnceLock;

/// Default absolute tolerance for times, delay values and distances.
pub const DEFAULT_EPS: f64 = 1e-9;

/// Environment variable overriding [`DEFAULT_EPS`].
pub const EPS_ENV: &str = "METRIC_SERVE_EPS";

static EPS: OnceLock<f64> = OnceLock::new();

/// The process-wide tolerance.
pub fn eps() -> f64 {
    *EPS.get_or_init(|| {
        std::env::var(EPS_ENV)
            .ok()
            .and_then(|raw| raw.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v > 0.0)
            .unwrap_or(DEFAULT_EPS)
    })
}

/// Tolerance scaled to the magnitude of `reference` (never below [`eps`]).
pub fn scaled(reference: f64) -> f64 {
    eps() * reference.abs().max(1.0)
}

/// `a ≤ b` up to a tolerance scaled by `b`.
pub fn le(a: f64, b: f64) -> bool {
    a <= b + scaled(b)
}

/// `a ≥ b` up to a tolerance scaled by `b`.
pub fn ge(a: f64, b: f64) -> bool {
    a + scaled(b) >= b
}

/// `a > b` by more than the tolerance scaled by `b`.
pub fn gt(a: f64, b: f64) -> bool {
    a > b + scaled(b)
}

/// 2^exp as a float.
pub fn pow2(exp: i32) -> f64 {
    2f64.powi(exp)
}

/// Smallest integer `k` with `2^k ≥ x - eps`, for `x > 0`.
///
/// Plain `ceil(log2(x))` is off by one when `x` is a shortest-path sum that
/// lands a few ulps above a power of two.
pub fn ceil_log2(x: f64) -> i32 {
    debug_assert!(x > 0.0);
    let mut k = x.log2().ceil() as i32;
    while pow2(k - 1) >= x - eps() {
        k -= 1;
    }
    while pow2(k) < x - eps() {
        k += 1;
    }
    k
}

/// Largest integer `k` with `2^k ≤ x`, for `x > 0`.
pub fn floor_log2(x: f64) -> i32 {
    debug_assert!(x > 0.0);
    let mut k = x.log2().floor() as i32;
    while pow2(k) > x {
        k -= 1;
    }
    while pow2(k + 1) <= x {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_log2_handles_exact_powers_and_rounding() {
        assert_eq!(ceil_log2(8.0), 3);
        assert_eq!(ceil_log2(5.0), 3);
        assert_eq!(ceil_log2(1.0), 0);
        assert_eq!(ceil_log2(0.75), 0);
        assert_eq!(ceil_log2(0.5), -1);
        assert_eq!(ceil_log2(8.0 + 1e-13), 3);
        assert_eq!(ceil_log2(8.0 + 1e-6), 4);
    }

    #[test]
    fn floor_log2_basic() {
        assert_eq!(floor_log2(1.0), 0);
        assert_eq!(floor_log2(3.9), 1);
        assert_eq!(floor_log2(4.0), 2);
        assert_eq!(floor_log2(0.3), -2);
    }
}
