//! Modified Bessel function of the first kind, order zero.
//!
//! Below [`I0_SERIES_CUTOFF`] the ascending series
//! `I0(x) = sum_m (x^2/4)^m / (m!)^2` is summed directly; every term is
//! positive so there is no cancellation. Above it the Hankel expansion
//! `I0(x) ~ e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! 8^k x^k)` is summed up
//! to its smallest term, which at `x = 15` is already below `1e-12` relative.

use crate::error::{Error, Result};

pub const I0_SERIES_CUTOFF: f64 = 15.0;

pub fn bessel_i0(x: f64) -> Result<f64> {
    check(x)?;
    Ok(if x <= I0_SERIES_CUTOFF { i0_series(x) } else { x.exp() * i0e_asymptotic(x) })
}

/// Exponentially scaled `e^{-x} I0(x)`; finite for every finite `x >= 0`.
pub fn bessel_i0e(x: f64) -> Result<f64> {
    check(x)?;
    Ok(i0e(x))
}

fn check(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("I0 requires x >= 0, got {x}")));
    }
    Ok(())
}

pub(crate) fn i0e(x: f64) -> f64 {
    if x <= I0_SERIES_CUTOFF {
        (-x).exp() * i0_series(x)
    } else {
        i0e_asymptotic(x)
    }
}

fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 0.0;
    loop {
        m += 1.0;
        term *= q / (m * m);
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
    }
}

fn i0e_asymptotic(x: f64) -> f64 {
    let mut term = 1.0_f64;
    let mut sum = 1.0;
    let mut k = 0.0_f64;
    loop {
        let next = term * (2.0 * k + 1.0).powi(2) / (8.0 * (k + 1.0) * x);
        if next >= term || next < 1e-17 * sum {
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}
