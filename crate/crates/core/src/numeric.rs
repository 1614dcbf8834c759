//! Scalar numerics shared by the solvers: bracketing root finders, a
//! stable log-sum-exp and the fixed-precision number formatting used in
//! sweep output.

use crate::error::{Error, Result};

/// Bisection stops once the bracket is narrower than this.
pub const X_TOL: f64 = 1e-13;

const MAX_BISECTIONS: usize = 400;

/// `ln(sum(exp(v)))` without overflow or total underflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` do not share a sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::solver(
            format!("no sign change on [{lo}, {hi}]"),
            f_lo.abs().min(f_hi.abs()),
        ));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= X_TOL * (1.0 + mid.abs()) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of a strictly decreasing `f` on `[lo, inf)` with `f(lo) > 0`.
///
/// The upper end starts at `hint` and doubles until `f` turns negative.
pub fn root_decreasing<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hint: f64) -> Result<f64> {
    let mut hi = hint.max(lo + 1.0);
    let mut doublings = 0;
    while f(hi) > 0.0 {
        hi = lo + 2.0 * (hi - lo);
        doublings += 1;
        if doublings > 200 {
            return Err(Error::solver("unbounded monotone root", f(hi)));
        }
    }
    bisect(f, lo, hi)
}

/// All sign changes of `f` on `[lo, hi]`, located on a uniform scan of
/// `cells` sub-intervals and refined by bisection. Exact zeros at scan
/// points are reported once.
pub fn scan_roots<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, cells: usize) -> Result<Vec<f64>> {
    let cells = cells.max(1);
    let width = (hi - lo) / cells as f64;
    let points: Vec<f64> = (0..=cells).map(|k| if k == cells { hi } else { lo + width * k as f64 }).collect();
    let values: Vec<f64> = points.iter().map(|&p| f(p)).collect();
    let mut roots = Vec::new();
    for k in 0..=cells {
        if values[k] == 0.0 {
            roots.push(points[k]);
            continue;
        }
        if k < cells && values[k + 1] != 0.0 && values[k].signum() != values[k + 1].signum() {
            roots.push(bisect(&mut f, points[k], points[k + 1])?);
        }
    }
    Ok(roots)
}

/// `%.{digits}g`-style formatting: `digits` significant digits, trailing
/// zeros trimmed, scientific notation outside `[1e-5, 1e{digits})`.
pub fn format_sig(value: f64, digits: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return format!("{value}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, value);
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if exponent < -5 || exponent >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exponent)
    } else {
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, value)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
