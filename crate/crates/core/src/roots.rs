//! Safeguarded root finding for strictly monotone scalar maps.
//!
//! The bracket is grown geometrically from the initial guess, then refined
//! with Newton steps that fall back to bisection whenever a step leaves the
//! bracket or stalls.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Absolute tolerance on the function value.
    pub ftol: f64,
    pub max_iter: usize,
    /// Initial half-width used when growing the bracket.
    pub step: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            ftol: 1e-12,
            max_iter: 400,
            step: 1.0,
        }
    }
}

/// Solves `f(x) = 0` for a continuous, strictly decreasing `f`.
///
/// `df`, when available, must be the derivative of `f`.
pub fn solve_decreasing<F, D>(f: F, df: Option<D>, x0: f64, opts: RootOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::Bracketing(format!("f({x0}) = {f0} is not finite")));
    }
    if f0.abs() <= opts.ftol {
        return Ok(x0);
    }
    // Grow a bracket [lo, hi] with f(lo) > 0 > f(hi).
    let (mut lo, mut hi);
    let mut step = opts.step;
    if f0 > 0.0 {
        lo = x0;
        hi = x0 + step;
        let mut k = 0;
        while f(hi) > 0.0 {
            lo = hi;
            step *= 2.0;
            hi = x0 + step;
            k += 1;
            if k > 1100 || !hi.is_finite() {
                return Err(Error::Bracketing(format!("no sign change to the right of {x0}")));
            }
        }
    } else {
        hi = x0;
        lo = x0 - step;
        let mut k = 0;
        while f(lo) < 0.0 {
            hi = lo;
            step *= 2.0;
            lo = x0 - step;
            k += 1;
            if k > 1100 || !lo.is_finite() {
                return Err(Error::Bracketing(format!("no sign change to the left of {x0}")));
            }
        }
    }

    let mut x = if f0 > 0.0 { lo } else { hi };
    let mut fx = f(x);
    for _ in 0..opts.max_iter {
        if fx.abs() <= opts.ftol {
            return Ok(x);
        }
        let mut next = None;
        if let Some(d) = &df {
            let slope = d(x);
            if slope.is_finite() && slope < 0.0 {
                let candidate = x - fx / slope;
                if candidate > lo && candidate < hi {
                    next = Some(candidate);
                }
            }
        }
        let candidate = next.unwrap_or(0.5 * (lo + hi));
        if candidate <= lo || candidate >= hi {
            // bracket collapsed to adjacent floats
            return Ok(x);
        }
        let fc = f(candidate);
        if fc.is_nan() {
            return Err(Error::Bracketing(format!("f({candidate}) is NaN")));
        }
        if fc > 0.0 {
            lo = candidate;
        } else {
            hi = candidate;
        }
        // Newton steps that do not halve |f| are followed by a bisection.
        if next.is_some() && fc.abs() > 0.5 * fx.abs() {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if fm.abs() < fc.abs() {
                x = mid;
                fx = fm;
                continue;
            }
        }
        x = candidate;
        fx = fc;
    }
    if fx.abs() <= 1e3 * opts.ftol.max(f64::EPSILON * x.abs()) {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: fx.abs(),
    })
}

/// Plain bisection on `[lo, hi]` for an increasing `f`; `f(lo) ≤ 0 ≤ f(hi)`.
pub fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Bracketing(format!(
            "f({lo}) = {flo}, f({hi}) = {fhi} do not bracket a root"
        )));
    }
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NO_DERIV: Option<fn(f64) -> f64> = None;

    #[test]
    fn finds_roots_with_and_without_derivative() {
        let f = |x: f64| 2.0 - x * x * x;
        let x = solve_decreasing(f, NO_DERIV, 0.0, RootOptions::default()).unwrap();
        assert!((x - 2f64.cbrt()).abs() < 1e-12);
        let x = solve_decreasing(f, Some(|x: f64| -3.0 * x * x), 10.0, RootOptions::default()).unwrap();
        assert!((x - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn far_root_needs_expansion() {
        let f = |x: f64| -(x - 1.0e6);
        let x = solve_decreasing(f, Some(|_| -1.0), -3.0, RootOptions::default()).unwrap();
        assert!((x - 1.0e6).abs() < 1e-9);
    }

    #[test]
    fn bracketing_failure_is_reported() {
        let f = |x: f64| 1.0 + (-x).exp();
        assert!(matches!(
            solve_decreasing(f, NO_DERIV, 0.0, RootOptions::default()),
            Err(Error::Bracketing(_))
        ));
    }

    #[test]
    fn bisection() {
        let x = bisect_increasing(|x| x * x - 2.0, 0.0, 2.0, 1e-13).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-12);
        assert!(bisect_increasing(|x| x, 1.0, 2.0, 1e-9).is_err());
    }
}
