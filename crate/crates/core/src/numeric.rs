//! Scalar numerical kernels: adaptive Simpson quadrature and bracketed bisection.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;
const MAX_INTERVALS: usize = 1 << 20;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Returns `Err(estimate)` when the depth or interval budget runs out before
/// the tolerance is met.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut converged = true;
    let mut budget = MAX_INTERVALS;
    let value = simpson_step(
        &f,
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        tol,
        MAX_DEPTH,
        &mut budget,
        &mut converged,
    );
    if converged {
        Ok(value)
    } else {
        Err(value)
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
    converged: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 || *budget == 0 {
        *converged = false;
        return left + right + delta / 15.0;
    }
    *budget -= 1;
    simpson_step(
        f,
        a,
        m,
        fa,
        flm,
        fm,
        left,
        0.5 * tol,
        depth - 1,
        budget,
        converged,
    ) + simpson_step(
        f,
        m,
        b,
        fm,
        frm,
        fb,
        right,
        0.5 * tol,
        depth - 1,
        budget,
        converged,
    )
}

/// Smallest `x` in `[lo, hi]` (to relative tolerance `rel_tol`) at which the
/// non-decreasing predicate `reached` becomes true. `reached(hi)` must hold.
pub fn bisect_threshold<P: Fn(f64) -> bool>(
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
    reached: P,
) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Bracket(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !reached(hi) {
        return Err(Error::Bracket(format!(
            "predicate not reached at upper end {hi}"
        )));
    }
    if reached(lo) {
        return Ok(lo);
    }
    // 2000 halvings exhaust any f64 interval.
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= rel_tol * hi.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Root of a strictly increasing continuous function on `[lo, hi]` by bisection.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo}, {hi}]: f(lo) = {flo}, f(hi) = {fhi}"
        )));
    }
    bisect_threshold(lo, hi, rel_tol, |x| f(x) >= 0.0)
}
