//! Choice of the computation horizon `N`.
//!
//! Inter-jump times of a process with rate bounded by `C_λ` and `t*` bounded by
//! `ε` stochastically dominate `S = min(E, ε)` with `E ~ Exp(C_λ)`. Summing `N`
//! independent copies and applying Chebyshev's inequality bounds `P(T_N < K)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{PdmpModel, TargetSet};
use crate::rng::{Purpose, StreamFactory};
use crate::skeleton::{simulate_skeleton_into, SkeletonPath};

use super::mc::{Estimate, MIN_SAMPLES};

const CHUNK: usize = 4096;

/// Mean and variance of `min(E, ε)` with `E ~ Exp(c)`. `ε = ∞` is allowed.
pub fn worst_case_moments(c: f64, epsilon: f64) -> (f64, f64) {
    if epsilon.is_infinite() {
        return (1.0 / c, 1.0 / (c * c));
    }
    let x = c * epsilon;
    let m = -(-x).exp_m1() / c;
    let var = if x < 1e-2 {
        // 1 - 2x e^{-x} - e^{-2x} = Σ_{n≥3} (-1)^{n+1} (2^n - 2n) x^n / n!
        let mut sum = 0.0;
        let mut term = x * x / 2.0;
        for n in 3..30 {
            term *= x / n as f64;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * (2f64.powi(n) - 2.0 * f64::from(n)) * term;
        }
        sum
    } else {
        1.0 - 2.0 * x * (-x).exp() - (-2.0 * x).exp()
    };
    (m, var / (c * c))
}

fn validate(c: f64, epsilon: f64, k: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(
            "C_lambda",
            format!("{c} must be positive and finite"),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("{epsilon} must be positive"),
        ));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(
            "K",
            format!("{k} must be positive and finite"),
        ));
    }
    Ok(())
}

/// Chebyshev bound `min(1, Nσ² / (Nm − K)²)` on `P(T_N < K)`.
pub fn horizon_bound(c: f64, epsilon: f64, n: usize, k: f64) -> Result<f64> {
    validate(c, epsilon, k)?;
    let (m, var) = worst_case_moments(c, epsilon);
    let nm = n as f64 * m;
    if nm <= k {
        return Err(Error::HorizonTooShort { n, nm, k });
    }
    Ok((n as f64 * var / (nm - k).powi(2)).min(1.0))
}

/// Smallest `N` with `Nm > K` and [`horizon_bound`] at most `delta`.
pub fn min_horizon(c: f64, epsilon: f64, k: f64, delta: f64) -> Result<usize> {
    validate(c, epsilon, k)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("{delta} must lie in (0, 1]"),
        ));
    }
    let (m, _) = worst_case_moments(c, epsilon);
    let mut lo = (k / m).floor() as usize + 1;
    while lo as f64 * m <= k {
        lo += 1;
    }
    let ok = |n: usize| horizon_bound(c, epsilon, n, k).map(|b| b <= delta);
    if ok(lo)? {
        return Ok(lo);
    }
    let mut hi = lo.max(1) * 2;
    while !ok(hi)? {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .ok_or_else(|| Error::invalid("delta", "no horizon fits in usize"))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Monte Carlo estimates of `P(τ > T_N)` for `N = 0..=cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonScan {
    pub paths: u64,
    pub beyond: Vec<Estimate>,
}

impl HorizonScan {
    /// Smallest `N >= 1` whose estimate falls strictly below `threshold`.
    pub fn select(&self, threshold: f64) -> Option<usize> {
        (1..self.beyond.len()).find(|&n| self.beyond[n].value < threshold)
    }
}

/// Simulates paths up to `cap` jumps and records the first step at which the
/// chain leaves `U`, which is the first `N` with `τ <= T_N`.
pub fn mc_horizon_scan<M, T>(
    model: &M,
    target: &T,
    cap: usize,
    sample_count: usize,
    seed: u64,
) -> Result<HorizonScan>
where
    M: PdmpModel + ?Sized,
    T: TargetSet + ?Sized,
{
    if sample_count < MIN_SAMPLES {
        return Err(Error::invalid(
            "sample_count",
            format!("{sample_count} is below the minimum of {MIN_SAMPLES}"),
        ));
    }
    let streams = StreamFactory::new(seed);
    let ranges: Vec<_> = (0..sample_count.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(sample_count))
        .collect();
    let parts: Vec<Vec<u64>> = ranges
        .into_par_iter()
        .map(|range| -> Result<Vec<u64>> {
            let mut first_out = vec![0u64; cap + 1];
            let mut path = SkeletonPath::with_capacity(cap);
            for i in range {
                let mut rng = streams.stream(Purpose::MonteCarlo, i as u64);
                simulate_skeleton_into(model, cap, &mut rng, &mut path)?;
                if let Some(k) = path.states.iter().position(|z| !target.contains(z)) {
                    first_out[k] += 1;
                }
            }
            Ok(first_out)
        })
        .collect::<Result<_>>()?;
    let mut first_out = vec![0u64; cap + 1];
    for part in &parts {
        first_out.iter_mut().zip(part).for_each(|(a, b)| *a += b);
    }
    let n = sample_count as u64;
    let mut exited = 0;
    let beyond = first_out
        .iter()
        .map(|&h| {
            exited += h;
            let p = (n - exited) as f64 / n as f64;
            Estimate {
                value: p,
                stderr: (p * (1.0 - p) / n as f64).sqrt(),
            }
        })
        .collect();
    Ok(HorizonScan { paths: n, beyond })
}
