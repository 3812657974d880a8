use rayon::prelude::*;

use super::estimators::validate_s_grid;
use crate::error::{Error, Result};
use crate::model::{PdmpModel, TargetSet};
use crate::rng::{Purpose, StreamFactory};
use crate::skeleton::{exit_step, simulate_skeleton_into, ExitStep, SkeletonPath};

/// Paths per parallel work unit; fixed so that sums are merged in the same
/// order for any number of threads.
const CHUNK: usize = 4096;
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn proportion(hits: u64, n: u64) -> Self {
        if n == 0 {
            return Self {
                value: 0.0,
                stderr: 0.0,
            };
        }
        let p = hits as f64 / n as f64;
        Self {
            value: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }

    fn mean(sum: f64, sum_sq: f64, n: u64) -> Self {
        if n == 0 {
            return Self {
                value: 0.0,
                stderr: 0.0,
            };
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            value: mean,
            stderr: (var / nf).sqrt(),
        }
    }

    /// `|value - reference| <= k * stderr`, with exact agreement required at zero variance.
    pub fn within(&self, reference: f64, k: f64) -> bool {
        (self.value - reference).abs() <= k * self.stderr + 1e-12 * reference.abs().max(1.0)
    }
}

/// Monte Carlo reference for the exit-time problem on the true process.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub paths: u64,
    pub horizon: usize,
    /// Paths with `τ <= T_N`.
    pub conditioned: u64,
    /// `P(τ > s | τ <= T_N)` on the requested grid.
    pub survival: Vec<(f64, Estimate)>,
    /// `E[τ^j | τ <= T_N]` for `j = 0..=max_moment`.
    pub moments: Vec<Estimate>,
    /// `P(τ > T_N)`.
    pub beyond_horizon: Estimate,
    /// `q_k = P(τ <= T_k)` for `k = 0..=N`.
    pub q: Vec<Estimate>,
    /// First `k` with a positive estimate of `q_k`.
    pub q_tilde: Option<(usize, Estimate)>,
    /// No path exited within the horizon; conditional estimates are meaningless.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
struct Acc {
    conditioned: u64,
    survivors: Vec<u64>,
    /// Sums of `τ^j` for `j = 0..=2 * max_moment`.
    powers: Vec<f64>,
    outside: Vec<u64>,
}

impl Acc {
    fn new(s_points: usize, max_moment: u32, horizon: usize) -> Self {
        Self {
            conditioned: 0,
            survivors: vec![0; s_points],
            powers: vec![0.0; 2 * max_moment as usize + 1],
            outside: vec![0; horizon + 1],
        }
    }

    fn merge(&mut self, other: &Acc) {
        self.conditioned += other.conditioned;
        self.survivors
            .iter_mut()
            .zip(&other.survivors)
            .for_each(|(a, b)| *a += b);
        self.powers
            .iter_mut()
            .zip(&other.powers)
            .for_each(|(a, b)| *a += b);
        self.outside
            .iter_mut()
            .zip(&other.outside)
            .for_each(|(a, b)| *a += b);
    }
}

/// Exit time of a path, `None` when the path stays in `U` up to `T_N`.
pub(crate) fn path_exit_time<T: TargetSet + ?Sized>(
    target: &T,
    path: &SkeletonPath,
) -> Option<f64> {
    match exit_step(target, path)? {
        ExitStep::AtStart => Some(0.0),
        ExitStep::During(k) => {
            let z = &path.states[k];
            Some((path.times[k] + target.exit_time(z)).min(path.times[k + 1]))
        }
    }
}

/// Simulates `sample_count` paths of `model` up to `horizon` jumps and forms
/// conditional estimates given `τ <= T_N`, with standard errors.
pub fn mc_oracle<M, T>(
    model: &M,
    target: &T,
    horizon: usize,
    sample_count: usize,
    s_grid: &[f64],
    max_moment: u32,
    seed: u64,
) -> Result<McReport>
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
    if !s_grid.is_empty() {
        validate_s_grid(s_grid)?;
    }
    let streams = StreamFactory::new(seed);
    let ranges: Vec<_> = (0..sample_count.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(sample_count))
        .collect();
    let parts: Vec<Acc> = ranges
        .into_par_iter()
        .map(|range| -> Result<Acc> {
            let mut acc = Acc::new(s_grid.len(), max_moment, horizon);
            let mut path = SkeletonPath::with_capacity(horizon);
            for i in range {
                let mut rng = streams.stream(Purpose::MonteCarlo, i as u64);
                simulate_skeleton_into(model, horizon, &mut rng, &mut path)?;
                for (k, z) in path.states.iter().enumerate() {
                    if !target.contains(z) {
                        acc.outside[k] += 1;
                    }
                }
                let Some(tau) = path_exit_time(target, &path) else {
                    continue;
                };
                acc.conditioned += 1;
                for (n, &s) in acc.survivors.iter_mut().zip(s_grid) {
                    *n += u64::from(tau > s);
                }
                let mut power = 1.0;
                for sum in acc.powers.iter_mut() {
                    *sum += power;
                    power *= tau;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = Acc::new(s_grid.len(), max_moment, horizon);
    parts.iter().for_each(|p| total.merge(p));

    let n = sample_count as u64;
    let c = total.conditioned;
    let survival = s_grid
        .iter()
        .zip(&total.survivors)
        .map(|(&s, &hits)| (s, Estimate::proportion(hits, c)))
        .collect();
    let moments = (0..=max_moment as usize)
        .map(|j| Estimate::mean(total.powers[j], total.powers[2 * j], c))
        .collect();
    let q: Vec<Estimate> = total
        .outside
        .iter()
        .map(|&h| Estimate::proportion(h, n))
        .collect();
    let q_tilde = q.iter().copied().enumerate().find(|(_, e)| e.value > 0.0);
    Ok(McReport {
        paths: n,
        horizon,
        conditioned: c,
        survival,
        moments,
        beyond_horizon: Estimate::proportion(n - c, n),
        q,
        q_tilde,
        degenerate: c == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportion_stderr() {
        let e = Estimate::proportion(25, 100);
        assert_eq!(e.value, 0.25);
        assert!((e.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mean_of_constant_has_zero_stderr() {
        let e = Estimate::mean(30.0, 90.0, 10);
        assert_eq!(e.value, 3.0);
        assert_eq!(e.stderr, 0.0);
        assert!(e.within(3.0, 3.0));
        assert!(!e.within(3.1, 3.0));
    }
}
