//! Simulation of the embedded chain `(Z_k, T_k)` of post-jump locations and jump times.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::model::{PdmpModel, TargetSet};
use crate::numeric::adaptive_simpson;
use crate::point::HybridPoint;
use crate::rng::open_unit;

/// Absolute tolerance for the cumulative jump rate when no closed form is registered.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Relative tolerance of the numerical generalized inverse.
pub const INVERSE_REL_TOL: f64 = 1e-12;

/// Guard against runaway horizons. Models with finitely many jumps per unit time
/// never need more than this in practice.
pub const DEFAULT_MAX_JUMPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkeletonPath {
    pub states: Vec<HybridPoint>,
    pub times: Vec<f64>,
}

impl SkeletonPath {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            states: Vec::with_capacity(n + 1),
            times: Vec::with_capacity(n + 1),
        }
    }

    /// Number of jumps `N` covered by the path.
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    fn clear(&mut self) {
        self.states.clear();
        self.times.clear();
    }
}

/// Cumulative rate `Λ(x, t)` on `[0, t]`.
pub fn cumulative_rate<M: PdmpModel + ?Sized>(model: &M, x: &HybridPoint, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    if let Some(v) = model.cumulative_rate(x, t) {
        return Ok(v);
    }
    adaptive_simpson(|s| model.rate(&model.flow(x, s)), 0.0, t, QUADRATURE_TOL)
        .map_err(|estimate| Error::Quadrature { t, estimate })
}

/// Survival function `F(t, x)` of the first jump time from `x`.
pub fn jump_survival<M: PdmpModel + ?Sized>(model: &M, x: &HybridPoint, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(1.0);
    }
    if t >= model.boundary_time(x) {
        return Ok(0.0);
    }
    Ok((-cumulative_rate(model, x, t)?).exp())
}

/// Generalized inverse `Ψ(u, x) = inf { t >= 0 : F(t, x) <= u }`, infinite when the set is empty.
pub fn inverse_jump_time<M: PdmpModel + ?Sized>(model: &M, u: f64, x: &HybridPoint) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::invalid("u", format!("{u} is not in (0, 1]")));
    }
    if u == 1.0 {
        return Ok(0.0);
    }
    let level = -u.ln();
    let t_star = model.boundary_time(x);
    if let Some(t) = model.cumulative_rate_inverse(x, level) {
        return Ok(t.min(t_star));
    }

    let hi = t_star.min(model.time_cap());
    if jump_survival(model, x, hi)? > u {
        if t_star.is_infinite() {
            return Err(Error::Bracket(format!(
                "F(t, x) stays above {u} up to the time cap {hi}"
            )));
        }
        return Ok(t_star);
    }
    let (mut lo, mut hi) = (0.0f64, hi);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= INVERSE_REL_TOL * hi {
            break;
        }
        if jump_survival(model, x, mid)? <= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Simulates `Z_0..Z_N`, `T_0..T_N` into `path`, reusing its buffers.
///
/// A path that reaches the cemetery (or whose next jump never happens) stays at
/// the cemetery with its time frozen.
pub fn simulate_skeleton_into<M: PdmpModel + ?Sized>(
    model: &M,
    horizon: usize,
    rng: &mut dyn RngCore,
    path: &mut SkeletonPath,
) -> Result<()> {
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    if horizon > DEFAULT_MAX_JUMPS {
        return Err(Error::invalid(
            "horizon",
            format!("{horizon} exceeds the jump-count guard {DEFAULT_MAX_JUMPS}"),
        ));
    }
    path.clear();
    let mut z = model.initial_sample(rng);
    let mut t = 0.0;
    for _ in 0..horizon {
        path.states.push(z.clone());
        path.times.push(t);
        if z.is_cemetery() {
            continue;
        }
        let s = inverse_jump_time(model, open_unit(rng), &z)?;
        if s.is_infinite() {
            z = HybridPoint::cemetery();
            t = f64::INFINITY;
            continue;
        }
        let pre_jump = model.flow(&z, s);
        z = if pre_jump.is_cemetery() {
            pre_jump
        } else {
            model.kernel_sample(&pre_jump, rng)
        };
        t += s;
    }
    path.states.push(z);
    path.times.push(t);
    Ok(())
}

pub fn simulate_skeleton<M: PdmpModel + ?Sized>(
    model: &M,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Result<SkeletonPath> {
    let mut path = SkeletonPath::with_capacity(horizon);
    simulate_skeleton_into(model, horizon, rng, &mut path)?;
    Ok(path)
}

/// Exit time of a simulated path from `U`, or `+∞` when the path never leaves `U`
/// within its horizon (meaning `τ > T_N`).
///
/// Relies on the no-return property: the exit happens during the first step
/// `k` with `Z_k ∈ U` and `Z_{k+1} ∉ U`, at `(T_k + u*(Z_k)) ∧ T_{k+1}`.
pub fn exit_time_of_path<T: TargetSet + ?Sized>(target: &T, path: &SkeletonPath) -> f64 {
    match exit_step(target, path) {
        Some(ExitStep::AtStart) => 0.0,
        Some(ExitStep::During(k)) => {
            let z = &path.states[k];
            (path.times[k] + target.exit_time(z)).min(path.times[k + 1])
        }
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ExitStep {
    AtStart,
    /// Exit happens between jumps `k` and `k + 1`.
    During(usize),
}

pub(crate) fn exit_step<T: TargetSet + ?Sized>(
    target: &T,
    path: &SkeletonPath,
) -> Option<ExitStep> {
    let mut inside = target.contains(path.states.first()?);
    if !inside {
        return Some(ExitStep::AtStart);
    }
    for k in 0..path.horizon() {
        let next_inside = target.contains(&path.states[k + 1]);
        if inside && !next_inside {
            return Some(ExitStep::During(k));
        }
        inside = next_inside;
    }
    None
}
