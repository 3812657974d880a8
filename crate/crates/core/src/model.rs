//! The behavioural contract of a piecewise-deterministic Markov process.

use rand::RngCore;

use crate::point::{HybridPoint, Mode};

/// Constants entering the theoretical error bounds, declared by a model when it
/// can justify them analytically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// `P(Z_k within alpha of the boundary of U) <= c * alpha^beta`.
    pub c: f64,
    pub beta: f64,
    /// Bound on the deterministic exit time from the state space of the killed process.
    pub t_star_bound: f64,
    /// Bound on `u*`.
    pub u_star_bound: f64,
    /// Lipschitz constant of `u*`.
    pub u_star_lipschitz: f64,
}

/// Local characteristics of a PDMP together with its target set `U`.
///
/// Implementations must be immutable once built; simulation state lives in the
/// caller's RNG and buffers.
pub trait PdmpModel: Send + Sync {
    /// Identifies the dynamics. Grids trained on one model can be re-queried with
    /// any target set of a model sharing the id.
    fn id(&self) -> String;

    /// Human-readable description of the target set.
    fn target_id(&self) -> String;

    fn modes(&self) -> Vec<Mode>;

    fn dimension(&self, mode: Mode) -> usize;

    /// Deterministic motion `Φ(x, t)` for `t >= 0`.
    fn flow(&self, x: &HybridPoint, t: f64) -> HybridPoint;

    /// Jump intensity `λ(x)`.
    fn rate(&self, x: &HybridPoint) -> f64;

    /// Draws a post-jump location from `Q(·, x)`, where `x` is the pre-jump point.
    fn kernel_sample(&self, x: &HybridPoint, rng: &mut dyn RngCore) -> HybridPoint;

    /// `t*(x)`: time for the flow to reach the boundary of the state space.
    fn boundary_time(&self, x: &HybridPoint) -> f64;

    fn in_target(&self, x: &HybridPoint) -> bool;

    /// `u*(x)`: time for the flow from `x` to leave `U`; zero outside `U`.
    fn flow_exit_time(&self, x: &HybridPoint) -> f64;

    fn initial_sample(&self, rng: &mut dyn RngCore) -> HybridPoint;

    /// Closed form of `Λ(x, t) = ∫_0^t λ(Φ(x, s)) ds`, when available.
    fn cumulative_rate(&self, _x: &HybridPoint, _t: f64) -> Option<f64> {
        None
    }

    /// Closed form of `inf { t >= 0 : Λ(x, t) >= level }` (possibly infinite), when available.
    fn cumulative_rate_inverse(&self, _x: &HybridPoint, _level: f64) -> Option<f64> {
        None
    }

    /// Upper end of the bracket used when inverting the jump-time survival numerically.
    fn time_cap(&self) -> f64 {
        1e12
    }

    /// Some models determine the jump time from the post-jump location at step `k`.
    /// When this returns a value, only the state needs to be quantized.
    fn time_from_state(&self, _step: usize, _z: &HybridPoint) -> Option<f64> {
        None
    }

    /// Exact `P(τ > s)`, when known in closed form.
    fn exact_survival(&self, _s: f64) -> Option<f64> {
        None
    }

    /// Exact `E[τ^j]`, when known.
    fn exact_moment(&self, _j: u32) -> Option<f64> {
        None
    }

    /// Exact first strictly positive value of `q_k = P(τ <= T_k)`.
    fn exact_q_tilde(&self) -> Option<f64> {
        None
    }

    /// Smallest horizon `N` with `P(τ > T_N) = 0`, when it can be certified analytically.
    fn certified_horizon(&self) -> Option<usize> {
        None
    }

    /// A.s. upper bound on `τ`, when one is known.
    fn exit_time_bound(&self) -> Option<f64> {
        None
    }

    fn bound_constants(&self) -> Option<BoundConstants> {
        None
    }

    /// Default upper end of the survival-function grid.
    fn default_s_max(&self) -> f64;
}

/// Membership in `U` and the deterministic exit time `u*`, which is all the
/// exit-time estimators need from a model. Kept separate so that a trained
/// chain can be re-queried with a different target set.
pub trait TargetSet: Sync {
    fn contains(&self, z: &HybridPoint) -> bool;
    fn exit_time(&self, z: &HybridPoint) -> f64;
}

impl<M: PdmpModel + ?Sized> TargetSet for M {
    fn contains(&self, z: &HybridPoint) -> bool {
        !z.is_cemetery() && self.in_target(z)
    }

    fn exit_time(&self, z: &HybridPoint) -> f64 {
        if z.is_cemetery() {
            0.0
        } else {
            self.flow_exit_time(z)
        }
    }
}
