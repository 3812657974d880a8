use rand::RngCore;

use crate::model::{BoundConstants, PdmpModel};
use crate::numeric::adaptive_simpson;
use crate::point::{HybridPoint, Mode};

/// `Y_t = t + N_t` with `N` a unit-rate Poisson process, started at 0, and
/// `U = (-inf, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonModel {
    pub b: f64,
}

impl Default for PoissonModel {
    fn default() -> Self {
        Self { b: 10.0 }
    }
}

impl PoissonModel {
    pub fn new(b: f64) -> Self {
        assert!(
            b > 0.0 && b.is_finite(),
            "threshold must be positive, got {b}"
        );
        Self { b }
    }

    pub fn state(y: f64) -> HybridPoint {
        HybridPoint::new(Mode(0), &[y])
    }
}

/// `P(T_k > s)` for `T_k ~ Gamma(k, 1)`: `sum_{i<k} e^{-s} s^i / i!`.
pub fn poisson_erlang_survival(k: u32, s: f64) -> f64 {
    assert!(k >= 1, "Erlang shape must be at least 1");
    if s <= 0.0 {
        return 1.0;
    }
    let mut term = (-s).exp();
    let mut sum = term;
    for i in 1..k {
        term *= s / f64::from(i);
        sum += term;
    }
    sum.min(1.0)
}

/// `P(τ_b >= s) = P(T_{fl(b-s)+1} > s)` for `s <= b`, and 0 beyond `b`.
pub fn poisson_exact_survival(b: f64, s: f64) -> f64 {
    if s > b {
        return 0.0;
    }
    let s = s.max(0.0);
    let k = (b - s).floor() as u32 + 1;
    poisson_erlang_survival(k, s)
}

/// `E[τ_b^j]` by piecewise quadrature of `j s^{j-1} P(τ_b > s)` between breakpoints.
pub fn poisson_exact_moment(b: f64, j: u32) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut hi = b;
    while hi > 0.0 {
        let lo = (hi - 1.0).max(0.0);
        let k = (b - 0.5 * (lo + hi)).floor() as u32 + 1;
        let jf = f64::from(j);
        let piece = adaptive_simpson(
            |s: f64| jf * s.powi(j as i32 - 1) * poisson_erlang_survival(k, s),
            lo,
            hi,
            1e-14,
        )
        .unwrap_or_else(|estimate| estimate);
        total += piece;
        hi = lo;
    }
    total
}

impl PdmpModel for PoissonModel {
    fn id(&self) -> String {
        "poisson".into()
    }

    fn target_id(&self) -> String {
        format!("y<{}", self.b)
    }

    fn modes(&self) -> Vec<Mode> {
        vec![Mode(0)]
    }

    fn dimension(&self, _mode: Mode) -> usize {
        1
    }

    fn flow(&self, x: &HybridPoint, t: f64) -> HybridPoint {
        Self::state(x.coords[0] + t)
    }

    fn rate(&self, _x: &HybridPoint) -> f64 {
        1.0
    }

    fn kernel_sample(&self, x: &HybridPoint, _rng: &mut dyn RngCore) -> HybridPoint {
        Self::state(x.coords[0] + 1.0)
    }

    fn boundary_time(&self, _x: &HybridPoint) -> f64 {
        f64::INFINITY
    }

    fn in_target(&self, x: &HybridPoint) -> bool {
        x.coords[0] < self.b
    }

    fn flow_exit_time(&self, x: &HybridPoint) -> f64 {
        (self.b - x.coords[0]).max(0.0)
    }

    fn initial_sample(&self, _rng: &mut dyn RngCore) -> HybridPoint {
        Self::state(0.0)
    }

    fn cumulative_rate(&self, _x: &HybridPoint, t: f64) -> Option<f64> {
        Some(t.max(0.0))
    }

    fn cumulative_rate_inverse(&self, _x: &HybridPoint, level: f64) -> Option<f64> {
        Some(level.max(0.0))
    }

    fn time_from_state(&self, step: usize, z: &HybridPoint) -> Option<f64> {
        Some(z.coords[0] - step as f64)
    }

    fn exact_survival(&self, s: f64) -> Option<f64> {
        Some(poisson_exact_survival(self.b, s))
    }

    fn exact_moment(&self, j: u32) -> Option<f64> {
        Some(poisson_exact_moment(self.b, j))
    }

    /// `q_0 = 0` and `q_1 = P(T_1 >= b - 1)`.
    fn exact_q_tilde(&self) -> Option<f64> {
        Some(poisson_erlang_survival(1, (self.b - 1.0).max(0.0)))
    }

    /// `Z_N = N + T_N > N`, so `N = ceil(b)` jumps always leave `U`.
    fn certified_horizon(&self) -> Option<usize> {
        Some((self.b.ceil() as usize).max(1))
    }

    /// `Y_s >= s`.
    fn exit_time_bound(&self) -> Option<f64> {
        Some(self.b)
    }

    /// `Z_k = k + T_k` has a density bounded by 1, and `u*(y) = b - y`.
    fn bound_constants(&self) -> Option<BoundConstants> {
        Some(BoundConstants {
            c: 2.0,
            beta: 1.0,
            t_star_bound: self.b,
            u_star_bound: self.b,
            u_star_lipschitz: 1.0,
        })
    }

    fn default_s_max(&self) -> f64 {
        self.b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erlang_values() {
        assert_eq!(poisson_erlang_survival(1, 0.0), 1.0);
        assert!((poisson_erlang_survival(1, 9.0) - 1.2340980408667956e-4).abs() < 1e-16);
        assert!((poisson_erlang_survival(2, 1.0) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exact_survival_values() {
        assert_eq!(poisson_exact_survival(10.0, 11.0), 0.0);
        assert_eq!(poisson_exact_survival(10.0, 0.0), 1.0);
        assert!((poisson_exact_survival(10.0, 9.5) - (-9.5f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn exact_moments_match_reference() {
        // Independent reference values from a scipy evaluation of the same integrals.
        assert!((poisson_exact_moment(10.0, 1) - 5.125).abs() < 1e-7);
        assert!((poisson_exact_moment(10.0, 2) - 27.5104).abs() < 1e-3);
    }

    #[test]
    fn q_tilde_is_exp_minus_nine() {
        let q = PoissonModel::default().exact_q_tilde().unwrap();
        assert!((q - (-9.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn horizon_certificate() {
        assert_eq!(PoissonModel::default().certified_horizon(), Some(10));
        assert_eq!(PoissonModel::new(9.5).certified_horizon(), Some(10));
    }
}
