//! Corrosion of an aluminium structure cycling through three environments.
//!
//! Modes are `2 * env + protected`. Coordinates are `(d, s, ρ, γ)`: thickness
//! loss in mm, time since the last jump in hours, corrosion rate in mm/h and the
//! remaining protection time in hours.

use rand::{Rng, RngCore};

use crate::model::PdmpModel;
use crate::numeric::bisect_increasing;
use crate::point::{HybridPoint, Mode};
use crate::rng::open_unit;

pub const THRESHOLD: f64 = 0.2;
pub const WEIBULL_SHAPE: f64 = 2.5;
pub const WEIBULL_SCALE: f64 = 11_800.0;

/// Upper end of the root bracket; `u* <= 2.2e6` h for every admissible parameter.
const U_STAR_BRACKET: f64 = 2.3e6;
const U_STAR_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    /// Rate of leaving the environment, 1/h.
    pub lambda: f64,
    /// Transient time constant, h.
    pub eta: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

pub const ENVIRONMENTS: [Environment; 3] = [
    Environment {
        lambda: 1.0 / 17_520.0,
        eta: 30_000.0,
        rho_min: 1e-6,
        rho_max: 1e-5,
    },
    Environment {
        lambda: 1.0 / 131_400.0,
        eta: 200_000.0,
        rho_min: 1e-7,
        rho_max: 1e-6,
    },
    Environment {
        lambda: 1.0 / 8_760.0,
        eta: 40_000.0,
        rho_min: 1e-6,
        rho_max: 1e-5,
    },
];

/// `F(t) = t + η(e^{-t/η} - 1)`, the shape of the transient loss, evaluated
/// without cancellation for `t << η`.
pub fn transient_shape(t: f64, eta: f64) -> f64 {
    let x = t / eta;
    if x < 1e-3 {
        // x²/2 - x³/6 + x⁴/24 - x⁵/120
        eta * x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    } else {
        t + eta * (-x).exp_m1()
    }
}

/// Thickness lost in `[s, s + t]` since the last jump.
fn loss_increment(s: f64, t: f64, rho: f64, eta: f64) -> f64 {
    rho * (transient_shape(s + t, eta) - transient_shape(s, eta))
}

/// Time for the unprotected flow from `(d, s = 0, ρ)` to reach the threshold.
pub fn corrosion_u_star(d: f64, rho: f64, eta: f64) -> f64 {
    corrosion_u_star_from(d, 0.0, rho, eta)
}

/// As [`corrosion_u_star`] with `s` hours already elapsed since the last jump.
pub fn corrosion_u_star_from(d: f64, s: f64, rho: f64, eta: f64) -> f64 {
    time_to_threshold(d, s, rho, eta, THRESHOLD)
}

fn time_to_threshold(d: f64, s: f64, rho: f64, eta: f64, threshold: f64) -> f64 {
    if d >= threshold {
        return 0.0;
    }
    let gap = |u: f64| d + loss_increment(s, u, rho, eta) - threshold;
    bisect_increasing(gap, 0.0, U_STAR_BRACKET, U_STAR_REL_TOL)
        .expect("corrosion rate below the supported range")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrosionModel {
    /// Start protected with a Weibull protection time; otherwise `γ = 0`.
    pub protected_start: bool,
    pub initial_env: usize,
    pub threshold: f64,
}

impl Default for CorrosionModel {
    fn default() -> Self {
        Self {
            protected_start: true,
            initial_env: 0,
            threshold: THRESHOLD,
        }
    }
}

impl CorrosionModel {
    /// The same dynamics without initial protection.
    pub fn unprotected() -> Self {
        Self {
            protected_start: false,
            ..Self::default()
        }
    }

    /// Same dynamics, smaller failure threshold (a subset `U' ⊂ U`).
    pub fn with_threshold(threshold: f64) -> Self {
        assert!(
            threshold > 0.0 && threshold <= THRESHOLD,
            "threshold must lie in (0, {THRESHOLD}]"
        );
        Self {
            threshold,
            ..Self::default()
        }
    }

    pub fn mode(env: usize, protected: bool) -> Mode {
        Mode((2 * env + usize::from(protected)) as u16)
    }

    pub fn env(mode: Mode) -> usize {
        usize::from(mode.0 / 2)
    }

    pub fn is_protected(mode: Mode) -> bool {
        mode.0 % 2 == 1
    }

    pub fn state(env: usize, protected: bool, d: f64, s: f64, rho: f64, gamma: f64) -> HybridPoint {
        HybridPoint::new(Self::mode(env, protected), &[d, s, rho, gamma])
    }

    fn sample_rho(env: usize, rng: &mut dyn RngCore) -> f64 {
        let e = &ENVIRONMENTS[env];
        e.rho_min + (e.rho_max - e.rho_min) * rng.random::<f64>()
    }

    /// Inverse transform of the Weibull survival `exp(-(γ/β)^α)`.
    pub fn sample_protection(rng: &mut dyn RngCore) -> f64 {
        WEIBULL_SCALE * (-open_unit(rng).ln()).powf(1.0 / WEIBULL_SHAPE)
    }
}

impl PdmpModel for CorrosionModel {
    fn id(&self) -> String {
        if self.protected_start {
            "corrosion".into()
        } else {
            "corrosion-unprotected".into()
        }
    }

    fn target_id(&self) -> String {
        format!("d<{}", self.threshold)
    }

    fn modes(&self) -> Vec<Mode> {
        (0..6).map(Mode).collect()
    }

    fn dimension(&self, _mode: Mode) -> usize {
        4
    }

    fn flow(&self, x: &HybridPoint, t: f64) -> HybridPoint {
        let env = Self::env(x.mode);
        let (d, s, rho, gamma) = (x.coords[0], x.coords[1], x.coords[2], x.coords[3]);
        if Self::is_protected(x.mode) {
            Self::state(env, true, d, s + t, rho, (gamma - t).max(0.0))
        } else {
            let d_next = d + loss_increment(s, t, rho, ENVIRONMENTS[env].eta);
            Self::state(env, false, d_next, s + t, rho, gamma)
        }
    }

    fn rate(&self, x: &HybridPoint) -> f64 {
        ENVIRONMENTS[Self::env(x.mode)].lambda
    }

    /// Protection expiry keeps the environment and starts corrosion from `d = 0`;
    /// any other jump moves to the next environment and keeps `d`. Every jump
    /// resets `s` and redraws `ρ` for the post-jump environment.
    fn kernel_sample(&self, x: &HybridPoint, rng: &mut dyn RngCore) -> HybridPoint {
        let env = Self::env(x.mode);
        let (d, gamma) = (x.coords[0], x.coords[3]);
        if Self::is_protected(x.mode) && gamma <= 0.0 {
            let rho = Self::sample_rho(env, rng);
            Self::state(env, false, 0.0, 0.0, rho, 0.0)
        } else {
            let next = (env + 1) % 3;
            let rho = Self::sample_rho(next, rng);
            Self::state(next, Self::is_protected(x.mode), d, 0.0, rho, gamma)
        }
    }

    fn boundary_time(&self, x: &HybridPoint) -> f64 {
        if Self::is_protected(x.mode) {
            x.coords[3]
        } else {
            f64::INFINITY
        }
    }

    fn in_target(&self, x: &HybridPoint) -> bool {
        x.coords[0] < self.threshold
    }

    fn flow_exit_time(&self, x: &HybridPoint) -> f64 {
        if Self::is_protected(x.mode) {
            return if self.in_target(x) {
                f64::INFINITY
            } else {
                0.0
            };
        }
        let (d, s, rho) = (x.coords[0], x.coords[1], x.coords[2]);
        time_to_threshold(
            d,
            s,
            rho,
            ENVIRONMENTS[Self::env(x.mode)].eta,
            self.threshold,
        )
    }

    fn initial_sample(&self, rng: &mut dyn RngCore) -> HybridPoint {
        let env = self.initial_env;
        let rho = Self::sample_rho(env, rng);
        if self.protected_start {
            let gamma = Self::sample_protection(rng);
            Self::state(env, true, 0.0, 0.0, rho, gamma)
        } else {
            Self::state(env, false, 0.0, 0.0, rho, 0.0)
        }
    }

    fn cumulative_rate(&self, x: &HybridPoint, t: f64) -> Option<f64> {
        Some(self.rate(x) * t.max(0.0))
    }

    fn cumulative_rate_inverse(&self, x: &HybridPoint, level: f64) -> Option<f64> {
        Some(level.max(0.0) / self.rate(x))
    }

    fn default_s_max(&self) -> f64 {
        1.5e6
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Independent oracle: plain bisection on the unmodified equation.
    fn u_star_oracle(d: f64, rho: f64, eta: f64) -> f64 {
        let g = |u: f64| d + rho * (u + eta * ((-u / eta).exp() - 1.0)) - 0.2;
        let (mut lo, mut hi) = (0.0, 3e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn parameters() {
        let lambdas: Vec<f64> = ENVIRONMENTS.iter().map(|e| e.lambda).collect();
        assert_eq!(lambdas, vec![1.0 / 17520.0, 1.0 / 131400.0, 1.0 / 8760.0]);
        let etas: Vec<f64> = ENVIRONMENTS.iter().map(|e| e.eta).collect();
        assert_eq!(etas, vec![30000.0, 200000.0, 40000.0]);
        let rhos: Vec<(f64, f64)> = ENVIRONMENTS
            .iter()
            .map(|e| (e.rho_min, e.rho_max))
            .collect();
        assert_eq!(rhos, vec![(1e-6, 1e-5), (1e-7, 1e-6), (1e-6, 1e-5)]);
    }

    #[test]
    fn u_star_examples() {
        assert_eq!(corrosion_u_star(0.2, 1e-6, 30000.0), 0.0);
        let a = corrosion_u_star(0.1, 1e-6, 30000.0);
        assert!(
            (a / u_star_oracle(0.1, 1e-6, 30000.0) - 1.0).abs() < 1e-7,
            "{a}"
        );
        assert!((a - 1.29601e5).abs() < 1.0, "{a}");
        let b = corrosion_u_star(0.0, 1e-5, 40000.0);
        assert!(
            (b / u_star_oracle(0.0, 1e-5, 40000.0) - 1.0).abs() < 1e-7,
            "{b}"
        );
        assert!((b - 4.7932e4).abs() < 1.0, "{b}");
    }

    #[test]
    fn transient_shape_series_matches_direct_form() {
        for &t in &[1.0, 10.0, 29.0, 31.0, 100.0] {
            let eta: f64 = 30000.0;
            let direct = t + eta * ((-t / eta).exp() - 1.0);
            assert!((transient_shape(t, eta) - direct).abs() <= 1e-9 * direct.abs() + 1e-10);
        }
    }

    #[test]
    fn expiry_starts_corrosion_in_same_environment() {
        let m = CorrosionModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = CorrosionModel::state(1, true, 0.0, 0.0, 5e-7, 100.0);
        let at_boundary = m.flow(&x, m.boundary_time(&x));
        let z = m.kernel_sample(&at_boundary, &mut rng);
        assert_eq!(z.mode, CorrosionModel::mode(1, false));
        assert_eq!(&z.coords[..2], &[0.0, 0.0]);
        assert_eq!(z.coords[3], 0.0);
    }

    #[test]
    fn environment_change_cycles() {
        let m = CorrosionModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = CorrosionModel::state(2, false, 0.05, 10.0, 5e-6, 0.0);
        let z = m.kernel_sample(&x, &mut rng);
        assert_eq!(z.mode, CorrosionModel::mode(0, false));
        assert_eq!(z.coords[0], 0.05);
        assert_eq!(z.coords[1], 0.0);
        let e = ENVIRONMENTS[0];
        assert!(z.coords[2] >= e.rho_min && z.coords[2] <= e.rho_max);
    }

    #[test]
    fn unprotected_exit_time_lands_on_threshold() {
        let m = CorrosionModel::default();
        let x = CorrosionModel::state(0, false, 0.05, 500.0, 3e-6, 0.0);
        let u = m.flow_exit_time(&x);
        let y = m.flow(&x, u);
        assert!((y.coords[0] - 0.2).abs() < 1e-8);
    }
}
