use rand::RngCore;

use crate::model::{BoundConstants, PdmpModel};
use crate::point::{HybridPoint, Mode};

/// The process killed at its exit time from `U`: its state space is `U ∪ {Δ}`.
///
/// The flow reaches `Δ` after `u*`, post-jump locations outside `U` are sent to
/// `Δ`, and `Δ` is absorbing with zero jump rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Killed<M> {
    inner: M,
}

impl<M: PdmpModel> Killed<M> {
    pub fn new(inner: M) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: PdmpModel> PdmpModel for Killed<M> {
    fn id(&self) -> String {
        format!("killed[{}|{}]", self.inner.id(), self.inner.target_id())
    }

    fn target_id(&self) -> String {
        self.inner.target_id()
    }

    fn modes(&self) -> Vec<Mode> {
        let mut modes = self.inner.modes();
        modes.push(Mode::CEMETERY);
        modes
    }

    fn dimension(&self, mode: Mode) -> usize {
        if mode.is_cemetery() {
            0
        } else {
            self.inner.dimension(mode)
        }
    }

    fn flow(&self, x: &HybridPoint, t: f64) -> HybridPoint {
        if x.is_cemetery() || t >= self.inner.flow_exit_time(x) {
            HybridPoint::cemetery()
        } else {
            self.inner.flow(x, t)
        }
    }

    fn rate(&self, x: &HybridPoint) -> f64 {
        if x.is_cemetery() {
            0.0
        } else {
            self.inner.rate(x)
        }
    }

    fn kernel_sample(&self, x: &HybridPoint, rng: &mut dyn RngCore) -> HybridPoint {
        if x.is_cemetery() {
            return HybridPoint::cemetery();
        }
        let z = self.inner.kernel_sample(x, rng);
        if self.inner.in_target(&z) {
            z
        } else {
            HybridPoint::cemetery()
        }
    }

    /// The inner boundary still applies inside `U`, so this is `t* ∧ u*`.
    fn boundary_time(&self, x: &HybridPoint) -> f64 {
        if x.is_cemetery() {
            return f64::INFINITY;
        }
        self.inner
            .boundary_time(x)
            .min(self.inner.flow_exit_time(x))
    }

    fn in_target(&self, x: &HybridPoint) -> bool {
        !x.is_cemetery() && self.inner.in_target(x)
    }

    fn flow_exit_time(&self, x: &HybridPoint) -> f64 {
        if x.is_cemetery() {
            0.0
        } else {
            self.inner.flow_exit_time(x)
        }
    }

    fn initial_sample(&self, rng: &mut dyn RngCore) -> HybridPoint {
        let z = self.inner.initial_sample(rng);
        if self.inner.in_target(&z) {
            z
        } else {
            HybridPoint::cemetery()
        }
    }

    fn cumulative_rate(&self, x: &HybridPoint, t: f64) -> Option<f64> {
        if x.is_cemetery() {
            Some(0.0)
        } else {
            self.inner.cumulative_rate(x, t)
        }
    }

    fn cumulative_rate_inverse(&self, x: &HybridPoint, level: f64) -> Option<f64> {
        if x.is_cemetery() {
            Some(if level > 0.0 { f64::INFINITY } else { 0.0 })
        } else {
            self.inner.cumulative_rate_inverse(x, level)
        }
    }

    fn time_cap(&self) -> f64 {
        self.inner.time_cap()
    }

    fn exact_survival(&self, s: f64) -> Option<f64> {
        self.inner.exact_survival(s)
    }

    fn exact_moment(&self, j: u32) -> Option<f64> {
        self.inner.exact_moment(j)
    }

    fn exact_q_tilde(&self) -> Option<f64> {
        self.inner.exact_q_tilde()
    }

    fn certified_horizon(&self) -> Option<usize> {
        self.inner.certified_horizon()
    }

    fn exit_time_bound(&self) -> Option<f64> {
        self.inner.exit_time_bound()
    }

    fn bound_constants(&self) -> Option<BoundConstants> {
        self.inner.bound_constants()
    }

    fn default_s_max(&self) -> f64 {
        self.inner.default_s_max()
    }
}
