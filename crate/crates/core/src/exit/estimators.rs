use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::TargetSet;
use crate::quantization::QuantizedChain;

/// `p_{k+1} = (p_k q_k + r_k) / q_{k+1}`, or 0 when `q_{k+1} = 0`.
pub fn recursion_step(p_prev: f64, q_prev: f64, r_prev: f64, q_next: f64) -> f64 {
    if q_next == 0.0 {
        0.0
    } else {
        (p_prev * q_prev + r_prev) / q_next
    }
}

/// `q̂_k`: total weight of the step-`k` grid points outside `U`.
pub fn q_hat<T: TargetSet + ?Sized>(chain: &QuantizedChain, target: &T) -> Vec<f64> {
    chain
        .steps
        .iter()
        .map(|step| {
            step.points
                .iter()
                .zip(&step.weights)
                .filter(|(g, _)| !target.contains(&g.state))
                .map(|(_, w)| w)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Crossing {
    /// `(t + u*(z)) ∧ t'`.
    value: f64,
    /// `P(Θ̂_k = θ) Q̂_k(θ; θ')`.
    mass: f64,
}

/// All `(θ, θ')` pairs with `z ∈ U`, `z' ∉ U` and positive mass, per step,
/// together with `q̂`. Every estimator is a finite sum over this table.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingTable {
    pub q_hat: Vec<f64>,
    crossings: Vec<Vec<Crossing>>,
}

impl CrossingTable {
    pub fn new<T: TargetSet + ?Sized>(chain: &QuantizedChain, target: &T) -> Self {
        let q_hat = q_hat(chain, target);
        let outside: Vec<Vec<bool>> = chain
            .steps
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .map(|g| !target.contains(&g.state))
                    .collect()
            })
            .collect();
        let crossings = (0..chain.horizon)
            .map(|k| {
                let (here, next) = (&chain.steps[k], &chain.steps[k + 1]);
                let mut out = Vec::new();
                for (i, row) in chain.transitions[k].rows.iter().enumerate() {
                    let (w, g) = (here.weights[i], &here.points[i]);
                    if w == 0.0 || outside[k][i] {
                        continue;
                    }
                    let exit = g.time + target.exit_time(&g.state);
                    for &(j, q) in row {
                        if outside[k + 1][j as usize] {
                            out.push(Crossing {
                                value: exit.min(next.points[j as usize].time),
                                mass: w * q,
                            });
                        }
                    }
                }
                out
            })
            .collect();
        Self { q_hat, crossings }
    }

    pub fn horizon(&self) -> usize {
        self.crossings.len()
    }

    /// `r̂_k(s)` for `k = 0..N-1`.
    pub fn r_dist(&self, s: f64) -> Vec<f64> {
        self.crossings
            .iter()
            .map(|c| c.iter().filter(|x| x.value > s).map(|x| x.mass).sum())
            .collect()
    }

    /// `r̂_{k,j}` for `k = 0..N-1`.
    pub fn r_mom(&self, j: u32) -> Vec<f64> {
        self.crossings
            .iter()
            .map(|c| c.iter().map(|x| x.value.powi(j as i32) * x.mass).sum())
            .collect()
    }

    /// `p̂_0..p̂_N` from a sequence `r̂_0..r̂_{N-1}`.
    pub fn fold_all(&self, r: &[f64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(r.len() + 1);
        p.push(0.0);
        for k in 0..r.len() {
            p.push(recursion_step(p[k], self.q_hat[k], r[k], self.q_hat[k + 1]));
        }
        p
    }

    pub fn fold(&self, r: &[f64]) -> f64 {
        *self.fold_all(r).last().expect("fold_all is never empty")
    }

    /// `(k̃, q̂_k̃)`, the first strictly positive `q̂_k`.
    pub fn q_tilde(&self) -> Option<(usize, f64)> {
        self.q_hat
            .iter()
            .copied()
            .enumerate()
            .find(|&(_, q)| q > 0.0)
    }
}

pub fn r_hat_dist<T: TargetSet + ?Sized>(chain: &QuantizedChain, target: &T, s: f64) -> Vec<f64> {
    CrossingTable::new(chain, target).r_dist(s)
}

pub fn r_hat_mom<T: TargetSet + ?Sized>(chain: &QuantizedChain, target: &T, j: u32) -> Vec<f64> {
    CrossingTable::new(chain, target).r_mom(j)
}

/// `p̂_{N,j}`, the quantized approximation of `E[τ^j | τ <= T_N]`.
pub fn moment<T: TargetSet + ?Sized>(chain: &QuantizedChain, target: &T, j: u32) -> f64 {
    let table = CrossingTable::new(chain, target);
    table.fold(&table.r_mom(j))
}

/// `s ↦ p̂_N(s)` on a grid, raw and post-processed.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub s: Vec<f64>,
    pub raw: Vec<f64>,
    /// `raw ∧ 1`.
    pub clamped: Vec<f64>,
    /// `clamped / normalizer`, with `0 / 0 = 0`.
    pub normalized: Vec<f64>,
    /// Clamped value of `p̂_N` at `0⁺`.
    pub normalizer: f64,
}

pub fn validate_s_grid(s_grid: &[f64]) -> Result<()> {
    if s_grid.is_empty() {
        return Err(Error::invalid("s_grid", "is empty"));
    }
    if s_grid.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::invalid(
            "s_grid",
            "values must be positive and finite",
        ));
    }
    if s_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "s_grid",
            "values must be strictly increasing",
        ));
    }
    Ok(())
}

/// `n` midpoints of a uniform partition of `(0, s_max]`; they avoid integer
/// breakpoints for the usual choices of `s_max` and `n`.
pub fn default_s_grid(s_max: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| (i as f64 - 0.5) * s_max / n as f64)
        .collect()
}

impl CrossingTable {
    pub fn survival_curve(&self, s_grid: &[f64]) -> Result<SurvivalCurve> {
        validate_s_grid(s_grid)?;
        let raw: Vec<f64> = s_grid
            .par_iter()
            .map(|&s| self.fold(&self.r_dist(s)))
            .collect();
        // The strict indicator at s = 0 is the right limit at 0⁺.
        let normalizer = self.fold(&self.r_dist(0.0)).clamp(0.0, 1.0);
        let clamped: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let normalized = clamped
            .iter()
            .map(|&v| {
                if normalizer == 0.0 {
                    0.0
                } else {
                    v / normalizer
                }
            })
            .collect();
        Ok(SurvivalCurve {
            s: s_grid.to_vec(),
            raw,
            clamped,
            normalized,
            normalizer,
        })
    }
}

pub fn survival_curve<T: TargetSet + ?Sized>(
    chain: &QuantizedChain,
    target: &T,
    s_grid: &[f64],
) -> Result<SurvivalCurve> {
    CrossingTable::new(chain, target).survival_curve(s_grid)
}

/// Every estimated sequence for one target set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitEstimates {
    pub q_hat: Vec<f64>,
    pub r_hat_dist: Vec<(f64, Vec<f64>)>,
    pub r_hat_mom: Vec<(u32, Vec<f64>)>,
    pub survival: SurvivalCurve,
    pub p_hat_mom: Vec<(u32, f64)>,
    pub q_tilde_hat: Option<(usize, f64)>,
}

pub fn exit_estimates<T: TargetSet + ?Sized>(
    chain: &QuantizedChain,
    target: &T,
    s_grid: &[f64],
    moments: &[u32],
) -> Result<ExitEstimates> {
    let table = CrossingTable::new(chain, target);
    let survival = table.survival_curve(s_grid)?;
    let r_hat_dist = s_grid.iter().map(|&s| (s, table.r_dist(s))).collect();
    let r_hat_mom: Vec<(u32, Vec<f64>)> = moments.iter().map(|&j| (j, table.r_mom(j))).collect();
    let p_hat_mom = r_hat_mom.iter().map(|(j, r)| (*j, table.fold(r))).collect();
    Ok(ExitEstimates {
        q_tilde_hat: table.q_tilde(),
        q_hat: table.q_hat,
        r_hat_dist,
        r_hat_mom,
        survival,
        p_hat_mom,
    })
}

/// Checks `U' ⊆ U` on every grid point, which is all that can be verified
/// about a new target set without retraining.
pub fn check_target_subset<A, B>(chain: &QuantizedChain, subset: &A, superset: &B) -> Result<()>
where
    A: TargetSet + ?Sized,
    B: TargetSet + ?Sized,
{
    for (k, step) in chain.steps.iter().enumerate() {
        if let Some(i) = step
            .points
            .iter()
            .position(|g| subset.contains(&g.state) && !superset.contains(&g.state))
        {
            return Err(Error::invalid(
                "target",
                format!(
                    "grid point {i} of step {k} lies in the new set but not in the original one"
                ),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::{HybridPoint, Mode};
    use crate::quantization::{GridPoint, StepGrid, TrainingMeta, Transition};

    /// `U = {x < 1}`, `u*(x) = 1 - x`.
    struct Below1;

    impl TargetSet for Below1 {
        fn contains(&self, z: &HybridPoint) -> bool {
            z.coords[0] < 1.0
        }
        fn exit_time(&self, z: &HybridPoint) -> f64 {
            (1.0 - z.coords[0]).max(0.0)
        }
    }

    fn step(points: &[(f64, f64)], weights: &[f64]) -> StepGrid {
        StepGrid {
            scales: Default::default(),
            points: points
                .iter()
                .map(|&(x, t)| GridPoint::new(HybridPoint::new(Mode(0), &[x]), t))
                .collect(),
            weights: weights.to_vec(),
            distortion: Default::default(),
        }
    }

    fn one_step_chain() -> QuantizedChain {
        QuantizedChain {
            model_id: "hand".into(),
            horizon: 1,
            p: 2.0,
            seed: 0,
            steps: vec![
                step(&[(0.0, 0.0)], &[1.0]),
                step(&[(2.0, 3.0), (0.5, 1.0)], &[0.5, 0.5]),
            ],
            transitions: vec![Transition {
                rows: vec![vec![(0, 0.5), (1, 0.5)]],
            }],
            meta: TrainingMeta::default(),
        }
    }

    #[test]
    fn recursion_examples() {
        assert_eq!(recursion_step(0.7, 0.2, 0.1, 0.0), 0.0);
        assert!((recursion_step(0.0, 0.0, 0.3, 0.5) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn q_hat_sums_outside_weights() {
        let mut c = one_step_chain();
        c.steps[1].weights = vec![0.3, 0.7];
        assert_eq!(q_hat(&c, &Below1), vec![0.0, 0.3]);
    }

    #[test]
    fn q_hat_zero_when_all_inside() {
        let mut c = one_step_chain();
        c.steps[1].points[0].state.coords[0] = 0.9;
        assert_eq!(q_hat(&c, &Below1), vec![0.0, 0.0]);
    }

    #[test]
    fn single_crossing_moment() {
        // (0 + u*(0)) ∧ 3 = 1 with mass 0.5; use a larger exit time to get 2.
        struct Below2;
        impl TargetSet for Below2 {
            fn contains(&self, z: &HybridPoint) -> bool {
                z.coords[0] < 1.0
            }
            fn exit_time(&self, z: &HybridPoint) -> f64 {
                2.0 - z.coords[0]
            }
        }
        let c = one_step_chain();
        assert_eq!(r_hat_mom(&c, &Below2, 2), vec![2.0]);
        assert_eq!(r_hat_mom(&c, &Below2, 0), r_hat_dist(&c, &Below2, 0.0));
    }

    #[test]
    fn survival_vanishes_beyond_support() {
        let c = one_step_chain();
        let curve = survival_curve(&c, &Below1, &[0.5, 1.5]).unwrap();
        assert_eq!(curve.raw, vec![1.0, 0.0]);
        assert_eq!(curve.normalized, vec![1.0, 0.0]);
    }

    #[test]
    fn s_grid_must_increase() {
        let c = one_step_chain();
        assert!(survival_curve(&c, &Below1, &[1.0, 1.0]).is_err());
        assert!(survival_curve(&c, &Below1, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn default_grid_is_midpoints() {
        assert_eq!(default_s_grid(10.0, 4), vec![1.25, 3.75, 6.25, 8.75]);
    }
}
