//! A finite-state chain `(Z_k, T_k)` written down explicitly, with exact
//! marginals and transitions. Once it leaves `U` it never comes back.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::TargetSet;
use crate::point::{HybridPoint, Mode};
use crate::quantization::{
    Distortion, GridPoint, QuantizedChain, StepGrid, TrainingMeta, Transition,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyPoint {
    pub time: f64,
    pub in_target: bool,
    /// `u*` of the state; ignored outside `U`.
    pub u_star: f64,
}

impl ToyPoint {
    pub fn inside(time: f64, u_star: f64) -> Self {
        Self {
            time,
            in_target: true,
            u_star,
        }
    }

    pub fn outside(time: f64) -> Self {
        Self {
            time,
            in_target: false,
            u_star: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyChain {
    pub steps: Vec<Vec<ToyPoint>>,
    pub initial: Vec<f64>,
    /// Dense row-stochastic matrices between consecutive steps.
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl ToyChain {
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    /// Global id of point `i` at step `k`, stored as the single coordinate of its state.
    pub fn id(&self, k: usize, i: usize) -> usize {
        self.steps[..k].iter().map(Vec::len).sum::<usize>() + i
    }

    pub fn state(&self, k: usize, i: usize) -> HybridPoint {
        HybridPoint::new(Mode(0), &[self.id(k, i) as f64])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("toy chain", reason));
        if self.steps.is_empty() || self.steps.iter().any(Vec::is_empty) {
            return bad("every step needs at least one point".into());
        }
        if self.initial.len() != self.steps[0].len() || self.transitions.len() != self.horizon() {
            return bad("shape mismatch".into());
        }
        if (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12
            || self.initial.iter().any(|&w| w < 0.0)
        {
            return bad("initial law is not a probability vector".into());
        }
        for (k, m) in self.transitions.iter().enumerate() {
            if m.len() != self.steps[k].len() {
                return bad(format!("step {k}: wrong row count"));
            }
            for (i, row) in m.iter().enumerate() {
                if row.len() != self.steps[k + 1].len()
                    || row.iter().any(|&q| q < 0.0)
                    || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12
                {
                    return bad(format!("step {k}, row {i}: not stochastic"));
                }
                if !self.steps[k][i].in_target
                    && row
                        .iter()
                        .zip(&self.steps[k + 1])
                        .any(|(&q, p)| q > 0.0 && p.in_target)
                {
                    return bad(format!("step {k}, row {i}: returns into U"));
                }
            }
        }
        Ok(())
    }

    /// Laws of `Z_0, ..., Z_N`.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.initial.clone()];
        for (k, m) in self.transitions.iter().enumerate() {
            let prev = &out[k];
            let next = (0..self.steps[k + 1].len())
                .map(|j| prev.iter().zip(m).map(|(w, row)| w * row[j]).sum())
                .collect();
            out.push(next);
        }
        out
    }

    /// The chain as a quantized chain whose grids are the exact supports.
    pub fn to_chain(&self) -> QuantizedChain {
        let steps = self
            .marginals()
            .into_iter()
            .enumerate()
            .map(|(k, weights)| StepGrid {
                points: self.steps[k]
                    .iter()
                    .enumerate()
                    .map(|(i, p)| GridPoint::new(self.state(k, i), p.time))
                    .collect(),
                weights,
                distortion: Distortion::default(),
                scales: Default::default(),
            })
            .collect();
        let transitions = self
            .transitions
            .iter()
            .map(|m| Transition {
                rows: m
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(_, &q)| q > 0.0)
                            .map(|(j, &q)| (j as u32, q))
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        QuantizedChain {
            model_id: "toy".into(),
            horizon: self.horizon(),
            p: 2.0,
            seed: 0,
            steps,
            transitions,
            meta: TrainingMeta::default(),
        }
    }

    pub fn target(&self) -> ToyTarget {
        let mut points = HashMap::new();
        for (k, step) in self.steps.iter().enumerate() {
            for (i, p) in step.iter().enumerate() {
                points.insert(self.id(k, i), *p);
            }
        }
        ToyTarget { points }
    }

    /// A three-step chain with at most three points per step and hand-picked numbers.
    pub fn fixture() -> Self {
        Self {
            steps: vec![
                vec![ToyPoint::inside(0.0, 1.5), ToyPoint::inside(0.0, 0.4)],
                vec![
                    ToyPoint::inside(0.7, 2.0),
                    ToyPoint::outside(0.9),
                    ToyPoint::outside(1.6),
                ],
                vec![
                    ToyPoint::inside(1.8, 0.5),
                    ToyPoint::outside(2.1),
                    ToyPoint::outside(2.9),
                ],
                vec![ToyPoint::inside(3.2, 1.0), ToyPoint::outside(3.0)],
            ],
            initial: vec![0.6, 0.4],
            transitions: vec![
                vec![vec![0.5, 0.3, 0.2], vec![0.25, 0.25, 0.5]],
                vec![
                    vec![0.2, 0.5, 0.3],
                    vec![0.0, 1.0, 0.0],
                    vec![0.0, 0.4, 0.6],
                ],
                vec![vec![0.3, 0.7], vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
        }
    }

    /// A random chain without return into `U`, for property tests. Step 0 lies in `U`.
    pub fn random(rng: &mut impl Rng, horizon: usize, max_points: usize) -> Self {
        assert!(horizon >= 1 && max_points >= 2);
        let mut steps = Vec::with_capacity(horizon + 1);
        for k in 0..=horizon {
            let n = rng.random_range(if k == 0 { 1 } else { 2 }..=max_points);
            let step: Vec<ToyPoint> = (0..n)
                .map(|i| {
                    let time = if k == 0 {
                        0.0
                    } else {
                        k as f64 + rng.random::<f64>()
                    };
                    if k == 0 || (i > 0 && rng.random_bool(0.5)) {
                        ToyPoint::inside(time, 0.1 + 2.0 * rng.random::<f64>())
                    } else {
                        ToyPoint::outside(time)
                    }
                })
                .collect();
            steps.push(step);
        }
        let normalized = |v: Vec<f64>| {
            let total: f64 = v.iter().sum();
            v.into_iter().map(|x| x / total).collect::<Vec<_>>()
        };
        let initial = normalized(
            (0..steps[0].len())
                .map(|_| 0.1 + rng.random::<f64>())
                .collect(),
        );
        let transitions = (0..horizon)
            .map(|k| {
                steps[k]
                    .iter()
                    .map(|from| {
                        normalized(
                            steps[k + 1]
                                .iter()
                                .map(|to| {
                                    if (!from.in_target && to.in_target) || rng.random_bool(0.25) {
                                        0.0
                                    } else {
                                        0.1 + rng.random::<f64>()
                                    }
                                })
                                .collect(),
                        )
                    })
                    .map(|row| {
                        if row.iter().all(|x| x.is_finite()) {
                            row
                        } else {
                            // Every non-empty step has an outside point at index 0.
                            let mut v = vec![0.0; steps[k + 1].len()];
                            v[0] = 1.0;
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            steps,
            initial,
            transitions,
        }
    }
}

/// Membership and `u*` of toy states, looked up by id.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTarget {
    points: HashMap<usize, ToyPoint>,
}

impl ToyTarget {
    fn lookup(&self, z: &HybridPoint) -> Option<&ToyPoint> {
        if z.is_cemetery() {
            return None;
        }
        self.points.get(&(z.coords[0] as usize))
    }
}

impl TargetSet for ToyTarget {
    fn contains(&self, z: &HybridPoint) -> bool {
        self.lookup(z).is_some_and(|p| p.in_target)
    }

    fn exit_time(&self, z: &HybridPoint) -> f64 {
        self.lookup(z)
            .filter(|p| p.in_target)
            .map_or(0.0, |p| p.u_star)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn fixture_is_valid() {
        let toy = ToyChain::fixture();
        toy.validate().unwrap();
        toy.to_chain().validate().unwrap();
    }

    #[test]
    fn random_chains_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let toy = ToyChain::random(&mut rng, 4, 3);
            toy.validate().unwrap();
            toy.to_chain().validate().unwrap();
        }
    }

    #[test]
    fn target_lookup() {
        let toy = ToyChain::fixture();
        let target = toy.target();
        assert!(target.contains(&toy.state(0, 1)));
        assert_eq!(target.exit_time(&toy.state(0, 1)), 0.4);
        assert!(!target.contains(&toy.state(1, 2)));
        assert_eq!(target.exit_time(&toy.state(1, 2)), 0.0);
        assert!(!target.contains(&HybridPoint::cemetery()));
    }
}
