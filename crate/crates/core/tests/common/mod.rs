//! Exhaustive enumeration of every path of a finite chain, used as an
//! independent oracle for the recursive estimators.

#![allow(dead_code)]

use pdmp_exit::models::ToyChain;

pub struct Enumeration {
    /// `q_k = P(Z_k ∉ U)`.
    pub q: Vec<f64>,
    /// `(τ, probability)` of every path that leaves `U` by step `N`.
    pub exits: Vec<(f64, f64)>,
}

impl Enumeration {
    pub fn new(toy: &ToyChain) -> Self {
        let n = toy.horizon();
        let mut out = Self {
            q: vec![0.0; n + 1],
            exits: Vec::new(),
        };
        let mut path = Vec::with_capacity(n + 1);
        for (i, &w) in toy.initial.iter().enumerate() {
            if w > 0.0 {
                path.push(i);
                walk(toy, &mut path, w, &mut out);
                path.pop();
            }
        }
        out
    }

    pub fn q_n(&self) -> f64 {
        *self.q.last().unwrap()
    }

    /// `P(τ > s | τ <= T_N)`.
    pub fn survival(&self, s: f64) -> f64 {
        if self.q_n() == 0.0 {
            return 0.0;
        }
        self.exits
            .iter()
            .filter(|(t, _)| *t > s)
            .map(|(_, w)| w)
            .sum::<f64>()
            / self.q_n()
    }

    /// `E[τ^j | τ <= T_N]`.
    pub fn moment(&self, j: u32) -> f64 {
        if self.q_n() == 0.0 {
            return 0.0;
        }
        self.exits
            .iter()
            .map(|(t, w)| t.powi(j as i32) * w)
            .sum::<f64>()
            / self.q_n()
    }
}

fn walk(toy: &ToyChain, path: &mut Vec<usize>, weight: f64, out: &mut Enumeration) {
    let k = path.len() - 1;
    if k == toy.horizon() {
        finish(toy, path, weight, out);
        return;
    }
    let i = path[k];
    for (j, &q) in toy.transitions[k][i].iter().enumerate() {
        if q > 0.0 {
            path.push(j);
            walk(toy, path, weight * q, out);
            path.pop();
        }
    }
}

fn finish(toy: &ToyChain, path: &[usize], weight: f64, out: &mut Enumeration) {
    let point = |k: usize| toy.steps[k][path[k]];
    for k in 0..path.len() {
        if !point(k).in_target {
            out.q[k] += weight;
        }
    }
    if let Some(k) = (1..path.len()).find(|&k| !point(k).in_target) {
        let before = point(k - 1);
        let tau = (before.time + before.u_star).min(point(k).time);
        out.exits.push((tau, weight));
    }
}
