//! Theoretical error bounds of the quantized estimators, evaluated as diagnostics.

use crate::error::{Error, Result};
use crate::model::BoundConstants;
use crate::quantization::QuantizedChain;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    /// Boundary-mass constant: `P(Z_k within α of ∂U) <= c α^β`.
    pub c: f64,
    pub beta: f64,
    /// Norm order of the distortions.
    pub p: f64,
    pub c_t_star: f64,
    pub c_u_star: f64,
    /// `None` when `u*` is not known to be Lipschitz.
    pub u_star_lip: Option<f64>,
    /// `‖Z_k − Ẑ_k‖_p` for `k = 0..=N`.
    pub state_distortion: Vec<f64>,
    /// `‖T_k − T̂_k‖_p` for `k = 0..=N`.
    pub time_distortion: Vec<f64>,
}

impl BoundInputs {
    pub fn from_chain(constants: &BoundConstants, chain: &QuantizedChain) -> Result<Self> {
        let inputs = Self {
            c: constants.c,
            beta: constants.beta,
            p: chain.p,
            c_t_star: constants.t_star_bound,
            c_u_star: constants.u_star_bound,
            u_star_lip: Some(constants.u_star_lipschitz),
            state_distortion: chain.steps.iter().map(|s| s.distortion.state).collect(),
            time_distortion: chain.steps.iter().map(|s| s.distortion.time).collect(),
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("C", self.c),
            ("beta", self.beta),
            ("p", self.p),
            ("C_t_star", self.c_t_star),
            ("C_u_star", self.c_u_star),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    field,
                    format!("{v} must be positive and finite"),
                ));
            }
        }
        if let Some(l) = self.u_star_lip {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::invalid(
                    "u_star_lip",
                    format!("{l} must be non-negative"),
                ));
            }
        }
        if self.state_distortion.len() != self.time_distortion.len() {
            return Err(Error::invalid(
                "distortions",
                "state and time sequences differ in length",
            ));
        }
        if self
            .state_distortion
            .iter()
            .chain(&self.time_distortion)
            .any(|d| !(*d >= 0.0))
        {
            return Err(Error::invalid("distortions", "must be non-negative"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.state_distortion.len().saturating_sub(1)
    }
}

/// Bound on `|q_k − q̂_k|` from the step-`k` state distortion.
pub fn bound_q(inputs: &BoundInputs, k: usize) -> f64 {
    let (p, b) = (inputs.p, inputs.beta);
    let d = inputs.state_distortion[k];
    if d == 0.0 {
        return 0.0;
    }
    inputs.c.powf(p / (p + b))
        * ((b / p).powf(p / (p + b)) + (p / b).powf(b / (p + b)))
        * d.powf(p * b / (p + b))
}

/// Bound on `|r_{k,j} − r̂_{k,j}|`. Needs a Lipschitz `u*` unless the state
/// distortion at step `k` vanishes.
pub fn bound_r_moment(inputs: &BoundInputs, k: usize, j: u32) -> f64 {
    let scale = (k + 1) as f64 * inputs.c_t_star;
    let d = inputs.state_distortion[k];
    let lip_term = if d == 0.0 {
        0.0
    } else {
        inputs.u_star_lip.map_or(f64::INFINITY, |l| l * d)
    };
    let transport = if j == 0 {
        0.0
    } else {
        f64::from(j)
            * scale.powi(j as i32 - 1)
            * (inputs.time_distortion[k] + lip_term + inputs.time_distortion[k + 1])
    };
    transport + scale.powi(j as i32) * (bound_q(inputs, k) + bound_q(inputs, k + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QTildeSource {
    Exact,
    MonteCarlo,
    Supplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Bound on `|p_{k,j} − p̂_{k,j}|` for `k = 0..=N`.
    pub per_step: Vec<f64>,
    /// Every `|q_k − q̂_k|` bound is at most `q̃ / 2`.
    pub certified: bool,
    pub first_uncertified: Option<usize>,
    pub q_tilde: f64,
    pub q_tilde_source: QTildeSource,
}

/// Propagates the error bound of the moment recursion of order `j` through `N` steps.
/// The result is only meaningful while every `q`-error bound stays below `q̃ / 2`;
/// the report says where that first fails.
pub fn bound_moment(
    inputs: &BoundInputs,
    j: u32,
    q_tilde: f64,
    source: QTildeSource,
) -> Result<BoundReport> {
    inputs.validate()?;
    if !(q_tilde > 0.0 && q_tilde <= 1.0) {
        return Err(Error::invalid(
            "q_tilde",
            format!("{q_tilde} must lie in (0, 1]"),
        ));
    }
    let n = inputs.horizon();
    let dq: Vec<f64> = (0..=n).map(|k| bound_q(inputs, k)).collect();
    let first_uncertified = dq.iter().position(|&d| d > 0.5 * q_tilde);
    let growth = (n as f64 * inputs.c_t_star).powi(j as i32);
    let mut per_step = Vec::with_capacity(n + 1);
    per_step.push(0.0);
    for k in 1..=n {
        let prev = per_step[k - 1];
        let e = 2.0 / q_tilde * (growth * dq[k - 1] + prev + bound_r_moment(inputs, k - 1, j))
            + 2.0 * (growth + 1.0) / (q_tilde * q_tilde) * dq[k];
        per_step.push(e);
    }
    Ok(BoundReport {
        per_step,
        certified: first_uncertified.is_none(),
        first_uncertified,
        q_tilde,
        q_tilde_source: source,
    })
}
