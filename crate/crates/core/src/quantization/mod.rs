//! Marginal quantization of the chain `Θ_k = (Z_k, T_k)`.
//!
//! Each step gets its own grid `Γ_k`, trained by competitive learning on
//! simulated samples. A frozen second pass over fresh paths estimates the grid
//! weights `P(Θ̂_k = θ)` and the transition matrices `Q̂_k` from `Γ_k` to `Γ_{k+1}`.

mod gridfile;
mod train;

use std::collections::BTreeMap;

use smallvec::SmallVec;

pub use gridfile::{
    decode, decode_text, encode, encode_text, read_grid, read_grid_text, write_grid,
    write_grid_text, FORMAT_VERSION,
};
pub use train::{distortion, train_marginal, Schedule, TrainConfig};

use crate::error::{Error, Result};
use crate::point::{squared_euclidean, HybridPoint, Mode};

/// A point `θ = (z, t)` of a step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub state: HybridPoint,
    pub time: f64,
}

impl GridPoint {
    pub fn new(state: HybridPoint, time: f64) -> Self {
        Self { state, time }
    }
}

/// Empirical `L_p` projection errors of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distortion {
    /// `‖Θ_k − Θ̂_k‖_p` with the Euclidean norm on `(z, t)`.
    pub joint: f64,
    /// `‖Z_k − Ẑ_k‖_p`.
    pub state: f64,
    /// `‖T_k − T̂_k‖_p`.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepGrid {
    pub points: Vec<GridPoint>,
    pub weights: Vec<f64>,
    pub distortion: Distortion,
    /// Per-mode divisors of the features (coordinates, then time when it is
    /// quantized) used by the nearest-neighbor search. Absent modes use 1.
    pub scales: BTreeMap<Mode, Vec<f64>>,
}

impl StepGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sparse row-stochastic matrix between consecutive grids. Columns within a
/// row are sorted; an empty row marks a source point never visited during
/// estimation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transition {
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl Transition {
    pub fn is_unvisited(&self, row: usize) -> bool {
        self.rows[row].is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let r = &self.rows[row];
        r.binary_search_by_key(&(col as u32), |&(c, _)| c)
            .map_or(0.0, |i| r[i].1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// How a chain was produced. Stored alongside the grids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub pilot_paths: u64,
    pub training_paths: u64,
    pub companion_paths: u64,
    pub schedule: Schedule,
    /// Only the state was quantized; grid times are reconstructed from it.
    pub state_only: bool,
}

/// Grids, weights, transitions and distortions for steps `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedChain {
    pub model_id: String,
    pub horizon: usize,
    pub p: f64,
    pub seed: u64,
    pub steps: Vec<StepGrid>,
    pub transitions: Vec<Transition>,
    pub meta: TrainingMeta,
}

impl QuantizedChain {
    pub fn grid_sizes(&self) -> Vec<usize> {
        self.steps.iter().map(StepGrid::len).collect()
    }

    /// `P(Θ̂_k = θ_i, Θ̂_{k+1} = θ_j)` over the stored nonzero entries.
    pub fn joint_masses(&self, k: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = &self.steps[k].weights;
        self.transitions[k]
            .rows
            .iter()
            .enumerate()
            .flat_map(move |(i, row)| row.iter().map(move |&(j, q)| (i, j as usize, w[i] * q)))
    }

    /// Checks sizes and the stochasticity invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::GridFormat(msg));
        if self.steps.len() != self.horizon + 1 {
            return fail(format!(
                "{} step grids for horizon {}",
                self.steps.len(),
                self.horizon
            ));
        }
        if self.transitions.len() != self.horizon {
            return fail(format!(
                "{} transition matrices for horizon {}",
                self.transitions.len(),
                self.horizon
            ));
        }
        for (k, step) in self.steps.iter().enumerate() {
            if step.points.is_empty() || step.points.len() != step.weights.len() {
                return fail(format!(
                    "step {k}: {} points, {} weights",
                    step.points.len(),
                    step.weights.len()
                ));
            }
            let total: f64 = step.weights.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return fail(format!("step {k}: weights sum to {total}"));
            }
            if step.points.iter().any(|g| !(g.time >= 0.0)) {
                return fail(format!("step {k}: negative grid time"));
            }
        }
        for (k, tr) in self.transitions.iter().enumerate() {
            let (n, m) = (self.steps[k].len(), self.steps[k + 1].len());
            if tr.rows.len() != n {
                return fail(format!(
                    "transition {k}: {} rows for {n} points",
                    tr.rows.len()
                ));
            }
            for (i, row) in tr.rows.iter().enumerate() {
                if row
                    .iter()
                    .any(|&(j, q)| j as usize >= m || !(q > 0.0 && q <= 1.0))
                {
                    return fail(format!("transition {k}, row {i}: bad entry"));
                }
                if row.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return fail(format!("transition {k}, row {i}: unsorted columns"));
                }
                if self.steps[k].weights[i] > 0.0 {
                    let total: f64 = row.iter().map(|e| e.1).sum();
                    if (total - 1.0).abs() > 1e-12 {
                        return fail(format!("transition {k}, row {i}: sums to {total}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Index of the grid point nearest to `(state, time)` under the hybrid
/// distance composed with the time difference. Ties go to the lowest index.
pub fn nearest_neighbor(state: &HybridPoint, time: f64, grid: &[GridPoint]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in grid.iter().enumerate() {
        if g.state.mode != state.mode {
            continue;
        }
        let dt = g.time - time;
        let d2 = squared_euclidean(&g.state.coords, &state.coords) + dt * dt;
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::MissingMode {
        step: None,
        mode: state.mode,
    })
}

/// Fast nearest-neighbor search over one step grid, grouped by mode with
/// features stored contiguously.
#[derive(Debug, Clone)]
pub(crate) struct Projector {
    blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
struct Block {
    mode: Mode,
    width: usize,
    timed: bool,
    inverse: Vec<f64>,
    features: Vec<f64>,
    index: Vec<usize>,
}

impl Projector {
    pub(crate) fn new(
        points: &[GridPoint],
        with_time: bool,
        scales: &BTreeMap<Mode, Vec<f64>>,
    ) -> Self {
        let mut by_mode: BTreeMap<Mode, Block> = BTreeMap::new();
        for (i, g) in points.iter().enumerate() {
            let timed = with_time || g.state.is_cemetery();
            let width = g.state.dim() + usize::from(timed);
            let block = by_mode.entry(g.state.mode).or_insert_with(|| Block {
                mode: g.state.mode,
                width,
                timed,
                inverse: inverse_scales(scales.get(&g.state.mode), width),
                features: Vec::new(),
                index: Vec::new(),
            });
            let inv = &block.inverse;
            block
                .features
                .extend(g.state.coords.iter().zip(inv).map(|(v, s)| v * s));
            if timed {
                block.features.push(g.time * inv[width - 1]);
            }
            block.index.push(i);
        }
        Self {
            blocks: by_mode.into_values().collect(),
        }
    }

    fn block(&self, mode: Mode) -> Option<&Block> {
        self.blocks.iter().find(|b| b.mode == mode)
    }

    /// Nearest point index and squared distance.
    pub(crate) fn nearest(&self, state: &HybridPoint, time: f64) -> Option<(usize, f64)> {
        let block = self.block(state.mode)?;
        if block.width == 0 {
            return Some((block.index[0], 0.0));
        }
        let mut query: SmallVec<[f64; 5]> = state
            .coords
            .iter()
            .zip(&block.inverse)
            .map(|(v, s)| v * s)
            .collect();
        if block.timed {
            query.push(time * block.inverse[block.width - 1]);
        }
        let mut best = (0, f64::INFINITY);
        for (slot, f) in block.features.chunks_exact(block.width).enumerate() {
            let d2 = squared_euclidean(f, &query);
            if d2 < best.1 {
                best = (slot, d2);
            }
        }
        Some((block.index[best.0], best.1))
    }

    pub(crate) fn project(&self, step: usize, state: &HybridPoint, time: f64) -> Result<usize> {
        self.nearest(state, time)
            .map(|(i, _)| i)
            .ok_or(Error::MissingMode {
                step: Some(step),
                mode: state.mode,
            })
    }
}

fn inverse_scales(scales: Option<&Vec<f64>>, width: usize) -> Vec<f64> {
    match scales {
        Some(s) if s.len() == width => s.iter().map(|v| 1.0 / v).collect(),
        _ => vec![1.0; width],
    }
}

/// Checks that every point of `grid` in `mode` lies in the convex hull of
/// `samples` (features `coords ++ [time]`): inside the bounding box and below the
/// support function along `directions` random unit directions.
pub fn within_sample_hull(
    grid: &[Vec<f64>],
    samples: &[Vec<f64>],
    directions: &[Vec<f64>],
) -> bool {
    const SLACK: f64 = 1e-9;
    let Some(first) = samples.first() else {
        return grid.is_empty();
    };
    let dim = first.len();
    let scale = |v: f64| SLACK * v.abs().max(1.0);
    for axis in 0..dim {
        let lo = samples
            .iter()
            .map(|s| s[axis])
            .fold(f64::INFINITY, f64::min);
        let hi = samples
            .iter()
            .map(|s| s[axis])
            .fold(f64::NEG_INFINITY, f64::max);
        if grid
            .iter()
            .any(|g| g[axis] < lo - scale(lo) || g[axis] > hi + scale(hi))
        {
            return false;
        }
    }
    for dir in directions {
        let dot = |v: &[f64]| v.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>();
        let support = samples
            .iter()
            .map(|s| dot(s))
            .fold(f64::NEG_INFINITY, f64::max);
        let magnitude = samples.iter().map(|s| dot(s).abs()).fold(0.0, f64::max);
        if grid
            .iter()
            .any(|g| dot(g) > support + SLACK * magnitude.max(1.0))
        {
            return false;
        }
    }
    true
}
