use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use smallvec::SmallVec;

use super::{Distortion, GridPoint, Projector, QuantizedChain, StepGrid, TrainingMeta, Transition};
use crate::error::{Error, Result};
use crate::model::PdmpModel;
use crate::point::{HybridPoint, Mode};
use crate::rng::{Purpose, StreamFactory};
use crate::skeleton::{simulate_skeleton, simulate_skeleton_into, SkeletonPath};

/// Paths simulated per parallel work unit. Fixed, so results do not depend on
/// the number of worker threads.
const CHUNK: usize = 8192;

type Feature = SmallVec<[f64; 5]>;

/// Pilot count, initial samples and distinct-sample keys of one mode.
type ModeSamples = (usize, Vec<Feature>, HashSet<Vec<u64>>);

/// Learning-rate schedule of the competitive-learning phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// `γ_t = a / (b + t)` with `t` the number of samples seen at the step;
    /// `b = None` stands for the size of the step grid.
    Shared { a: f64, b: Option<f64> },
    /// `γ = a / (b + h)` with `h` the number of samples won so far by the
    /// updated point, counting its initial sample.
    PerPoint { a: f64, b: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::PerPoint { a: 1.0, b: 0.0 }
    }
}

impl Schedule {
    fn validate(&self) -> Result<()> {
        let (a, b) = match *self {
            Schedule::Shared { a, b } => (a, b.unwrap_or(1.0)),
            Schedule::PerPoint { a, b } => (a, b),
        };
        if !(a > 0.0) || !(b >= 0.0) || a > b + 1.0 {
            return Err(Error::invalid(
                "schedule",
                format!("need a > 0, b >= 0 and a <= b + 1 so every step is a convex combination (a = {a}, b = {b})"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Order of the `L_p` norm used for distortion reports.
    pub p: f64,
    /// Paths used to allocate points across modes and to initialize grids.
    pub pilot_paths: usize,
    /// Paths fed to competitive learning; each contributes one sample per step.
    pub training_paths: usize,
    /// Fresh paths for the frozen pass estimating weights, transitions and distortions.
    pub companion_paths: usize,
    pub schedule: Schedule,
    /// Quantize only the state and reconstruct times. `None` follows the model.
    pub state_only: Option<bool>,
    /// Average winners over batches of this size instead of sequential updates.
    pub batch_size: Option<usize>,
    /// Divide every feature by its pilot standard deviation, per step and mode,
    /// before measuring distances.
    pub standardize: bool,
    /// Represent the cemetery by one point per step instead of quantizing its
    /// frozen times like any other mode.
    pub single_cemetery_point: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            pilot_paths: 10_000,
            training_paths: 1_000_000,
            companion_paths: 1_000_000,
            schedule: Schedule::default(),
            state_only: None,
            batch_size: None,
            standardize: true,
            single_cemetery_point: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(Error::invalid(
                "p",
                format!("{} is not a finite value >= 1", self.p),
            ));
        }
        if self.pilot_paths == 0 {
            return Err(Error::invalid("pilot_paths", "must be positive"));
        }
        if self.companion_paths == 0 {
            return Err(Error::invalid("companion_paths", "must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        self.schedule.validate()
    }
}

fn feature(z: &HybridPoint, t: f64, with_time: bool) -> Feature {
    let mut f: Feature = z.coords.iter().copied().collect();
    if with_time {
        f.push(t);
    }
    f
}

fn simulate_chunk<M: PdmpModel + ?Sized>(
    model: &M,
    horizon: usize,
    streams: &StreamFactory,
    purpose: Purpose,
    range: std::ops::Range<usize>,
) -> Result<Vec<SkeletonPath>> {
    range
        .into_par_iter()
        .map(|i| simulate_skeleton(model, horizon, &mut streams.stream(purpose, i as u64)))
        .collect()
}

/// Population standard deviation from running sums, 1 for constant features.
fn standard_deviation(sum: f64, sum_sq: f64, n: f64) -> f64 {
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let sd = var.sqrt();
    if sd > 1e-12 * mean.abs().max(f64::MIN_POSITIVE) {
        sd
    } else {
        1.0
    }
}

fn chunks(total: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..total.div_ceil(CHUNK)).map(move |c| c * CHUNK..((c + 1) * CHUNK).min(total))
}

/// Competitive-learning state of one mode at one step.
#[derive(Debug, Clone)]
struct ModeCodebook {
    width: usize,
    features: Vec<f64>,
    hits: Vec<f64>,
}

impl ModeCodebook {
    fn len(&self) -> usize {
        self.hits.len()
    }

    fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, f) in self.features.chunks_exact(self.width).enumerate() {
            let d2: f64 = f.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best.0
    }

    fn push(&mut self, x: &[f64]) {
        self.features.extend_from_slice(x);
        self.hits.push(1.0);
    }

    fn pull(&mut self, i: usize, toward: &[f64], gamma: f64) {
        let f = &mut self.features[i * self.width..(i + 1) * self.width];
        for (a, b) in f.iter_mut().zip(toward) {
            *a += gamma * (b - *a);
        }
    }
}

#[derive(Debug, Clone)]
struct StepTrainer {
    codebooks: BTreeMap<Mode, ModeCodebook>,
    scales: BTreeMap<Mode, Vec<f64>>,
    seen: f64,
    size: f64,
    schedule: Schedule,
}

impl StepTrainer {
    fn rate(&self, hits: f64) -> f64 {
        match self.schedule {
            Schedule::Shared { a, b } => a / (b.unwrap_or(self.size) + self.seen),
            Schedule::PerPoint { a, b } => a / (b + hits),
        }
    }

    /// A mode the pilot never reached gets its first point at the sample.
    fn spawn(&mut self, mode: Mode, x: &[f64]) {
        let mut book = ModeCodebook {
            width: x.len(),
            features: Vec::new(),
            hits: Vec::new(),
        };
        book.push(x);
        self.codebooks.insert(mode, book);
    }

    /// Maps a raw feature into the scaled space the codebooks live in.
    fn scaled(&self, mode: Mode, mut x: Feature) -> Feature {
        if let Some(s) = self.scales.get(&mode) {
            x.iter_mut().zip(s).for_each(|(v, s)| *v /= s);
        }
        x
    }

    fn update(&mut self, mode: Mode, x: &[f64]) {
        self.seen += 1.0;
        let Some(book) = self.codebooks.get_mut(&mode) else {
            self.spawn(mode, x);
            return;
        };
        let i = book.nearest(x);
        book.hits[i] += 1.0;
        let hits = book.hits[i];
        let gamma = self.rate(hits).min(1.0);
        self.codebooks.get_mut(&mode).unwrap().pull(i, x, gamma);
    }

    /// Averages the winners of a batch and moves each winning point toward the
    /// mean of its samples.
    fn update_batch(&mut self, batch: &[(Mode, Feature)]) {
        let winners: Vec<Option<usize>> = batch
            .par_iter()
            .map(|(mode, x)| self.codebooks.get(mode).map(|b| b.nearest(x)))
            .collect();
        let mut sums: BTreeMap<(Mode, usize), (f64, Vec<f64>)> = BTreeMap::new();
        for ((mode, x), w) in batch.iter().zip(winners) {
            match w {
                Some(i) => {
                    let e = sums
                        .entry((*mode, i))
                        .or_insert_with(|| (0.0, vec![0.0; x.len()]));
                    e.0 += 1.0;
                    e.1.iter_mut().zip(x.iter()).for_each(|(s, v)| *s += v);
                }
                None if self.codebooks.contains_key(mode) => {}
                None => self.spawn(*mode, x),
            }
        }
        self.seen += batch.len() as f64;
        for ((mode, i), (count, mut mean)) in sums {
            mean.iter_mut().for_each(|v| *v /= count);
            let book = self.codebooks.get_mut(&mode).unwrap();
            book.hits[i] += count;
            let hits = book.hits[i];
            let gamma = (count * self.rate(hits)).min(1.0);
            self.codebooks.get_mut(&mode).unwrap().pull(i, &mean, gamma);
        }
    }
}

/// Splits `budget` points across modes: one per mode first, the rest by
/// largest remainder in proportion to pilot frequency, never exceeding the
/// number of distinct pilot samples of a mode.
fn allocate(counts: &[(Mode, usize, usize)], budget: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = counts.iter().map(|_| 1).collect();
    let mut remaining = budget.saturating_sub(counts.len());
    let total: usize = counts.iter().map(|c| c.1).sum();
    while remaining > 0 {
        let open: Vec<usize> = (0..counts.len())
            .filter(|&m| alloc[m] < counts[m].2)
            .collect();
        if open.is_empty() {
            break;
        }
        let open_total: usize = open.iter().map(|&m| counts[m].1).sum();
        let share = |m: usize| remaining as f64 * counts[m].1 as f64 / open_total.max(1) as f64;
        let mut given = 0;
        let mut fractions = Vec::with_capacity(open.len());
        for &m in &open {
            let room = counts[m].2 - alloc[m];
            let whole = (share(m).floor() as usize).min(room);
            alloc[m] += whole;
            given += whole;
            fractions.push((share(m) - share(m).floor(), m));
        }
        remaining -= given;
        fractions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, m) in fractions {
            if remaining == 0 {
                break;
            }
            if alloc[m] < counts[m].2 {
                alloc[m] += 1;
                remaining -= 1;
            }
        }
        if given == 0 && remaining > 0 && total == 0 {
            break;
        }
    }
    alloc
}

fn resolve_sizes(sizes: &[usize], horizon: usize) -> Result<Vec<usize>> {
    let sizes = match sizes.len() {
        1 => vec![sizes[0]; horizon + 1],
        n if n == horizon + 1 => sizes.to_vec(),
        n => {
            return Err(Error::invalid(
                "grid_sizes",
                format!("expected 1 or {} values, got {n}", horizon + 1),
            ))
        }
    };
    if let Some(k) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::invalid("grid_sizes", format!("size 0 at step {k}")));
    }
    Ok(sizes)
}

/// Builds the initial codebooks of every step from the pilot run.
fn initialize<M: PdmpModel + ?Sized>(
    model: &M,
    horizon: usize,
    sizes: &[usize],
    config: &TrainConfig,
    streams: &StreamFactory,
    with_time: bool,
) -> Result<Vec<StepTrainer>> {
    let pilot = simulate_chunk(
        model,
        horizon,
        streams,
        Purpose::Pilot,
        0..config.pilot_paths,
    )?;
    (0..=horizon)
        .map(|k| {
            let mut by_mode: BTreeMap<Mode, ModeSamples> = BTreeMap::new();
            let mut moments: BTreeMap<Mode, Vec<(f64, f64)>> = BTreeMap::new();
            for path in &pilot {
                let z = &path.states[k];
                let f = feature(z, path.times[k], with_time || z.is_cemetery());
                let m = moments
                    .entry(z.mode)
                    .or_insert_with(|| vec![(0.0, 0.0); f.len()]);
                m.iter_mut()
                    .zip(&f)
                    .for_each(|(m, v)| *m = (m.0 + v, m.1 + v * v));
                let entry = by_mode.entry(z.mode).or_default();
                entry.0 += 1;
                if entry.2.insert(f.iter().map(|v| v.to_bits()).collect()) {
                    entry.1.push(f);
                }
            }
            let scales: BTreeMap<Mode, Vec<f64>> = if config.standardize {
                moments
                    .iter()
                    .filter(|(m, _)| !(m.is_cemetery() && config.single_cemetery_point))
                    .map(|(m, sums)| {
                        let n = by_mode[m].0 as f64;
                        (
                            *m,
                            sums.iter()
                                .map(|&(s, s2)| standard_deviation(s, s2, n))
                                .collect(),
                        )
                    })
                    .collect()
            } else {
                BTreeMap::new()
            };
            let cemetery = config.single_cemetery_point && by_mode.contains_key(&Mode::CEMETERY);
            let counts: Vec<(Mode, usize, usize)> = by_mode
                .iter()
                .filter(|(m, _)| !(m.is_cemetery() && cemetery))
                .map(|(m, e)| (*m, e.0, e.1.len()))
                .collect();
            let budget = sizes[k].saturating_sub(usize::from(cemetery));
            if budget < counts.len() {
                return Err(Error::invalid(
                    "grid_sizes",
                    format!(
                        "step {k} has {} reachable modes but only {} points",
                        counts.len() + usize::from(cemetery),
                        sizes[k]
                    ),
                ));
            }
            if config.pilot_paths < sizes[k] {
                let (mode, available) = counts
                    .iter()
                    .map(|c| (c.0, c.2))
                    .max_by_key(|c| c.1)
                    .unwrap_or((Mode::CEMETERY, 0));
                return Err(Error::InsufficientSamples {
                    step: k,
                    mode,
                    needed: sizes[k],
                    available: available.max(config.pilot_paths),
                });
            }
            let alloc = allocate(&counts, budget);
            let mut codebooks = BTreeMap::new();
            for ((mode, _, _), n) in counts.iter().zip(alloc) {
                let samples = &by_mode[mode].1;
                let mut book = ModeCodebook {
                    width: samples[0].len(),
                    features: Vec::new(),
                    hits: Vec::new(),
                };
                samples.iter().take(n).for_each(|f| {
                    let mut f = f.clone();
                    if let Some(sc) = scales.get(mode) {
                        f.iter_mut().zip(sc).for_each(|(v, s)| *v /= s);
                    }
                    book.push(&f)
                });
                codebooks.insert(*mode, book);
            }
            if cemetery {
                let mut book = ModeCodebook {
                    width: 1,
                    features: Vec::new(),
                    hits: Vec::new(),
                };
                book.push(&by_mode[&Mode::CEMETERY].1[0]);
                codebooks.insert(Mode::CEMETERY, book);
            }
            let size = codebooks.values().map(ModeCodebook::len).sum::<usize>() as f64;
            Ok(StepTrainer {
                codebooks,
                scales,
                seen: 0.0,
                size,
                schedule: config.schedule,
            })
        })
        .collect()
}

fn to_grid<M: PdmpModel + ?Sized>(
    model: &M,
    k: usize,
    trainer: &StepTrainer,
    with_time: bool,
) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for (mode, book) in &trainer.codebooks {
        for f in book.features.chunks_exact(book.width) {
            let mut f: Feature = f.iter().copied().collect();
            if let Some(sc) = trainer.scales.get(mode) {
                f.iter_mut().zip(sc).for_each(|(v, s)| *v *= s);
            }
            let f = &f[..];
            let point = if mode.is_cemetery() {
                GridPoint::new(HybridPoint::cemetery(), f[0].max(0.0))
            } else if with_time {
                let (coords, t) = f.split_at(f.len() - 1);
                GridPoint::new(HybridPoint::new(*mode, coords), t[0].max(0.0))
            } else {
                let z = HybridPoint::new(*mode, f);
                let t = model
                    .time_from_state(k, &z)
                    .expect("state-only quantization needs time_from_state");
                GridPoint::new(z, t.max(0.0))
            };
            points.push(point);
        }
    }
    points
}

#[derive(Debug, Default)]
struct CompanionAcc {
    counts: Vec<Vec<u64>>,
    pairs: Vec<HashMap<(u32, u32), u64>>,
    /// Per step: sums of `|Θ − Θ̂|^p`, `|Z − Ẑ|^p`, `|T − T̂|^p`.
    errors: Vec<[f64; 3]>,
}

fn projection_error(z: &HybridPoint, t: f64, g: &GridPoint, p: f64) -> [f64; 3] {
    let dz2 = crate::point::squared_euclidean(&z.coords, &g.state.coords);
    let dt = (t - g.time).abs();
    let dt = if dt.is_nan() { 0.0 } else { dt };
    [
        (dz2 + dt * dt).sqrt().powf(p),
        dz2.sqrt().powf(p),
        dt.powf(p),
    ]
}

fn projectors(
    steps: &[Vec<GridPoint>],
    scales: &[BTreeMap<Mode, Vec<f64>>],
    with_time: bool,
) -> Vec<Projector> {
    steps
        .iter()
        .zip(scales)
        .map(|(g, s)| Projector::new(g, with_time, s))
        .collect()
}

fn project_path(
    projectors: &[Projector],
    grids: &[Vec<GridPoint>],
    path: &SkeletonPath,
    p: f64,
    out: &mut Vec<usize>,
    errors: &mut [[f64; 3]],
) -> Result<()> {
    out.clear();
    for (k, proj) in projectors.iter().enumerate() {
        let (z, t) = (&path.states[k], path.times[k]);
        let i = proj.project(k, z, t)?;
        let e = projection_error(z, t, &grids[k][i], p);
        errors[k].iter_mut().zip(e).for_each(|(s, v)| *s += v);
        out.push(i);
    }
    Ok(())
}

/// Trains marginal quantization grids of `(Z_k, T_k)` for `k = 0..=horizon`
/// and estimates their companion weights, transitions and distortions.
///
/// `sizes` holds one value for every step or a single value for all of them.
/// Sizes are upper bounds: a mode never gets more points than it has distinct
/// pilot samples.
pub fn train_marginal<M: PdmpModel + ?Sized>(
    model: &M,
    horizon: usize,
    sizes: &[usize],
    config: &TrainConfig,
    seed: u64,
) -> Result<QuantizedChain> {
    config.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    let sizes = resolve_sizes(sizes, horizon)?;
    let streams = StreamFactory::new(seed);

    let probe = model.initial_sample(&mut streams.stream(Purpose::Pilot, 0));
    let state_only = config
        .state_only
        .unwrap_or_else(|| model.time_from_state(0, &probe).is_some());
    if state_only && model.time_from_state(0, &probe).is_none() {
        return Err(Error::invalid(
            "state_only",
            format!("model `{}` cannot rebuild times from states", model.id()),
        ));
    }
    let with_time = !state_only;

    let mut trainers = initialize(model, horizon, &sizes, config, &streams, with_time)?;

    for range in chunks(config.training_paths) {
        let paths = simulate_chunk(model, horizon, &streams, Purpose::Training, range)?;
        trainers.par_iter_mut().enumerate().for_each(|(k, tr)| {
            let samples = paths.iter().map(|p| {
                let z = &p.states[k];
                (z.mode, feature(z, p.times[k], with_time || z.is_cemetery()))
            });
            let samples = samples
                .map(|(m, f)| (m, tr.scaled(m, f)))
                .collect::<Vec<_>>()
                .into_iter();
            match config.batch_size {
                None => samples.for_each(|(m, f)| tr.update(m, &f)),
                Some(b) => {
                    let all: Vec<(Mode, Feature)> = samples.collect();
                    all.chunks(b).for_each(|batch| tr.update_batch(batch));
                }
            }
        });
    }

    let grids: Vec<Vec<GridPoint>> = trainers
        .iter()
        .enumerate()
        .map(|(k, tr)| to_grid(model, k, tr, with_time))
        .collect();

    let scales: Vec<BTreeMap<Mode, Vec<f64>>> = trainers.into_iter().map(|tr| tr.scales).collect();
    let (steps, transitions) = companion(
        model,
        horizon,
        &grids,
        &scales,
        config.p,
        config.companion_paths,
        &streams,
        with_time,
    )?;

    Ok(QuantizedChain {
        model_id: model.id(),
        horizon,
        p: config.p,
        seed,
        steps,
        transitions,
        meta: TrainingMeta {
            pilot_paths: config.pilot_paths as u64,
            training_paths: config.training_paths as u64,
            companion_paths: config.companion_paths as u64,
            schedule: config.schedule,
            state_only,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn companion<M: PdmpModel + ?Sized>(
    model: &M,
    horizon: usize,
    grids: &[Vec<GridPoint>],
    scales: &[BTreeMap<Mode, Vec<f64>>],
    p: f64,
    paths: usize,
    streams: &StreamFactory,
    with_time: bool,
) -> Result<(Vec<StepGrid>, Vec<Transition>)> {
    let projectors = projectors(grids, scales, with_time);
    let accs: Vec<CompanionAcc> = chunks(paths)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|range| -> Result<CompanionAcc> {
            let mut acc = CompanionAcc {
                counts: grids.iter().map(|g| vec![0; g.len()]).collect(),
                pairs: vec![HashMap::new(); horizon],
                errors: vec![[0.0; 3]; horizon + 1],
            };
            let mut path = SkeletonPath::with_capacity(horizon);
            let mut idx = Vec::with_capacity(horizon + 1);
            for i in range {
                simulate_skeleton_into(
                    model,
                    horizon,
                    &mut streams.stream(Purpose::Companion, i as u64),
                    &mut path,
                )?;
                project_path(&projectors, grids, &path, p, &mut idx, &mut acc.errors)?;
                for (k, &i) in idx.iter().enumerate() {
                    acc.counts[k][i] += 1;
                    if k < horizon {
                        *acc.pairs[k]
                            .entry((i as u32, idx[k + 1] as u32))
                            .or_insert(0) += 1;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut counts: Vec<Vec<u64>> = grids.iter().map(|g| vec![0; g.len()]).collect();
    let mut pairs: Vec<HashMap<(u32, u32), u64>> = vec![HashMap::new(); horizon];
    let mut errors = vec![[0.0; 3]; horizon + 1];
    for acc in accs {
        for (total, c) in counts.iter_mut().zip(&acc.counts) {
            total.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        }
        for (total, c) in pairs.iter_mut().zip(acc.pairs) {
            for (key, n) in c {
                *total.entry(key).or_insert(0) += n;
            }
        }
        for (total, e) in errors.iter_mut().zip(&acc.errors) {
            total.iter_mut().zip(e).for_each(|(a, b)| *a += b);
        }
    }

    let m = paths as f64;
    let steps = grids
        .iter()
        .zip(&counts)
        .zip(&errors)
        .zip(scales)
        .map(|(((points, c), e), sc)| StepGrid {
            points: points.clone(),
            scales: sc.clone(),
            weights: c.iter().map(|&n| n as f64 / m).collect(),
            distortion: Distortion {
                joint: (e[0] / m).powf(1.0 / p),
                state: (e[1] / m).powf(1.0 / p),
                time: (e[2] / m).powf(1.0 / p),
            },
        })
        .collect();
    let transitions = pairs
        .into_iter()
        .enumerate()
        .map(|(k, map)| {
            let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); grids[k].len()];
            let mut sorted: Vec<((u32, u32), u64)> = map.into_iter().collect();
            sorted.sort_unstable_by_key(|e| e.0);
            for ((i, j), n) in sorted {
                rows[i as usize].push((j, n as f64 / counts[k][i as usize] as f64));
            }
            Transition { rows }
        })
        .collect();
    Ok((steps, transitions))
}

/// Fresh-sample estimate of the per-step `L_p` projection errors of a trained chain.
pub fn distortion<M: PdmpModel + ?Sized>(
    chain: &QuantizedChain,
    model: &M,
    sample_count: usize,
    seed: u64,
) -> Result<Vec<Distortion>> {
    if sample_count == 0 {
        return Err(Error::invalid("sample_count", "must be positive"));
    }
    let grids: Vec<Vec<GridPoint>> = chain.steps.iter().map(|s| s.points.clone()).collect();
    let scales: Vec<BTreeMap<Mode, Vec<f64>>> =
        chain.steps.iter().map(|s| s.scales.clone()).collect();
    let projectors = projectors(&grids, &scales, !chain.meta.state_only);
    let streams = StreamFactory::new(seed);
    let horizon = chain.horizon;
    let p = chain.p;
    let parts: Vec<Vec<[f64; 3]>> = chunks(sample_count)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|range| -> Result<Vec<[f64; 3]>> {
            let mut errors = vec![[0.0; 3]; horizon + 1];
            let mut path = SkeletonPath::with_capacity(horizon);
            let mut idx = Vec::new();
            for i in range {
                simulate_skeleton_into(
                    model,
                    horizon,
                    &mut streams.stream(Purpose::Distortion, i as u64),
                    &mut path,
                )?;
                project_path(&projectors, &grids, &path, p, &mut idx, &mut errors)?;
            }
            Ok(errors)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![[0.0; 3]; horizon + 1];
    for part in parts {
        for (t, e) in total.iter_mut().zip(part) {
            t.iter_mut().zip(e).for_each(|(a, b)| *a += b);
        }
    }
    let m = sample_count as f64;
    Ok(total
        .into_iter()
        .map(|e| Distortion {
            joint: (e[0] / m).powf(1.0 / p),
            state: (e[1] / m).powf(1.0 / p),
            time: (e[2] / m).powf(1.0 / p),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_respects_minimum_and_caps() {
        let counts = vec![(Mode(0), 900, 900), (Mode(1), 90, 90), (Mode(2), 10, 3)];
        let a = allocate(&counts, 100);
        assert_eq!(a.iter().sum::<usize>(), 100);
        assert!(a[2] <= 3 && a[1] >= 1);
        assert!(a[0] > a[1]);
    }

    #[test]
    fn allocation_stops_at_distinct_count() {
        let counts = vec![(Mode(0), 1000, 1)];
        assert_eq!(allocate(&counts, 500), vec![1]);
    }

    #[test]
    fn sizes_broadcast_and_validate() {
        assert_eq!(resolve_sizes(&[5], 2).unwrap(), vec![5, 5, 5]);
        assert!(resolve_sizes(&[5, 5], 2).is_err());
        assert!(resolve_sizes(&[5, 0, 5], 2).is_err());
    }

    #[test]
    fn schedule_must_stay_convex() {
        assert!(Schedule::Shared {
            a: 3.0,
            b: Some(1.0)
        }
        .validate()
        .is_err());
        assert!(Schedule::PerPoint { a: 1.0, b: 0.0 }.validate().is_ok());
    }
}
