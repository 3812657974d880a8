//! Run configuration: built-in defaults, then the TOML file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use pdmp_exit::quantization::{Schedule, TrainConfig};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Poisson,
    Corrosion,
    CorrosionUnprotected,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Poisson => "poisson",
            ModelName::Corrosion => "corrosion",
            ModelName::CorrosionUnprotected => "corrosion-unprotected",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(ModelName::Poisson),
            "corrosion" => Ok(ModelName::Corrosion),
            "corrosion-unprotected" => Ok(ModelName::CorrosionUnprotected),
            other => Err(CliError::config(format!(
                "model: unknown model `{other}` (expected poisson, corrosion or corrosion-unprotected)"
            ))),
        }
    }
}

/// A grid size for every step, or one size per step.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum SizeSpec {
    Uniform(usize),
    PerStep(Vec<usize>),
}

impl SizeSpec {
    pub fn as_slice(&self) -> &[usize] {
        match self {
            SizeSpec::Uniform(n) => std::slice::from_ref(n),
            SizeSpec::PerStep(v) => v,
        }
    }

    /// Label used in file names: the size itself, or the largest per-step size.
    pub fn label(&self) -> String {
        match self {
            SizeSpec::Uniform(n) => format!("n{n}"),
            SizeSpec::PerStep(v) => format!("steps{}", v.iter().max().copied().unwrap_or(0)),
        }
    }

    /// Representative size for convergence fits.
    pub fn size(&self) -> usize {
        match self {
            SizeSpec::Uniform(n) => *n,
            SizeSpec::PerStep(v) => v.iter().max().copied().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum HorizonSpec {
    Fixed(usize),
    /// Only `"auto"` is accepted.
    Auto(AutoHorizon),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoHorizon {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Shared { a: f64, b: Option<f64> },
    PerPoint { a: f64, b: f64 },
}

impl From<ScheduleSpec> for Schedule {
    fn from(s: ScheduleSpec) -> Self {
        match s {
            ScheduleSpec::Shared { a, b } => Schedule::Shared { a, b },
            ScheduleSpec::PerPoint { a, b } => Schedule::PerPoint { a, b },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub p: Option<f64>,
    pub pilot_paths: Option<usize>,
    pub training_paths: Option<usize>,
    pub companion_paths: Option<usize>,
    pub schedule: Option<ScheduleSpec>,
    pub batch_size: Option<usize>,
    pub standardize: Option<bool>,
    pub single_cemetery_point: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    /// Target for the Monte Carlo estimate of `P(τ > T_N)`.
    pub threshold: Option<f64>,
    pub cap: Option<usize>,
    pub samples: Option<usize>,
    pub c_lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub k: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Poisson threshold `b`.
    pub b: Option<f64>,
    /// Corrosion failure threshold on `d`, in mm.
    pub threshold: Option<f64>,
}

/// The configuration file as written by the user. Every field is optional.
#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub params: Option<ModelParams>,
    pub killed: Option<bool>,
    pub horizon: Option<HorizonSpec>,
    pub sizes: Option<Vec<SizeSpec>>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub grids: Option<PathBuf>,
    pub s_max: Option<f64>,
    pub s_points: Option<usize>,
    pub moments: Option<Vec<u32>>,
    pub mc_paths: Option<usize>,
    pub gnuplot: Option<bool>,
    pub training: Option<TrainingSection>,
    pub horizon_search: Option<HorizonSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub grids: Option<PathBuf>,
    pub s_max: Option<f64>,
    pub s_points: Option<usize>,
    pub moments: Option<Vec<u32>>,
    pub mc_paths: Option<usize>,
    pub training_paths: Option<usize>,
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSearch {
    pub threshold: f64,
    pub cap: usize,
    pub samples: usize,
    pub c_lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub k: Option<f64>,
    pub delta: f64,
}

/// A fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelName,
    pub poisson_b: f64,
    pub corrosion_threshold: f64,
    /// Quantize the process killed at its exit time.
    pub killed: bool,
    /// `None` selects the horizon by Monte Carlo.
    pub horizon: Option<usize>,
    pub sizes: Vec<SizeSpec>,
    pub seed: u64,
    /// 0 uses every available core.
    pub threads: usize,
    pub out: PathBuf,
    pub grids: PathBuf,
    pub s_max: f64,
    pub s_points: usize,
    pub moments: Vec<u32>,
    pub mc_paths: usize,
    pub gnuplot: bool,
    pub training: TrainConfig,
    pub horizon_search: HorizonSearch,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, cli: Overrides) -> Result<Self> {
        let model = ModelName::parse(
            cli.model
                .as_deref()
                .or(file.model.as_deref())
                .unwrap_or("poisson"),
        )?;
        let params = file.params.unwrap_or_default();
        let poisson_b = params.b.unwrap_or(10.0);
        let corrosion_threshold = params
            .threshold
            .unwrap_or(pdmp_exit::models::corrosion::THRESHOLD);
        let is_poisson = model == ModelName::Poisson;

        let horizon = match (cli.horizon, file.horizon) {
            (Some(n), _) | (None, Some(HorizonSpec::Fixed(n))) => Some(n),
            (None, Some(HorizonSpec::Auto(_))) => None,
            (None, None) if is_poisson => Some((poisson_b.ceil() as usize).max(1)),
            (None, None) => None,
        };
        let sizes = match cli.sizes {
            Some(v) => v.into_iter().map(SizeSpec::Uniform).collect(),
            None => file
                .sizes
                .unwrap_or_else(|| vec![SizeSpec::Uniform(if is_poisson { 500 } else { 200 })]),
        };
        let default_s_max = if is_poisson { poisson_b } else { 1.5e6 };
        let t = file.training.unwrap_or_default();
        let defaults = TrainConfig::default();
        let training = TrainConfig {
            p: t.p.unwrap_or(defaults.p),
            pilot_paths: t.pilot_paths.unwrap_or(defaults.pilot_paths),
            training_paths: cli
                .training_paths
                .or(t.training_paths)
                .unwrap_or(defaults.training_paths),
            companion_paths: t.companion_paths.unwrap_or(defaults.companion_paths),
            schedule: t.schedule.map(Schedule::from).unwrap_or(defaults.schedule),
            state_only: None,
            batch_size: t.batch_size,
            standardize: t.standardize.unwrap_or(defaults.standardize),
            single_cemetery_point: t
                .single_cemetery_point
                .unwrap_or(defaults.single_cemetery_point),
        };
        let h = file.horizon_search.unwrap_or_default();
        let horizon_search = HorizonSearch {
            threshold: h.threshold.unwrap_or(0.01),
            cap: h.cap.unwrap_or(40),
            samples: h.samples.unwrap_or(100_000),
            c_lambda: h.c_lambda,
            epsilon: h.epsilon,
            k: h.k,
            delta: h.delta.unwrap_or(0.01),
        };
        let config = RunConfig {
            model,
            poisson_b,
            corrosion_threshold,
            killed: file.killed.unwrap_or(!is_poisson),
            horizon,
            sizes,
            seed: cli.seed.or(file.seed).unwrap_or(1),
            threads: cli.threads.or(file.threads).unwrap_or(0),
            out: cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            grids: cli
                .grids
                .or(file.grids)
                .unwrap_or_else(|| PathBuf::from("grids")),
            s_max: cli.s_max.or(file.s_max).unwrap_or(default_s_max),
            s_points: cli.s_points.or(file.s_points).unwrap_or(200),
            moments: cli.moments.or(file.moments).unwrap_or_else(|| {
                if is_poisson {
                    vec![1, 2]
                } else {
                    vec![1]
                }
            }),
            mc_paths: cli.mc_paths.or(file.mc_paths).unwrap_or(1_000_000),
            gnuplot: cli.gnuplot || file.gnuplot.unwrap_or(false),
            training,
            horizon_search,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(CliError::config(format!("{field}: {why}")));
        if !(self.poisson_b > 0.0 && self.poisson_b.is_finite()) {
            return bad("params.b", format!("{} must be positive", self.poisson_b));
        }
        if !(self.corrosion_threshold > 0.0
            && self.corrosion_threshold <= pdmp_exit::models::corrosion::THRESHOLD)
        {
            return bad(
                "params.threshold",
                format!("{} must lie in (0, 0.2]", self.corrosion_threshold),
            );
        }
        if self.horizon == Some(0) {
            return bad("horizon", "must be at least 1".into());
        }
        if self.sizes.is_empty() {
            return bad("sizes", "at least one grid size is required".into());
        }
        for s in &self.sizes {
            if s.as_slice().is_empty() || s.as_slice().contains(&0) {
                return bad(
                    "sizes",
                    format!("{:?} contains a zero or is empty", s.as_slice()),
                );
            }
        }
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return bad("s_max", format!("{} must be positive", self.s_max));
        }
        if self.s_points == 0 {
            return bad("s_points", "must be positive".into());
        }
        if self.mc_paths < pdmp_exit::exit::MIN_SAMPLES {
            return bad(
                "mc_paths",
                format!("must be at least {}", pdmp_exit::exit::MIN_SAMPLES),
            );
        }
        if self.training.pilot_paths == 0 || self.training.companion_paths == 0 {
            return bad("training", "path counts must be positive".into());
        }
        if !(self.training.p >= 1.0) {
            return bad(
                "training.p",
                format!("{} must be at least 1", self.training.p),
            );
        }
        let h = &self.horizon_search;
        if !(h.threshold > 0.0 && h.threshold < 1.0) {
            return bad(
                "horizon_search.threshold",
                format!("{} must lie in (0, 1)", h.threshold),
            );
        }
        if h.cap == 0 {
            return bad("horizon_search.cap", "must be at least 1".into());
        }
        if h.samples < pdmp_exit::exit::MIN_SAMPLES {
            return bad(
                "horizon_search.samples",
                format!("must be at least {}", pdmp_exit::exit::MIN_SAMPLES),
            );
        }
        if !(h.delta > 0.0 && h.delta <= 1.0) {
            return bad(
                "horizon_search.delta",
                format!("{} must lie in (0, 1]", h.delta),
            );
        }
        Ok(())
    }

    pub fn s_grid(&self) -> Vec<f64> {
        pdmp_exit::exit::default_s_grid(self.s_max, self.s_points)
    }

    pub fn max_moment(&self) -> u32 {
        self.moments.iter().copied().max().unwrap_or(0)
    }
}

pub fn parse_list<T: std::str::FromStr>(field: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::config(format!("{field}: cannot parse `{t}`")))
        })
        .collect()
}
