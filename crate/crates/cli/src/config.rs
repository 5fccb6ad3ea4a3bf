//! Run configuration documents and the built-in presets.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use mfg_core::datamat::{IntervalSet, DEFAULT_INTERVALS, DEFAULT_SPACING, DEFAULT_START};
use mfg_core::io::{from_rows, to_rows, ModelDoc, Rows};
use mfg_core::linalg::SymMatrix;
use mfg_core::model::{example1, example2, BoundSchedule, Example, PiOptions, StepSchedule, SystemModel, ViOptions};
use mfg_core::simulate::{ExplorationSignal, InitialLaw, Policy, TimeGrid};
use mfg_core::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

/// A compiled-in game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Example1,
    Example2,
}

impl Builtin {
    pub fn example(self) -> Example<f64> {
        match self {
            Builtin::Example1 => example1(),
            Builtin::Example2 => example2(),
        }
    }
}

/// Either a built-in game name or an inline `{A, B, C, Q, R, rho}` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Builtin(Builtin),
    Inline(ModelDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExplorationConfig {
    None,
    Sinusoid { amplitude: f64, frequency: f64 },
    SinusoidSum { amplitude: f64, frequencies: Vec<f64> },
    /// `count` frequencies drawn uniformly from `[lo, hi]` with `seed`.
    RandomSinusoids { count: usize, amplitude: f64, lo: f64, hi: f64, seed: u64 },
}

impl ExplorationConfig {
    pub fn signal(&self) -> ExplorationSignal<f64> {
        match self {
            ExplorationConfig::None => ExplorationSignal::None,
            ExplorationConfig::Sinusoid { amplitude, frequency } => {
                ExplorationSignal::Sinusoid { amplitude: *amplitude, frequency: *frequency }
            }
            ExplorationConfig::SinusoidSum { amplitude, frequencies } => {
                ExplorationSignal::SinusoidSum { amplitude: *amplitude, frequencies: frequencies.clone() }
            }
            ExplorationConfig::RandomSinusoids { count, amplitude, lo, hi, seed } => {
                ExplorationSignal::random_sinusoids(*count, *amplitude, *lo, *hi, *seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConfig {
    Fixed(Vec<f64>),
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialConfig {
    pub fn law(&self) -> InitialLaw<f64> {
        match self {
            InitialConfig::Fixed(x) => InitialLaw::Fixed(DVector::from_vec(x.clone())),
            InitialConfig::Uniform { lo, hi } => {
                InitialLaw::Uniform { lo: DVector::from_vec(lo.clone()), hi: DVector::from_vec(hi.clone()) }
            }
        }
    }
}

/// Data-collection run of one agent. `samples = 0` integrates the mean ODE
/// instead of averaging sample paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub initial: InitialConfig,
    /// Feedback gain of the behaviour policy `u = −Kx + e(t)`.
    pub behavior_gain: Rows,
    pub exploration: ExplorationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    pub start: f64,
    pub spacing: f64,
    pub count: usize,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        Self { start: DEFAULT_START, spacing: DEFAULT_SPACING, count: DEFAULT_INTERVALS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LearnerConfig {
    Pi {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_pi_max_iter")]
        max_iter: usize,
        k0: Rows,
        k0_y: Rows,
    },
    Vi {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_vi_max_iter")]
        max_iter: usize,
        #[serde(default = "default_step_scale")]
        step_scale: f64,
        #[serde(default = "default_bound_scale")]
        bound_scale: f64,
        p0: Rows,
    },
}

impl LearnerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerConfig::Pi { .. } => "pi",
            LearnerConfig::Vi { .. } => "vi",
        }
    }
}

/// Population study. Agents draw `x_{i0}` from `initial`, which defaults to
/// the uniform law on `[0, 2]ⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub agents: usize,
    pub aggregate_samples: usize,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    pub t_end: f64,
    pub dt: f64,
    /// Every `csv_stride`-th grid point goes into the per-agent CSV.
    pub csv_stride: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self { agents: 200, aggregate_samples: 100, initial: None, t_end: 5.0, dt: 1e-3, csv_stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSource,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub intervals: IntervalConfig,
    pub learner: LearnerConfig,
    #[serde(default)]
    pub population: PopulationConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Built-in end-to-end experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Example1,
    Example2Pi,
    Example2Vi,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Example1, Preset::Example2Pi, Preset::Example2Vi];

    pub fn id(self) -> &'static str {
        match self {
            Preset::Example1 => "example1",
            Preset::Example2Pi => "example2-pi",
            Preset::Example2Vi => "example2-vi",
        }
    }

    pub fn config(self) -> RunConfig {
        let grid = |samples, initial: &DVector<f64>, gain: &DMatrix<f64>, exploration| TrajectoryConfig {
            t0: 0.0,
            t_end: 2.0,
            dt: 1e-4,
            samples,
            seed: DEFAULT_SEED,
            initial: InitialConfig::Fixed(initial.as_slice().to_vec()),
            behavior_gain: to_rows(gain),
            exploration,
        };
        let pi = |ex: &Example<f64>| LearnerConfig::Pi {
            eps: default_eps(),
            max_iter: default_pi_max_iter(),
            k0: to_rows(&ex.k0),
            k0_y: to_rows(&ex.k0_y),
        };
        match self {
            Preset::Example1 => {
                let ex = example1::<f64>();
                let exploration =
                    ExplorationConfig::RandomSinusoids { count: 100, amplitude: 0.3, lo: -1000.0, hi: 1000.0, seed: DEFAULT_SEED };
                RunConfig {
                    model: ModelSource::Builtin(Builtin::Example1),
                    trajectory: grid(100_000, &ex.x0, &ex.k0, exploration),
                    intervals: IntervalConfig::default(),
                    learner: pi(&ex),
                    population: PopulationConfig::default(),
                    out: None,
                }
            }
            Preset::Example2Pi => {
                let ex = example2::<f64>();
                let exploration = ExplorationConfig::Sinusoid { amplitude: 1.0, frequency: -24.6 };
                RunConfig {
                    model: ModelSource::Builtin(Builtin::Example2),
                    trajectory: grid(100_000, &ex.x0, &ex.k0, exploration),
                    intervals: IntervalConfig::default(),
                    learner: pi(&ex),
                    population: PopulationConfig::default(),
                    out: None,
                }
            }
            Preset::Example2Vi => {
                let ex = example2::<f64>();
                let exploration = ExplorationConfig::Sinusoid { amplitude: 1.0, frequency: -6.0 };
                RunConfig {
                    model: ModelSource::Builtin(Builtin::Example2),
                    trajectory: grid(200_000, &ex.x0, &DMatrix::zeros(1, 3), exploration),
                    intervals: IntervalConfig::default(),
                    learner: LearnerConfig::Vi {
                        eps: default_eps(),
                        max_iter: default_vi_max_iter(),
                        step_scale: default_step_scale(),
                        bound_scale: default_bound_scale(),
                        p0: to_rows(&(DMatrix::identity(3, 3) * 0.1)),
                    },
                    population: PopulationConfig::default(),
                    out: None,
                }
            }
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown example '{s}' (expected example1, example2-pi or example2-vi)")))
    }
}

/// Initial gains or value matrix of the selected learner.
#[derive(Debug, Clone)]
pub enum Learner {
    Pi { k0: DMatrix<f64>, k0_y: DMatrix<f64>, opts: PiOptions<f64> },
    Vi { p0: SymMatrix<f64>, opts: ViOptions<f64> },
}

/// A configuration checked against the model and converted to core types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: SystemModel<f64>,
    pub builtin: Option<Builtin>,
    pub grid: TimeGrid<f64>,
    pub law: InitialLaw<f64>,
    pub policy: Policy<f64>,
    pub samples: usize,
    pub seed: u64,
    pub intervals: IntervalSet<f64>,
    pub learner: Learner,
    pub population_grid: TimeGrid<f64>,
    pub population_law: InitialLaw<f64>,
}

impl RunConfig {
    /// Reads a config file, or a built-in preset when `source` names one and
    /// no such file exists.
    pub fn load(source: &Path) -> Result<Self> {
        if !source.exists() {
            if let Some(preset) = source.to_str().and_then(|s| s.parse::<Preset>().ok()) {
                return Ok(preset.config());
            }
        }
        mfg_core::io::read_json(source)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let (model, builtin) = match &self.model {
            ModelSource::Builtin(b) => (b.example().model, Some(*b)),
            ModelSource::Inline(doc) => (doc.to_model()?, None),
        };
        let (n, m) = (model.n(), model.m());
        let tr = &self.trajectory;
        let grid = TimeGrid::spanning(tr.t0, tr.t_end, tr.dt)?;
        let law = tr.initial.law();
        if law.dim() != n {
            return Err(Error::Dimension(format!("initial state has dimension {}, model has n = {n}", law.dim())));
        }
        let gain = from_rows(&tr.behavior_gain, "behavior_gain")?;
        model.check_gain_shape(&gain, "behavior_gain")?;
        let policy = Policy::new(gain, vec![tr.exploration.signal(); m])?;
        let iv = &self.intervals;
        let intervals = IntervalSet::uniform(iv.start, iv.spacing, iv.count)?;
        if intervals.endpoints().last().copied().unwrap_or(0.0) > grid.end() + 0.5 * grid.dt() {
            return Err(Error::Precondition(format!("intervals end after the trajectory horizon {}", grid.end())));
        }

        let learner = match &self.learner {
            LearnerConfig::Pi { eps, max_iter, k0, k0_y } => {
                let k0 = from_rows(k0, "k0")?;
                let k0_y = from_rows(k0_y, "k0_y")?;
                model.check_gain_shape(&k0, "k0")?;
                model.check_gain_shape(&k0_y, "k0_y")?;
                Learner::Pi { k0, k0_y, opts: PiOptions { eps: *eps, max_iter: *max_iter } }
            }
            LearnerConfig::Vi { eps, max_iter, step_scale, bound_scale, p0 } => {
                let p0 = SymMatrix::from_matrix(from_rows(p0, "p0")?)?;
                if p0.dim() != n {
                    return Err(Error::Dimension(format!("p0 is {0}x{0}, model has n = {n}", p0.dim())));
                }
                let opts = ViOptions {
                    eps: *eps,
                    max_iter: *max_iter,
                    step: StepSchedule::new(*step_scale)?,
                    bounds: BoundSchedule::new(*bound_scale)?,
                };
                Learner::Vi { p0, opts }
            }
        };

        let pop = &self.population;
        let population_grid = TimeGrid::spanning(0.0, pop.t_end, pop.dt)?;
        let population_law = match &pop.initial {
            Some(init) => init.law(),
            None => InitialLaw::Uniform { lo: DVector::zeros(n), hi: DVector::from_element(n, 2.0) },
        };
        if population_law.dim() != n {
            return Err(Error::Dimension(format!("population law has dimension {}, model has n = {n}", population_law.dim())));
        }
        if pop.agents == 0 || pop.aggregate_samples == 0 || pop.csv_stride == 0 {
            return Err(Error::Precondition("population agents, aggregate_samples and csv_stride must be positive".into()));
        }

        Ok(Resolved {
            model,
            builtin,
            grid,
            law,
            policy,
            samples: tr.samples,
            seed: tr.seed,
            intervals,
            learner,
            population_grid,
            population_law,
        })
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_eps() -> f64 {
    1e-3
}

fn default_pi_max_iter() -> usize {
    100
}

fn default_vi_max_iter() -> usize {
    10_000
}

fn default_step_scale() -> f64 {
    3.0
}

fn default_bound_scale() -> f64 {
    100.0
}
