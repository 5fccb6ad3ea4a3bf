//! The four subcommands as library functions. Computation and file output are
//! separate so callers can run pipelines in-process.

use std::fmt;
use std::fs;
use std::path::Path;

use log::{info, warn};
use mfg_core::datamat::{build_data_matrices, check_rank_pi, check_rank_vi, DataMatrices, RankReport};
use mfg_core::error::HistoryTable;
use mfg_core::io::{self, to_rows, DataDoc, GainsDoc, GridDoc, Rows};
use mfg_core::learn_pi::run_data_pi;
use mfg_core::learn_vi::run_data_vi;
use mfg_core::linalg::relative_error;
use mfg_core::model::{model_pi, GainPair, PiOptions, PiSolution, ReferenceSolution};
use mfg_core::simulate::{integrate_mean_ode, monte_carlo_mean, population_sim, MeanTrajectory, PopulationRun};
use mfg_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Builtin, Learner, Preset, Resolved, RunConfig};

pub struct Collected {
    pub trajectory: MeanTrajectory<f64>,
    pub data: DataMatrices<f64>,
    pub rank: RankReport,
}

/// Simulates the behaviour policy, builds the data matrices and checks the
/// rank condition of the configured learner.
pub fn collect(res: &Resolved) -> Result<Collected> {
    let trajectory = if res.samples == 0 {
        integrate_mean_ode(&res.model, &res.law.mean(), &res.policy, res.grid)?
    } else {
        monte_carlo_mean(&res.model, &res.law, &res.policy, res.grid, res.samples, res.seed)?
    };
    let data = build_data_matrices(&trajectory, &res.intervals, res.model.rho())?;
    let rank = match res.learner {
        Learner::Pi { .. } => check_rank_pi(&data)?,
        Learner::Vi { .. } => check_rank_vi(&data)?,
    };
    if !rank.satisfied {
        warn!("{rank}; the learner will fail on this data");
    }
    Ok(Collected { trajectory, data, rank })
}

/// Writes `data.json`, `trajectory.csv` and its `trajectory.json` sidecar.
pub fn write_collected(out: &Path, res: &Resolved, c: &Collected) -> Result<()> {
    fs::create_dir_all(out)?;
    io::write_json(&out.join("data.json"), &DataDoc::from_matrices(&c.data))?;
    io::write_trajectory_csv(&out.join("trajectory.csv"), &c.trajectory)?;
    let sidecar = json!({
        "grid": GridDoc::from(res.grid),
        "seed": res.seed,
        "samples": res.samples,
        "rank": c.rank.rank,
        "required_rank": c.rank.required,
    });
    io::write_json(&out.join("trajectory.json"), &sidecar)
}

/// Relative errors `|K − K*|/|K*|` against the model-based solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K_Y", skip_serializing_if = "Option::is_none")]
    pub k_y: Option<f64>,
}

/// Learner result document; it also parses as a [`GainsDoc`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub learner: String,
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "K_Y")]
    pub k_y: Rows,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "Y", skip_serializing_if = "Option::is_none")]
    pub y: Option<Rows>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resets: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<RelativeErrors>,
}

impl Summary {
    pub fn gains(&self) -> Result<GainPair<f64>> {
        GainsDoc { k: self.k.clone(), k_y: self.k_y.clone() }.to_gains()
    }
}

pub struct Learned {
    pub summary: Summary,
    pub history: HistoryTable,
}

/// Model-based solution of a built-in game, converged well past the
/// learners' tolerance.
pub fn ground_truth(builtin: Builtin) -> Result<PiSolution<f64>> {
    let ex = builtin.example();
    model_pi(&ex.model, &ex.k0, &ex.k0_y, PiOptions { eps: 1e-10, max_iter: 100 })
}

/// Runs the configured learner on `data`.
pub fn learn(res: &Resolved, data: &DataMatrices<f64>) -> Result<Learned> {
    let model = &res.model;
    if data.n != model.n() || data.m != model.m() {
        return Err(Error::Dimension(format!(
            "data has n = {}, m = {}, model has n = {}, m = {}",
            data.n,
            data.m,
            model.n(),
            model.m()
        )));
    }
    if data.rho != model.rho() {
        return Err(Error::Precondition(format!("data built with rho = {}, model has rho = {}", data.rho, model.rho())));
    }
    let truth = res.builtin.map(ground_truth).transpose()?;
    let (summary, history) = match &res.learner {
        Learner::Pi { k0, k0_y, opts } => {
            let sol = run_data_pi(data, k0, k0_y, model.q(), model.r(), *opts)?;
            let relative_error = truth.map(|t| RelativeErrors {
                k: relative_error(&sol.gains.k, &t.gains.k),
                k_y: Some(relative_error(&sol.gains.k_y, &t.gains.k_y)),
            });
            let summary = Summary {
                learner: "pi".into(),
                k: to_rows(&sol.gains.k),
                k_y: to_rows(&sol.gains.k_y),
                p: to_rows(sol.riccati.p.as_matrix()),
                y: Some(to_rows(sol.riccati.y.as_matrix())),
                iterations: sol.iterations(),
                resets: None,
                relative_error,
            };
            (summary, sol.history.to_table())
        }
        Learner::Vi { p0, opts } => {
            let sol = run_data_vi(data, p0, model.q(), model.r(), *opts)?;
            let relative_error = truth.map(|t| RelativeErrors { k: relative_error(&sol.gain, &t.gains.k), k_y: None });
            let summary = Summary {
                learner: "vi".into(),
                k: to_rows(&sol.gain),
                k_y: to_rows(&sol.gain_y),
                p: to_rows(sol.p.as_matrix()),
                y: None,
                iterations: sol.iterations,
                resets: Some(sol.resets),
                relative_error,
            };
            (summary, sol.history.to_table())
        }
    };
    Ok(Learned { summary, history })
}

/// Writes `summary.json` and `history.csv`.
pub fn write_learned(out: &Path, l: &Learned) -> Result<()> {
    fs::create_dir_all(out)?;
    io::write_json(&out.join("summary.json"), &l.summary)?;
    io::write_history_csv(&out.join("history.csv"), &l.history)
}

/// Runs the population study under the decentralized strategy built from
/// `gains`.
pub fn population(cfg: &RunConfig, res: &Resolved, gains: &GainPair<f64>) -> Result<PopulationRun<f64>> {
    let pop = &cfg.population;
    population_sim(
        &res.model,
        gains,
        pop.agents,
        &res.population_law,
        pop.aggregate_samples,
        res.population_grid,
        res.seed,
    )
}

/// Writes `average.csv`, `agents.csv` and the `population.json` sidecar.
pub fn write_population(out: &Path, cfg: &RunConfig, res: &Resolved, run: &PopulationRun<f64>) -> Result<()> {
    fs::create_dir_all(out)?;
    io::write_population_csv(out, run, cfg.population.csv_stride)?;
    let sidecar = json!({
        "grid": GridDoc::from(run.grid),
        "seed": res.seed,
        "agents": run.len(),
        "aggregate_samples": cfg.population.aggregate_samples,
        "csv_stride": cfg.population.csv_stride,
        "xi0": run.xi0.as_slice(),
        "consistency_gap": run.consistency_gap(),
    });
    io::write_json(&out.join("population.json"), &sidecar)
}

/// Pipeline stage named in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    GroundTruth,
    Collect,
    Learn,
    Population,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::GroundTruth => "ground truth",
            Stage::Collect => "collect",
            Stage::Learn => "learn",
            Stage::Population => "population",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

/// One line of the reproduction table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub metric: String,
    pub value: String,
    pub target: String,
    pub pass: bool,
}

#[derive(Debug, Default, Serialize)]
pub struct ReproReport {
    pub example: String,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency_gap: Option<f64>,
    #[serde(skip)]
    pub failure: Option<StageError>,
}

impl ReproReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.pass)
    }

    /// 0 when every check passes, the failing stage's status when a stage
    /// aborted, and 1 when the pipeline ran but missed a threshold.
    pub fn exit_code(&self) -> i32 {
        match &self.failure {
            Some(err) => err.exit_code(),
            None if self.passed() => 0,
            None => 1,
        }
    }

    fn check(&mut self, metric: &str, value: String, target: &str, pass: bool) {
        self.checks.push(Check { metric: metric.into(), value, target: target.into(), pass });
    }
}

impl fmt::Display for ReproReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w0 = self.checks.iter().map(|c| c.metric.len()).max().unwrap_or(0).max(6);
        let w1 = self.checks.iter().map(|c| c.value.len()).max().unwrap_or(0).max(5);
        let w2 = self.checks.iter().map(|c| c.target.len()).max().unwrap_or(0).max(6);
        writeln!(f, "{}", self.example)?;
        writeln!(f, "{:<w0$}  {:<w1$}  {:<w2$}  result", "metric", "value", "target")?;
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            writeln!(f, "{:<w0$}  {:<w1$}  {:<w2$}  {verdict}", c.metric, c.value, c.target)?;
        }
        if let Some(err) = &self.failure {
            writeln!(f, "aborted: {err}")?;
        }
        Ok(())
    }
}

/// Iteration-count window for each preset.
pub fn iteration_window(preset: Preset) -> (usize, usize) {
    match preset {
        Preset::Example1 => (4, 8),
        Preset::Example2Pi => (2, 6),
        Preset::Example2Vi => (86, 344),
    }
}

pub const RELATIVE_ERROR_TOLERANCE: f64 = 0.02;
pub const REFERENCE_TOLERANCE: f64 = 1e-3;
pub const CONSISTENCY_TOLERANCE: f64 = 0.15;

/// Ground truth, collection, learning and (for the first example) the
/// population study, checked against the acceptance thresholds. Files are
/// written under `out` when given.
pub fn repro(preset: Preset, cfg: &RunConfig, out: Option<&Path>) -> ReproReport {
    let mut report = ReproReport { example: preset.id().into(), ..Default::default() };
    if let Err(failure) = repro_stages(preset, cfg, out, &mut report) {
        report.failure = Some(failure);
    }
    if let Some(dir) = out {
        if let Err(source) = io::write_json(&dir.join("report.json"), &report) {
            report.failure.get_or_insert(StageError { stage: Stage::Output, source });
        }
    }
    report
}

fn repro_stages(preset: Preset, cfg: &RunConfig, out: Option<&Path>, report: &mut ReproReport) -> Result<(), StageError> {
    let at = |stage| move |source| StageError { stage, source };
    let res = cfg.resolve().map_err(at(Stage::Config))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| at(Stage::Output)(e.into()))?;
        io::write_json(&dir.join("config.json"), cfg).map_err(at(Stage::Output))?;
    }

    let builtin = res.builtin.ok_or_else(|| at(Stage::Config)(Error::Precondition("repro needs a built-in model".into())))?;
    let ex = builtin.example();
    let truth = ground_truth(builtin).map_err(at(Stage::GroundTruth))?;
    let (worst, zeros_hold) = reference_error(&truth, &ex.reference);
    report.check(
        "ground truth vs published (max entry rel.)",
        format!("{worst:.2e}"),
        "<= 1e-3",
        worst <= REFERENCE_TOLERANCE && zeros_hold,
    );

    info!("collecting {} sample paths", res.samples);
    let collected = collect(&res).map_err(at(Stage::Collect))?;
    report.check(
        "rank condition",
        format!("{}/{}", collected.rank.rank, collected.rank.required),
        "full",
        collected.rank.satisfied,
    );
    if let Some(dir) = out {
        write_collected(dir, &res, &collected).map_err(at(Stage::Output))?;
    }

    let learned = match learn(&res, &collected.data) {
        Ok(l) => l,
        Err(err) => {
            if let Error::NotConverged { iterations, last_step, .. } = &err {
                report.check("converged", format!("no ({iterations} its, last {last_step:.2e})"), "yes", false);
            }
            return Err(at(Stage::Learn)(err));
        }
    };
    if let Some(dir) = out {
        write_learned(dir, &learned).map_err(at(Stage::Output))?;
    }
    let s = &learned.summary;
    let (lo, hi) = iteration_window(preset);
    report.check("iterations", s.iterations.to_string(), &format!("{lo}..={hi}"), (lo..=hi).contains(&s.iterations));
    if let Some(err) = s.relative_error {
        report.check("|K - K*| / |K*|", format!("{:.4e}", err.k), "<= 0.02", err.k <= RELATIVE_ERROR_TOLERANCE);
        if let Some(ey) = err.k_y {
            report.check("|K_Y - K_Y*| / |K_Y*|", format!("{ey:.4e}"), "<= 0.02", ey <= RELATIVE_ERROR_TOLERANCE);
        }
    }
    report.summary = Some(s.clone());

    if preset == Preset::Example1 {
        let gains = s.gains().map_err(at(Stage::Population))?;
        let run = population(cfg, &res, &gains).map_err(at(Stage::Population))?;
        let gap = run.consistency_gap();
        report.check("consistency gap", format!("{gap:.4e}"), "<= 0.15", gap <= CONSISTENCY_TOLERANCE);
        report.consistency_gap = Some(gap);
        if let Some(dir) = out {
            write_population(dir, cfg, &res, &run).map_err(at(Stage::Output))?;
        }
    }
    Ok(())
}

/// Largest entrywise relative error of `(P, K, Y, K_Y)` against the published
/// values over their nonzero entries, and whether the entries published as
/// zero are below `1e-8` in magnitude.
pub fn reference_error(truth: &PiSolution<f64>, published: &ReferenceSolution<f64>) -> (f64, bool) {
    let pairs = [
        (truth.riccati.p.as_matrix(), &published.p),
        (&truth.gains.k, &published.k),
        (truth.riccati.y.as_matrix(), &published.y),
        (&truth.gains.k_y, &published.k_y),
    ];
    let mut worst: f64 = 0.0;
    let mut zeros_hold = true;
    for (got, want) in pairs {
        for (g, p) in got.iter().zip(want.iter()) {
            if *p == 0.0 {
                zeros_hold &= g.abs() <= 1e-8;
            } else {
                worst = worst.max(((g - p) / p).abs());
            }
        }
    }
    (worst, zeros_hold)
}
