//! Front end for the mean-field game solvers: run configurations, the
//! `collect`, `learn`, `population` and `repro` pipelines, and argument
//! handling for the `mfg` binary.

pub mod app;
pub mod commands;
pub mod config;

pub use commands::{collect, learn, population, repro, ReproReport, Stage, StageError, Summary};
pub use config::{Preset, Resolved, RunConfig};
