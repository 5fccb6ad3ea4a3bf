//! Command-line parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use mfg_core::io::{self, DataDoc, GainsDoc};
use mfg_core::Result;

use crate::commands::{self, Learned};
use crate::config::{Preset, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "mfg", version, about = "Data-driven solvers for linear-quadratic mean-field games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for path simulation (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one agent and write its data matrices.
    Collect(RunArgs),
    /// Run the configured learner on a data file.
    Learn {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
    },
    /// Simulate a population under learned gains.
    Population {
        #[command(flatten)]
        run: RunArgs,
        /// Any JSON document with fields K and K_Y, such as summary.json.
        #[arg(long, value_name = "PATH")]
        gains: PathBuf,
    },
    /// Reproduce a built-in experiment end to end.
    Repro {
        /// example1, example2-pi or example2-vi
        example: String,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "U64")]
        seed: Option<u64>,
        #[arg(long, value_name = "M")]
        samples: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file, or a built-in preset name (example1, example2-pi, example2-vi).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "M")]
    pub samples: Option<usize>,
}

const DEFAULT_OUT: &str = "mfg-out";

fn apply_overrides(cfg: &mut RunConfig, out: Option<PathBuf>, seed: Option<u64>, samples: Option<usize>) {
    if let Some(out) = out {
        cfg.out = Some(out);
    }
    if let Some(seed) = seed {
        cfg.trajectory.seed = seed;
    }
    if let Some(samples) = samples {
        cfg.trajectory.samples = samples;
    }
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    apply_overrides(&mut cfg, args.out.clone(), args.seed, args.samples);
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("MFG_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_target(false).try_init();
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    init_logging();
    if let Some(threads) = cli.threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            error!("cannot configure {threads} threads: {err}");
            return 2;
        }
    }
    match cli.command {
        Command::Repro { example, out, seed, samples } => run_repro(&example, out, seed, samples),
        command => match run_pipeline(command) {
            Ok(()) => 0,
            Err(err) => {
                error!("{err}");
                err.exit_code()
            }
        },
    }
}

fn run_pipeline(command: Command) -> Result<()> {
    match command {
        Command::Collect(args) => {
            let cfg = load(&args)?;
            let res = cfg.resolve()?;
            let collected = commands::collect(&res)?;
            let out = out_dir(&cfg);
            commands::write_collected(&out, &res, &collected)?;
            println!("{}", collected.rank);
            println!("wrote {}", out.join("data.json").display());
        }
        Command::Learn { run, data } => {
            let cfg = load(&run)?;
            let res = cfg.resolve()?;
            let dm = io::read_json::<DataDoc>(&data)?.to_matrices()?;
            let learned = commands::learn(&res, &dm)?;
            let out = out_dir(&cfg);
            commands::write_learned(&out, &learned)?;
            print_learned(&learned, &out);
        }
        Command::Population { run, gains } => {
            let cfg = load(&run)?;
            let res = cfg.resolve()?;
            let gains = io::read_json::<GainsDoc>(&gains)?.to_gains()?;
            let sim = commands::population(&cfg, &res, &gains)?;
            let out = out_dir(&cfg);
            commands::write_population(&out, &cfg, &res, &sim)?;
            println!("consistency gap sup|x~ - x^| / sup|x^| = {:.4e} over {} agents", sim.consistency_gap(), sim.len());
            println!("wrote {} and {}", out.join("average.csv").display(), out.join("agents.csv").display());
        }
        Command::Repro { .. } => unreachable!("handled by run"),
    }
    Ok(())
}

fn print_learned(learned: &Learned, out: &Path) {
    let s = &learned.summary;
    println!("learner {}: {} iterations", s.learner, s.iterations);
    println!("K   = {:?}", s.k);
    println!("K_Y = {:?}", s.k_y);
    if let Some(err) = s.relative_error {
        println!("relative error K   = {:.4e}", err.k);
        if let Some(ey) = err.k_y {
            println!("relative error K_Y = {ey:.4e}");
        }
    }
    println!("wrote {}", out.join("summary.json").display());
}

fn run_repro(example: &str, out: Option<PathBuf>, seed: Option<u64>, samples: Option<usize>) -> i32 {
    let preset = match example.parse::<Preset>() {
        Ok(p) => p,
        Err(err) => {
            error!("{err}");
            return err.exit_code();
        }
    };
    let mut cfg = preset.config();
    apply_overrides(&mut cfg, out, seed, samples);
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(format!("repro-{}", preset.id())));
    let started = std::time::Instant::now();
    let report = commands::repro(preset, &cfg, Some(&dir));
    info!("{} finished in {:.1?}", preset.id(), started.elapsed());
    print!("{report}");
    println!("wrote {}", dir.display());
    if let Some(err) = &report.failure {
        error!("{err}");
    }
    report.exit_code()
}
