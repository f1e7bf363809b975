use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tvdesign::harness::{self, ExperimentConfig, Mode, RunOptions};
use tvdesign::inference::{lagged_diffusivity_with, LaggedOptions, StackedSystem};
use tvdesign::io::{parse_raw, write_pgm, write_raw};
use tvdesign::projector::Design;
use tvdesign::sim::simulate_data;
use tvdesign::{Error, Image};

#[derive(Parser)]
#[command(name = "tvdesign", version, about = "Sequential optimal projection design for tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the configured phantom on the reconstruction grid.
    Phantom(Common),
    /// Simulate data for a list of designs (default: the reference set).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// JSON array of designs.
        #[arg(long)]
        designs: Option<PathBuf>,
    },
    /// Reconstruct from measurements written by `simulate`.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Score all candidates for the next projection.
    DesignStep {
        #[command(flatten)]
        common: Common,
        /// Current reconstruction (raw format); defaults to all ones.
        #[arg(long)]
        image: Option<PathBuf>,
        /// JSON array of designs measured so far.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Sequential optimal design (mode optimized).
    RunSequential {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dump_images: bool,
    },
    /// Non-adaptive reference run (reference modes).
    RunReference {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dump_images: bool,
    },
    /// Repeated runs with consecutive seeds.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct Measurement {
    design: Design,
    data: Vec<f64>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Phantom(c) => c,
            Command::Simulate { common, .. }
            | Command::Reconstruct { common, .. }
            | Command::DesignStep { common, .. }
            | Command::RunSequential { common, .. }
            | Command::RunReference { common, .. }
            | Command::Ensemble { common, .. } => common,
        }
    }
}

fn load_config(c: &Common) -> tvdesign::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_image(img: &Image, dir: &Path, stem: &str) -> tvdesign::Result<()> {
    write_raw(img, BufWriter::new(File::create(dir.join(format!("{stem}.raw")))?))?;
    if img.grid().dim() == 2 {
        let s = write_pgm(img, BufWriter::new(File::create(dir.join(format!("{stem}.pgm")))?))?;
        fs::write(dir.join(format!("{stem}.pgm.txt")), s.to_text())?;
    }
    Ok(())
}

fn read_designs(path: &Path) -> tvdesign::Result<Vec<Design>> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::InvalidArgument(format!("designs: {e}")))
}

fn execute(cmd: &Command) -> tvdesign::Result<()> {
    let common = cmd.common();
    let cfg = load_config(common)?;
    let out = &common.out;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    let fine = cfg.fine_grid()?;

    match cmd {
        Command::Phantom(_) => write_image(&cfg.phantom.render(&fine)?, out, "phantom"),
        Command::Simulate { designs, .. } => {
            let designs = match designs {
                Some(p) => read_designs(p)?,
                None if cfg.mode == Mode::Optimized => {
                    return Err(Error::InvalidArgument("pass --designs or use a reference mode".into()))
                }
                None => harness::reference_designs(&cfg),
            };
            let truth = cfg.phantom.render(&fine)?;
            let mut ms = Vec::with_capacity(designs.len());
            for (k, design) in designs.into_iter().enumerate() {
                let r = cfg.space.assemble(&fine, &design)?;
                let data = simulate_data(&r, &truth, cfg.sigma, cfg.seed, k as u64 + 1)?;
                ms.push(Measurement { design, data });
            }
            fs::write(out.join("measurements.json"), serde_json::to_string(&ms)?)?;
            Ok(())
        }
        Command::Reconstruct { measurements, .. } => {
            let ms: Vec<Measurement> = serde_json::from_str(&fs::read_to_string(measurements)?)
                .map_err(|e| Error::InvalidArgument(format!("measurements: {e}")))?;
            let mut sys = StackedSystem::new(fine.len());
            for m in &ms {
                sys.push(&cfg.space.assemble(&fine, &m.design)?, &m.data, cfg.sigma)?;
            }
            let opts = LaggedOptions { max_iterations: cfg.max_iterations };
            let res = lagged_diffusivity_with(&Image::constant(fine, 1.0), &sys, &cfg.prior, cfg.tau, &opts)?;
            if common.verbose {
                res.write_diagnostics(BufWriter::new(File::create(out.join("iterations.csv"))?))?;
            }
            write_image(&res.mean, out, "reconstruction")
        }
        Command::DesignStep { image, history, .. } => {
            let mean = match image {
                Some(p) => parse_raw(&fs::read(p)?)?,
                None => Image::constant(fine, 1.0),
            };
            let history = match history {
                Some(p) => read_designs(p)?,
                None => Vec::new(),
            };
            let (candidates, scores) = harness::design_step(&cfg, &mean, &history)?;
            harness::write_scores_csv(
                &candidates.designs,
                &[(history.len() + 1, scores.clone())],
                BufWriter::new(File::create(out.join("scores.csv"))?),
            )?;
            let best = tvdesign::design::argmin(&scores)?;
            let design = candidates.designs[best.index];
            fs::write(out.join("next_design.json"), serde_json::to_string_pretty(&design)?)?;
            println!("{}", serde_json::to_string(&design)?);
            Ok(())
        }
        Command::RunSequential { dump_images, .. } | Command::RunReference { dump_images, .. } => {
            let want_sequential = matches!(cmd, Command::RunSequential { .. });
            if want_sequential != (cfg.mode == Mode::Optimized) {
                return Err(Error::InvalidArgument(format!(
                    "mode {:?} does not fit this subcommand",
                    cfg.mode
                )));
            }
            let opts = RunOptions { keep_images: *dump_images, keep_scores: common.verbose };
            match harness::run(&cfg, &opts) {
                Ok(report) => harness::write_run_outputs(out, &cfg, &report),
                Err(failure) => {
                    // keep what was computed before the failure
                    harness::write_run_outputs(out, &cfg, &failure.partial)?;
                    Err(failure.error)
                }
            }
        }
        Command::Ensemble { count, .. } => {
            let rep = harness::ensemble(&cfg, *count)?;
            harness::write_ensemble_csv(&rep, BufWriter::new(File::create(out.join("ensemble.csv"))?))?;
            let mut f = BufWriter::new(File::create(out.join("members.csv"))?);
            writeln!(f, "member,seed,round,rel_l2")?;
            for (i, errs) in rep.member_errors.iter().enumerate() {
                for (k, e) in errs.iter().flatten().enumerate() {
                    writeln!(f, "{i},{},{},{e:.17e}", harness::member_seed(cfg.seed, i), k + 1)?;
                }
            }
            for (i, msg) in &rep.failures {
                eprintln!("member {i} failed: {msg}");
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) | Error::Json(_) => 2,
        Error::NumericalFailure(_) | Error::ConvergenceFailure { .. } | Error::Capacity { .. } => 3,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.command.common().verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
