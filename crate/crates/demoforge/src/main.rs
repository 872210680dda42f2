use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demoforge::config::RunConfig;
use demoforge::pipeline;
use demoforge::{Error, Result};

#[derive(Parser)]
#[command(name = "demoforge", version, about = "Generate robot demonstrations for new objects from one source demonstration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scripted source demonstration and random target meshes.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        targets: Option<usize>,
    },
    /// Bring target meshes into a canonical frame.
    Canonicalize {
        #[command(flatten)]
        common: Common,
    },
    /// Transfer the source keypoints onto the target meshes.
    Correspond {
        #[command(flatten)]
        common: Common,
        /// Only write the rig renders for an offline descriptor model.
        #[arg(long)]
        export_views: bool,
    },
    /// Generate demonstrations for the target meshes.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Dump one frame of a dataset as PLY and print a summary.
    Inspect {
        /// Dataset directory.
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        demo: usize,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf, usize)> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = Some(j);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::Config("no output directory (--out or \"out\" in the configuration)".into()))?;
    cfg.validate()?;
    let jobs = cfg.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok((cfg, out, jobs))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, targets } => {
            let (mut cfg, out, _) = load(&common)?;
            if let Some(t) = targets {
                cfg.synth.targets = t;
            }
            pipeline::cmd_synth(&cfg, &out)?;
            println!("wrote {}", out.join("run.json").display());
        }
        Command::Canonicalize { common } => {
            let (cfg, out, jobs) = load(&common)?;
            let r = pipeline::with_jobs(jobs, || pipeline::cmd_canonicalize(&cfg, &out))??;
            println!("{} canonical, {} degenerate, {} failed", r.meshes.len(), r.degenerate.len(), r.failed.len());
        }
        Command::Correspond { common, export_views } => {
            let (cfg, out, jobs) = load(&common)?;
            if export_views {
                let n = pipeline::cmd_export_views(&cfg, &out)?;
                println!("exported views of {n} meshes to {}", out.display());
            } else {
                let s = pipeline::with_jobs(jobs, || pipeline::cmd_correspond(&cfg, &out))??;
                println!("{}: {} matched, {} failed", s.backend, s.succeeded.len(), s.failed.len());
            }
        }
        Command::Generate { common } => {
            let (cfg, out, jobs) = load(&common)?;
            let s = pipeline::with_jobs(jobs, || pipeline::cmd_generate(&cfg, &out))??;
            println!("{} of {} demonstrations written to {}", s.completed, s.requested, out.display());
        }
        Command::Inspect { dataset, demo, frame, out } => {
            let (_, text) = pipeline::cmd_inspect(&dataset, demo, frame, Path::new(&out))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEMOFORGE_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
