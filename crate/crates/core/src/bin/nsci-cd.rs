use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsci_cd::pipeline::{self, PipelineConfig, SceneSource};
use nsci_cd::{Error, Result};

/// Change detection between two co-registered acquisitions.
#[derive(Parser, Debug)]
#[command(name = "nsci-cd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Pipeline configuration file. Without one the built-in synthetic scene is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for training-pixel sampling and the forest; for `synth`, the scene seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write CFOG stacks, NSCI and ME maps with previews.
    Features,
    /// Train the random forest and save `model.sdrf`.
    Train,
    /// Classify every pixel with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
    },
    /// Score a predicted mask against a reference mask.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run CVA, NCI, NSCI and NSCI+ME on one scene.
    Compare,
    /// Generate a synthetic scene.
    Synth,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = std::panic::catch_unwind(|| run(cli));
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}

fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build()
        .map_err(|e| Error::Invariant(format!("cannot start worker threads: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: Cli) -> Result<()> {
    let Common { config, out, seed, .. } = cli.common;
    let mut cfg = match &config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    let out = out.or_else(|| cfg.output_dir.clone());
    let need_out = || {
        out.clone()
            .ok_or_else(|| Error::Config("no output directory: pass --out or set [output] dir".into()))
    };

    match cli.command {
        Command::Synth => {
            let mut spec = match cfg.source {
                SceneSource::Synthetic(spec) => spec,
                SceneSource::Files { .. } => {
                    return Err(Error::Config("`synth` needs a [synth] section, not [input]".into()))
                }
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            print!("{}", pipeline::cmd_synth(&spec, &need_out()?)?);
            return Ok(());
        }
        Command::Evaluate { pred, truth } => {
            let report = pipeline::cmd_evaluate(&pred, &truth, out.as_deref())?;
            println!("{}", report.json);
            print!("{report}");
            return Ok(());
        }
        _ => {}
    }

    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    let out = need_out()?;
    match cli.command {
        Command::Features => print!("{}", pipeline::cmd_features(&cfg, &out)?),
        Command::Train => {
            let summary = pipeline::cmd_train(&cfg, &out)?;
            warn(&summary.warnings);
            print!("{summary}");
        }
        Command::Predict { model } => print!("{}", pipeline::cmd_predict(&cfg, &model, &out)?),
        Command::Compare => {
            let report = pipeline::cmd_compare(&cfg, &out)?;
            warn(&report.warnings);
            print!("{report}");
        }
        Command::Synth | Command::Evaluate { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}
