use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use weaklab::pipeline::{self, write_fixture, PipelineConfig, StageOutcome};
use weaklab::synthetic::SyntheticSpec;
use weaklab::triage::{InfoTypeStrategy, PriorityStrategy};
use weaklab::ErrorKind;

/// Weakly-supervised text triage.
#[derive(Parser)]
#[command(name = "weaklab", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// `builtin` or the URL of an embedding service.
    #[arg(long, global = true, env = "WEAKLAB_EMBED_URL")]
    provider: Option<String>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Pseudo-labelling threshold; computed from the label count when unset.
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Similarity threshold for label expansion.
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// Weight of the model's own priority in the linear combination.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// union | intersection
    #[arg(long = "strategy-it", global = true)]
    strategy_it: Option<InfoTypeStrategy>,

    /// highest | average | lowest
    #[arg(long = "strategy-pri", global = true)]
    strategy_pri: Option<PriorityStrategy>,

    /// Self-training passes over the corpus.
    #[arg(long, global = true)]
    passes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Expand label names into vocabularies.
    Expand,
    /// Assign pseudo-labels to the corpus.
    PseudoLabel,
    /// Train the classifier on the pseudo-labels.
    Train,
    /// Refine a trained model on the whole corpus.
    Selftrain {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Predict labels for the test set (or `--input`).
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score predictions against the test set's gold labels.
    Evaluate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Merge prediction files.
    Merge {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run every stage from expansion to evaluation.
    Run,
    /// Write a generated three-label fixture into a directory.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 300)]
        unlabelled: usize,
        #[arg(long, default_value_t = 300)]
        test: usize,
    },
}

impl Global {
    fn load(&self, require_config: bool) -> anyhow::Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None if require_config => bail!(weaklab::Error::InvalidArgument("--config is required".into())),
            None => {
                let mut c = PipelineConfig::new("", "", 0);
                c.base_dir = PathBuf::from(".");
                c
            }
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(p) = &self.provider {
            config.provider = p.clone();
        }
        if let Some(out) = &self.out {
            config.out = absolute(out)?;
        }
        if let Some(e) = self.epsilon {
            config.epsilon = Some(e);
        }
        if let Some(t) = self.tau {
            config.expansion.tau = t;
        }
        if let Some(l) = self.lambda {
            config.ensemble.lambda = l;
        }
        if let Some(s) = self.strategy_it {
            config.ensemble.info_types = s;
        }
        if let Some(s) = self.strategy_pri {
            config.ensemble.priority = s;
        }
        if let Some(p) = self.passes {
            config.self_training.passes = p;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Flag paths are relative to the working directory, config paths to the
/// config file.
fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    if path.is_absolute() {
        return Ok(path.to_path_buf());
    }
    Ok(std::env::current_dir().context("current directory")?.join(path))
}

fn absolute_opt(path: &Option<PathBuf>) -> anyhow::Result<Option<PathBuf>> {
    path.as_deref().map(absolute).transpose()
}

fn report(outcome: &StageOutcome) {
    for path in &outcome.written {
        println!("{}: wrote {}", outcome.stage, path.display());
    }
    for (key, value) in &outcome.stats {
        println!("{}: {key} = {value}", outcome.stage);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Expand => report(&pipeline::cmd_expand(&g.load(true)?)?),
        Command::PseudoLabel => report(&pipeline::cmd_pseudo_label(&g.load(true)?)?),
        Command::Train => report(&pipeline::cmd_train(&g.load(true)?)?),
        Command::Selftrain { model } => {
            let model = absolute_opt(model)?;
            report(&pipeline::cmd_selftrain(&g.load(true)?, model.as_deref())?)
        }
        Command::Predict { model, input } => {
            let (model, input) = (absolute_opt(model)?, absolute_opt(input)?);
            report(&pipeline::cmd_predict(&g.load(true)?, model.as_deref(), input.as_deref())?)
        }
        Command::Evaluate { input } => {
            let input = absolute_opt(input)?;
            report(&pipeline::cmd_evaluate(&g.load(true)?, input.as_deref())?)
        }
        Command::Merge { inputs } => {
            let inputs = inputs.iter().map(|p| absolute(p)).collect::<anyhow::Result<Vec<_>>>()?;
            report(&pipeline::cmd_merge(&g.load(false)?, &inputs)?)
        }
        Command::Run => {
            let config = g.load(true)?;
            report(&pipeline::cmd_expand(&config)?);
            report(&pipeline::cmd_pseudo_label(&config)?);
            report(&pipeline::cmd_train(&config)?);
            report(&pipeline::cmd_selftrain(&config, None)?);
            report(&pipeline::cmd_predict(&config, None, None)?);
            if config.test.is_some() {
                report(&pipeline::cmd_evaluate(&config, None)?);
            }
        }
        Command::Synth { dir, unlabelled, test } => {
            let spec = SyntheticSpec {
                seed: g.seed.unwrap_or(0),
                unlabelled: *unlabelled,
                test: *test,
                ..SyntheticSpec::default()
            };
            for path in write_fixture(dir, &spec)? {
                println!("synth: wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<weaklab::Error>().map(weaklab::Error::kind) {
        Some(ErrorKind::External) => 3,
        Some(ErrorKind::Internal) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
