use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use moflp_cli::config::{parse_scale, Overrides};
use moflp_cli::{ExperimentConfig, Pipeline, Step, SweepAxis};
use moflp_core::dataset::FeatureVariant;

/// Multi-objective facility location: NSGA-II labels, a dual graph
/// convolutional model and one-shot sampling, with a cached pipeline.
#[derive(Parser)]
#[command(name = "moflp", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (TOML); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed of every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root of every stage's artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Restrict to one scale, written MxN; repeatable.
    #[arg(long, global = true, value_parser = scale_arg)]
    scale: Vec<[usize; 2]>,
    /// Restrict to a feature variant (A or B); repeatable.
    #[arg(long, global = true)]
    variant: Vec<FeatureVariant>,
    /// NSGA-II budgets for compare, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    budget: Vec<usize>,
    /// Solutions sampled per test instance.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Rebuild stages whose cached artifacts came from another configuration.
    #[arg(long, global = true)]
    force: bool,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random instances.
    Gen,
    /// Approximate each instance's Pareto front with NSGA-II.
    Solve,
    /// Derive node and edge labels from the fronts.
    Label,
    /// Split instances into train, validation and test sets.
    Split,
    /// Train the node and edge networks.
    Train,
    /// Sample a front for every test instance from the trained model.
    Predict,
    /// HV and IGD of the sampled fronts against the label fronts.
    Eval,
    /// Compare the model with NSGA-II at each budget and with random search.
    Compare,
    /// Train one model per hidden width or layer count and summarise.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        /// Values to sweep; defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
    },
    /// Run every stage, reusing cached artifacts.
    Pipeline,
    /// Print the effective configuration as TOML.
    Config,
}

fn scale_arg(text: &str) -> Result<[usize; 2], String> {
    parse_scale(text).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    Overrides {
        seed: g.seed,
        out_dir: g.out_dir,
        scales: g.scale,
        variants: g.variant,
        budgets: g.budget,
        samples: g.samples,
        workers: g.workers,
    }
    .apply(&mut cfg)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let out_dir = cfg.out_dir.clone();
    let mut pipeline = Pipeline::new(cfg, g.force)?.with_progress(!g.quiet);
    let result = match cli.command {
        Command::Gen => pipeline.run_step(Step::Gen),
        Command::Solve => pipeline.run_step(Step::Solve),
        Command::Label => pipeline.run_step(Step::Label),
        Command::Split => pipeline.run_step(Step::Split),
        Command::Train => pipeline.run_step(Step::Train),
        Command::Predict => pipeline.run_step(Step::Predict),
        Command::Eval => pipeline.run_step(Step::Eval),
        Command::Compare => pipeline.run_step(Step::Compare),
        Command::Sweep { axis, values } => {
            let values = (!values.is_empty()).then_some(values);
            pipeline.sweep(axis, values).map(|dirs| {
                for d in dirs {
                    println!("sweep report in {}", d.display());
                }
            })
        }
        Command::Pipeline => pipeline.run_all(),
        Command::Config => unreachable!(),
    };
    for e in pipeline.events() {
        println!("{:<8} {}", if e.ran { "ran" } else { "cached" }, e.key);
    }
    result?;
    println!("outputs in {}", out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
