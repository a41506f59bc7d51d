use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vvc_core::bench::{self, ExperimentSpec};
use vvc_core::Error;

/// Volt-VAR control benchmark: data generation, training, evaluation, reports.
#[derive(Parser)]
#[command(name = "vvc-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize load series and write the offline transition log.
    GenerateData(SpecArgs),
    /// Pretrain on the offline log, then train online, one run per seed.
    Train(SpecArgs),
    /// Greedy rollout of each seed's checkpoint.
    Evaluate(SpecArgs),
    /// Reward-difference and violation series plus a summary table.
    Report {
        #[arg(long, default_value = "runs/default")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SpecArgs {
    /// Bundled feeder name or path to a feeder TOML file.
    #[arg(long, default_value = "case13_balanced")]
    feeder: String,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
    state_option: u8,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
    reward_option: u8,
    /// `dqn`, or `default` to replay the local control logic.
    #[arg(long, default_value = "dqn")]
    algorithm: String,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Interaction steps per seed.
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    /// Half-hour steps of data.
    #[arg(long, default_value_t = 4032)]
    horizon: usize,
    #[arg(long, default_value = "runs/default")]
    out: PathBuf,
    /// TOML file overriding [solver], [agent], [impute] and [data] defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SpecArgs {
    fn into_spec(self) -> Result<ExperimentSpec, Error> {
        let mut spec = ExperimentSpec::new(&self.feeder, self.out);
        spec.state_option = self.state_option;
        spec.reward_option = self.reward_option;
        spec.algorithm = self.algorithm;
        spec.seeds = self.seeds;
        spec.steps = self.steps;
        spec.horizon = self.horizon;
        if let Some(c) = &self.config {
            spec.apply_config_file(c)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenerateData(a) => {
            let paths = bench::generate_data(&a.into_spec()?)?;
            println!("wrote {}", paths.loads.display());
            println!("wrote {}", paths.offline.display());
        }
        Command::Train(a) => {
            let spec = a.into_spec()?;
            for run in bench::train(&spec)? {
                let tail = &run.metrics[run.metrics.len().saturating_sub(bench::SUMMARY_TAIL)..];
                let mean = tail.iter().map(|m| m.reward_default_delta).sum::<f64>() / tail.len().max(1) as f64;
                println!("seed {}: {} steps, final mean reward delta {mean:.4}", run.seed, run.metrics.len());
            }
        }
        Command::Evaluate(a) => {
            let spec = a.into_spec()?;
            for run in bench::evaluate(&spec)? {
                let mean =
                    run.metrics.iter().map(|m| m.reward_default_delta).sum::<f64>() / run.metrics.len().max(1) as f64;
                println!("seed {}: mean reward delta {mean:.4}", run.seed);
            }
        }
        Command::Report { out } => {
            let (dir, summaries) = bench::report(&out)?;
            for s in &summaries {
                println!(
                    "seed {}: {} ({} steps), final mean delta {:.4}",
                    s.seed, s.status, s.steps, s.mean_delta_final
                );
            }
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
