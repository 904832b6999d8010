use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use poifair::pipeline::{run_pipeline, ExperimentConfig, Goal, RunSummary};
use poifair::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "poifair",
    version,
    about = "POI recommendation and temporal fairness experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and filter the dataset; writes the filtered TSVs and statistics.
    Preprocess(StageArgs),
    /// Split and compute temporal profiles, groups and correlations.
    Analyze(StageArgs),
    /// Fit the models and write top-N recommendations.
    Recommend(StageArgs),
    /// Evaluate the recommendations and write the results table.
    Evaluate(StageArgs),
    /// Evaluate plus the weighted-sum grid search on the validation split.
    Sweep(StageArgs),
    /// Every stage.
    Run(StageArgs),
    /// Write a synthetic dataset and a matching config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `threads` from the config.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 800)]
    pois: usize,
}

fn load_config(args: &StageArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg =
        ExperimentConfig::load(&args.config).with_context(|| format!("loading config {}", args.config.display()))?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    Ok(cfg)
}

fn print_summary(s: &RunSummary) {
    for r in &s.reports {
        for row in r.table_rows() {
            let acc = row.acc_unf.map_or("undefined".to_owned(), |v| format!("{v:.4}"));
            println!(
                "{:<8} {:<28} @{:<3} Pre {:.4} Rec {:.4} nDCG {:.4} L {:.4} W {:.4} dnDCG {:.4} Acc/Unf {}",
                row.model,
                row.fusion,
                row.cutoff,
                row.precision,
                row.recall,
                row.ndcg,
                row.ndcg_leisure,
                row.ndcg_working,
                row.delta_ndcg,
                acc
            );
        }
    }
    println!("wrote {} artifacts to {}", s.artifacts.len(), s.out_dir.display());
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        n_users: args.users,
        n_pois: args.pois,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let (dataset, _) = generate(&cfg)?.into_dataset()?;
    dataset.write_tsv(&args.out)?;
    let experiment = ExperimentConfig {
        checkins: PathBuf::from("checkins.tsv"),
        pois: PathBuf::from("pois.tsv"),
        social: Some(PathBuf::from("social.tsv")),
        min_user_checkins: 10,
        min_poi_checkins: 5,
        out_dir: PathBuf::from("out"),
        seed: args.seed,
        ..ExperimentConfig::default()
    };
    let path = args.out.join("config.json");
    let mut text = serde_json::to_string_pretty(&experiment)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "wrote {} users, {} POIs, {} check-ins to {}",
        dataset.n_users(),
        dataset.n_pois(),
        dataset.checkins().len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (args, goal) = match &cli.command {
        Command::Preprocess(a) => (a, Goal::Preprocess),
        Command::Analyze(a) => (a, Goal::Analyze),
        Command::Recommend(a) => (a, Goal::Recommend),
        Command::Evaluate(a) => (a, Goal::Evaluate),
        Command::Sweep(a) => (a, Goal::Sweep),
        Command::Run(a) => (a, Goal::Run),
        Command::Synth(a) => {
            return match synth(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(4)
                }
            };
        }
    };
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run_pipeline(&cfg, goal) {
        Ok(summary) => {
            print_summary(&summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
