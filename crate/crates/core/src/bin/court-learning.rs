use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use court_learning::experiment::{self, ExperimentSpec, RunOptions};
use court_learning::Error;

#[derive(Parser)]
#[command(version, about = "Regret experiments for court-information selection policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate regret over the configured horizon sweep; writes regret.csv and slopes.csv.
    Run(CommonArgs),
    /// Run the KWIK policies and report their per-case accuracy; writes kwik.csv.
    Kwik(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per horizon (overrides `replications`).
    #[arg(long)]
    replications: Option<usize>,
    /// Also write every run's ledger to ledgers.jsonl.
    #[arg(long)]
    ledgers: bool,
}

impl CommonArgs {
    fn load(&self) -> Result<(ExperimentSpec, RunOptions), Error> {
        let mut spec = experiment::load_config(&self.config)?;
        if let Some(out) = &self.out {
            spec.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(r) = self.replications {
            spec.replications = r;
        }
        spec.validate()?;
        Ok((spec, RunOptions { ledgers: self.ledgers }))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => args.load().and_then(|(spec, opts)| {
            let out = experiment::run_experiment(&spec, &opts)?;
            for row in &out.slopes {
                match row.slope {
                    Some(s) => println!("{}: log-log regret slope {s:.3}", row.policy),
                    None => println!("{}: regret slope undefined", row.policy),
                }
            }
            Ok(out.files)
        }),
        Command::Kwik(args) => args.load().and_then(|(spec, opts)| {
            let (rows, files) = experiment::kwik_report(&spec, &opts)?;
            for r in &rows {
                println!(
                    "{} T={}: compelled {:.1}, within eps {:.4}",
                    r.policy, r.horizon, r.compelled_count, r.fraction_predictions_within_eps
                );
            }
            Ok(files)
        }),
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
