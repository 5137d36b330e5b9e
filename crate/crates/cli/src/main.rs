use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simforest::fixture::FixtureOptions;
use simforest::{execute_make_fixture, execute_run, execute_validate, CliStage, Failure, RunOptions};

#[derive(Parser)]
#[command(name = "simforest", version, about = "Literature-pretrained random forests under Monte Carlo cross validation")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "SIMFOREST_THREADS")]
    threads: Option<usize>,

    /// Output directory; overrides the config's out_dir.
    #[arg(long, global = true, env = "SIMFOREST_OUT_DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run MCCV and write records, summary, comparison and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a config and its input files without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic dataset, evidence files and a desk-scale config.
    MakeFixture {
        #[arg(long, default_value_t = 463)]
        seed: u64,
        #[arg(long, default_value_t = 463)]
        rows: usize,
        #[arg(long, default_value_t = 0.72)]
        prevalence: f64,
        #[arg(long, default_value_t = 0.0)]
        label_noise: f64,
        #[arg(long, default_value_t = 0.05)]
        missingness: f64,
    },
}

fn report(f: &Failure) -> ExitCode {
    eprintln!("error{f}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let opts = RunOptions {
        threads: cli.threads.filter(|&t| t > 0),
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Run { config } => match execute_run(&config, &opts) {
            Ok(_) => ExitCode::SUCCESS,
            Err(f) => report(&f),
        },
        Command::Validate { config } => {
            let findings = execute_validate(&config, &opts);
            if findings.is_empty() {
                println!("ok: {} is runnable", config.display());
                ExitCode::SUCCESS
            } else {
                for f in &findings {
                    eprintln!("finding{f}");
                }
                ExitCode::from(1)
            }
        }
        Command::MakeFixture {
            seed,
            rows,
            prevalence,
            label_noise,
            missingness,
        } => {
            let Some(out) = cli.out else {
                return report(&Failure::new(CliStage::Parse, "make-fixture needs --out DIR"));
            };
            let options = FixtureOptions {
                seed,
                rows,
                prevalence,
                label_noise,
                missingness,
            };
            match execute_make_fixture(&out, &options) {
                Ok(_) => ExitCode::SUCCESS,
                Err(f) => report(&f),
            }
        }
    }
}
