use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eki_core::harness::{self, ExperimentConfig};
use eki_core::{Error, Exec};

#[derive(Parser)]
#[command(name = "eki", version, about = "Ensemble Kalman inversion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every initialization of an experiment (config or manifest).
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write prior realizations as gridded CSV.
    SamplePrior {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a config and print it with all defaults filled in.
    Validate { config: PathBuf },
    /// Summarize a finished run directory.
    Report { run_dir: PathBuf },
}

#[derive(Args)]
struct Overrides {
    /// Master seed (at most 2^63 - 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    parallel: Option<u64>,
    /// Maximum number of EKI iterations.
    #[arg(long)]
    max_iter: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) -> eki_core::Result<()> {
        if let Some(s) = self.seed {
            config.run.seed = Some(s);
        }
        if let Some(d) = &self.out_dir {
            config.run.out_dir = Some(d.clone());
        }
        if let Some(m) = self.max_iter {
            config.eki.max_iter = Some(m);
        }
        config.resolve()
    }

    fn exec(&self) -> eki_core::Result<Exec> {
        match self.parallel {
            None => Ok(Exec::default()),
            Some(1) => Ok(Exec::Sequential),
            Some(n) => thread_pool(n as usize),
        }
    }
}

#[cfg(feature = "parallel")]
fn thread_pool(n: usize) -> eki_core::Result<Exec> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(Exec::Parallel)
}

#[cfg(not(feature = "parallel"))]
fn thread_pool(_: usize) -> eki_core::Result<Exec> {
    eprintln!("warning: built without the `parallel` feature, running sequentially");
    Ok(Exec::Sequential)
}

fn load(path: &Path, overrides: &Overrides) -> eki_core::Result<ExperimentConfig> {
    let mut config = harness::load_run_input(path)?;
    overrides.apply(&mut config)?;
    Ok(config)
}

fn execute(command: Command) -> eki_core::Result<()> {
    match command {
        Command::Run { config, overrides } => {
            let exec = overrides.exec()?;
            let config = load(&config, &overrides)?;
            let manifest = harness::run_experiment(&config, exec)?;
            let out = config.run.out_dir.as_ref().unwrap();
            for init in &manifest.initializations {
                let f = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4e}"));
                println!(
                    "init {:02}: {} after {} iterations, misfit {}, rel. error {}",
                    init.index,
                    init.stop,
                    init.iterations,
                    f(init.final_misfit),
                    f(init.final_rel_error)
                );
                if let Some(d) = &init.diagnostic {
                    eprintln!("init {:02}: {d}", init.index);
                }
            }
            println!("wrote {}", out.join("manifest.toml").display());
        }
        Command::SamplePrior { config, overrides } => {
            let config = load(&config, &overrides)?;
            let out = overrides
                .out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("prior_samples"));
            for f in harness::sample_prior(&config, &out)? {
                println!("{}", f.display());
            }
        }
        Command::Validate { config } => {
            let config = harness::load_run_input(&config)?;
            print!("{}", config.to_toml_string());
        }
        Command::Report { run_dir } => {
            let summary = harness::report(&run_dir)?;
            print!("{}", summary.to_table());
            println!("wrote {}", run_dir.join("summary.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
