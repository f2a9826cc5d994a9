//! `fedpower` command-line experiment runner.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedpower::experiment::{
    compare_baselines, inspect_dataset, privacy_sweep, run_experiment, ExperimentConfig,
    SweepOutcome,
};
use fedpower::Error;

#[derive(Parser, Debug)]
#[command(name = "fedpower", version, about = "Federated power-method experiments")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true, env = "FEDPOWER_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write its trace CSV.
    Run(Common),
    /// Compare FedPower variants with the one-shot baselines.
    Compare(Common),
    /// Run the experiment once per privacy budget.
    PrivacySweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ε values; `inf` disables noise.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Also write one trace per ε into this directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Print dataset statistics as JSON.
    InspectDataset(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when neither this nor the config names one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repeat: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Number of workers.
    #[arg(long)]
    m: Option<usize>,
    /// Fill the wall_ms column.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        if let Some(repeat) = self.repeat {
            cfg.repeat = repeat;
        }
        if let Some(t) = self.iterations {
            cfg.run.iterations = t;
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        cfg.timing |= self.timing;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::from(e).context(format!("writing {}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let err = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{err}");
    ExitCode::FAILURE
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let trace = run_experiment(&cfg)?;
            emit(cfg.output.as_deref(), &trace.to_csv())
        }
        Command::Compare(c) => {
            let cfg = c.load()?;
            let table = compare_baselines(&cfg)?;
            emit(cfg.output.as_deref(), &table.to_csv())
        }
        Command::PrivacySweep {
            common,
            eps,
            trace_dir,
        } => {
            let cfg = common.load()?;
            let sweep = privacy_sweep(&cfg, &eps)?;
            if let Some(dir) = &trace_dir {
                fs::create_dir_all(dir)?;
                for e in &sweep.entries {
                    if let SweepOutcome::Completed { trace, .. } = &e.outcome {
                        fs::write(dir.join(format!("eps_{}.csv", e.epsilon)), trace.to_csv())?;
                    }
                }
            }
            emit(cfg.output.as_deref(), &sweep.to_csv())?;
            let failed: Vec<String> = sweep
                .entries
                .iter()
                .filter_map(|e| match &e.outcome {
                    SweepOutcome::Failed { message, .. } => Some(format!("ε={}: {message}", e.epsilon)),
                    SweepOutcome::Completed { .. } => None,
                })
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::InvalidBudget(failed.join("; ")))
            }
        }
        Command::InspectDataset(c) => {
            let cfg = c.load()?;
            let report = inspect_dataset(&cfg)?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            emit(cfg.output.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.to_string().trim()),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("InvalidConfig", &e.to_string());
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
