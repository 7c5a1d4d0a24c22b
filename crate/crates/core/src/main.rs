use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use beamsplit::harness::{self, scenario, selftest, Estimator, ExperimentConfig, Preset, SweepAxis};
use beamsplit::Result;

#[derive(Parser)]
#[command(
    name = "beamsplit",
    version,
    about = "Wideband beam-split channel estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep of estimator error, written as CSV.
    Sweep(Common),
    /// Ground-truth Cramér-Rao bounds over the sweep, written as CSV.
    Crb(Common),
    /// Single-instance scenario files.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Quick invariant checks.
    Selftest,
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Draws one channel and observation and stores them as JSON.
    Gen(Common),
    /// Runs the estimators stored in a scenario file.
    Run { file: PathBuf },
}

#[derive(Args, Clone)]
struct Common {
    /// Flat TOML file with configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base parameter set: desk or paper.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated list, e.g. sbce,ls,omp,mmse.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Estimator>>,
    /// snr, bandwidth, range or none.
    #[arg(long)]
    sweep: Option<SweepAxis>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p)?),
            None => None,
        };
        let from_file = match &text {
            Some(t) => ExperimentConfig::preset_in_toml(t)?,
            None => None,
        };
        let base = ExperimentConfig::preset(self.preset.or(from_file).unwrap_or(Preset::Desk));
        let mut cfg = match &text {
            Some(t) => base.merge_toml(t)?,
            None => base,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(e) = &self.estimators {
            cfg.estimators = e.clone();
        }
        if let Some(s) = self.sweep {
            cfg.sweep = s;
        }
        if let Some(v) = &self.values {
            cfg.values = v.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.out.is_some() {
            cfg.output_path = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    match &cfg.output_path {
        Some(p) => harness::write_csv(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep(c) => {
            let cfg = c.resolve()?;
            let rows = harness::run_sweep(&cfg)?;
            emit(&cfg, &harness::to_csv(&cfg, &rows))?;
            let flagged: Vec<_> = rows.iter().filter(|r| r.flagged).collect();
            for r in &flagged {
                eprintln!(
                    "flagged: {} at {} ({} of {} failed)",
                    r.estimator, r.sweep_value, r.failures, r.trials
                );
            }
            Ok(if flagged.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Crb(c) => {
            let cfg = c.resolve()?;
            let rows = harness::run_bounds(&cfg)?;
            emit(&cfg, &harness::bounds_csv(&cfg, &rows))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario(ScenarioCmd::Gen(c)) => {
            let cfg = c.resolve()?;
            let s = scenario::generate(&cfg)?;
            match &c.out {
                Some(p) => scenario::save(p, &s)?,
                None => println!("{}", serde_json::to_string_pretty(&s)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario(ScenarioCmd::Run { file }) => {
            let s = scenario::load(&file)?;
            println!("estimator,nmse,direction_sine,iterations,converged");
            for r in scenario::run(&s)? {
                let opt = |v: Option<String>| v.unwrap_or_default();
                println!(
                    "{},{:e},{},{},{}",
                    r.estimator,
                    r.nmse,
                    opt(r.direction_sine.map(|v| format!("{v:e}"))),
                    opt(r.iterations.map(|v| v.to_string())),
                    opt(r.converged.map(|v| v.to_string())),
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let mut ok = true;
            for c in selftest::run_all() {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
