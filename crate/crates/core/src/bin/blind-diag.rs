use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use blind_diag::array_model::{MeasurementFile, MeasurementSet, ScenarioConfig};
use blind_diag::detection::{self, classify_faults};
use blind_diag::harness::{self, load_structured, Method, MethodSettings, SweepSpec};
use blind_diag::solver::{self, SolverConfig};
use blind_diag::{selftest, CVector, Error, Result};

#[derive(Parser)]
#[command(name = "blind-diag", version, about = "Blind fault diagnosis for mmWave antenna arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-point Monte Carlo for one method.
    Simulate {
        /// Scenario file (TOML, or JSON by extension); may carry a [settings] table.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full parameter sweep.
    Sweep {
        /// Sweep spec (TOML, or JSON by extension). A written manifest is a valid spec.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the resolved sweep spec as JSON for later reruns.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run the blind solver on an externally supplied (F, y).
    Diagnose {
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional solver settings file (TOML/JSON, SolverConfig fields).
        #[arg(long)]
        solver: Option<PathBuf>,
        #[arg(long, default_value_t = detection::DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Deserialize)]
struct ScenarioFile {
    #[serde(flatten)]
    scenario: ScenarioConfig,
    #[serde(default)]
    settings: MethodSettings,
}

#[derive(Serialize)]
struct DiagnoseOutput {
    h_hat: Vec<[f64; 2]>,
    hf_hat: Vec<[f64; 2]>,
    faulty: Vec<usize>,
    states: Vec<bool>,
    magnitudes: Vec<f64>,
    threshold: f64,
    converged: bool,
    iterations: usize,
    primal_residual: f64,
    objective: f64,
}

fn pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, method, trials, seed, out } => {
            let file: ScenarioFile = load_structured(&config)?;
            let method: Method = method.parse()?;
            let row = harness::run_point(&file.scenario, method, trials, seed, &file.settings)?;
            harness::write_csv(std::slice::from_ref(&row), create(&out)?)?;
            eprintln!(
                "{}: success {:.3} [{:.3}, {:.3}] over {} trials",
                row.method, row.success_rate, row.ci_low, row.ci_high, row.n_trials
            );
        }
        Command::Sweep { config, out, manifest } => {
            let spec = SweepSpec::load(&config)?;
            spec.validate()?;
            if let Some(path) = manifest {
                let mut w = create(&path)?;
                serde_json::to_writer_pretty(&mut w, &spec)?;
                w.flush()?;
            }
            let rows = harness::run_sweep(&spec)?;
            harness::write_csv(&rows, create(&out)?)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Diagnose { measurements, out, solver: solver_path, threshold } => {
            let file: MeasurementFile = serde_json::from_reader(File::open(&measurements)?)?;
            let meas = MeasurementSet::try_from(file)?;
            let cfg: SolverConfig = match solver_path {
                Some(p) => load_structured(&p)?,
                None => SolverConfig::default(),
            };
            let res = solver::diagnose(&meas, &cfg)?;
            let verdict = classify_faults(&res.hf_hat, threshold)?;
            let output = DiagnoseOutput {
                h_hat: pairs(&res.h_hat),
                hf_hat: pairs(&res.hf_hat),
                faulty: verdict.flagged(),
                states: verdict.states,
                magnitudes: verdict.magnitudes,
                threshold,
                converged: res.converged,
                iterations: res.iterations,
                primal_residual: res.primal_residual,
                objective: res.objective,
            };
            let mut w = create(&out)?;
            serde_json::to_writer_pretty(&mut w, &output)?;
            w.flush()?;
        }
        Command::Selftest => {
            let results = selftest::run_all();
            for r in &results {
                println!("{} {:<18} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_) | Error::Parse(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
