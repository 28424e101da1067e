//! Seeded Monte Carlo runner.
//!
//! Trial `t` of a sweep with master seed `s` always uses the trial seed
//! [`trial_seed`]`(s, t)`, whatever the method or swept value, so methods are
//! compared on identical channel / fault / combiner / noise realizations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{mix64, ScenarioConfig, TrialRealization};
use crate::baselines::{self, ArrayGeometry, GridOptions};
use crate::detection::{self, TrialScore};
use crate::solver::{self, LassoOptions, SolverConfig};
use crate::{CVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    FullCsi,
    PartialCsi,
    Grid,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::FullCsi, Method::PartialCsi, Method::Grid];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::FullCsi => "full_csi",
            Method::PartialCsi => "partial_csi",
            Method::Grid => "grid",
        }
    }

    /// Whether the method consumes (possibly perturbed) CSI.
    pub fn reads_csi(self) -> bool {
        matches!(self, Method::FullCsi | Method::PartialCsi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected proposed, full_csi, partial_csi or grid)")))
    }
}

/// Method parameters shared by every trial of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSettings {
    pub solver: SolverConfig,
    /// l1 weight of the CSI-based baselines.
    pub baseline_lambda: f64,
    pub baseline_lasso: LassoOptions,
    /// Detection threshold applied to every method.
    pub threshold: f64,
    /// Grid size as a multiple of `N`.
    pub grid_factor: usize,
    pub grid_lasso: LassoOptions,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            baseline_lambda: 0.1,
            baseline_lasso: LassoOptions { rho: 1.0, tol: 1e-6, max_iter: 2000 },
            threshold: detection::DEFAULT_THRESHOLD,
            grid_factor: 4,
            grid_lasso: LassoOptions { rho: 1.0, tol: 1e-6, max_iter: 5000 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub score: TrialScore,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_s: f64,
}

/// Counter-based trial seed, so trials need no coordination.
pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    mix64(master_seed ^ mix64(trial.wrapping_add(0x5eed)))
}

pub fn run_trial(cfg: &ScenarioConfig, method: Method, seed: u64, settings: &MethodSettings) -> Result<TrialOutcome> {
    let realization = TrialRealization::sample(cfg, seed)?;
    run_method(&realization, cfg, method, settings)
}

/// Runs one method on an already drawn realization and scores it.
pub fn run_method(t: &TrialRealization, cfg: &ScenarioConfig, method: Method, settings: &MethodSettings) -> Result<TrialOutcome> {
    let geometry = ArrayGeometry { n_antennas: cfg.n_antennas, element_spacing: cfg.element_spacing };
    let meas = &t.measurements;
    let start = Instant::now();
    let (h_hat, hf_hat, iterations, converged) = match method {
        Method::Proposed => {
            let r = solver::diagnose(meas, &settings.solver)?;
            (Some(r.h_hat), r.hf_hat, r.iterations, r.converged)
        }
        Method::FullCsi => {
            let r = baselines::full_csi_diagnose(meas, &t.csi, settings.baseline_lambda, &geometry, settings.baseline_lasso)?;
            let h = geometry.steering_matrix(&t.csi.aoas) * CVector::from_column_slice(&t.csi.gains);
            (Some(h), r.x, r.iterations, r.converged)
        }
        Method::PartialCsi => {
            let r = baselines::partial_csi_diagnose(meas, &t.csi.aoas, settings.baseline_lambda, &geometry, settings.baseline_lasso)?;
            (None, r.x, r.iterations, r.converged)
        }
        Method::Grid => {
            let opts = GridOptions {
                grid: settings.grid_factor.max(1) * cfg.n_antennas,
                tau: settings.solver.atomic_weight(cfg.n_antennas),
                lambda: settings.solver.lambda,
                element_spacing: cfg.element_spacing,
                lasso: settings.grid_lasso,
            };
            let r = baselines::joint_grid_diagnose(meas, &opts)?;
            (Some(r.h_hat), r.hf_hat, r.iterations, r.converged)
        }
    };
    let runtime_s = start.elapsed().as_secs_f64();
    let verdict = detection::classify_faults(&hf_hat, settings.threshold)?;
    let mut score = detection::score_trial(&verdict, &t.faults, h_hat.as_ref().unwrap_or(&t.channel.h), &t.channel.h)?;
    if h_hat.is_none() {
        // the projection scheme never estimates the channel
        score.channel_nmse = f64::NAN;
    }
    Ok(TrialOutcome { score, iterations, converged, runtime_s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParam {
    NMeasurements,
    SnrDb,
    GainErrorIntensity,
    AoaErrorIntensity,
    NPaths,
}

impl SweptParam {
    pub fn name(self) -> &'static str {
        match self {
            SweptParam::NMeasurements => "n_measurements",
            SweptParam::SnrDb => "snr_db",
            SweptParam::GainErrorIntensity => "gain_error_intensity",
            SweptParam::AoaErrorIntensity => "aoa_error_intensity",
            SweptParam::NPaths => "n_paths",
        }
    }

    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweptParam::NMeasurements => cfg.n_measurements = count()?,
            SweptParam::NPaths => cfg.n_paths = count()?,
            SweptParam::SnrDb => cfg.snr_db = value,
            SweptParam::GainErrorIntensity => cfg.gain_error_intensity = value,
            SweptParam::AoaErrorIntensity => cfg.aoa_error_intensity = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn is_csi_error(self) -> bool {
        matches!(self, SweptParam::GainErrorIntensity | SweptParam::AoaErrorIntensity)
    }
}

fn default_trials() -> usize {
    200
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub param: SweptParam,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub settings: MethodSettings,
    /// Record wall-clock time per trial. Disable for byte-reproducible CSVs.
    #[serde(default = "default_true")]
    pub timing: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep has no values".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("sweep has no methods".into()));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be >= 1".into()));
        }
        self.settings.solver.validate()?;
        for &v in &self.values {
            self.param.apply(&self.base, v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_structured(path)
    }
}

/// Reads TOML, or JSON when the extension is `.json`.
pub fn load_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Ok(serde_json::from_str(&text)?)
    } else {
        Ok(toml::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub swept_param: String,
    pub swept_value: f64,
    pub success_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_nmse: f64,
    pub mean_iterations: f64,
    pub mean_runtime_s: f64,
    pub n_trials: usize,
}

pub const CSV_COLUMNS: [&str; 10] = [
    "method",
    "swept_param",
    "swept_value",
    "success_rate",
    "ci_low",
    "ci_high",
    "mean_nmse",
    "mean_iterations",
    "mean_runtime_s",
    "n_trials",
];

/// Reduces per-trial outcomes (indexed by trial number) to one row.
pub fn aggregate(method: Method, param: &str, value: f64, outcomes: &[TrialOutcome], timing: bool) -> ResultRow {
    let n = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.score.success).count();
    let (ci_low, ci_high) = detection::wilson_interval(successes, n, detection::Z_95);
    let mean = |f: &dyn Fn(&TrialOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n as f64;
    ResultRow {
        method: method.name().to_string(),
        swept_param: param.to_string(),
        swept_value: value,
        success_rate: successes as f64 / n as f64,
        ci_low,
        ci_high,
        mean_nmse: mean(&|o| o.score.channel_nmse),
        mean_iterations: mean(&|o| o.iterations as f64),
        mean_runtime_s: if timing { mean(&|o| o.runtime_s) } else { 0.0 },
        n_trials: n,
    }
}

fn run_trials(
    cfg: &ScenarioConfig,
    methods: &[Method],
    n_trials: usize,
    master_seed: u64,
    settings: &MethodSettings,
) -> Result<Vec<Vec<TrialOutcome>>> {
    // per_trial[t][m]
    let per_trial: Vec<Vec<TrialOutcome>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let realization = TrialRealization::sample(cfg, trial_seed(master_seed, t))?;
            methods.iter().map(|&m| run_method(&realization, cfg, m, settings)).collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..methods.len()).map(|m| per_trial.iter().map(|row| row[m]).collect()).collect())
}

/// Single-point Monte Carlo for one method.
pub fn run_point(cfg: &ScenarioConfig, method: Method, n_trials: usize, master_seed: u64, settings: &MethodSettings) -> Result<ResultRow> {
    cfg.validate()?;
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be >= 1".into()));
    }
    let outcomes = run_trials(cfg, &[method], n_trials, master_seed, settings)?;
    Ok(aggregate(method, "none", 0.0, &outcomes[0], true))
}

/// One row per (method, value), methods in `methods` order within each value.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    // CSI-blind methods are unaffected by a CSI-error sweep: run them once.
    let mut blind_cache: Option<Vec<Vec<TrialOutcome>>> = None;
    let blind: Vec<Method> = spec.methods.iter().copied().filter(|m| !m.reads_csi()).collect();
    for &value in &spec.values {
        let cfg = spec.param.apply(&spec.base, value)?;
        let (reuse, to_run): (bool, Vec<Method>) = if spec.param.is_csi_error() && blind_cache.is_some() {
            (true, spec.methods.iter().copied().filter(|m| m.reads_csi()).collect())
        } else {
            (false, spec.methods.clone())
        };
        let fresh = run_trials(&cfg, &to_run, spec.n_trials, spec.master_seed, &spec.settings)?;
        if spec.param.is_csi_error() && !reuse {
            blind_cache = Some(
                blind
                    .iter()
                    .map(|b| fresh[to_run.iter().position(|m| m == b).expect("blind method was run")].clone())
                    .collect(),
            );
        }
        for &m in &spec.methods {
            let outcomes = match to_run.iter().position(|&x| x == m) {
                Some(i) => &fresh[i],
                None => &blind_cache.as_ref().expect("cache filled on first value")[blind.iter().position(|&b| b == m).expect("blind")],
            };
            rows.push(aggregate(m, spec.param.name(), value, outcomes, spec.timing));
        }
    }
    Ok(rows)
}

pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    // serialize() emits the header from the field names, which equal CSV_COLUMNS
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
