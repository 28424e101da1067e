//! Quick invariant checks run by the `selftest` subcommand.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::array_model::{mix64, ChannelRealization, ScenarioConfig, TrialRealization};
use crate::baselines::{grid_angle, joint_grid_diagnose, GridOptions};
use crate::detection::classify_faults;
use crate::solver::{self, LassoOptions, SolverConfig};
use crate::spectral;
use crate::{CMatrix, CVector, Result, C64};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_cvec(rng: &mut impl Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_cmat(rng: &mut impl Rng, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Worst relative error of the Toeplitz adjoint identity over random pairs.
pub fn adjoint_identity_error(pairs: usize, max_n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let n = rng.random_range(2..=max_n);
        let mut u = random_cvec(&mut rng, n);
        u[0].im = 0.0;
        let m = spectral::hermitian_part(&random_cmat(&mut rng, n, n));
        let lhs = spectral::real_inner(&spectral::toeplitz(&u)?, &m);
        let s = spectral::toeplitz_adjoint(&m)?;
        let rhs = u[0].re * s[0].re + 2.0 * (1..n).map(|i| (u[i].conj() * s[i]).re).sum::<f64>();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    Ok(worst)
}

/// Worst violation of the PSD projection contract: returns
/// `(optimality_violations, worst_idempotence_error)`.
pub fn psd_projection_check(inputs: usize, candidates: usize, max_n: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..inputs {
        let n = rng.random_range(1..=max_n);
        let h = spectral::hermitian_part(&random_cmat(&mut rng, n, n));
        let p = spectral::project_psd(&h)?;
        let best = (&p - &h).norm();
        for _ in 0..candidates {
            let rank = rng.random_range(1..=n);
            let a = random_cmat(&mut rng, n, rank);
            let cand = &a * a.adjoint() * C64::new(rng.random_range(0.0..1.0), 0.0);
            if (&cand - &h).norm() < best - 1e-12 {
                violations += 1;
            }
        }
        let pp = spectral::project_psd(&p)?;
        worst = worst.max((&pp - &p).norm() / p.norm().max(1.0));
    }
    Ok((violations, worst))
}

/// Worst LASSO certificate ratio over random instances.
pub fn lasso_kkt_check(instances: usize, k: usize, n: usize, lambda: f64, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = LassoOptions { rho: 1.0, tol: 1e-10, max_iter: 50_000 };
    let (mut ratio, mut phase): (f64, f64) = (0.0, 0.0);
    for _ in 0..instances {
        let a = random_cmat(&mut rng, k, n);
        let b = random_cvec(&mut rng, k);
        let x = solver::lasso(&a, &b, lambda, opts)?.x;
        let cert = solver::lasso_certificate(&a, &b, &DVector::from_element(n, lambda), &x);
        ratio = ratio.max(cert.max_correlation_ratio);
        phase = phase.max(cert.max_phase_error);
    }
    Ok((ratio, phase))
}

/// Outcome of one blind-solver vs grid-oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub seed: u64,
    pub solver_support: Vec<usize>,
    pub grid_support: Vec<usize>,
    pub true_support: Vec<usize>,
    pub solver_objective: f64,
    pub grid_objective: f64,
}

impl OracleComparison {
    pub fn relative_gap(&self) -> f64 {
        (self.solver_objective - self.grid_objective).abs() / self.grid_objective.abs().max(1e-12)
    }

    pub fn agrees(&self, rel_tol: f64) -> bool {
        self.solver_support == self.grid_support && self.relative_gap() <= rel_tol
    }
}

/// Noiseless `N = K` instance with one on-grid path and one unit-amplitude
/// fault, solved by both the ADMM solver and the joint grid LASSO over the
/// same grid.
pub fn grid_oracle_instance(n: usize, grid: usize, seed: u64, solver_cfg: &SolverConfig, threshold: f64) -> Result<OracleComparison> {
    let cfg = ScenarioConfig {
        n_antennas: n,
        n_measurements: n,
        n_paths: 1,
        n_faults: 1,
        noiseless: true,
        fault_amp_range: [1.0, 1.0],
        ..Default::default()
    };
    let mut t = TrialRealization::sample(&cfg, seed)?;
    let node = (mix64(seed) % grid as u64) as usize;
    let chan = ChannelRealization::from_paths(t.channel.gains.clone(), vec![grid_angle(node, grid)], n, cfg.element_spacing)?;
    t.measurements.y = &t.measurements.f * (&chan.h + &t.faults.h_f);

    let res = solver::diagnose(&t.measurements, solver_cfg)?;
    let opts = GridOptions {
        grid,
        tau: solver_cfg.atomic_weight(n),
        lambda: solver_cfg.lambda,
        element_spacing: cfg.element_spacing,
        lasso: LassoOptions { rho: 1.0, tol: 1e-9, max_iter: 50_000 },
    };
    let g = joint_grid_diagnose(&t.measurements, &opts)?;
    Ok(OracleComparison {
        seed,
        solver_support: classify_faults(&res.hf_hat, threshold)?.flagged(),
        grid_support: classify_faults(&g.hf_hat, threshold)?.flagged(),
        true_support: t.faults.support,
        solver_objective: res.objective,
        grid_objective: g.objective,
    })
}

pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        out.push(CheckResult { name, passed, detail });
    };

    push("adjoint identity", adjoint_identity_error(200, 16, 1).map(|e| (e <= 1e-9, format!("max rel err {e:.2e}"))));
    push(
        "psd projection",
        psd_projection_check(40, 20, 12, 2).map(|(v, e)| (v == 0 && e <= 1e-10, format!("{v} better candidates, idempotence err {e:.2e}"))),
    );
    push(
        "lasso kkt",
        lasso_kkt_check(10, 8, 16, 0.2, 3).map(|(r, p)| (r <= 1.0 + 1e-4 && p <= 1e-3, format!("max ratio {r:.6}, phase err {p:.2e}"))),
    );
    push("grid oracle", {
        let cfg = SolverConfig { primal_tol: 1e-4, max_iter: 20_000, ..Default::default() };
        (0..3u64)
            .map(|s| grid_oracle_instance(8, 128, s, &cfg, crate::detection::DEFAULT_THRESHOLD))
            .collect::<Result<Vec<_>>>()
            .map(|cmp| {
                let worst = cmp.iter().map(OracleComparison::relative_gap).fold(0.0, f64::max);
                (cmp.iter().all(|c| c.agrees(1e-2)), format!("max objective gap {worst:.2e}"))
            })
    });
    out
}
