//! Blind joint recovery of the channel and the fault deviation.
//!
//! Solves
//!
//! ```text
//! min_{h, h_f}  1/2 ||y - F (h + h_f)||^2 + tau ||h||_A + lambda ||h_f||_1
//! ```
//!
//! where `||.||_A` is the atomic norm over steering vectors, through its
//! Toeplitz SDP lift and ADMM. Each outer iteration updates `v`, `u`, `h` in
//! closed form, `h_f` through an inner LASSO, the split variable `Z` by PSD
//! projection, and finally the multiplier.

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::array_model::MeasurementSet;
use crate::spectral::{self, LiftedMatrix};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Proximal operator of `kappa |.|` on a complex scalar.
pub fn soft_threshold(c: C64, kappa: f64) -> C64 {
    let mag = c.norm();
    if mag <= kappa || mag == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        c * ((mag - kappa) / mag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { rho: 1.0, tol: 1e-6, max_iter: 500 }
    }
}

impl LassoOptions {
    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.tol > 0.0 && self.max_iter >= 1) {
            return Err(Error::Config(format!("invalid LASSO options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LassoResult {
    pub x: CVector,
    pub converged: bool,
    pub iterations: usize,
}

/// ADMM warm start: primal `z` and scaled dual `w`.
#[derive(Debug, Clone)]
pub struct LassoWarmStart {
    pub z: CVector,
    pub w: CVector,
}

impl LassoWarmStart {
    pub fn zeros(n: usize) -> Self {
        Self { z: CVector::zeros(n), w: CVector::zeros(n) }
    }
}

/// Weighted complex LASSO `1/2 ||b - A x||^2 + sum_i weights[i] |x_i|` solved by
/// ADMM with the `(A^H A + rho I)^{-1}` factor computed once.
#[derive(Debug, Clone)]
pub struct LassoOperator {
    a: CMatrix,
    a_adj: CMatrix,
    inverse: CMatrix,
    opts: LassoOptions,
}

impl LassoOperator {
    pub fn new(a: &CMatrix, opts: LassoOptions) -> Result<Self> {
        opts.validate()?;
        let a_adj = a.adjoint();
        let n = a.ncols();
        let gram = &a_adj * a + CMatrix::identity(n, n) * C64::new(opts.rho, 0.0);
        let inverse = Cholesky::new(gram)
            .ok_or_else(|| Error::Numerical("LASSO system matrix is not positive definite".into()))?
            .inverse();
        Ok(Self { a: a.clone(), a_adj, inverse, opts })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.a
    }

    pub fn solve(&self, b: &CVector, lambda: f64) -> Result<LassoResult> {
        let n = self.a.ncols();
        let weights = DVector::from_element(n, lambda);
        self.solve_weighted(b, &weights, &mut LassoWarmStart::zeros(n))
    }

    pub fn solve_weighted(&self, b: &CVector, weights: &DVector<f64>, warm: &mut LassoWarmStart) -> Result<LassoResult> {
        let n = self.a.ncols();
        if b.len() != self.a.nrows() || weights.len() != n || warm.z.len() != n || warm.w.len() != n {
            return Err(Error::Dimension(format!(
                "LASSO with {}x{} matrix got b of length {}, {} weights",
                self.a.nrows(),
                n,
                b.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Domain("LASSO weights must be nonnegative".into()));
        }
        let rho = self.opts.rho;
        let tol = self.opts.tol;
        let sqrt_n = (n as f64).sqrt();
        let base = &self.inverse * (&self.a_adj * b);
        let rho_c = C64::new(rho, 0.0);

        let mut z = warm.z.clone();
        let mut w = warm.w.clone();
        let mut converged = false;
        let mut iterations = 0;
        let mut rhs = CVector::zeros(n);
        let mut x = CVector::zeros(n);
        while iterations < self.opts.max_iter {
            iterations += 1;
            rhs.copy_from(&z);
            rhs -= &w;
            x.copy_from(&base);
            x.gemv(rho_c, &self.inverse, &rhs, C64::new(1.0, 0.0));

            let mut dz = 0.0;
            for i in 0..n {
                let zi = soft_threshold(x[i] + w[i], weights[i] / rho);
                dz += (zi - z[i]).norm_sqr();
                z[i] = zi;
            }
            let mut r = 0.0;
            for i in 0..n {
                let d = x[i] - z[i];
                w[i] += d;
                r += d.norm_sqr();
            }
            let eps_pri = tol * (sqrt_n + x.norm().max(z.norm()));
            let eps_dual = tol * (sqrt_n + rho * w.norm());
            if r.sqrt() <= eps_pri && rho * dz.sqrt() <= eps_dual {
                converged = true;
                break;
            }
        }
        warm.z.copy_from(&z);
        warm.w.copy_from(&w);
        Ok(LassoResult { x: z, converged, iterations })
    }
}

/// Unweighted LASSO `1/2 ||b - A x||^2 + lambda ||x||_1`.
pub fn lasso(a: &CMatrix, b: &CVector, lambda: f64, opts: LassoOptions) -> Result<LassoResult> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    LassoOperator::new(a, opts)?.solve(b, lambda)
}

/// Optimality certificate of a weighted LASSO point.
#[derive(Debug, Clone, Copy)]
pub struct LassoCertificate {
    /// `max_i |A_i^H r| / weight_i` with `r = b - A x`; at most 1 at a minimizer.
    pub max_correlation_ratio: f64,
    /// Largest phase gap (radians) between `A_i^H r` and `x_i` on the support.
    pub max_phase_error: f64,
    /// Largest relative gap between `|A_i^H r|` and `weight_i` on the support.
    pub max_magnitude_error: f64,
}

impl LassoCertificate {
    pub fn holds(&self, ratio_slack: f64, phase_tol: f64) -> bool {
        self.max_correlation_ratio <= 1.0 + ratio_slack && self.max_phase_error <= phase_tol
    }
}

pub fn lasso_certificate(a: &CMatrix, b: &CVector, weights: &DVector<f64>, x: &CVector) -> LassoCertificate {
    let g = a.adjoint() * (b - a * x);
    let mut cert = LassoCertificate { max_correlation_ratio: 0.0, max_phase_error: 0.0, max_magnitude_error: 0.0 };
    for i in 0..x.len() {
        let wi = weights[i];
        let ratio = if wi > 0.0 {
            g[i].norm() / wi
        } else if g[i].norm() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        cert.max_correlation_ratio = cert.max_correlation_ratio.max(ratio);
        if x[i].norm() > 0.0 && wi > 0.0 {
            let phase = (g[i] * x[i].conj()).arg().abs();
            cert.max_phase_error = cert.max_phase_error.max(phase);
            cert.max_magnitude_error = cert.max_magnitude_error.max((g[i].norm() - wi).abs() / wi);
        }
    }
    cert
}

pub fn lasso_objective(a: &CMatrix, b: &CVector, lambda: f64, x: &CVector) -> f64 {
    0.5 * (b - a * x).norm_squared() + lambda * x.iter().map(|c| c.norm()).sum::<f64>()
}

/// Where the trace penalty enters the closed-form `u` update.
///
/// Minimizing the augmented Lagrangian in `u` exactly gives
/// `u = Psi^{-1} (T*(Z0 + Lambda0/rho) - tau/(2 rho) e1)`, i.e. the penalty is
/// averaged over the `N` diagonal entries like everything else
/// ([`TracePenaltyPlacement::BeforeAveraging`]). The alternative subtracts the
/// full `tau/(2 rho)` from `u[0]` after averaging, which weights the `u`
/// part of the trace penalty `N` times more than the `v` part, so the
/// iteration no longer minimizes a single fixed objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TracePenaltyPlacement {
    BeforeAveraging,
    AfterAveraging,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Atomic-norm weight.
    pub tau: f64,
    /// l1 weight on the fault deviation.
    pub lambda: f64,
    /// ADMM penalty.
    pub rho: f64,
    /// Halting threshold on `||h_f^(l+1) - h_f^(l)||`.
    pub epsilon: f64,
    /// Halting threshold on `||Z - lift(u, h, v)||_F`.
    pub primal_tol: f64,
    pub max_iter: usize,
    pub inner: LassoOptions,
    pub trace_penalty: TracePenaltyPlacement,
    /// Use `tau * sqrt(N)` as the atomic-norm weight. The default weights
    /// (tau = 0.3, lambda = 0.4) only separate faults from the channel on
    /// this scale: with `lambda > tau` every fault is cheaper to absorb into
    /// `h`, since a single-antenna spike has unit atomic norm.
    pub scale_tau_by_sqrt_n: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            lambda: 0.4,
            rho: 1.0,
            epsilon: 1e-3,
            primal_tol: 1e-2,
            max_iter: 1000,
            inner: LassoOptions::default(),
            trace_penalty: TracePenaltyPlacement::BeforeAveraging,
            scale_tau_by_sqrt_n: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::Config("tau and lambda must be nonnegative".into()));
        }
        if !(self.rho > 0.0 && self.epsilon > 0.0 && self.primal_tol > 0.0 && self.max_iter >= 1) {
            return Err(Error::Config(format!("invalid ADMM settings {self:?}")));
        }
        self.inner.validate()
    }

    /// Weight on `||h||_A` for an `n`-element array.
    pub fn atomic_weight(&self, n: usize) -> f64 {
        if self.scale_tau_by_sqrt_n {
            self.tau * (n as f64).sqrt()
        } else {
            self.tau
        }
    }
}

/// ADMM iterate.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub v: f64,
    pub u: CVector,
    pub h: CVector,
    pub h_f: CVector,
    pub z: LiftedMatrix,
    pub multiplier: LiftedMatrix,
    pub iteration: usize,
    pub primal_residual: f64,
    pub hf_step: f64,
    inner_warm: LassoWarmStart,
}

impl SolverState {
    /// `Z = 0`, `Lambda = 0`, `h_f = 0`.
    pub fn zeros(n: usize) -> Self {
        Self {
            v: 0.0,
            u: CVector::zeros(n),
            h: CVector::zeros(n),
            h_f: CVector::zeros(n),
            z: LiftedMatrix::zeros(n),
            multiplier: LiftedMatrix::zeros(n),
            iteration: 0,
            primal_residual: f64::INFINITY,
            hf_step: f64::INFINITY,
            inner_warm: LassoWarmStart::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }
}

#[derive(Debug, Clone)]
pub struct DiagnosisResult {
    pub h_hat: CVector,
    pub hf_hat: CVector,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub objective: f64,
    /// Toeplitz generator at the final iterate.
    pub u: CVector,
    pub v: f64,
}

/// Per-call ADMM workspace: the measurement-dependent factorizations.
pub struct Admm<'a> {
    meas: &'a MeasurementSet,
    cfg: SolverConfig,
    f_adj: CMatrix,
    h_system: Cholesky<C64, Dyn>,
    inner: LassoOperator,
    inv_weights: DVector<f64>,
}

impl<'a> Admm<'a> {
    pub fn new(meas: &'a MeasurementSet, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        meas.check()?;
        if meas.f.iter().all(|x| *x == C64::new(0.0, 0.0)) {
            return Err(Error::Domain("combining matrix is identically zero".into()));
        }
        let n = meas.n_antennas();
        let f_adj = meas.f.adjoint();
        let system = &f_adj * &meas.f + CMatrix::identity(n, n) * C64::new(2.0 * cfg.rho, 0.0);
        let h_system = Cholesky::new(system)
            .ok_or_else(|| Error::Numerical("F^H F + 2 rho I is not positive definite".into()))?;
        let inner = LassoOperator::new(&meas.f, cfg.inner)?;
        let inv_weights = spectral::subdiag_weights(n).map(|w| 1.0 / w);
        Ok(Self { meas, cfg, f_adj, h_system, inner, inv_weights })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn step(&self, s: &mut SolverState) -> Result<()> {
        let n = self.meas.n_antennas();
        if s.n() != n {
            return Err(Error::Dimension(format!("state has N = {} but measurements have N = {n}", s.n())));
        }
        let rho = self.cfg.rho;
        let tau = self.cfg.atomic_weight(n);
        let inv_rho = C64::new(1.0 / rho, 0.0);

        s.v = s.z.corner() + (s.multiplier.corner() - tau / 2.0) / rho;

        let w = s.z.matrix() + s.multiplier.matrix() * inv_rho;
        let mut u = spectral::toeplitz_adjoint_of(&w, n);
        match self.cfg.trace_penalty {
            TracePenaltyPlacement::BeforeAveraging => {
                u[0] -= tau / (2.0 * rho);
                u.component_mul_assign(&self.inv_weights.map(|x| C64::new(x, 0.0)));
            }
            TracePenaltyPlacement::AfterAveraging => {
                u.component_mul_assign(&self.inv_weights.map(|x| C64::new(x, 0.0)));
                u[0] -= tau / (2.0 * rho);
            }
        }
        u[0].im = 0.0;
        s.u = u;

        let f = &self.meas.f;
        let mut rhs = &self.f_adj * (&self.meas.y - f * &s.h_f);
        rhs.axpy(C64::new(2.0, 0.0), &s.multiplier.column(), C64::new(1.0, 0.0));
        rhs.axpy(C64::new(2.0 * rho, 0.0), &s.z.column(), C64::new(1.0, 0.0));
        s.h = self.h_system.solve(&rhs);

        let residual = &self.meas.y - f * &s.h;
        let weights = DVector::from_element(n, self.cfg.lambda);
        let hf_new = self.inner.solve_weighted(&residual, &weights, &mut s.inner_warm)?.x;
        s.hf_step = (&hf_new - &s.h_f).norm();
        s.h_f = hf_new;

        let t = spectral::toeplitz(&s.u)?;
        let lifted = LiftedMatrix::lift(&t, &s.h, s.v);
        let g = lifted.matrix() - s.multiplier.matrix() * inv_rho;
        let z = spectral::project_psd(&g)?;
        let gap = &z - lifted.matrix();
        s.primal_residual = gap.norm();
        let mult = s.multiplier.matrix() + gap * C64::new(rho, 0.0);
        s.multiplier = LiftedMatrix::from_matrix(spectral::hermitian_part(&mult))?;
        s.z = LiftedMatrix::from_matrix(z)?;
        s.iteration += 1;
        Ok(())
    }

    pub fn objective(&self, s: &SolverState) -> f64 {
        objective(self.meas, &self.cfg, &s.h, &s.h_f, s.u[0].re, s.v)
    }

    pub fn run(&self, mut s: SolverState) -> Result<DiagnosisResult> {
        let mut converged = false;
        while s.iteration < self.cfg.max_iter {
            self.step(&mut s)?;
            if s.hf_step <= self.cfg.epsilon && s.primal_residual <= self.cfg.primal_tol {
                converged = true;
                break;
            }
        }
        let objective = self.objective(&s);
        Ok(DiagnosisResult {
            h_hat: s.h,
            hf_hat: s.h_f,
            converged,
            iterations: s.iteration,
            primal_residual: s.primal_residual,
            objective,
            u: s.u,
            v: s.v,
        })
    }
}

/// Joint objective with the atomic norm evaluated through its SDP surrogate
/// `(tr T(u) / N + v) / 2`.
pub fn objective(meas: &MeasurementSet, cfg: &SolverConfig, h: &CVector, h_f: &CVector, u0: f64, v: f64) -> f64 {
    let fit = 0.5 * (&meas.y - &meas.f * (h + h_f)).norm_squared();
    let l1: f64 = h_f.iter().map(|c| c.norm()).sum();
    fit + cfg.atomic_weight(h.len()) * 0.5 * (u0 + v) + cfg.lambda * l1
}

/// One ADMM iteration from `state`. Refactors the measurement matrices on
/// every call; [`diagnose`] caches them instead.
pub fn admm_iterate(state: &SolverState, meas: &MeasurementSet, cfg: &SolverConfig) -> Result<SolverState> {
    let admm = Admm::new(meas, *cfg)?;
    let mut next = state.clone();
    admm.step(&mut next)?;
    Ok(next)
}

/// Runs ADMM from the zero state until both the `h_f` step and the lifted
/// primal residual fall below their thresholds, or `max_iter` is reached.
pub fn diagnose(meas: &MeasurementSet, cfg: &SolverConfig) -> Result<DiagnosisResult> {
    let admm = Admm::new(meas, *cfg)?;
    admm.run(SolverState::zeros(meas.n_antennas()))
}
