//! Reference diagnosis schemes.
//!
//! * [`full_csi_diagnose`]: rebuild the channel from known gains and AOAs,
//!   cancel it from `y`, then run a LASSO on what remains.
//! * [`partial_csi_diagnose`]: project `y` onto the orthogonal complement of
//!   the combined steering vectors of known AOAs, then run a LASSO.
//! * [`joint_grid_diagnose`]: the joint recovery with the continuous
//!   dictionary replaced by a fixed angular grid.

use nalgebra::{DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::array_model::{array_response, MeasurementSet};
use crate::solver::{LassoOperator, LassoOptions, LassoResult, LassoWarmStart};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Relative singular-value cutoff for the null-space projector.
pub const PROJECTOR_RCOND: f64 = 1e-10;

/// Estimated (possibly erroneous) path gains and AOAs.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiEstimate {
    pub gains: Vec<C64>,
    pub aoas: Vec<f64>,
}

impl CsiEstimate {
    pub fn validate(&self) -> Result<()> {
        if self.gains.len() != self.aoas.len() {
            return Err(Error::Dimension(format!("{} gains vs {} AOAs", self.gains.len(), self.aoas.len())));
        }
        if self.gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) || self.aoas.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("non-finite CSI entry".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_antennas: usize,
    pub element_spacing: f64,
}

impl ArrayGeometry {
    pub fn ula(n_antennas: usize) -> Self {
        Self { n_antennas, element_spacing: 0.5 }
    }

    fn check(&self, meas: &MeasurementSet) -> Result<()> {
        meas.check()?;
        if meas.n_antennas() != self.n_antennas {
            return Err(Error::Dimension(format!(
                "geometry has {} antennas, measurements {}",
                self.n_antennas,
                meas.n_antennas()
            )));
        }
        Ok(())
    }

    /// `[a(theta_1) ... a(theta_L)]`, any real angles accepted.
    pub fn steering_matrix(&self, aoas: &[f64]) -> CMatrix {
        let mut a = CMatrix::zeros(self.n_antennas, aoas.len());
        for (j, &theta) in aoas.iter().enumerate() {
            a.set_column(j, &array_response(theta, self.n_antennas, self.element_spacing));
        }
        a
    }
}

/// Cancel the CSI-reconstructed channel, then LASSO on the remainder.
pub fn full_csi_diagnose(
    meas: &MeasurementSet,
    csi: &CsiEstimate,
    lambda: f64,
    geometry: &ArrayGeometry,
    opts: LassoOptions,
) -> Result<LassoResult> {
    geometry.check(meas)?;
    csi.validate()?;
    let gains = CVector::from_column_slice(&csi.gains);
    let h_est = geometry.steering_matrix(&csi.aoas) * gains;
    let z = &meas.y - &meas.f * h_est;
    crate::solver::lasso(&meas.f, &z, lambda, opts)
}

/// Orthogonal projector onto the complement of `range(b)`, with singular
/// values below `PROJECTOR_RCOND * sigma_max` treated as zero.
pub fn null_space_projector(b: &CMatrix) -> Result<CMatrix> {
    let k = b.nrows();
    let mut p = CMatrix::identity(k, k);
    if b.ncols() == 0 {
        return Ok(p);
    }
    let svd = SVD::try_new(b.clone(), true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of the AOA subspace did not converge".into()))?;
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD returned no left vectors".into()))?;
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(p);
    }
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > PROJECTOR_RCOND * smax {
            let col = u.column(j);
            p -= col * col.adjoint();
        }
    }
    Ok(p)
}

/// Null-space projection of the AOA subspace, then LASSO. Reads no gains.
pub fn partial_csi_diagnose(
    meas: &MeasurementSet,
    aoas: &[f64],
    lambda: f64,
    geometry: &ArrayGeometry,
    opts: LassoOptions,
) -> Result<LassoResult> {
    geometry.check(meas)?;
    if aoas.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("non-finite AOA estimate".into()));
    }
    if aoas.len() >= meas.n_measurements() {
        return Err(Error::InsufficientMeasurements(format!(
            "{} AOAs leave no null space in {} measurements",
            aoas.len(),
            meas.n_measurements()
        )));
    }
    let b = &meas.f * geometry.steering_matrix(aoas);
    let p = null_space_projector(&b)?;
    crate::solver::lasso(&(&p * &meas.f), &(&p * &meas.y), lambda, opts)
}

/// Steering vectors on a grid uniform in `sin(theta)`:
/// `theta_g = asin(-1 + 2 g / G)`.
pub fn grid_dictionary(n: usize, grid: usize, spacing: f64) -> Result<CMatrix> {
    if grid == 0 {
        return Err(Error::Config("grid size must be >= 1".into()));
    }
    let mut d = CMatrix::zeros(n, grid);
    for g in 0..grid {
        d.set_column(g, &array_response(grid_angle(g, grid), n, spacing));
    }
    Ok(d)
}

pub fn grid_angle(g: usize, grid: usize) -> f64 {
    (-1.0 + 2.0 * g as f64 / grid as f64).clamp(-1.0, 1.0).asin()
}

#[derive(Debug, Clone)]
pub struct GridDiagnosis {
    pub coefficients: CVector,
    pub hf_hat: CVector,
    /// `D c`, the channel implied by the grid coefficients.
    pub h_hat: CVector,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// Options for [`joint_grid_diagnose`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub grid: usize,
    pub tau: f64,
    pub lambda: f64,
    pub element_spacing: f64,
    pub lasso: LassoOptions,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            grid: 256,
            tau: 0.3,
            lambda: 0.4,
            element_spacing: 0.5,
            lasso: LassoOptions { rho: 1.0, tol: 1e-8, max_iter: 20_000 },
        }
    }
}

/// Minimizes `1/2 ||y - F (D c + h_f)||^2 + tau ||c||_1 + lambda ||h_f||_1`
/// jointly over the stacked variable `[c; h_f]`.
pub fn joint_grid_diagnose(meas: &MeasurementSet, opts: &GridOptions) -> Result<GridDiagnosis> {
    meas.check()?;
    if !(opts.tau >= 0.0 && opts.lambda >= 0.0) {
        return Err(Error::Config("tau and lambda must be nonnegative".into()));
    }
    let n = meas.n_antennas();
    let g = opts.grid;
    let d = grid_dictionary(n, g, opts.element_spacing)?;
    let fd = &meas.f * &d;
    let k = meas.n_measurements();
    let mut a = CMatrix::zeros(k, g + n);
    a.view_mut((0, 0), (k, g)).copy_from(&fd);
    a.view_mut((0, g), (k, n)).copy_from(&meas.f);
    let weights = DVector::from_iterator(g + n, (0..g + n).map(|i| if i < g { opts.tau } else { opts.lambda }));

    let op = LassoOperator::new(&a, opts.lasso)?;
    let res = op.solve_weighted(&meas.y, &weights, &mut LassoWarmStart::zeros(g + n))?;
    let coefficients = res.x.rows(0, g).into_owned();
    let hf_hat = res.x.rows(g, n).into_owned();
    let h_hat = &d * &coefficients;
    let objective = grid_objective(meas, &d, &coefficients, &hf_hat, opts.tau, opts.lambda);
    Ok(GridDiagnosis { coefficients, hf_hat, h_hat, converged: res.converged, iterations: res.iterations, objective })
}

pub fn grid_objective(meas: &MeasurementSet, d: &CMatrix, c: &CVector, h_f: &CVector, tau: f64, lambda: f64) -> f64 {
    let fit = 0.5 * (&meas.y - &meas.f * (d * c + h_f)).norm_squared();
    let l1 = |v: &CVector| v.iter().map(|x| x.norm()).sum::<f64>();
    fit + tau * l1(c) + lambda * l1(h_f)
}
