//! Hermitian-Toeplitz operators and PSD projection for the SDP lift of the
//! atomic norm.
//!
//! The lift of a vector `h` is the `(N+1) x (N+1)` matrix
//! `[[T(u), h], [h^H, v]]`; [`LiftedMatrix`] provides the block partition.

use nalgebra::{DVector, SymmetricEigen};

use crate::{CMatrix, CVector, Error, Result, C64};

/// Largest imaginary part of `u[0]` accepted by [`toeplitz`].
pub const REAL_DIAGONAL_TOL: f64 = 1e-9;

/// Hermitian Toeplitz matrix described by its first column.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianToeplitz {
    first_column: CVector,
}

impl HermitianToeplitz {
    pub fn new(first_column: CVector) -> Result<Self> {
        if first_column.is_empty() {
            return Err(Error::Dimension("empty Toeplitz generator".into()));
        }
        if first_column[0].im.abs() > REAL_DIAGONAL_TOL {
            return Err(Error::Domain(format!(
                "Toeplitz diagonal must be real, got imaginary part {:e}",
                first_column[0].im
            )));
        }
        Ok(Self { first_column })
    }

    pub fn first_column(&self) -> &CVector {
        &self.first_column
    }

    pub fn dim(&self) -> usize {
        self.first_column.len()
    }

    /// Trace divided by the dimension, i.e. the (real) diagonal value.
    pub fn normalized_trace(&self) -> f64 {
        self.first_column[0].re
    }

    pub fn to_matrix(&self) -> CMatrix {
        let u = &self.first_column;
        let diag = C64::new(u[0].re, 0.0);
        CMatrix::from_fn(u.len(), u.len(), |j, k| {
            if j == k {
                diag
            } else if j > k {
                u[j - k]
            } else {
                u[k - j].conj()
            }
        })
    }
}

/// `T(u)`: entries `u[j-k]` on and below the diagonal, `conj(u[k-j])` above.
pub fn toeplitz(u: &CVector) -> Result<CMatrix> {
    Ok(HermitianToeplitz::new(u.clone())?.to_matrix())
}

/// Adjoint-like map `T*`: element `i` is the sum of the `i`-th lower
/// subdiagonal of `m` (element 0 is the trace).
pub fn toeplitz_adjoint(m: &CMatrix) -> Result<CVector> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", n, m.ncols())));
    }
    Ok(toeplitz_adjoint_of(m, n))
}

/// [`toeplitz_adjoint`] restricted to the leading `n x n` block of `m`.
pub(crate) fn toeplitz_adjoint_of(m: &CMatrix, n: usize) -> CVector {
    let mut s = CVector::zeros(n);
    // column-major walk
    for k in 0..n {
        for j in k..n {
            s[j - k] += m[(j, k)];
        }
    }
    s
}

/// Number of entries on each lower subdiagonal: `[N, N-1, ..., 1]`.
pub fn subdiag_weights(n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|j| (n - j) as f64))
}

/// `(H + H^H) / 2`.
pub fn hermitian_part(h: &CMatrix) -> CMatrix {
    (h + h.adjoint()) * C64::new(0.5, 0.0)
}

/// Frobenius-nearest PSD matrix: symmetrize, eigendecompose, clip negative
/// eigenvalues to zero.
pub fn project_psd(h: &CMatrix) -> Result<CMatrix> {
    if !h.is_square() {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", h.nrows(), h.ncols())));
    }
    if h.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Numerical("non-finite entry in PSD projection input".into()));
    }
    let eig = SymmetricEigen::try_new(hermitian_part(h), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    Ok(reassemble_nonnegative(&eig))
}

fn reassemble_nonnegative(eig: &SymmetricEigen<C64, nalgebra::Dyn>) -> CMatrix {
    let n = eig.eigenvalues.len();
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    if keep.is_empty() {
        return CMatrix::zeros(n, n);
    }
    // V_+ diag(sqrt(lambda_+)) then X X^H keeps the result exactly Hermitian PSD.
    let mut x = CMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        x.set_column(c, &(eig.eigenvectors.column(i) * C64::new(s, 0.0)));
    }
    let mut out = &x * x.adjoint();
    for i in 0..n {
        out[(i, i)].im = 0.0;
    }
    out
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &CMatrix) -> Result<f64> {
    let eig = SymmetricEigen::try_new(hermitian_part(h), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    Ok(eig.eigenvalues.min())
}

/// Largest absolute eigenvalue of a Hermitian matrix.
pub fn spectral_norm_hermitian(h: &CMatrix) -> Result<f64> {
    let eig = SymmetricEigen::try_new(hermitian_part(h), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    Ok(eig.eigenvalues.amax())
}

/// Real inner product `Re tr(A^H B)`.
pub fn real_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// An `(N+1) x (N+1)` Hermitian matrix with the block partition
/// `[[Z0, z1], [z1^H, corner]]`. Used for both the ADMM split variable and
/// its multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix {
    m: CMatrix,
}

impl LiftedMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { m: CMatrix::zeros(n + 1, n + 1) }
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        if !m.is_square() || m.nrows() < 2 {
            return Err(Error::Dimension(format!("lifted matrix must be square with N >= 1, got {}x{}", m.nrows(), m.ncols())));
        }
        Ok(Self { m })
    }

    /// Assembles `[[T(u), h], [h^H, v]]`.
    pub fn lift(t: &CMatrix, h: &CVector, v: f64) -> Self {
        let n = h.len();
        let mut m = CMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(t);
        for i in 0..n {
            m[(i, n)] = h[i];
            m[(n, i)] = h[i].conj();
        }
        m[(n, n)] = C64::new(v, 0.0);
        Self { m }
    }

    /// The array dimension `N` (one less than the matrix size).
    pub fn n(&self) -> usize {
        self.m.nrows() - 1
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn block(&self) -> CMatrix {
        let n = self.n();
        self.m.view((0, 0), (n, n)).into_owned()
    }

    pub fn column(&self) -> CVector {
        let n = self.n();
        self.m.view((0, n), (n, 1)).column(0).into_owned()
    }

    pub fn corner(&self) -> f64 {
        let n = self.n();
        self.m[(n, n)].re
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.m.norm().max(f64::MIN_POSITIVE);
        (&self.m - self.m.adjoint()).norm() <= rel_tol * scale
    }
}
