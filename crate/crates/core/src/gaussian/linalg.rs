//! Small dense symmetric-matrix utilities.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry invariant of [`SpdMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-12;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Largest `|a_ij - a_ji|` relative to the largest entry (0 for the zero matrix).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    let scale = max_abs(m);
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

fn require_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::domain(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("matrix has non-finite entries"));
    }
    let a = asymmetry(m);
    if a > tol {
        return Err(Error::domain(format!(
            "matrix is not symmetric (relative asymmetry {a:e})"
        )));
    }
    Ok(())
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    require_symmetric(m, 1e-10)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrized(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Second largest eigenvalue (algebraic order) of a symmetric matrix.
pub fn lambda2(sym: &DMatrix<f64>) -> Result<f64> {
    if sym.nrows() < 2 {
        return Err(Error::domain("second eigenvalue needs dimension at least 2"));
    }
    Ok(symmetric_eigenvalues(sym)?[1])
}

/// Spectral (operator 2-) norm of an arbitrary matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |acc, s| acc.max(*s))
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::domain("covariance must have dimension at least 1"));
        }
        require_symmetric(&matrix, SYMMETRY_TOL)?;
        let chol = Cholesky::new(symmetrized(&matrix))
            .ok_or_else(|| Error::numeric("matrix is not positive definite (Cholesky failed)"))?;
        Ok(Self { matrix, chol })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Lower-triangular `L` with `L L^T = S`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigenvalues(&self.matrix).expect("SPD matrix is symmetric")
    }

    /// Ratio of largest to smallest eigenvalue.
    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        let (max, min) = (ev[0], ev[ev.len() - 1]);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// True when every off-diagonal entry is at most `1e-12 * ||S||`.
    pub fn is_diagonal(&self) -> bool {
        let norm = self.eigenvalues()[0];
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)].abs() <= 1e-12 * norm))
    }
}

/// Factor `F` with `F F^T = m` for a symmetric positive semidefinite `m`.
///
/// Uses Cholesky when it succeeds, otherwise `Q diag(sqrt(max(lambda, 0)))`
/// from the eigendecomposition. Eigenvalues below `-1e-10 * ||m||` are
/// rejected as a numeric error.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_symmetric(m, 1e-10)?;
    let sym = symmetrized(m);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::numeric("matrix is not positive semidefinite"));
    }
    let mut factor = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}
