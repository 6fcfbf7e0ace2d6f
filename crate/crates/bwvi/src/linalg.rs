//! Dense symmetric linear algebra used by every other module.
//!
//! The two workhorses are a Cholesky factorization with an explicit
//! positive-definiteness gate and a symmetric eigendecomposition used for
//! matrix square roots and eigenvalue maps. Everything downstream is built
//! so that each iterate needs exactly one O(d^3) factorization; repeated
//! `solve` calls against a cached factor are O(d^2).

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_ATOL: f64 = 1e-10;

/// A Cholesky pivot at or below `CHOLESKY_PIVOT_RTOL * max_diag` fails the
/// positive-definiteness gate. Relative to the largest diagonal entry so the
/// gate is invariant under uniform rescaling.
pub const CHOLESKY_PIVOT_RTOL: f64 = 1e-12;

/// Eigenvalues in `[-EIGEN_CLAMP_RTOL * max|lambda|, 0)` are clamped to zero
/// in positive-semidefinite contexts; anything more negative is an error.
pub const EIGEN_CLAMP_RTOL: f64 = 1e-10;

thread_local! {
    static FACTORIZATION_COUNT: Cell<u64> = const { Cell::new(0) };
}

/// Number of Cholesky factorizations performed by the current thread.
///
/// Exists so tests can assert the cost contract: estimator calls must reuse
/// the factor cached in the sampling distribution instead of refactorizing.
pub fn factorizations_this_thread() -> u64 {
    FACTORIZATION_COUNT.with(|c| c.get())
}

/// Symmetric part (A + A^T) / 2. Used to remove arithmetic drift after
/// conjugations like M * A * M.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = a.clone();
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

fn check_square(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            what,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry);
    }
    Ok(())
}

/// Symmetric matrix container for covariance-like data.
///
/// The constructor validates squareness, finiteness and symmetry, then stores
/// the exactly symmetrized matrix. Positive definiteness is *not* checked
/// here; it is enforced where it matters, by [`cholesky`] (strict) or by the
/// eigenvalue clamp in [`spd_sqrt`] (semidefinite allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry within [`SYMMETRY_ATOL`] and stores the symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m, "SpdMatrix")?;
        check_finite(&m)?;
        let mut dev: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if dev > SYMMETRY_ATOL {
            return Err(Error::NotSymmetric { deviation: dev });
        }
        Ok(Self { m: symmetrize(&m) })
    }

    /// Takes the symmetric part without the symmetry check. For matrices that
    /// are symmetric by construction up to arithmetic drift.
    pub fn from_symmetric_part(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m, "SpdMatrix")?;
        check_finite(&m)?;
        Ok(Self { m: symmetrize(&m) })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
        }
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        Self {
            m: DMatrix::identity(d, d) * s,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }
}

/// Lower-triangular Cholesky factor L with A = L L^T.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
}

/// Factorizes a symmetric positive definite matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] as soon as a pivot falls at or
/// below `CHOLESKY_PIVOT_RTOL * max_diag`, which catches indefinite input and
/// numerically degenerate covariances in one place.
pub fn cholesky(a: &SpdMatrix) -> Result<CholeskyFactor> {
    let d = a.dim();
    let m = a.as_matrix();
    let max_diag = (0..d).fold(0.0_f64, |acc, i| acc.max(m[(i, i)].abs()));
    let gate = CHOLESKY_PIVOT_RTOL * max_diag;
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= gate || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    FACTORIZATION_COUNT.with(|c| c.set(c.get() + 1));
    Ok(CholeskyFactor { l })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves A x = b with two triangular substitutions, O(d^2). No
    /// refactorization happens here.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.dim();
        if b.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b.len(),
            });
        }
        let mut x = b.clone();
        // L y = b
        for i in 0..d {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        // L^T x = y
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        Ok(x)
    }

    /// Column-by-column [`CholeskyFactor::solve`], so A X = B.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if b.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b.nrows(),
            });
        }
        let mut out = DMatrix::<f64>::zeros(d, b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&DVector::from(b.column(j).into_owned()))?;
            out.set_column(j, &col);
        }
        Ok(out)
    }

    /// log det A = 2 sum_i log L_ii, O(d).
    pub fn logdet(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    /// A^{-1}, symmetrized. O(d^3); used where the full inverse is genuinely
    /// needed (one matrix per iterate at most).
    pub fn inverse(&self) -> SpdMatrix {
        let d = self.dim();
        let inv = self
            .solve_matrix(&DMatrix::identity(d, d))
            .expect("identity has matching dimension");
        SpdMatrix::from_symmetric_part(inv).expect("inverse of finite factor is finite")
    }

    /// tr(A^{-1}) = ||L^{-1}||_F^2, via d forward substitutions.
    pub fn trace_inverse(&self) -> f64 {
        let d = self.dim();
        let mut total = 0.0;
        let mut z = vec![0.0_f64; d];
        for j in 0..d {
            // forward-substitute L z = e_j; z has zeros above index j
            for i in j..d {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in j..i {
                    s -= self.l[(i, k)] * z[k];
                }
                z[i] = s / self.l[(i, i)];
                total += z[i] * z[i];
            }
        }
        total
    }
}

/// Convenience free function mirroring [`CholeskyFactor::solve`].
pub fn chol_solve(l: &CholeskyFactor, b: &DVector<f64>) -> Result<DVector<f64>> {
    l.solve(b)
}

/// Convenience free function mirroring [`CholeskyFactor::logdet`].
pub fn logdet(l: &CholeskyFactor) -> f64 {
    l.logdet()
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending,
/// eigenvectors as orthonormal columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// Q f(Lambda) Q^T, symmetrized. The basis for matrix square roots and
    /// the per-eigenvalue proximal map of the entropy step.
    pub fn reconstruct_mapped(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mapped = DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f(v)));
        let scaled = &self.vectors * DMatrix::from_diagonal(&mapped);
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

const EIGEN_MAX_ITER: usize = 50_000;

/// Symmetric eigendecomposition (tridiagonalization + implicit QL) with an
/// iteration cap; hitting the cap signals pathological input.
pub fn sym_eigen(a: &SpdMatrix) -> Result<SymEigen> {
    let eig = a
        .as_matrix()
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::ConvergenceFailure)?;
    let d = a.dim();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("eigenvalues of a finite symmetric matrix are finite")
    });
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::<f64>::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok(SymEigen { values, vectors })
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues slightly negative from rounding (within
/// `EIGEN_CLAMP_RTOL * max|lambda|`) are clamped to zero; anything below that
/// is rejected as genuinely indefinite.
pub fn spd_sqrt(a: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = sym_eigen(a)?;
    let scale = eig.values.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let tol = EIGEN_CLAMP_RTOL * scale;
    if let Some(&bad) = eig.values.iter().find(|&&v| v < -tol) {
        return Err(Error::NotPositiveSemiDefinite { eigenvalue: bad });
    }
    let root = eig.reconstruct_mapped(|v| v.max(0.0).sqrt());
    SpdMatrix::from_symmetric_part(root)
}
