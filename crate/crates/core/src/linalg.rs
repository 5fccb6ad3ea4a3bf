//! Dense linear-algebra primitives: half-vectorization, quadratic lifting,
//! Kronecker products, least squares, Lyapunov solves and stability tests.

use std::ops::Deref;

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative singular-value cutoff used for every numerical rank decision.
pub const RANK_RTOL: f64 = 1e-10;

/// Relative eigenvalue threshold for positive (semi)definiteness checks.
pub const DEFINITE_RTOL: f64 = 1e-10;

const EIG_MAX_ITER: usize = 10_000;

/// Square symmetric matrix. Construction symmetrizes by averaging, so an
/// exactly symmetric input is stored unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T: Real>(DMatrix<T>);

impl<T: Real> SymMatrix<T> {
    pub fn from_matrix(m: DMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(symmetrize(&m)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn scaled_identity(dim: usize, scale: T) -> Self {
        Self(DMatrix::identity(dim, dim) * scale)
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.0
    }
}

impl<T: Real> Deref for SymMatrix<T> {
    type Target = DMatrix<T>;

    fn deref(&self) -> &DMatrix<T> {
        &self.0
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Half-vectorization with doubled off-diagonals, row by row over the upper
/// triangle: `[S11, 2S12, .., 2S1m, S22, 2S23, .., Smm]`.
pub fn vecs<T: Real>(s: &SymMatrix<T>) -> DVector<T> {
    let n = s.dim();
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        out.push(s[(i, i)]);
        for j in i + 1..n {
            out.push(two * s[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`vecs`].
pub fn unvecs<T: Real>(v: &[T], dim: usize) -> Result<SymMatrix<T>> {
    let expected = dim * (dim + 1) / 2;
    if v.len() != expected {
        return Err(Error::Dimension(format!(
            "vecs vector of length {} does not match dimension {dim} (expected {expected})",
            v.len()
        )));
    }
    let half = T::lit(0.5);
    let mut s = DMatrix::zeros(dim, dim);
    let mut idx = 0;
    for i in 0..dim {
        s[(i, i)] = v[idx];
        idx += 1;
        for j in i + 1..dim {
            let x = v[idx] * half;
            s[(i, j)] = x;
            s[(j, i)] = x;
            idx += 1;
        }
    }
    Ok(SymMatrix(s))
}

/// Quadratic-monomial lifting `[z1², z1z2, .., z1zm, z2², .., zm²]`, paired
/// with [`vecs`] so that `bar(z)·vecs(S) = zᵀSz`.
pub fn bar<T: Real>(z: &[T]) -> DVector<T> {
    let n = z.len();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(z[i] * z[j]);
        }
    }
    DVector::from_vec(out)
}

pub fn kron<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec_of<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec<T: Real>(v: &[T], rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v))
}

/// Singular values, largest first.
pub fn singular_values<T: Real>(a: &DMatrix<T>) -> Result<DVector<T>> {
    if a.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let svd = a
        .clone()
        .try_svd(false, false, T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sv)
}

/// Numerical rank with singular values below `RANK_RTOL · σ_max` treated as zero.
pub fn numerical_rank<T: Real>(a: &DMatrix<T>) -> Result<usize> {
    let sv = singular_values(a)?;
    let Some(&smax) = sv.iter().next() else {
        return Ok(0);
    };
    if smax <= T::zero() || !smax.is_finite() {
        return Ok(0);
    }
    let cut = smax * T::lit(RANK_RTOL);
    Ok(sv.iter().filter(|&&s| s > cut).count())
}

/// Induced 2-norm (largest singular value).
pub fn norm2<T: Real>(a: &DMatrix<T>) -> T {
    singular_values(a)
        .ok()
        .and_then(|sv| sv.iter().next().copied())
        .unwrap_or_else(T::zero)
}

/// Least-squares solution of `A x ≈ b` for full-column-rank `A`.
///
/// Fails with [`Error::RankDeficient`] when the numerical rank of `A` is
/// below its column count.
pub fn solve_lstsq<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Dimension("least-squares matrix is empty".into()));
    }
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "least-squares system has {} rows but right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    let svd = a
        .clone()
        .try_svd(true, true, T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(T::zero(), |acc, s| if s > acc { s } else { acc });
    let cut = smax * T::lit(RANK_RTOL);
    let rank = if smax > T::zero() { sv.iter().filter(|&&s| s > cut).count() } else { 0 };
    if rank < a.ncols() {
        return Err(Error::RankDeficient { rank, required: a.ncols(), hint: "" });
    }
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut coeffs = u.transpose() * b;
    for (c, &s) in coeffs.iter_mut().zip(sv.iter()) {
        *c /= s;
    }
    Ok(v_t.transpose() * coeffs)
}

/// Solves `FᵀP + PF + W = 0` for symmetric `P` through the vectorized system
/// `[I⊗Fᵀ + Fᵀ⊗I] vec(P) = −vec(W)`.
pub fn solve_lyapunov<T: Real>(f: &DMatrix<T>, w: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let n = f.nrows();
    if !f.is_square() || w.dim() != n {
        return Err(Error::Dimension(format!(
            "Lyapunov equation needs square F matching W: F is {}x{}, W is {}x{}",
            f.nrows(),
            f.ncols(),
            w.dim(),
            w.dim()
        )));
    }
    let eye = DMatrix::<T>::identity(n, n);
    let ft = f.transpose();
    let op = kron(&eye, &ft) + kron(&ft, &eye);
    let rhs = -vec_of(w.as_matrix());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator is singular (F not Hurwitz?)".into()))?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular("Lyapunov solution is not finite".into()));
    }
    SymMatrix::from_matrix(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

pub fn complex_eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("eigenvalues need a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), EIG_MAX_ITER)
        .ok_or_else(|| Error::Numerical("eigenvalue iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// `true` iff every eigenvalue of `m` has real part below `-margin`.
pub fn is_hurwitz<T: Real>(m: &DMatrix<T>, margin: T) -> Result<bool> {
    Ok(complex_eigenvalues(m)?.iter().all(|l| l.re < -margin))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(s: &SymMatrix<T>) -> Result<T> {
    if s.dim() == 0 {
        return Ok(T::zero());
    }
    let eig = SymmetricEigen::try_new(s.as_matrix().clone(), T::default_epsilon(), EIG_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigenvalue iteration did not converge".into()))?;
    Ok(eig.eigenvalues.iter().copied().fold(T::max_value().unwrap_or_else(T::one), |a, b| if b < a { b } else { a }))
}

/// `S ≻ 0` with the relative threshold [`DEFINITE_RTOL`].
pub fn is_positive_definite<T: Real>(s: &SymMatrix<T>) -> Result<bool> {
    let scale = norm2(s.as_matrix());
    Ok(min_eigenvalue(s)? > scale * T::lit(DEFINITE_RTOL))
}

/// `S ⪰ 0` up to the relative threshold [`DEFINITE_RTOL`].
pub fn is_positive_semidefinite<T: Real>(s: &SymMatrix<T>) -> Result<bool> {
    let scale = norm2(s.as_matrix());
    Ok(min_eigenvalue(s)? >= -scale * T::lit(DEFINITE_RTOL))
}

/// Relative Frobenius distance `|a − b| / |b|`, or the absolute distance when `b = 0`.
pub fn relative_error<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > T::zero() {
        diff / scale
    } else {
        diff
    }
}
