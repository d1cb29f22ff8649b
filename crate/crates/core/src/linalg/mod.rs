//! Dense complex linear algebra, generic over the real scalar type.

mod decomp;
mod expm;
mod matrix;
mod scalar;

pub use decomp::{determinant, hermitian_eigen, inverse, singular_values, solve, HermitianEigen, Lu};
pub use expm::{expm_general, expm_hermitian, HERMITIAN_TOL};
pub use matrix::{Matrix, Vector};
pub use scalar::Real;
pub(crate) use scalar::{ci, cre};

use crate::error::{Error, Result};

/// `S = (M + M†)/2`, `A = (M − M†)/2`.
pub fn split_sym_antisym<T: Real>(m: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let n = m.ensure_square()?;
    let two = T::lit(2.0);
    let s = Matrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) / two);
    let a = Matrix::from_fn(n, n, |i, j| (m[(i, j)] - m[(j, i)].conj()) / two);
    Ok((s, a))
}

/// `[[0, M], [M†, 0]]`.
pub fn hermitian_dilation<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let n = m.ensure_square()?;
    let mut d = Matrix::zeros(2 * n, 2 * n);
    d.set_block(0, n, m);
    d.set_block(n, 0, &m.adjoint());
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms<T> {
    pub two: T,
    pub inf: T,
}

pub fn norms<T: Real>(m: &Matrix<T>) -> Norms<T> {
    Norms { two: spectral_norm(m), inf: m.inf_norm() }
}

pub fn spectral_norm<T: Real>(m: &Matrix<T>) -> T {
    singular_values(m).first().copied().unwrap_or_else(T::zero)
}

/// `σ_max / σ_min`.
pub fn condition_number<T: Real>(m: &Matrix<T>) -> Result<T> {
    m.ensure_square()?;
    let sv = singular_values(m);
    let (hi, lo) = (sv[0], *sv.last().unwrap());
    if hi == T::zero() || lo <= T::lit(1e-14) * hi {
        return Err(Error::Singular);
    }
    Ok(hi / lo)
}

/// `‖I − M‖·‖(I − M)⁻¹‖` for the series argument `M` of an implicit step.
pub fn implicit_condition_number<T: Real>(m: &Matrix<T>) -> Result<T> {
    let n = m.ensure_square()?;
    let a = &Matrix::identity(n) - m;
    let inv = inverse(&a)?;
    Ok(spectral_norm(&a) * spectral_norm(&inv))
}

/// Diagonal-dominance margin `min_i (|a_ii| − Σ_{j≠i} |a_ij|)`, taken over both
/// rows and columns so that `1/Γ` bounds `‖A⁻¹‖₂` whenever `Γ > 0`.
pub fn dominance_margin<T: Real>(a: &Matrix<T>) -> Result<T> {
    let n = a.ensure_square()?;
    let mut g = T::infinity();
    for i in 0..n {
        let mut row = T::zero();
        let mut col = T::zero();
        for j in 0..n {
            if j != i {
                row += a[(i, j)].norm();
                col += a[(j, i)].norm();
            }
        }
        let d = a[(i, i)].norm();
        g = g.min(d - row).min(d - col);
    }
    Ok(g)
}
