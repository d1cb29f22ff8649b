//! Matrix exponentials.

use num_complex::Complex;

use super::decomp::{hermitian_eigen, Lu};
use super::matrix::Matrix;
use super::scalar::Real;
use crate::error::{Error, Result};

/// Max-entry tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// `e^{scale·H}` for Hermitian `H`, through its eigendecomposition.
pub fn expm_hermitian<T: Real>(h: &Matrix<T>, scale: Complex<T>) -> Result<Matrix<T>> {
    h.ensure_square()?;
    let defect = h.hermitian_defect();
    if defect > T::lit(HERMITIAN_TOL) {
        return Err(Error::NotHermitian { deviation: defect.to_f64_lossy() });
    }
    let eig = hermitian_eigen(h)?;
    Ok(eig.apply_fn(|l| (scale * l).exp()))
}

// Padé(13) coefficients and the θ₁₃ threshold from Higham (2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Scaling-and-squaring with the degree-13 Padé approximant.
pub fn expm_general<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.ensure_square()?;
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let norm1 = a.one_norm().to_f64_lossy();
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.scale_re(T::lit(2f64.powi(-s)));

    let b: Vec<T> = PADE13.iter().map(|&x| T::lit(x)).collect();
    let id = Matrix::<T>::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let lin = |c6: T, c4: T, c2: T, c0: Option<T>| {
        let mut m = &(&a6.scale_re(c6) + &a4.scale_re(c4)) + &a2.scale_re(c2);
        if let Some(c0) = c0 {
            m = &m + &id.scale_re(c0);
        }
        m
    };
    let u_inner = &a6.matmul(&lin(b[13], b[11], b[9], None)) + &lin(b[7], b[5], b[3], Some(b[1]));
    let u = a.matmul(&u_inner);
    let v = &a6.matmul(&lin(b[12], b[10], b[8], None)) + &lin(b[6], b[4], b[2], Some(b[0]));

    let p = &v + &u;
    let q = &v - &u;
    let mut r = Lu::new(&q)?.solve_matrix(&p)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}
