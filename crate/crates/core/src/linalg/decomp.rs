//! LU solves, Hermitian eigendecomposition (cyclic Jacobi) and singular
//! values (one-sided Jacobi).

use num_complex::Complex;

use super::matrix::{Matrix, Vector};
use super::scalar::{cone, cz, Real};
use crate::error::{Error, Result};

/// LU factorization with partial pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.ensure_square()?;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        let tiny = scale * T::lit(T::EPS_F64) * T::lit(n as f64);
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, T::zero()), |b, c| if c.1 > b.1 { c } else { b });
            if pmax <= tiny {
                return Err(Error::Singular);
            }
            if piv != k {
                perm.swap(piv, k);
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = t;
                }
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f.re == T::zero() && f.im == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &Vector<T>) -> Result<Vector<T>> {
        let n = self.lu.rows();
        if b.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: b.dim() });
        }
        let mut x: Vec<Complex<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for (j, xj) in x.iter().enumerate().take(i) {
                s -= self.lu[(i, j)] * *xj;
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                s -= self.lu[(i, j)] * *xj;
            }
            x[i] = s / self.lu[(i, i)];
        }
        Ok(Vector::from_vec_unchecked(x))
    }

    pub fn solve_matrix(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: b.rows() });
        }
        let mut out = Matrix::zeros(n, b.cols());
        for j in 0..b.cols() {
            let col = Vector::from_vec_unchecked((0..n).map(|i| b[(i, j)]).collect());
            let x = self.solve(&col)?;
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        Ok(out)
    }
}

pub fn solve<T: Real>(a: &Matrix<T>, b: &Vector<T>) -> Result<Vector<T>> {
    Lu::new(a)?.solve(b)
}

pub fn inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.ensure_square()?;
    Lu::new(a)?.solve_matrix(&Matrix::identity(n))
}

/// Eigenpairs of a Hermitian matrix; eigenvalues ascending, eigenvectors as
/// the matching columns of `vectors`.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    /// `V · diag(f(λ)) · V†`.
    pub fn apply_fn(&self, f: impl Fn(T) -> Complex<T>) -> Matrix<T> {
        let n = self.values.len();
        let fl: Vec<Complex<T>> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let a = v[(i, k)] * fl[k];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * v[(j, k)].conj();
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi on the symmetrized input `(H + H†)/2`.
pub fn hermitian_eigen<T: Real>(h: &Matrix<T>) -> Result<HermitianEigen<T>> {
    let n = h.ensure_square()?;
    let two = T::lit(2.0);
    let mut a = Matrix::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) / two);
    let mut v = Matrix::<T>::identity(n);
    let scale = a.frobenius();
    if scale == T::zero() {
        return Ok(HermitianEigen { values: vec![T::zero(); n], vectors: v });
    }
    let tol = scale * T::lit(T::EPS_F64);

    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= tol * T::lit(1e-3) {
                    continue;
                }
                let ph = apq / r;
                let zeta = (a[(q, q)].re - a[(p, p)].re) / (two * r);
                let t = if zeta == T::zero() {
                    T::one()
                } else {
                    zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let phc = ph.conj();
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - phc * akq * s;
                    a[(k, q)] = akp * s + phc * akq * c;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - ph * aqk * s;
                    a[(q, k)] = apk * s + ph * aqk * c;
                }
                a[(p, q)] = cz();
                a[(q, p)] = cz();
                a[(p, p)].im = T::zero();
                a[(q, q)].im = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - phc * vkq * s;
                    v[(k, q)] = vkp * s + phc * vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok(HermitianEigen { values, vectors })
}

/// Singular values in descending order.
pub fn singular_values<T: Real>(m: &Matrix<T>) -> Vec<T> {
    // Work on whichever orientation has fewer columns.
    let tall = m.rows() >= m.cols();
    let (rows, cols) = if tall { (m.rows(), m.cols()) } else { (m.cols(), m.rows()) };
    let mut c: Vec<Vec<Complex<T>>> = (0..cols)
        .map(|j| (0..rows).map(|i| if tall { m[(i, j)] } else { m[(j, i)].conj() }).collect())
        .collect();

    let eps = T::lit(T::EPS_F64);
    let two = T::lit(2.0);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&c[p], &c[q]);
                    let mut al = T::zero();
                    let mut be = T::zero();
                    let mut ga = cz::<T>();
                    for (x, y) in cp.iter().zip(cq) {
                        al += x.norm_sqr();
                        be += y.norm_sqr();
                        ga += x.conj() * *y;
                    }
                    (al, be, ga)
                };
                let g = gamma.norm();
                if g == T::zero() || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phc = (gamma / g).conj();
                let zeta = (beta - alpha) / (two * g);
                let t = if zeta == T::zero() {
                    T::one()
                } else {
                    zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
                };
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                let (lo, hi) = c.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let yq = *y * phc;
                    let xp = *x;
                    *x = xp * cs - yq * sn;
                    *y = xp * sn + yq * cs;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> =
        c.iter().map(|col| col.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Determinant via LU; used only in tests and diagnostics.
pub fn determinant<T: Real>(a: &Matrix<T>) -> Result<Complex<T>> {
    let n = a.ensure_square()?;
    let lu = match Lu::new(a) {
        Ok(lu) => lu,
        Err(Error::Singular) => return Ok(cz()),
        Err(e) => return Err(e),
    };
    let mut d = cone::<T>();
    for i in 0..n {
        d *= lu.lu[(i, i)];
    }
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            j = lu.perm[j];
            len += 1;
        }
        if len % 2 == 0 {
            d = -d;
        }
    }
    Ok(d)
}
