//! Linear-combination-of-unitaries decompositions and truncated Neumann inverses.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    ci, cre, dominance_margin, expm_general, hermitian_dilation, hermitian_eigen, inverse,
    spectral_norm, split_sym_antisym, HermitianEigen, Matrix, Real, Vector,
};

/// Number of unitaries in the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LcuKind {
    /// `i·e^{−iεS}`, `−i·e^{iεS}`, `e^{εA}`, `−e^{−εA}`.
    #[serde(alias = "4", rename = "four")]
    Four,
    /// `i·e^{−iεM̂}`, `−i·e^{iεM̂}` over the Hermitian dilation.
    #[serde(alias = "2", rename = "two")]
    Two,
}

impl LcuKind {
    pub fn k(self) -> usize {
        match self {
            LcuKind::Four => 4,
            LcuKind::Two => 2,
        }
    }

    pub fn from_k(k: usize) -> Result<Self> {
        match k {
            4 => Ok(LcuKind::Four),
            2 => Ok(LcuKind::Two),
            _ => Err(Error::InvalidParameter(format!("K = {k}, expected 2 or 4"))),
        }
    }
}

/// `M̃ = Σ β_k U_k` with `β_k = 1/(2ε)`.
#[derive(Debug, Clone)]
pub struct LcuDecomposition<T> {
    epsilon: T,
    coefficients: Vec<T>,
    unitaries: Vec<Matrix<T>>,
    dilated: bool,
}

impl<T: Real> LcuDecomposition<T> {
    pub fn epsilon(&self) -> T {
        self.epsilon
    }
    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }
    pub fn unitaries(&self) -> &[Matrix<T>] {
        &self.unitaries
    }
    pub fn dilated(&self) -> bool {
        self.dilated
    }
    pub fn k(&self) -> usize {
        self.unitaries.len()
    }
    pub fn beta_total(&self) -> T {
        self.coefficients.iter().fold(T::zero(), |s, &b| s + b)
    }
    /// Dimension of the operator being approximated (half the unitary size when dilated).
    pub fn operator_dim(&self) -> usize {
        let n = self.unitaries[0].rows();
        if self.dilated {
            n / 2
        } else {
            n
        }
    }
    /// `Σ β_k U_k` on the full (possibly dilated) space.
    pub fn reconstruct_full(&self) -> Matrix<T> {
        let n = self.unitaries[0].rows();
        self.unitaries
            .iter()
            .zip(&self.coefficients)
            .fold(Matrix::zeros(n, n), |acc, (u, &b)| &acc + &u.scale_re(b))
    }
    pub fn max_unitary_defect(&self) -> T {
        self.unitaries.iter().map(|u| u.unitary_defect()).fold(T::zero(), T::max)
    }
}

/// Reusable spectral data so that several ε values share one eigendecomposition.
#[derive(Debug, Clone)]
pub struct Decomposer<T> {
    kind: LcuKind,
    eig: HermitianEigen<T>,
    antisym: Option<Matrix<T>>,
}

impl<T: Real> Decomposer<T> {
    pub fn new(m: &Matrix<T>, kind: LcuKind) -> Result<Self> {
        m.ensure_square()?;
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        match kind {
            LcuKind::Four => {
                let (s, a) = split_sym_antisym(m)?;
                Ok(Self { kind, eig: hermitian_eigen(&s)?, antisym: Some(a) })
            }
            LcuKind::Two => {
                Ok(Self { kind, eig: hermitian_eigen(&hermitian_dilation(m)?)?, antisym: None })
            }
        }
    }

    pub fn kind(&self) -> LcuKind {
        self.kind
    }

    pub fn at(&self, epsilon: T) -> Result<LcuDecomposition<T>> {
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
        }
        let i = ci::<T>();
        let u0 = self.eig.apply_fn(|l| i * Complex::new(T::zero(), -epsilon * l).exp());
        let u1 = self.eig.apply_fn(|l| -i * Complex::new(T::zero(), epsilon * l).exp());
        let mut unitaries = vec![u0, u1];
        if let Some(a) = &self.antisym {
            unitaries.push(expm_general(&a.scale_re(epsilon))?);
            unitaries.push(-&expm_general(&a.scale_re(-epsilon))?);
        }
        let beta = T::one() / (T::lit(2.0) * epsilon);
        Ok(LcuDecomposition {
            epsilon,
            coefficients: vec![beta; unitaries.len()],
            unitaries,
            dilated: self.kind == LcuKind::Two,
        })
    }
}

pub fn decompose_four<T: Real>(m: &Matrix<T>, epsilon: T) -> Result<LcuDecomposition<T>> {
    Decomposer::new(m, LcuKind::Four)?.at(epsilon)
}

pub fn decompose_two<T: Real>(m: &Matrix<T>, epsilon: T) -> Result<LcuDecomposition<T>> {
    Decomposer::new(m, LcuKind::Two)?.at(epsilon)
}

pub fn decompose<T: Real>(m: &Matrix<T>, epsilon: T, kind: LcuKind) -> Result<LcuDecomposition<T>> {
    Decomposer::new(m, kind)?.at(epsilon)
}

/// Effective action on the original space; for dilated decompositions this is
/// the top-right block, i.e. what reaches the top half from input `[0, b]`.
pub fn reconstruct<T: Real>(d: &LcuDecomposition<T>) -> Matrix<T> {
    let full = d.reconstruct_full();
    if d.dilated {
        let n = d.operator_dim();
        full.block(0, n, n, n)
    } else {
        full
    }
}

/// `⌈log(1/ε_N) / log(1/‖A‖)⌉`, at least 1.
pub fn neumann_p_min(norm: f64, eps_n: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&norm) {
        return Err(Error::InvalidParameter(format!("series norm {norm} outside [0, 1)")));
    }
    if !(eps_n > 0.0 && eps_n < 1.0) {
        return Err(Error::InvalidParameter(format!("eps_n = {eps_n} outside (0, 1)")));
    }
    if norm == 0.0 {
        return Ok(1);
    }
    let p = ((1.0 / eps_n).ln() / (1.0 / norm).ln()).ceil();
    Ok((p as usize).max(1))
}

/// `Σ_{p<P} M^p v` by Horner accumulation, without the convergence check.
pub(crate) fn neumann_series_apply<T: Real>(m: &Matrix<T>, p_min: usize, v: &Vector<T>) -> Vector<T> {
    let mut acc = v.clone();
    for _ in 1..p_min {
        acc = v + &m.matvec(&acc);
    }
    acc
}

pub fn neumann_inverse_apply<T: Real>(m: &Matrix<T>, p_min: usize, v: &Vector<T>) -> Result<Vector<T>> {
    m.ensure_square()?;
    if v.dim() != m.rows() {
        return Err(Error::DimensionMismatch { expected: m.rows(), found: v.dim() });
    }
    if p_min == 0 {
        return Err(Error::InvalidParameter("p_min must be at least 1".into()));
    }
    let norm = spectral_norm(m);
    if norm >= T::one() {
        return Err(Error::Divergent { norm: norm.to_f64_lossy() });
    }
    Ok(neumann_series_apply(m, p_min, v))
}

/// Truncated series `R_P = Σ_{p<P} M^p` for `(I − M)⁻¹`.
#[derive(Debug, Clone)]
pub struct NeumannInverse<T> {
    base: Matrix<T>,
    p_min: usize,
    epsilon_n: T,
}

impl<T: Real> NeumannInverse<T> {
    /// Picks `P_min` for the target truncation error from `‖M‖`.
    pub fn new(base: Matrix<T>, eps_n: f64) -> Result<Self> {
        base.ensure_square()?;
        let norm = spectral_norm(&base);
        if norm >= T::one() {
            return Err(Error::Divergent { norm: norm.to_f64_lossy() });
        }
        let p_min = neumann_p_min(norm.to_f64_lossy(), eps_n)?;
        Ok(Self { epsilon_n: norm.powi(p_min as i32), base, p_min })
    }

    pub fn with_terms(base: Matrix<T>, p_min: usize) -> Result<Self> {
        base.ensure_square()?;
        let norm = spectral_norm(&base);
        if norm >= T::one() {
            return Err(Error::Divergent { norm: norm.to_f64_lossy() });
        }
        if p_min == 0 {
            return Err(Error::InvalidParameter("p_min must be at least 1".into()));
        }
        Ok(Self { epsilon_n: norm.powi(p_min as i32), base, p_min })
    }

    pub fn base(&self) -> &Matrix<T> {
        &self.base
    }
    pub fn p_min(&self) -> usize {
        self.p_min
    }
    /// `‖M‖^{P_min}`.
    pub fn epsilon_n(&self) -> T {
        self.epsilon_n
    }
    pub fn apply(&self, v: &Vector<T>) -> Vector<T> {
        neumann_series_apply(&self.base, self.p_min, v)
    }
    /// The powers `M⁰..M^{P−1}`.
    pub fn terms(&self) -> Vec<Matrix<T>> {
        let n = self.base.rows();
        let mut out = vec![Matrix::identity(n)];
        for p in 1..self.p_min {
            out.push(out[p - 1].matmul(&self.base));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationBound {
    /// `‖M‖₂`.
    pub norm: f64,
    /// Diagonal-dominance margin of `I − M`.
    pub gamma: f64,
    /// `‖M‖^P / Γ`.
    pub norm_form: f64,
    /// `‖I − M‖·‖(I − M)⁻¹‖`.
    pub kappa: f64,
    /// `(κ − 1)^P`.
    pub kappa_form: f64,
}

pub fn truncation_error_bound<T: Real>(m: &Matrix<T>, p_min: usize) -> Result<TruncationBound> {
    let n = m.ensure_square()?;
    let norm = spectral_norm(m).to_f64_lossy();
    if norm >= 1.0 {
        return Err(Error::Divergent { norm });
    }
    let a = &Matrix::identity(n) - m;
    let gamma = dominance_margin(&a)?.to_f64_lossy();
    if gamma <= 0.0 {
        return Err(Error::Infeasible(format!(
            "I - M is not diagonally dominant (Gamma = {gamma:.3e})"
        )));
    }
    let kappa = (spectral_norm(&a) * spectral_norm(&inverse(&a)?)).to_f64_lossy();
    Ok(TruncationBound {
        norm,
        gamma,
        norm_form: norm.powi(p_min as i32) / gamma,
        kappa,
        kappa_form: (kappa - 1.0).max(0.0).powi(p_min as i32),
    })
}

/// `‖(I − M)⁻¹ − R_P‖₂` by brute force.
pub fn measured_truncation_error<T: Real>(m: &Matrix<T>, p_min: usize) -> Result<T> {
    let n = m.ensure_square()?;
    let exact = inverse(&(&Matrix::identity(n) - m))?;
    let mut r = Matrix::identity(n);
    let mut pow = Matrix::identity(n);
    for _ in 1..p_min {
        pow = pow.matmul(m);
        r = &r + &pow;
    }
    Ok(spectral_norm(&(&exact - &r)))
}

/// Scaling `δ` for a block encoding of `δA` at expansion parameter `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaChoice {
    pub delta: f64,
    /// Both `δ‖A‖ < 1` and `εδ‖A‖ ≥ 1` hold.
    pub feasible: bool,
}

/// `δ = min(0.99/‖A‖, 1/(ε‖A‖))`.
pub fn select_delta(norm: f64, epsilon: f64) -> Result<DeltaChoice> {
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidParameter(format!("operator norm {norm} must be positive")));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    let delta = (0.99 / norm).min(1.0 / (epsilon * norm));
    let feasible = delta * norm < 1.0 && epsilon * delta * norm >= 1.0 - 1e-12;
    Ok(DeltaChoice { delta, feasible })
}

/// `recon(δA, ε)/δ`, the operator a δ-scaled block actually implements.
pub fn scaled_effective<T: Real>(d: &LcuDecomposition<T>, delta: T) -> Matrix<T> {
    reconstruct(d).scale(cre(T::one() / delta))
}
