//! Richardson extrapolation, readout observables, error metrics and fits.

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdmodel::{BoundaryCondition, FlowProblem};
use crate::lcu::{decompose_four, select_delta};
use crate::linalg::{spectral_norm, Real, Vector};
use crate::qsim::{apply, post_select, prepare_input, sample, Circuit, Control, QuantumState, RegisterLayout};
use crate::tmcqc::LcuBlock;
use crate::{CMatrix, CVector, C64};

/// Two solutions at expansion parameters `eps1 > eps2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationPair<T> {
    pub eps1: T,
    pub eps2: T,
    pub u_eps1: Vector<T>,
    pub u_eps2: Vector<T>,
}

impl<T: Real> ExtrapolationPair<T> {
    pub fn new(eps1: T, eps2: T, u_eps1: Vector<T>, u_eps2: Vector<T>) -> Result<Self> {
        if !(eps1 > eps2 && eps2 > T::zero()) {
            return Err(Error::InvalidParameter(format!("need eps1 > eps2 > 0, got {eps1}, {eps2}")));
        }
        if u_eps1.dim() != u_eps2.dim() {
            return Err(Error::DimensionMismatch { expected: u_eps1.dim(), found: u_eps2.dim() });
        }
        Ok(Self { eps1, eps2, u_eps1, u_eps2 })
    }

    pub fn gamma(&self) -> T {
        self.eps1 / self.eps2
    }
}

/// `(u₁ − γ²u₂)/(1 − γ²)`, which cancels the `ε²` term.
pub fn richardson<T: Real>(pair: &ExtrapolationPair<T>) -> Result<Vector<T>> {
    richardson_fields(&pair.u_eps1, &pair.u_eps2, pair.gamma())
}

pub fn richardson_fields<T: Real>(u1: &Vector<T>, u2: &Vector<T>, gamma: T) -> Result<Vector<T>> {
    if u1.dim() != u2.dim() {
        return Err(Error::DimensionMismatch { expected: u1.dim(), found: u2.dim() });
    }
    let g2 = gamma * gamma;
    if (g2 - T::one()).abs() <= T::epsilon() || !g2.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must differ from 1")));
    }
    let denom = T::one() - g2;
    let out = u1
        .as_slice()
        .iter()
        .zip(u2.as_slice())
        .map(|(a, b)| (a - b * g2) / denom)
        .collect();
    Vector::from_vec(out)
}

/// Repeated pairwise elimination of the `ε², ε⁴, …` terms (Neville's table
/// in `ε²`). `points` holds `(ε, u(ε))` with distinct ε.
pub fn richardson_iterated<T: Real>(points: &[(T, Vector<T>)]) -> Result<Vector<T>> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no extrapolation points".into()));
    }
    let h2: Vec<T> = points.iter().map(|(e, _)| *e * *e).collect();
    let mut table: Vec<Vector<T>> = points.iter().map(|(_, u)| u.clone()).collect();
    for j in 1..points.len() {
        for i in (j..points.len()).rev() {
            let (hi, lo) = (h2[i - j], h2[i]);
            if (hi - lo).abs() <= T::epsilon() * hi.abs() {
                return Err(Error::InvalidParameter("extrapolation points must have distinct eps".into()));
            }
            let w = Complex::new(T::one() / (hi - lo), T::zero());
            let (a, b) = (&table[i], &table[i - 1]);
            let next = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| (x * hi - y * lo) * w)
                .collect();
            table[i] = Vector::from_vec(next)?;
        }
    }
    Ok(table.pop().expect("nonempty"))
}

/// `(1/N)Σ|a_i − b_i|²`.
pub fn mse<T: Real>(a: &Vector<T>, b: &Vector<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    if a.dim() == 0 {
        return Ok(T::zero());
    }
    let s = a.as_slice().iter().zip(b.as_slice()).fold(T::zero(), |s, (x, y)| s + (x - y).norm_sqr());
    Ok(s / T::from_usize(a.dim()).expect("usize fits"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub prefactor: T,
    pub exponent: T,
    /// Root-mean-square residual in `ln y`.
    pub residual: T,
}

/// Least squares of `ln y = ln c + k ln x`.
pub fn fit_power_law<T: Real>(xs: &[T], ys: &[T]) -> Result<FitResult<T>> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter("power-law fit needs at least 3 points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > T::zero() && v.is_finite())) {
        return Err(Error::InvalidParameter("power-law fit needs positive finite data".into()));
    }
    let n = T::from_usize(xs.len()).expect("usize fits");
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().fold(T::zero(), |s, &v| s + v) / n;
    let my = ly.iter().fold(T::zero(), |s, &v| s + v) / n;
    let sxx = lx.iter().fold(T::zero(), |s, &v| s + (v - mx) * (v - mx));
    if sxx <= T::zero() {
        return Err(Error::InvalidParameter("power-law fit needs distinct x values".into()));
    }
    let sxy = lx.iter().zip(&ly).fold(T::zero(), |s, (&x, &y)| s + (x - mx) * (y - my));
    let k = sxy / sxx;
    let b = my - k * mx;
    let rss = lx.iter().zip(&ly).fold(T::zero(), |s, (&x, &y)| {
        let r = y - (b + k * x);
        s + r * r
    });
    Ok(FitResult { prefactor: b.exp(), exponent: k, residual: (rss / n).sqrt() })
}

/// A circuit estimate next to its classical counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub quantum: f64,
    pub classical: f64,
}

fn data_layout(n: usize, extra: &[(&str, usize)]) -> Result<RegisterLayout> {
    if !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("field length {n} is not a power of two")));
    }
    let mut spec = vec![("data", n.trailing_zeros() as usize)];
    spec.extend_from_slice(extra);
    RegisterLayout::new(&spec)
}

fn hadamard_all(c: &mut Circuit, reg: &str) -> Result<()> {
    for q in c.layout().register(reg)?.qubits() {
        c.h(q)?;
    }
    Ok(())
}

/// Mean of a field. The circuit path applies H on every data qubit; the
/// `|0…0⟩` amplitude is `Σψ_i/√N`, which is rescaled by `‖u‖/√N`.
pub fn mean_flow(field: &CVector) -> Result<Observable> {
    let n = field.dim();
    let layout = data_layout(n, &[])?;
    let input = prepare_input(&layout, field, false)?;
    let mut c = Circuit::new(layout);
    hadamard_all(&mut c, "data")?;
    let out = apply(&input.state, &c, None)?;
    let amp = out.amplitudes()[0];
    Ok(Observable {
        quantum: amp.re * input.norm / (n as f64).sqrt(),
        classical: field.sum().re / n as f64,
    })
}

/// Central-difference first derivative; under Dirichlet the two boundary
/// rows are left empty so only the interior stencil contributes.
pub fn derivative_matrix(p: &FlowProblem) -> CMatrix {
    let n = p.ng();
    let h = 1.0 / (2.0 * p.dx());
    let mut d = CMatrix::zeros(n, n);
    for i in 0..n {
        let interior = i >= 1 && i + 1 < n;
        if p.bc() == BoundaryCondition::Periodic || interior {
            d[(i, (i + 1) % n)] += C64::new(h, 0.0);
            d[(i, (i + n - 1) % n)] -= C64::new(h, 0.0);
        }
    }
    d
}

/// Mean of `∂u/∂x` over the rows that carry a stencil. The quantum path runs
/// an LCU block of the derivative matrix and reads the ancilla-zero, all-zero
/// data amplitude after a Hadamard string.
pub fn mean_gradient(field: &CVector, p: &FlowProblem, epsilon: f64) -> Result<Observable> {
    let n = p.ng();
    if field.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: field.dim() });
    }
    let d = derivative_matrix(p);
    let rows = if p.bc() == BoundaryCondition::Periodic { n } else { n - 2 } as f64;
    let classical = d.matvec(field).sum().re / rows;
    let delta = select_delta(spectral_norm(&d), epsilon)?.delta;
    let block = LcuBlock::from_decomposition(&decompose_four(&d.scale_re(delta), epsilon)?, delta)?;
    let layout = data_layout(n, &[("ancilla", block.ancilla_qubits())])?;
    let input = prepare_input(&layout, field, false)?;
    let mut c = Circuit::new(layout.clone());
    block.append(&mut c, layout.register("ancilla")?, layout.register("data")?, &[])?;
    hadamard_all(&mut c, "data")?;
    let out = apply(&input.state, &c, None)?;
    let amp = out.amplitudes()[0];
    let sum = amp.re * block.scale() * input.norm * (n as f64).sqrt();
    Ok(Observable { quantum: sum / rows, classical })
}

/// Result of a quantum post-processing run for `⟨f(u)⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearObservable {
    /// Circuit estimate of `Σf(ũ_i)/N`.
    pub estimate: f64,
    /// `Σf(u_i)/N` on the unquantized field.
    pub truth: f64,
    /// `Σf(ũ_i)/N` on the quantized field.
    pub quantized_truth: f64,
    /// Quantization grid `[min, max]`.
    pub range: (f64, f64),
    pub distinct_levels: usize,
    pub warning: Option<String>,
}

pub const MAX_QPP_BITS: usize = 12;

/// Quantizes each `u_i` to `n_qpp` bits, loads the codes into a value
/// register under a uniform index superposition, rotates an ancilla by
/// `Ry(2·arccos f(ũ))` per code, uncomputes the codes and folds the index back
/// with a Hadamard string. The `(index = 0, ancilla = 0)` amplitude is then
/// `Σf(ũ_i)/N`; with shots only its magnitude is observable.
pub fn nonlinear_observable(
    field: &[f64],
    f: impl Fn(f64) -> f64,
    n_qpp: usize,
    shots: Option<(u64, u64)>,
) -> Result<NonlinearObservable> {
    let n = field.len();
    if n_qpp == 0 || n_qpp > MAX_QPP_BITS {
        return Err(Error::InvalidParameter(format!("n_qpp = {n_qpp} outside 1..={MAX_QPP_BITS}")));
    }
    if field.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let layout = data_layout(n, &[("value", n_qpp), ("flag", 1)])?;
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let levels = (1u64 << n_qpp) - 1;
    let step = if hi > lo { (hi - lo) / levels as f64 } else { 0.0 };
    let codes: Vec<u64> = field
        .iter()
        .map(|v| if step > 0.0 { ((v - lo) / step).round() as u64 } else { 0 })
        .collect();
    let value_of = |q: u64| lo + q as f64 * step;
    let mut fvals = std::collections::BTreeMap::new();
    for &q in &codes {
        let fv = f(value_of(q));
        if !(-1.0..=1.0).contains(&fv) || !fv.is_finite() {
            return Err(Error::InvalidParameter(format!("f({}) = {fv} outside [-1, 1]", value_of(q))));
        }
        fvals.insert(q, fv);
    }
    let mut distinct_fields: Vec<u64> = field.iter().map(|v| v.to_bits()).collect();
    distinct_fields.sort_unstable();
    distinct_fields.dedup();
    let warning = (fvals.len() < distinct_fields.len())
        .then(|| format!("{} distinct values share {} codes at n_qpp = {n_qpp}", distinct_fields.len(), fvals.len()));

    let x = Arc::new(CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])?);
    let mut c = Circuit::new(layout.clone());
    hadamard_all(&mut c, "data")?;
    let value = layout.register("value")?.clone();
    let load = |c: &mut Circuit| -> Result<()> {
        for (i, &q) in codes.iter().enumerate() {
            let ctl = c.controls_for("data", i as u64)?;
            for b in 0..n_qpp {
                if (q >> b) & 1 == 1 {
                    c.unitary(vec![value.offset + b], x.clone(), ctl.clone())?;
                }
            }
        }
        Ok(())
    };
    load(&mut c)?;
    let flag = layout.qubit("flag", 0)?;
    for (&q, &fv) in &fvals {
        let theta = 2.0 * fv.acos();
        let (cs, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let ry = CMatrix::from_real(2, 2, &[cs, -sn, sn, cs])?;
        let ctl: Vec<Control> = c.controls_for("value", q)?;
        c.unitary(vec![flag], Arc::new(ry), ctl)?;
    }
    load(&mut c)?;
    hadamard_all(&mut c, "data")?;
    let out = apply(&QuantumState::zero(&layout), &c, None)?;
    let amp = out.amplitudes()[0].re;
    let estimate = match shots {
        None => amp,
        Some((s, seed)) => {
            let rec = sample(&out, s, None, seed, &[("data", 0), ("flag", 0), ("value", 0)])?;
            rec.p_succ_hat.sqrt()
        }
    };
    let nf = n as f64;
    Ok(NonlinearObservable {
        estimate,
        truth: field.iter().map(|&v| f(v)).sum::<f64>() / nf,
        quantized_truth: codes.iter().map(|q| fvals[q]).sum::<f64>() / nf,
        range: (lo, hi),
        distinct_levels: fvals.len(),
        warning,
    })
}

/// Post-selected probability of the ancilla-zero branch for a block acting
/// on `field`; a convenience for shot accounting.
pub fn block_success_probability(block: &LcuBlock, field: &CVector, dilated: bool) -> Result<f64> {
    let layout = RegisterLayout::new(&[("data", block.data_qubits()), ("ancilla", block.ancilla_qubits())])?;
    let input = prepare_input(&layout, field, dilated)?;
    let mut c = Circuit::new(layout.clone());
    block.append(&mut c, layout.register("ancilla")?, layout.register("data")?, &[])?;
    let out = apply(&input.state, &c, None)?;
    Ok(post_select(&out, &[("ancilla", 0)])?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> CVector {
        CVector::from_real(x).unwrap()
    }

    #[test]
    fn richardson_cancels_quadratic_term() {
        let star = v(&[1.0, -2.0, 0.5]);
        let c = v(&[0.3, 0.1, -4.0]);
        let at = |e: f64| &star + &c.scale_re(e * e);
        let pair = ExtrapolationPair::new(1.0, 0.9, at(1.0), at(0.9)).unwrap();
        assert!(richardson(&pair).unwrap().max_abs_diff(&star) < 1e-12);
        let same = ExtrapolationPair::new(1.0, 0.5, star.clone(), star.clone()).unwrap();
        assert!(richardson(&same).unwrap().max_abs_diff(&star) < 1e-15);
        assert!(richardson_fields(&star, &star, 1.0).is_err());
        assert!(ExtrapolationPair::new(0.5, 1.0, star.clone(), star).is_err());
    }

    #[test]
    fn richardson_quartic_residual_scalar() {
        let (a, b) = (0.7, -1.3);
        let u = |e: f64| v(&[2.0 + a * e * e + b * e.powi(4)]);
        for (e1, e2) in [(1.0, 0.5), (0.4, 0.3), (0.1, 0.09)] {
            let r = richardson_fields(&u(e1), &u(e2), e1 / e2).unwrap()[0].re;
            // Exact residual of the ε⁴ term after eliminating ε².
            let want = 2.0 - b * e1 * e1 * e2 * e2;
            assert!((r - want).abs() < 1e-12, "{r} vs {want}");
        }
        let pts: Vec<(f64, CVector)> = [1.0, 0.7, 0.5].iter().map(|&e| (e, u(e))).collect();
        assert!((richardson_iterated(&pts).unwrap()[0].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        let a = v(&[1.0, 2.0, 3.0]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = v(&[1.5, 2.5, 3.5]);
        assert!((mse(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        assert!(mse(&a, &v(&[1.0])).is_err());
    }

    #[test]
    fn power_law_fits() {
        let xs = [1.0f64, 2.0, 4.0, 8.0];
        let f = fit_power_law(&xs, &xs.map(|x| 2.0 * x * x * x)).unwrap();
        assert!((f.prefactor - 2.0).abs() < 1e-12 && (f.exponent - 3.0).abs() < 1e-12 && f.residual < 1e-12);
        let g = fit_power_law(&xs, &xs.map(|x: f64| 0.3 / x.sqrt())).unwrap();
        assert!((g.exponent + 0.5).abs() < 1e-12);
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_power_law(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_err());
        let f32fit = fit_power_law(&[1.0f32, 2.0, 4.0], &[3.0f32, 12.0, 48.0]).unwrap();
        assert!((f32fit.exponent - 2.0).abs() < 1e-5);
    }

    #[test]
    fn mean_flow_cases() {
        let m = mean_flow(&v(&[0.7; 8])).unwrap();
        assert!((m.quantum - 0.7).abs() < 1e-12 && (m.classical - 0.7).abs() < 1e-15);
        let p = FlowProblem::new(16, 1e-3, 1, 1.0, 1.0).unwrap();
        let d = mean_flow(&p.initial_condition()).unwrap();
        assert!((d.quantum - 1.0 / 16.0).abs() < 1e-12);
        let mixed = v(&[0.1, -0.4, 2.0, 0.3]);
        let m = mean_flow(&mixed).unwrap();
        assert!((m.quantum - m.classical).abs() < 1e-10);
    }

    #[test]
    fn mean_gradient_cases() {
        let p = FlowProblem::new(8, 1e-3, 1, 1.0, 1.0).unwrap();
        let g = mean_gradient(&v(&[0.4; 8]), &p, 1e-3).unwrap();
        assert!(g.quantum.abs() < 1e-9 && g.classical.abs() < 1e-12);
        let wavy = v(&[0.1, 0.9, 0.3, -0.2, 0.5, 0.0, 1.2, 0.4]);
        let g = mean_gradient(&wavy, &p, 1e-3).unwrap();
        assert!(g.classical.abs() < 1e-12 && g.quantum.abs() < 1e-6);
        let pd = p.clone().with_bc(BoundaryCondition::Dirichlet);
        let lin: Vec<f64> = (0..8).map(|i| 3.0 * pd.x(i)).collect();
        let g = mean_gradient(&v(&lin), &pd, 1e-3).unwrap();
        assert!((g.classical - 3.0).abs() < 1e-12);
        assert!((g.quantum - 3.0).abs() < 1e-4, "{}", g.quantum);
    }

    #[test]
    fn nonlinear_observable_cases() {
        let r = nonlinear_observable(&[0.5, 0.5], |u| u * u, 4, None).unwrap();
        assert!((r.estimate - 0.25).abs() < 1e-12 && (r.truth - 0.25).abs() < 1e-15);
        let field = [0.0, 0.25, 0.5, 1.0];
        let r = nonlinear_observable(&field, |u| u, 3, None).unwrap();
        assert!((r.estimate - r.quantized_truth).abs() < 1e-12);
        assert!((r.truth - 0.4375).abs() < 1e-15);
        assert!((r.quantized_truth - r.truth).abs() <= 1.0 / 7.0);
        assert!(nonlinear_observable(&field, |u| 3.0 * u, 3, None).is_err());
        let coarse = nonlinear_observable(&[0.0, 0.1, 0.2, 1.0], |u| u, 1, None).unwrap();
        assert!(coarse.warning.is_some());
        let shot = nonlinear_observable(&field, |u| u, 4, Some((1 << 18, 3))).unwrap();
        assert!((shot.estimate - shot.quantized_truth).abs() < 0.01);
    }

    #[test]
    fn dissipation_matches_classical() {
        let p = FlowProblem::new(16, 2.5e-4, 8, 1.0, 10.0).unwrap();
        let u = p.analytical_solution(8.0 * 2.5e-4).unwrap();
        let grad = derivative_matrix(&p).matvec(&u).re();
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let nu = p.diffusion();
        let classical = nu * grad.iter().map(|g| g * g).sum::<f64>() / 16.0;
        let n_qpp = 10;
        let r = nonlinear_observable(&grad, |g| (g / gmax).powi(2), n_qpp, None).unwrap();
        let quantum = nu * gmax * gmax * r.estimate;
        // Lipschitz constant of (g/gmax)² is 2/gmax; half a quantization step of error per point.
        let tol = nu * gmax * gmax * (2.0 / gmax) * (2.0 * gmax / ((1 << n_qpp) - 1) as f64) / 2.0;
        assert!((quantum - classical).abs() <= tol, "{quantum} vs {classical}");
    }

    proptest! {
        #[test]
        fn mse_symmetric_and_triangle(
            a in proptest::collection::vec(-5.0..5.0f64, 6),
            b in proptest::collection::vec(-5.0..5.0f64, 6),
            c in proptest::collection::vec(-5.0..5.0f64, 6),
        ) {
            let (a, b, c) = (v(&a), v(&b), v(&c));
            prop_assert!((mse(&a, &b).unwrap() - mse(&b, &a).unwrap()).abs() < 1e-12);
            let lhs = mse(&a, &c).unwrap().sqrt();
            let rhs = mse(&a, &b).unwrap().sqrt() + mse(&b, &c).unwrap().sqrt();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn periodic_mean_gradient_vanishes(u in proptest::collection::vec(-2.0..2.0f64, 8)) {
            let p = FlowProblem::new(8, 1e-3, 1, 1.0, 1.0).unwrap();
            prop_assume!(u.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let g = mean_gradient(&v(&u), &p, 1e-3).unwrap();
            prop_assert!(g.classical.abs() < 1e-12);
            prop_assert!(g.quantum.abs() < 1e-6 * (1.0 + u.iter().map(|x| x.abs()).sum::<f64>()));
        }

        #[test]
        fn mean_flow_paths_agree(u in proptest::collection::vec(-3.0..3.0f64, 16)) {
            prop_assume!(u.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let m = mean_flow(&v(&u)).unwrap();
            prop_assert!((m.quantum - m.classical).abs() < 1e-10);
        }

        #[test]
        fn richardson_exact_on_quadratic(star in -3.0..3.0f64, a in -3.0..3.0f64, e2 in 0.05..0.9f64) {
            let e1 = 1.0;
            let u = |e: f64| v(&[star + a * e * e]);
            let r = richardson_fields(&u(e1), &u(e2), e1 / e2).unwrap()[0].re;
            prop_assert!((r - star).abs() < 1e-9);
        }
    }
}
