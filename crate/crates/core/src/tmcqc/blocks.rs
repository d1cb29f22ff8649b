//! PREP-SELECT-UNPREP blocks and the term expansions built from them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lcu::LcuDecomposition;
use crate::qsim::{householder_prep, Circuit, Control, Register};
use crate::{CMatrix, C64};

/// `Σ c_j U_j` with positive weights. The ancilla-zero branch of the block
/// carries `(Σ c_j U_j / Σ c_j)|ψ⟩`, so `scale()` is the classical rescale.
#[derive(Debug, Clone)]
pub struct LcuBlock {
    coefficients: Vec<f64>,
    unitaries: Vec<Arc<CMatrix>>,
}

impl LcuBlock {
    pub fn new(coefficients: Vec<f64>, unitaries: Vec<Arc<CMatrix>>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() != unitaries.len() {
            return Err(Error::InvalidParameter("need one positive weight per unitary".into()));
        }
        if !coefficients.iter().all(|c| *c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter("LCU weights must be positive and finite".into()));
        }
        let n = unitaries[0].rows();
        if !n.is_power_of_two() || unitaries.iter().any(|u| u.rows() != n || u.cols() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: unitaries[0].cols() });
        }
        Ok(Self { coefficients, unitaries })
    }

    /// Weights `β_k/δ`, so that the block targets `A` itself when built from
    /// a decomposition of `δA`.
    pub fn from_decomposition(d: &LcuDecomposition<f64>, delta: f64) -> Result<Self> {
        Self::new(
            d.coefficients().iter().map(|b| b / delta).collect(),
            d.unitaries().iter().map(|u| Arc::new(u.clone())).collect(),
        )
    }

    /// Concatenates the term lists of several blocks.
    pub fn sum(parts: &[LcuBlock]) -> Result<Self> {
        let coefficients = parts.iter().flat_map(|b| b.coefficients.iter().copied()).collect();
        let unitaries = parts.iter().flat_map(|b| b.unitaries.iter().cloned()).collect();
        Self::new(coefficients, unitaries)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
    pub fn unitaries(&self) -> &[Arc<CMatrix>] {
        &self.unitaries
    }
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }
    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
    pub fn scale(&self) -> f64 {
        self.coefficients.iter().sum()
    }
    pub fn dim(&self) -> usize {
        self.unitaries[0].rows()
    }
    pub fn data_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }
    pub fn ancilla_qubits(&self) -> usize {
        self.len().next_power_of_two().trailing_zeros() as usize
    }

    /// `Σ c_j U_j` as a dense matrix.
    pub fn operator(&self) -> CMatrix {
        let n = self.dim();
        self.unitaries
            .iter()
            .zip(&self.coefficients)
            .fold(CMatrix::zeros(n, n), |acc, (u, &c)| &acc + &u.scale_re(c))
    }

    fn uniform_power_of_two(&self) -> bool {
        self.len().is_power_of_two() && self.coefficients.iter().all(|c| (c - self.coefficients[0]).abs() <= 1e-15 * c)
    }

    /// Ancilla preparation with amplitudes `√(c_j/Σc)`, zero-padded.
    pub fn prep_matrix(&self) -> CMatrix {
        let s = self.scale();
        let mut amps = vec![C64::new(0.0, 0.0); 1 << self.ancilla_qubits()];
        for (a, c) in amps.iter_mut().zip(&self.coefficients) {
            *a = C64::new((c / s).sqrt(), 0.0);
        }
        householder_prep(&amps)
    }

    /// Appends V, the controlled selection W and V† to `circ`, with every gate
    /// conditioned on `controls`. An equal-weight block without extra controls
    /// uses a plain Hadamard layer for V.
    pub fn append(&self, circ: &mut Circuit, ancilla: &Register, data: &Register, controls: &[Control]) -> Result<()> {
        if data.size != self.data_qubits() {
            return Err(Error::DimensionMismatch { expected: self.data_qubits(), found: data.size });
        }
        if ancilla.size < self.ancilla_qubits() {
            return Err(Error::DimensionMismatch { expected: self.ancilla_qubits(), found: ancilla.size });
        }
        let anc: Vec<usize> = ancilla.qubits()[..self.ancilla_qubits()].to_vec();
        let hadamard = controls.is_empty() && self.uniform_power_of_two();
        let (prep, unprep) = if anc.is_empty() || hadamard {
            (None, None)
        } else {
            let v = self.prep_matrix();
            let vd = v.adjoint();
            (Some(Arc::new(v)), Some(Arc::new(vd)))
        };
        if hadamard {
            for &q in &anc {
                circ.h(q)?;
            }
        } else if let Some(v) = prep {
            circ.unitary(anc.clone(), v, controls.to_vec())?;
        }
        for (j, u) in self.unitaries.iter().enumerate() {
            let mut ctl = controls.to_vec();
            ctl.extend(anc.iter().enumerate().map(|(b, &q)| Control { qubit: q, value: (j >> b) & 1 == 1 }));
            circ.unitary(data.qubits(), u.clone(), ctl)?;
        }
        if hadamard {
            for &q in &anc {
                circ.h(q)?;
            }
        } else if let Some(vd) = unprep {
            circ.unitary(anc, vd, controls.to_vec())?;
        }
        Ok(())
    }
}

fn binomial_u128(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.checked_mul(n - i)? / (i + 1);
    }
    Some(r)
}

/// `C(τ+K−1, K−1)`, or `None` on overflow.
pub fn multinomial_term_count(k: usize, tau: usize) -> Option<u128> {
    binomial_u128((tau + k - 1) as u128, (k - 1) as u128)
}

/// `K^τ`, or `None` on overflow.
pub fn ordered_term_count(k: usize, tau: usize) -> Option<u128> {
    (k as u128).checked_pow(tau as u32)
}

/// Every `(v₁..v_K)` with `Σv = τ` and its multinomial coefficient, first
/// component descending.
pub fn multinomial_terms(k: usize, tau: usize) -> Result<Vec<(u128, Vec<usize>)>> {
    if k == 0 || tau == 0 {
        return Err(Error::InvalidParameter(format!("need K >= 1 and tau >= 1, got K = {k}, tau = {tau}")));
    }
    let overflow = || Error::InvalidParameter(format!("multinomial coefficients overflow for K = {k}, tau = {tau}"));
    let count = multinomial_term_count(k, tau).ok_or_else(overflow)?;
    if count > 50_000_000 {
        return Err(Error::TermCeiling { terms: count, ceiling: 50_000_000 });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut v = vec![0usize; k];
    fn rec(i: usize, left: usize, v: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == v.len() {
            v[i] = left;
            out.push(v.clone());
            return;
        }
        for x in (0..=left).rev() {
            v[i] = x;
            rec(i + 1, left - x, v, out);
        }
    }
    let mut comps = Vec::new();
    rec(0, tau, &mut v, &mut comps);
    for c in comps {
        // τ!/(Πv!) as a product of binomials, exact in integers.
        let mut coef: u128 = 1;
        let mut rest = tau as u128;
        for &x in &c {
            coef = coef.checked_mul(binomial_u128(rest, x as u128).ok_or_else(overflow)?).ok_or_else(overflow)?;
            rest -= x as u128;
        }
        out.push((coef, c));
    }
    Ok(out)
}

/// How a τ-fold product of a block was expanded into single terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    /// Grouped by multiset; valid because the step operators commute.
    Multinomial,
    /// One term per ordered sequence.
    Ordered,
}

fn commute(a: &CMatrix, b: &CMatrix) -> bool {
    (&a.matmul(b) - &b.matmul(a)).max_abs() <= 1e-12
}

/// Expands `(X_d U)^τ`-style products of a step block into one block.
///
/// With `swap = Some(X)` each step is followed by `X` except the last, so
/// every product reads `X·S_{kτ}⋯S_{k1}` with `S_k = X U_k`. Terms are grouped
/// by multinomials only when all `S_k` commute.
pub fn expand_power(step: &LcuBlock, tau: usize, swap: Option<&CMatrix>, ceiling: u128) -> Result<(LcuBlock, Expansion)> {
    let k = step.len();
    let grouped = multinomial_term_count(k, tau).unwrap_or(u128::MAX);
    if grouped > ceiling {
        return Err(Error::TermCeiling { terms: grouped, ceiling });
    }
    let s: Vec<CMatrix> = step
        .unitaries()
        .iter()
        .map(|u| match swap {
            Some(x) => x.matmul(u),
            None => (**u).clone(),
        })
        .collect();
    let commuting = (0..k).all(|i| (i + 1..k).all(|j| commute(&s[i], &s[j])));
    let finish = |m: CMatrix| match swap {
        Some(x) => x.matmul(&m),
        None => m,
    };
    let c = step.coefficients();
    if commuting {
        let terms = multinomial_terms(k, tau)?;
        let powers: Vec<Vec<CMatrix>> = s
            .iter()
            .map(|m| {
                let mut p = vec![CMatrix::identity(m.rows())];
                for e in 1..=tau {
                    p.push(p[e - 1].matmul(m));
                }
                p
            })
            .collect();
        let mut coeffs = Vec::with_capacity(terms.len());
        let mut units = Vec::with_capacity(terms.len());
        for (mult, v) in terms {
            let w = v.iter().zip(c).fold(mult as f64, |acc, (&e, &ci)| acc * ci.powi(e as i32));
            let prod = v
                .iter()
                .enumerate()
                .fold(CMatrix::identity(step.dim()), |acc, (i, &e)| powers[i][e].matmul(&acc));
            coeffs.push(w);
            units.push(Arc::new(finish(prod)));
        }
        Ok((LcuBlock::new(coeffs, units)?, Expansion::Multinomial))
    } else {
        let count = ordered_term_count(k, tau).unwrap_or(u128::MAX);
        if count > ceiling {
            return Err(Error::TermCeiling { terms: count, ceiling });
        }
        let mut coeffs = Vec::with_capacity(count as usize);
        let mut units = Vec::with_capacity(count as usize);
        for idx in 0..count as usize {
            let mut rest = idx;
            let mut prod = CMatrix::identity(step.dim());
            let mut w = 1.0;
            for _ in 0..tau {
                let j = rest % k;
                rest /= k;
                prod = s[j].matmul(&prod);
                w *= c[j];
            }
            coeffs.push(w);
            units.push(Arc::new(finish(prod)));
        }
        Ok((LcuBlock::new(coeffs, units)?, Expansion::Ordered))
    }
}

/// `X` on the most significant data qubit, which swaps the halves of a
/// dilated register.
pub fn dilation_swap(dim: usize) -> CMatrix {
    let h = dim / 2;
    CMatrix::from_fn(dim, dim, |i, j| if (i + h) % dim == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcu::{decompose_four, decompose_two, reconstruct};
    use crate::qsim::{apply, post_select, prepare_input, RegisterLayout};
    use crate::CVector;

    fn ae(ng: usize) -> CMatrix {
        crate::fdmodel::FlowProblem::new(ng, 2.5e-4 * 1024.0 / (ng * ng) as f64, 1, 1.0, 10.0)
            .unwrap()
            .build_explicit()
            .unwrap()
    }

    #[test]
    fn multinomial_examples() {
        let t = multinomial_terms(2, 2).unwrap();
        assert_eq!(t, vec![(1, vec![2, 0]), (2, vec![1, 1]), (1, vec![0, 2])]);
        assert_eq!(multinomial_terms(4, 2).unwrap().len(), 10);
        for (k, tau) in [(2, 7), (4, 5), (3, 9)] {
            let sum: u128 = multinomial_terms(k, tau).unwrap().iter().map(|t| t.0).sum();
            assert_eq!(sum, (k as u128).pow(tau as u32));
            assert_eq!(multinomial_terms(k, tau).unwrap().len() as u128, multinomial_term_count(k, tau).unwrap());
        }
        assert!(multinomial_terms(0, 2).is_err());
    }

    #[test]
    fn circuit_block_matches_reconstruction() {
        // Brute-force oracle: post-selected circuit output ∝ reconstruct(d)|ψ⟩.
        let a = ae(4);
        for d in [decompose_four(&a, 0.1).unwrap(), decompose_two(&a, 0.1).unwrap()] {
            let block = LcuBlock::from_decomposition(&d, 1.0).unwrap();
            let layout = RegisterLayout::new(&[("data", block.data_qubits()), ("ancilla", block.ancilla_qubits())]).unwrap();
            let b = CVector::from_real(&[0.3, -1.0, 0.5, 2.0]).unwrap();
            let input = prepare_input(&layout, &b, d.dilated()).unwrap();
            let mut c = Circuit::new(layout.clone());
            block.append(&mut c, layout.register("ancilla").unwrap(), layout.register("data").unwrap(), &[]).unwrap();
            let out = apply(&input.state, &c, None).unwrap();
            let (s, p) = post_select(&out, &[("ancilla", 0)]).unwrap();
            let got = s.register_slice("data", &[("ancilla", 0)]).unwrap();
            let want = reconstruct(&d).matvec(&b);
            let got_top = got.segment(0, 4).scale_re(input.norm * block.scale() * p.sqrt());
            assert!(got_top.max_abs_diff(&want) < 1e-10, "{d:?}");
            if d.dilated() {
                assert!(got.segment(4, 4).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn weighted_prep_and_controls() {
        let u = Arc::new(CMatrix::identity(2));
        let block = LcuBlock::new(vec![1.0, 2.0, 3.0], vec![u.clone(), u.clone(), u]).unwrap();
        assert_eq!(block.ancilla_qubits(), 2);
        let v = block.prep_matrix();
        assert!((v[(2, 0)].re - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(v[(3, 0)].norm() < 1e-14);
        assert!((block.scale() - 6.0).abs() < 1e-15);
        let layout = RegisterLayout::new(&[("data", 1), ("ancilla", 2), ("flag", 1)]).unwrap();
        let mut c = Circuit::new(layout.clone());
        let flag = layout.qubit("flag", 0).unwrap();
        block
            .append(&mut c, layout.register("ancilla").unwrap(), layout.register("data").unwrap(), &[Control::on(flag)])
            .unwrap();
        // Flag off: the block must be the identity.
        let s = crate::qsim::QuantumState::zero(&layout);
        assert_eq!(apply(&s, &c, None).unwrap().amplitudes(), s.amplitudes());
        assert!(LcuBlock::new(vec![-1.0], vec![Arc::new(CMatrix::identity(2))]).is_err());
    }

    #[test]
    fn expansion_equals_power() {
        let a = ae(4);
        let d = decompose_four(&a, 0.05).unwrap();
        let step = LcuBlock::from_decomposition(&d, 1.0).unwrap();
        let (big, how) = expand_power(&step, 3, None, 100_000).unwrap();
        assert_eq!(how, Expansion::Multinomial);
        assert_eq!(big.len(), 20);
        let want = step.operator().powi(3);
        assert!(big.operator().max_abs_diff(&want) < 1e-9 * want.max_abs());

        let d2 = decompose_two(&a, 0.05).unwrap();
        let step2 = LcuBlock::from_decomposition(&d2, 1.0).unwrap();
        let x = dilation_swap(8);
        let (big2, how2) = expand_power(&step2, 2, Some(&x), 100_000).unwrap();
        assert_eq!(how2, Expansion::Ordered);
        let want2 = step2.operator().matmul(&x).matmul(&step2.operator());
        assert!(big2.operator().max_abs_diff(&want2) < 1e-9 * want2.max_abs());
        assert!(matches!(expand_power(&step, 40, None, 1000), Err(Error::TermCeiling { .. })));
    }
}
