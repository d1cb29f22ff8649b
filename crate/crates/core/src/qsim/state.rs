use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::circuit::{Circuit, Control, Gate};
use super::layout::RegisterLayout;
use crate::error::{Error, Result};
use crate::{CMatrix, CVector, C64};

/// Amplitudes over a register layout. States produced by post-selection carry
/// the probability of the selected branch.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amps: Vec<C64>,
    layout: RegisterLayout,
    p_succ: Option<f64>,
}

pub const NORM_TOL: f64 = 1e-10;

impl QuantumState {
    pub fn zero(layout: &RegisterLayout) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        amps[0] = C64::new(1.0, 0.0);
        Self { amps, layout: layout.clone(), p_succ: None }
    }

    pub fn basis(layout: &RegisterLayout, index: u64) -> Result<Self> {
        if index as usize >= layout.dim() {
            return Err(Error::InvalidParameter(format!("basis index {index} out of range")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        amps[index as usize] = C64::new(1.0, 0.0);
        Ok(Self { amps, layout: layout.clone(), p_succ: None })
    }

    pub fn from_amplitudes(layout: &RegisterLayout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), found: amps.len() });
        }
        if !amps.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let s = Self { amps, layout: layout.clone(), p_succ: None };
        let norm = s.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!("state norm {norm} is not 1")));
        }
        Ok(s)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }
    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }
    pub fn p_succ(&self) -> Option<f64> {
        self.p_succ
    }
    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Probability that the given registers hold the given values.
    pub fn pattern_probability(&self, pattern: &[(&str, u64)]) -> Result<f64> {
        let (mask, value) = self.layout.pattern(pattern)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as u64) & mask == value)
            .map(|(_, z)| z.norm_sqr())
            .sum())
    }

    /// Amplitudes of `register` with other registers fixed by `fixed`
    /// (registers not mentioned are taken as zero).
    pub fn register_slice(&self, register: &str, fixed: &[(&str, u64)]) -> Result<CVector> {
        let r = self.layout.register(register)?.clone();
        let base = self.layout.compose(fixed)?;
        if base & r.mask() != 0 {
            return Err(Error::InvalidParameter(format!("pattern fixes {register} itself")));
        }
        let out = (0..1u64 << r.size).map(|v| self.amps[(base | (v << r.offset)) as usize]).collect();
        CVector::from_vec(out)
    }
}

/// Projects onto the pattern subspace and renormalizes.
pub fn post_select(state: &QuantumState, pattern: &[(&str, u64)]) -> Result<(QuantumState, f64)> {
    let (mask, value) = state.layout.pattern(pattern)?;
    let mut amps = state.amps.clone();
    let mut p = 0.0;
    for (i, z) in amps.iter_mut().enumerate() {
        if (i as u64) & mask == value {
            p += z.norm_sqr();
        } else {
            *z = C64::new(0.0, 0.0);
        }
    }
    if p < 1e-300 {
        return Err(Error::ZeroProbability { p });
    }
    let s = 1.0 / p.sqrt();
    amps.iter_mut().for_each(|z| *z *= s);
    Ok((QuantumState { amps, layout: state.layout.clone(), p_succ: Some(p) }, p))
}

/// Calls `f` on every index whose `fixed` bits are zero, for an `n`-qubit space.
#[inline]
fn for_each_free(n: usize, fixed: u64, mut f: impl FnMut(u64)) {
    let hi = fixed | !((1u64 << n) - 1);
    let mut x = 0u64;
    loop {
        f(x);
        x = ((x | hi).wrapping_add(1)) & !hi;
        if x == 0 {
            break;
        }
    }
}

fn apply_1q(amps: &mut [C64], n: usize, q: usize, m: [[C64; 2]; 2]) {
    let bit = 1u64 << q;
    for_each_free(n, bit, |i| {
        let (i0, i1) = (i as usize, (i | bit) as usize);
        let (a, b) = (amps[i0], amps[i1]);
        amps[i0] = m[0][0] * a + m[0][1] * b;
        amps[i1] = m[1][0] * a + m[1][1] * b;
    });
}

fn flip(amps: &mut [C64], n: usize, q: usize) {
    let bit = 1u64 << q;
    for_each_free(n, bit, |i| amps.swap(i as usize, (i | bit) as usize));
}

fn apply_controlled(amps: &mut [C64], n: usize, targets: &[usize], controls: &[Control], u: &CMatrix) {
    let (mut cmask, mut cval) = (0u64, 0u64);
    for c in controls {
        cmask |= 1 << c.qubit;
        if c.value {
            cval |= 1 << c.qubit;
        }
    }
    let dim = 1usize << targets.len();
    let offsets: Vec<u64> = (0..dim as u64)
        .map(|k| targets.iter().enumerate().fold(0u64, |o, (b, &q)| o | (((k >> b) & 1) << q)))
        .collect();
    let tmask = offsets[dim - 1];
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let data = u.as_slice();
    for_each_free(n, tmask | cmask, |free| {
        let base = free | cval;
        for (k, o) in offsets.iter().enumerate() {
            buf[k] = amps[(base | o) as usize];
        }
        for (r, o) in offsets.iter().enumerate() {
            let row = &data[r * dim..(r + 1) * dim];
            amps[(base | o) as usize] = row.iter().zip(&buf).fold(C64::new(0.0, 0.0), |s, (a, b)| s + a * b);
        }
    });
}

fn prob_one(amps: &[C64], n: usize, q: usize) -> f64 {
    let bit = 1u64 << q;
    let mut p = 0.0;
    for_each_free(n, bit, |i| p += amps[(i | bit) as usize].norm_sqr());
    p
}

/// Measures `q` with the given uniform draw, collapses and renormalizes;
/// returns the outcome.
fn collapse(amps: &mut [C64], n: usize, q: usize, u: f64) -> bool {
    let p1 = prob_one(amps, n, q);
    let one = u < p1;
    let bit = 1u64 << q;
    let keep = if one { p1 } else { 1.0 - p1 };
    let s = 1.0 / keep.max(1e-300).sqrt();
    for_each_free(n, bit, |i| {
        let (i0, i1) = (i as usize, (i | bit) as usize);
        if one {
            amps[i0] = C64::new(0.0, 0.0);
            amps[i1] *= s;
        } else {
            amps[i1] = C64::new(0.0, 0.0);
            amps[i0] *= s;
        }
    });
    one
}

/// How bit-flip faults enter a run.
pub(crate) enum Faults<'a> {
    None,
    /// Sorted `(gate index, qubit)` pairs; X is applied after that gate.
    Fixed(&'a [(usize, usize)]),
    /// Fresh draws per gate.
    Random { p_gate: f64, p_res: f64, rng: &'a mut ChaCha8Rng },
}

const DEFINITE: f64 = 1e-20;

pub(crate) fn evolve(amps: &mut [C64], n: usize, gates: &[Gate], mut faults: Faults<'_>) -> Result<()> {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let mut fixed_pos = 0usize;
    for (g, gate) in gates.iter().enumerate() {
        match gate {
            Gate::H(q) => apply_1q(amps, n, *q, [[h, h], [h, -h]]),
            Gate::X(q) => flip(amps, n, *q),
            Gate::Cnot { control, target } => {
                let (cb, tb) = (1u64 << control, 1u64 << target);
                for_each_free(n, cb | tb, |i| amps.swap((i | cb) as usize, (i | cb | tb) as usize));
            }
            Gate::Ry { qubit, theta } => {
                let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
                apply_1q(amps, n, *qubit, [[C64::new(c, 0.0), C64::new(-s, 0.0)], [C64::new(s, 0.0), C64::new(c, 0.0)]]);
            }
            Gate::Sdg(q) => apply_1q(amps, n, *q, [[one, z], [z, C64::new(0.0, -1.0)]]),
            Gate::Unitary { targets, matrix, controls } => {
                apply_controlled(amps, n, targets, controls, matrix)
            }
            Gate::Reset(q) => {
                let p1 = prob_one(amps, n, *q);
                let draw = match &mut faults {
                    Faults::Random { rng, .. } => Some(rng.gen::<f64>()),
                    _ => None,
                };
                let is_one = if p1 <= DEFINITE {
                    false
                } else if p1 >= 1.0 - DEFINITE {
                    true
                } else {
                    match draw {
                        Some(u) => collapse(amps, n, *q, u),
                        None => {
                            return Err(Error::Unsupported(
                                "reset of a superposed qubit needs trajectory sampling".into(),
                            ))
                        }
                    }
                };
                if is_one {
                    flip(amps, n, *q);
                }
                if let Faults::Random { p_res, rng, .. } = &mut faults {
                    if *p_res > 0.0 && rng.gen::<f64>() < *p_res {
                        flip(amps, n, *q);
                    }
                }
            }
            Gate::Measure(_) => {}
        }
        match &mut faults {
            Faults::None => {}
            Faults::Fixed(list) => {
                while fixed_pos < list.len() && list[fixed_pos].0 == g {
                    flip(amps, n, list[fixed_pos].1);
                    fixed_pos += 1;
                }
            }
            Faults::Random { p_gate, rng, .. } => {
                if *p_gate > 0.0 && !matches!(gate, Gate::Reset(_) | Gate::Measure(_)) {
                    for q in gate.touched() {
                        if rng.gen::<f64>() < *p_gate {
                            flip(amps, n, q);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs `circuit` on `state`. Without a noise model the evolution is exact;
/// with one, a single bit-flip trajectory is drawn from the model's seed.
pub fn apply(
    state: &QuantumState,
    circuit: &Circuit,
    noise: Option<&super::noise::NoiseModel>,
) -> Result<QuantumState> {
    if state.layout != *circuit.layout() {
        return Err(Error::InvalidParameter("state and circuit layouts differ".into()));
    }
    let n = state.layout.n_qubits();
    let mut out = state.clone();
    out.p_succ = None;
    match noise {
        None => evolve(&mut out.amps, n, circuit.gates(), Faults::None)?,
        Some(m) => {
            let mut rng = m.rng();
            evolve(
                &mut out.amps,
                n,
                circuit.gates(),
                Faults::Random { p_gate: m.p_gate, p_res: m.p_res, rng: &mut rng },
            )?
        }
    }
    Ok(out)
}

/// Amplitude-encoded input on the `data` register.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub state: QuantumState,
    /// Classical norm of the encoded field.
    pub norm: f64,
    prep: PrepKind,
}

#[derive(Debug, Clone)]
enum PrepKind {
    Basis(u64),
    Uniform,
    General(Vec<C64>),
}

impl PreparedInput {
    /// Gates taking `|0…0⟩` to the prepared state: X flips for a basis state,
    /// a Hadamard layer for a uniform field, otherwise a Householder reflection
    /// on the data register.
    pub fn circuit(&self) -> Result<Circuit> {
        let layout = self.state.layout();
        let data = layout.register("data")?.clone();
        let mut c = Circuit::new(layout.clone());
        match &self.prep {
            PrepKind::Basis(idx) => {
                for b in 0..data.size {
                    if (idx >> b) & 1 == 1 {
                        c.x(data.offset + b)?;
                    }
                }
            }
            PrepKind::Uniform => {
                for q in data.qubits() {
                    c.h(q)?;
                }
            }
            PrepKind::General(psi) => {
                c.unitary(data.qubits(), Arc::new(householder_prep(psi)), vec![])?;
            }
        }
        Ok(c)
    }

    pub fn is_basis_state(&self) -> bool {
        matches!(self.prep, PrepKind::Basis(_))
    }
}

/// Unitary whose first column is the unit vector `psi`.
pub fn householder_prep(psi: &[C64]) -> CMatrix {
    let n = psi.len();
    let phase = if psi[0].norm() > 0.0 { psi[0] / psi[0].norm() } else { C64::new(1.0, 0.0) };
    let p: Vec<C64> = psi.iter().map(|z| z / phase).collect();
    let mut v = p.iter().map(|z| -z).collect::<Vec<_>>();
    v[0] += C64::new(1.0, 0.0);
    let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let mut m = CMatrix::identity(n);
    if vv > 1e-30 {
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] -= v[i] * v[j].conj() * (2.0 / vv);
            }
        }
    }
    m.scale(phase)
}

/// Encodes `field/‖field‖` into the `data` register, zero-padded. In dilated
/// mode the field occupies the upper half of the register, `[0, b]`.
pub fn prepare_input(layout: &RegisterLayout, field: &CVector, dilated: bool) -> Result<PreparedInput> {
    let data = layout.register("data")?.clone();
    let cap = 1usize << data.size;
    let (cap_field, shift) = if dilated { (cap / 2, cap / 2) } else { (cap, 0) };
    if field.dim() > cap_field {
        return Err(Error::DimensionMismatch { expected: cap_field, found: field.dim() });
    }
    let norm = field.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidParameter("cannot encode a zero field".into()));
    }
    let mut reg = vec![C64::new(0.0, 0.0); cap];
    for (i, z) in field.as_slice().iter().enumerate() {
        reg[shift + i] = z / norm;
    }
    let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
    for (v, z) in reg.iter().enumerate() {
        amps[v << data.offset] = *z;
    }
    let nonzero: Vec<usize> = (0..cap).filter(|&i| reg[i].norm() > 0.0).collect();
    let prep = if nonzero.len() == 1 && (reg[nonzero[0]] - C64::new(1.0, 0.0)).norm() < 1e-15 {
        PrepKind::Basis(nonzero[0] as u64)
    } else if nonzero.len() == cap && reg.iter().all(|z| (z - reg[0]).norm() < 1e-15) && reg[0].im == 0.0 && reg[0].re > 0.0 {
        PrepKind::Uniform
    } else {
        PrepKind::General(reg)
    };
    Ok(PreparedInput {
        state: QuantumState { amps, layout: layout.clone(), p_succ: None },
        norm,
        prep,
    })
}
