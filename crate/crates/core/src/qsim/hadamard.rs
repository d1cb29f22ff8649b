use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::circuit::{Circuit, Control};
use super::sampling::sample;
use super::state::{apply, QuantumState};
use crate::error::{Error, Result};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Re,
    Im,
}

/// Estimates `Re⟨ψ|U|ψ⟩` or `Im⟨ψ|U|ψ⟩` where `prep` takes `|0…0⟩` to `|ψ⟩`.
/// A fresh ancilla on top of `prep`'s layout is put through H, controls `U`,
/// gets S† for the imaginary part, and a final H; the estimate is `2·P(0) − 1`.
/// With `shots = None` the probability is read off the state exactly.
pub fn hadamard_test(
    prep: &Circuit,
    u: &CMatrix,
    part: Part,
    shots: Option<u64>,
    seed: u64,
) -> Result<f64> {
    let base = prep.layout();
    let n = base.n_qubits();
    if u.rows() != 1 << n || u.cols() != 1 << n {
        return Err(Error::DimensionMismatch { expected: 1 << n, found: u.rows() });
    }
    let layout = base.with_register("hadamard", 1)?;
    let anc = layout.qubit("hadamard", 0)?;
    let mut c = Circuit::new(layout.clone());
    for g in prep.gates() {
        c.push(g.clone())?;
    }
    c.h(anc)?;
    c.unitary((0..n).collect(), Arc::new(u.clone()), vec![Control::on(anc)])?;
    if part == Part::Im {
        c.sdg(anc)?;
    }
    c.h(anc)?;
    let out = apply(&QuantumState::zero(&layout), &c, None)?;
    let p0 = match shots {
        None => out.pattern_probability(&[("hadamard", 0)])?,
        Some(s) => sample(&out, s, None, seed, &[("hadamard", 0)])?.p_succ_hat,
    };
    Ok(2.0 * p0 - 1.0)
}
