use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::layout::RegisterLayout;
use crate::error::{Error, Result};
use crate::CMatrix;

/// Unitary payloads must pass this max-entry `U†U − I` check.
pub const UNITARY_TOL: f64 = 1e-10;

/// A control qubit and the value it must hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Control {
    pub qubit: usize,
    pub value: bool,
}

impl Control {
    pub fn on(qubit: usize) -> Self {
        Self { qubit, value: true }
    }
    pub fn off(qubit: usize) -> Self {
        Self { qubit, value: false }
    }
}

#[derive(Debug, Clone)]
pub enum Gate {
    H(usize),
    X(usize),
    Cnot { control: usize, target: usize },
    Ry { qubit: usize, theta: f64 },
    Sdg(usize),
    /// Dense payload on `targets` (little-endian: matrix bit `k` is `targets[k]`),
    /// applied where every control holds its value.
    Unitary { targets: Vec<usize>, matrix: Arc<CMatrix>, controls: Vec<Control> },
    Reset(usize),
    /// Terminal marker: the listed qubits are read out.
    Measure(Vec<usize>),
}

impl Gate {
    /// Qubits a gate acts on or is conditioned by.
    pub fn touched(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::Sdg(q) | Gate::Reset(q) => vec![*q],
            Gate::Ry { qubit, .. } => vec![*qubit],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Unitary { targets, controls, .. } => {
                targets.iter().copied().chain(controls.iter().map(|c| c.qubit)).collect()
            }
            Gate::Measure(qs) => qs.clone(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Gate::H(_) => "h",
            Gate::X(_) => "x",
            Gate::Cnot { .. } => "cnot",
            Gate::Ry { .. } => "ry",
            Gate::Sdg(_) => "sdg",
            Gate::Unitary { .. } => "unitary",
            Gate::Reset(_) => "reset",
            Gate::Measure(_) => "measure",
        }
    }
}

/// Serializable summary of one gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub kind: String,
    pub qubits: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Control>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload_hash: Option<String>,
}

fn payload_hash(m: &CMatrix) -> String {
    let mut h = DefaultHasher::new();
    m.rows().hash(&mut h);
    for z in m.as_slice() {
        z.re.to_bits().hash(&mut h);
        z.im.to_bits().hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

#[derive(Debug, Clone)]
pub struct Circuit {
    layout: RegisterLayout,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(layout: RegisterLayout) -> Self {
        Self { layout, gates: Vec::new() }
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    fn check_qubits(&self, qs: &[usize]) -> Result<()> {
        let n = self.layout.n_qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q >= n {
                return Err(Error::InvalidParameter(format!("qubit {q} outside {n}-qubit layout")));
            }
            if qs[..i].contains(&q) {
                return Err(Error::InvalidParameter(format!("qubit {q} used twice in one gate")));
            }
        }
        Ok(())
    }

    /// Validates and appends a gate.
    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        self.check_qubits(&gate.touched())?;
        if let Gate::Unitary { targets, matrix, .. } = &gate {
            let dim = 1usize << targets.len();
            if targets.is_empty() || matrix.rows() != dim || matrix.cols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: matrix.rows() });
            }
            let defect = matrix.unitary_defect();
            if defect > UNITARY_TOL {
                return Err(Error::NotUnitary { deviation: defect });
            }
        }
        self.gates.push(gate);
        Ok(self)
    }

    pub fn h(&mut self, q: usize) -> Result<&mut Self> {
        self.push(Gate::H(q))
    }
    pub fn x(&mut self, q: usize) -> Result<&mut Self> {
        self.push(Gate::X(q))
    }
    pub fn cnot(&mut self, control: usize, target: usize) -> Result<&mut Self> {
        self.push(Gate::Cnot { control, target })
    }
    pub fn ry(&mut self, qubit: usize, theta: f64) -> Result<&mut Self> {
        self.push(Gate::Ry { qubit, theta })
    }
    pub fn sdg(&mut self, q: usize) -> Result<&mut Self> {
        self.push(Gate::Sdg(q))
    }
    pub fn reset(&mut self, q: usize) -> Result<&mut Self> {
        self.push(Gate::Reset(q))
    }
    pub fn measure(&mut self, qubits: Vec<usize>) -> Result<&mut Self> {
        self.push(Gate::Measure(qubits))
    }

    pub fn unitary(
        &mut self,
        targets: Vec<usize>,
        matrix: Arc<CMatrix>,
        controls: Vec<Control>,
    ) -> Result<&mut Self> {
        self.push(Gate::Unitary { targets, matrix, controls })
    }

    /// Payload on a whole named register.
    pub fn unitary_on(
        &mut self,
        register: &str,
        matrix: Arc<CMatrix>,
        controls: Vec<Control>,
    ) -> Result<&mut Self> {
        let targets = self.layout.register(register)?.qubits();
        self.unitary(targets, matrix, controls)
    }

    /// Appends every gate of `other`, which must share this layout.
    pub fn extend(&mut self, other: &Circuit) -> Result<&mut Self> {
        if other.layout != self.layout {
            return Err(Error::InvalidParameter("layout mismatch".into()));
        }
        self.gates.extend(other.gates.iter().cloned());
        Ok(self)
    }

    /// Controls requiring `register == value`.
    pub fn controls_for(&self, register: &str, value: u64) -> Result<Vec<Control>> {
        let r = self.layout.register(register)?;
        if r.size < 64 && value >= (1u64 << r.size) {
            return Err(Error::InvalidParameter(format!("value {value} overflows {register}")));
        }
        Ok((0..r.size).map(|b| Control { qubit: r.offset + b, value: (value >> b) & 1 == 1 }).collect())
    }

    pub fn has_reset(&self) -> bool {
        self.gates.iter().any(|g| matches!(g, Gate::Reset(_)))
    }

    /// Union of all `Measure` targets; every qubit if there are none.
    pub fn measured_qubits(&self) -> Vec<usize> {
        let mut qs: Vec<usize> = self
            .gates
            .iter()
            .filter_map(|g| if let Gate::Measure(q) = g { Some(q.clone()) } else { None })
            .flatten()
            .collect();
        if qs.is_empty() {
            return (0..self.layout.n_qubits()).collect();
        }
        qs.sort_unstable();
        qs.dedup();
        qs
    }

    pub fn records(&self) -> Vec<GateRecord> {
        self.gates
            .iter()
            .map(|g| {
                let (qubits, controls, theta, hash) = match g {
                    Gate::Unitary { targets, matrix, controls } => {
                        (targets.clone(), Some(controls.clone()), None, Some(payload_hash(matrix)))
                    }
                    Gate::Ry { qubit, theta } => (vec![*qubit], None, Some(*theta), None),
                    other => (other.touched(), None, None, None),
                };
                GateRecord { kind: g.kind().to_string(), qubits, controls, theta, payload_hash: hash }
            })
            .collect()
    }

    /// Number of (gate, touched-qubit) pairs, the fault opportunities under bit-flip noise.
    pub fn fault_sites(&self) -> usize {
        self.gates.iter().filter(|g| !matches!(g, Gate::Measure(_))).map(|g| g.touched().len()).sum()
    }
}
