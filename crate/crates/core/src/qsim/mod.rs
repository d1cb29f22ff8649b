//! Dense state-vector simulation with named registers, bit-flip noise and
//! shot sampling.

mod circuit;
mod hadamard;
mod layout;
mod noise;
mod sampling;
mod state;

pub use circuit::{Circuit, Control, Gate, GateRecord, UNITARY_TOL};
pub use hadamard::{hadamard_test, Part};
pub use layout::{Register, RegisterLayout, MAX_QUBITS};
pub use noise::NoiseModel;
pub use sampling::{estimate_field, sample, sample_circuit, ShotRecord, SignSource};
pub use state::{apply, householder_prep, post_select, prepare_input, PreparedInput, QuantumState, NORM_TOL};
