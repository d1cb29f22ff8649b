use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense state-vector memory cap.
pub const MAX_QUBITS: usize = 26;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub offset: usize,
    pub size: usize,
}

impl Register {
    pub fn qubit(&self, i: usize) -> usize {
        assert!(i < self.size, "qubit {i} outside register {}", self.name);
        self.offset + i
    }
    pub fn qubits(&self) -> Vec<usize> {
        (self.offset..self.offset + self.size).collect()
    }
    pub fn mask(&self) -> u64 {
        ((1u64 << self.size) - 1) << self.offset
    }
    /// Value of this register inside a basis index.
    pub fn value_of(&self, index: u64) -> u64 {
        (index >> self.offset) & ((1u64 << self.size) - 1)
    }
}

/// Named registers packed little-endian: the first register holds the least
/// significant qubits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    registers: Vec<Register>,
    n: usize,
}

impl RegisterLayout {
    /// Registers listed least significant first, e.g. `[("data", 4), ("ancilla", 2), ("clock", 3)]`.
    pub fn new(spec: &[(&str, usize)]) -> Result<Self> {
        let mut registers = Vec::with_capacity(spec.len());
        let mut offset = 0;
        for (name, size) in spec {
            if registers.iter().any(|r: &Register| r.name == *name) {
                return Err(Error::InvalidParameter(format!("duplicate register {name}")));
            }
            registers.push(Register { name: (*name).to_string(), offset, size: *size });
            offset += size;
        }
        if offset == 0 {
            return Err(Error::InvalidParameter("layout has no qubits".into()));
        }
        if offset > MAX_QUBITS {
            return Err(Error::QubitCap { requested: offset, cap: MAX_QUBITS });
        }
        Ok(Self { registers, n: offset })
    }

    /// This layout with one more register on top; existing qubit indices are kept.
    pub fn with_register(&self, name: &str, size: usize) -> Result<Self> {
        let spec: Vec<(&str, usize)> = self
            .registers
            .iter()
            .map(|r| (r.name.as_str(), r.size))
            .chain(std::iter::once((name, size)))
            .collect();
        Self::new(&spec)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1usize << self.n
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn register(&self, name: &str) -> Result<&Register> {
        self.registers
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::InvalidParameter(format!("no register named {name}")))
    }

    pub fn qubit(&self, name: &str, i: usize) -> Result<usize> {
        let r = self.register(name)?;
        if i >= r.size {
            return Err(Error::InvalidParameter(format!("qubit {i} outside register {name}")));
        }
        Ok(r.offset + i)
    }

    /// Basis index with the given register values, all other qubits zero.
    pub fn compose(&self, values: &[(&str, u64)]) -> Result<u64> {
        let mut idx = 0u64;
        for (name, v) in values {
            let r = self.register(name)?;
            if r.size < 64 && *v >= (1u64 << r.size) {
                return Err(Error::InvalidParameter(format!("value {v} overflows register {name}")));
            }
            idx |= v << r.offset;
        }
        Ok(idx)
    }

    /// Mask/value pair selecting the given register values.
    pub fn pattern(&self, values: &[(&str, u64)]) -> Result<(u64, u64)> {
        let mut mask = 0u64;
        for (name, _) in values {
            mask |= self.register(name)?.mask();
        }
        Ok((mask, self.compose(values)?))
    }

    /// Bitstring with the most significant register first, registers separated by `|`.
    pub fn format_bits(&self, index: u64) -> String {
        self.registers
            .iter()
            .rev()
            .filter(|r| r.size > 0)
            .map(|r| {
                let v = r.value_of(index);
                (0..r.size).rev().map(|b| if (v >> b) & 1 == 1 { '1' } else { '0' }).collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}
