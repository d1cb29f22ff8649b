use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent bit-flip channels: after every gate on each touched qubit,
/// after every reset, and on every measured bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub p_gate: f64,
    pub p_meas: f64,
    pub p_res: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn new(p_gate: f64, p_meas: f64, p_res: f64, rng_seed: u64) -> Result<Self> {
        for (name, p) in [("p_gate", p_gate), ("p_meas", p_meas), ("p_res", p_res)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(Self { p_gate, p_meas, p_res, rng_seed })
    }

    /// All three error rates set to `p`.
    pub fn uniform(p: f64, rng_seed: u64) -> Result<Self> {
        Self::new(p, p, p, rng_seed)
    }

    pub fn noiseless(rng_seed: u64) -> Self {
        Self { p_gate: 0.0, p_meas: 0.0, p_res: 0.0, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.p_gate, self.p_meas, self.p_res, self.rng_seed).map(|_| ())
    }

    pub fn is_noiseless(&self) -> bool {
        self.p_gate == 0.0 && self.p_meas == 0.0 && self.p_res == 0.0
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(NoiseModel::new(0.1, 0.0, 1.0, 3).is_ok());
        assert!(NoiseModel::new(-0.1, 0.0, 0.0, 3).is_err());
        assert!(NoiseModel::uniform(1.5, 3).is_err());
        assert!(NoiseModel::noiseless(0).is_noiseless());
    }
}
