//! The six time-marching circuit families, their success-probability
//! accounting and the complexity formulas they are compared against.
//!
//! | method | scheme   | structure                               |
//! |--------|----------|-----------------------------------------|
//! | 1      | explicit | one block for the expanded `A_E^τ`      |
//! | 2      | explicit | τ serial blocks gated by a clock        |
//! | 3      | implicit | one block for the expanded series power |
//! | 4      | implicit | τ serial truncated-series blocks        |
//! | 5      | explicit | one block inverting the one-shot system |
//! | 6      | implicit | one block inverting the one-shot system |

mod accounting;
mod blocks;
mod extrapolate;
mod march;
#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use accounting::{complexity_report, success_probability, ComplexityReport, SuccessReport, SPARSITY};
pub use blocks::{
    dilation_swap, expand_power, multinomial_term_count, multinomial_terms, ordered_term_count, Expansion, LcuBlock,
};
pub use extrapolate::{run_extrapolated, ExtrapolatedRun, ExtrapolationStyle};
pub use march::{run, run_tmcqc1, run_tmcqc2, run_tmcqc3, run_tmcqc4, run_tmcqc5_6, step_block, StepBlock};

use crate::error::{Error, Result};
use crate::fdmodel::{FlowProblem, Scheme};
use crate::lcu::LcuKind;
use crate::linalg::spectral_norm;
use crate::qsim::NoiseModel;
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tmcqc1,
    Tmcqc2,
    Tmcqc3,
    Tmcqc4,
    Tmcqc5,
    Tmcqc6,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Tmcqc1, Method::Tmcqc2, Method::Tmcqc3, Method::Tmcqc4, Method::Tmcqc5, Method::Tmcqc6];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Result<Self> {
        Self::ALL
            .get((n as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("no method {n}")))
    }

    pub fn scheme(self) -> Scheme {
        match self {
            Method::Tmcqc1 | Method::Tmcqc2 | Method::Tmcqc5 => Scheme::Explicit,
            _ => Scheme::Implicit,
        }
    }

    pub fn is_serial(self) -> bool {
        matches!(self, Method::Tmcqc2 | Method::Tmcqc4)
    }

    pub fn is_expansion(self) -> bool {
        matches!(self, Method::Tmcqc1 | Method::Tmcqc3)
    }

    pub fn is_oneshot(self) -> bool {
        matches!(self, Method::Tmcqc5 | Method::Tmcqc6)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tmcqc{}", self.number())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.strip_prefix("tmcqc").unwrap_or(&t).trim_start_matches('-');
        digits
            .parse::<u8>()
            .map_err(|_| Error::InvalidParameter(format!("unknown method '{s}'")))
            .and_then(Self::from_number)
    }
}

/// How a shot-mode run turns counts into fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// One circuit for the whole march, measured once at the end.
    Coherent,
    /// Each step is measured, rescaled classically and re-encoded.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    ExactState,
    AssumeNonnegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotConfig {
    pub shots: u64,
    pub noise: NoiseModel,
    #[serde(default = "default_readout")]
    pub readout: Readout,
    #[serde(default = "default_sign")]
    pub sign: SignMode,
}

fn default_readout() -> Readout {
    Readout::Coherent
}
fn default_sign() -> SignMode {
    SignMode::ExactState
}

impl ShotConfig {
    pub fn new(shots: u64, noise: NoiseModel) -> Self {
        Self { shots, noise, readout: Readout::Coherent, sign: SignMode::ExactState }
    }
    pub fn per_step(self) -> Self {
        Self { readout: Readout::PerStep, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Shots(ShotConfig),
}

pub const DEFAULT_TERM_CEILING: u64 = 100_000;
pub const DEFAULT_EPS_N: f64 = 1e-10;
/// Largest one-shot system dimension simulated densely.
pub const MAX_ONESHOT_DIM: usize = 512;

/// Everything a march needs. Immutable once built; runs never mutate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchPlan {
    pub method: Method,
    pub problem: FlowProblem,
    pub epsilon: f64,
    pub kind: LcuKind,
    /// Neumann terms; derived from `eps_n` when absent.
    pub p_min: Option<usize>,
    pub eps_n: f64,
    /// Block scaling `δ`; falls back to the problem's `delta_scale`, then to
    /// `select_delta`.
    pub delta: Option<f64>,
    pub c_pad: Option<usize>,
    pub mode: Mode,
    pub term_ceiling: u64,
}

impl MarchPlan {
    pub fn new(method: Method, problem: FlowProblem, epsilon: f64) -> Self {
        Self {
            method,
            problem,
            epsilon,
            kind: LcuKind::Four,
            p_min: None,
            eps_n: DEFAULT_EPS_N,
            delta: None,
            c_pad: None,
            mode: Mode::Exact,
            term_ceiling: DEFAULT_TERM_CEILING,
        }
    }

    pub fn with_kind(mut self, kind: LcuKind) -> Self {
        self.kind = kind;
        self
    }
    pub fn with_p_min(mut self, p: usize) -> Self {
        self.p_min = Some(p);
        self
    }
    pub fn with_eps_n(mut self, eps_n: f64) -> Self {
        self.eps_n = eps_n;
        self
    }
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }
    pub fn with_c_pad(mut self, c: usize) -> Self {
        self.c_pad = Some(c);
        self
    }
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
    pub fn with_term_ceiling(mut self, ceiling: u64) -> Self {
        self.term_ceiling = ceiling;
        self
    }
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn tau(&self) -> usize {
        self.problem.tau()
    }

    /// The matrix whose block encoding drives the march: `A_E` for explicit
    /// methods and the series argument `I − A_I` for implicit ones.
    pub fn step_operator(&self) -> Result<CMatrix> {
        match self.method.scheme() {
            Scheme::Explicit => self.problem.build_explicit(),
            Scheme::Implicit => Ok(self.problem.implicit_series_argument()),
        }
    }

    /// Resolved `δ` for an operator of norm `norm`.
    pub fn delta_for(&self, norm: f64) -> Result<f64> {
        let d = match self.delta.or(self.problem.delta_scale()) {
            Some(d) => d,
            None => crate::lcu::select_delta(norm, self.epsilon)?.delta,
        };
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta = {d} must be positive")));
        }
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon = {} must be positive", self.epsilon)));
        }
        if !(self.eps_n > 0.0 && self.eps_n < 1.0) {
            return Err(Error::InvalidParameter(format!("eps_n = {} outside (0, 1)", self.eps_n)));
        }
        if self.p_min == Some(0) {
            return Err(Error::InvalidParameter("p_min must be at least 1".into()));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("delta = {d} must be positive")));
            }
        }
        if let Mode::Shots(s) = &self.mode {
            if s.shots == 0 {
                return Err(Error::InvalidParameter("shots must be at least 1".into()));
            }
            s.noise.validate()?;
            if s.readout == Readout::PerStep && !self.method.is_serial() {
                return Err(Error::InvalidParameter(format!("per-step readout needs a serial method, not {}", self.method)));
            }
        }
        match self.method.scheme() {
            Scheme::Explicit => self.problem.check_explicit_stability(),
            Scheme::Implicit => {
                let norm = spectral_norm(&self.problem.implicit_series_argument());
                if norm >= 1.0 {
                    return Err(Error::Divergent { norm });
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub qubits: usize,
    pub registers: Vec<(String, usize)>,
    /// Number of LCU oracle applications on the success path.
    pub lcu_applications: usize,
    /// Terms in the block that is actually executed (per step for serial methods).
    pub terms: usize,
    pub expansion: Option<Expansion>,
    pub deltas: Vec<f64>,
    pub p_min: Option<usize>,
    pub dilated: bool,
    pub gate_count: usize,
    pub fault_sites: usize,
    /// Final-time MSE against the classical march.
    pub mse_classical: Option<f64>,
    /// Final-time MSE against the analytical kernel, when one exists.
    pub mse_analytical: Option<f64>,
    pub shots: Option<u64>,
    /// Relative error of the truncated one-shot inverse on `b`.
    pub truncation_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchResult {
    pub method: Method,
    pub epsilon: f64,
    pub tau: usize,
    /// Time index of each trajectory entry.
    pub steps: Vec<usize>,
    pub trajectory: Vec<CVector>,
    /// Post-selection probability per readout: per step for serial runs,
    /// a single entry otherwise.
    pub p_succ: Vec<f64>,
    pub p_succ_total: f64,
    /// Classical factor multiplied into the final post-selected amplitudes.
    pub rescale: f64,
    pub diagnostics: Diagnostics,
}

impl MarchResult {
    /// Field at the last march step `τ`. One-shot histories also carry the
    /// padded copies past `τ`; those are skipped here.
    pub fn final_field(&self) -> &CVector {
        self.field_at(self.tau).expect("trajectory records step tau")
    }

    /// Field at time index `step`, if recorded.
    pub fn field_at(&self, step: usize) -> Option<&CVector> {
        self.steps.iter().position(|&s| s == step).map(|i| &self.trajectory[i])
    }

    /// Trajectory as CSV: one row per recorded step, real parts.
    pub fn to_csv(&self) -> String {
        let n = self.trajectory.first().map_or(0, |v| v.dim());
        let mut out = String::from("step");
        for i in 0..n {
            out.push_str(&format!(",u{i}"));
        }
        out.push('\n');
        for (s, v) in self.steps.iter().zip(&self.trajectory) {
            out.push_str(&s.to_string());
            for z in v.as_slice() {
                out.push_str(&format!(",{:.17e}", z.re));
            }
            out.push('\n');
        }
        out
    }

    pub fn p_succ_csv(&self) -> String {
        let mut out = String::from("index,p_succ\n");
        for (i, p) in self.p_succ.iter().enumerate() {
            out.push_str(&format!("{},{:.17e}\n", i + 1, p));
        }
        out
    }
}

/// Stateless 64-bit mixer used to derive independent per-step seeds.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, step: usize, which: u64) -> u64 {
    splitmix64(seed ^ ((step as u64) << 8 | which).wrapping_mul(0x2545_f491_4f6c_dd1d))
}

/// Final-time MSE of `field` against the classical march and, when it exists,
/// the analytical kernel.
pub(crate) fn oracle_errors(plan: &MarchPlan, field: &CVector) -> Result<(f64, Option<f64>)> {
    let p = &plan.problem;
    let classical = p.classical_march(plan.method.scheme())?;
    let mc = crate::analysis::mse(field, classical.last())?;
    let ma = match p.analytical_solution(p.tau() as f64 * p.dt()) {
        Ok(exact) => Some(crate::analysis::mse(field, &exact)?),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((mc, ma))
}
