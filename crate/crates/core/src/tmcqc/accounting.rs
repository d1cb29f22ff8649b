use serde::{Deserialize, Serialize};

use super::blocks::{multinomial_term_count, ordered_term_count};
use super::march::clock_bits;
use super::{MarchPlan, Method};
use crate::error::{Error, Result};
use crate::fdmodel::{BoundaryCondition, Scheme};
use crate::lcu::{neumann_p_min, LcuKind};
use crate::linalg::{condition_number, spectral_norm};
use crate::CVector;

/// Stencil sparsity `s = d + 2` for the second-order 1D stencil.
pub const SPARSITY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    /// Number of oracle applications on the success path.
    pub g_l: usize,
    /// `εδ‖A‖`.
    pub eps_delta_norm: f64,
    /// `‖Ψ_τ‖²/‖Ψ₀‖²`.
    pub norm_ratio_sq: f64,
    pub p_succ: f64,
    pub shots_required: f64,
    pub eta: f64,
    /// Base-10 logs, which stay finite when `G_L` is large.
    pub log10_p_succ: f64,
    pub log10_shots_required: f64,
    /// Single-block `(2εδ‖Aψ‖/√β)²` with `β = 2`.
    pub beta_form_single_block: f64,
    /// Single-block `(εδ‖Aψ‖)²`.
    pub plain_form_single_block: f64,
    /// Branch weight this implementation's single block actually carries,
    /// `(2εδ‖Aψ‖/K)²`: the `K` weights `β/δ` sum to `K/(2εδ)`.
    pub block_single_block: f64,
}

/// Resolved series length for implicit methods.
fn series_terms(plan: &MarchPlan) -> Result<usize> {
    match plan.p_min {
        Some(p) => Ok(p),
        None => neumann_p_min(spectral_norm(&plan.problem.implicit_series_argument()), plan.eps_n),
    }
}

fn oracle_applications(plan: &MarchPlan) -> Result<usize> {
    let tau = plan.tau();
    Ok(match plan.method {
        Method::Tmcqc2 => tau,
        Method::Tmcqc4 => tau * series_terms(plan)?.pow(3),
        _ => 1,
    })
}

/// Predicted post-selection probability and shot count for a march whose
/// first and last entries of `trajectory` are `Ψ₀` and `Ψ_τ`.
pub fn success_probability(plan: &MarchPlan, trajectory: &[CVector]) -> Result<SuccessReport> {
    let (first, last) = match (trajectory.first(), trajectory.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidParameter("empty trajectory".into())),
    };
    let (n0, nt) = (first.norm_sqr(), last.norm_sqr());
    if n0 == 0.0 || nt == 0.0 {
        return Err(Error::InvalidParameter("trajectory has a zero-norm endpoint".into()));
    }
    let a = plan.step_operator()?;
    let norm = spectral_norm(&a);
    let delta = plan.delta_for(norm)?;
    let x = plan.epsilon * delta * norm;
    let g = oracle_applications(plan)?;
    let ratio = nt / n0;
    let two_g = 2.0 * g as f64;
    let log10_p = two_g * x.log10() + ratio.log10();
    let eta = 1.0 / x;
    let log10_s = two_g * eta.log10() - ratio.log10();
    let psi = first.normalized()?;
    let x_psi = plan.epsilon * delta * a.matvec(&psi).norm();
    let beta: f64 = 2.0;
    Ok(SuccessReport {
        g_l: g,
        eps_delta_norm: x,
        norm_ratio_sq: ratio,
        p_succ: 10f64.powf(log10_p),
        shots_required: 10f64.powf(log10_s),
        eta,
        log10_p_succ: log10_p,
        log10_shots_required: log10_s,
        beta_form_single_block: (2.0 * x_psi / beta.sqrt()).powi(2),
        plain_form_single_block: x_psi * x_psi,
        block_single_block: (2.0 * x_psi / plan.kind.k() as f64).powi(2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub method: Method,
    pub tau: usize,
    pub ng: usize,
    pub p_min: Option<usize>,
    pub lcu_depth: f64,
    /// Qubit scaling from the asymptotic table.
    pub qubits_table: f64,
    /// Register sizes this implementation would allocate.
    pub qubits_layout: usize,
    pub sparsity: usize,
    pub kappa: Option<f64>,
    pub classical_cost: f64,
    pub epsilon_u: f64,
    /// Gate count of one Hamiltonian-simulation unitary.
    pub g_u: f64,
}

fn ceil_log2(x: u128) -> usize {
    if x <= 1 {
        0
    } else {
        (128 - (x - 1).leading_zeros()) as usize
    }
}

/// Table-level costs of a plan; nothing is simulated. `eps_u` is the
/// Hamiltonian-simulation precision entering `G_U`.
pub fn complexity_report(plan: &MarchPlan, eps_u: f64) -> Result<ComplexityReport> {
    if eps_u.is_nan() || eps_u <= 0.0 {
        return Err(Error::InvalidParameter(format!("eps_u = {eps_u} must be positive")));
    }
    let p = &plan.problem;
    let (tau, ng) = (plan.tau(), p.ng());
    let (t, n) = (tau as f64, ng as f64);
    let k = plan.kind.k();
    let blocks = tau + 1 + plan.c_pad.unwrap_or_else(|| p.default_pad());
    let p_min = match plan.method {
        Method::Tmcqc1 | Method::Tmcqc2 => None,
        Method::Tmcqc5 => Some(plan.p_min.unwrap_or(blocks)),
        _ => Some(series_terms(plan)?),
    };
    let pf = p_min.unwrap_or(1) as f64;
    let p3 = pf.powi(3);
    let lcu_depth = match plan.method {
        Method::Tmcqc1 => t * t,
        Method::Tmcqc2 => t,
        Method::Tmcqc3 => t.powf(p3),
        Method::Tmcqc4 => t * p3,
        Method::Tmcqc5 | Method::Tmcqc6 => p3,
    };
    let qubits_table = match plan.method {
        Method::Tmcqc1 | Method::Tmcqc2 => (n * t).log2(),
        Method::Tmcqc3 => p3 * (t * n).log2(),
        _ => (t * n * pf).log2(),
    };

    let dil = usize::from(plan.kind == LcuKind::Two);
    let step_terms = (k * p_min.unwrap_or(1)) as u128;
    let commuting = plan.kind == LcuKind::Four && p.bc() == BoundaryCondition::Periodic;
    let expanded = if commuting {
        multinomial_term_count(step_terms as usize, tau)
    } else {
        ordered_term_count(step_terms as usize, tau)
    }
    .unwrap_or(u128::MAX);
    let data = ng.trailing_zeros() as usize + dil;
    let qubits_layout = match plan.method {
        Method::Tmcqc1 | Method::Tmcqc3 => data + ceil_log2(expanded),
        Method::Tmcqc2 | Method::Tmcqc4 => data + ceil_log2(step_terms) + clock_bits(tau),
        Method::Tmcqc5 | Method::Tmcqc6 => {
            (ng * blocks).next_power_of_two().trailing_zeros() as usize + dil + ceil_log2(step_terms)
        }
    };

    let kappa = match plan.method.scheme() {
        Scheme::Explicit => condition_number(&p.build_explicit()?).ok(),
        Scheme::Implicit => condition_number(&p.build_implicit()).ok(),
    };
    let s = SPARSITY as f64;
    let classical_cost = match plan.method {
        Method::Tmcqc1 | Method::Tmcqc2 => n * s * t,
        _ => n * s * t * kappa.unwrap_or(f64::INFINITY) * (1.0 / plan.eps_n).ln(),
    };
    // The logarithm is clamped at 1 so that ε ≤ ε_U does not yield a negative count.
    let l = (plan.epsilon / eps_u).max(std::f64::consts::E).ln();
    let g_u = (s * plan.epsilon + 1.0) * (n.ln() + l.powf(2.5)) * l;
    Ok(ComplexityReport {
        method: plan.method,
        tau,
        ng,
        p_min,
        lcu_depth,
        qubits_table,
        qubits_layout,
        sparsity: SPARSITY,
        kappa,
        classical_cost,
        epsilon_u: eps_u,
        g_u,
    })
}
