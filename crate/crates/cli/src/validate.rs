//! Dry-run feasibility checks. Nothing here builds or simulates a circuit.

use serde::{Deserialize, Serialize};
use tmcqc::fdmodel::Scheme;
use tmcqc::lcu::{select_delta, LcuKind};
use tmcqc::linalg::spectral_norm;
use tmcqc::qsim::MAX_QUBITS;
use tmcqc::tmcqc::{
    complexity_report, multinomial_term_count, ordered_term_count, success_probability, MarchPlan, Method,
    MAX_ONESHOT_DIM,
};
use tmcqc::Error;

use crate::config::ExperimentConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Ok,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub level: Level,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub method: Method,
    pub epsilon: f64,
    pub alpha: f64,
    pub chi: f64,
    pub qubits: Option<usize>,
    pub log10_shots_required: Option<f64>,
    /// Order-of-magnitude estimate from state size and oracle count.
    pub est_seconds: Option<f64>,
    pub checks: Vec<Check>,
    /// First failing precondition, which decides the exit code.
    #[serde(skip)]
    pub first_failure: Option<Error>,
}

impl Validation {
    pub fn feasible(&self) -> bool {
        self.first_failure.is_none()
    }

    fn push(&mut self, name: &str, result: Result<String, Error>) {
        let (level, detail) = match result {
            Ok(d) => (Level::Ok, d),
            Err(e) => {
                let d = e.to_string();
                self.first_failure.get_or_insert(e);
                (Level::Fail, d)
            }
        };
        self.checks.push(Check { name: name.into(), level, detail });
    }

    fn warn(&mut self, name: &str, detail: String) {
        self.checks.push(Check { name: name.into(), level: Level::Warn, detail });
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{} at eps = {}: alpha = {:.4}, chi = {:.4}\n",
            self.method, self.epsilon, self.alpha, self.chi
        );
        for c in &self.checks {
            let tag = match c.level {
                Level::Ok => "ok  ",
                Level::Warn => "warn",
                Level::Fail => "FAIL",
            };
            s += &format!("  [{tag}] {}: {}\n", c.name, c.detail);
        }
        s += &format!("  feasible: {}\n", self.feasible());
        s
    }
}

/// Nominal cost of one amplitude update, used for the wall-time estimate.
const SECONDS_PER_AMPLITUDE_OP: f64 = 2e-9;

fn expansion_terms(plan: &MarchPlan) -> Option<u128> {
    let k = plan.kind.k() * plan.p_min.unwrap_or(1).max(1);
    let commuting =
        plan.kind == LcuKind::Four && plan.problem.bc() == tmcqc::fdmodel::BoundaryCondition::Periodic;
    if commuting {
        multinomial_term_count(k, plan.tau())
    } else {
        ordered_term_count(k, plan.tau())
    }
}

/// Checks the plan built from `cfg` at its first `ε`.
pub fn validate(cfg: &ExperimentConfig) -> CliResult<Validation> {
    let (eps, eps_given) = match cfg.primary_epsilon() {
        Ok(e) => (e, true),
        Err(_) => (1.0, false),
    };
    let plan = cfg.plan(cfg.problem.clone(), eps);
    let p = &plan.problem;
    let mut v = Validation {
        method: plan.method,
        epsilon: eps,
        alpha: p.alpha(),
        chi: p.chi(),
        qubits: None,
        log10_shots_required: None,
        est_seconds: None,
        checks: Vec::new(),
        first_failure: None,
    };
    let scheme = plan.method.scheme();
    if !eps_given {
        v.warn("epsilon", "the config lists no epsilon; circuit checks use eps = 1".into());
    }

    match scheme {
        Scheme::Explicit => v.push("stability", p.check_explicit_stability().map(|_| format!("alpha = {:.4} <= 0.5", p.alpha()))),
        Scheme::Implicit => {
            let norm = spectral_norm(&p.implicit_series_argument());
            let r = if norm < 1.0 {
                Ok(format!("series argument norm {norm:.4} < 1"))
            } else {
                Err(Error::Divergent { norm })
            };
            v.push("convergence", r);
        }
    }

    let (alpha, chi) = (p.alpha(), p.chi().abs());
    if chi <= alpha {
        v.push("peclet", Ok(format!("chi = {chi:.4} <= alpha = {alpha:.4}")));
    } else {
        let gamma = 1.0 + 2.0 * alpha - (alpha - chi).abs() - (alpha + chi);
        if scheme == Scheme::Implicit && gamma <= 0.0 {
            v.push("peclet", Err(Error::Peclet { alpha, chi, gamma }));
        } else {
            v.warn("peclet", format!("chi = {chi:.4} > alpha = {alpha:.4}; the stencil is not monotone"));
        }
    }

    if let Ok(a) = plan.step_operator() {
        let norm = spectral_norm(&a);
        match (plan.delta, select_delta(norm, eps)) {
            (Some(d), _) => {
                let x = eps * d * norm;
                let msg = format!("delta = {d} given; delta*|A| = {:.3}, eps*delta*|A| = {x:.3e}", d * norm);
                if d * norm < 1.0 && x >= 1.0 {
                    v.push("delta window", Ok(msg));
                } else {
                    v.warn("delta window", msg);
                }
            }
            (None, Ok(c)) => {
                let msg = format!("delta = {:.4}; eps*delta*|A| = {:.3e}", c.delta, eps * c.delta * norm);
                if c.feasible {
                    v.push("delta window", Ok(msg));
                } else {
                    v.warn("delta window", format!("{msg}; both inequalities cannot hold at this eps"));
                }
            }
            (None, Err(e)) => v.push("delta window", Err(e)),
        }
    }

    if plan.method.is_expansion() {
        let r = match expansion_terms(&plan) {
            Some(n) if n <= plan.term_ceiling as u128 => Ok(format!("{n} expanded terms")),
            Some(n) => Err(Error::TermCeiling { terms: n, ceiling: plan.term_ceiling as u128 }),
            None => Err(Error::TermCeiling { terms: u128::MAX, ceiling: plan.term_ceiling as u128 }),
        };
        v.push("term ceiling", r);
    }
    if plan.method.is_oneshot() {
        let blocks = plan.tau() + 1 + plan.c_pad.unwrap_or_else(|| p.default_pad());
        let dim = p.ng() * blocks;
        let r = if dim <= MAX_ONESHOT_DIM && dim.is_power_of_two() {
            Ok(format!("block system dimension {dim}"))
        } else {
            Err(Error::Infeasible(format!(
                "one-shot dimension {dim} must be a power of two no larger than {MAX_ONESHOT_DIM}"
            )))
        };
        v.push("one-shot size", r);
    }

    // Sizing an already infeasible plan would only repeat the first failure.
    let sizing = if v.feasible() { Some(complexity_report(&plan, cfg.grid.eps_u)) } else { None };
    match sizing {
        Some(Ok(c)) => {
            v.qubits = Some(c.qubits_layout);
            let r = if c.qubits_layout <= MAX_QUBITS {
                Ok(format!("{} qubits (table scaling {:.1})", c.qubits_layout, c.qubits_table))
            } else {
                Err(Error::QubitCap { requested: c.qubits_layout, cap: MAX_QUBITS })
            };
            v.push("qubits", r);
            let applications = match plan.method {
                Method::Tmcqc2 | Method::Tmcqc4 => plan.tau() as f64,
                _ => 1.0,
            };
            let terms = (plan.kind.k() * c.p_min.unwrap_or(1)) as f64;
            v.est_seconds =
                Some(applications * terms * 2f64.powi(c.qubits_layout as i32) * p.ng() as f64 * SECONDS_PER_AMPLITUDE_OP);
        }
        Some(Err(e)) => v.push("complexity", Err(e)),
        None => {}
    }

    if v.feasible() {
        // The classical trajectory stands in for the quantum one in the shot estimate.
        let traj = p.classical_march(scheme).map(|t| vec![t.fields[0].clone(), t.last().clone()]);
        match traj.and_then(|t| success_probability(&plan, &t)) {
            Ok(s) => {
                v.log10_shots_required = Some(s.log10_shots_required);
                v.push("shots", Ok(format!("about 10^{:.1} shots per post-selected sample", s.log10_shots_required)));
            }
            Err(e) => v.warn("shots", format!("no estimate: {e}")),
        }
        if let Some(t) = v.est_seconds {
            v.push("wall time", Ok(format!("roughly {t:.1e} s of state-vector work")));
        }
    }
    Ok(v)
}
