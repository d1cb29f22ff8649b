use serde::{Deserialize, Serialize};

use super::march::{advance, run, step_block};
use super::{derive_seed, oracle_errors, MarchPlan, Mode};
use crate::analysis::richardson_fields;
use crate::error::{Error, Result};
use crate::CVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationStyle {
    /// Two independent marches, combined per time index.
    Trajectory,
    /// Both ε values advance the current extrapolated field every step.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolatedRun {
    pub style: ExtrapolationStyle,
    pub eps1: f64,
    pub eps2: f64,
    pub steps: Vec<usize>,
    pub eps1_trajectory: Vec<CVector>,
    pub eps2_trajectory: Vec<CVector>,
    pub extrapolated: Vec<CVector>,
    pub mse_eps1: f64,
    pub mse_eps2: f64,
    pub mse_extrapolated: f64,
    pub mse_analytical_eps1: Option<f64>,
    pub mse_analytical_eps2: Option<f64>,
    pub mse_analytical_extrapolated: Option<f64>,
    /// `1 − MSE_extrapolated/MSE(ε₁)`.
    pub gain: f64,
}

fn reseed(plan: &MarchPlan, which: u64) -> MarchPlan {
    let mut p = plan.clone();
    if let Mode::Shots(cfg) = &mut p.mode {
        cfg.noise = cfg.noise.with_seed(derive_seed(cfg.noise.rng_seed, 0, which));
    }
    p
}

/// Richardson-extrapolated march with `ε₁ = plan.epsilon` and `ε₂ = eps2`.
pub fn run_extrapolated(plan: &MarchPlan, eps2: f64, style: ExtrapolationStyle) -> Result<ExtrapolatedRun> {
    let eps1 = plan.epsilon;
    if !(eps1 > eps2 && eps2 > 0.0) {
        return Err(Error::InvalidParameter(format!("need eps1 > eps2 > 0, got {eps1}, {eps2}")));
    }
    let gamma = eps1 / eps2;
    let plan1 = reseed(plan, 11);
    let plan2 = reseed(&plan.clone().with_epsilon(eps2), 12);
    let tau = plan.tau();
    let (steps, t1, t2, ex) = match style {
        ExtrapolationStyle::Trajectory => {
            let r1 = run(&plan1)?;
            let r2 = run(&plan2)?;
            if r1.steps != r2.steps {
                return Err(Error::InvalidParameter("runs recorded different steps".into()));
            }
            let ex = r1
                .trajectory
                .iter()
                .zip(&r2.trajectory)
                .map(|(a, b)| richardson_fields(a, b, gamma))
                .collect::<Result<Vec<_>>>()?;
            (r1.steps, r1.trajectory, r2.trajectory, ex)
        }
        ExtrapolationStyle::PerStep => {
            if !plan.method.is_serial() {
                return Err(Error::InvalidParameter(format!(
                    "step-wise extrapolation needs a serial method, not {}",
                    plan.method
                )));
            }
            plan1.validate()?;
            plan2.validate()?;
            let (s1, s2) = (step_block(&plan1)?, step_block(&plan2)?);
            let u0 = plan.problem.initial_condition();
            let (mut t1, mut t2, mut ex) = (vec![u0.clone()], vec![u0.clone()], vec![u0]);
            for k in 1..=tau {
                let (a, _) = advance(&s1, &t1[k - 1], &plan1.mode, (k, 1))?;
                let (b, _) = advance(&s2, &t2[k - 1], &plan2.mode, (k, 2))?;
                let (e1, _) = advance(&s1, &ex[k - 1], &plan1.mode, (k, 3))?;
                let (e2, _) = advance(&s2, &ex[k - 1], &plan2.mode, (k, 4))?;
                t1.push(a);
                t2.push(b);
                ex.push(richardson_fields(&e1, &e2, gamma)?);
            }
            ((0..=tau).collect(), t1, t2, ex)
        }
    };
    let at = |traj: &[CVector]| -> Result<CVector> {
        steps
            .iter()
            .position(|&s| s == tau)
            .map(|i| traj[i].clone())
            .ok_or_else(|| Error::InvalidParameter("trajectory lacks the final step".into()))
    };
    let (m1, a1) = oracle_errors(plan, &at(&t1)?)?;
    let (m2, a2) = oracle_errors(plan, &at(&t2)?)?;
    let (me, ae) = oracle_errors(plan, &at(&ex)?)?;
    Ok(ExtrapolatedRun {
        style,
        eps1,
        eps2,
        steps,
        eps1_trajectory: t1,
        eps2_trajectory: t2,
        extrapolated: ex,
        mse_eps1: m1,
        mse_eps2: m2,
        mse_extrapolated: me,
        mse_analytical_eps1: a1,
        mse_analytical_eps2: a2,
        mse_analytical_extrapolated: ae,
        gain: if m1 > 0.0 { 1.0 - me / m1 } else { 0.0 },
    })
}
