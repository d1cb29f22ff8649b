use std::sync::Arc;

use super::blocks::{dilation_swap, expand_power, LcuBlock};
use super::{derive_seed, oracle_errors, Diagnostics, MarchPlan, MarchResult, Method, Mode, Readout, ShotConfig, SignMode};
use super::MAX_ONESHOT_DIM;
use crate::error::{Error, Result};
use crate::fdmodel::Scheme;
use crate::lcu::{decompose, neumann_p_min};
use crate::linalg::{solve, spectral_norm};
use crate::qsim::{
    apply, estimate_field, prepare_input, sample_circuit, Circuit, QuantumState, RegisterLayout, SignSource,
};
use crate::{CMatrix, CVector};

/// One time step as an LCU block, with the `δ` values and series length used.
#[derive(Debug, Clone)]
pub struct StepBlock {
    pub block: LcuBlock,
    pub dilated: bool,
    pub deltas: Vec<f64>,
    pub p_min: Option<usize>,
    /// Size of the physical field.
    pub n: usize,
}

/// Blocks for `Σ_{p<P} M^p`, each power decomposed and scaled on its own.
/// Zero powers (nilpotent tails) are dropped.
fn series_block(plan: &MarchPlan, m: &CMatrix, p_terms: usize) -> Result<(LcuBlock, Vec<f64>, bool)> {
    let n = m.rows();
    let mut parts = Vec::with_capacity(p_terms);
    let mut deltas = Vec::with_capacity(p_terms);
    let mut dilated = false;
    let mut pow = CMatrix::identity(n);
    for p in 0..p_terms {
        if p > 0 {
            pow = pow.matmul(m);
        }
        let norm = spectral_norm(&pow);
        if norm < 1e-14 {
            continue;
        }
        let delta = plan.delta_for(norm)?;
        let d = decompose(&pow.scale_re(delta), plan.epsilon, plan.kind)?;
        dilated = d.dilated();
        parts.push(LcuBlock::from_decomposition(&d, delta)?);
        deltas.push(delta);
    }
    if parts.is_empty() {
        return Err(Error::Infeasible("series has no nonzero terms".into()));
    }
    Ok((LcuBlock::sum(&parts)?, deltas, dilated))
}

/// The per-step block of a plan: `A_E` for explicit methods, the truncated
/// series of `I − A_I` for implicit ones.
pub fn step_block(plan: &MarchPlan) -> Result<StepBlock> {
    let a = plan.step_operator()?;
    let n = a.rows();
    match plan.method.scheme() {
        Scheme::Explicit => {
            let delta = plan.delta_for(spectral_norm(&a))?;
            let d = decompose(&a.scale_re(delta), plan.epsilon, plan.kind)?;
            Ok(StepBlock {
                block: LcuBlock::from_decomposition(&d, delta)?,
                dilated: d.dilated(),
                deltas: vec![delta],
                p_min: None,
                n,
            })
        }
        Scheme::Implicit => {
            let p = match plan.p_min {
                Some(p) => p,
                None => neumann_p_min(spectral_norm(&a), plan.eps_n)?,
            };
            let (block, deltas, dilated) = series_block(plan, &a, p)?;
            Ok(StepBlock { block, dilated, deltas, p_min: Some(p), n })
        }
    }
}

fn layout_of(block: &LcuBlock, clock: Option<usize>) -> Result<RegisterLayout> {
    let mut spec = vec![("data", block.data_qubits()), ("ancilla", block.ancilla_qubits())];
    if let Some(c) = clock {
        spec.push(("clock", c));
    }
    RegisterLayout::new(&spec)
}

fn registers(layout: &RegisterLayout) -> Vec<(String, usize)> {
    layout.registers().iter().map(|r| (r.name.clone(), r.size)).collect()
}

/// Bits needed to hold `τ − 1`.
pub(crate) fn clock_bits(tau: usize) -> usize {
    (usize::BITS - (tau.saturating_sub(1)).leading_zeros()) as usize
}

fn x_gate() -> Arc<CMatrix> {
    Arc::new(CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).expect("2x2"))
}

/// Decrements the clock on the ancilla-zero branch: bit `i` flips iff bits
/// `0..i` are all zero, applied from the top bit down.
fn decrement(c: &mut Circuit) -> Result<()> {
    let layout = c.layout().clone();
    let clock = layout.register("clock")?.clone();
    let anc = c.controls_for("ancilla", 0)?;
    let x = x_gate();
    for i in (0..clock.size).rev() {
        let mut ctl = anc.clone();
        ctl.extend((0..i).map(|b| crate::qsim::Control::off(clock.qubit(b))));
        c.unitary(vec![clock.qubit(i)], x.clone(), ctl)?;
    }
    Ok(())
}

/// Serial clocked march: the block for step `k` fires on `clock == τ − k`;
/// between steps the clock counts down on the success branch and, for dilated
/// blocks, the data halves are swapped back.
struct SerialCircuit {
    layout: RegisterLayout,
    init: Circuit,
    blocks: Vec<Circuit>,
    links: Vec<Circuit>,
}

impl SerialCircuit {
    fn build(step: &StepBlock, tau: usize) -> Result<Self> {
        let layout = layout_of(&step.block, Some(clock_bits(tau)))?;
        let anc = layout.register("ancilla")?.clone();
        let data = layout.register("data")?.clone();
        let mut init = Circuit::new(layout.clone());
        let clock = layout.register("clock")?.clone();
        for b in 0..clock.size {
            if ((tau - 1) >> b) & 1 == 1 {
                init.x(clock.qubit(b))?;
            }
        }
        let mut blocks = Vec::with_capacity(tau);
        let mut links = Vec::with_capacity(tau);
        for k in 1..=tau {
            let mut b = Circuit::new(layout.clone());
            let ctl = b.controls_for("clock", (tau - k) as u64)?;
            step.block.append(&mut b, &anc, &data, &ctl)?;
            blocks.push(b);
            let mut l = Circuit::new(layout.clone());
            if k < tau {
                if step.dilated {
                    l.x(data.qubit(data.size - 1))?;
                }
                decrement(&mut l)?;
            }
            links.push(l);
        }
        Ok(Self { layout, init, blocks, links })
    }

    fn full(&self, prep: &Circuit) -> Result<Circuit> {
        let mut c = Circuit::new(self.layout.clone());
        c.extend(prep)?.extend(&self.init)?;
        for (b, l) in self.blocks.iter().zip(&self.links) {
            c.extend(b)?.extend(l)?;
        }
        Ok(c)
    }

    fn march_only(&self) -> Result<Circuit> {
        self.full(&Circuit::new(self.layout.clone()))
    }
}

fn top(v: &CVector, n: usize) -> CVector {
    v.segment(0, n)
}

fn sign_source<'a>(cfg: &ShotConfig, exact: &'a CVector) -> SignSource<'a> {
    match cfg.sign {
        SignMode::ExactState => SignSource::ExactState(exact),
        SignMode::AssumeNonnegative => SignSource::AssumeNonnegative,
    }
}

/// Shot estimate of the success-branch data amplitudes, rescaled.
#[allow(clippy::too_many_arguments)]
fn shot_readout(
    input: &crate::qsim::PreparedInput,
    circuit: &Circuit,
    cfg: &ShotConfig,
    seed: u64,
    success: &[(&str, u64)],
    exact_slice: &CVector,
    n: usize,
    factor: f64,
) -> Result<(CVector, f64)> {
    let mut full = input.circuit()?;
    full.extend(circuit)?;
    let zero = QuantumState::zero(circuit.layout());
    let rec = sample_circuit(&zero, &full, cfg.shots, &cfg.noise.with_seed(seed), success)?;
    let est = estimate_field(&rec, "data", sign_source(cfg, exact_slice))?;
    let p = rec.p_succ_hat;
    Ok((top(&est, n).scale_re(factor * p.sqrt()), p))
}

/// One block application outside any clock, used by per-step readout and by
/// step-wise extrapolation.
pub(crate) fn advance(step: &StepBlock, u: &CVector, mode: &Mode, seed_tag: (usize, u64)) -> Result<(CVector, f64)> {
    let layout = layout_of(&step.block, None)?;
    let input = prepare_input(&layout, u, step.dilated)?;
    let mut c = Circuit::new(layout.clone());
    step.block.append(&mut c, layout.register("ancilla")?, layout.register("data")?, &[])?;
    let out = apply(&input.state, &c, None)?;
    let success = [("ancilla", 0u64)];
    let slice = out.register_slice("data", &success)?;
    let factor = input.norm * step.block.scale();
    match mode {
        Mode::Exact => {
            let p = out.pattern_probability(&success)?;
            Ok((top(&slice, step.n).scale_re(factor), p))
        }
        Mode::Shots(cfg) => {
            let seed = derive_seed(cfg.noise.rng_seed, seed_tag.0, seed_tag.1);
            let normed = slice.normalized()?;
            shot_readout(&input, &c, cfg, seed, &success, &normed, step.n, factor)
        }
    }
}

fn diagnostics(layout: &RegisterLayout, circuit: &Circuit) -> Diagnostics {
    Diagnostics {
        qubits: layout.n_qubits(),
        registers: registers(layout),
        lcu_applications: 1,
        terms: 0,
        expansion: None,
        deltas: Vec::new(),
        p_min: None,
        dilated: false,
        gate_count: circuit.len(),
        fault_sites: circuit.fault_sites(),
        mse_classical: None,
        mse_analytical: None,
        shots: None,
        truncation_error: None,
    }
}

fn finish(plan: &MarchPlan, mut r: MarchResult) -> Result<MarchResult> {
    let (mc, ma) = oracle_errors(plan, r.final_field())?;
    r.diagnostics.mse_classical = Some(mc);
    r.diagnostics.mse_analytical = ma;
    if let Mode::Shots(cfg) = &plan.mode {
        r.diagnostics.shots = Some(cfg.shots);
    }
    r.p_succ_total = r.p_succ.iter().product();
    Ok(r)
}

fn run_serial(plan: &MarchPlan) -> Result<MarchResult> {
    let tau = plan.tau();
    let step = step_block(plan)?;
    let u0 = plan.problem.initial_condition();
    let scale = step.block.scale();
    let circ = SerialCircuit::build(&step, tau)?;
    let march = circ.march_only()?;
    let mut diag = diagnostics(&circ.layout, &march);
    diag.lcu_applications = tau;
    diag.terms = step.block.len();
    diag.deltas = step.deltas.clone();
    diag.p_min = step.p_min;
    diag.dilated = step.dilated;
    let norm0 = u0.norm();

    let mut r = MarchResult {
        method: plan.method,
        epsilon: plan.epsilon,
        tau,
        steps: vec![0],
        trajectory: vec![u0.clone()],
        p_succ: Vec::new(),
        p_succ_total: 1.0,
        rescale: norm0 * scale.powi(tau as i32),
        diagnostics: diag,
    };

    if let Mode::Shots(cfg) = &plan.mode {
        if cfg.readout == Readout::PerStep {
            let mut u = u0;
            for k in 1..=tau {
                let (next, p) = advance(&step, &u, &plan.mode, (k, 0))?;
                r.steps.push(k);
                r.trajectory.push(next.clone());
                r.p_succ.push(p);
                u = next;
            }
            r.rescale = scale.powi(tau as i32);
            return finish(plan, r);
        }
    }

    let input = prepare_input(&circ.layout, &u0, step.dilated)?;
    let mut state = apply(&input.state, &circ.init, None)?;
    let mut prev = 1.0;
    for k in 1..=tau {
        state = apply(&state, &circ.blocks[k - 1], None)?;
        let pattern = [("ancilla", 0u64), ("clock", (tau - k) as u64)];
        let pk = state.pattern_probability(&pattern)?;
        if pk < 1e-300 {
            return Err(Error::ZeroProbability { p: pk });
        }
        if matches!(plan.mode, Mode::Exact) {
            let slice = state.register_slice("data", &pattern)?;
            r.steps.push(k);
            r.trajectory.push(top(&slice, step.n).scale_re(norm0 * scale.powi(k as i32)));
            r.p_succ.push(pk / prev);
        }
        prev = pk;
        state = apply(&state, &circ.links[k - 1], None)?;
    }
    if let Mode::Shots(cfg) = &plan.mode {
        let success = [("ancilla", 0u64), ("clock", 0u64)];
        let exact = state.register_slice("data", &success)?.normalized()?;
        let seed = derive_seed(cfg.noise.rng_seed, 0, 7);
        let (u_tau, p) = shot_readout(&input, &march, cfg, seed, &success, &exact, step.n, r.rescale)?;
        r.diagnostics.fault_sites = march.fault_sites() + input.circuit()?.fault_sites();
        r.steps.push(tau);
        r.trajectory.push(u_tau);
        r.p_succ.push(p);
    }
    finish(plan, r)
}

/// Runs one block on `field` and reads the rescaled success branch.
fn execute_block(
    plan: &MarchPlan,
    step: &StepBlock,
    block: &LcuBlock,
    field: &CVector,
) -> Result<(CVector, f64, f64, Diagnostics)> {
    let layout = layout_of(block, None)?;
    let mut c = Circuit::new(layout.clone());
    block.append(&mut c, layout.register("ancilla")?, layout.register("data")?, &[])?;
    let input = prepare_input(&layout, field, step.dilated)?;
    let out = apply(&input.state, &c, None)?;
    let success = [("ancilla", 0u64)];
    let p = out.pattern_probability(&success)?;
    if p < 1e-300 {
        return Err(Error::ZeroProbability { p });
    }
    let slice = out.register_slice("data", &success)?;
    let rescale = input.norm * block.scale();
    let mut diag = diagnostics(&layout, &c);
    diag.terms = block.len();
    diag.deltas = step.deltas.clone();
    diag.p_min = step.p_min;
    diag.dilated = step.dilated;
    let (u, p) = match &plan.mode {
        Mode::Exact => (top(&slice, step.n).scale_re(rescale), p),
        Mode::Shots(cfg) => {
            diag.fault_sites += input.circuit()?.fault_sites();
            let seed = derive_seed(cfg.noise.rng_seed, 0, 7);
            shot_readout(&input, &c, cfg, seed, &success, &slice.normalized()?, step.n, rescale)?
        }
    };
    Ok((u, p, rescale, diag))
}

fn single_result(plan: &MarchPlan, steps: Vec<usize>, trajectory: Vec<CVector>, p: f64, rescale: f64, diag: Diagnostics) -> MarchResult {
    MarchResult {
        method: plan.method,
        epsilon: plan.epsilon,
        tau: plan.tau(),
        steps,
        trajectory,
        p_succ: vec![p],
        p_succ_total: p,
        rescale,
        diagnostics: diag,
    }
}

fn run_expansion(plan: &MarchPlan) -> Result<MarchResult> {
    let tau = plan.tau();
    let step = step_block(plan)?;
    let swap = step.dilated.then(|| dilation_swap(step.block.dim()));
    let (block, expansion) = expand_power(&step.block, tau, swap.as_ref(), plan.term_ceiling as u128)?;
    let u0 = plan.problem.initial_condition();
    let (u_tau, p, rescale, mut diag) = execute_block(plan, &step, &block, &u0)?;
    diag.expansion = Some(expansion);
    finish(plan, single_result(plan, vec![0, tau], vec![u0, u_tau], p, rescale, diag))
}

/// Smallest `P ≤ cap` whose partial sum of `Σ M^p b` is within `eps_n`
/// (relative) of the exact solution `x`.
fn measured_series_length(m: &CMatrix, b: &CVector, x: &CVector, eps_n: f64, cap: usize) -> Result<(usize, f64)> {
    let xn = x.norm();
    let mut term = b.clone();
    let mut acc = b.clone();
    for p in 1..=cap {
        let err = (&acc - x).norm() / xn;
        if err <= eps_n {
            return Ok((p, err));
        }
        term = m.matvec(&term);
        acc = &acc + &term;
    }
    Err(Error::Infeasible(format!("one-shot series needs more than {cap} terms for eps_n = {eps_n:e}")))
}

pub(crate) const ONESHOT_TERM_CAP: usize = 200;

fn run_oneshot(plan: &MarchPlan) -> Result<MarchResult> {
    let p = &plan.problem;
    let (a, b) = p.build_oneshot(plan.method.scheme(), plan.c_pad)?;
    let dim = a.rows();
    if dim > MAX_ONESHOT_DIM || !dim.is_power_of_two() {
        return Err(Error::Infeasible(format!(
            "one-shot dimension {dim} must be a power of two no larger than {MAX_ONESHOT_DIM}"
        )));
    }
    let blocks = dim / p.ng();
    let m = &CMatrix::identity(dim) - &a;
    let x = solve(&a, &b)?;
    let (p_terms, trunc) = match (plan.p_min, plan.method.scheme()) {
        (Some(pm), _) => {
            let approx = crate::lcu::neumann_series_apply(&m, pm, &b);
            (pm, (&approx - &x).norm() / x.norm())
        }
        // Nilpotent: the series terminates after one term per block.
        (None, Scheme::Explicit) => (blocks, 0.0),
        (None, Scheme::Implicit) => measured_series_length(&m, &b, &x, plan.eps_n, ONESHOT_TERM_CAP)?,
    };
    let (block, deltas, dilated) = series_block(plan, &m, p_terms)?;
    let step = StepBlock { block: block.clone(), dilated, deltas, p_min: Some(p_terms), n: dim };
    let (full, prob, rescale, mut diag) = execute_block(plan, &step, &block, &b)?;
    diag.truncation_error = Some(trunc);
    let ng = p.ng();
    let history = (0..blocks).map(|j| full.segment(j * ng, ng)).collect();
    finish(plan, single_result(plan, (0..blocks).collect(), history, prob, rescale, diag))
}

/// Validates the plan and dispatches on its method.
pub fn run(plan: &MarchPlan) -> Result<MarchResult> {
    plan.validate()?;
    match plan.method {
        Method::Tmcqc1 | Method::Tmcqc3 => run_expansion(plan),
        Method::Tmcqc2 | Method::Tmcqc4 => run_serial(plan),
        Method::Tmcqc5 | Method::Tmcqc6 => run_oneshot(plan),
    }
}

fn expect(plan: &MarchPlan, ok: &[Method]) -> Result<()> {
    if ok.contains(&plan.method) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("plan is for {}, expected {:?}", plan.method, ok)))
    }
}

pub fn run_tmcqc1(plan: &MarchPlan) -> Result<MarchResult> {
    expect(plan, &[Method::Tmcqc1])?;
    run(plan)
}
pub fn run_tmcqc2(plan: &MarchPlan) -> Result<MarchResult> {
    expect(plan, &[Method::Tmcqc2])?;
    run(plan)
}
pub fn run_tmcqc3(plan: &MarchPlan) -> Result<MarchResult> {
    expect(plan, &[Method::Tmcqc3])?;
    run(plan)
}
pub fn run_tmcqc4(plan: &MarchPlan) -> Result<MarchResult> {
    expect(plan, &[Method::Tmcqc4])?;
    run(plan)
}
pub fn run_tmcqc5_6(plan: &MarchPlan) -> Result<MarchResult> {
    expect(plan, &[Method::Tmcqc5, Method::Tmcqc6])?;
    run(plan)
}
