use proptest::prelude::*;

use super::*;
use crate::fdmodel::{BoundaryCondition, FlowProblem, InitialCondition};
use crate::lcu::{decompose_four, neumann_inverse_apply, scaled_effective, select_delta};
use crate::linalg::{expm_hermitian, hermitian_eigen, solve, Matrix};
use crate::qsim::NoiseModel;
use crate::{CMatrix, CVector, C64};

fn problem(ng: usize, tau: usize) -> FlowProblem {
    FlowProblem::new(ng, 1e-3, tau, 1.0, 1.0).unwrap()
}

fn max_diff(a: &CVector, b: &CVector) -> f64 {
    a.max_abs_diff(b)
}

fn classical(p: &FlowProblem, m: Method) -> Vec<CVector> {
    p.classical_march(m.scheme()).unwrap().fields
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        assert_eq!(Method::from_number(m.number()).unwrap(), m);
    }
    assert_eq!("TMCQC-4".parse::<Method>().unwrap(), Method::Tmcqc4);
    assert_eq!("2".parse::<Method>().unwrap(), Method::Tmcqc2);
    assert!("tmcqc7".parse::<Method>().is_err());
    assert!(Method::from_number(0).is_err());
    let j = serde_json::to_string(&Method::Tmcqc3).unwrap();
    assert_eq!(j, "\"tmcqc3\"");
}

#[test]
fn clock_sizes() {
    assert_eq!(march_clock(1), 0);
    assert_eq!(march_clock(2), 1);
    assert_eq!(march_clock(3), 2);
    assert_eq!(march_clock(4), 2);
    assert_eq!(march_clock(5), 3);
    assert_eq!(march_clock(32), 5);
}

fn march_clock(t: usize) -> usize {
    super::march::clock_bits(t)
}

#[test]
fn every_method_matches_its_oracle_in_exact_mode() {
    for ng in [4, 8, 16] {
        for tau in [1, 2, 3] {
            let p = problem(ng, tau);
            for m in Method::ALL {
                let plan = MarchPlan::new(m, p.clone(), 1e-3);
                // At N_g = 16 the implicit series argument has norm 4α > 1.
                if (m == Method::Tmcqc3 && tau > 2) || plan.validate().is_err() {
                    assert!(ng == 16 || m == Method::Tmcqc3);
                    continue;
                }
                let r = run(&plan).unwrap();
                let reference = classical(&p, m);
                let mse = crate::analysis::mse(r.final_field(), &reference[tau]).unwrap();
                assert!(mse <= 1e-6, "{m} ng={ng} tau={tau}: mse {mse:e}");
                assert_eq!(r.diagnostics.mse_classical, Some(mse));
            }
        }
    }
}

#[test]
fn serial_intermediate_steps_match() {
    let p = problem(8, 4);
    for m in [Method::Tmcqc2, Method::Tmcqc4] {
        let r = run(&MarchPlan::new(m, p.clone(), 1e-3)).unwrap();
        let reference = classical(&p, m);
        assert_eq!(r.steps, vec![0, 1, 2, 3, 4]);
        for (k, u) in r.trajectory.iter().enumerate() {
            assert!(max_diff(u, &reference[k]) < 1e-5, "{m} step {k}");
        }
        assert_eq!(r.p_succ.len(), 4);
        let total: f64 = r.p_succ.iter().product();
        assert!((total - r.p_succ_total).abs() < 1e-15);
        assert!(r.p_succ.iter().all(|&q| q > 0.0 && q <= 1.0 + 1e-12));
    }
}

#[test]
fn explicit_expansion_matches_serial() {
    let eps = 1e-3;
    let p = problem(8, 2);
    let a = run(&MarchPlan::new(Method::Tmcqc1, p.clone(), eps)).unwrap();
    let b = run(&MarchPlan::new(Method::Tmcqc2, p.clone(), eps)).unwrap();
    assert!(max_diff(a.final_field(), b.final_field()) <= 10.0 * eps * eps);
    assert_eq!(a.diagnostics.expansion, Some(Expansion::Multinomial));
    let c = run(&MarchPlan::new(Method::Tmcqc3, p.clone(), eps)).unwrap();
    let d = run(&MarchPlan::new(Method::Tmcqc4, p.clone(), eps)).unwrap();
    assert!(max_diff(c.final_field(), d.final_field()) <= 10.0 * eps * eps);
}

#[test]
fn dilated_two_unitary_marches() {
    let eps = 1e-3;
    let p = problem(8, 3).with_bc(BoundaryCondition::Dirichlet);
    for m in [Method::Tmcqc1, Method::Tmcqc2, Method::Tmcqc4, Method::Tmcqc5] {
        let plan = MarchPlan::new(m, p.clone(), eps).with_kind(LcuKind::Two);
        let r = run(&plan).unwrap();
        assert!(r.diagnostics.dilated);
        let reference = classical(&p, m);
        let err = max_diff(r.final_field(), &reference[3]);
        assert!(err < 1e-5, "{m}: {err:e}");
    }
    let r = run(&MarchPlan::new(Method::Tmcqc1, p, eps).with_kind(LcuKind::Two)).unwrap();
    assert_eq!(r.diagnostics.expansion, Some(Expansion::Ordered));
}

#[test]
fn oneshot_blocks_match_serial_steps() {
    let eps = 1e-3;
    let p = problem(8, 2);
    let serial = run(&MarchPlan::new(Method::Tmcqc2, p.clone(), eps)).unwrap();
    let one = run(&MarchPlan::new(Method::Tmcqc5, p.clone(), eps)).unwrap();
    assert_eq!(one.steps, vec![0, 1, 2, 3]);
    for j in 0..=2 {
        assert!(max_diff(&one.trajectory[j], &serial.trajectory[j]) <= 10.0 * eps * eps, "block {j}");
    }
    // The padded block repeats the last step.
    assert!((one.trajectory[3].norm() - one.trajectory[2].norm()).abs() < 1e-5);
    let six = run(&MarchPlan::new(Method::Tmcqc6, p.clone(), eps)).unwrap();
    let implicit = classical(&p, Method::Tmcqc6);
    for j in 0..=2 {
        assert!(max_diff(&six.trajectory[j], &implicit[j]) < 1e-5);
    }
    assert!(six.diagnostics.truncation_error.unwrap() <= 1e-10);
}

#[test]
fn oneshot_tau_one_is_forward_substitution() {
    let p = problem(8, 1);
    let r = run(&MarchPlan::new(Method::Tmcqc5, p.clone(), 1e-3)).unwrap();
    let want = p.build_explicit().unwrap().matvec(&p.initial_condition());
    assert!(max_diff(&r.trajectory[1], &want) < 1e-6);
}

#[test]
fn implicit_expansion_edge_cases() {
    let p = problem(8, 2);
    let id = run(&MarchPlan::new(Method::Tmcqc3, p.clone(), 1e-3).with_p_min(1)).unwrap();
    assert!(max_diff(id.final_field(), &p.initial_condition()) < 1e-6);

    let p1 = problem(8, 1);
    let plan = MarchPlan::new(Method::Tmcqc3, p1.clone(), 1e-3).with_p_min(3);
    let r = run(&plan).unwrap();
    let want = neumann_inverse_apply(&p1.implicit_series_argument(), 3, &p1.initial_condition()).unwrap();
    assert!(max_diff(r.final_field(), &want) < 1e-6);

    let big = MarchPlan::new(Method::Tmcqc3, problem(8, 32), 1e-3).with_p_min(4);
    assert!(matches!(run(&big), Err(crate::Error::TermCeiling { .. })));
}

#[test]
fn implicit_serial_meets_truncation_plus_lcu_error() {
    let eps = 1e-3;
    let p = problem(8, 3);
    let r = run(&MarchPlan::new(Method::Tmcqc4, p.clone(), eps)).unwrap();
    let exact = classical(&p, Method::Tmcqc4);
    assert!(max_diff(r.final_field(), &exact[3]) <= 1e-10 + 10.0 * eps * eps);
    assert!(r.diagnostics.p_min.unwrap() >= 2);
}

#[test]
fn plan_validation() {
    let unstable = FlowProblem::new(8, 0.01, 2, 1.0, 0.0).unwrap();
    let e = run(&MarchPlan::new(Method::Tmcqc2, unstable.clone(), 1e-3)).unwrap_err();
    assert!(matches!(e, crate::Error::Unstable { .. }));
    let e = run(&MarchPlan::new(Method::Tmcqc4, unstable, 1e-3)).unwrap_err();
    assert!(matches!(e, crate::Error::Divergent { .. }));
    let bad = MarchPlan::new(Method::Tmcqc2, problem(8, 2), 0.0);
    assert!(bad.validate().is_err());
    let per_step = MarchPlan::new(Method::Tmcqc1, problem(8, 2), 1e-3)
        .with_mode(Mode::Shots(ShotConfig::new(100, NoiseModel::noiseless(1)).per_step()));
    assert!(per_step.validate().is_err());
    assert!(MarchPlan::new(Method::Tmcqc4, problem(8, 2), 1e-3).with_p_min(0).validate().is_err());
}

#[test]
fn coherent_shots_recover_the_field() {
    let p = problem(8, 2).with_ic(InitialCondition::ShiftedSine).unwrap();
    let shots = 1 << 20;
    let plan = MarchPlan::new(Method::Tmcqc2, p.clone(), 1.0)
        .with_mode(Mode::Shots(ShotConfig::new(shots, NoiseModel::noiseless(5))));
    let r = run(&plan).unwrap();
    let exact = run(&MarchPlan::new(Method::Tmcqc2, p, 1.0)).unwrap();
    assert_eq!(r.steps, vec![0, 2]);
    let p_exact = exact.p_succ_total;
    let sigma = (p_exact * (1.0 - p_exact) / shots as f64).sqrt();
    assert!((r.p_succ_total - p_exact).abs() <= 4.0 * sigma, "{} vs {p_exact}", r.p_succ_total);
    let rel = max_diff(r.final_field(), exact.final_field()) / exact.final_field().norm();
    assert!(rel < 0.02, "relative error {rel}");
}

#[test]
fn per_step_shots_track_the_march() {
    let p = problem(8, 3).with_ic(InitialCondition::ShiftedSine).unwrap();
    let plan = MarchPlan::new(Method::Tmcqc2, p.clone(), 1.0)
        .with_mode(Mode::Shots(ShotConfig::new(1 << 18, NoiseModel::noiseless(2)).per_step()));
    let r = run(&plan).unwrap();
    assert_eq!(r.trajectory.len(), 4);
    assert_eq!(r.p_succ.len(), 3);
    let reference = run(&MarchPlan::new(Method::Tmcqc2, p, 1.0)).unwrap().trajectory;
    let rel = max_diff(r.final_field(), &reference[3]) / reference[3].norm();
    assert!(rel < 0.05, "relative error {rel}");
    let again = run(&plan).unwrap();
    assert_eq!(r.trajectory, again.trajectory);
}

#[test]
fn single_block_success_forms() {
    let p = problem(8, 1);
    let plan = MarchPlan::new(Method::Tmcqc2, p.clone(), 1e-3).with_kind(LcuKind::Two);
    let r = run(&plan).unwrap();
    let s = success_probability(&plan, &r.trajectory).unwrap();
    assert_eq!(s.g_l, 1);
    // With two unitaries the measured branch weight is (εδ‖Aψ‖)².
    assert!((r.p_succ[0] - s.plain_form_single_block).abs() <= 1e-3 * s.plain_form_single_block);
    assert_eq!(s.block_single_block, s.plain_form_single_block);
    let plan4 = MarchPlan::new(Method::Tmcqc2, p, 1e-3);
    let r4 = run(&plan4).unwrap();
    let s4 = success_probability(&plan4, &r4.trajectory).unwrap();
    assert!((r4.p_succ[0] - s4.block_single_block).abs() <= 1e-3 * s4.block_single_block);
    assert!((s.beta_form_single_block - 2.0 * s.plain_form_single_block).abs() < 1e-15);
    assert!((s.eta * s.eps_delta_norm - 1.0).abs() < 1e-12);
    assert!((s.p_succ * s.shots_required - 1.0).abs() < 1e-9);
}

#[test]
fn unit_eta_for_norm_preserving_flow() {
    // With εδ‖A‖ = 1 only the norm ratio remains.
    let p = problem(8, 2);
    let a = p.build_explicit().unwrap();
    let norm = crate::linalg::spectral_norm(&a);
    let eps = 1e-3;
    let plan = MarchPlan::new(Method::Tmcqc2, p, eps).with_delta(1.0 / (eps * norm));
    let u = CVector::from_real(&[1.0; 8]).unwrap();
    let s = success_probability(&plan, &[u.clone(), u]).unwrap();
    assert!((s.eta - 1.0).abs() < 1e-12);
    assert!((s.p_succ - 1.0).abs() < 1e-12 && (s.shots_required - 1.0).abs() < 1e-12);
    assert!(success_probability(&plan, &[]).is_err());
}

#[test]
fn shot_fraction_within_binomial_band() {
    let p = problem(8, 1).with_ic(InitialCondition::ShiftedSine).unwrap();
    let shots = 1_000_000u64;
    let plan = MarchPlan::new(Method::Tmcqc2, p.clone(), 0.05)
        .with_mode(Mode::Shots(ShotConfig::new(shots, NoiseModel::noiseless(9))));
    let r = run(&plan).unwrap();
    let s = success_probability(&plan, &run(&MarchPlan::new(Method::Tmcqc2, p, 0.05)).unwrap().trajectory).unwrap();
    let q = s.block_single_block;
    let sigma = (q * (1.0 - q) / shots as f64).sqrt();
    assert!((r.p_succ[0] - q).abs() <= 4.0 * sigma + 1e-2 * q, "{} vs {q}", r.p_succ[0]);
}

#[test]
fn complexity_table_entries() {
    let p = FlowProblem::new(16, 1e-4, 32, 1.0, 1.0).unwrap();
    let c2 = complexity_report(&MarchPlan::new(Method::Tmcqc2, p.clone(), 1e-3), 1e-6).unwrap();
    assert_eq!(c2.lcu_depth, 32.0);
    assert_eq!(c2.sparsity, 4);
    assert_eq!(c2.classical_cost, 16.0 * 4.0 * 32.0);
    assert_eq!(c2.qubits_layout, 4 + 2 + 5);
    let c1 = complexity_report(&MarchPlan::new(Method::Tmcqc1, p.clone(), 1e-3).with_kind(LcuKind::Two), 1e-6).unwrap();
    assert_eq!(c1.lcu_depth, 1024.0);
    let c4 = complexity_report(&MarchPlan::new(Method::Tmcqc4, p.clone(), 1e-3).with_p_min(3), 1e-6).unwrap();
    assert_eq!(c4.lcu_depth, 32.0 * 27.0);
    assert!((c4.qubits_table - (32.0f64 * 16.0 * 3.0).log2()).abs() < 1e-12);
    assert!(c4.kappa.unwrap() >= 1.0);
    let c3 = complexity_report(&MarchPlan::new(Method::Tmcqc3, p.clone(), 1e-3).with_p_min(2), 1e-6).unwrap();
    assert_eq!(c3.lcu_depth, 32f64.powi(8));
    let c6 = complexity_report(&MarchPlan::new(Method::Tmcqc6, p, 1e-3).with_p_min(5), 1e-6).unwrap();
    assert_eq!(c6.lcu_depth, 125.0);
    assert!(c6.g_u > 0.0);
}

#[test]
fn march_result_serializes() {
    let r = run(&MarchPlan::new(Method::Tmcqc2, problem(4, 2), 1e-3)).unwrap();
    let back: MarchResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
    assert!(r.to_csv().starts_with("step,u0,u1,u2,u3\n0,"));
    assert_eq!(r.p_succ_csv().lines().count(), 3);
    let plan = MarchPlan::new(Method::Tmcqc4, problem(4, 2), 1e-3)
        .with_mode(Mode::Shots(ShotConfig::new(10, NoiseModel::uniform(1e-3, 4).unwrap())));
    let back: MarchPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
    assert_eq!(back, plan);
}

#[test]
fn trajectory_extrapolation_beats_single_eps() {
    let p = FlowProblem::new(16, 1e-3, 3, 1.0, 0.0).unwrap();
    let plan = MarchPlan::new(Method::Tmcqc2, p, 1.0).with_delta(1.0).with_kind(LcuKind::Two);
    let r = run_extrapolated(&plan, 0.9, ExtrapolationStyle::Trajectory).unwrap();
    assert!(r.mse_eps2 < r.mse_eps1);
    assert!(r.gain > 0.85, "gain {}", r.gain);
    let s = run_extrapolated(&plan, 0.9, ExtrapolationStyle::PerStep).unwrap();
    assert!(s.mse_extrapolated < s.mse_eps1);
    assert!(run_extrapolated(&plan, 1.5, ExtrapolationStyle::Trajectory).is_err());
}

/// Richardson on the τ-step operator leaves an `ε⁴` residual.
#[test]
fn extrapolated_operator_error_is_quartic() {
    let p = problem(8, 4);
    let a = p.build_explicit().unwrap();
    let tau = 4;
    let delta = 0.99 / crate::linalg::spectral_norm(&a);
    let target = a.powi(tau);
    let op = |eps: f64| scaled_effective(&decompose_four(&a.scale_re(delta), eps).unwrap(), delta).powi(tau);
    let extrap = |eps: f64| {
        let (o1, o2) = (op(eps), op(eps / 2.0));
        (&o1 - &o2.scale_re(4.0)).scale_re(1.0 / (1.0 - 4.0))
    };
    let err = |eps: f64| crate::linalg::spectral_norm(&(&extrap(eps) - &target));
    for eps in [0.4, 0.2] {
        let ratio = err(eps) / err(eps / 2.0);
        assert!((12.0..=20.0).contains(&ratio), "eps {eps}: ratio {ratio}");
    }
}

fn random_hermitian(n: usize, seed: &[f64]) -> CMatrix {
    let mut h = CMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let re = seed[k % seed.len()];
            let im = if i == j { 0.0 } else { seed[(k + 7) % seed.len()] };
            h[(i, j)] = C64::new(re, im);
            h[(j, i)] = C64::new(re, -im);
            k += 1;
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Perturbing a Hermitian operator with spectrum outside (−1, 1) by at
    /// most `ε_op` moves the normalized solution by at most `4ε_op`.
    #[test]
    fn normalized_solution_is_stable(
        lam in proptest::collection::vec(prop_oneof![1.0..4.0f64, -4.0..-1.0f64], 6),
        gen in proptest::collection::vec(-1.0..1.0f64, 21),
        pert in proptest::collection::vec(-1.0..1.0f64, 21),
        b in proptest::collection::vec(-1.0..1.0f64, 6),
        eps_op in 0.001..0.49f64,
    ) {
        let n = 6;
        let q = expm_hermitian(&random_hermitian(n, &gen), C64::new(0.0, 1.0)).unwrap();
        let d = Matrix::diag(&lam.iter().map(|&l| C64::new(l, 0.0)).collect::<Vec<_>>());
        let j = q.matmul(&d).matmul(&q.adjoint());
        let e = random_hermitian(n, &pert);
        let e_norm = hermitian_eigen(&e).unwrap().values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assume!(e_norm > 1e-9);
        let jbar = &j + &e.scale_re(eps_op / e_norm);
        let b = CVector::from_real(&b).unwrap();
        prop_assume!(b.norm() > 1e-6);
        let u = solve(&j, &b).unwrap().normalized().unwrap();
        let ubar = solve(&jbar, &b).unwrap().normalized().unwrap();
        prop_assert!((&u - &ubar).norm() <= 4.0 * eps_op + 1e-12);
    }

    #[test]
    fn serial_exact_matches_classical(ng_log in 2usize..=4, tau in 1usize..=4, c in 0.0..3.0f64) {
        let p = FlowProblem::new(1 << ng_log, 1e-3, tau, 1.0, c).unwrap();
        let r = run(&MarchPlan::new(Method::Tmcqc2, p.clone(), 1e-3)).unwrap();
        let reference = p.classical_march(crate::fdmodel::Scheme::Explicit).unwrap();
        for (u, v) in r.trajectory.iter().zip(&reference.fields) {
            prop_assert!(u.max_abs_diff(v) < 1e-5);
        }
    }

    #[test]
    fn delta_choice_scales_series_blocks(eps in 1e-4..1e-2f64) {
        let p = problem(8, 1);
        let m = p.implicit_series_argument();
        let d = select_delta(crate::linalg::spectral_norm(&m), eps).unwrap();
        let s = step_block(&MarchPlan::new(Method::Tmcqc4, p, eps)).unwrap();
        prop_assert!((s.deltas[1] - d.delta).abs() < 1e-12);
        prop_assert_eq!(s.deltas.len(), s.p_min.unwrap());
    }
}
