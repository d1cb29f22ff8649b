//! Grid execution for each experiment kind.

use std::time::Instant;

use rayon::prelude::*;
use tmcqc::analysis::{fit_power_law, mse};
use tmcqc::lcu::{measured_truncation_error, truncation_error_bound};
use tmcqc::linalg::spectral_norm;
use tmcqc::tmcqc::{complexity_report, run, run_extrapolated, ExtrapolatedRun, MarchPlan, MarchResult, Method};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, CliResult};
use crate::report::{col, Cell, ExperimentReport, FitSummary, Provenance, RunSummary, Table};

type Row = (Vec<Cell>, std::result::Result<(), String>);
/// Shot count, `(MSE(ε₁), MSE_extrapolated)` or the failure, and the run summary.
type ShotRun = (u64, std::result::Result<(f64, f64), tmcqc::Error>, RunSummary);

/// Output of one grid point, merged into the report in grid order.
struct Point {
    summary: RunSummary,
    rows: Vec<(usize, Row)>,
    series: Vec<(f64, usize, f64)>,
}

impl Point {
    fn failed(label: String, seconds: f64, err: &tmcqc::Error) -> Self {
        Point {
            summary: RunSummary {
                label,
                status: err.to_string(),
                qubits: None,
                p_succ_total: None,
                mse_classical: None,
                mse_analytical: None,
                seconds,
            },
            rows: Vec::new(),
            series: Vec::new(),
        }
    }
}

fn summary_of(label: String, r: &MarchResult, seconds: f64) -> RunSummary {
    RunSummary {
        label,
        status: "ok".into(),
        qubits: Some(r.diagnostics.qubits),
        p_succ_total: Some(r.p_succ_total),
        mse_classical: r.diagnostics.mse_classical,
        mse_analytical: r.diagnostics.mse_analytical,
        seconds,
    }
}

fn extrapolation_summary(label: String, r: &ExtrapolatedRun, seconds: f64) -> RunSummary {
    RunSummary {
        label,
        status: "ok".into(),
        qubits: None,
        p_succ_total: None,
        mse_classical: Some(r.mse_extrapolated),
        mse_analytical: r.mse_analytical_extrapolated,
        seconds,
    }
}

/// `1 − MSE_ex/MSE_1` against the analytical field when it exists.
fn gain(r: &ExtrapolatedRun) -> f64 {
    match (r.mse_analytical_eps1, r.mse_analytical_extrapolated) {
        (Some(a), Some(e)) if a > 0.0 => 1.0 - e / a,
        _ => r.gain,
    }
}

fn fit(label: &str, xs: &[f64], ys: &[f64]) -> Option<FitSummary> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (*x, *y))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    fit_power_law(&x, &y).ok().map(|f| FitSummary {
        label: label.into(),
        prefactor: f.prefactor,
        exponent: f.exponent,
        residual: f.residual,
    })
}

/// Runs the configured grid on a pool of `threads` workers (0 = all cores).
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> CliResult<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mut report = pool.install(|| match cfg.kind {
        ExperimentKind::SolveOnce => solve_once(cfg),
        ExperimentKind::EpsSweep => eps_sweep(cfg),
        ExperimentKind::ResolutionSweep => resolution_sweep(cfg),
        ExperimentKind::NoiseSweep => noise_sweep(cfg),
        ExperimentKind::ShotSweep => shot_sweep(cfg),
        ExperimentKind::TruncationStudy => truncation_study(cfg),
        ExperimentKind::ComplexityTable => complexity_table(cfg),
    })?;
    report.failures = report.runs.iter().filter(|r| r.status != "ok").count();
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn empty_report(cfg: &ExperimentConfig) -> ExperimentReport {
    ExperimentReport {
        config: cfg.clone(),
        runs: Vec::new(),
        tables: Vec::new(),
        fits: Vec::new(),
        attachments: Vec::new(),
        failures: 0,
        wall_seconds: 0.0,
    }
}

/// Merges points into `tables` in grid order.
fn assemble(cfg: &ExperimentConfig, points: Vec<Point>, mut tables: Vec<Table>) -> ExperimentReport {
    let mut report = empty_report(cfg);
    for p in points {
        for (t, (cells, status)) in p.rows {
            tables[t].push(cells, status);
        }
        report.runs.push(p.summary);
    }
    report.tables = tables;
    report
}

/// One march at the first `ε`, with shots if the grid lists any.
pub fn solve_once(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let eps = cfg.primary_epsilon()?;
    let mut plan = cfg.plan(cfg.problem.clone(), eps);
    if let Some(&shots) = cfg.grid.shots.first() {
        let p = cfg.grid.p_noise.first().copied().unwrap_or(0.0);
        plan = plan.with_mode(cfg.shot_mode(shots, p, cfg.point_seed(0))?);
    }
    let t = Instant::now();
    let r = run(&plan)?;
    let mut report = empty_report(cfg);
    report.runs.push(summary_of(format!("eps={eps}"), &r, t.elapsed().as_secs_f64()));
    report.attachments.push(("trajectory.csv".into(), r.to_csv()));
    report.attachments.push(("p_succ.csv".into(), r.p_succ_csv()));
    Ok(report)
}

fn eps_sweep(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let prov = Provenance::Exact;
    let tables = vec![
        Table::new(
            "mse_vs_eps.csv",
            vec![
                col("eps", "", Provenance::Input),
                col("mse_classical", "u^2", prov),
                col("mse_analytical", "u^2", prov),
                col("p_succ_total", "probability", prov),
                col("qubits", "qubits", Provenance::Derived),
            ],
        ),
        extrapolation_table("extrapolation.csv", "eps1"),
    ];
    let eps_points = cfg.grid.eps.par_iter().map(|&eps| {
        let t = Instant::now();
        let label = format!("eps={eps}");
        match run(&cfg.plan(cfg.problem.clone(), eps)) {
            Ok(r) => {
                let secs = t.elapsed().as_secs_f64();
                let row = vec![
                    eps.into(),
                    r.diagnostics.mse_classical.into(),
                    r.diagnostics.mse_analytical.into(),
                    r.p_succ_total.into(),
                    r.diagnostics.qubits.into(),
                ];
                Point { summary: summary_of(label, &r, secs), rows: vec![(0, (row, Ok(())))], series: Vec::new() }
            }
            Err(e) => failure_point(label, t, &e, 0, vec![eps.into()], 5),
        }
    });
    let pair_points = cfg.grid.pairs.par_iter().map(|&(e1, e2)| {
        let plan = cfg.plan(cfg.problem.clone(), e1);
        extrapolation_point(cfg, &plan, e2, e1.into(), 1)
    });
    let points: Vec<Point> = eps_points.chain(pair_points).collect();
    Ok(assemble(cfg, points, tables))
}

fn extrapolation_table(file: &str, first: &str) -> Table {
    let (a, e) = (Provenance::Input, Provenance::Exact);
    Table::new(
        file,
        vec![
            col(first, "", a),
            col("eps1", "", a),
            col("eps2", "", a),
            col("mse_eps1", "u^2 vs analytical", e),
            col("mse_eps2", "u^2 vs analytical", e),
            col("mse_extrapolated", "u^2 vs analytical", e),
            col("gain", "fraction", Provenance::Derived),
            col("mse_classical_eps1", "u^2 vs classical", e),
            col("mse_classical_extrapolated", "u^2 vs classical", e),
        ],
    )
}

fn failure_point(label: String, t: Instant, e: &tmcqc::Error, table: usize, inputs: Vec<Cell>, width: usize) -> Point {
    let mut p = Point::failed(label, t.elapsed().as_secs_f64(), e);
    let mut cells = inputs;
    cells.resize(width, Cell::Text(String::new()));
    p.rows.push((table, (cells, Err(e.to_string()))));
    p
}

fn extrapolation_point(cfg: &ExperimentConfig, plan: &MarchPlan, eps2: f64, first: Cell, table: usize) -> Point {
    let t = Instant::now();
    let e1 = plan.epsilon;
    let label = format!("{first}: ({e1}, {eps2})");
    let inputs = vec![first, e1.into(), eps2.into()];
    match run_extrapolated(plan, eps2, cfg.extrapolation_style()) {
        Ok(r) => {
            let row = vec![
                inputs[0].clone(),
                e1.into(),
                eps2.into(),
                r.mse_analytical_eps1.into(),
                r.mse_analytical_eps2.into(),
                r.mse_analytical_extrapolated.into(),
                gain(&r).into(),
                r.mse_eps1.into(),
                r.mse_extrapolated.into(),
            ];
            Point {
                summary: extrapolation_summary(label, &r, t.elapsed().as_secs_f64()),
                rows: vec![(table, (row, Ok(())))],
                series: Vec::new(),
            }
        }
        Err(e) => failure_point(label, t, &e, table, inputs, 9),
    }
}

fn resolution_sweep(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let tables = vec![extrapolation_table("extrapolation_table.csv", "ng")];
    let grid: Vec<(usize, (f64, f64))> =
        cfg.grid.ng.iter().flat_map(|&n| cfg.grid.pairs.iter().map(move |&p| (n, p))).collect();
    let points: Vec<Point> = grid
        .par_iter()
        .map(|&(ng, (e1, e2))| {
            let p = &cfg.problem;
            let dt = match cfg.grid.alpha {
                Some(a) if p.diffusion() > 0.0 => {
                    let dx = p.length() / ng as f64;
                    a * dx * dx / p.diffusion()
                }
                _ => p.dt(),
            };
            match cfg.problem_with(ng, dt) {
                Ok(problem) => extrapolation_point(cfg, &cfg.plan(problem, e1), e2, ng.into(), 0),
                Err(e) => failure_point(format!("ng={ng}"), Instant::now(), &e, 0, vec![ng.into(), e1.into(), e2.into()], 9),
            }
        })
        .collect();
    Ok(assemble(cfg, points, tables))
}

/// Step-by-step MSE of a run's extrapolated trajectory against the analytical field.
fn step_series(plan: &MarchPlan, r: &ExtrapolatedRun) -> Vec<(usize, f64)> {
    let p = &plan.problem;
    r.steps
        .iter()
        .zip(&r.extrapolated)
        .filter_map(|(&k, u)| {
            let exact = p.analytical_solution(k as f64 * p.dt()).ok()?;
            Some((k, mse(u, &exact).ok()?))
        })
        .collect()
}

fn noise_sweep(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let n = Provenance::Noisy;
    let tables = vec![
        Table::new(
            "mse_vs_noise.csv",
            vec![
                col("p_noise", "probability", Provenance::Input),
                col("shots", "shots", Provenance::Input),
                col("mse_eps1", "u^2 vs analytical", n),
                col("mse_extrapolated", "u^2 vs analytical", n),
                col("mse_first_step", "u^2 vs analytical", n),
                col("mse_last_step", "u^2 vs analytical", n),
            ],
        ),
        Table::new(
            "mse_vs_time.csv",
            vec![
                col("p_noise", "probability", Provenance::Input),
                col("step", "steps", Provenance::Input),
                col("mse_extrapolated", "u^2 vs analytical", n),
            ],
        ),
    ];
    let shots = cfg.grid.shots[0];
    let (e1, e2) = cfg.grid.pairs[0];
    let points: Vec<Point> = cfg
        .grid
        .p_noise
        .par_iter()
        .enumerate()
        .map(|(i, &pn)| {
            let t = Instant::now();
            let label = format!("p_noise={pn}");
            let inputs = vec![pn.into(), shots.into()];
            let res = cfg
                .shot_mode(shots, pn, cfg.point_seed(i))
                .map_err(|e| match e {
                    CliError::Core(c) => c,
                    other => tmcqc::Error::InvalidParameter(other.to_string()),
                })
                .and_then(|mode| {
                    let plan = cfg.plan(cfg.problem.clone(), e1).with_mode(mode);
                    run_extrapolated(&plan, e2, cfg.extrapolation_style()).map(|r| (step_series(&plan, &r), r))
                });
            match res {
                Ok((series, r)) => {
                    let first = series.iter().find(|(k, _)| *k > 0).map(|s| s.1);
                    let last = series.last().map(|s| s.1);
                    let mut rows = vec![(
                        0,
                        (
                            vec![
                                pn.into(),
                                shots.into(),
                                r.mse_analytical_eps1.into(),
                                r.mse_analytical_extrapolated.into(),
                                first.into(),
                                last.into(),
                            ],
                            Ok(()),
                        ),
                    )];
                    rows.extend(series.iter().map(|&(k, m)| (1, (vec![pn.into(), k.into(), m.into()], Ok(())))));
                    Point {
                        summary: extrapolation_summary(label, &r, t.elapsed().as_secs_f64()),
                        rows,
                        series: Vec::new(),
                    }
                }
                Err(e) => failure_point(label, t, &e, 0, inputs, 6),
            }
        })
        .collect();
    Ok(assemble(cfg, points, tables))
}

fn shot_sweep(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let n = Provenance::Noisy;
    let tables = vec![Table::new(
        "mse_vs_shots.csv",
        vec![
            col("shots", "shots", Provenance::Input),
            col("p_noise", "probability", Provenance::Input),
            col("mse_eps1", "u^2 vs analytical", n),
            col("mse_extrapolated", "u^2 vs analytical", n),
        ],
    )];
    let p_noise = cfg.grid.p_noise.first().copied().unwrap_or(0.0);
    let (e1, e2) = cfg.grid.pairs[0];
    let reps = cfg.grid.repeats;
    let grid: Vec<(usize, u64, usize)> = cfg
        .grid
        .shots
        .iter()
        .enumerate()
        .flat_map(|(i, &s)| (0..reps).map(move |r| (i, s, r)))
        .collect();
    let runs: Vec<ShotRun> = grid
        .par_iter()
        .map(|&(i, shots, rep)| {
            let t = Instant::now();
            let label = format!("shots={shots} repeat={rep}");
            let res = cfg
                .shot_mode(shots, p_noise, cfg.point_seed(i * reps + rep))
                .map_err(|e| tmcqc::Error::InvalidParameter(e.to_string()))
                .and_then(|mode| run_extrapolated(&cfg.plan(cfg.problem.clone(), e1).with_mode(mode), e2, cfg.extrapolation_style()));
            let secs = t.elapsed().as_secs_f64();
            match res {
                Ok(r) => {
                    let m = (r.mse_analytical_eps1.unwrap_or(r.mse_eps1), r.mse_analytical_extrapolated.unwrap_or(r.mse_extrapolated));
                    (shots, Ok(m), extrapolation_summary(label, &r, secs))
                }
                Err(e) => {
                    let s = Point::failed(label, secs, &e).summary;
                    (shots, Err(e), s)
                }
            }
        })
        .collect();
    let mut points = Vec::new();
    let (mut xs, mut plain, mut extra) = (Vec::new(), Vec::new(), Vec::new());
    for chunk in runs.chunks(reps) {
        let shots = chunk[0].0;
        let mut p = Point { summary: chunk[0].2.clone(), rows: Vec::new(), series: Vec::new() };
        let failed = chunk.iter().find_map(|c| c.1.as_ref().err());
        let row = match failed {
            Some(e) => (vec![shots.into(), p_noise.into(), Cell::Text(String::new()), Cell::Text(String::new())], Err(e.to_string())),
            None => {
                let k = chunk.len() as f64;
                let m1 = chunk.iter().map(|c| c.1.as_ref().map_or(0.0, |m| m.0)).sum::<f64>() / k;
                let me = chunk.iter().map(|c| c.1.as_ref().map_or(0.0, |m| m.1)).sum::<f64>() / k;
                xs.push(shots as f64);
                plain.push(m1);
                extra.push(me);
                (vec![shots.into(), p_noise.into(), m1.into(), me.into()], Ok(()))
            }
        };
        p.rows.push((0, row));
        points.push(p);
        for c in &chunk[1..] {
            points.push(Point { summary: c.2.clone(), rows: Vec::new(), series: Vec::new() });
        }
    }
    let mut report = assemble(cfg, points, tables);
    report.fits.extend(fit("mse_extrapolated vs shots", &xs, &extra));
    report.fits.extend(fit("mse_eps1 vs shots", &xs, &plain));
    Ok(report)
}

fn truncation_study(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let d = Provenance::Derived;
    let tables = vec![Table::new(
        "truncation_vs_kappa.csv",
        vec![
            col("kappa", "", d),
            col("dt", "time", Provenance::Input),
            col("p_min", "terms", Provenance::Input),
            col("norm", "", d),
            col("gamma", "", d),
            col("measured", "spectral norm", Provenance::Exact),
            col("bound_norm_form", "spectral norm", d),
            col("bound_kappa_form", "spectral norm", d),
        ],
    )];
    let dts = if cfg.grid.dt.is_empty() { vec![cfg.problem.dt()] } else { cfg.grid.dt.clone() };
    let grid: Vec<(f64, usize)> =
        dts.iter().flat_map(|&dt| cfg.grid.p_min.iter().map(move |&p| (dt, p))).collect();
    let points: Vec<Point> = grid
        .par_iter()
        .map(|&(dt, pm)| {
            let t = Instant::now();
            let label = format!("dt={dt} p_min={pm}");
            let res = cfg.problem_with(cfg.problem.ng(), dt).and_then(|p| {
                let m = p.implicit_series_argument();
                let b = truncation_error_bound(&m, pm)?;
                let measured = measured_truncation_error(&m, pm)?;
                Ok((b, measured, spectral_norm(&m)))
            });
            match res {
                Ok((b, measured, norm)) => {
                    let row = vec![
                        b.kappa.into(),
                        dt.into(),
                        pm.into(),
                        norm.into(),
                        b.gamma.into(),
                        measured.into(),
                        b.norm_form.into(),
                        b.kappa_form.into(),
                    ];
                    let summary = RunSummary {
                        label,
                        status: "ok".into(),
                        qubits: None,
                        p_succ_total: None,
                        mse_classical: None,
                        mse_analytical: None,
                        seconds: t.elapsed().as_secs_f64(),
                    };
                    Point { summary, rows: vec![(0, (row, Ok(())))], series: vec![(b.kappa, pm, measured)] }
                }
                Err(e) => failure_point(label, t, &e, 0, vec![Cell::Text(String::new()), dt.into(), pm.into()], 8),
            }
        })
        .collect();
    let series: Vec<(f64, usize, f64)> = points.iter().flat_map(|p| p.series.clone()).collect();
    let mut report = assemble(cfg, points, tables);
    for &pm in &cfg.grid.p_min {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            series.iter().filter(|s| s.1 == pm).map(|s| (s.0 - 1.0, s.2)).unzip();
        report.fits.extend(fit(&format!("measured vs kappa-1, p_min={pm}"), &xs, &ys));
    }
    Ok(report)
}

fn complexity_table(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let d = Provenance::Derived;
    let tables = vec![Table::new(
        "complexity_table.csv",
        vec![
            col("method", "", Provenance::Input),
            col("eps", "", Provenance::Input),
            col("tau", "steps", Provenance::Input),
            col("ng", "points", Provenance::Input),
            col("p_min", "terms", d),
            col("lcu_depth", "unitaries", d),
            col("qubits_table", "qubits", d),
            col("qubits_layout", "qubits", d),
            col("kappa", "", d),
            col("classical_cost", "operations", d),
            col("g_u", "gates", d),
        ],
    )];
    let methods = if cfg.grid.methods.is_empty() { Method::ALL.to_vec() } else { cfg.grid.methods.clone() };
    let grid: Vec<(Method, f64)> =
        methods.iter().flat_map(|&m| cfg.grid.eps.iter().map(move |&e| (m, e))).collect();
    let points: Vec<Point> = grid
        .par_iter()
        .map(|&(m, eps)| {
            let t = Instant::now();
            let label = format!("{m} eps={eps}");
            let mut plan = cfg.plan(cfg.problem.clone(), eps);
            plan.method = m;
            match complexity_report(&plan, cfg.grid.eps_u) {
                Ok(c) => {
                    let row = vec![
                        m.to_string().into(),
                        eps.into(),
                        c.tau.into(),
                        c.ng.into(),
                        c.p_min.into(),
                        c.lcu_depth.into(),
                        c.qubits_table.into(),
                        c.qubits_layout.into(),
                        c.kappa.into(),
                        c.classical_cost.into(),
                        c.g_u.into(),
                    ];
                    let summary = RunSummary {
                        label,
                        status: "ok".into(),
                        qubits: Some(c.qubits_layout),
                        p_succ_total: None,
                        mse_classical: None,
                        mse_analytical: None,
                        seconds: t.elapsed().as_secs_f64(),
                    };
                    Point { summary, rows: vec![(0, (row, Ok(())))], series: Vec::new() }
                }
                Err(e) => failure_point(label, t, &e, 0, vec![m.to_string().into(), eps.into()], 11),
            }
        })
        .collect();
    Ok(assemble(cfg, points, tables))
}
