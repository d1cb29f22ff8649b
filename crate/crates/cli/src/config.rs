//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tmcqc::fdmodel::FlowProblem;
use tmcqc::lcu::LcuKind;
use tmcqc::qsim::NoiseModel;
use tmcqc::tmcqc::{
    ExtrapolationStyle, MarchPlan, Method, Mode, Readout, ShotConfig, SignMode, DEFAULT_EPS_N,
    DEFAULT_TERM_CEILING,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SolveOnce,
    EpsSweep,
    ResolutionSweep,
    NoiseSweep,
    ShotSweep,
    TruncationStudy,
    ComplexityTable,
}

impl ExperimentKind {
    fn uses_shots(self) -> bool {
        matches!(self, ExperimentKind::NoiseSweep | ExperimentKind::ShotSweep)
    }
}

/// Knobs shared by every march of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanOptions {
    #[serde(default = "default_lcu")]
    pub lcu: LcuKind,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub p_min: Option<usize>,
    #[serde(default = "default_eps_n")]
    pub eps_n: f64,
    #[serde(default)]
    pub c_pad: Option<usize>,
    #[serde(default = "default_ceiling")]
    pub term_ceiling: u64,
    #[serde(default)]
    pub readout: Option<Readout>,
    #[serde(default)]
    pub sign: Option<SignMode>,
    #[serde(default)]
    pub extrapolation: Option<ExtrapolationStyle>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            lcu: default_lcu(),
            delta: None,
            p_min: None,
            eps_n: default_eps_n(),
            c_pad: None,
            term_ceiling: default_ceiling(),
            readout: None,
            sign: None,
            extrapolation: None,
        }
    }
}

fn default_lcu() -> LcuKind {
    LcuKind::Four
}
fn default_eps_n() -> f64 {
    DEFAULT_EPS_N
}
fn default_ceiling() -> u64 {
    DEFAULT_TERM_CEILING
}
fn default_eps_u() -> f64 {
    1e-6
}
fn default_repeats() -> usize {
    1
}
fn default_method() -> Method {
    Method::Tmcqc2
}

/// Parameter lists; which ones matter depends on the experiment kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub p_noise: Vec<f64>,
    #[serde(default)]
    pub shots: Vec<u64>,
    /// `(ε₁, ε₂)` extrapolation pairs.
    #[serde(default)]
    pub pairs: Vec<(f64, f64)>,
    #[serde(default)]
    pub ng: Vec<usize>,
    /// Fixed `α` for resolution sweeps; `dt` follows from it at each `N_g`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub dt: Vec<f64>,
    #[serde(default)]
    pub p_min: Vec<usize>,
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default = "default_eps_u")]
    pub eps_u: f64,
    /// Independent seeds averaged per shot-sweep point.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            eps: Vec::new(),
            p_noise: Vec::new(),
            shots: Vec::new(),
            pairs: Vec::new(),
            ng: Vec::new(),
            alpha: None,
            dt: Vec::new(),
            p_min: Vec::new(),
            methods: Vec::new(),
            eps_u: default_eps_u(),
            repeats: default_repeats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_method")]
    pub method: Method,
    pub problem: FlowProblem,
    #[serde(default)]
    pub plan: PlanOptions,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> CliResult<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Parse { path: path.to_owned(), message: e.to_string() })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Per-kind list requirements, and a seed whenever shots are drawn.
    pub fn check(&self) -> CliResult<()> {
        let g = &self.grid;
        let need = |ok: bool, what: &str| -> CliResult<()> {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(format!("{:?} needs a nonempty grid.{what}", self.kind)))
            }
        };
        match self.kind {
            ExperimentKind::SolveOnce | ExperimentKind::EpsSweep => need(!g.eps.is_empty(), "eps")?,
            ExperimentKind::ResolutionSweep => {
                need(!g.ng.is_empty(), "ng")?;
                need(!g.pairs.is_empty(), "pairs")?;
            }
            ExperimentKind::NoiseSweep => {
                need(!g.p_noise.is_empty(), "p_noise")?;
                need(!g.shots.is_empty(), "shots")?;
                need(!g.pairs.is_empty(), "pairs")?;
            }
            ExperimentKind::ShotSweep => {
                need(!g.shots.is_empty(), "shots")?;
                need(!g.pairs.is_empty(), "pairs")?;
            }
            ExperimentKind::TruncationStudy => need(!g.p_min.is_empty(), "p_min")?,
            ExperimentKind::ComplexityTable => need(!g.eps.is_empty(), "eps")?,
        }
        if (self.kind.uses_shots() || !g.shots.is_empty()) && self.seed.is_none() {
            return Err(CliError::Config("a seed is required when shots are sampled".into()));
        }
        for &(a, b) in &g.pairs {
            if !(a > b && b > 0.0) {
                return Err(CliError::Config(format!("extrapolation pair ({a}, {b}) needs eps1 > eps2 > 0")));
            }
        }
        if g.shots.contains(&0) {
            return Err(CliError::Config("shot counts must be at least 1".into()));
        }
        if g.repeats == 0 {
            return Err(CliError::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// First `ε` of the grid, falling back to the larger value of the first pair.
    pub fn primary_epsilon(&self) -> CliResult<f64> {
        self.grid
            .eps
            .first()
            .copied()
            .or_else(|| self.grid.pairs.first().map(|p| p.0))
            .ok_or_else(|| CliError::Config("no epsilon in grid.eps or grid.pairs".into()))
    }

    pub fn extrapolation_style(&self) -> ExtrapolationStyle {
        self.plan.extrapolation.unwrap_or(if self.kind.uses_shots() && self.method.is_serial() {
            ExtrapolationStyle::PerStep
        } else {
            ExtrapolationStyle::Trajectory
        })
    }

    /// Exact-mode plan for `problem` at `epsilon`.
    pub fn plan(&self, problem: FlowProblem, epsilon: f64) -> MarchPlan {
        let o = &self.plan;
        let mut plan = MarchPlan::new(self.method, problem, epsilon)
            .with_kind(o.lcu)
            .with_eps_n(o.eps_n)
            .with_term_ceiling(o.term_ceiling);
        if let Some(d) = o.delta {
            plan = plan.with_delta(d);
        }
        if let Some(p) = o.p_min {
            plan = plan.with_p_min(p);
        }
        if let Some(c) = o.c_pad {
            plan = plan.with_c_pad(c);
        }
        plan
    }

    /// Sampling mode with uniform bit-flip noise at `p_noise`.
    pub fn shot_mode(&self, shots: u64, p_noise: f64, seed: u64) -> CliResult<Mode> {
        let mut cfg = ShotConfig::new(shots, NoiseModel::uniform(p_noise, seed)?);
        let per_step = self.method.is_serial() && self.kind.uses_shots();
        cfg.readout = self.plan.readout.unwrap_or(if per_step { Readout::PerStep } else { Readout::Coherent });
        if let Some(s) = self.plan.sign {
            cfg.sign = s;
        }
        Ok(Mode::Shots(cfg))
    }

    /// Stream for grid point `index`, derived from the experiment seed.
    pub fn point_seed(&self, index: usize) -> u64 {
        let base = self.seed.unwrap_or(0);
        let mut z = base ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// The problem rebuilt at another resolution or time step.
    pub fn problem_with(&self, ng: usize, dt: f64) -> tmcqc::Result<FlowProblem> {
        let p = &self.problem;
        FlowProblem::new(ng, dt, p.tau(), p.diffusion(), p.advection())?
            .with_length(p.length())?
            .with_bc(p.bc())
            .with_ic(p.ic().clone())?
            .with_delta_scale(p.delta_scale())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
kind = "eps_sweep"
method = "tmcqc2"
[problem]
ng = 8
dt = 1e-3
tau = 2
d = 1.0
c = 1.0
[grid]
eps = [0.1, 0.01]
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml(BASE, Path::new("x.toml")).unwrap();
        assert_eq!(c.kind, ExperimentKind::EpsSweep);
        assert_eq!(c.plan.lcu, LcuKind::Four);
        assert_eq!(c.grid.eps_u, 1e-6);
        assert_eq!(c.primary_epsilon().unwrap(), 0.1);
    }

    #[test]
    fn unknown_field_names_the_file() {
        let bad = BASE.replace("tau = 2", "tau = 2\nbogus = 1");
        let e = ExperimentConfig::from_toml(&bad, Path::new("cfg.toml")).unwrap_err();
        assert!(e.to_string().contains("cfg.toml") && e.to_string().contains("bogus"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn shot_kinds_need_a_seed() {
        let noisy = BASE
            .replace("eps_sweep", "shot_sweep")
            .replace("eps = [0.1, 0.01]", "shots = [1024]\npairs = [[1.0, 0.5]]");
        let e = ExperimentConfig::from_toml(&noisy, Path::new("x.toml")).unwrap_err();
        assert!(e.to_string().contains("seed"));
        let ok = format!("seed = 3\n{noisy}");
        assert!(ExperimentConfig::from_toml(&ok, Path::new("x.toml")).is_ok());
    }

    #[test]
    fn empty_lists_are_rejected() {
        let e = ExperimentConfig::from_toml(&BASE.replace("eps = [0.1, 0.01]", ""), Path::new("x.toml"))
            .unwrap_err();
        assert!(e.to_string().contains("grid.eps"));
    }

    #[test]
    fn point_seeds_differ() {
        let c = ExperimentConfig::from_toml(&format!("seed = 1\n{BASE}"), Path::new("x.toml")).unwrap();
        assert_ne!(c.point_seed(0), c.point_seed(1));
        assert_eq!(c.point_seed(4), c.point_seed(4));
    }
}
