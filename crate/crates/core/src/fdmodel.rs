//! Finite-difference discretization of `u_t + C u_x = D u_xx` on `[0, L)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cre;
use crate::{CMatrix, CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Periodic,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Unit spike at index `N_g/2`.
    Delta,
    /// `0.5·sin(πx) + 1`.
    ShiftedSine,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Explicit,
    Implicit,
}

/// Config block for a problem definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub ng: usize,
    #[serde(default = "default_length")]
    pub l: f64,
    pub dt: f64,
    pub tau: usize,
    pub d: f64,
    pub c: f64,
    #[serde(default = "default_bc")]
    pub bc: BoundaryCondition,
    #[serde(default = "default_ic")]
    pub ic: InitialCondition,
    #[serde(default)]
    pub delta_scale: Option<f64>,
}

fn default_length() -> f64 {
    1.0
}
fn default_bc() -> BoundaryCondition {
    BoundaryCondition::Periodic
}
fn default_ic() -> InitialCondition {
    InitialCondition::Delta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemConfig", into = "ProblemConfig")]
pub struct FlowProblem {
    ng: usize,
    length: f64,
    dt: f64,
    tau: usize,
    diffusion: f64,
    advection: f64,
    bc: BoundaryCondition,
    ic: InitialCondition,
    delta_scale: Option<f64>,
    alpha: f64,
    chi: f64,
}

impl TryFrom<ProblemConfig> for FlowProblem {
    type Error = Error;
    fn try_from(c: ProblemConfig) -> Result<Self> {
        FlowProblem::new(c.ng, c.dt, c.tau, c.d, c.c)?
            .with_length(c.l)?
            .with_bc(c.bc)
            .with_ic(c.ic)?
            .with_delta_scale(c.delta_scale)
    }
}

impl From<FlowProblem> for ProblemConfig {
    fn from(p: FlowProblem) -> Self {
        ProblemConfig {
            ng: p.ng,
            l: p.length,
            dt: p.dt,
            tau: p.tau,
            d: p.diffusion,
            c: p.advection,
            bc: p.bc,
            ic: p.ic,
            delta_scale: p.delta_scale,
        }
    }
}

impl FlowProblem {
    /// Periodic, delta-initialized problem on the unit domain.
    pub fn new(ng: usize, dt: f64, tau: usize, diffusion: f64, advection: f64) -> Result<Self> {
        if ng < 2 || !ng.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("ng = {ng} must be a power of two >= 2")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if tau == 0 {
            return Err(Error::InvalidParameter("tau must be at least 1".into()));
        }
        if !(diffusion >= 0.0 && diffusion.is_finite() && advection.is_finite()) {
            return Err(Error::InvalidParameter("coefficients must be finite, D >= 0".into()));
        }
        let mut p = FlowProblem {
            ng,
            length: 1.0,
            dt,
            tau,
            diffusion,
            advection,
            bc: BoundaryCondition::Periodic,
            ic: InitialCondition::Delta,
            delta_scale: None,
            alpha: 0.0,
            chi: 0.0,
        };
        p.refresh();
        Ok(p)
    }

    pub fn with_length(mut self, length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!("L = {length} must be positive")));
        }
        self.length = length;
        self.refresh();
        Ok(self)
    }

    pub fn with_bc(mut self, bc: BoundaryCondition) -> Self {
        self.bc = bc;
        self
    }

    pub fn with_ic(mut self, ic: InitialCondition) -> Result<Self> {
        if let InitialCondition::Custom(v) = &ic {
            if v.len() != self.ng {
                return Err(Error::DimensionMismatch { expected: self.ng, found: v.len() });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        self.ic = ic;
        Ok(self)
    }

    pub fn with_delta_scale(mut self, delta: Option<f64>) -> Result<Self> {
        if let Some(d) = delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("delta_scale = {d} must be positive")));
            }
        }
        self.delta_scale = delta;
        Ok(self)
    }

    pub fn with_tau(mut self, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::InvalidParameter("tau must be at least 1".into()));
        }
        self.tau = tau;
        Ok(self)
    }

    fn refresh(&mut self) {
        let dx = self.dx();
        self.alpha = self.diffusion * self.dt / (dx * dx);
        self.chi = self.advection * self.dt / (2.0 * dx);
    }

    pub fn ng(&self) -> usize {
        self.ng
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn tau(&self) -> usize {
        self.tau
    }
    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }
    pub fn advection(&self) -> f64 {
        self.advection
    }
    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }
    pub fn ic(&self) -> &InitialCondition {
        &self.ic
    }
    pub fn delta_scale(&self) -> Option<f64> {
        self.delta_scale
    }
    pub fn dx(&self) -> f64 {
        self.length / self.ng as f64
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn chi(&self) -> f64 {
        self.chi
    }
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn check_explicit_stability(&self) -> Result<()> {
        if self.alpha > 0.5 {
            return Err(Error::Unstable { alpha: self.alpha });
        }
        Ok(())
    }

    pub fn initial_condition(&self) -> CVector {
        let n = self.ng;
        let data: Vec<f64> = match &self.ic {
            InitialCondition::Delta => (0..n).map(|i| if i == n / 2 { 1.0 } else { 0.0 }).collect(),
            InitialCondition::ShiftedSine => {
                (0..n).map(|i| 0.5 * (PI * self.x(i)).sin() + 1.0).collect()
            }
            InitialCondition::Custom(v) => v.clone(),
        };
        CVector::from_real(&data).expect("validated at construction")
    }

    fn tridiagonal(&self, diag: f64, upper: f64, lower: f64) -> CMatrix {
        let n = self.ng;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = cre(diag);
            if i + 1 < n {
                m[(i, i + 1)] = cre(upper);
                m[(i + 1, i)] = cre(lower);
            }
        }
        if self.bc == BoundaryCondition::Periodic {
            if n == 2 {
                m[(0, 1)] += cre(lower);
                m[(1, 0)] += cre(upper);
            } else {
                m[(0, n - 1)] = cre(lower);
                m[(n - 1, 0)] = cre(upper);
            }
        }
        m
    }

    /// `A_E`: diagonal `1−2α`, super `α−χ`, sub `α+χ`.
    pub fn build_explicit(&self) -> Result<CMatrix> {
        self.check_explicit_stability()?;
        let (a, c) = (self.alpha, self.chi);
        Ok(self.tridiagonal(1.0 - 2.0 * a, a - c, a + c))
    }

    /// `A_I`: diagonal `1+2α`, super `−α+χ`, sub `−α−χ`.
    pub fn build_implicit(&self) -> CMatrix {
        let (a, c) = (self.alpha, self.chi);
        self.tridiagonal(1.0 + 2.0 * a, -a + c, -a - c)
    }

    /// Series argument of the implicit step, `I − A_I`.
    pub fn implicit_series_argument(&self) -> CMatrix {
        &CMatrix::identity(self.ng) - &self.build_implicit()
    }

    /// Smallest padding that makes `N_g·(τ+1+c)` a power of two.
    pub fn default_pad(&self) -> usize {
        (self.tau + 1).next_power_of_two() - (self.tau + 1)
    }

    /// Block lower-bidiagonal system whose solution stacks `u⁰..u^{τ+c}`.
    pub fn build_oneshot(&self, scheme: Scheme, c_pad: Option<usize>) -> Result<(CMatrix, CVector)> {
        let n = self.ng;
        let pad = c_pad.unwrap_or_else(|| self.default_pad());
        let blocks = self.tau + 1 + pad;
        let dim = n * blocks;
        let id = CMatrix::identity(n);
        let (diag_step, sub_step) = match scheme {
            Scheme::Explicit => (id.clone(), -&self.build_explicit()?),
            Scheme::Implicit => (self.build_implicit(), -&id),
        };
        let minus_id = -&id;
        let mut m = CMatrix::zeros(dim, dim);
        for b in 0..blocks {
            let stepping = b >= 1 && b <= self.tau;
            m.set_block(b * n, b * n, if stepping { &diag_step } else { &id });
            if b >= 1 {
                m.set_block(b * n, (b - 1) * n, if stepping { &sub_step } else { &minus_id });
            }
        }
        let mut rhs = CVector::zeros(dim);
        let u0 = self.initial_condition();
        rhs.as_mut_slice()[..n].copy_from_slice(u0.as_slice());
        Ok((m, rhs))
    }

    /// Reference trajectory by direct products (explicit) or dense solves (implicit).
    pub fn classical_march(&self, scheme: Scheme) -> Result<Trajectory> {
        let mut fields = Vec::with_capacity(self.tau + 1);
        fields.push(self.initial_condition());
        match scheme {
            Scheme::Explicit => {
                let a = self.build_explicit()?;
                for j in 0..self.tau {
                    fields.push(a.matvec(&fields[j]));
                }
            }
            Scheme::Implicit => {
                let lu = crate::linalg::Lu::new(&self.build_implicit())?;
                for j in 0..self.tau {
                    let next = lu.solve(&fields[j])?;
                    fields.push(next);
                }
            }
        }
        Ok(Trajectory { fields })
    }

    /// Wrapped, advected heat kernel sampled on the grid, scaled so that the
    /// `t = 0` limit is the discrete unit spike at `L/2`.
    pub fn analytical_solution(&self, t: f64) -> Result<CVector> {
        if self.bc != BoundaryCondition::Periodic || self.ic != InitialCondition::Delta {
            return Err(Error::Unsupported(
                "analytical solution needs periodic BC and delta IC".into(),
            ));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("t = {t} must be nonnegative")));
        }
        let n = self.ng;
        let l = self.length;
        let x0 = l / 2.0;
        let dt_d = self.diffusion * t;
        // Below the grid band the series is the exact discrete spike; above it
        // the Gaussian factor controls the tail.
        let band = (n / 2) as i64;
        let n_max = if dt_d > 0.0 {
            let k_max = (1e-12f64.ln().abs() / dt_d).sqrt() + 1.0;
            band.max((k_max * l / (2.0 * PI)).ceil() as i64)
        } else {
            band
        };
        let (lo, hi) = if dt_d > 0.0 { (-n_max, n_max) } else { (-band, band - 1) };
        let out = (0..n)
            .map(|i| {
                let xi = self.x(i) - x0 - self.advection * t;
                let mut s = 0.0;
                for m in lo..=hi {
                    let k = 2.0 * PI * m as f64 / l;
                    s += (-dt_d * k * k).exp() * (k * xi).cos();
                }
                cre(s / n as f64)
            })
            .collect();
        CVector::from_vec(out)
    }
}

/// Time-indexed fields `u⁰..u^τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub fields: Vec<CVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.fields.len()
    }
    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
    pub fn last(&self) -> &CVector {
        self.fields.last().expect("nonempty trajectory")
    }
}

/// Spectral norm of a periodic tridiagonal circulant from its symbol.
pub fn circulant_symbol_norm(diag: f64, upper: f64, lower: f64, n: usize) -> f64 {
    (0..n)
        .map(|m| {
            let th = 2.0 * PI * m as f64 / n as f64;
            let z = C64::new(diag, 0.0)
                + C64::from_polar(upper, th)
                + C64::from_polar(lower, -th);
            z.norm()
        })
        .fold(0.0, f64::max)
}
