//! Problem data `(g, f)` and their discrete load vectors.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use super::operators::{HeatOperator, TensorSpace};
use crate::discretization::{BasisTable, ObservationWindow, QuadRule};
use crate::error::{Error, Result};

/// A smooth reference state with the derivatives needed to form consistent data.
pub trait ManufacturedState: Send + Sync {
    fn name(&self) -> &str;
    fn u(&self, t: f64, x: f64) -> f64;
    fn u_t(&self, t: f64, x: f64) -> f64;
    fn u_x(&self, t: f64, x: f64) -> f64;
    fn u_xx(&self, t: f64, x: f64) -> f64;
}

/// `u(t, x) = (t³ + 1) sin(πx)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SineCubic;

impl ManufacturedState for SineCubic {
    fn name(&self) -> &str {
        "sine-cubic"
    }

    fn u(&self, t: f64, x: f64) -> f64 {
        (t * t * t + 1.0) * (PI * x).sin()
    }

    fn u_t(&self, t: f64, x: f64) -> f64 {
        3.0 * t * t * (PI * x).sin()
    }

    fn u_x(&self, t: f64, x: f64) -> f64 {
        (t * t * t + 1.0) * PI * (PI * x).cos()
    }

    fn u_xx(&self, t: f64, x: f64) -> f64 {
        -(t * t * t + 1.0) * PI * PI * (PI * x).sin()
    }
}

/// State given by closures; handy for polynomial test data.
pub struct FnState {
    pub name: String,
    pub u: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub u_t: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub u_x: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub u_xx: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl ManufacturedState for FnState {
    fn name(&self) -> &str {
        &self.name
    }
    fn u(&self, t: f64, x: f64) -> f64 {
        (self.u)(t, x)
    }
    fn u_t(&self, t: f64, x: f64) -> f64 {
        (self.u_t)(t, x)
    }
    fn u_x(&self, t: f64, x: f64) -> f64 {
        (self.u_x)(t, x)
    }
    fn u_xx(&self, t: f64, x: f64) -> f64 {
        (self.u_xx)(t, x)
    }
}

/// The zero state.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroState;

impl ManufacturedState for ZeroState {
    fn name(&self) -> &str {
        "zero"
    }
    fn u(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn u_t(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn u_x(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn u_xx(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// Look up a built-in manufactured state by name.
pub fn manufactured_by_name(name: &str) -> Result<Arc<dyn ManufacturedState>> {
    match name {
        "sine-cubic" => Ok(Arc::new(SineCubic)),
        "zero" => Ok(Arc::new(ZeroState)),
        other => Err(Error::InvalidInput(format!(
            "unknown manufactured problem '{other}' (known: sine-cubic, zero)"
        ))),
    }
}

#[derive(Clone)]
pub enum DataSource {
    /// Consistent data generated from a reference state.
    Manufactured(Arc<dyn ManufacturedState>),
    /// Precomputed vectors for fixed spaces: `g` on the test space of the
    /// solve, `f_omega` on the trial space and `‖f‖²`.
    Raw {
        g: Vec<f64>,
        f_omega: Vec<f64>,
        f_norm_sq: f64,
    },
}

impl fmt::Debug for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Manufactured(m) => write!(f, "Manufactured({})", m.name()),
            DataSource::Raw { g, f_omega, .. } => {
                write!(f, "Raw(g: {}, f: {})", g.len(), f_omega.len())
            }
        }
    }
}

/// Data of the recovery problem: forcing `g`, observations `f = u|_{I×ω} + λ`,
/// window `ω` and regularization `ε`.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub source: DataSource,
    pub lambda: f64,
    pub window: ObservationWindow,
    pub eps: f64,
    pub operator: HeatOperator,
}

impl ProblemData {
    pub fn manufactured(state: Arc<dyn ManufacturedState>, window: ObservationWindow) -> Self {
        Self {
            source: DataSource::Manufactured(state),
            lambda: 0.0,
            window,
            eps: 0.0,
            operator: HeatOperator::default(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidInput(format!("ε must be ≥ 0, got {}", self.eps)));
        }
        let w = &self.window;
        if !(0.0 <= w.omega_lo && w.omega_lo < w.omega_hi && w.omega_hi <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "observation window [{}, {}] lies outside Ω = [0, 1]",
                w.omega_lo, w.omega_hi
            )));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidInput("λ must be finite".into()));
        }
        Ok(())
    }

    pub fn state(&self) -> Option<&Arc<dyn ManufacturedState>> {
        match &self.source {
            DataSource::Manufactured(m) => Some(m),
            DataSource::Raw { .. } => None,
        }
    }

    /// Pointwise PDE residual of the reference state, `∂ₜu − K∂ₓₓu + b∂ₓu + cu`.
    fn forcing(&self, m: &dyn ManufacturedState, t: f64, x: f64) -> f64 {
        let op = &self.operator;
        m.u_t(t, x) - op.diffusion * m.u_xx(t, x) + op.advection * m.u_x(t, x) + op.reaction * m.u(t, x)
    }

    /// Observed value `f(t, x)` on `I × ω`.
    pub fn observation(&self, m: &dyn ManufacturedState, t: f64, x: f64) -> f64 {
        m.u(t, x) + self.lambda
    }
}

#[derive(Debug, Clone)]
pub struct LoadVectors {
    pub g: Vec<f64>,
    pub f_omega: Vec<f64>,
    pub f_norm_sq: f64,
}

/// Points per cell for data integrals; exact to degree 11, far below
/// discretization error for smooth data.
const DATA_POINTS: usize = 6;
/// Points per cell for the scalar `‖f‖²`.
const NORM_POINTS: usize = 12;

/// `g(Φ^test)` for consistent forcing.
pub fn forcing_vector(data: &ProblemData, test: &TensorSpace) -> Result<Vec<f64>> {
    data.validate()?;
    match &data.source {
        DataSource::Manufactured(m) => Ok(tensor_load(
            &test.time,
            &test.space,
            None,
            DATA_POINTS,
            |t, x| data.forcing(m.as_ref(), t, x),
        )),
        DataSource::Raw { g, .. } => {
            if g.len() != test.dim() {
                return Err(Error::Incompatible(format!(
                    "raw g has {} entries, test space has {}",
                    g.len(),
                    test.dim()
                )));
            }
            Ok(g.clone())
        }
    }
}

/// `g` on the test space, `f_ω` on the trial space and `‖f‖²_{L₂(I×ω)}`.
pub fn load_vectors(data: &ProblemData, trial: &TensorSpace, test: &TensorSpace) -> Result<LoadVectors> {
    data.validate()?;
    let window = (data.window.omega_lo, data.window.omega_hi);
    match &data.source {
        DataSource::Manufactured(m) => {
            let g = forcing_vector(data, test)?;
            let f_omega = tensor_load(&trial.time, &trial.space, Some(window), DATA_POINTS, |t, x| {
                data.observation(m.as_ref(), t, x)
            });
            let f_norm_sq = observation_norm_sq(data, m.as_ref());
            Ok(LoadVectors { g, f_omega, f_norm_sq })
        }
        DataSource::Raw { g, f_omega, f_norm_sq } => {
            if g.len() != test.dim() || f_omega.len() != trial.dim() {
                return Err(Error::Incompatible(format!(
                    "raw data sizes (g {}, f {}) do not match spaces (test {}, trial {})",
                    g.len(),
                    f_omega.len(),
                    test.dim(),
                    trial.dim()
                )));
            }
            Ok(LoadVectors {
                g: g.clone(),
                f_omega: f_omega.clone(),
                f_norm_sq: *f_norm_sq,
            })
        }
    }
}

/// `‖u + λ‖²_{L₂(I×ω)}` by composite Gauss quadrature on a fixed fine grid.
fn observation_norm_sq(data: &ProblemData, m: &dyn ManufacturedState) -> f64 {
    let rule = QuadRule::gauss(NORM_POINTS);
    let (lo, hi) = (data.window.omega_lo, data.window.omega_hi);
    let pieces = 16;
    let mut total = 0.0;
    for it in 0..pieces {
        let (ta, tb) = (it as f64 / pieces as f64, (it + 1) as f64 / pieces as f64);
        for ix in 0..pieces {
            let xa = lo + (hi - lo) * ix as f64 / pieces as f64;
            let xb = lo + (hi - lo) * (ix + 1) as f64 / pieces as f64;
            for (t, wt) in rule.mapped(ta, tb) {
                for (x, wx) in rule.mapped(xa, xb) {
                    let f = data.observation(m, t, x);
                    total += wt * wx * f * f;
                }
            }
        }
    }
    total
}

/// `∫∫ F(t, x) φ_i(t) θ_j(x)` for all tensor basis pairs, optionally
/// restricted to `x ∈ window`.
fn tensor_load<F: Fn(f64, f64) -> f64>(
    time: &BasisTable,
    space: &BasisTable,
    window: Option<(f64, f64)>,
    points: usize,
    f: F,
) -> Vec<f64> {
    let rule = QuadRule::gauss(points);
    let (tm, sm) = (time.mesh(), space.mesh());
    let ns = space.dim();
    let mut out = vec![0.0; time.dim() * ns];
    let space_pieces: Vec<(usize, (f64, f64))> = match window {
        None => (0..sm.cells()).map(|k| (k, sm.cell(k))).collect(),
        Some((lo, hi)) => sm
            .split_at(&[lo, hi])
            .into_iter()
            .filter(|(_, (a, b))| 0.5 * (a + b) >= lo && 0.5 * (a + b) <= hi)
            .collect(),
    };
    let (mt, msp) = (time.local_len(), space.local_len());
    let mut tv = vec![0.0; mt];
    let mut td = vec![0.0; mt];
    let mut sv = vec![0.0; msp];
    let mut sd = vec![0.0; msp];
    // per-quadrature-point spatial shape values, reused across time cells
    let mut spatial: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    for &(k, (a, b)) in &space_pieces {
        let x0 = sm.cell(k).0;
        for (x, w) in rule.mapped(a, b) {
            space.shape(k, (x - x0) / sm.h(), &mut sv, &mut sd);
            spatial.push((k, x, sv.iter().map(|v| v * w).collect()));
        }
    }
    for kt in 0..tm.cells() {
        let (ta, tb) = tm.cell(kt);
        let tdofs = time.cell_dofs(kt);
        for (t, wt) in rule.mapped(ta, tb) {
            time.shape(kt, (t - ta) / tm.h(), &mut tv, &mut td);
            for (k, x, swv) in &spatial {
                let val = wt * f(t, *x);
                let sdofs = space.cell_dofs(*k);
                for (a, ti) in tdofs.iter().enumerate() {
                    let Some(ti) = ti else { continue };
                    let va = val * tv[a];
                    for (b, si) in sdofs.iter().enumerate() {
                        if let Some(si) = si {
                            out[ti * ns + si] += va * swv[b];
                        }
                    }
                }
            }
        }
    }
    out
}
