//! Preconditioned Schur-complement solvers for both least-squares formulations.

mod fosls;
mod second_order;

use serde::{Deserialize, Serialize};

pub use fosls::{FoslsReport, FoslsSystem};
pub use second_order::{time_slice_errors, SecondOrderSystem, SolveReport};

use crate::assembly::{
    assemble_b, assemble_fosls, forcing_vector, KroneckerOp, ProblemData, TensorGrid, TensorSpace,
};
use crate::error::{Error, Result};
use crate::linalg::{LinearOperator, PcgOutcome, PcgStatus, SpectralEstimate, StopCheck};
use crate::precond::{make_ky, RieszInverse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    SecondOrder,
    Fosls,
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "second-order" => Ok(Self::SecondOrder),
            "fosls" => Ok(Self::Fosls),
            other => Err(Error::InvalidInput(format!(
                "unknown formulation '{other}' (expected second-order or fosls)"
            ))),
        }
    }
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SecondOrder => "second-order",
            Self::Fosls => "fosls",
        })
    }
}

/// PCG bookkeeping shared by both reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iterations: usize,
    pub status: PcgStatus,
    pub residual_history: Vec<f64>,
    pub spectral: Option<SpectralEstimate>,
    pub transcript: Vec<StopCheck>,
}

impl From<&PcgOutcome> for IterationSummary {
    fn from(o: &PcgOutcome) -> Self {
        Self {
            iterations: o.iterations,
            status: o.status,
            residual_history: o.residual_history.clone(),
            spectral: o.spectral,
            transcript: o.transcript.clone(),
        }
    }
}

/// Test space of a given refinement level with the objects needed to
/// evaluate the residual dual norm `⟨K_Y r, r⟩`, `r = g − B u`.
pub(crate) struct TestLevel {
    pub level: usize,
    pub space: TensorSpace,
    /// `B` for the second-order system, `C_u` for the first-order one.
    pub b: KroneckerOp,
    pub bt: KroneckerOp,
    /// `C_p`; first-order system only.
    pub c_p: Option<KroneckerOp>,
    pub c_pt: Option<KroneckerOp>,
    pub ky: RieszInverse,
    pub g: Vec<f64>,
}

impl TestLevel {
    pub fn second_order(grid: &TensorGrid, trial: &TensorSpace, data: &ProblemData, level: usize) -> Result<Self> {
        let space = TensorSpace::test(grid, level)?;
        let b = assemble_b(trial, &space, &data.operator)?;
        Self::finish(space, b, None, data, level)
    }

    pub fn first_order(
        grid: &TensorGrid,
        trial: &TensorSpace,
        flux: &TensorSpace,
        data: &ProblemData,
        level: usize,
        time_degree: usize,
    ) -> Result<Self> {
        let space = TensorSpace::test_with_time_degree(grid, level, time_degree)?;
        let ops = assemble_fosls(trial, flux, &space, &data.operator)?;
        Self::finish(space, ops.c_u, Some(ops.c_p), data, level)
    }

    fn finish(
        space: TensorSpace,
        b: KroneckerOp,
        c_p: Option<KroneckerOp>,
        data: &ProblemData,
        level: usize,
    ) -> Result<Self> {
        let ky = make_ky(&space)?;
        let g = forcing_vector(data, &space)?;
        Ok(Self {
            level,
            space,
            bt: b.transpose(),
            b,
            c_pt: c_p.as_ref().map(KroneckerOp::transpose),
            c_p,
            ky,
            g,
        })
    }

    /// `r = g − B u − C_p p`.
    pub fn residual(&self, u: &[f64], p: Option<&[f64]>) -> Vec<f64> {
        let mut r = self.g.clone();
        self.b.apply_add(-1.0, u, &mut r);
        if let (Some(cp), Some(p)) = (&self.c_p, p) {
            cp.apply_add(-1.0, p, &mut r);
        }
        r
    }

    /// `⟨K_Y r, r⟩`.
    pub fn dual_norm_sq(&self, r: &[f64]) -> f64 {
        crate::linalg::dot(&self.ky.apply_vec(r), r)
    }
}

/// `‖u − f‖²_{L₂(I×ω)} = ⟨M_Γ u, u⟩ − 2⟨u, f⟩ + ‖f‖²`.
pub(crate) fn observation_misfit(m_obs: &KroneckerOp, u: &[f64], f_omega: &[f64], f_norm_sq: f64) -> f64 {
    m_obs.quadratic_form(u) - 2.0 * crate::linalg::dot(u, f_omega) + f_norm_sq
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("ε must be a finite value ≥ 0, got {eps}")));
    }
    Ok(())
}

pub(crate) fn check_stop_rule(eps: f64, cfg: &crate::linalg::PcgConfig) -> Result<()> {
    if eps == 0.0 && matches!(cfg.stop_rule, crate::linalg::StopRule::EstimatorCoupled { .. }) {
        return Err(Error::InvalidInput(
            "ε = 0 requires fixed-tolerance stopping; the coupled rule scales with ε²".into(),
        ));
    }
    Ok(())
}

/// A linear operator given by a closure; used for Schur complements.
pub(crate) struct FnOperator<F: Fn(&[f64], &mut [f64]) + Sync> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}
