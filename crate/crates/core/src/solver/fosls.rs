//! First-order formulation: minimize
//! `‖C(w, q) − g‖²_{Y'} + ‖q − K∂ₓw‖² + ‖w − f‖²_{I×ω} + ε²‖w(0)‖²` over `X × Z`.

use serde::{Deserialize, Serialize};

use super::{check_eps, check_stop_rule, observation_misfit, FnOperator, IterationSummary, TestLevel};
use crate::assembly::{
    assemble_fosls, assemble_observation, assemble_trace0, load_vectors, KroneckerOp, ProblemData, TensorGrid,
    TensorSpace,
};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, pcg, LinearOperator, PcgConfig};
use crate::precond::{make_kx, make_kz, RieszInverse};

pub struct FoslsSystem {
    grid: TensorGrid,
    data: ProblemData,
    trial: TensorSpace,
    flux: TensorSpace,
    time_degree: usize,
    solve_level: TestLevel,
    estimate_level: Option<TestLevel>,
    j: KroneckerOp,
    jt: KroneckerOp,
    l: KroneckerOp,
    n: KroneckerOp,
    m_obs: KroneckerOp,
    m_trace: KroneckerOp,
    kx: RieszInverse,
    kz: RieszInverse,
    f_omega: Vec<f64>,
    f_norm_sq: f64,
    eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoslsReport {
    pub dim: usize,
    pub dim_flux: usize,
    pub eps: f64,
    pub ell: usize,
    pub estimate_level: usize,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// `K_Y (ḡ − C_u u − C_p p)` on the solve level.
    pub lambda: Vec<f64>,
    pub estimator0: f64,
    pub estimator_eps: f64,
    /// `‖p − K∂ₓu‖²`.
    pub flux_misfit: f64,
    #[serde(flatten)]
    pub pcg: IterationSummary,
}

impl FoslsSystem {
    /// Standard spaces: the flux space is piecewise constant in time and
    /// continuous P1 in space; the test space has time degree 1.
    pub fn assemble(grid: &TensorGrid, data: &ProblemData, ell: usize, estimate_level: usize) -> Result<Self> {
        let flux = TensorSpace::flux(grid).map_err(Error::at("flux space"))?;
        Self::assemble_with(grid, data, ell, estimate_level, flux, 1)
    }

    /// Custom flux space and test-space time degree.
    pub fn assemble_with(
        grid: &TensorGrid,
        data: &ProblemData,
        ell: usize,
        estimate_level: usize,
        flux: TensorSpace,
        time_degree: usize,
    ) -> Result<Self> {
        data.validate()?;
        check_eps(data.eps)?;
        let trial = TensorSpace::trial(grid).map_err(Error::at("trial space"))?;
        let solve_level =
            TestLevel::first_order(grid, &trial, &flux, data, ell, time_degree).map_err(Error::at("assembly"))?;
        let estimate_level = if estimate_level == ell {
            None
        } else {
            Some(
                TestLevel::first_order(grid, &trial, &flux, data, estimate_level, time_degree)
                    .map_err(Error::at("estimator assembly"))?,
            )
        };
        let ops = assemble_fosls(&trial, &flux, &solve_level.space, &data.operator).map_err(Error::at("assembly"))?;
        let loads = load_vectors(data, &trial, &solve_level.space).map_err(Error::at("load vectors"))?;
        Ok(Self {
            grid: *grid,
            data: data.clone(),
            m_obs: assemble_observation(&trial, &data.window)?,
            m_trace: assemble_trace0(&trial)?,
            kx: make_kx(&trial)?,
            kz: make_kz(&flux)?,
            trial,
            flux,
            time_degree,
            solve_level,
            estimate_level,
            jt: ops.j.transpose(),
            j: ops.j,
            l: ops.l,
            n: ops.n,
            f_omega: loads.f_omega,
            f_norm_sq: loads.f_norm_sq,
            eps: data.eps,
        })
    }

    pub fn dim_trial(&self) -> usize {
        self.trial.dim()
    }

    pub fn dim_flux(&self) -> usize {
        self.flux.dim()
    }

    /// Unknowns of the block system.
    pub fn dim(&self) -> usize {
        self.dim_trial() + self.dim_flux()
    }

    pub fn trial(&self) -> &TensorSpace {
        &self.trial
    }

    pub fn flux(&self) -> &TensorSpace {
        &self.flux
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn ell(&self) -> usize {
        self.solve_level.level
    }

    pub fn estimate_level(&self) -> usize {
        self.estimate_level.as_ref().map_or(self.solve_level.level, |l| l.level)
    }

    pub fn c_u(&self) -> &KroneckerOp {
        &self.solve_level.b
    }

    pub fn c_p(&self) -> &KroneckerOp {
        self.solve_level.c_p.as_ref().expect("first-order level carries C_p")
    }

    pub fn j(&self) -> &KroneckerOp {
        &self.j
    }

    pub fn l(&self) -> &KroneckerOp {
        &self.l
    }

    pub fn n(&self) -> &KroneckerOp {
        &self.n
    }

    pub fn observation(&self) -> &KroneckerOp {
        &self.m_obs
    }

    pub fn trace0(&self) -> &KroneckerOp {
        &self.m_trace
    }

    pub fn ky(&self) -> &RieszInverse {
        &self.solve_level.ky
    }

    pub fn g(&self) -> &[f64] {
        &self.solve_level.g
    }

    pub fn f_omega(&self) -> &[f64] {
        &self.f_omega
    }

    pub fn f_norm_sq(&self) -> f64 {
        self.f_norm_sq
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.dim_trial())
    }

    /// Block Schur operator applied to `x = (u, p)`.
    pub fn schur_apply(&self, x: &[f64], out: &mut [f64]) {
        let lvl = &self.solve_level;
        let (u, p) = self.split(x);
        let (ou, op) = out.split_at_mut(self.dim_trial());
        let mut cx = lvl.b.apply_vec(u);
        self.c_p().apply_add(1.0, p, &mut cx);
        let kcx = lvl.ky.apply_vec(&cx);

        lvl.bt.apply(&kcx, ou);
        self.l.apply_add(1.0, u, ou);
        self.m_obs.apply_add(1.0, u, ou);
        if self.eps != 0.0 {
            self.m_trace.apply_add(self.eps * self.eps, u, ou);
        }
        self.jt.apply_add(-1.0, p, ou);

        lvl.c_pt.as_ref().unwrap().apply(&kcx, op);
        self.n.apply_add(1.0, p, op);
        self.j.apply_add(-1.0, u, op);
    }

    pub fn schur_operator(&self) -> impl LinearOperator + '_ {
        FnOperator {
            n: self.dim(),
            f: move |x: &[f64], out: &mut [f64]| self.schur_apply(x, out),
        }
    }

    /// `diag(K_X, K_Z)`.
    pub fn preconditioner(&self) -> impl LinearOperator + '_ {
        FnOperator {
            n: self.dim(),
            f: move |x: &[f64], out: &mut [f64]| {
                let nu = self.dim_trial();
                self.kx.apply(&x[..nu], &mut out[..nu]);
                self.kz.apply(&x[nu..], &mut out[nu..]);
            },
        }
    }

    /// Right-hand side `(f_ω + C_uᵀ K_Y ḡ, C_pᵀ K_Y ḡ)`.
    pub fn rhs(&self) -> Vec<f64> {
        let lvl = &self.solve_level;
        let kg = lvl.ky.apply_vec(&lvl.g);
        let mut h = vec![0.0; self.dim()];
        let (hu, hp) = h.split_at_mut(self.dim_trial());
        hu.copy_from_slice(&self.f_omega);
        lvl.bt.apply_add(1.0, &kg, hu);
        lvl.c_pt.as_ref().unwrap().apply(&kg, hp);
        h
    }

    /// `‖p − K∂ₓu‖² = ⟨N p, p⟩ − 2⟨J u, p⟩ + ⟨L u, u⟩`.
    pub fn flux_misfit(&self, u: &[f64], p: &[f64]) -> f64 {
        self.n.quadratic_form(p) - 2.0 * dot(&self.j.apply_vec(u), p) + self.l.quadratic_form(u)
    }

    fn estimate_on(&self, lvl: &TestLevel, u: &[f64], p: &[f64], eps_tilde: f64) -> f64 {
        let r = lvl.residual(u, Some(p));
        lvl.dual_norm_sq(&r)
            + self.flux_misfit(u, p)
            + observation_misfit(&self.m_obs, u, &self.f_omega, self.f_norm_sq)
            + eps_tilde * eps_tilde * self.m_trace.quadratic_form(u)
    }

    /// `H̃_ε̃(u, p)` with the residual dual norm on the estimator level.
    pub fn estimate(&self, u: &[f64], p: &[f64], eps_tilde: f64) -> f64 {
        self.estimate_on(self.estimate_level.as_ref().unwrap_or(&self.solve_level), u, p, eps_tilde)
    }

    pub fn estimate_solve_level(&self, u: &[f64], p: &[f64], eps_tilde: f64) -> f64 {
        self.estimate_on(&self.solve_level, u, p, eps_tilde)
    }

    pub fn estimate_at_level(&self, u: &[f64], p: &[f64], eps_tilde: f64, level: usize) -> Result<f64> {
        if level == self.ell() {
            return Ok(self.estimate_solve_level(u, p, eps_tilde));
        }
        if level == self.estimate_level() {
            return Ok(self.estimate(u, p, eps_tilde));
        }
        let lvl = TestLevel::first_order(&self.grid, &self.trial, &self.flux, &self.data, level, self.time_degree)?;
        Ok(self.estimate_on(&lvl, u, p, eps_tilde))
    }

    pub fn solve(&self, cfg: &PcgConfig) -> Result<FoslsReport> {
        check_stop_rule(self.eps, cfg)?;
        let schur = self.schur_operator();
        let prec = self.preconditioner();
        let h = self.rhs();
        let eps2 = self.eps * self.eps;
        let nu = self.dim_trial();
        let mut probe = |x: &[f64]| eps2 * self.estimate_solve_level(&x[..nu], &x[nu..], 0.0).max(0.0);
        let out = pcg(&schur, &prec, &h, cfg, Some(&mut probe)).map_err(Error::at("pcg"))?;
        let (u, p) = self.split(&out.x);
        let lvl = &self.solve_level;
        Ok(FoslsReport {
            dim: nu,
            dim_flux: self.dim_flux(),
            eps: self.eps,
            ell: self.ell(),
            estimate_level: self.estimate_level(),
            lambda: lvl.ky.apply_vec(&lvl.residual(u, Some(p))),
            estimator0: self.estimate(u, p, 0.0).max(0.0),
            estimator_eps: self.estimate(u, p, self.eps).max(0.0),
            flux_misfit: self.flux_misfit(u, p),
            pcg: IterationSummary::from(&out),
            u: u.to_vec(),
            p: p.to_vec(),
        })
    }

    /// Euler–Lagrange residual of the block system.
    pub fn gradient_residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.rhs();
        let mut hx = vec![0.0; x.len()];
        self.schur_apply(x, &mut hx);
        axpy(-1.0, &hx, &mut r);
        r
    }
}
