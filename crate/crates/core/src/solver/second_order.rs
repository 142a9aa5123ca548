//! Second-order formulation: minimize `‖Bw − g‖²_{Y'} + ‖w − f‖²_{I×ω} + ε²‖w(0)‖²`.

use serde::{Deserialize, Serialize};

use super::{check_eps, check_stop_rule, observation_misfit, FnOperator, IterationSummary, TestLevel};
use crate::assembly::{
    assemble_observation, assemble_trace0, load_vectors, KroneckerOp, ManufacturedState, ProblemData, TensorGrid,
    TensorSpace,
};
use crate::discretization::QuadRule;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, pcg, LinearOperator, PcgConfig};
use crate::precond::{make_kx, RieszInverse};

/// Assembled discrete system for one grid, solve level `ℓ` and estimator level `L`.
pub struct SecondOrderSystem {
    grid: TensorGrid,
    data: ProblemData,
    trial: TensorSpace,
    solve_level: TestLevel,
    /// `None` when the estimator level equals the solve level.
    estimate_level: Option<TestLevel>,
    m_obs: KroneckerOp,
    m_trace: KroneckerOp,
    kx: RieszInverse,
    f_omega: Vec<f64>,
    f_norm_sq: f64,
    eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub dim: usize,
    pub eps: f64,
    pub ell: usize,
    pub estimate_level: usize,
    pub u: Vec<f64>,
    /// `K_Y (g − B u)` on the solve level.
    pub mu: Vec<f64>,
    /// `G̃₀(u)` at the estimator level, clamped at 0.
    pub estimator0: f64,
    /// `G̃_ε(u)` at the estimator level, clamped at 0.
    pub estimator_eps: f64,
    #[serde(flatten)]
    pub pcg: IterationSummary,
}

impl SecondOrderSystem {
    pub fn assemble(grid: &TensorGrid, data: &ProblemData, ell: usize, estimate_level: usize) -> Result<Self> {
        data.validate()?;
        check_eps(data.eps)?;
        let trial = TensorSpace::trial(grid).map_err(Error::at("trial space"))?;
        let solve_level = TestLevel::second_order(grid, &trial, data, ell).map_err(Error::at("assembly"))?;
        let estimate_level = if estimate_level == ell {
            None
        } else {
            Some(TestLevel::second_order(grid, &trial, data, estimate_level).map_err(Error::at("estimator assembly"))?)
        };
        let loads = load_vectors(data, &trial, &solve_level.space).map_err(Error::at("load vectors"))?;
        let m_obs = assemble_observation(&trial, &data.window)?;
        let m_trace = assemble_trace0(&trial)?;
        let kx = make_kx(&trial)?;
        Ok(Self {
            grid: *grid,
            data: data.clone(),
            trial,
            solve_level,
            estimate_level,
            m_obs,
            m_trace,
            kx,
            f_omega: loads.f_omega,
            f_norm_sq: loads.f_norm_sq,
            eps: data.eps,
        })
    }

    pub fn dim(&self) -> usize {
        self.trial.dim()
    }

    pub fn trial(&self) -> &TensorSpace {
        &self.trial
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.grid
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

    pub fn b(&self) -> &KroneckerOp {
        &self.solve_level.b
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

    pub fn kx(&self) -> &RieszInverse {
        &self.kx
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

    /// `(Bᵀ K_Y B + M_Γ + ε² M_γ₀) u` without forming the product.
    pub fn schur_apply(&self, u: &[f64], out: &mut [f64]) {
        let lvl = &self.solve_level;
        let bu = lvl.b.apply_vec(u);
        lvl.bt.apply(&lvl.ky.apply_vec(&bu), out);
        self.m_obs.apply_add(1.0, u, out);
        if self.eps != 0.0 {
            self.m_trace.apply_add(self.eps * self.eps, u, out);
        }
    }

    /// Right-hand side `f_ω + Bᵀ K_Y g`.
    pub fn rhs(&self) -> Vec<f64> {
        let lvl = &self.solve_level;
        let mut h = self.f_omega.clone();
        lvl.bt.apply_add(1.0, &lvl.ky.apply_vec(&lvl.g), &mut h);
        h
    }

    /// The Schur operator as a reusable linear map.
    pub fn schur_operator(&self) -> impl LinearOperator + '_ {
        FnOperator {
            n: self.dim(),
            f: move |u: &[f64], out: &mut [f64]| self.schur_apply(u, out),
        }
    }

    fn estimate_on(&self, lvl: &TestLevel, u: &[f64], eps_tilde: f64) -> f64 {
        let r = lvl.residual(u, None);
        lvl.dual_norm_sq(&r)
            + observation_misfit(&self.m_obs, u, &self.f_omega, self.f_norm_sq)
            + eps_tilde * eps_tilde * self.m_trace.quadratic_form(u)
    }

    /// `G̃_ε̃(u)` with the residual dual norm on the estimator level `L`.
    pub fn estimate(&self, u: &[f64], eps_tilde: f64) -> f64 {
        self.estimate_on(self.estimate_level.as_ref().unwrap_or(&self.solve_level), u, eps_tilde)
    }

    /// `G̃_ε̃(u)` on the solve level `ℓ`; this is the functional the solver minimizes.
    pub fn estimate_solve_level(&self, u: &[f64], eps_tilde: f64) -> f64 {
        self.estimate_on(&self.solve_level, u, eps_tilde)
    }

    /// `G̃_ε̃(u)` on an arbitrary test level (assembled on demand).
    pub fn estimate_at_level(&self, u: &[f64], eps_tilde: f64, level: usize) -> Result<f64> {
        if level == self.ell() {
            return Ok(self.estimate_solve_level(u, eps_tilde));
        }
        if level == self.estimate_level() {
            return Ok(self.estimate(u, eps_tilde));
        }
        let lvl = TestLevel::second_order(&self.grid, &self.trial, &self.data, level)?;
        Ok(self.estimate_on(&lvl, u, eps_tilde))
    }

    pub fn solve(&self, cfg: &PcgConfig) -> Result<SolveReport> {
        check_stop_rule(self.eps, cfg)?;
        let schur = self.schur_operator();
        let h = self.rhs();
        let eps2 = self.eps * self.eps;
        let mut probe = |u: &[f64]| eps2 * self.estimate_solve_level(u, 0.0).max(0.0);
        let out = pcg(&schur, &self.kx, &h, cfg, Some(&mut probe)).map_err(Error::at("pcg"))?;
        let lvl = &self.solve_level;
        let mu = lvl.ky.apply_vec(&lvl.residual(&out.x, None));
        Ok(SolveReport {
            dim: self.dim(),
            eps: self.eps,
            ell: self.ell(),
            estimate_level: self.estimate_level(),
            estimator0: self.estimate(&out.x, 0.0).max(0.0),
            estimator_eps: self.estimate(&out.x, self.eps).max(0.0),
            mu,
            pcg: IterationSummary::from(&out),
            u: out.x,
        })
    }

    /// Euler–Lagrange residual `h − G_ε u`.
    pub fn gradient_residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.rhs();
        let mut gu = vec![0.0; u.len()];
        self.schur_apply(u, &mut gu);
        axpy(-1.0, &gu, &mut r);
        r
    }

    /// `⟨r, K_X r⟩` for the Euler–Lagrange residual.
    pub fn residual_kx_norm_sq(&self, u: &[f64]) -> f64 {
        let r = self.gradient_residual(u);
        dot(&self.kx.apply_vec(&r), &r)
    }
}

/// `‖u_h(t) − u(t)‖_{L₂(Ω)}` for each requested time.
pub fn time_slice_errors(
    space: &TensorSpace,
    u: &[f64],
    exact: &dyn ManufacturedState,
    times: &[f64],
) -> Result<Vec<f64>> {
    let tm = space.time.mesh();
    let xm = space.space.mesh();
    let rule = QuadRule::gauss(6);
    let ns = space.n_space();
    times
        .iter()
        .map(|&t| {
            if !(tm.a() <= t && t <= tm.b()) {
                return Err(Error::InvalidInput(format!(
                    "time {t} lies outside [{}, {}]",
                    tm.a(),
                    tm.b()
                )));
            }
            let mut slice = vec![0.0; ns];
            for it in 0..space.n_time() {
                let (phi, _) = space.time.eval_basis(it, t);
                if phi != 0.0 {
                    axpy(phi, &u[it * ns..(it + 1) * ns], &mut slice);
                }
            }
            let mut err = 0.0;
            for k in 0..xm.cells() {
                let (a, b) = xm.cell(k);
                err += rule.integrate(a, b, |x| {
                    let s = (x - a) / xm.h();
                    (space.space.eval_in_cell(&slice, k, s).0 - exact.u(t, x)).powi(2)
                });
            }
            Ok(err.sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::assembly::{assemble_riesz_y, SineCubic, ZeroState};
    use crate::discretization::ObservationWindow;

    fn data(eps: f64) -> ProblemData {
        ProblemData::manufactured(Arc::new(SineCubic), ObservationWindow::default()).with_eps(eps)
    }

    fn dense(op: &KroneckerOp) -> DMatrix<f64> {
        op.materialize().to_dense()
    }

    /// Solve the full saddle system `[[R, B], [Bᵀ, −(M_Γ + ε² M_γ₀)]] [μ; u] = [g; −f]`.
    fn saddle_oracle(sys: &SecondOrderSystem, grid: &TensorGrid) -> Vec<f64> {
        let y = TensorSpace::test(grid, sys.ell()).unwrap();
        let r = dense(&assemble_riesz_y(&y).unwrap());
        let b = dense(sys.b());
        let m = dense(sys.observation()) + dense(sys.trace0()) * sys.eps().powi(2);
        let (ny, nx) = (r.nrows(), m.nrows());
        let mut a = DMatrix::zeros(ny + nx, ny + nx);
        a.view_mut((0, 0), (ny, ny)).copy_from(&r);
        a.view_mut((0, ny), (ny, nx)).copy_from(&b);
        a.view_mut((ny, 0), (nx, ny)).copy_from(&b.transpose());
        a.view_mut((ny, ny), (nx, nx)).copy_from(&(-m));
        let mut rhs = DVector::zeros(ny + nx);
        rhs.rows_mut(0, ny).copy_from_slice(sys.g());
        for (i, f) in sys.f_omega().iter().enumerate() {
            rhs[ny + i] = -f;
        }
        let sol = a.lu().solve(&rhs).unwrap();
        sol.rows(ny, nx).iter().copied().collect()
    }

    fn energy_norm(sys: &SecondOrderSystem, v: &[f64]) -> f64 {
        let mut gv = vec![0.0; v.len()];
        sys.schur_apply(v, &mut gv);
        dot(&gv, v).sqrt()
    }

    #[test]
    fn schur_apply_basics() {
        let grid = TensorGrid::unit(4).unwrap();
        let sys = SecondOrderSystem::assemble(&grid, &data(2.0), 1, 1).unwrap();
        let n = sys.dim();
        let mut out = vec![1.0; n];
        sys.schur_apply(&vec![0.0; n], &mut out);
        assert!(out.iter().all(|v| *v == 0.0));
        let b = dense(sys.b());
        let ky = sys.ky().materialize();
        let g = b.transpose() * ky * &b + dense(sys.observation()) + dense(sys.trace0()) * 4.0;
        let sch = sys.schur_operator().materialize();
        assert!((&g - &sch).amax() < 1e-10 * g.amax());
        assert!((&sch - sch.transpose()).amax() < 1e-10 * g.amax());
        // ε-scaling against the ε = 0 system
        let sys0 = SecondOrderSystem::assemble(&grid, &data(0.0), 1, 1).unwrap();
        let u: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (mut a2, mut a0) = (vec![0.0; n], vec![0.0; n]);
        sys.schur_apply(&u, &mut a2);
        sys0.schur_apply(&u, &mut a0);
        let m0u = sys.trace0().apply_vec(&u);
        for i in 0..n {
            assert!((a2[i] - a0[i] - 4.0 * m0u[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let grid = TensorGrid::unit(4).unwrap();
        let d = ProblemData::manufactured(Arc::new(ZeroState), ObservationWindow::default()).with_eps(0.5);
        let sys = SecondOrderSystem::assemble(&grid, &d, 0, 0).unwrap();
        let rep = sys.solve(&PcgConfig::estimator_coupled(1.0, 100)).unwrap();
        assert!(rep.u.iter().all(|v| *v == 0.0));
        assert_eq!(rep.estimator0, 0.0);
    }

    #[test]
    fn matches_dense_saddle_solve() {
        for (n, ell) in [(4, 0), (4, 1), (6, 2)] {
            let grid = TensorGrid::unit(n).unwrap();
            let sys = SecondOrderSystem::assemble(&grid, &data(0.25), ell, ell).unwrap();
            let rep = sys.solve(&PcgConfig::fixed_tol(1e-13, 500)).unwrap();
            let oracle = saddle_oracle(&sys, &grid);
            let diff: Vec<f64> = rep.u.iter().zip(&oracle).map(|(a, b)| a - b).collect();
            let err = energy_norm(&sys, &diff);
            assert!(err < 1e-8 * energy_norm(&sys, &oracle).max(1.0), "n={n} ℓ={ell}: {err:e}");
        }
    }

    #[test]
    fn reflection_symmetry() {
        let grid = TensorGrid::unit(8).unwrap();
        let sys = SecondOrderSystem::assemble(&grid, &data(0.125), 1, 1).unwrap();
        let rep = sys.solve(&PcgConfig::fixed_tol(1e-12, 500)).unwrap();
        let nx = sys.trial().n_space();
        for it in 0..sys.trial().n_time() {
            for ix in 0..nx {
                let a = rep.u[it * nx + ix];
                let b = rep.u[it * nx + nx - 1 - ix];
                assert!((a - b).abs() < 1e-8, "{it},{ix}");
            }
        }
    }

    #[test]
    fn estimator_evaluation() {
        let grid = TensorGrid::unit(4).unwrap();
        // u = 0 and g = 0 leaves ‖f‖²
        let mut d = ProblemData::manufactured(Arc::new(ZeroState), ObservationWindow::default()).with_lambda(0.3);
        d.eps = 0.1;
        let sys = SecondOrderSystem::assemble(&grid, &d, 0, 2).unwrap();
        let z = vec![0.0; sys.dim()];
        assert!((sys.estimate(&z, 0.0) - 0.09 * 0.5).abs() < 1e-12);

        // dense evaluation with the Riesz matrix on level L
        let d = data(0.1);
        let sys = SecondOrderSystem::assemble(&grid, &d, 0, 2).unwrap();
        let u: Vec<f64> = (0..sys.dim()).map(|i| 0.1 * (i as f64 * 0.7).cos()).collect();
        let y2 = TensorSpace::test(&grid, 2).unwrap();
        let b2 = dense(&crate::assembly::assemble_b(sys.trial(), &y2, &d.operator).unwrap());
        let r2 = dense(&assemble_riesz_y(&y2).unwrap());
        let g2 = DVector::from_vec(crate::assembly::forcing_vector(&d, &y2).unwrap());
        let res = g2 - &b2 * DVector::from_vec(u.clone());
        let dual = res.dot(&r2.lu().solve(&res).unwrap());
        let mo = dense(sys.observation());
        let uv = DVector::from_vec(u.clone());
        let fv = DVector::from_vec(sys.f_omega().to_vec());
        let misfit = uv.dot(&(&mo * &uv)) - 2.0 * uv.dot(&fv) + sys.f_norm_sq();
        let trace = uv.dot(&(dense(sys.trace0()) * &uv));
        let expected = dual + misfit + 0.3f64.powi(2) * trace;
        assert!((sys.estimate(&u, 0.3) - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn estimator_monotone_in_eps_and_level() {
        let grid = TensorGrid::unit(8).unwrap();
        let sys = SecondOrderSystem::assemble(&grid, &data(0.125), 0, 2).unwrap();
        let rep = sys.solve(&PcgConfig::estimator_coupled(1.0, 200)).unwrap();
        let mut last = -1.0;
        for e in [0.0, 0.01, 0.1, 0.5, 1.0] {
            let v = sys.estimate(&rep.u, e);
            assert!(v >= last);
            last = v;
        }
        let l0 = sys.estimate_at_level(&rep.u, 0.0, 0).unwrap();
        let l2 = sys.estimate_at_level(&rep.u, 0.0, 2).unwrap();
        assert!(l2 >= l0, "{l2} < {l0}");
        assert!(rep.estimator0 <= rep.estimator_eps);
    }

    #[test]
    fn coupled_stop_rule_holds_at_exit() {
        let grid = TensorGrid::unit(8).unwrap();
        let sys = SecondOrderSystem::assemble(&grid, &data(0.125), 0, 0).unwrap();
        let rep = sys.solve(&PcgConfig::estimator_coupled(1.0, 200)).unwrap();
        let last = rep.pcg.transcript.last().unwrap();
        assert!(last.residual_sq <= last.threshold);
        let rkr = sys.residual_kx_norm_sq(&rep.u);
        assert!((rkr - last.residual_sq).abs() <= 1e-8 * rkr.max(1e-14) + 1e-14);
        assert!(rkr <= 0.125f64.powi(2) * sys.estimate_solve_level(&rep.u, 0.0) * (1.0 + 1e-8));
    }

    #[test]
    fn eps_zero_requires_fixed_tolerance() {
        let grid = TensorGrid::unit(4).unwrap();
        let sys = SecondOrderSystem::assemble(&grid, &data(0.0), 0, 0).unwrap();
        assert!(sys.solve(&PcgConfig::estimator_coupled(1.0, 50)).is_err());
        assert!(sys.solve(&PcgConfig::fixed_tol(1e-10, 200)).is_ok());
    }

    #[test]
    fn optimality_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = TensorGrid::unit(4).unwrap();
        let sys = SecondOrderSystem::assemble(&grid, &data(0.3), 1, 1).unwrap();
        let rep = sys.solve(&PcgConfig::fixed_tol(1e-13, 500)).unwrap();
        let j = |u: &[f64]| sys.estimate_solve_level(u, sys.eps());
        let base = j(&rep.u);
        for _ in 0..20 {
            let v: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for t in [1e-3, -1e-3, 1e-2, -1e-2] {
                let mut w = rep.u.clone();
                axpy(t, &v, &mut w);
                assert!(j(&w) >= base - 1e-9);
            }
        }
        // central differences of ½ J against the Euler–Lagrange residual at a random point
        let u: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let res = sys.gradient_residual(&u);
        let step = 1e-5;
        for i in 0..sys.dim() {
            let (mut up, mut um) = (u.clone(), u.clone());
            up[i] += step;
            um[i] -= step;
            let fd = -0.25 * (j(&up) - j(&um)) / step;
            assert!((fd - res[i]).abs() <= 1e-6 * res[i].abs().max(1.0), "{i}: {fd} vs {}", res[i]);
        }
    }

    #[test]
    fn time_slices() {
        let grid = TensorGrid::unit(16).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        let s = SineCubic;
        let u = x.interpolate(|t, xx| s.u(t, xx));
        let coarse = time_slice_errors(&x, &u, &s, &[0.5, 1.0]).unwrap();
        let grid2 = TensorGrid::unit(32).unwrap();
        let x2 = TensorSpace::trial(&grid2).unwrap();
        let u2 = x2.interpolate(|t, xx| s.u(t, xx));
        let fine = time_slice_errors(&x2, &u2, &s, &[0.5, 1.0]).unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            let rate = (c / f).log2();
            assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
        }
        assert!(time_slice_errors(&x, &u, &s, &[1.5]).is_err());
        let zero = time_slice_errors(&x, &vec![0.0; x.dim()], &ZeroState, &[0.0, 0.3]).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
    }
}
