//! Space-time spaces and the Kronecker-structured operators built on them.

use serde::{Deserialize, Serialize};

use super::factor::{assemble, masked_mass, mass, stiffness, Form};
use super::kron::KroneckerOp;
use crate::discretization::{
    build_space, legendre_orthonormalize, BasisTable, Interval1D, ObservationWindow, SpaceDesc,
};
use crate::error::{Error, Result};
use crate::linalg::Csr;

/// Constant coefficients of `∂ₜu − K∂ₓₓu + b∂ₓu + cu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatOperator {
    pub diffusion: f64,
    pub advection: f64,
    pub reaction: f64,
}

impl Default for HeatOperator {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            advection: 0.0,
            reaction: 0.0,
        }
    }
}

impl HeatOperator {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion > 0.0) || !self.advection.is_finite() || !self.reaction.is_finite() {
            return Err(Error::Unsupported(format!(
                "heat operator needs K > 0 and finite b, c (got K={}, b={}, c={})",
                self.diffusion, self.advection, self.reaction
            )));
        }
        Ok(())
    }
}

/// Uniform partitions of the time interval and the spatial domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorGrid {
    pub time: Interval1D,
    pub space: Interval1D,
}

impl TensorGrid {
    pub fn new(time: Interval1D, space: Interval1D) -> Self {
        Self { time, space }
    }

    /// `n` cells on `I = [0, 1]` and on `Ω = [0, 1]`.
    pub fn unit(n: usize) -> Result<Self> {
        Ok(Self {
            time: Interval1D::unit(n)?,
            space: Interval1D::unit(n)?,
        })
    }

    pub fn h(&self) -> f64 {
        self.space.h()
    }
}

/// Tensor product of a temporal and a spatial basis; coefficient `(it, ix)`
/// is stored at `it * n_space + ix`.
#[derive(Debug, Clone)]
pub struct TensorSpace {
    pub time: BasisTable,
    pub space: BasisTable,
}

impl TensorSpace {
    pub fn new(time: BasisTable, space: BasisTable) -> Self {
        Self { time, space }
    }

    /// Trial space: continuous P1 in time, zero-trace P1 in space.
    pub fn trial(grid: &TensorGrid) -> Result<Self> {
        Ok(Self {
            time: build_space(&SpaceDesc::h1(1, grid.time))?,
            space: build_space(&SpaceDesc::h1_zero(1, grid.space))?,
        })
    }

    /// Test space on the `level`-times bisected spatial mesh with a
    /// discontinuous, orthonormal time basis of degree 1.
    pub fn test(grid: &TensorGrid, level: usize) -> Result<Self> {
        Self::test_with_time_degree(grid, level, 1)
    }

    pub fn test_with_time_degree(grid: &TensorGrid, level: usize, time_degree: usize) -> Result<Self> {
        Ok(Self {
            time: legendre_orthonormalize(&SpaceDesc::dg(time_degree, grid.time))?,
            space: build_space(&SpaceDesc::h1_zero(1, grid.space).refined(level))?,
        })
    }

    /// Flux space: piecewise constants in time (orthonormal), continuous P1
    /// without boundary conditions in space.
    pub fn flux(grid: &TensorGrid) -> Result<Self> {
        Ok(Self {
            time: legendre_orthonormalize(&SpaceDesc::dg(0, grid.time))?,
            space: build_space(&SpaceDesc::h1(1, grid.space))?,
        })
    }

    pub fn dim(&self) -> usize {
        self.time.dim() * self.space.dim()
    }

    pub fn n_time(&self) -> usize {
        self.time.dim()
    }

    pub fn n_space(&self) -> usize {
        self.space.dim()
    }

    /// `(n_time, n_space)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.time.dim(), self.space.dim())
    }

    /// Value of the function with coefficients `coeffs` at `(t, x)`.
    pub fn eval(&self, coeffs: &[f64], t: f64, x: f64) -> f64 {
        let ns = self.n_space();
        let mut out = 0.0;
        for it in 0..self.n_time() {
            let (phi, _) = self.time.eval_basis(it, t);
            if phi != 0.0 {
                out += phi * self.space.eval(&coeffs[it * ns..(it + 1) * ns], x).0;
            }
        }
        out
    }

    /// Tensor nodal interpolant (Lagrange factors only).
    pub fn interpolate<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let tn = self.time.nodes();
        let xn = self.space.nodes();
        tn.iter()
            .flat_map(|&t| xn.iter().map(move |&x| (t, x)))
            .map(|(t, x)| f(t, x))
            .collect()
    }
}

/// `(Bw)(v) = ∫∫ ∂ₜw v + K ∂ₓw ∂ₓv + b ∂ₓw v + c w v`, rows indexed by the test space.
pub fn assemble_b(trial: &TensorSpace, test: &TensorSpace, op: &HeatOperator) -> Result<KroneckerOp> {
    op.validate()?;
    let dt = assemble(&test.time, &trial.time, Form::ColDeriv, None)?;
    let mt = mass(&test.time, &trial.time)?;
    let mx = mass(&test.space, &trial.space)?;
    let ax = stiffness(&test.space, &trial.space)?;
    let mut b = KroneckerOp::new(1.0, dt, mx.clone()).plus(op.diffusion, mt.clone(), ax);
    if op.advection != 0.0 {
        let dx = assemble(&test.space, &trial.space, Form::ColDeriv, None)?;
        b = b.plus(op.advection, mt.clone(), dx);
    }
    if op.reaction != 0.0 {
        b = b.plus(op.reaction, mt, mx);
    }
    Ok(b)
}

/// Values of the temporal basis at `t`.
fn time_values(time: &BasisTable, t: f64) -> Vec<f64> {
    (0..time.dim()).map(|i| time.eval_basis(i, t).0).collect()
}

/// `⟨γ₀ w, γ₀ v⟩_{L₂(Ω)}` on the trial space: `(e₀ e₀ᵀ) ⊗ M_x`.
pub fn assemble_trace0(trial: &TensorSpace) -> Result<KroneckerOp> {
    let e0 = time_values(&trial.time, trial.time.mesh().a());
    let n = e0.len();
    let triplets = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let v = e0[i] * e0[j];
            (v != 0.0).then_some((i, j, v))
        })
        .collect::<Vec<_>>();
    let outer = Csr::from_triplets(n, n, triplets);
    Ok(KroneckerOp::new(1.0, outer, mass(&trial.space, &trial.space)?))
}

/// `∫_I ∫_ω w v` on the trial space.
pub fn assemble_observation(trial: &TensorSpace, window: &ObservationWindow) -> Result<KroneckerOp> {
    Ok(KroneckerOp::new(
        1.0,
        mass(&trial.time, &trial.time)?,
        masked_mass(&trial.space, &trial.space, (window.omega_lo, window.omega_hi))?,
    ))
}

/// Gram matrix of the test-space inner product `∫∫ ∂ₓv ∂ₓw`.
pub fn assemble_riesz_y(test: &TensorSpace) -> Result<KroneckerOp> {
    Ok(KroneckerOp::new(
        1.0,
        mass(&test.time, &test.time)?,
        stiffness(&test.space, &test.space)?,
    ))
}

/// Operators of the first-order formulation.
#[derive(Debug, Clone)]
pub struct FoslsOperators {
    /// `Ȳ × X`: `∫∫ ∂ₜw v + b ∂ₓw v + c w v`.
    pub c_u: KroneckerOp,
    /// `Ȳ × Z`: `∫∫ q ∂ₓv`.
    pub c_p: KroneckerOp,
    /// `Z × X`: `K ∫∫ q ∂ₓw`.
    pub j: KroneckerOp,
    /// `X × X`: `K² ∫∫ ∂ₓw ∂ₓw̃`.
    pub l: KroneckerOp,
    /// `Z × Z`: mass matrix.
    pub n: KroneckerOp,
}

pub fn assemble_fosls(
    trial: &TensorSpace,
    flux: &TensorSpace,
    test: &TensorSpace,
    op: &HeatOperator,
) -> Result<FoslsOperators> {
    op.validate()?;
    let k = op.diffusion;
    let dt = assemble(&test.time, &trial.time, Form::ColDeriv, None)?;
    let mt_yx = mass(&test.time, &trial.time)?;
    let mut c_u = KroneckerOp::new(1.0, dt, mass(&test.space, &trial.space)?);
    if op.advection != 0.0 {
        let dx = assemble(&test.space, &trial.space, Form::ColDeriv, None)?;
        c_u = c_u.plus(op.advection, mt_yx.clone(), dx);
    }
    if op.reaction != 0.0 {
        c_u = c_u.plus(op.reaction, mt_yx, mass(&test.space, &trial.space)?);
    }
    let c_p = KroneckerOp::new(
        1.0,
        mass(&test.time, &flux.time)?,
        assemble(&test.space, &flux.space, Form::RowDeriv, None)?,
    );
    let j = KroneckerOp::new(
        k,
        mass(&flux.time, &trial.time)?,
        assemble(&flux.space, &trial.space, Form::ColDeriv, None)?,
    );
    let l = KroneckerOp::new(
        k * k,
        mass(&trial.time, &trial.time)?,
        stiffness(&trial.space, &trial.space)?,
    );
    let n = KroneckerOp::new(1.0, mass(&flux.time, &flux.time)?, mass(&flux.space, &flux.space)?);
    Ok(FoslsOperators { c_u, c_p, j, l, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::QuadRule;
    use nalgebra::DMatrix;

    /// Dense space-time bilinear form by tensor Gauss quadrature on the
    /// common refinement of both meshes; `form` receives
    /// `(t, x, (w, ∂ₜw, ∂ₓw), (v, ∂ₜv, ∂ₓv))`.
    fn oracle<F>(row: &TensorSpace, col: &TensorSpace, form: F) -> DMatrix<f64>
    where
        F: Fn(f64, f64, (f64, f64, f64), (f64, f64, f64)) -> f64,
    {
        let tm = row.time.mesh();
        let xm = if row.space.mesh().cells() > col.space.mesh().cells() {
            row.space.mesh()
        } else {
            col.space.mesh()
        };
        let rule = QuadRule::gauss(5);
        let mut pts = Vec::new();
        for kt in 0..tm.cells() {
            let (ta, tb) = tm.cell(kt);
            for kx in 0..xm.cells() {
                let (xa, xb) = xm.cell(kx);
                for (t, wt) in rule.mapped(ta, tb) {
                    for (x, wx) in rule.mapped(xa, xb) {
                        pts.push((t, x, wt * wx));
                    }
                }
            }
        }
        let eval = |s: &TensorSpace, i: usize, t: f64, x: f64| {
            let (it, ix) = (i / s.n_space(), i % s.n_space());
            let (p, dp) = s.time.eval_basis(it, t);
            let (q, dq) = s.space.eval_basis(ix, x);
            (p * q, dp * q, p * dq)
        };
        DMatrix::from_fn(row.dim(), col.dim(), |i, j| {
            pts.iter()
                .map(|&(t, x, w)| w * form(t, x, eval(col, j, t, x), eval(row, i, t, x)))
                .sum()
        })
    }

    fn dense(op: &KroneckerOp) -> DMatrix<f64> {
        op.materialize().to_dense()
    }

    fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        let scale = b.amax().max(1.0);
        let diff = (a - b).amax();
        assert!(diff <= tol * scale, "max difference {diff:e}");
    }

    #[test]
    fn b_matches_quadrature_oracle() {
        let grid = TensorGrid::unit(3).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        for level in [0, 1] {
            let y = TensorSpace::test(&grid, level).unwrap();
            let op = HeatOperator {
                diffusion: 0.7,
                advection: 0.3,
                reaction: -0.2,
            };
            let b = assemble_b(&x, &y, &op).unwrap();
            let o = oracle(&y, &x, |_, _, w, v| {
                w.1 * v.0 + op.diffusion * w.2 * v.2 + op.advection * w.2 * v.0 + op.reaction * w.0 * v.0
            });
            assert_close(&dense(&b), &o, 1e-12);
            assert_close(&dense(&b.transpose()), &o.transpose(), 1e-12);
        }
    }

    #[test]
    fn b_on_separable_function() {
        let grid = TensorGrid::unit(4).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        let y = TensorSpace::test(&grid, 1).unwrap();
        let b = assemble_b(&x, &y, &HeatOperator::default()).unwrap();
        let w = x.interpolate(|t, s| (1.0 + t) * s * (1.0 - s));
        let bw = b.apply_vec(&w);
        let o = oracle(&y, &x, |_, _, w, v| w.1 * v.0 + w.2 * v.2);
        let expected = &o * nalgebra::DVector::from_vec(w);
        for i in 0..bw.len() {
            assert!((bw[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn time_derivative_annihilates_constants() {
        let grid = TensorGrid::unit(5).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        let y = TensorSpace::test(&grid, 0).unwrap();
        let dt = assemble(&y.time, &x.time, Form::ColDeriv, None).unwrap();
        let out = dt.mul_vec(&vec![1.0; x.n_time()]);
        assert!(out.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn trace_operator() {
        let grid = TensorGrid::unit(8).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        let m0 = assemble_trace0(&x).unwrap();
        let t = &m0.terms()[0].1;
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.get(0, 0), 1.0);
        let zero_start = x.interpolate(|t, s| t * s * (1.0 - s));
        assert!(m0.quadratic_form(&zero_start).abs() < 1e-15);
        let w = x.interpolate(|t, s| (1.0 - t) * (std::f64::consts::PI * s).sin());
        let ns = x.n_space();
        let slice = &w[..ns];
        let norm_sq = (0..grid.space.cells())
                .map(|k| {
                    let (a, b) = grid.space.cell(k);
                    QuadRule::gauss(4).integrate(a, b, |s| x.space.eval(slice, s).0.powi(2))
                })
            .sum::<f64>();
        assert!((m0.quadratic_form(&w) - norm_sq).abs() < 1e-13);
    }

    #[test]
    fn observation_and_riesz_match_oracle() {
        let grid = TensorGrid::unit(4).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        let win = ObservationWindow::new(0.25, 0.75, 0.1).unwrap();
        let m = assemble_observation(&x, &win).unwrap();
        let o = oracle(&x, &x, |_, s, w, v| if (0.25..=0.75).contains(&s) { w.0 * v.0 } else { 0.0 });
        assert_close(&dense(&m), &o, 1e-12);
        let y = TensorSpace::test(&grid, 1).unwrap();
        let r = assemble_riesz_y(&y).unwrap();
        let o = oracle(&y, &y, |_, _, w, v| w.2 * v.2);
        assert_close(&dense(&r), &o, 1e-12);
        // orthonormal time basis: the time factor is the identity
        let mt = &r.terms()[0].1;
        assert_close(&mt.to_dense(), &DMatrix::identity(y.n_time(), y.n_time()), 1e-13);
    }

    #[test]
    fn fosls_operators_match_oracle() {
        let grid = TensorGrid::unit(2).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        let z = TensorSpace::flux(&grid).unwrap();
        let y = TensorSpace::test(&grid, 1).unwrap();
        let op = HeatOperator {
            diffusion: 1.5,
            advection: 0.4,
            reaction: 0.25,
        };
        let f = assemble_fosls(&x, &z, &y, &op).unwrap();
        let k = op.diffusion;
        assert_close(
            &dense(&f.c_u),
            &oracle(&y, &x, |_, _, w, v| w.1 * v.0 + op.advection * w.2 * v.0 + op.reaction * w.0 * v.0),
            1e-12,
        );
        assert_close(&dense(&f.c_p), &oracle(&y, &z, |_, _, q, v| q.0 * v.2), 1e-12);
        assert_close(&dense(&f.j), &oracle(&z, &x, |_, _, w, q| k * q.0 * w.2), 1e-12);
        assert_close(&dense(&f.l), &oracle(&x, &x, |_, _, w, v| k * k * w.2 * v.2), 1e-12);
        assert_close(&dense(&f.n), &oracle(&z, &z, |_, _, p, q| p.0 * q.0), 1e-12);
    }

    #[test]
    fn flux_mass_is_block_diagonal_in_time() {
        let grid = TensorGrid::unit(4).unwrap();
        let z = TensorSpace::flux(&grid).unwrap();
        let n = assemble_fosls(
            &TensorSpace::trial(&grid).unwrap(),
            &z,
            &TensorSpace::test(&grid, 0).unwrap(),
            &HeatOperator::default(),
        )
        .unwrap()
        .n
        .materialize();
        let ns = z.n_space();
        for (i, j, _) in n.triplets() {
            assert_eq!(i / ns, j / ns);
        }
    }

    #[test]
    fn first_order_identity_with_gradient_space() {
        // with a flux space that contains ∂ₓw exactly, C(w, K∂ₓw) = Bw
        let grid = TensorGrid::unit(4).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        let y = TensorSpace::test(&grid, 1).unwrap();
        let z = TensorSpace::new(
            build_space(&SpaceDesc::h1(1, grid.time)).unwrap(),
            build_space(&SpaceDesc::dg(0, grid.space)).unwrap(),
        );
        let op = HeatOperator {
            diffusion: 0.8,
            advection: 0.0,
            reaction: 0.3,
        };
        let f = assemble_fosls(&x, &z, &y, &op).unwrap();
        let b = assemble_b(&x, &y, &op).unwrap();
        let w = x.interpolate(|t, s| (2.0 + t * t) * s * (1.0 - s) + 0.3 * t * (3.0 * s).sin() * s * (1.0 - s));
        let grad = gradient_coefficients(&x, &w, op.diffusion);
        let mut lhs = f.c_u.apply_vec(&w);
        crate::linalg::axpy(1.0, &f.c_p.apply_vec(&grad), &mut lhs);
        let rhs = b.apply_vec(&w);
        for i in 0..lhs.len() {
            assert!((lhs[i] - rhs[i]).abs() < 1e-12, "{i}: {} vs {}", lhs[i], rhs[i]);
        }
        // and the flux misfit vanishes
        let misfit = f.n.quadratic_form(&grad) - 2.0 * crate::linalg::dot(&f.j.apply_vec(&w), &grad)
            + f.l.quadratic_form(&w);
        assert!(misfit.abs() < 1e-12, "{misfit}");
    }

    /// Coefficients of `K ∂ₓw` in CG-P1(time) ⊗ DG-P0(space).
    pub(crate) fn gradient_coefficients(x: &TensorSpace, w: &[f64], k: f64) -> Vec<f64> {
        let ns = x.n_space();
        let cells = x.space.mesh().cells();
        let mut out = Vec::with_capacity(x.n_time() * cells);
        for it in 0..x.n_time() {
            let slice = &w[it * ns..(it + 1) * ns];
            for c in 0..cells {
                let (a, b) = x.space.mesh().cell(c);
                out.push(k * x.space.eval(slice, 0.5 * (a + b)).1);
            }
        }
        out
    }

    #[test]
    fn symmetric_operators_are_psd() {
        let grid = TensorGrid::unit(4).unwrap();
        let x = TensorSpace::trial(&grid).unwrap();
        let z = TensorSpace::flux(&grid).unwrap();
        let y = TensorSpace::test(&grid, 1).unwrap();
        let win = ObservationWindow::default();
        let f = assemble_fosls(&x, &z, &y, &HeatOperator::default()).unwrap();
        let ops = [
            assemble_riesz_y(&y).unwrap(),
            assemble_observation(&x, &win).unwrap(),
            assemble_trace0(&x).unwrap(),
            f.l,
            f.n,
        ];
        for op in &ops {
            let m = dense(op);
            assert!((&m - m.transpose()).amax() < 1e-13);
            let eig = nalgebra::SymmetricEigen::new(m.clone());
            assert!(eig.eigenvalues.min() >= -1e-12 * m.amax());
        }
    }
}
