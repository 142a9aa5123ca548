//! Reference-element inf-sup constants between polynomials on a simplex and
//! the interior bubbles of its refinements, and the explicit biorthogonal
//! construction for quadratics on a once red-refined triangle.
//!
//! For a simplex `T′` refined `ℓ` times,
//! `α(q, ℓ) = inf_{p ∈ P_q(T′)} sup_{b} ⟨p, b⟩ / (‖p‖ ‖b‖)` where `b` ranges over
//! continuous piecewise `P_q` functions on the refinement vanishing on `∂T′`.
//! Positivity of `α` is what a biorthogonal (Fortin-type) projector needs.

mod appendix;
mod simplex;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use appendix::{
    appendix_biorthogonalize, appendix_construct, appendix_construct_with, derive_constants, expected_mass, AppendixCheck, AppendixConstants,
    AppendixConstruction, Biorthogonalized,
};
pub use simplex::{
    lagrange, multi_indices, reference_simplex, simplex_quadrature, volume, BubbleSpace, Point,
    RefinementClass, RefinementRule,
};

use crate::error::{Error, Result};
use crate::linalg::dense_geig;

/// Eigenvalues below this are treated as a vanishing inf-sup constant.
pub const ALPHA_ZERO_TOL: f64 = 1e-10;

/// Gram matrices entering `α`.
#[derive(Debug, Clone)]
pub struct InfsupGrams {
    /// `P_q(T′)` against itself.
    pub pp: DMatrix<f64>,
    /// `P_q(T′)` against the bubbles.
    pub pb: DMatrix<f64>,
    /// Bubbles against themselves.
    pub bb: DMatrix<f64>,
}

impl InfsupGrams {
    /// Assemble on the simplex with the given vertices (two for an
    /// interval, three for a triangle).
    pub fn assemble(simplex: &[Point], q: usize, level: usize, rule: RefinementRule) -> Result<Self> {
        check_supported(rule, q, level)?;
        if simplex.len() != rule.dimension() + 1 {
            return Err(Error::InvalidInput(format!(
                "{rule} refinement needs a simplex with {} vertices",
                rule.dimension() + 1
            )));
        }
        if !(volume(simplex) > 0.0) {
            return Err(Error::InvalidInput("degenerate simplex".into()));
        }
        let class = RefinementClass::new(rule, level)?;
        let bubbles = BubbleSpace::new(&class, q);
        let poly = PolyBasis::new(simplex, rule.dimension(), q);
        let (np, nb) = (poly.dim(), bubbles.dim());
        let mut pp = DMatrix::zeros(np, np);
        let mut pb = DMatrix::zeros(np, nb);
        let mut bb = DMatrix::zeros(nb, nb);
        let mut pv = vec![0.0; np];
        for k in 0..class.children.len() {
            let verts = class.child_vertices(simplex, k);
            let local = bubbles.local_to_global(&class, k);
            for (x, lambda, w) in simplex_quadrature(&verts, q + 2) {
                poly.eval(x, &mut pv);
                let bv: Vec<(usize, f64)> = local
                    .iter()
                    .filter_map(|(a, idx)| idx.map(|i| (i, lagrange(q, a, &lambda))))
                    .collect();
                for i in 0..np {
                    for j in 0..np {
                        pp[(i, j)] += w * pv[i] * pv[j];
                    }
                    for &(b, v) in &bv {
                        pb[(i, b)] += w * pv[i] * v;
                    }
                }
                for &(a, va) in &bv {
                    for &(b, vb) in &bv {
                        bb[(a, b)] += w * va * vb;
                    }
                }
            }
        }
        Ok(Self { pp, pb, bb })
    }

    /// `S = M_pb M_bb⁻¹ M_pbᵀ`; `⟨S c, c⟩ / ⟨M_pp c, c⟩` is the squared
    /// supremum over bubbles for the polynomial with coefficients `c`.
    pub fn projected(&self) -> Result<DMatrix<f64>> {
        if self.bb.nrows() == 0 {
            return Ok(DMatrix::zeros(self.pp.nrows(), self.pp.nrows()));
        }
        let chol = self.bb.clone().cholesky().ok_or(Error::NotPositiveDefinite {
            row: 0,
            pivot: f64::NAN,
        })?;
        let x = chol.solve(&self.pb.transpose());
        let s = &self.pb * x;
        Ok((&s + s.transpose()) * 0.5)
    }

    /// Squared sup over bubbles, normalized by `‖p‖²`.
    pub fn rayleigh(&self, s: &DMatrix<f64>, c: &[f64]) -> f64 {
        let c = nalgebra::DVector::from_column_slice(c);
        (c.transpose() * s * &c)[(0, 0)] / (c.transpose() * &self.pp * &c)[(0, 0)]
    }

    pub fn alpha(&self) -> Result<f64> {
        if self.bb.nrows() < self.pp.nrows() {
            return Ok(0.0);
        }
        let s = self.projected()?;
        let lmin = dense_geig(&s, &self.pp)?.values[0];
        Ok(if lmin > ALPHA_ZERO_TOL { lmin.sqrt() } else { 0.0 })
    }
}

/// Scaled monomials in coordinates relative to the simplex centroid. On an
/// interval the single coordinate is the arc length along it.
struct PolyBasis {
    center: Point,
    scale: f64,
    direction: Option<Point>,
    powers: Vec<(i32, i32)>,
}

impl PolyBasis {
    fn new(simplex: &[Point], d: usize, q: usize) -> Self {
        let n = simplex.len() as f64;
        let center = [
            simplex.iter().map(|p| p[0]).sum::<f64>() / n,
            simplex.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
        let dist = |a: &Point, b: &Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let scale = simplex
            .iter()
            .flat_map(|a| simplex.iter().map(move |b| dist(a, b)))
            .fold(0.0, f64::max);
        let q = q as i32;
        let (direction, powers) = if d == 1 {
            let dir = [(simplex[1][0] - simplex[0][0]) / scale, (simplex[1][1] - simplex[0][1]) / scale];
            (Some(dir), (0..=q).map(|i| (i, 0)).collect())
        } else {
            (None, (0..=q).flat_map(|i| (0..=q - i).map(move |j| (i, j))).collect())
        };
        Self {
            center,
            scale,
            direction,
            powers,
        }
    }

    fn dim(&self) -> usize {
        self.powers.len()
    }

    fn eval(&self, x: Point, out: &mut [f64]) {
        let dx = (x[0] - self.center[0]) / self.scale;
        let dy = (x[1] - self.center[1]) / self.scale;
        let (u, v) = match self.direction {
            Some(t) => (dx * t[0] + dy * t[1], 0.0),
            None => (dx, dy),
        };
        for (o, &(i, j)) in out.iter_mut().zip(&self.powers) {
            *o = u.powi(i) * v.powi(j);
        }
    }
}

fn check_supported(rule: RefinementRule, q: usize, level: usize) -> Result<()> {
    let (max_q, max_level) = match rule {
        RefinementRule::Bisection => (4, 10),
        RefinementRule::Red => (2, 4),
    };
    if q == 0 || q > max_q {
        return Err(Error::Unsupported(format!(
            "{rule} refinement supports degrees 1..={max_q}, got {q}"
        )));
    }
    if level > max_level {
        return Err(Error::Unsupported(format!(
            "{rule} refinement supports generations up to {max_level}, got {level}"
        )));
    }
    Ok(())
}

/// Default refinement rule of each dimension.
pub fn default_rule(d: usize) -> Result<RefinementRule> {
    match d {
        1 => Ok(RefinementRule::Bisection),
        2 => Ok(RefinementRule::Red),
        _ => Err(Error::Unsupported(format!("dimension {d} (only 1 and 2)"))),
    }
}

/// `α(q, ℓ)` on the reference simplex of dimension `d`.
pub fn alpha(d: usize, q: usize, level: usize, rule: RefinementRule) -> Result<f64> {
    if rule.dimension() != d {
        return Err(Error::Unsupported(format!("{rule} refinement in dimension {d}")));
    }
    InfsupGrams::assemble(&reference_simplex(d), q, level, rule)?.alpha()
}

/// Same as [`alpha`] on an arbitrary nondegenerate simplex.
pub fn alpha_on_simplex(simplex: &[Point], q: usize, level: usize, rule: RefinementRule) -> Result<f64> {
    InfsupGrams::assemble(simplex, q, level, rule)?.alpha()
}

/// `dim P_q` in `d` variables.
pub fn poly_dim(d: usize, q: usize) -> usize {
    match d {
        1 => q + 1,
        _ => (q + 1) * (q + 2) / 2,
    }
}

/// Dimension of the bubble space after `level` generations.
pub fn bubble_dim(rule: RefinementRule, q: usize, level: usize) -> usize {
    let n = q << level;
    match rule {
        RefinementRule::Bisection => n - 1,
        RefinementRule::Red => n.saturating_sub(1) * n.saturating_sub(2) / 2,
    }
}

/// Smallest generation whose bubble space is at least as large as `P_q`.
pub fn predicted_minimal_level(rule: RefinementRule, q: usize) -> usize {
    let d = rule.dimension();
    (0..).find(|&l| bubble_dim(rule, q, l) >= poly_dim(d, q)).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfsupRow {
    pub d: usize,
    pub q: usize,
    pub rule: RefinementRule,
    pub ell: usize,
    pub alpha: f64,
}

pub const INFSUP_CSV_HEADER: &str = "d,q,rule,ell,alpha";

/// `α(q, ℓ)` for `ℓ = 0..=max_gen`.
pub fn alpha_table(d: usize, q: usize, rule: RefinementRule, max_gen: usize) -> Result<Vec<InfsupRow>> {
    (0..=max_gen)
        .map(|ell| {
            Ok(InfsupRow {
                d,
                q,
                rule,
                ell,
                alpha: alpha(d, q, ell, rule)?,
            })
        })
        .collect()
}

/// First generation with `α > 0`, searching up to `max_gen`.
pub fn minimal_level(d: usize, q: usize, rule: RefinementRule, max_gen: usize) -> Result<Option<usize>> {
    for ell in 0..=max_gen {
        if alpha(d, q, ell, rule)? > 0.0 {
            return Ok(Some(ell));
        }
    }
    Ok(None)
}

pub fn write_infsup_csv<W: Write>(rows: &[InfsupRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(INFSUP_CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}
