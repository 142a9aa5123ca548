//! One-dimensional finite element spaces and their basis tables.

use serde::{Deserialize, Serialize};

use super::mesh::Interval1D;
use super::quadrature::legendre_with_derivative;
use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Continuity {
    C0,
    Dg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    ZeroTrace,
    Free,
}

/// Shape functions used on every cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalBasis {
    /// Lagrange polynomials on equispaced nodes `j / q`.
    Lagrange,
    /// `L_2`-orthonormal shifted Legendre polynomials (DG only).
    Legendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceDesc {
    pub continuity: Continuity,
    pub degree: usize,
    pub boundary: Boundary,
    pub mesh: Interval1D,
    pub refine_level: usize,
}

impl SpaceDesc {
    pub fn new(
        continuity: Continuity,
        degree: usize,
        boundary: Boundary,
        mesh: Interval1D,
        refine_level: usize,
    ) -> Self {
        Self {
            continuity,
            degree,
            boundary,
            mesh,
            refine_level,
        }
    }

    /// Continuous piecewise polynomials vanishing at both ends.
    pub fn h1_zero(degree: usize, mesh: Interval1D) -> Self {
        Self::new(Continuity::C0, degree, Boundary::ZeroTrace, mesh, 0)
    }

    pub fn h1(degree: usize, mesh: Interval1D) -> Self {
        Self::new(Continuity::C0, degree, Boundary::Free, mesh, 0)
    }

    pub fn dg(degree: usize, mesh: Interval1D) -> Self {
        Self::new(Continuity::Dg, degree, Boundary::Free, mesh, 0)
    }

    pub fn refined(mut self, level: usize) -> Self {
        self.refine_level = level;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree > MAX_DEGREE {
            return Err(Error::InvalidInput(format!(
                "polynomial degree {} exceeds the supported maximum {MAX_DEGREE}",
                self.degree
            )));
        }
        match (self.continuity, self.boundary) {
            (Continuity::C0, Boundary::ZeroTrace) if self.degree == 0 => Err(Error::InvalidInput(
                "zero-trace spaces need degree ≥ 1".into(),
            )),
            (Continuity::Dg, Boundary::ZeroTrace) => Err(Error::InvalidInput(
                "zero-trace is only defined for continuous spaces".into(),
            )),
            (Continuity::C0, _) if self.degree == 0 => Err(Error::InvalidInput(
                "continuous spaces need degree ≥ 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Mesh after applying the refinement level.
    pub fn active_mesh(&self) -> Interval1D {
        self.mesh.bisect(self.refine_level)
    }

    /// Dimension without building the table.
    pub fn dimension(&self) -> usize {
        let n = self.active_mesh().cells();
        let q = self.degree;
        match (self.continuity, self.boundary) {
            (Continuity::Dg, _) => n * (q + 1),
            (Continuity::C0, Boundary::Free) => n * q + 1,
            (Continuity::C0, Boundary::ZeroTrace) => n * q - 1,
        }
    }
}

/// Local shape functions plus the local-to-global map of a built space.
#[derive(Debug, Clone)]
pub struct BasisTable {
    desc: SpaceDesc,
    mesh: Interval1D,
    local: LocalBasis,
    /// `cells × (q + 1)` entries; `None` marks a removed boundary function.
    dofs: Vec<Option<usize>>,
    dim: usize,
}

/// Build the Lagrange basis table of a space.
pub fn build_space(desc: &SpaceDesc) -> Result<BasisTable> {
    desc.validate()?;
    let mesh = desc.active_mesh();
    let n = mesh.cells();
    let q = desc.degree;
    let stride = q + 1;
    let mut dofs = Vec::with_capacity(n * stride);
    let dim = desc.dimension();
    for k in 0..n {
        for j in 0..stride {
            let id = match (desc.continuity, desc.boundary) {
                (Continuity::Dg, _) => Some(k * stride + j),
                (Continuity::C0, Boundary::Free) => Some(k * q + j),
                (Continuity::C0, Boundary::ZeroTrace) => {
                    let g = k * q + j;
                    (g != 0 && g != n * q).then(|| g - 1)
                }
            };
            dofs.push(id);
        }
    }
    Ok(BasisTable {
        desc: *desc,
        mesh,
        local: LocalBasis::Lagrange,
        dofs,
        dim,
    })
}

/// DG table with the `L_2`-orthonormal Legendre basis on every cell.
pub fn legendre_orthonormalize(desc: &SpaceDesc) -> Result<BasisTable> {
    if desc.continuity != Continuity::Dg {
        return Err(Error::InvalidInput(
            "Legendre orthonormalization requires a DG space".into(),
        ));
    }
    let mut table = build_space(desc)?;
    table.local = LocalBasis::Legendre;
    Ok(table)
}

impl BasisTable {
    pub fn desc(&self) -> &SpaceDesc {
        &self.desc
    }

    pub fn mesh(&self) -> &Interval1D {
        &self.mesh
    }

    pub fn local_basis(&self) -> LocalBasis {
        self.local
    }

    pub fn degree(&self) -> usize {
        self.desc.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn local_len(&self) -> usize {
        self.desc.degree + 1
    }

    pub fn cell_dofs(&self, cell: usize) -> &[Option<usize>] {
        let s = self.local_len();
        &self.dofs[cell * s..(cell + 1) * s]
    }

    /// Shape function values and physical derivatives at reference point `s`
    /// of `cell`.
    pub fn shape(&self, _cell: usize, s: f64, values: &mut [f64], derivs: &mut [f64]) {
        let q = self.desc.degree;
        let h = self.mesh.h();
        match self.local {
            LocalBasis::Lagrange => lagrange_shape(q, s, values, derivs, h),
            LocalBasis::Legendre => {
                let scale = 1.0 / h.sqrt();
                for k in 0..=q {
                    let (p, dp) = legendre_with_derivative(k, 2.0 * s - 1.0);
                    let c = ((2 * k + 1) as f64).sqrt() * scale;
                    values[k] = c * p;
                    derivs[k] = c * dp * 2.0 / h;
                }
            }
        }
    }

    /// Value and derivative of global basis function `i` at `x`.
    pub fn eval_basis(&self, i: usize, x: f64) -> (f64, f64) {
        let Some(cell) = self.mesh.locate(x) else {
            return (0.0, 0.0);
        };
        let (lo, _) = self.mesh.cell(cell);
        let s = ((x - lo) / self.mesh.h()).clamp(0.0, 1.0);
        let m = self.local_len();
        let mut v = vec![0.0; m];
        let mut d = vec![0.0; m];
        self.shape(cell, s, &mut v, &mut d);
        let mut out = (0.0, 0.0);
        for (j, id) in self.cell_dofs(cell).iter().enumerate() {
            if *id == Some(i) {
                out.0 += v[j];
                out.1 += d[j];
            }
        }
        out
    }

    /// Value and derivative of the function with coefficients `coeffs` at `x`.
    pub fn eval(&self, coeffs: &[f64], x: f64) -> (f64, f64) {
        let Some(cell) = self.mesh.locate(x) else {
            return (0.0, 0.0);
        };
        let (lo, _) = self.mesh.cell(cell);
        let s = ((x - lo) / self.mesh.h()).clamp(0.0, 1.0);
        self.eval_in_cell(coeffs, cell, s)
    }

    pub fn eval_in_cell(&self, coeffs: &[f64], cell: usize, s: f64) -> (f64, f64) {
        let m = self.local_len();
        let mut v = [0.0; MAX_DEGREE + 1];
        let mut d = [0.0; MAX_DEGREE + 1];
        self.shape(cell, s, &mut v[..m], &mut d[..m]);
        let mut out = (0.0, 0.0);
        for (j, id) in self.cell_dofs(cell).iter().enumerate() {
            if let Some(i) = id {
                out.0 += coeffs[*i] * v[j];
                out.1 += coeffs[*i] * d[j];
            }
        }
        out
    }

    /// Lagrange interpolation nodes in global numbering (C0 / DG Lagrange only).
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let q = self.desc.degree;
        for k in 0..self.mesh.cells() {
            let (lo, _) = self.mesh.cell(k);
            for (j, id) in self.cell_dofs(k).iter().enumerate() {
                if let Some(i) = id {
                    let s = if q == 0 { 0.5 } else { j as f64 / q as f64 };
                    out[*i] = lo + s * self.mesh.h();
                }
            }
        }
        out
    }

    /// Nodal interpolant of `f` (Lagrange tables only).
    pub fn interpolate<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        assert_eq!(self.local, LocalBasis::Lagrange);
        self.nodes().into_iter().map(f).collect()
    }
}

/// Lagrange shape functions of degree `q` on equispaced nodes of `[0, 1]`,
/// derivatives scaled to a cell of width `h`.
fn lagrange_shape(q: usize, s: f64, values: &mut [f64], derivs: &mut [f64], h: f64) {
    if q == 0 {
        values[0] = 1.0;
        derivs[0] = 0.0;
        return;
    }
    let node = |j: usize| j as f64 / q as f64;
    for j in 0..=q {
        let mut v = 1.0;
        let mut d = 0.0;
        for m in 0..=q {
            if m == j {
                continue;
            }
            let denom = node(j) - node(m);
            d = d * (s - node(m)) / denom + v / denom;
            v *= (s - node(m)) / denom;
        }
        values[j] = v;
        derivs[j] = d / h;
    }
}
