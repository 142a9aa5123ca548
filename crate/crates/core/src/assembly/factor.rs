//! One-dimensional bilinear forms between basis tables.

use crate::discretization::{build_space, BasisTable, LocalBasis, QuadRule, SpaceDesc};
use crate::error::{Error, Result};
use crate::linalg::Csr;

/// Sparse matrix of a 1D bilinear form; rows index the test (row) space.
pub type FactorMatrix = Csr;

/// Integrand of a 1D bilinear form `(v, w)`, `v` from the row space and `w`
/// from the column space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// `∫ v w`
    Mass,
    /// `∫ v' w'`
    Stiffness,
    /// `∫ v w'`
    ColDeriv,
    /// `∫ v' w`
    RowDeriv,
}

pub fn mass(row: &BasisTable, col: &BasisTable) -> Result<FactorMatrix> {
    assemble(row, col, Form::Mass, None)
}

pub fn stiffness(row: &BasisTable, col: &BasisTable) -> Result<FactorMatrix> {
    assemble(row, col, Form::Stiffness, None)
}

/// `∫ v w'` with `v` in `row` and `w` in `col`.
pub fn deriv(row: &BasisTable, col: &BasisTable) -> Result<FactorMatrix> {
    assemble(row, col, Form::ColDeriv, None)
}

/// `∫_ω v w` over the window `[lo, hi]`.
pub fn masked_mass(row: &BasisTable, col: &BasisTable, window: (f64, f64)) -> Result<FactorMatrix> {
    assemble(row, col, Form::Mass, Some(window))
}

/// Assemble `form` between two spaces whose meshes are equal or nested by
/// uniform bisection; cross matrices go through the prolongation of the
/// coarser space.
pub fn assemble(
    row: &BasisTable,
    col: &BasisTable,
    form: Form,
    window: Option<(f64, f64)>,
) -> Result<FactorMatrix> {
    let (rm, cm) = (row.mesh(), col.mesh());
    if rm == cm {
        return Ok(assemble_same_mesh(row, col, form, window));
    }
    if cm.is_refined_by(rm).is_some() {
        let fine_col = build_space(&on_mesh(col.desc(), rm))?;
        let p = prolongation(col, &fine_col)?;
        return Ok(assemble_same_mesh(row, &fine_col, form, window).matmul(&p));
    }
    if rm.is_refined_by(cm).is_some() {
        let fine_row = build_space(&on_mesh(row.desc(), cm))?;
        let p = prolongation(row, &fine_row)?;
        return Ok(p.transpose().matmul(&assemble_same_mesh(&fine_row, col, form, window)));
    }
    Err(Error::Incompatible(format!(
        "meshes with {} and {} cells on [{}, {}] / [{}, {}] are not nested",
        rm.cells(),
        cm.cells(),
        rm.a(),
        rm.b(),
        cm.a(),
        cm.b()
    )))
}

fn on_mesh(desc: &SpaceDesc, mesh: &crate::discretization::Interval1D) -> SpaceDesc {
    SpaceDesc {
        mesh: *mesh,
        refine_level: 0,
        ..*desc
    }
}

fn assemble_same_mesh(
    row: &BasisTable,
    col: &BasisTable,
    form: Form,
    window: Option<(f64, f64)>,
) -> FactorMatrix {
    let mesh = row.mesh();
    let h = mesh.h();
    let rule = QuadRule::with_exactness(row.degree() + col.degree() + 3);
    let (mr, mc) = (row.local_len(), col.local_len());
    let mut rv = vec![0.0; mr];
    let mut rd = vec![0.0; mr];
    let mut cv = vec![0.0; mc];
    let mut cd = vec![0.0; mc];
    let mut local = vec![0.0; mr * mc];
    let mut triplets = Vec::with_capacity(mesh.cells() * mr * mc);

    let pieces: Vec<(usize, (f64, f64))> = match window {
        None => (0..mesh.cells()).map(|k| (k, mesh.cell(k))).collect(),
        Some((lo, hi)) => mesh
            .split_at(&[lo, hi])
            .into_iter()
            .filter(|(_, (a, b))| {
                let mid = 0.5 * (a + b);
                mid >= lo && mid <= hi
            })
            .collect(),
    };

    let mut current: Option<usize> = None;
    let flush = |cell: usize, local: &mut [f64], triplets: &mut Vec<(usize, usize, f64)>| {
        for (a, ra) in row.cell_dofs(cell).iter().enumerate() {
            let Some(i) = ra else { continue };
            for (b, cb) in col.cell_dofs(cell).iter().enumerate() {
                let Some(j) = cb else { continue };
                let v = local[a * mc + b];
                if v != 0.0 {
                    triplets.push((*i, *j, v));
                }
            }
        }
        local.iter_mut().for_each(|v| *v = 0.0);
    };

    for (cell, (a, b)) in pieces {
        if current.is_some_and(|c| c != cell) {
            flush(current.unwrap(), &mut local, &mut triplets);
        }
        current = Some(cell);
        let x0 = mesh.cell(cell).0;
        for (x, w) in rule.mapped(a, b) {
            let s = (x - x0) / h;
            row.shape(cell, s, &mut rv, &mut rd);
            col.shape(cell, s, &mut cv, &mut cd);
            let (left, right) = match form {
                Form::Mass => (&rv, &cv),
                Form::Stiffness => (&rd, &cd),
                Form::ColDeriv => (&rv, &cd),
                Form::RowDeriv => (&rd, &cv),
            };
            for p in 0..mr {
                let lp = w * left[p];
                for q in 0..mc {
                    local[p * mc + q] += lp * right[q];
                }
            }
        }
    }
    if let Some(c) = current {
        flush(c, &mut local, &mut triplets);
    }
    Csr::from_triplets(row.dim(), col.dim(), triplets)
}

/// Embedding of `coarse` into `fine` (same family on a bisected mesh) by
/// nodal interpolation; returns the `fine.dim × coarse.dim` matrix.
pub fn prolongation(coarse: &BasisTable, fine: &BasisTable) -> Result<FactorMatrix> {
    if coarse.local_basis() != LocalBasis::Lagrange || fine.local_basis() != LocalBasis::Lagrange {
        return Err(Error::Unsupported(
            "prolongation is only defined for Lagrange bases".into(),
        ));
    }
    let (cd, fd) = (coarse.desc(), fine.desc());
    if cd.degree != fd.degree || cd.continuity != fd.continuity || cd.boundary != fd.boundary {
        return Err(Error::Incompatible(
            "prolongation needs spaces of the same family".into(),
        ));
    }
    if coarse.mesh().is_refined_by(fine.mesh()).is_none() {
        return Err(Error::Incompatible("fine mesh does not refine the coarse mesh".into()));
    }
    let q = fine.degree();
    let fm = fine.mesh();
    let cm = coarse.mesh();
    let ratio = fm.cells() / cm.cells();
    let m = coarse.local_len();
    let mut v = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut triplets = Vec::new();
    let mut done = vec![false; fine.dim()];
    for kf in 0..fm.cells() {
        let kc = kf / ratio;
        let (lo, _) = fm.cell(kf);
        for (j, id) in fine.cell_dofs(kf).iter().enumerate() {
            let Some(i) = id else { continue };
            if done[*i] {
                continue;
            }
            done[*i] = true;
            let sf = if q == 0 { 0.5 } else { j as f64 / q as f64 };
            let x = lo + sf * fm.h();
            let s = (x - cm.cell(kc).0) / cm.h();
            coarse.shape(kc, s, &mut v, &mut d);
            for (a, cid) in coarse.cell_dofs(kc).iter().enumerate() {
                if let Some(c) = cid {
                    if v[a].abs() > 1e-15 {
                        triplets.push((*i, *c, v[a]));
                    }
                }
            }
        }
    }
    Ok(Csr::from_triplets(fine.dim(), coarse.dim(), triplets))
}
