//! Biorthogonal primal/dual systems for quadratics on a once red-refined
//! triangle.
//!
//! Primal side: `v_i = λ_i` and the edge bubbles `e_k = 4 λ_i λ_j` (`k` the
//! vertex opposite the edge). Dual side: the continuous piecewise quadratic
//! nodal functions on the red refinement, minus those of the three vertices.
//! These are `ṽ_i` at the interior nodes nearest to vertex `i`, `ẽ_k` at the
//! midpoint of the edge opposite `k`, and two quarter-point functions per
//! edge. The reference triangle is `(0,0), (1,0), (0,1)` (area ½).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::simplex::{lagrange, multi_indices, reference_simplex, simplex_quadrature, Point, RefinementClass, RefinementRule};
use crate::error::{Error, Result};

/// Dual nodes in lattice units of ¼: `ṽ_0..2`, `ẽ_0..2`, then the quarter
/// points of the edges opposite vertices 0, 1, 2.
const DUAL_NODES: [[i64; 2]; 12] = [
    [1, 1],
    [2, 1],
    [1, 2],
    [2, 2],
    [0, 2],
    [2, 0],
    [3, 1],
    [1, 3],
    [0, 1],
    [0, 3],
    [1, 0],
    [3, 0],
];

/// Coefficients of the three transformations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixConstants {
    /// `e_k ← e_k − a (v_i + v_j) + b v_k`.
    pub step1: [f64; 2],
    /// `ẽ_k ← a ẽ_k − b (q_k + q′_k)` over the quarter points of the same edge.
    pub step2: [f64; 2],
    /// `ṽ ← s [[3,−1,−1],[−1,3,−1],[−1,−1,3]] ṽ`.
    pub step3: f64,
}

impl Default for AppendixConstants {
    fn default() -> Self {
        Self {
            step1: [7.0 / 10.0, 7.0 / 30.0],
            step2: [102.0, 63.0 / 2.0],
            step3: 12.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppendixConstruction {
    pub constants: AppendixConstants,
    /// `⟨primal_raw_i, dual_raw_j⟩`, 6 × 12.
    pub raw_gram: DMatrix<f64>,
    /// Primal functions as rows of coefficients over `[v_0..2, e_0..2]`.
    pub primal: DMatrix<f64>,
    /// Dual functions as rows of coefficients over the 12 raw dual nodes.
    pub dual: DMatrix<f64>,
    /// Generalized mass matrix `⟨primal_i, dual_j⟩`.
    pub mass: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Biorthogonalized {
    pub primal: DMatrix<f64>,
    pub dual: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

/// Raw primal function `i` at barycentric coordinates `l` of the triangle.
fn primal_raw(i: usize, l: &[f64]) -> f64 {
    match i {
        0..=2 => l[i],
        _ => {
            let k = i - 3;
            let (a, b) = others(k);
            4.0 * l[a] * l[b]
        }
    }
}

fn others(k: usize) -> (usize, usize) {
    match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Quadrature points of the red refinement with the child index and the
/// barycentric coordinates relative to that child.
struct RefinedQuadrature {
    class: RefinementClass,
    points: Vec<(usize, Point, Vec<f64>, f64)>,
}

impl RefinedQuadrature {
    fn new() -> Self {
        let class = RefinementClass::new(RefinementRule::Red, 1).expect("one red refinement");
        let tri = reference_simplex(2);
        let mut points = Vec::new();
        for k in 0..class.children.len() {
            for (x, l, w) in simplex_quadrature(&class.child_vertices(&tri, k), 5) {
                points.push((k, x, l, w));
            }
        }
        Self { class, points }
    }

    /// Dual raw function `j` on child `k` at child barycentrics `l`.
    fn dual_raw(&self, j: usize, k: usize, l: &[f64]) -> f64 {
        let verts = &self.class.children[k];
        let target = DUAL_NODES[j];
        for a in multi_indices(2, 2) {
            let c = [
                a.iter().zip(verts).map(|(&ai, v)| ai as i64 * v[0]).sum::<i64>(),
                a.iter().zip(verts).map(|(&ai, v)| ai as i64 * v[1]).sum::<i64>(),
            ];
            if c == target {
                return lagrange(2, &a, l);
            }
        }
        0.0
    }

    /// Locate the child containing `x` and its barycentrics there.
    fn locate(&self, x: Point) -> (usize, Vec<f64>) {
        let tri = reference_simplex(2);
        let mut best = (0, vec![], f64::NEG_INFINITY);
        for k in 0..self.class.children.len() {
            let v = self.class.child_vertices(&tri, k);
            let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
            let l1 = ((x[0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (x[1] - v[0][1])) / det;
            let l2 = ((v[1][0] - v[0][0]) * (x[1] - v[0][1]) - (x[0] - v[0][0]) * (v[1][1] - v[0][1])) / det;
            let l = vec![1.0 - l1 - l2, l1, l2];
            let m = l.iter().cloned().fold(f64::INFINITY, f64::min);
            if m > best.2 {
                best = (k, l, m);
            }
        }
        (best.0, best.1)
    }
}

fn global_bary(x: Point) -> [f64; 3] {
    [1.0 - x[0] - x[1], x[0], x[1]]
}

fn raw_gram(rq: &RefinedQuadrature) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(6, 12);
    for (k, x, l, w) in &rq.points {
        let gl = global_bary(*x);
        let d: Vec<f64> = (0..12).map(|j| rq.dual_raw(j, *k, l)).collect();
        for i in 0..6 {
            let p = primal_raw(i, &gl);
            for j in 0..12 {
                g[(i, j)] += w * p * d[j];
            }
        }
    }
    g
}

fn step3_matrix(s: f64) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| s * if i == j { 3.0 } else { -1.0 })
}

/// Apply the three transformations with the given constants.
pub fn appendix_construct_with(constants: AppendixConstants) -> AppendixConstruction {
    let rq = RefinedQuadrature::new();
    let raw = raw_gram(&rq);
    let mut primal = DMatrix::identity(6, 6);
    for k in 0..3 {
        let (i, j) = others(k);
        primal[(3 + k, i)] = -constants.step1[0];
        primal[(3 + k, j)] = -constants.step1[0];
        primal[(3 + k, k)] = constants.step1[1];
    }
    let mut dual = DMatrix::zeros(6, 12);
    let s3 = step3_matrix(constants.step3);
    for r in 0..3 {
        for c in 0..3 {
            dual[(r, c)] = s3[(r, c)];
        }
    }
    for k in 0..3 {
        dual[(3 + k, 3 + k)] = constants.step2[0];
        dual[(3 + k, 6 + 2 * k)] = -constants.step2[1];
        dual[(3 + k, 7 + 2 * k)] = -constants.step2[1];
    }
    let mass = &primal * &raw * dual.transpose();
    AppendixConstruction {
        constants,
        raw_gram: raw,
        primal,
        dual,
        mass,
    }
}

pub fn appendix_construct() -> AppendixConstruction {
    appendix_construct_with(AppendixConstants::default())
}

/// Transformation constants recomputed from the biorthogonality
/// requirements alone, together with the worst residual of the
/// overdetermined conditions.
pub fn derive_constants() -> Result<(AppendixConstants, f64)> {
    let raw = raw_gram(&RefinedQuadrature::new());
    // step 1, k = 2: ⟨e_2 − a(v_0 + v_1) + b v_2, ṽ_m⟩ = 0 for m = 0, 1, 2
    let a1 = DMatrix::from_fn(3, 2, |m, c| match c {
        0 => -(raw[(0, m)] + raw[(1, m)]),
        _ => raw[(2, m)],
    });
    let b1 = DVector::from_fn(3, |m, _| -raw[(5, m)]);
    let s1 = a1.clone().svd(true, true).solve(&b1, 1e-14).map_err(|e| Error::Unsupported(e.into()))?;
    let res1 = (&a1 * &s1 - &b1).amax();
    let e_mod = |i: usize, j: usize| -> f64 {
        // ⟨e_i after step 1, dual_raw_j⟩
        let k = i;
        let (p, q) = others(k);
        raw[(3 + k, j)] - s1[0] * (raw[(p, j)] + raw[(q, j)]) + s1[1] * raw[(k, j)]
    };
    // step 2, k = 0: ⟨E_j, a·mid_0 − b(q + q′)⟩ = δ_{j0}, j = 0, 1, 2
    let a2 = DMatrix::from_fn(3, 2, |j, c| match c {
        0 => e_mod(j, 3),
        _ => -(e_mod(j, 6) + e_mod(j, 7)),
    });
    let b2 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let s2 = a2.clone().svd(true, true).solve(&b2, 1e-14).map_err(|e| Error::Unsupported(e.into()))?;
    let res2 = (&a2 * &s2 - &b2).amax();
    // step 3: S ⟨v, ṽ⟩ᵀ = Id
    let vv = raw.view((0, 0), (3, 3)).into_owned();
    let s = vv.transpose().try_inverse().ok_or(Error::NotPositiveDefinite { row: 0, pivot: 0.0 })?;
    let scale = s[(0, 0)] / 3.0;
    let res3 = (s - step3_matrix(scale)).amax();
    Ok((
        AppendixConstants {
            step1: [s1[0], s1[1]],
            step2: [s2[0], s2[1]],
            step3: scale,
        },
        res1.max(res2).max(res3),
    ))
}

/// `[[Id, 9/32·Id − 31/32·𝟙], [0, Id]]`.
pub fn expected_mass() -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |i, j| {
        if i == j {
            1.0
        } else if i < 3 && j >= 3 {
            let diag = if i == j - 3 { 9.0 / 32.0 } else { 0.0 };
            diag - 31.0 / 32.0
        } else {
            0.0
        }
    })
}

/// Eliminate the upper-right block by updating the primal side.
pub fn appendix_biorthogonalize(c: &AppendixConstruction) -> Biorthogonalized {
    let mut t = DMatrix::identity(6, 6);
    for i in 0..3 {
        for j in 3..6 {
            t[(i, j)] = -c.mass[(i, j)];
        }
    }
    let primal = &t * &c.primal;
    let gram = &primal * &c.raw_gram * c.dual.transpose();
    Biorthogonalized {
        primal,
        dual: c.dual.clone(),
        gram,
    }
}

/// Outcome of all numerical checks of the construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppendixCheck {
    /// Max entrywise deviation of the mass matrix from the expected block.
    pub mass_error: f64,
    /// Max entry of the lower-left block.
    pub lower_block: f64,
    /// Max deviation of the final Gram matrix from `Id₆`.
    pub gram_error: f64,
    /// Max `|dual_j(vertex)|`.
    pub dual_at_vertices: f64,
    /// Least-squares residual of each `λ_i` in the final primal span.
    pub p1_containment: f64,
    /// Max deviation of derived from configured constants.
    pub constants_error: f64,
    pub mass: Vec<Vec<f64>>,
}

impl AppendixCheck {
    pub fn run() -> Result<Self> {
        let c = appendix_construct();
        let b = appendix_biorthogonalize(&c);
        let (derived, residual) = derive_constants()?;
        let k = c.constants;
        let constants_error = [
            derived.step1[0] - k.step1[0],
            derived.step1[1] - k.step1[1],
            derived.step2[0] - k.step2[0],
            derived.step2[1] - k.step2[1],
            derived.step3 - k.step3,
        ]
        .iter()
        .fold(residual, |m, v| m.max(v.abs()));
        let rq = RefinedQuadrature::new();
        let mut dual_at_vertices: f64 = 0.0;
        for x in reference_simplex(2) {
            let (k, l) = rq.locate(x);
            for r in 0..6 {
                let v: f64 = (0..12).map(|j| b.dual[(r, j)] * rq.dual_raw(j, k, &l)).sum();
                dual_at_vertices = dual_at_vertices.max(v.abs());
            }
        }
        // sample the primal span on quadrature points and fit each λ_i
        let pts: Vec<[f64; 3]> = rq.points.iter().map(|p| global_bary(p.1)).collect();
        let phi = DMatrix::from_fn(pts.len(), 6, |m, r| {
            (0..6).map(|i| b.primal[(r, i)] * primal_raw(i, &pts[m])).sum()
        });
        let svd = phi.clone().svd(true, true);
        let mut p1_containment: f64 = 0.0;
        for i in 0..3 {
            let target = DVector::from_fn(pts.len(), |m, _| pts[m][i]);
            let coef = svd.solve(&target, 1e-14).map_err(|e| Error::Unsupported(e.into()))?;
            p1_containment = p1_containment.max((&phi * coef - target).amax());
        }
        Ok(Self {
            mass_error: (&c.mass - expected_mass()).amax(),
            lower_block: c.mass.view((3, 0), (3, 3)).amax(),
            gram_error: (&b.gram - DMatrix::<f64>::identity(6, 6)).amax(),
            dual_at_vertices,
            p1_containment,
            constants_error,
            mass: (0..6).map(|i| (0..6).map(|j| c.mass[(i, j)]).collect()).collect(),
        })
    }

    pub fn passed(&self, tol: f64) -> bool {
        [
            self.mass_error,
            self.lower_block,
            self.gram_error,
            self.dual_at_vertices,
            self.p1_containment,
            self.constants_error,
        ]
        .iter()
        .all(|&e| e <= tol)
    }
}
