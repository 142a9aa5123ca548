//! Refined reference simplices, Lagrange bases in barycentric form and
//! collapsed-coordinate quadrature, for `d = 1, 2`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discretization::QuadRule;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinementRule {
    /// Halving of intervals.
    Bisection,
    /// Splitting a triangle into four by its edge midpoints.
    Red,
}

impl RefinementRule {
    pub fn dimension(self) -> usize {
        match self {
            RefinementRule::Bisection => 1,
            RefinementRule::Red => 2,
        }
    }
}

impl FromStr for RefinementRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bisection" => Ok(Self::Bisection),
            "red" => Ok(Self::Red),
            other => Err(Error::InvalidInput(format!(
                "unknown refinement rule '{other}' (expected bisection or red)"
            ))),
        }
    }
}

impl fmt::Display for RefinementRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bisection => "bisection",
            Self::Red => "red",
        })
    }
}

/// The `ℓ`-th generation of a fixed refinement rule applied to the
/// reference simplex. Children are stored by their vertices in integer
/// lattice units of `2^{-ℓ}`, so that for the reference simplex the vertices
/// are `0, M` (`d = 1`) or `(0,0), (M,0), (0,M)` (`d = 2`) with `M = 2^ℓ`.
#[derive(Debug, Clone)]
pub struct RefinementClass {
    pub rule: RefinementRule,
    pub level: usize,
    pub children: Vec<Vec<[i64; 2]>>,
}

impl RefinementClass {
    pub fn new(rule: RefinementRule, level: usize) -> Result<Self> {
        if level > 12 {
            return Err(Error::Unsupported(format!("refinement generation {level} is too deep")));
        }
        let m = 1i64 << level;
        let children = match rule {
            RefinementRule::Bisection => (0..m).map(|i| vec![[i, 0], [i + 1, 0]]).collect(),
            RefinementRule::Red => {
                let mut out = Vec::with_capacity((m * m) as usize);
                for i in 0..m {
                    for j in 0..m - i {
                        out.push(vec![[i, j], [i + 1, j], [i, j + 1]]);
                        if i + j + 1 < m {
                            out.push(vec![[i + 1, j], [i + 1, j + 1], [i, j + 1]]);
                        }
                    }
                }
                out
            }
        };
        Ok(Self { rule, level, children })
    }

    pub fn d(&self) -> usize {
        self.rule.dimension()
    }

    pub fn lattice(&self) -> i64 {
        1 << self.level
    }

    /// Children mapped onto the simplex with the given vertices.
    pub fn child_vertices(&self, simplex: &[Point], k: usize) -> Vec<Point> {
        let m = self.lattice() as f64;
        self.children[k]
            .iter()
            .map(|&[i, j]| {
                let (a, b) = (i as f64 / m, j as f64 / m);
                let mut p = simplex[0];
                for c in 0..2 {
                    p[c] += a * (simplex[1][c] - simplex[0][c]);
                    if self.d() == 2 {
                        p[c] += b * (simplex[2][c] - simplex[0][c]);
                    }
                }
                p
            })
            .collect()
    }
}

/// Reference simplex: `[0, 1]` or the unit right triangle.
pub fn reference_simplex(d: usize) -> Vec<Point> {
    match d {
        1 => vec![[0.0, 0.0], [1.0, 0.0]],
        _ => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    }
}

/// `d`-dimensional volume of a simplex.
pub fn volume(v: &[Point]) -> f64 {
    match v.len() {
        2 => ((v[1][0] - v[0][0]).powi(2) + (v[1][1] - v[0][1]).powi(2)).sqrt(),
        3 => 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs(),
        _ => panic!("only intervals and triangles are supported"),
    }
}

/// Barycentric multi-indices `a` with `|a| = q` in `d + 1` entries.
pub fn multi_indices(d: usize, q: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    match d {
        1 => {
            for a in (0..=q).rev() {
                out.push(vec![a, q - a]);
            }
        }
        _ => {
            for a in (0..=q).rev() {
                for b in (0..=q - a).rev() {
                    out.push(vec![a, b, q - a - b]);
                }
            }
        }
    }
    out
}

/// Degree-`q` Lagrange function of the node with barycentric index `a`,
/// evaluated at barycentric coordinates `lambda`.
pub fn lagrange(q: usize, a: &[usize], lambda: &[f64]) -> f64 {
    let qf = q as f64;
    let mut v = 1.0;
    for (&ak, &lk) in a.iter().zip(lambda) {
        for m in 0..ak {
            v *= (qf * lk - m as f64) / (m as f64 + 1.0);
        }
    }
    v
}

/// Quadrature on a simplex: `(point, barycentric coordinates, weight)`.
/// Triangles use the collapsed (Duffy) tensor Gauss rule.
pub fn simplex_quadrature(v: &[Point], n: usize) -> Vec<(Point, Vec<f64>, f64)> {
    let rule = QuadRule::gauss(n);
    let vol = volume(v);
    let lerp = |l: &[f64]| -> Point {
        let mut p = [0.0; 2];
        for (lk, vk) in l.iter().zip(v) {
            p[0] += lk * vk[0];
            p[1] += lk * vk[1];
        }
        p
    };
    let mut out = Vec::new();
    match v.len() {
        2 => {
            for (&s, &w) in rule.points().iter().zip(rule.weights()) {
                let l = vec![1.0 - s, s];
                out.push((lerp(&l), l, w * vol));
            }
        }
        _ => {
            for (&u, &wu) in rule.points().iter().zip(rule.weights()) {
                for (&s, &ws) in rule.points().iter().zip(rule.weights()) {
                    let l1 = u;
                    let l2 = s * (1.0 - u);
                    let l = vec![1.0 - l1 - l2, l1, l2];
                    out.push((lerp(&l), l, wu * ws * (1.0 - u) * 2.0 * vol));
                }
            }
        }
    }
    out
}

/// Continuous piecewise `P_q` functions on a refinement class that vanish on
/// the boundary of the reference simplex, indexed by their interior nodes.
pub struct BubbleSpace {
    pub q: usize,
    /// Interior node lattice coordinates (units of `1/(q·2^ℓ)`) to index.
    pub nodes: HashMap<[i64; 2], usize>,
}

impl BubbleSpace {
    pub fn new(class: &RefinementClass, q: usize) -> Self {
        let n = q as i64 * class.lattice();
        let d = class.d();
        let mut coords: Vec<[i64; 2]> = Vec::new();
        match d {
            1 => coords.extend((1..n).map(|i| [i, 0])),
            _ => {
                for j in 1..n {
                    for i in 1..n - j {
                        coords.push([i, j]);
                    }
                }
            }
        }
        let nodes = coords.into_iter().enumerate().map(|(k, c)| (c, k)).collect();
        Self { q, nodes }
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Global bubble index of each local Lagrange node of child `k`, or
    /// `None` for nodes on the boundary of the reference simplex.
    pub fn local_to_global(&self, class: &RefinementClass, k: usize) -> Vec<(Vec<usize>, Option<usize>)> {
        let verts = &class.children[k];
        multi_indices(class.d(), self.q)
            .into_iter()
            .map(|a| {
                let mut c = [0i64; 2];
                for (ak, vk) in a.iter().zip(verts) {
                    c[0] += *ak as i64 * vk[0];
                    c[1] += *ak as i64 * vk[1];
                }
                let idx = self.nodes.get(&c).copied();
                (a, idx)
            })
            .collect()
    }
}
