use super::Csr;
use crate::error::{Error, Result};

/// Cholesky factorization `A = L Lᵀ` of a symmetric positive definite band matrix.
///
/// Stores the lower band row by row: `band[i * (p + 1) + (j + p - i)] = L[i][j]`
/// for `i - p ≤ j ≤ i`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    p: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factor the band of half-width `p` taken from the lower triangle of `a`.
    pub fn factor(a: &Csr) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidInput("banded solve needs a square matrix".into()));
        }
        let n = a.nrows();
        let p = a.bandwidth();
        let w = p + 1;
        let mut band = vec![0.0; n * w];
        for (i, j, v) in a.triplets() {
            if j <= i {
                band[i * w + (j + p - i)] += v;
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(p);
            for j in j0..=i {
                let mut s = band[i * w + (j + p - i)];
                let k0 = j0.max(j.saturating_sub(p));
                for k in k0..j {
                    s -= band[i * w + (k + p - i)] * band[j * w + (k + p - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    band[i * w + p] = s.sqrt();
                } else {
                    band[i * w + (j + p - i)] = s / band[j * w + p];
                }
            }
        }
        Ok(Self { n, p, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        self.solve_strided(x, 0, 1);
    }

    /// Solve on the strided view `x[off + stride * i]`.
    pub fn solve_strided(&self, x: &mut [f64], off: usize, stride: usize) {
        let (n, p, w) = (self.n, self.p, self.p + 1);
        let at = |i: usize| off + stride * i;
        for i in 0..n {
            let mut s = x[at(i)];
            for k in i.saturating_sub(p)..i {
                s -= self.band[i * w + (k + p - i)] * x[at(k)];
            }
            x[at(i)] = s / self.band[i * w + p];
        }
        for i in (0..n).rev() {
            let mut s = x[at(i)];
            for k in (i + 1)..(i + p + 1).min(n) {
                s -= self.band[k * w + (i + p - k)] * x[at(k)];
            }
            x[at(i)] = s / self.band[i * w + p];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solve `A x = b` for a banded SPD `A`.
pub fn banded_solve(a: &Csr, b: &[f64]) -> Result<Vec<f64>> {
    Ok(BandedCholesky::factor(a)?.solve(b))
}
