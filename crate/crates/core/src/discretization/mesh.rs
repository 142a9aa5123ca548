use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition of `[a, b]` into `n` equal cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval1D {
    a: f64,
    b: f64,
    n: usize,
}

impl Interval1D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("n must be ≥ 1".into()));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "interval endpoints must satisfy a < b, got [{a}, {b}]"
            )));
        }
        Ok(Self { a, b, n })
    }

    /// `[0, 1]` with `n` cells.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    pub fn cell(&self, k: usize) -> (f64, f64) {
        (self.node(k), self.node(k + 1))
    }

    /// Uniform bisection applied `times` times.
    pub fn bisect(&self, times: usize) -> Self {
        Self {
            n: self.n << times,
            ..*self
        }
    }

    /// Cell containing `x`; points on an interior node belong to the right cell,
    /// `b` belongs to the last cell.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if x < self.a - 1e-14 * (self.b - self.a) || x > self.b + 1e-14 * (self.b - self.a) {
            return None;
        }
        let k = ((x - self.a) / self.h()).floor();
        Some((k.max(0.0) as usize).min(self.n - 1))
    }

    /// True when `fine` is obtained from `self` by uniform bisection.
    pub fn is_refined_by(&self, fine: &Interval1D) -> Option<usize> {
        if self.a != fine.a || self.b != fine.b || fine.n % self.n != 0 {
            return None;
        }
        let ratio = fine.n / self.n;
        ratio
            .is_power_of_two()
            .then(|| ratio.trailing_zeros() as usize)
    }

    /// Cells cut at every point of `cuts` that falls strictly inside a cell.
    ///
    /// Returns `(cell index, sub-interval)` pairs covering the mesh; no
    /// sub-interval straddles a cut.
    pub fn split_at(&self, cuts: &[f64]) -> Vec<(usize, (f64, f64))> {
        let tol = 1e-13 * (self.b - self.a);
        let mut out = Vec::with_capacity(self.n + cuts.len());
        for k in 0..self.n {
            let (lo, hi) = self.cell(k);
            let mut inner: Vec<f64> = cuts
                .iter()
                .copied()
                .filter(|&c| c > lo + tol && c < hi - tol)
                .collect();
            inner.sort_by(f64::total_cmp);
            inner.dedup();
            let mut left = lo;
            for c in inner {
                out.push((k, (left, c)));
                left = c;
            }
            out.push((k, (left, hi)));
        }
        out
    }
}

/// Observation sub-interval `ω = [lo, hi]` of the unit interval together with
/// the reporting threshold `η` for time-slice errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationWindow {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub eta: f64,
}

impl ObservationWindow {
    pub fn new(omega_lo: f64, omega_hi: f64, eta: f64) -> Result<Self> {
        if !(0.0 <= omega_lo && omega_lo < omega_hi && omega_hi <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "observation window must satisfy 0 ≤ lo < hi ≤ 1, got [{omega_lo}, {omega_hi}]"
            )));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "eta must lie in (0, T) = (0, 1), got {eta}"
            )));
        }
        Ok(Self {
            omega_lo,
            omega_hi,
            eta,
        })
    }

    pub fn width(&self) -> f64 {
        self.omega_hi - self.omega_lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.omega_lo && x <= self.omega_hi
    }
}

impl Default for ObservationWindow {
    fn default() -> Self {
        Self {
            omega_lo: 0.25,
            omega_hi: 0.75,
            eta: 0.1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::QuadRule;

    #[test]
    fn rejects_bad_intervals() {
        assert!(Interval1D::new(0.0, 1.0, 0).is_err());
        assert!(Interval1D::new(1.0, 1.0, 3).is_err());
        assert!(Interval1D::new(2.0, 1.0, 3).is_err());
    }

    #[test]
    fn nodes_and_width() {
        let m = Interval1D::new(-1.0, 1.0, 4).unwrap();
        assert_eq!(m.h(), 0.5);
        assert_eq!(m.node(0), -1.0);
        assert_eq!(m.node(4), 1.0);
        assert_eq!(m.bisect(2).cells(), 16);
        assert_eq!(m.is_refined_by(&m.bisect(3)), Some(3));
        assert_eq!(m.locate(1.0), Some(3));
        assert_eq!(m.locate(0.0), Some(2));
    }

    #[test]
    fn aligned_cuts_do_not_split() {
        let m = Interval1D::unit(4).unwrap();
        let parts = m.split_at(&[0.25, 0.75]);
        assert_eq!(parts.len(), 4);
        for (k, (lo, hi)) in parts {
            assert_eq!((lo, hi), m.cell(k));
        }
    }

    #[test]
    fn interior_cut_splits_cell() {
        let m = Interval1D::unit(3).unwrap();
        let parts = m.split_at(&[0.5]);
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[1].0, 1);
        assert!((parts[1].1 .0 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(parts[1].1 .1, 0.5);
        assert_eq!(parts[2].1 .0, 0.5);
        assert!((parts[2].1 .1 - 2.0 / 3.0).abs() < 1e-15);
        let total: f64 = parts.iter().map(|(_, (a, b))| b - a).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn window_length_by_decomposition() {
        let w = ObservationWindow::new(0.25, 0.75, 0.1).unwrap();
        let q = QuadRule::gauss(2);
        for n in [3, 4, 7] {
            let m = Interval1D::unit(n).unwrap();
            let len: f64 = m
                .split_at(&[w.omega_lo, w.omega_hi])
                .into_iter()
                .filter(|(_, (a, b))| w.contains(0.5 * (a + b)))
                .map(|(_, (a, b))| q.integrate(a, b, |_| 1.0))
                .sum();
            assert!((len - 0.5).abs() < 1e-15, "n={n}: {len}");
        }
    }

    #[test]
    fn window_validation() {
        assert!(ObservationWindow::new(0.9, 0.1, 0.1).is_err());
        assert!(ObservationWindow::new(-0.1, 0.5, 0.1).is_err());
        assert!(ObservationWindow::new(0.1, 0.5, 0.0).is_err());
        assert!(ObservationWindow::new(0.0, 1.0, 0.5).is_ok());
    }
}
