//! Gauss–Legendre rules on the reference cell `[0, 1]`.

use std::f64::consts::PI;

/// A quadrature rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    points: Vec<f64>,
    weights: Vec<f64>,
    exactness: usize,
}

impl QuadRule {
    /// Gauss–Legendre rule with `n` points, exact for polynomials of degree `2n - 1`.
    pub fn gauss(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one point");
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points.push(0.5 * (1.0 - x));
            weights.push(0.5 * w);
        }
        Self {
            points,
            weights,
            exactness: 2 * n - 1,
        }
    }

    /// Smallest Gauss rule integrating degree `degree` exactly.
    pub fn with_exactness(degree: usize) -> Self {
        Self::gauss(degree / 2 + 1)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exactness(&self) -> usize {
        self.exactness
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Iterate `(x, w)` pairs mapped to the physical interval `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = b - a;
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&s, &w)| (a + s * len, w * len))
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub(crate) fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    // P_n' from the standard identity; guarded at the endpoints.
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * nf * (nf + 1.0) * x.powi(n as i32 + 1)
    } else {
        nf * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// Composite Gauss integration of `f` over `[a, b]` split into `pieces` equal parts.
pub fn composite<F: Fn(f64) -> f64>(rule: &QuadRule, a: f64, b: f64, pieces: usize, f: F) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| rule.integrate(a + i as f64 * h, a + (i + 1) as f64 * h, &f))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weights_sum_to_one() {
        for n in 1..=20 {
            let q = QuadRule::gauss(n);
            let s: f64 = q.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "n={n} sum={s}");
        }
    }

    #[test]
    fn monomials_are_exact() {
        for n in 1..=12 {
            let q = QuadRule::gauss(n);
            for k in 0..=q.exactness() {
                let approx = q.integrate(0.0, 1.0, |x| x.powi(k as i32));
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(
                    ((approx - exact) / exact).abs() <= 1e-13,
                    "n={n} k={k} {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn exactness_constructor() {
        assert_eq!(QuadRule::with_exactness(5).len(), 3);
        assert!(QuadRule::with_exactness(4).exactness() >= 4);
    }

    proptest! {
        #[test]
        fn random_polynomial_matches_analytic(coeffs in proptest::collection::vec(-3.0f64..3.0, 1..9),
                                              a in -2.0f64..0.0, len in 0.1f64..3.0) {
            let deg = coeffs.len() - 1;
            let rule = QuadRule::with_exactness(deg);
            let b = a + len;
            let p = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
            let anti = |x: f64| coeffs.iter().enumerate()
                .map(|(k, c)| c * x.powi(k as i32 + 1) / (k as f64 + 1.0)).sum::<f64>();
            let exact = anti(b) - anti(a);
            let scale: f64 = coeffs.iter().map(|c| c.abs()).sum::<f64>() * (1.0 + a.abs().max(b.abs())).powi(deg as i32 + 1);
            let approx = rule.integrate(a, b, p);
            prop_assert!((approx - exact).abs() <= 1e-12 * scale.max(exact.abs()));
        }
    }
}
