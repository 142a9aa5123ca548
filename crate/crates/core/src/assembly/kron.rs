use crate::linalg::Csr;

/// `Σ_k c_k (T_k ⊗ S_k)` applied without forming the product.
///
/// Vectors are stored time-major: entry `(it, ix)` lives at `it * n_space + ix`.
#[derive(Debug, Clone)]
pub struct KroneckerOp {
    terms: Vec<(f64, Csr, Csr)>,
    nrows: (usize, usize),
    ncols: (usize, usize),
}

impl KroneckerOp {
    pub fn new(coef: f64, time: Csr, space: Csr) -> Self {
        let nrows = (time.nrows(), space.nrows());
        let ncols = (time.ncols(), space.ncols());
        Self {
            terms: vec![(coef, time, space)],
            nrows,
            ncols,
        }
    }

    pub fn zeros(nrows: (usize, usize), ncols: (usize, usize)) -> Self {
        Self {
            terms: Vec::new(),
            nrows,
            ncols,
        }
    }

    pub fn plus(mut self, coef: f64, time: Csr, space: Csr) -> Self {
        assert_eq!((time.nrows(), space.nrows()), self.nrows, "row shape mismatch");
        assert_eq!((time.ncols(), space.ncols()), self.ncols, "column shape mismatch");
        if coef != 0.0 {
            self.terms.push((coef, time, space));
        }
        self
    }

    pub fn terms(&self) -> &[(f64, Csr, Csr)] {
        &self.terms
    }

    pub fn nrows(&self) -> usize {
        self.nrows.0 * self.nrows.1
    }

    pub fn ncols(&self) -> usize {
        self.ncols.0 * self.ncols.1
    }

    /// `(time rows, space rows)`.
    pub fn row_shape(&self) -> (usize, usize) {
        self.nrows
    }

    pub fn col_shape(&self) -> (usize, usize) {
        self.ncols
    }

    /// `y = self · x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.apply_add(1.0, x, y);
    }

    /// `y += alpha · self · x`.
    pub fn apply_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        let (nct, ncs) = self.ncols;
        let nrs = self.nrows.1;
        let mut w = vec![0.0; nct * nrs];
        for (c, t, s) in &self.terms {
            // W = X Sᵀ, row by row
            w.iter_mut().for_each(|v| *v = 0.0);
            for jt in 0..nct {
                s.matvec_strided_add(1.0, x, jt * ncs, 1, &mut w, jt * nrs, 1);
            }
            // Y += c T W, one contiguous block row of Y at a time
            for it in 0..t.nrows() {
                let yr = &mut y[it * nrs..(it + 1) * nrs];
                for (jt, v) in t.row(it) {
                    let a = alpha * c * v;
                    for (yi, wi) in yr.iter_mut().zip(&w[jt * nrs..(jt + 1) * nrs]) {
                        *yi += a * wi;
                    }
                }
            }
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.apply(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(c, t, s)| (*c, t.transpose(), s.transpose()))
                .collect(),
            nrows: self.ncols,
            ncols: self.nrows,
        }
    }

    /// Explicit sparse matrix; intended for small problems and checks.
    pub fn materialize(&self) -> Csr {
        let mut out = Csr::from_triplets(self.nrows(), self.ncols(), std::iter::empty());
        for (c, t, s) in &self.terms {
            out = out.combine(1.0, &t.kron(s), *c);
        }
        out
    }

    /// `<self x, x>`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        crate::linalg::dot(&self.apply_vec(x), x)
    }
}
