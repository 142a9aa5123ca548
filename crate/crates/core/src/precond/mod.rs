//! Inverse Riesz maps of the trial, test and flux spaces, applied matrix-free.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::assembly::{mass, stiffness, TensorSpace};
use crate::discretization::{Boundary, Continuity, LocalBasis};
use crate::error::{Error, Result};
use crate::linalg::{dense_geig, BandedCholesky, Csr, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RieszKind {
    /// `M_t⁻¹ ⊗ A_x⁻¹` on the test space.
    KY,
    /// Exact inverse of `M_t ⊗ A_x + K_t ⊗ M_x A_x⁻¹ M_x` on the trial space.
    KX,
    /// `M_t⁻¹ ⊗ M_x⁻¹` on the flux space.
    KZ,
}

/// How the spatial generalized eigenbasis of `K_X` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeStrategy {
    /// Sine transform when the spatial space is uniform P1 with zero trace,
    /// dense eigenvectors otherwise.
    #[default]
    Auto,
    Dense,
}

/// Spatial eigenbasis `V` with `A V = M V Λ`, `Vᵀ M V = I`.
enum Modes {
    Dense(DMatrix<f64>),
    /// `V[i][k] = scale[k] · sin(π (i+1) (k+1) / n)`.
    Sine {
        n: usize,
        scale: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
}

impl Modes {
    /// Columns of `x` (time-major rows of length `nx`) mapped by `Vᵀ`.
    fn apply_vt(&self, x: &mut [f64], nx: usize) {
        match self {
            Modes::Dense(v) => {
                let nt = x.len() / nx;
                let xm = DMatrix::from_column_slice(nx, nt, x);
                x.copy_from_slice(v.tr_mul(&xm).as_slice());
            }
            Modes::Sine { n, scale, fft } => {
                let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];
                for row in x.chunks_mut(nx) {
                    dst1(row, *n, fft.as_ref(), &mut buf);
                    for (v, s) in row.iter_mut().zip(scale) {
                        *v *= s;
                    }
                }
            }
        }
    }

    fn apply_v(&self, x: &mut [f64], nx: usize) {
        match self {
            Modes::Dense(v) => {
                let nt = x.len() / nx;
                let xm = DMatrix::from_column_slice(nx, nt, x);
                x.copy_from_slice((v * xm).as_slice());
            }
            Modes::Sine { n, scale, fft } => {
                let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];
                for row in x.chunks_mut(nx) {
                    for (v, s) in row.iter_mut().zip(scale) {
                        *v *= s;
                    }
                    dst1(row, *n, fft.as_ref(), &mut buf);
                }
            }
        }
    }
}

/// In-place `y_j = Σ_i x_i sin(π i j / n)` for `i, j = 1..n-1` via a complex
/// FFT of length `2n` applied to the odd extension.
fn dst1(row: &mut [f64], n: usize, fft: &dyn Fft<f64>, buf: &mut [Complex<f64>]) {
    buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
    for (i, &v) in row.iter().enumerate() {
        buf[i + 1] = Complex::new(v, 0.0);
        buf[2 * n - i - 1] = Complex::new(-v, 0.0);
    }
    fft.process(buf);
    for (j, v) in row.iter_mut().enumerate() {
        *v = -0.5 * buf[j + 1].im;
    }
}

enum Inner {
    /// Inverse of `T ⊗ S` by banded factorizations of both factors.
    Kron { time: BandedCholesky, space: BandedCholesky },
    /// `(I ⊗ V) blockdiag_k (λ_k M_t + λ_k⁻¹ K_t)⁻¹ (I ⊗ Vᵀ)`.
    FastDiag { modes: Modes, time: Vec<BandedCholesky> },
}

pub struct RieszInverse {
    kind: RieszKind,
    nt: usize,
    nx: usize,
    inner: Inner,
}

impl fmt::Debug for RieszInverse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let how = match &self.inner {
            Inner::Kron { .. } => "kron",
            Inner::FastDiag { modes: Modes::Dense(_), .. } => "fast-diag/dense",
            Inner::FastDiag { modes: Modes::Sine { .. }, .. } => "fast-diag/sine",
        };
        f.debug_struct("RieszInverse")
            .field("kind", &self.kind)
            .field("shape", &(self.nt, self.nx))
            .field("method", &how)
            .finish()
    }
}

impl RieszInverse {
    fn kron(kind: RieszKind, time: &Csr, space: &Csr) -> Result<Self> {
        Ok(Self {
            kind,
            nt: time.nrows(),
            nx: space.nrows(),
            inner: Inner::Kron {
                time: BandedCholesky::factor(time).map_err(Error::at("time factor"))?,
                space: BandedCholesky::factor(space).map_err(Error::at("space factor"))?,
            },
        })
    }

    pub fn kind(&self) -> RieszKind {
        self.kind
    }

    /// `(n_time, n_space)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.nt, self.nx)
    }
}

impl LinearOperator for RieszInverse {
    fn dim(&self) -> usize {
        self.nt * self.nx
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        y.copy_from_slice(x);
        let nx = self.nx;
        match &self.inner {
            Inner::Kron { time, space } => {
                for row in y.chunks_mut(nx) {
                    space.solve_in_place(row);
                }
                for k in 0..nx {
                    time.solve_strided(y, k, nx);
                }
            }
            Inner::FastDiag { modes, time } => {
                modes.apply_vt(y, nx);
                for (k, f) in time.iter().enumerate() {
                    f.solve_strided(y, k, nx);
                }
                modes.apply_v(y, nx);
            }
        }
    }
}

/// Inverse of the test-space Gram `M_t ⊗ A_x`.
pub fn make_ky(test: &TensorSpace) -> Result<RieszInverse> {
    let mt = mass(&test.time, &test.time)?;
    let ax = stiffness(&test.space, &test.space)?;
    RieszInverse::kron(RieszKind::KY, &mt, &ax).map_err(Error::at("K_Y setup"))
}

/// Inverse of the flux-space mass `M_t ⊗ M_x`.
pub fn make_kz(flux: &TensorSpace) -> Result<RieszInverse> {
    let mt = mass(&flux.time, &flux.time)?;
    let mx = mass(&flux.space, &flux.space)?;
    RieszInverse::kron(RieszKind::KZ, &mt, &mx).map_err(Error::at("K_Z setup"))
}

pub fn make_kx(trial: &TensorSpace) -> Result<RieszInverse> {
    make_kx_with(trial, ModeStrategy::Auto)
}

/// Inverse of `G_X = M_t ⊗ A_x + K_t ⊗ M_x A_x⁻¹ M_x` by diagonalizing the
/// spatial pencil `(A_x, M_x)`.
pub fn make_kx_with(trial: &TensorSpace, strategy: ModeStrategy) -> Result<RieszInverse> {
    let mt = mass(&trial.time, &trial.time).map_err(Error::at("K_X setup"))?;
    let kt = stiffness(&trial.time, &trial.time).map_err(Error::at("K_X setup"))?;
    let space = &trial.space;
    let desc = space.desc();
    let uniform_p1 = desc.degree == 1
        && desc.continuity == Continuity::C0
        && desc.boundary == Boundary::ZeroTrace
        && space.local_basis() == LocalBasis::Lagrange;
    let (lambdas, modes) = if strategy == ModeStrategy::Auto && uniform_p1 {
        sine_modes(space.mesh().cells(), space.mesh().h())
    } else {
        let ax = stiffness(space, space)?.to_dense();
        let mx = mass(space, space)?.to_dense();
        let eig = dense_geig(&ax, &mx).map_err(Error::at("K_X setup"))?;
        (eig.values.iter().copied().collect(), Modes::Dense(eig.vectors))
    };
    let time = lambdas
        .iter()
        .map(|&l| BandedCholesky::factor(&mt.combine(l, &kt, 1.0 / l)))
        .collect::<Result<Vec<_>>>()
        .map_err(Error::at("K_X setup"))?;
    Ok(RieszInverse {
        kind: RieszKind::KX,
        nt: trial.n_time(),
        nx: trial.n_space(),
        inner: Inner::FastDiag { modes, time },
    })
}

/// Analytic eigenpairs of the P1 zero-trace pencil on `n` uniform cells of width `h`.
fn sine_modes(n: usize, h: f64) -> (Vec<f64>, Modes) {
    let len = n as f64 * h;
    let mut lambdas = Vec::with_capacity(n - 1);
    let mut scale = Vec::with_capacity(n - 1);
    for k in 1..n {
        let c = (std::f64::consts::PI * k as f64 / n as f64).cos();
        lambdas.push(6.0 / (h * h) * (1.0 - c) / (2.0 + c));
        scale.push((6.0 / (len * (2.0 + c))).sqrt());
    }
    let fft = FftPlanner::new().plan_fft_forward(2 * n);
    (lambdas, Modes::Sine { n, scale, fft })
}
