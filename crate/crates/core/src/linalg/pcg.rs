//! Preconditioned conjugate gradients with Lanczos spectral estimates.

use serde::{Deserialize, Serialize};

use super::dense::tridiagonal_extremes;
use super::{dot, LinearOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StopRule {
    /// Stop once `sqrt(<r, K r>) ≤ tol · sqrt(<b, K b>)`.
    FixedTol { tol: f64 },
    /// Stop once `<r, K r> ≤ mu · probe(x)`, the probe returning `ε² G̃₀(x)`.
    EstimatorCoupled { mu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcgConfig {
    pub max_iters: usize,
    pub stop_rule: StopRule,
    pub record_lanczos: bool,
}

impl PcgConfig {
    pub fn fixed_tol(tol: f64, max_iters: usize) -> Self {
        Self {
            max_iters,
            stop_rule: StopRule::FixedTol { tol },
            record_lanczos: false,
        }
    }

    pub fn estimator_coupled(mu: f64, max_iters: usize) -> Self {
        Self {
            max_iters,
            stop_rule: StopRule::EstimatorCoupled { mu },
            record_lanczos: false,
        }
    }

    pub fn with_lanczos(mut self) -> Self {
        self.record_lanczos = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be ≥ 1".into()));
        }
        match self.stop_rule {
            StopRule::FixedTol { tol } if !(tol > 0.0) => {
                Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")))
            }
            StopRule::EstimatorCoupled { mu } if !(mu > 0.0) => {
                Err(Error::InvalidInput(format!("mu must be positive, got {mu}")))
            }
            _ => Ok(()),
        }
    }
}

/// Extreme Ritz values of the preconditioned operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub lambda_min_est: f64,
    pub lambda_max_est: f64,
    pub cond_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcgStatus {
    Converged,
    MaxIterations,
}

/// One evaluation of the stop rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCheck {
    pub iteration: usize,
    pub residual_sq: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `sqrt(<r, K r>)` after each iteration, starting with the initial residual.
    pub residual_history: Vec<f64>,
    pub spectral: Option<SpectralEstimate>,
    pub status: PcgStatus,
    pub transcript: Vec<StopCheck>,
}

/// Callback evaluated by the estimator-coupled stop rule on the current iterate.
pub type StopProbe<'a> = &'a mut dyn FnMut(&[f64]) -> f64;

/// Solve `A x = b` by conjugate gradients preconditioned with `K`, starting from zero.
pub fn pcg(
    a: &dyn LinearOperator,
    k: &dyn LinearOperator,
    b: &[f64],
    cfg: &PcgConfig,
    mut probe: Option<StopProbe<'_>>,
) -> Result<PcgOutcome> {
    cfg.validate()?;
    let n = a.dim();
    if b.len() != n || k.dim() != n {
        return Err(Error::InvalidInput(format!(
            "pcg dimension mismatch: A {n}, K {}, b {}",
            k.dim(),
            b.len()
        )));
    }
    if matches!(cfg.stop_rule, StopRule::EstimatorCoupled { .. }) && probe.is_none() {
        return Err(Error::InvalidInput(
            "estimator-coupled stopping needs a probe".into(),
        ));
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    k.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    let bkb = rz;
    let mut p = z.clone();
    let mut ap = vec![0.0; n];

    let mut history = vec![rz.max(0.0).sqrt()];
    let mut transcript = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut check = |iteration: usize, x: &[f64], rz: f64| -> bool {
        let threshold = match cfg.stop_rule {
            StopRule::FixedTol { tol } => tol * tol * bkb,
            StopRule::EstimatorCoupled { mu } => mu * (probe.as_mut().unwrap())(x),
        };
        transcript.push(StopCheck {
            iteration,
            residual_sq: rz,
            threshold,
        });
        rz <= threshold
    };

    let mut status = PcgStatus::MaxIterations;
    let mut iterations = 0;
    if rz == 0.0 || check(0, &x, rz) {
        status = PcgStatus::Converged;
    } else {
        for it in 1..=cfg.max_iters {
            a.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !pap.is_finite() || !rz.is_finite() {
                return Err(Error::Breakdown {
                    iteration: it,
                    reason: "non-finite value".into(),
                });
            }
            if pap <= 0.0 {
                return Err(Error::Breakdown {
                    iteration: it,
                    reason: format!("non-positive curvature pᵀAp = {pap:e}"),
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            k.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            alphas.push(alpha);
            iterations = it;
            history.push(rz_new.max(0.0).sqrt());
            if !rz_new.is_finite() {
                return Err(Error::Breakdown {
                    iteration: it,
                    reason: "non-finite residual".into(),
                });
            }
            if rz_new <= 0.0 || check(it, &x, rz_new) {
                status = PcgStatus::Converged;
                break;
            }
            let beta = rz_new / rz;
            betas.push(beta);
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            rz = rz_new;
        }
    }

    let spectral = (cfg.record_lanczos && !alphas.is_empty()).then(|| lanczos_estimate(&alphas, &betas));
    Ok(PcgOutcome {
        x,
        iterations,
        residual_history: history,
        spectral,
        status,
        transcript,
    })
}

/// Ritz extremes of the Lanczos matrix assembled from CG coefficients.
fn lanczos_estimate(alphas: &[f64], betas: &[f64]) -> SpectralEstimate {
    let m = alphas.len();
    let mut d = Vec::with_capacity(m);
    let mut e = Vec::with_capacity(m.saturating_sub(1));
    for j in 0..m {
        let mut v = 1.0 / alphas[j];
        if j > 0 {
            v += betas[j - 1] / alphas[j - 1];
        }
        d.push(v);
        if j + 1 < m {
            e.push(betas[j].sqrt() / alphas[j]);
        }
    }
    let (lo, hi) = tridiagonal_extremes(&d, &e);
    SpectralEstimate {
        lambda_min_est: lo,
        lambda_max_est: hi,
        cond_est: hi / lo,
    }
}
