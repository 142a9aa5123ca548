//! Drivers for the unit-interval studies: convergence sweeps, conditioning,
//! and the refinement loop with stagnation detection for inconsistent data.

mod output;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use output::{write_csv, write_manifest, Manifest, CSV_HEADER};

use crate::assembly::{manufactured_by_name, ProblemData, TensorGrid};
use crate::discretization::ObservationWindow;
use crate::error::{Error, Result};
use crate::linalg::{PcgConfig, PcgStatus, StopRule};
use crate::solver::{time_slice_errors, FoslsSystem, Formulation, SecondOrderSystem};

/// Environment variable capping the number of worker threads of a sweep.
pub const THREADS_ENV: &str = "PARADAT_THREADS";

/// Regularization parameter as a function of the mesh size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EpsRule {
    /// `ε = h`
    H,
    /// `ε = h²`
    HSquared,
    /// `ε = 0`
    Zero,
    Fixed(f64),
}

impl EpsRule {
    pub fn eps(&self, h: f64) -> f64 {
        match self {
            EpsRule::H => h,
            EpsRule::HSquared => h * h,
            EpsRule::Zero => 0.0,
            EpsRule::Fixed(v) => *v,
        }
    }
}

impl FromStr for EpsRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "h" => Ok(EpsRule::H),
            "h^2" => Ok(EpsRule::HSquared),
            "0" => Ok(EpsRule::Zero),
            other => match other.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Ok(EpsRule::Fixed(v)),
                Ok(v) if v == 0.0 => Ok(EpsRule::Zero),
                _ => Err(Error::InvalidInput(format!(
                    "bad ε rule '{other}' (expected h, h^2, 0 or a non-negative number)"
                ))),
            },
        }
    }
}

impl fmt::Display for EpsRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsRule::H => f.write_str("h"),
            EpsRule::HSquared => f.write_str("h^2"),
            EpsRule::Zero => f.write_str("0"),
            EpsRule::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl TryFrom<String> for EpsRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EpsRule> for String {
    fn from(r: EpsRule) -> String {
        r.to_string()
    }
}

/// Parse `coupled`, `coupled=<μ>` or `tol=<τ>`.
pub fn parse_stop_rule(s: &str) -> Result<StopRule> {
    let bad = || Error::InvalidInput(format!("bad stop rule '{s}' (expected coupled or tol=<τ>)"));
    let positive = |v: &str| match v.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(bad()),
    };
    match s.split_once('=') {
        None if s == "coupled" => Ok(StopRule::EstimatorCoupled { mu: 1.0 }),
        Some(("coupled", v)) => Ok(StopRule::EstimatorCoupled { mu: positive(v)? }),
        Some(("tol", v)) => Ok(StopRule::FixedTol { tol: positive(v)? }),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub formulation: Formulation,
    /// Mesh sizes `h = 2^{-k}` for each listed `k`, coarse to fine.
    pub h_exponents: Vec<u32>,
    pub eps_rule: EpsRule,
    /// `(ℓ, L)`: solve level and estimator level.
    pub pairs: Vec<(usize, usize)>,
    pub window: ObservationWindow,
    pub lambda: f64,
    pub problem: String,
    pub stop_rule: StopRule,
    pub max_iters: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            formulation: Formulation::SecondOrder,
            h_exponents: (3..=7).collect(),
            eps_rule: EpsRule::H,
            pairs: vec![(0, 2)],
            window: ObservationWindow::default(),
            lambda: 0.0,
            problem: "sine-cubic".into(),
            stop_rule: StopRule::EstimatorCoupled { mu: 1.0 },
            max_iters: 2000,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h_exponents.is_empty() {
            return Err(Error::InvalidInput("h list must not be empty".into()));
        }
        if self.h_exponents.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidInput(
                "consecutive mesh sizes must halve (exponents k, k+1, ...)".into(),
            ));
        }
        if self.h_exponents.iter().any(|&k| k > 20) {
            return Err(Error::InvalidInput("mesh exponent above 20 is not supported".into()));
        }
        if self.pairs.is_empty() {
            return Err(Error::InvalidInput("at least one (ℓ, L) pair is required".into()));
        }
        if self.pairs.iter().any(|&(l, big_l)| l > 6 || big_l > 6) {
            return Err(Error::InvalidInput("refinement levels above 6 are not supported".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidInput("λ must be finite".into()));
        }
        ObservationWindow::new(self.window.omega_lo, self.window.omega_hi, self.window.eta)?;
        PcgConfig {
            max_iters: self.max_iters,
            stop_rule: self.stop_rule,
            record_lanczos: false,
        }
        .validate()?;
        manufactured_by_name(&self.problem)?;
        if self.eps_rule == EpsRule::Zero && matches!(self.stop_rule, StopRule::EstimatorCoupled { .. }) {
            return Err(Error::InvalidInput(
                "ε = 0 requires fixed-tolerance stopping; the coupled rule scales with ε²".into(),
            ));
        }
        Ok(())
    }

    fn data(&self, eps: f64) -> Result<ProblemData> {
        Ok(ProblemData::manufactured(manufactured_by_name(&self.problem)?, self.window)
            .with_lambda(self.lambda)
            .with_eps(eps))
    }
}

/// One cell of a sweep; field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub formulation: Formulation,
    pub h: f64,
    pub dim: usize,
    pub eps: f64,
    pub ell: usize,
    #[serde(rename = "L")]
    pub big_l: usize,
    /// `√G̃₀` (or `√H̃₀`) at level `L`.
    pub estimator0: f64,
    /// `√G̃_ε` (or `√H̃_ε`) at level `L`.
    pub estimator_eps: f64,
    pub iters: usize,
    /// Lanczos estimate; `NaN` when the run recorded no Krylov steps.
    pub cond_est: f64,
}

/// Result of one solve together with quantities not in the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub row: SweepRow,
    /// `(t, ‖u_h(t) − u(t)‖)` for `t ∈ {η, ½, 1}`.
    pub slice_errors: Vec<(f64, f64)>,
    /// `‖p − ∂ₓu‖` for the first-order formulation.
    pub flux_misfit: Option<f64>,
    pub status: PcgStatus,
}

/// Assemble and solve a single `(h, ε, ℓ, L)` configuration with `h = 2^{-k}`.
pub fn run_cell(
    formulation: Formulation,
    k: u32,
    eps: f64,
    pair: (usize, usize),
    data: &ProblemData,
    cfg: &PcgConfig,
) -> Result<CellResult> {
    run_cell_cells(formulation, 1usize << k, eps, pair, data, cfg)
}

/// [`run_cell`] on `n` uniform cells in time and space.
pub fn run_cell_cells(
    formulation: Formulation,
    n: usize,
    eps: f64,
    (ell, big_l): (usize, usize),
    data: &ProblemData,
    cfg: &PcgConfig,
) -> Result<CellResult> {
    let h = 1.0 / n as f64;
    let grid = TensorGrid::unit(n)?;
    let data = data.clone().with_eps(eps);
    let times = [data.window.eta, 0.5, 1.0];
    let (dim, e0, ee, summary, u, trial, flux_misfit) = match formulation {
        Formulation::SecondOrder => {
            let sys = SecondOrderSystem::assemble(&grid, &data, ell, big_l)?;
            let rep = sys.solve(cfg)?;
            (sys.dim(), rep.estimator0, rep.estimator_eps, rep.pcg, rep.u, sys.trial().clone(), None)
        }
        Formulation::Fosls => {
            let sys = FoslsSystem::assemble(&grid, &data, ell, big_l)?;
            let rep = sys.solve(cfg)?;
            let fm = rep.flux_misfit.max(0.0).sqrt();
            (sys.dim_trial(), rep.estimator0, rep.estimator_eps, rep.pcg, rep.u, sys.trial().clone(), Some(fm))
        }
    };
    let slice_errors = match data.state() {
        Some(state) => {
            let errs = time_slice_errors(&trial, &u, state.as_ref(), &times)?;
            times.iter().copied().zip(errs).collect()
        }
        None => Vec::new(),
    };
    Ok(CellResult {
        row: SweepRow {
            formulation,
            h,
            dim,
            eps,
            ell,
            big_l,
            estimator0: e0.sqrt(),
            estimator_eps: ee.sqrt(),
            iters: summary.iterations,
            cond_est: summary.spectral.map_or(f64::NAN, |s| s.cond_est),
        },
        slice_errors,
        flux_misfit,
        status: summary.status,
    })
}

/// Worker count from `PARADAT_THREADS`, defaulting to rayon's choice.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

/// Map `f` over `items` in parallel; results keep the input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeFit {
    pub ell: usize,
    #[serde(rename = "L")]
    pub big_l: usize,
    /// Slope of `√G̃₀` against `dim X`.
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistentSweep {
    pub spec: SweepSpec,
    pub cells: Vec<CellResult>,
    pub slopes: Vec<SlopeFit>,
}

impl ConsistentSweep {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }

    /// Rows of one `(ℓ, L)` pair ordered coarse to fine.
    pub fn series(&self, ell: usize, big_l: usize) -> Vec<&SweepRow> {
        self.cells
            .iter()
            .map(|c| &c.row)
            .filter(|r| r.ell == ell && r.big_l == big_l)
            .collect()
    }
}

/// Solve on every `(h, ℓ, L)` cell and fit the convergence rate per pair.
pub fn run_consistent_sweep(spec: &SweepSpec) -> Result<ConsistentSweep> {
    spec.validate()?;
    let cfg = PcgConfig {
        max_iters: spec.max_iters,
        stop_rule: spec.stop_rule,
        record_lanczos: true,
    };
    let cells: Vec<(u32, (usize, usize))> = spec
        .pairs
        .iter()
        .flat_map(|&p| spec.h_exponents.iter().map(move |&k| (k, p)))
        .collect();
    let data = spec.data(0.0)?;
    let results = par_map(&cells, |&(k, pair)| {
        let eps = spec.eps_rule.eps(0.5f64.powi(k as i32));
        run_cell(spec.formulation, k, eps, pair, &data, &cfg)
    })
    .map_err(Error::at("sweep"))?;
    let mut out = ConsistentSweep {
        spec: spec.clone(),
        cells: results,
        slopes: Vec::new(),
    };
    for &(ell, big_l) in &spec.pairs {
        let s = out.series(ell, big_l);
        let slope = if s.len() >= 2 {
            let x: Vec<f64> = s.iter().map(|r| r.dim as f64).collect();
            let y: Vec<f64> = s.iter().map(|r| r.estimator0).collect();
            loglog_slope(&x, &y)
        } else {
            f64::NAN
        };
        out.slopes.push(SlopeFit { ell, big_l, slope });
    }
    Ok(out)
}

/// Spectral condition estimates of the preconditioned Schur system on a
/// grid of `(ε, h)` values, from long PCG runs without early stopping.
pub fn run_condition_sweep(
    formulation: Formulation,
    eps_list: &[f64],
    h_exponents: &[u32],
    ell: usize,
) -> Result<Vec<SweepRow>> {
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("condition sweep needs ε > 0".into()));
    }
    let cfg = PcgConfig::fixed_tol(1e-12, 5000).with_lanczos();
    let data = SweepSpec::default().data(0.0)?;
    let cells: Vec<(f64, u32)> = eps_list
        .iter()
        .flat_map(|&e| h_exponents.iter().map(move |&k| (e, k)))
        .collect();
    let cells = par_map(&cells, |&(eps, k)| run_cell(formulation, k, eps, (ell, ell), &data, &cfg))
        .map_err(Error::at("condition sweep"))?;
    Ok(cells.into_iter().map(|c| c.row).collect())
}

/// Max/min ratio of `cond_est` across `h` at each fixed `ε`.
pub fn condition_variation(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    eps.dedup();
    eps.iter()
        .map(|&e| {
            let c: Vec<f64> = rows.iter().filter(|r| r.eps == e).map(|r| r.cond_est).collect();
            let hi = c.iter().cloned().fold(f64::MIN, f64::max);
            let lo = c.iter().cloned().fold(f64::MAX, f64::min);
            (e, hi / lo)
        })
        .collect()
}

/// Log-log slope of `cond_est` against `1/ε` at the given mesh size.
pub fn condition_growth_exponent(rows: &[SweepRow], h: f64) -> f64 {
    let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.h == h).collect();
    let x: Vec<f64> = sel.iter().map(|r| 1.0 / r.eps).collect();
    let y: Vec<f64> = sel.iter().map(|r| r.cond_est).collect();
    loglog_slope(&x, &y)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceLevel {
    pub h: f64,
    pub dim: usize,
    pub eps: f64,
    /// `√G̃₀` (or `√H̃₀`).
    pub estimator: f64,
    /// Ratio to the previous level's estimator.
    pub reduction: Option<f64>,
    /// The stagnation test fired on this level.
    pub stagnated: bool,
    /// Level computed after the loop would have stopped.
    pub post_stop: bool,
    pub iters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub spec: SweepSpec,
    pub c: f64,
    /// Reduction over the first two levels.
    pub rho: f64,
    /// `(1 + Cρ) / (1 + C)`.
    pub threshold: f64,
    pub levels: Vec<TraceLevel>,
    /// Index of the level on which stagnation was detected.
    pub stop_index: Option<usize>,
    /// Estimator on the finest computed level, if stagnation occurred.
    pub plateau: Option<f64>,
}

/// Refine uniformly along `spec.h_exponents`, monitoring the estimator
/// reduction. The loop exits once the reduction is worse than
/// `(1 + Cρ)/(1 + C)`; `extra_levels` further levels are then still computed
/// and marked as post-stop. Levels run one after another.
pub fn run_inconsistent_loop(spec: &SweepSpec, c: f64, extra_levels: usize) -> Result<RefinementTrace> {
    spec.validate()?;
    if spec.h_exponents.len() < 3 {
        return Err(Error::InvalidInput(
            "the stagnation loop needs at least three levels".into(),
        ));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("C must be positive, got {c}")));
    }
    let pair = spec.pairs[0];
    let cfg = PcgConfig {
        max_iters: spec.max_iters,
        stop_rule: spec.stop_rule,
        record_lanczos: false,
    };
    let data = spec.data(0.0)?;
    let mut cells = Vec::new();
    let mut remaining: Option<usize> = None;
    for &k in &spec.h_exponents {
        if remaining == Some(0) {
            break;
        }
        let eps = spec.eps_rule.eps(0.5f64.powi(k as i32));
        let cell = run_cell(spec.formulation, k, eps, pair, &data, &cfg)
            .map_err(Error::at("refinement loop"))?;
        cells.push(cell);
        remaining = match remaining {
            Some(r) => Some(r - 1),
            None if cells.len() >= 3 && stagnation_trace(spec, c, &cells).stop_index.is_some() => {
                Some(extra_levels)
            }
            None => None,
        };
    }
    Ok(stagnation_trace(spec, c, &cells))
}

fn stagnation_trace(spec: &SweepSpec, c: f64, cells: &[CellResult]) -> RefinementTrace {
    let est: Vec<f64> = cells.iter().map(|c| c.row.estimator0).collect();
    let rho = est[1] / est[0];
    let threshold = (1.0 + c * rho) / (1.0 + c);
    let mut stop_index = None;
    let mut levels = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let reduction = (i > 0).then(|| est[i] / est[i - 1]);
        let post_stop = stop_index.is_some();
        let stagnated = !post_stop && i >= 2 && reduction.is_some_and(|r| r > threshold);
        if stagnated {
            stop_index = Some(i);
        }
        levels.push(TraceLevel {
            h: cell.row.h,
            dim: cell.row.dim,
            eps: cell.row.eps,
            estimator: est[i],
            reduction,
            stagnated,
            post_stop,
            iters: cell.row.iters,
        });
    }
    RefinementTrace {
        spec: spec.clone(),
        c,
        rho,
        threshold,
        plateau: stop_index.map(|_| *est.last().unwrap()),
        levels,
        stop_index,
    }
}

/// Finest-level `√G̃₀` of the sweep, the computable surrogate for the
/// consistency error (data oscillation ignored).
pub fn estimate_consistency_error(spec: &SweepSpec) -> Result<f64> {
    spec.validate()?;
    let k = *spec.h_exponents.last().unwrap();
    let cfg = PcgConfig {
        max_iters: spec.max_iters,
        stop_rule: spec.stop_rule,
        record_lanczos: false,
    };
    let eps = spec.eps_rule.eps(0.5f64.powi(k as i32));
    let cell = run_cell(spec.formulation, k, eps, spec.pairs[0], &spec.data(0.0)?, &cfg)?;
    Ok(cell.row.estimator0)
}
