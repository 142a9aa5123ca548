//! Command-line front end. Exit codes: 0 success, 1 failed `--check`,
//! 2 bad flags or input, 3 solver failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::assembly::{manufactured_by_name, ProblemData};
use crate::discretization::ObservationWindow;
use crate::error::{Error, Result};
use crate::experiments::{
    condition_growth_exponent, condition_variation, parse_stop_rule, run_cell_cells, run_condition_sweep,
    run_consistent_sweep, run_inconsistent_loop, write_csv, write_manifest, EpsRule, Manifest, SweepSpec,
};
use crate::infsup::{alpha_table, default_rule, write_infsup_csv, AppendixCheck, RefinementRule};
use crate::linalg::PcgConfig;
use crate::solver::Formulation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Slope window enforced by `sweep --check`.
pub const SLOPE_RANGE: (f64, f64) = (-0.55, -0.45);

#[derive(Debug, Parser)]
#[command(name = "paradat", version, about = "Space-time least-squares data assimilation for the heat equation")]
pub struct Cli {
    /// Print progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Seed recorded in manifests; every command is deterministic.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one configuration and write a JSON report.
    Solve(SolveArgs),
    /// Consistent-data convergence sweep over mesh sizes and (ℓ, L) pairs.
    Sweep(SweepArgs),
    /// Lanczos condition estimates of the preconditioned Schur systems.
    Condition(ConditionArgs),
    /// Refinement loop with stagnation detection for perturbed data.
    Inconsistent(InconsistentArgs),
    /// Reference-element inf-sup constants α(q, ℓ).
    Infsup(InfsupArgs),
    /// Verify the biorthogonal construction on the red-refined triangle.
    Appendix(AppendixArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// second-order or fosls.
    #[arg(long, default_value = "second-order")]
    pub formulation: Formulation,
    /// Regularization: h, h^2, 0 or a number.
    #[arg(long, default_value = "h")]
    pub eps: EpsRule,
    /// Observation window lo,hi inside [0, 1].
    #[arg(long, default_value = "0.25,0.75")]
    pub omega: String,
    /// Earliest time of the reported time-slice errors.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Constant added to the observed state.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Manufactured state: sine-cubic or zero.
    #[arg(long, default_value = "sine-cubic")]
    pub problem: String,
    /// coupled, coupled=<μ> or tol=<τ>.
    #[arg(long, default_value = "coupled")]
    pub stop: String,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
}

impl ProblemArgs {
    fn window(&self) -> Result<ObservationWindow> {
        let parts: Vec<&str> = self.omega.split(',').map(str::trim).collect();
        let bad = || Error::InvalidInput(format!("--omega expects lo,hi, got '{}'", self.omega));
        if parts.len() != 2 {
            return Err(bad());
        }
        let lo = parts[0].parse::<f64>().map_err(|_| bad())?;
        let hi = parts[1].parse::<f64>().map_err(|_| bad())?;
        ObservationWindow::new(lo, hi, self.eta)
    }

    fn spec(&self, h_exponents: Vec<u32>, pairs: Vec<(usize, usize)>) -> Result<SweepSpec> {
        let spec = SweepSpec {
            formulation: self.formulation,
            h_exponents,
            eps_rule: self.eps,
            pairs,
            window: self.window()?,
            lambda: self.lambda,
            problem: self.problem.clone(),
            stop_rule: parse_stop_rule(&self.stop)?,
            max_iters: self.max_iters,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Cells per direction of the space-time grid.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Test-space refinement level used in the solve.
    #[arg(long, default_value_t = 0)]
    pub ell: usize,
    /// Test-space refinement level used by the estimator.
    #[arg(long, default_value_t = 2)]
    pub estimate_level: usize,
    /// Output JSON file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Mesh exponents k (h = 2^-k) as a..b or a comma list.
    #[arg(long, default_value = "3..7")]
    pub h_exps: String,
    /// (ℓ, L) pairs as ell:L, comma separated.
    #[arg(long, default_value = "0:2")]
    pub pairs: String,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run manifest (defaults to <out>.manifest.json when --out is given).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Read the run configuration from a JSON file instead of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the run configuration as JSON and exit.
    #[arg(long)]
    pub dump_config: bool,
    /// Fail (exit 1) unless the first pair's slope lies in [-0.55, -0.45].
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    #[arg(long, default_value = "second-order")]
    pub formulation: Formulation,
    /// Comma-separated regularization parameters.
    #[arg(long, default_value = "1,0.1,0.01,0.001")]
    pub eps_list: String,
    #[arg(long, default_value = "3..6")]
    pub h_exps: String,
    #[arg(long, default_value_t = 2)]
    pub ell: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InconsistentArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Candidate mesh exponents, coarse to fine.
    #[arg(long, default_value = "2..11")]
    pub h_exps: String,
    /// (ℓ, L) as ell:L.
    #[arg(long, default_value = "0:0")]
    pub pair: String,
    /// Stagnation constant C (a number or a fraction like 1/3).
    #[arg(long, default_value = "1/3")]
    pub c: String,
    /// Levels still computed after the stop.
    #[arg(long, default_value_t = 0)]
    pub extra: usize,
    /// Output CSV of the refinement trace (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full trace as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct InfsupArgs {
    /// Spatial dimension, 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Polynomial degree.
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// bisection (d = 1) or red (d = 2); defaults to the one matching d.
    #[arg(long)]
    pub rule: Option<RefinementRule>,
    #[arg(long, default_value_t = 3)]
    pub max_gen: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AppendixArgs {
    /// Also write the check results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Everything needed to rerun a sweep or refinement loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub spec: SweepSpec,
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub verbosity: u8,
    pub seed: u64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.spec.validate()?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Check(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => Failure::Usage(m),
            Error::Unsupported(m) => Failure::Usage(format!("unsupported: {m}")),
            other => Failure::Solver(other),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Run the CLI on the given arguments (including the program name) and
/// return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let ctx = Context {
        verbose: cli.verbose,
        seed: cli.seed,
    };
    let res = match cli.command {
        Command::Solve(a) => ctx.solve(a),
        Command::Sweep(a) => ctx.sweep(a),
        Command::Condition(a) => ctx.condition(a),
        Command::Inconsistent(a) => ctx.inconsistent(a),
        Command::Infsup(a) => ctx.infsup(a),
        Command::Appendix(a) => ctx.appendix(a),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            EXIT_CHECK_FAILED
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            EXIT_SOLVER
        }
    }
}

/// `a..b` (inclusive) or `a,b,c`.
pub fn parse_exponents(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::InvalidInput(format!("bad mesh exponent list '{s}' (expected a..b or a,b,c)"));
    let list: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if list.is_empty() {
        return Err(bad());
    }
    Ok(list)
}

/// `ell:L[,ell:L...]`.
pub fn parse_pairs(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|p| {
            let bad = || Error::InvalidInput(format!("bad level pair '{p}' (expected ell:L)"));
            let (a, b) = p.trim().split_once(':').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        })
        .collect()
}

fn parse_fraction(s: &str) -> Result<f64> {
    let bad = || Error::InvalidInput(format!("bad number '{s}'"));
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            Ok(a / b)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number '{v}'"))))
        .collect()
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn default_manifest(out: &Option<PathBuf>, manifest: &Option<PathBuf>) -> Option<PathBuf> {
    manifest.clone().or_else(|| {
        out.as_ref().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

struct Context {
    verbose: u8,
    seed: u64,
}

impl Context {
    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn finish_manifest(&self, manifest: Manifest, path: Option<PathBuf>, outputs: &[&Path]) -> Result<()> {
        if let Some(p) = path {
            write_manifest(&manifest.finish(outputs), &p)?;
            self.note(format!("manifest written to {}", p.display()));
        }
        Ok(())
    }

    fn solve(&self, a: SolveArgs) -> CmdResult {
        if a.n < 1 {
            return Err(Failure::Usage("n must be ≥ 1".into()));
        }
        let window = a.problem.window()?;
        let stop = parse_stop_rule(&a.problem.stop)?;
        let h = 1.0 / a.n as f64;
        let eps = a.problem.eps.eps(h);
        let data = ProblemData::manufactured(manufactured_by_name(&a.problem.problem)?, window)
            .with_lambda(a.problem.lambda)
            .with_eps(eps);
        data.validate()?;
        let cfg = PcgConfig {
            max_iters: a.problem.max_iters,
            stop_rule: stop,
            record_lanczos: true,
        };
        cfg.validate()?;
        crate::solver::check_stop_rule(eps, &cfg)?;
        let manifest = Manifest::start("solve", a.problem.clone().echo(a.n, a.ell, a.estimate_level));
        self.note(format!("solving n = {}, ε = {eps}", a.n));
        let cell = run_cell_cells(a.problem.formulation, a.n, eps, (a.ell, a.estimate_level), &data, &cfg)
            .map_err(Failure::Solver)?;
        let report = SolveOutput {
            formulation: a.problem.formulation,
            n: a.n,
            h,
            dim: cell.row.dim,
            eps,
            ell: a.ell,
            estimate_level: a.estimate_level,
            lambda: a.problem.lambda,
            estimator0: cell.row.estimator0,
            estimator_eps: cell.row.estimator_eps,
            iters: cell.row.iters,
            converged: cell.status == crate::linalg::PcgStatus::Converged,
            cond_est: cell.row.cond_est,
            flux_misfit: cell.flux_misfit,
            slice_errors: cell.slice_errors,
            seed: self.seed,
            manifest: manifest.finish(&[]),
        };
        let mut w = open_out(&a.out)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(Error::from)?;
        writeln!(w).map_err(Error::from)?;
        Ok(())
    }

    fn sweep_config(&self, a: &SweepArgs) -> Result<RunConfig> {
        if let Some(path) = &a.config {
            let mut cfg = RunConfig::load(path)?;
            if a.out.is_some() {
                cfg.out = a.out.clone();
            }
            return Ok(cfg);
        }
        Ok(RunConfig {
            command: "sweep".into(),
            spec: a.problem.spec(parse_exponents(&a.h_exps)?, parse_pairs(&a.pairs)?)?,
            out: a.out.clone(),
            manifest: default_manifest(&a.out, &a.manifest),
            verbosity: self.verbose,
            seed: self.seed,
        })
    }

    fn sweep(&self, a: SweepArgs) -> CmdResult {
        let cfg = self.sweep_config(&a)?;
        if a.dump_config {
            println!("{}", cfg.render());
            return Ok(());
        }
        let manifest = Manifest::start("sweep", serde_json::to_value(&cfg).map_err(Error::from)?);
        let sweep = run_consistent_sweep(&cfg.spec)?;
        write_csv(&sweep.rows(), open_out(&cfg.out)?)?;
        for s in &sweep.slopes {
            self.note(format!("(ℓ, L) = ({}, {}): slope {:.4}", s.ell, s.big_l, s.slope));
        }
        let outs: Vec<&Path> = cfg.out.iter().map(PathBuf::as_path).collect();
        self.finish_manifest(manifest, cfg.manifest.clone(), &outs)?;
        if a.check {
            let s = &sweep.slopes[0];
            let (lo, hi) = SLOPE_RANGE;
            if !(lo..=hi).contains(&s.slope) {
                return Err(Failure::Check(format!(
                    "slope {:.4} for (ℓ, L) = ({}, {}) outside [{lo}, {hi}]",
                    s.slope, s.ell, s.big_l
                )));
            }
            eprintln!("check passed: slope {:.4} for (ℓ, L) = ({}, {})", s.slope, s.ell, s.big_l);
        }
        Ok(())
    }

    fn condition(&self, a: ConditionArgs) -> CmdResult {
        let eps = parse_list(&a.eps_list)?;
        let hs = parse_exponents(&a.h_exps)?;
        if hs.iter().any(|&k| k > 12) {
            return Err(Failure::Usage("mesh exponents above 12 are not supported here".into()));
        }
        let echo = serde_json::json!({
            "formulation": a.formulation, "eps_list": eps, "h_exponents": hs, "ell": a.ell
        });
        let manifest = Manifest::start("condition", echo);
        let rows = run_condition_sweep(a.formulation, &eps, &hs, a.ell)?;
        write_csv(&rows, open_out(&a.out)?)?;
        for (e, ratio) in condition_variation(&rows) {
            eprintln!("ε = {e}: max/min cond over h = {ratio:.3}");
        }
        let finest = rows.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
        eprintln!("growth exponent in 1/ε at h = {finest}: {:.3}", condition_growth_exponent(&rows, finest));
        let outs: Vec<&Path> = a.out.iter().map(PathBuf::as_path).collect();
        self.finish_manifest(manifest, default_manifest(&a.out, &a.manifest), &outs)?;
        Ok(())
    }

    fn inconsistent(&self, a: InconsistentArgs) -> CmdResult {
        let c = parse_fraction(&a.c)?;
        let cfg = match &a.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig {
                command: "inconsistent".into(),
                spec: a.problem.spec(parse_exponents(&a.h_exps)?, parse_pairs(&a.pair)?)?,
                out: a.out.clone(),
                manifest: a.json.clone(),
                verbosity: self.verbose,
                seed: self.seed,
            },
        };
        if a.dump_config {
            println!("{}", cfg.render());
            return Ok(());
        }
        let manifest = Manifest::start("inconsistent", serde_json::to_value(&cfg).map_err(Error::from)?);
        let trace = run_inconsistent_loop(&cfg.spec, c, a.extra)?;
        {
            let mut w = csv::Writer::from_writer(open_out(&cfg.out)?);
            for l in &trace.levels {
                w.serialize(l).map_err(Error::from)?;
            }
            w.flush().map_err(Error::from)?;
        }
        match (trace.stop_index, trace.plateau) {
            (Some(i), Some(p)) => eprintln!(
                "stagnation at h = {} (reduction threshold {:.4}); estimator {p:.4e}",
                trace.levels[i].h, trace.threshold
            ),
            _ => eprintln!("no stagnation within the given levels"),
        }
        if let Some(p) = &cfg.manifest {
            let out = serde_json::json!({ "trace": trace, "manifest": manifest.finish(&[]) });
            serde_json::to_writer_pretty(File::create(p).map_err(Error::from)?, &out).map_err(Error::from)?;
        }
        Ok(())
    }

    fn infsup(&self, a: InfsupArgs) -> CmdResult {
        let rule = match a.rule {
            Some(r) => r,
            None => default_rule(a.d)?,
        };
        let rows = alpha_table(a.d, a.q, rule, a.max_gen)?;
        write_infsup_csv(&rows, open_out(&a.out)?)?;
        Ok(())
    }

    fn appendix(&self, a: AppendixArgs) -> CmdResult {
        let check = AppendixCheck::run()?;
        let ok = check.passed(1e-12);
        println!("{}", if ok { "PASS" } else { "FAIL" });
        for row in &check.mass {
            let cells: Vec<String> = row
                .iter()
                .map(|&v| format!("{:>9.5}", if v.abs() < 5e-6 { 0.0 } else { v }))
                .collect();
            println!("{}", cells.join(" "));
        }
        println!(
            "mass deviation {:.2e}, final gram deviation {:.2e}",
            check.mass_error, check.gram_error
        );
        if let Some(p) = &a.json {
            serde_json::to_writer_pretty(File::create(p).map_err(Error::from)?, &check).map_err(Error::from)?;
        }
        if ok {
            Ok(())
        } else {
            Err(Failure::Check("biorthogonal construction deviates by more than 1e-12".into()))
        }
    }
}

impl ProblemArgs {
    fn echo(self, n: usize, ell: usize, estimate_level: usize) -> serde_json::Value {
        serde_json::json!({
            "formulation": self.formulation,
            "eps": self.eps,
            "omega": self.omega,
            "eta": self.eta,
            "lambda": self.lambda,
            "problem": self.problem,
            "stop": self.stop,
            "max_iters": self.max_iters,
            "n": n,
            "ell": ell,
            "estimate_level": estimate_level,
        })
    }
}

/// JSON written by `solve`. Estimator fields hold square roots.
#[derive(Debug, Serialize)]
struct SolveOutput {
    formulation: Formulation,
    n: usize,
    h: f64,
    dim: usize,
    eps: f64,
    ell: usize,
    estimate_level: usize,
    lambda: f64,
    estimator0: f64,
    estimator_eps: f64,
    iters: usize,
    converged: bool,
    cond_est: f64,
    flux_misfit: Option<f64>,
    slice_errors: Vec<(f64, f64)>,
    seed: u64,
    manifest: Manifest,
}
