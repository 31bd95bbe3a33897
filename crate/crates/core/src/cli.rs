//! The `eed` command line: `inpaint`, `sparsify` and `diagnose`.
//!
//! Exit codes: 0 success, 1 error (including usage errors), 2 when the
//! fixed-point iteration stopped at `--max-outer` without converging.

use crate::diagnostics::{
    audit_trace, check_energy_chain, check_smoothed_gradient_bound, estimate_constants, BoundConstants,
    BoundReport, INFLATION,
};
use crate::error::{EedError, Result};
use crate::fixed_point::{default_start, iterate, FixedPointConfig, IterationReport, Status};
use crate::grid::{Image, Mask};
use crate::pgm::Pgm;
use crate::report::{DiagnosticsParams, ReportParams, RunReport, RunTrace};
use crate::solver::{Preconditioner, SolverConfig};
use crate::sparsify::{probabilistic_sparsify, SparsifyConfig};
use crate::tensor::EedParams;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "eed", version, about = "Edge-enhancing diffusion inpainting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct an image from the pixels marked in a mask.
    Inpaint(InpaintArgs),
    /// Select a sparse mask by probabilistic sparsification.
    Sparsify(SparsifyArgs),
    /// Estimate domain constants and audit the iteration bounds.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct EedArgs {
    /// Gaussian pre-smoothing scale.
    #[arg(long, default_value_t = 0.8)]
    pub sigma: f64,
    /// Contrast parameter of the diffusivity.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Stop once the fixed-point defect falls to this value.
    #[arg(long, default_value_t = 1e-8)]
    pub jtol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    /// Relative residual tolerance of the inner CG solves.
    #[arg(long, default_value_t = 1e-10)]
    pub cg_tol: f64,
    /// Inner iteration cap (default: ten times the number of unknowns).
    #[arg(long)]
    pub cg_max_iter: Option<usize>,
    /// Disable Jacobi preconditioning.
    #[arg(long)]
    pub no_precond: bool,
}

impl EedArgs {
    fn configs(&self) -> Result<(EedParams, SolverConfig, FixedPointConfig)> {
        let params = EedParams::new(self.lambda, self.sigma)?;
        let solver = SolverConfig {
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            preconditioner: if self.no_precond {
                Preconditioner::None
            } else {
                Preconditioner::Diagonal
            },
        };
        solver.validate()?;
        let fp = FixedPointConfig {
            j_tol: self.jtol,
            max_outer: self.max_outer,
            record_norms: true,
        };
        fp.validate()?;
        Ok((params, solver, fp))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    /// Random samples per constant estimate (at least 100).
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also run the bound audits and add them to the report.
    #[arg(long)]
    pub diagnostics: bool,
    #[command(flatten)]
    pub eed: EedArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct SparsifyArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Fraction of pixels to keep, in (0, 1).
    #[arg(long, value_parser = parse_fraction)]
    pub density: f64,
    #[arg(long)]
    pub out_mask: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of the mask drawn as candidates per round.
    #[arg(long, default_value_t = 0.02, value_parser = parse_fraction)]
    pub p: f64,
    /// Fraction of the mask removed per round (less than p).
    #[arg(long, default_value_t = 0.01, value_parser = parse_fraction)]
    pub q: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub eed: EedArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Sigma values as `a:b:n` (n evenly spaced values from a to b) or a
    /// comma-separated list. Overrides --sigma.
    #[arg(long, value_parser = parse_sweep)]
    pub sigma_sweep: Option<Sweep>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub eed: EedArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

/// Sigma values of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep(pub Vec<f64>);

pub fn parse_sweep(s: &str) -> std::result::Result<Sweep, String> {
    let num = |t: &str| -> std::result::Result<f64, String> {
        let v: f64 = t.trim().parse().map_err(|_| format!("bad number `{t}`"))?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("sigma must be positive, got {v}"))
        }
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().map_err(|_| format!("bad count `{n}`"))?;
            match n {
                0 => Err("count must be at least 1".into()),
                1 => Ok(Sweep(vec![a])),
                _ => Ok(Sweep((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())),
            }
        }
        [list] => list.split(',').map(num).collect::<std::result::Result<_, _>>().map(Sweep),
        _ => Err(format!("expected a:b:n or a comma list, got `{s}`")),
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let out = match &cli.command {
        Command::Inpaint(a) => inpaint(a),
        Command::Sparsify(a) => sparsify(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn read_pgm(path: &Path, name: &str, report: &mut RunReport) -> Result<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| EedError::Format(format!("{}: {e}", path.display())))?;
    report.checksum(name, &bytes);
    Pgm::parse(&bytes)
}

fn write_bytes(path: &Path, name: &str, bytes: &[u8], report: &mut RunReport) -> Result<()> {
    std::fs::write(path, bytes)?;
    report.checksum(name, bytes);
    Ok(())
}

fn read_problem(image: &Path, mask: &Path, report: &mut RunReport) -> Result<(Image, Mask)> {
    let f = read_pgm(image, "image", report)?.to_image()?;
    let m = read_pgm(mask, "mask", report)?.to_mask()?;
    if f.dims() != m.dims() {
        return Err(EedError::DimensionMismatch {
            expected: f.dims(),
            actual: m.dims(),
        });
    }
    Ok((f, m))
}

fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => 0,
        Status::MaxIter => 2,
        Status::Error => 1,
    }
}

/// Constant estimates plus every audit for one fixed-point run.
fn audit_run(
    f: &Image,
    mask: &Mask,
    u0: &Image,
    rep: &IterationReport,
    params: &EedParams,
    solver: &SolverConfig,
    sampling: &SamplingArgs,
) -> Result<Vec<BoundReport>> {
    let c = estimate_constants(mask, sampling.samples, sampling.seed)?;
    let consts = BoundConstants::evaluate(f, mask, params, &c)?;
    Ok(vec![
        audit_trace(rep, mask, params, &consts),
        check_energy_chain(u0, f, mask, params, solver)?,
        check_smoothed_gradient_bound(u0, mask, params.sigma)?,
    ])
}

fn inpaint(a: &InpaintArgs) -> Result<i32> {
    let (params, solver, fp) = a.eed.configs()?;
    let mut rp = ReportParams::new(params, solver, fp);
    if a.diagnostics {
        rp.diagnostics = Some(DiagnosticsParams {
            n_samples: a.sampling.samples,
            seed: a.sampling.seed,
            inflation: INFLATION,
            sigmas: vec![params.sigma],
        });
    }
    let mut report = RunReport::new("inpaint", rp);
    let start = Instant::now();
    let (f, mask) = read_problem(&a.image, &a.mask, &mut report)?;
    report.add_time("read", start);
    mask.validate()?;
    let u0 = default_start(&f, &mask)?;
    let (u, rep) = report.timed("solve", || iterate(&u0, &f, &mask, &params, &solver, &fp))?;
    report.iterations.push(RunTrace::new(params.sigma, &rep));
    if rep.status == Status::Error {
        return Err(EedError::IterationFailed(rep.error.clone().unwrap_or_default()));
    }
    if a.diagnostics {
        let bounds = report.timed("diagnostics", || audit_run(&f, &mask, &u0, &rep, &params, &solver, &a.sampling))?;
        report.bounds = bounds;
    }
    let bytes = Pgm::from_image(&u).encode();
    write_bytes(&a.out, "out", &bytes, &mut report)?;
    if let Some(path) = &a.report {
        report.write(path)?;
    }
    if rep.status == Status::MaxIter {
        eprintln!("warning: no convergence within {} outer iterations", fp.max_outer);
    }
    Ok(exit_code(rep.status))
}

fn sparsify(a: &SparsifyArgs) -> Result<i32> {
    let (params, solver, fp) = a.eed.configs()?;
    let cfg = SparsifyConfig {
        target_density: a.density,
        p: a.p,
        q: a.q,
        seed: a.seed,
    };
    cfg.validate()?;
    let mut rp = ReportParams::new(params, solver, fp);
    rp.sparsify = Some(cfg);
    rp.tool_choices.push(
        "sparsification: p of the mask drawn as candidates, q of the mask removed per round, worst-reconstructed candidates restored".into(),
    );
    let mut report = RunReport::new("sparsify", rp);
    let start = Instant::now();
    let f = read_pgm(&a.image, "image", &mut report)?.to_image()?;
    report.add_time("read", start);
    let s = report.timed("sparsify", || probabilistic_sparsify(&f, &cfg, &params, &solver, &fp))?;
    report.sparsify_rounds = s.rounds;
    let bytes = Pgm::from_mask(&s.mask).encode();
    write_bytes(&a.out_mask, "out_mask", &bytes, &mut report)?;
    if let Some(path) = &a.report {
        report.write(path)?;
    }
    Ok(0)
}

fn diagnose(a: &DiagnoseArgs) -> Result<i32> {
    let (params, solver, fp) = a.eed.configs()?;
    let sigmas = a.sigma_sweep.clone().map_or_else(|| vec![params.sigma], |s| s.0);
    let mut rp = ReportParams::new(params, solver, fp);
    rp.diagnostics = Some(DiagnosticsParams {
        n_samples: a.sampling.samples,
        seed: a.sampling.seed,
        inflation: INFLATION,
        sigmas: sigmas.clone(),
    });
    let mut report = RunReport::new("diagnose", rp);
    let start = Instant::now();
    let (f, mask) = read_problem(&a.image, &a.mask, &mut report)?;
    report.add_time("read", start);
    mask.validate()?;
    let c = report.timed("constants", || estimate_constants(&mask, a.sampling.samples, a.sampling.seed))?;
    let u0 = default_start(&f, &mask)?;
    let mut code = 0;
    for &sigma in &sigmas {
        let p = EedParams::new(params.lambda, sigma)?;
        let (_, rep) = report.timed("solve", || iterate(&u0, &f, &mask, &p, &solver, &fp))?;
        report.iterations.push(RunTrace::new(sigma, &rep));
        code = code.max(exit_code(rep.status));
        let bounds = report.timed("audit", || -> Result<Vec<BoundReport>> {
            let consts = BoundConstants::evaluate(&f, &mask, &p, &c)?;
            Ok(vec![
                audit_trace(&rep, &mask, &p, &consts),
                check_energy_chain(&u0, &f, &mask, &p, &solver)?,
                check_smoothed_gradient_bound(&u0, &mask, sigma)?,
            ])
        })?;
        report.bounds.extend(bounds);
    }
    match &a.report {
        Some(path) => report.write(path)?,
        None => print!("{}", report.to_json()?),
    }
    Ok(code)
}
