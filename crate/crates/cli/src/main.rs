use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssosc_core::linalg::Tolerances;
use ssosc_core::oracles::selftest;
use ssosc_core::problem::{parse_direction, read_problem, ProblemFile};
use ssosc_core::prox::SpectralFrame;
use ssosc_core::report::{emit_report, Real, ReportFile};
use ssosc_core::sovf::{
    certify, frame_at_candidate, hessian_pd_sweep, ssosc_margin, CertifyOptions, FrameSummary,
    Sovf, DEFAULT_BUDGET, DEFAULT_SIGMA_GRID,
};
use ssosc_core::Error;

/// Second-order sufficiency certificates at KKT points of
/// `min ½xᵀQx + cᵀx + g(A₀ + Σ xᵢAᵢ)`, with g the PSD-cone indicator or the
/// nuclear norm.
#[derive(Debug, Parser)]
#[command(name = "ssosc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// KKT residuals of the candidate.
    Kkt(ProblemArgs),
    /// Spectral frame at the candidate.
    Frame(ProblemArgs),
    /// Second-order variational function at the candidate in one direction.
    Gamma {
        #[command(flatten)]
        problem: ProblemArgs,
        /// JSON file with `{"d": [...]}` (mapped through F') or `{"Y": matrix}`.
        #[arg(long)]
        direction: PathBuf,
    },
    /// Strong second-order sufficient condition margin.
    Ssosc(ProblemArgs),
    /// Positive-definiteness of the augmented-Lagrangian Hessian over σ.
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// SSOSC, the σ sweep and the equivalence verdict.
    Certify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Runs the oracle suites on random frames.
    Selftest {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ProblemArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Output path; standard output when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    tol_pd: Option<f64>,
    #[arg(long)]
    tol_class: Option<f64>,
    #[arg(long)]
    tol_range: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl ProblemArgs {
    fn tolerances(&self) -> Result<Tolerances, Failure> {
        let mut tol = Tolerances::default();
        if let Some(v) = self.tol_pd {
            tol.tol_pd = v;
        }
        if let Some(v) = self.tol_class {
            tol.tol_class = v;
        }
        if let Some(v) = self.tol_range {
            tol.tol_range = v;
        }
        tol.validate()?;
        Ok(tol)
    }

    fn load(&self, tol: &Tolerances) -> Result<ProblemFile, Failure> {
        Ok(read_problem(&self.problem, tol)?)
    }
}

impl SweepArgs {
    fn options(&self, tol: Tolerances) -> Result<CertifyOptions, Failure> {
        let opts = CertifyOptions {
            sigma_grid: self
                .sigma_grid
                .clone()
                .unwrap_or_else(|| DEFAULT_SIGMA_GRID.to_vec()),
            budget: self.budget,
            seed: self.seed,
            threads: self.threads,
            tol,
        };
        opts.validate()?;
        Ok(opts)
    }
}

fn base_report(command: &str, seed: u64, tol: &Tolerances, file: &ProblemFile) -> ReportFile {
    let mut r = ReportFile::new(command, seed, tol);
    r.input_hash = Some(file.input_hash.clone());
    r.kkt = Some((&file.candidate).into());
    r
}

fn valid_frame(file: &ProblemFile, tol: &Tolerances) -> Result<SpectralFrame, Failure> {
    file.candidate.require_valid()?;
    Ok(frame_at_candidate(&file.problem, &file.candidate, tol)?)
}

fn write_report(report: &ReportFile, path: Option<&PathBuf>) -> Result<(), Failure> {
    let text = emit_report(report)?;
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Internal(format!("cannot write report: {e}"))),
    }
}

/// Returns whether every oracle passed (always true outside `selftest`).
fn run(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Kkt(args) => {
            let tol = args.tolerances()?;
            let file = args.load(&tol)?;
            write_report(&base_report("kkt", 0, &tol, &file), args.report.as_ref())?;
        }
        Command::Frame(args) => {
            let tol = args.tolerances()?;
            let file = args.load(&tol)?;
            let frame = valid_frame(&file, &tol)?;
            let mut r = base_report("frame", 0, &tol, &file);
            r.frame = Some((&FrameSummary::from(&frame)).into());
            write_report(&r, args.report.as_ref())?;
        }
        Command::Gamma { problem, direction } => {
            let tol = problem.tolerances()?;
            let file = problem.load(&tol)?;
            let bytes = fs::read(&direction)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", direction.display())))?;
            let y = parse_direction(&bytes, &file.problem)?;
            let frame = valid_frame(&file, &tol)?;
            let mut r = base_report("gamma", 0, &tol, &file);
            r.frame = Some((&FrameSummary::from(&frame)).into());
            r.gamma = Some(Real(Sovf::new(&frame)?.gamma(&y)?));
            write_report(&r, problem.report.as_ref())?;
        }
        Command::Ssosc(args) => {
            let tol = args.tolerances()?;
            let file = args.load(&tol)?;
            let frame = valid_frame(&file, &tol)?;
            let mut r = base_report("ssosc", 0, &tol, &file);
            r.frame = Some((&FrameSummary::from(&frame)).into());
            r.ssosc = Some((&ssosc_margin(&file.problem, &file.candidate, &tol)?).into());
            write_report(&r, args.report.as_ref())?;
        }
        Command::Sweep { problem, sweep } => {
            let tol = problem.tolerances()?;
            let opts = sweep.options(tol)?;
            let file = problem.load(&tol)?;
            file.candidate.require_valid()?;
            let points = hessian_pd_sweep(&file.problem, &file.candidate, &opts)?;
            let r = base_report("sweep", opts.seed, &tol, &file)
                .with_options(&opts)
                .with_sweep(&points);
            write_report(&r, problem.report.as_ref())?;
        }
        Command::Certify { problem, sweep } => {
            let tol = problem.tolerances()?;
            let opts = sweep.options(tol)?;
            let file = problem.load(&tol)?;
            file.candidate.require_valid()?;
            let cert = certify(&file.problem, &file.candidate, &opts)?;
            let r = base_report("certify", opts.seed, &tol, &file)
                .with_options(&opts)
                .with_certificate(&cert);
            write_report(&r, problem.report.as_ref())?;
        }
        Command::Selftest {
            trials,
            seed,
            threads,
            report,
        } => {
            let summary = selftest(trials, seed, threads)?;
            let r = ReportFile::new("selftest", seed, &Tolerances::default())
                .with_selftest(trials, &summary);
            write_report(&r, report.as_ref())?;
            return Ok(summary.all_pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: oracle failures (see report)");
            ExitCode::from(2)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
