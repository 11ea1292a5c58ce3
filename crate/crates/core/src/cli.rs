//! Command-line front end: `solve`, `gen` and `info`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::arnoldi::ArnoldiVariant;
use crate::dense::{cond2, UNIT_ROUNDOFF};
use crate::diagnostics::write_csv;
use crate::error::{Error, Result};
use crate::gmres::{solve, BasisChoice, BasisOperator, SolveResult, SolverConfig};
use crate::orth::OrthoScheme;
use crate::sparse::{
    gen_randsvd, parse_matrix_market, right_singular_vector, write_matrix_market, CsrMatrix, Preconditioner,
    RandSvd, RandSvdSpec,
};

/// Largest dimension `info` will run a dense SVD on.
pub const INFO_MAX_DENSE: usize = 2000;

#[derive(Parser, Debug)]
#[command(name = "sstep-gmres", version, about = "s-step GMRES with stability diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve A x = b and report diagnostics.
    Solve(SolveArgs),
    /// Write a randsvd matrix in Matrix Market form plus its singular values.
    Gen(GenArgs),
    /// Print size, norm and condition number of a matrix.
    Info(InfoArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Matrix Market file.
    #[arg(long, conflicts_with = "randsvd", required_unless_present = "randsvd")]
    pub matrix: Option<PathBuf>,
    /// Generated problem `n,kappa,mode,seed`.
    #[arg(long)]
    pub randsvd: Option<RandSvdSpec>,
    /// Right-hand side: `ones`, `file:PATH` or `rsv:k`.
    #[arg(long, default_value = "ones")]
    pub rhs: RhsSpec,
    /// Block size.
    #[arg(long = "s", default_value_t = 1)]
    pub s: usize,
    /// Polynomial basis for each Krylov block.
    #[arg(long, value_enum, default_value_t = BasisArg::Newton)]
    pub basis: BasisArg,
    /// s-step Arnoldi variant.
    #[arg(long, value_enum, default_value_t = ArnoldiArg::Classical)]
    pub arnoldi: ArnoldiArg,
    /// Block orthogonalization scheme.
    #[arg(long, value_enum, default_value_t = OrthArg::BcgsiPlus)]
    pub orth: OrthArg,
    /// Backward-error threshold (default n·u).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Key-dimension threshold (default √n·u).
    #[arg(long)]
    pub tolh: Option<f64>,
    /// Least-squares residual threshold (default: tol).
    #[arg(long)]
    pub tolls: Option<f64>,
    /// Restart length in Krylov columns.
    #[arg(long)]
    pub restart: Option<usize>,
    /// Cap on block steps over the whole solve.
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Cap on restarts after the first cycle.
    #[arg(long, default_value_t = 10)]
    pub max_restarts: usize,
    /// Preconditioner, applied on the right.
    #[arg(long, value_enum, default_value_t = PrecondArg::None)]
    pub precond: PrecondArg,
    /// Operator the basis polynomials and Ritz values use.
    #[arg(long, value_enum, default_value_t = BasisOperatorArg::Plain)]
    pub basis_operator: BasisOperatorArg,
    /// Evaluate the backward-error criterion every k block steps.
    #[arg(long, default_value_t = 1)]
    pub check_backward_every: usize,
    /// Measure condition numbers every k block steps (0 disables).
    #[arg(long, default_value_t = 1)]
    pub diag_every: usize,
    /// Keep the raw polynomial columns instead of unit-norm columns.
    #[arg(long)]
    pub no_normalize: bool,
    /// Per-step diagnostics CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Print a human-readable summary.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// `n,kappa,mode,seed`.
    #[arg(long)]
    pub randsvd: RandSvdSpec,
    /// Output Matrix Market path; singular values go to `PATH.sigma`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    /// Matrix Market file.
    #[arg(long)]
    pub matrix: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Monomial,
    Newton,
    Chebyshev,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArnoldiArg {
    Classical,
    Modified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrthArg {
    #[value(name = "bcgsi+")]
    BcgsiPlus,
    Bmgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecondArg {
    None,
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BasisOperatorArg {
    Plain,
    Preconditioned,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RhsSpec {
    Ones,
    File(PathBuf),
    RightSingularVector(usize),
}

impl FromStr for RhsSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "ones" {
            Ok(Self::Ones)
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(Self::File(PathBuf::from(p)))
        } else if let Some(k) = s.strip_prefix("rsv:") {
            k.parse()
                .map(Self::RightSingularVector)
                .map_err(|_| format!("bad singular vector index {k:?}"))
        } else {
            Err(format!("expected ones, file:PATH or rsv:k, got {s:?}"))
        }
    }
}

impl FromStr for RandSvdSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected n,kappa,mode,seed, got {s:?}"));
        }
        let spec = RandSvdSpec {
            n: parts[0].parse().map_err(|_| format!("bad n {:?}", parts[0]))?,
            kappa: parts[1].parse().map_err(|_| format!("bad kappa {:?}", parts[1]))?,
            mode: parts[2].parse().map_err(|_| format!("bad mode {:?}", parts[2]))?,
            seed: parts[3].parse().map_err(|_| format!("bad seed {:?}", parts[3]))?,
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl SolveArgs {
    pub fn config(&self, a: &CsrMatrix) -> Result<SolverConfig> {
        let right = match self.precond {
            PrecondArg::None => Preconditioner::Identity,
            PrecondArg::Jacobi => Preconditioner::jacobi_from(a)?,
        };
        Ok(SolverConfig {
            s: self.s,
            max_outer: self.max_outer,
            max_restarts: self.max_restarts,
            basis: match self.basis {
                BasisArg::Monomial => BasisChoice::Monomial,
                BasisArg::Newton => BasisChoice::Newton,
                BasisArg::Chebyshev => BasisChoice::Chebyshev,
            },
            variant: match self.arnoldi {
                ArnoldiArg::Classical => ArnoldiVariant::Classical,
                ArnoldiArg::Modified => ArnoldiVariant::Modified,
            },
            scheme: match self.orth {
                OrthArg::BcgsiPlus => OrthoScheme::BcgsiPlus,
                OrthArg::Bmgs => OrthoScheme::Bmgs,
            },
            tol: self.tol,
            tol_ls: self.tolls,
            tol_h: self.tolh,
            restart: self.restart,
            left: Preconditioner::Identity,
            right,
            basis_operator: match self.basis_operator {
                BasisOperatorArg::Plain => BasisOperator::Plain,
                BasisOperatorArg::Preconditioned => BasisOperator::Preconditioned,
            },
            check_backward_every: self.check_backward_every,
            normalize_basis: !self.no_normalize,
            diag_every: self.diag_every,
        })
    }
}

pub fn load_matrix(path: &Path) -> Result<CsrMatrix> {
    parse_matrix_market(&fs::read_to_string(path)?)
}

fn read_vector(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            out.push(tok.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad number {tok:?}"),
            })?);
        }
    }
    if out.len() != n {
        return Err(Error::DimensionMismatch {
            context: "right-hand side file",
            expected: n,
            found: out.len(),
        });
    }
    Ok(out)
}

fn right_hand_side(spec: &RhsSpec, n: usize, generated: Option<&RandSvd>) -> Result<Vec<f64>> {
    match spec {
        RhsSpec::Ones => Ok(vec![1.0; n]),
        RhsSpec::File(p) => read_vector(p, n),
        RhsSpec::RightSingularVector(k) => match generated {
            Some(g) => right_singular_vector(&g.v, *k),
            None => Err(Error::InvalidInput("rsv:k needs a --randsvd problem".into())),
        },
    }
}

/// Loads or generates the problem and runs the solver.
pub fn run_solve_args(args: &SolveArgs) -> Result<SolveResult> {
    let (a, generated) = match (&args.matrix, &args.randsvd) {
        (Some(p), _) => (load_matrix(p)?, None),
        (None, Some(spec)) => {
            let g = gen_randsvd(spec)?;
            (CsrMatrix::from_dense(&g.a)?, Some(g))
        }
        (None, None) => return Err(Error::InvalidInput("need --matrix or --randsvd".into())),
    };
    let b = right_hand_side(&args.rhs, a.n(), generated.as_ref())?;
    let cfg = args.config(&a)?;
    solve(&a, &b, &vec![0.0; a.n()], &cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3e}"))
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let res = match run_solve_args(args) {
        Ok(r) => r,
        Err(Error::NonFiniteIterate { outer, records }) => {
            if let Some(p) = &args.csv {
                let mut f = fs::File::create(p)?;
                write_csv(&records, &mut f)?;
            }
            return Err(Error::NonFiniteIterate { outer, records });
        }
        Err(e) => return Err(e),
    };
    if let Some(p) = &args.csv {
        let mut f = fs::File::create(p)?;
        write_csv(&res.records, &mut f)?;
    }
    if args.summary {
        writeln!(out, "status: {}", res.status)?;
        writeln!(out, "backward_error: {:.3e}", res.backward_error)?;
        writeln!(out, "block_steps: {}", res.outer_iterations)?;
        writeln!(out, "restarts: {}", res.restarts)?;
        writeln!(out, "max_cond_B_tilde: {}", fmt_opt(res.max_cond_b_tilde()))?;
    }
    Ok(if res.status.is_converged() { 0 } else { 2 })
}

/// Path of the singular-value file written next to `out`.
pub fn sigma_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".sigma");
    PathBuf::from(s)
}

fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<i32> {
    let g = gen_randsvd(&args.randsvd)?;
    let a = CsrMatrix::from_dense(&g.a)?;
    fs::write(&args.out, write_matrix_market(&a))?;
    let sigma: String = g.sigma.iter().map(|s| format!("{s:e}\n")).collect();
    let sp = sigma_path(&args.out);
    fs::write(&sp, sigma)?;
    writeln!(out, "wrote {} and {}", args.out.display(), sp.display())?;
    Ok(0)
}

fn cmd_info(args: &InfoArgs, out: &mut dyn Write) -> Result<i32> {
    let a = load_matrix(&args.matrix)?;
    writeln!(out, "n: {}", a.n())?;
    writeln!(out, "nnz: {}", a.nnz())?;
    writeln!(out, "symmetric: {}", a.is_symmetric())?;
    writeln!(out, "frobenius_norm: {:e}", a.frobenius_norm())?;
    if a.n() > INFO_MAX_DENSE {
        writeln!(out, "cond2: skipped (n > {INFO_MAX_DENSE})")?;
    } else {
        writeln!(out, "cond2: {:e}", cond2(&a.to_dense())?)?;
    }
    writeln!(out, "unit_roundoff: {UNIT_ROUNDOFF:e}")?;
    Ok(0)
}

/// Parses `argv` and runs the chosen subcommand; returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Gen(a) => cmd_gen(a, out),
        Command::Info(a) => cmd_info(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
