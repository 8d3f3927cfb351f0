//! Argument handling and command execution for the `sobolev-fem` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use sobolev_fem::diagnostics::nondegeneracy_gap;
use sobolev_fem::io::{export_solution, read_mesh};
use sobolev_fem::study::{poisson_check, rows_to_csv, solve_nested, PoissonReport};
use sobolev_fem::{
    run_study, Error, ExtremalProblem, Mesh64, MinimizerConfig64, Scaling, StudyConfig64,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    /// 0 success, 2 usage, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Run(Error::Config(_)) => 2,
            CliError::Run(Error::Io { .. } | Error::Parse { .. }) => 4,
            CliError::Run(_) => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Study,
    PoissonCheck,
    Diagnose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    Lambda1,
    UnitNorm,
}

impl From<ScalingArg> for Scaling {
    fn from(s: ScalingArg) -> Self {
        match s {
            ScalingArg::Lambda1 => Scaling::Lambda1,
            ScalingArg::UnitNorm => Scaling::UnitNorm,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    UnitSquare,
    MeshFile(PathBuf),
}

impl std::str::FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "unit-square" => Ok(Domain::UnitSquare),
            _ => match s.strip_prefix("mesh:") {
                Some(p) if !p.is_empty() => Ok(Domain::MeshFile(PathBuf::from(p))),
                _ => Err(format!(
                    "expected `unit-square` or `mesh:<path>`, got `{s}`"
                )),
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "sobolev-fem",
    version,
    about = "P1 finite-element extremal functions of the Sobolev inequality"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Solve on one refinement level and export the solution.
    Solve(Opts),
    /// Inter-level error and rate table over levels 1..=levels.
    Study(Opts),
    /// Manufactured-solution check of the linear solver.
    PoissonCheck(Opts),
    /// Non-degeneracy gap and sup norm per level.
    Diagnose(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// Exponent of the L^p norm (nonlinearity |u|^{p-2} u).
    #[arg(long, default_value_t = 4.0)]
    p: f64,
    /// Finest level (solve, diagnose, poisson-check) or j_max (study).
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long, default_value_t = 0.2)]
    eta: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Run exactly this many descent steps from the constant initial guess.
    #[arg(long)]
    iters_fixed: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    quotient_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    inner_tol: f64,
    #[arg(long, default_value_t = 5)]
    quad_degree: usize,
    #[arg(long, value_enum, default_value_t = ScalingArg::Lambda1)]
    scaling: ScalingArg,
    /// `unit-square` or `mesh:<path>`.
    #[arg(long, default_value = "unit-square")]
    domain: Domain,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Size of the worker thread pool.
    #[arg(long)]
    threads: Option<usize>,
    /// Stop after the descent, without the Newton refinement.
    #[arg(long)]
    no_polish: bool,
}

/// Validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub levels: u32,
    pub minimizer: MinimizerConfig64,
    pub scaling: Scaling,
    pub domain: Domain,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn p(&self) -> f64 {
        self.minimizer.p
    }

    /// Deterministic file stem for every output of this run.
    pub fn stamp(&self) -> String {
        let name = match self.command {
            Command::Solve => "solve",
            Command::Study => "study",
            Command::PoissonCheck => "poisson-check",
            Command::Diagnose => "diagnose",
        };
        let key = format!("{self:?}");
        let hash = key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        });
        format!("{name}-p{}-l{}-{:08x}", self.p(), self.levels, hash as u32)
    }
}

/// Parses and validates `argv` (including the program name).
pub fn parse_args<I, S>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    let (command, o) = match cli.command {
        Sub::Solve(o) => (Command::Solve, o),
        Sub::Study(o) => (Command::Study, o),
        Sub::PoissonCheck(o) => (Command::PoissonCheck, o),
        Sub::Diagnose(o) => (Command::Diagnose, o),
    };
    let levels = o.levels.unwrap_or(match command {
        Command::Study => 7,
        _ => 6,
    });
    let range = match command {
        Command::Study => 2..=9,
        Command::PoissonCheck => 2..=10,
        Command::Solve | Command::Diagnose => 1..=10,
    };
    if !range.contains(&levels) {
        return Err(CliError::Usage(format!(
            "--levels must lie in {range:?}, got {levels}"
        )));
    }
    if o.threads == Some(0) {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    let minimizer = MinimizerConfig64 {
        eta: o.eta,
        max_iters: o.max_iters,
        iters_fixed: o.iters_fixed,
        quotient_tol: o.quotient_tol,
        inner_tol: o.inner_tol,
        quad_degree: o.quad_degree,
        polish: !o.no_polish,
        ..MinimizerConfig64::new(o.p)
    };
    minimizer
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(RunConfig {
        command,
        levels,
        minimizer,
        scaling: o.scaling.into(),
        domain: o.domain,
        out_dir: o.out_dir,
        threads: o.threads,
    })
}

/// Files written by a run, plus the text printed on success.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn run(config: &RunConfig) -> Result<RunOutput, CliError> {
    if let Some(n) = config.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    fs::create_dir_all(&config.out_dir).map_err(|source| Error::Io {
        path: config.out_dir.clone(),
        source,
    })?;
    match config.command {
        Command::Solve => run_solve(config),
        Command::Study => run_study_cmd(config),
        Command::PoissonCheck => run_poisson(config),
        Command::Diagnose => run_diagnose(config),
    }
}

fn base_mesh(config: &RunConfig) -> Result<Mesh64, Error> {
    match &config.domain {
        Domain::UnitSquare => Mesh64::unit_square(0),
        Domain::MeshFile(path) => read_mesh(path),
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, Error> {
    fs::write(&path, text).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn out_path(config: &RunConfig, suffix: &str) -> PathBuf {
    config.out_dir.join(format!("{}.{suffix}", config.stamp()))
}

fn run_solve(config: &RunConfig) -> Result<RunOutput, CliError> {
    let base = base_mesh(config)?;
    let level = base.level() + config.levels;
    let (mesh, sol) = solve_nested(&base, level, &config.minimizer)?;
    let path = out_path(config, "solution.txt");
    export_solution(&mesh, config.scaling.select(&sol), &path)?;
    let mut summary = String::new();
    writeln!(
        summary,
        "level {}  vertices {}",
        mesh.level(),
        mesh.num_vertices()
    )
    .unwrap();
    writeln!(summary, "c_h {:.12e}", sol.c_h).unwrap();
    writeln!(summary, "linf {:.6e}", sol.linf).unwrap();
    writeln!(summary, "residual {:.3e}", sol.fixed_point_residual).unwrap();
    writeln!(
        summary,
        "iterations {} (+{} newton)  converged {}",
        sol.iterations, sol.newton_steps, sol.converged
    )
    .unwrap();
    writeln!(summary, "wrote {}", path.display()).unwrap();
    Ok(RunOutput {
        files: vec![path],
        summary,
    })
}

fn run_study_cmd(config: &RunConfig) -> Result<RunOutput, CliError> {
    let base = base_mesh(config)?;
    let study = StudyConfig64 {
        minimizer: config.minimizer.clone(),
        scaling: config.scaling,
        ..StudyConfig64::new(config.p())
    };
    let report = run_study(&base, config.levels, &study);
    let csv = rows_to_csv(&report.rows);
    // partial tables are written before the failure is reported
    let path = write(out_path(config, "csv"), &csv)?;
    if let Some(e) = report.failure {
        return Err(e.into());
    }
    let mut summary = csv;
    writeln!(
        summary,
        "c_h non-increasing: {}",
        report.c_h_nonincreasing(1e-10)
    )
    .unwrap();
    writeln!(
        summary,
        "all levels converged: {}",
        report.converged_by_level.iter().all(|&c| c)
    )
    .unwrap();
    writeln!(summary, "wrote {}", path.display()).unwrap();
    Ok(RunOutput {
        files: vec![path],
        summary,
    })
}

pub const POISSON_CSV_HEADER: &str = "level,h,err_l2,rate_l2,err_h1,rate_h1,cg_iters";

pub fn poisson_csv(report: &PoissonReport<f64>) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
    let mut out = format!("{POISSON_CSV_HEADER}\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{:.6e},{:.6e},{},{:.6e},{},{}",
            r.level,
            r.h_label,
            r.err_l2,
            opt(r.rate_l2),
            r.err_h1,
            opt(r.rate_h1),
            r.cg_iterations
        )
        .unwrap();
    }
    out
}

fn run_poisson(config: &RunConfig) -> Result<RunOutput, CliError> {
    if config.domain != Domain::UnitSquare {
        return Err(CliError::Usage(
            "poisson-check runs on the unit square only".into(),
        ));
    }
    let report = poisson_check(1..=config.levels, config.levels, 1e-12)?;
    let csv = poisson_csv(&report);
    let path = write(out_path(config, "csv"), &csv)?;
    let mut summary = csv;
    writeln!(
        summary,
        "center value (f = 1, level {}): {:.7}",
        report.center_level, report.center_value
    )
    .unwrap();
    writeln!(summary, "wrote {}", path.display()).unwrap();
    Ok(RunOutput {
        files: vec![path],
        summary,
    })
}

pub const DIAGNOSE_CSV_HEADER: &str = "level,c_h,linf,gap,positive,residual";

fn run_diagnose(config: &RunConfig) -> Result<RunOutput, CliError> {
    let base = base_mesh(config)?;
    let mc = &config.minimizer;
    let mut csv = format!("{DIAGNOSE_CSV_HEADER}\n");
    let mut mesh = base.clone();
    let mut start = None;
    let mut failure = None;
    for _ in 0..config.levels {
        let fine = mesh.refine_uniform();
        if let Some(s) = start.take() {
            start = Some(fine.prolongate(&s)?);
        }
        mesh = fine;
        let step = (|| -> Result<_, Error> {
            let problem = ExtremalProblem::new(&mesh, mc.p, mc.quad_degree)?;
            let sol = problem.solve(
                mc,
                if mc.iters_fixed.is_some() {
                    None
                } else {
                    start.clone()
                },
            )?;
            let gap = if mesh.num_interior() > 1 {
                Some(nondegeneracy_gap(&problem, &sol.field)?)
            } else {
                None
            };
            Ok((sol, gap))
        })();
        match step {
            Ok((sol, gap)) => {
                let (g, pos) = gap
                    .map(|g| (format!("{:.6e}", g.gap), g.positive.to_string()))
                    .unwrap_or_default();
                writeln!(
                    csv,
                    "{},{:.12e},{:.6e},{g},{pos},{:.3e}",
                    mesh.level(),
                    sol.c_h,
                    sol.linf,
                    sol.fixed_point_residual
                )
                .unwrap();
                start = Some(sol.normalized_field);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let path = write(out_path(config, "csv"), &csv)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let summary = format!("{csv}wrote {}\n", path.display());
    Ok(RunOutput {
        files: vec![path],
        summary,
    })
}
