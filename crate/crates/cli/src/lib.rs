//! The `med` command-line tool.
//!
//! Exit codes: 0 certified optimal, 2 stationary but not global, 3 not
//! stationary or solver failure, 64 usage, 65 invalid data, 66 missing input.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use med_core::bloch3::{audit_residuals, AuditReport, AUDIT_TOL};
use med_core::certify::{certify_povm, z_operator, Certificate, Tolerances, TOL_GLB, TOL_STAT};
use med_core::enumerate3::{classify_landscape, Landscape};
use med_core::gram::{random_ensemble, random_real_ensemble, GramMatrix};
use med_core::homotopy::{drag_between, rk4_drag, DragOptions, RunReport};
use med_core::io::{five_state_example, write_residual_csv, EnsembleFile, Input, PovmFile};
use med_core::MedError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_GLOBAL: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;

#[derive(Parser, Debug)]
#[command(name = "med", version, about = "Optimal minimum-error measurements for linearly independent pure states")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Number of RK4 steps over t ∈ [0, 1].
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Step length; defaults to 1/steps and must satisfy steps·h = 1.
    #[arg(long)]
    pub h: Option<f64>,
    /// Newton projection back onto the solution manifold during the drag.
    #[arg(long)]
    pub polish: bool,
    #[arg(long, default_value_t = 10)]
    pub polish_every: usize,
    #[command(flatten)]
    pub tol: TolArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TolArgs {
    #[arg(long, default_value_t = TOL_STAT)]
    pub tol_stat: f64,
    #[arg(long, default_value_t = TOL_GLB)]
    pub tol_glb: f64,
}

impl TolArgs {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            stat: self.tol_stat,
            glb: self.tol_glb,
        }
    }
}

impl SolverArgs {
    pub fn options(&self) -> DragOptions {
        DragOptions {
            steps: self.steps,
            h: self.h.unwrap_or(1.0 / self.steps.max(1) as f64),
            polish: self.polish,
            polish_every: self.polish_every,
            tolerances: self.tol.tolerances(),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Drag the trivial solution to the input ensemble and certify the result.
    Solve {
        /// Ensemble or Gram matrix JSON.
        input: Option<PathBuf>,
        /// Drag through this Gram matrix first.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Solve every *.json file in a directory.
        #[arg(long, conflicts_with = "input")]
        batch: Option<PathBuf>,
        /// Output directory; without it the report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Check a measurement against the optimality conditions.
    Certify {
        /// Ensemble JSON, or a solve report when no POVM file is given.
        input: PathBuf,
        povm: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// List every stationary measurement of a real three-state ensemble.
    Enumerate {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the qutrit Bloch-vector optimality identities.
    Audit {
        input: PathBuf,
        /// Measurement to audit; solved by continuation when omitted.
        povm: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Write a seeded random ensemble.
    Generate {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        spread: f64,
        /// Real state vectors.
        #[arg(long)]
        real: bool,
        /// Emit the Gram matrix instead of the states.
        #[arg(long)]
        gram: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residual trace of the five-state example as CSV.
    ReproduceFig1 {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Debug)]
pub enum CliError {
    Med(MedError),
    Usage(String),
    Missing(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Missing(_) => EXIT_NO_INPUT,
            CliError::Io(_) => EXIT_FAILURE,
            CliError::Med(e) => med_exit_code(e),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Med(e) => write!(f, "{e}"),
            CliError::Usage(s) | CliError::Missing(s) | CliError::Io(s) => f.write_str(s),
        }
    }
}

impl From<MedError> for CliError {
    fn from(e: MedError) -> Self {
        CliError::Med(e)
    }
}

pub fn med_exit_code(e: &MedError) -> i32 {
    use MedError::*;
    match e {
        InvalidArgument(_) => EXIT_USAGE,
        NearLinearDependence { .. }
        | InvalidEnsemble(_)
        | InvalidGram(_)
        | InvalidPovm(_)
        | DimensionMismatch { .. }
        | NotUnitary(_) => EXIT_DATA,
        _ => EXIT_FAILURE,
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Missing(format!("{}: no such file", path.display())),
        _ => CliError::Io(format!("{}: {e}", path.display())),
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_input(path: &Path) -> CliResult<Input> {
    let file: EnsembleFile = read_json(path)?;
    file.load().map_err(|e| match e {
        MedError::InvalidArgument(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
        other => CliError::Med(other),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise");
    s.push('\n');
    s
}

/// Writes `name` under `out`, or prints `text` when there is no output directory.
fn emit(out: Option<&Path>, name: &str, text: &str) -> CliResult<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

/// What `solve` writes; `certify` reads back `gram` and `final_povm`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolveOutput {
    pub gram: EnsembleFile,
    pub steps: usize,
    pub h: f64,
    pub polished: bool,
    pub p_success: f64,
    pub final_residual: f64,
    pub a: Vec<f64>,
    pub final_povm: PovmFile,
    pub certificate: Certificate,
}

impl SolveOutput {
    pub fn new(g: &GramMatrix, report: &RunReport) -> Self {
        SolveOutput {
            gram: EnsembleFile::from_gram(g),
            steps: report.steps,
            h: report.h,
            polished: report.polished,
            p_success: report.p_success(),
            final_residual: report.final_residual(),
            a: report.final_state.a.clone(),
            final_povm: PovmFile::from_povm(&report.final_povm),
            certificate: report.certificate.clone(),
        }
    }
}

#[derive(Deserialize)]
struct ReportInput {
    gram: EnsembleFile,
    final_povm: PovmFile,
}

pub fn solve_gram(g: &GramMatrix, from: Option<&GramMatrix>, opts: &DragOptions) -> CliResult<RunReport> {
    let report = match from {
        None => rk4_drag(g, opts)?,
        Some(mid) => {
            let first = rk4_drag(mid, opts)?;
            drag_between(mid, &first.final_state, g, opts)?
        }
    };
    Ok(report)
}

fn residual_csv(report: &RunReport) -> String {
    let mut buf = Vec::new();
    write_residual_csv(&mut buf, &report.residual_trace).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}

fn solve_one(input: &Path, from: Option<&GramMatrix>, opts: &DragOptions) -> CliResult<(String, String, i32)> {
    let g = load_input(input)?.gram()?;
    let report = solve_gram(&g, from, opts)?;
    let code = report.certificate.verdict.exit_code();
    log::info!(
        "{}: P_s = {}, final residual {:e}, verdict {:?}",
        input.display(),
        report.p_success(),
        report.final_residual(),
        report.certificate.verdict
    );
    Ok((to_json(&SolveOutput::new(&g, &report)), residual_csv(&report), code))
}

fn cmd_solve(
    input: Option<PathBuf>,
    from: Option<PathBuf>,
    batch: Option<PathBuf>,
    out: Option<PathBuf>,
    solver: SolverArgs,
) -> CliResult<i32> {
    let opts = solver.options();
    let from = match &from {
        Some(p) => Some(load_input(p)?.gram()?),
        None => None,
    };
    if let Some(dir) = batch {
        let out = out.ok_or_else(|| CliError::Usage("--batch needs --out".into()))?;
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| CliError::Missing(format!("{}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let codes: Vec<i32> = files
            .par_iter()
            .map(|path| {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let outcome = solve_one(path, from.as_ref(), &opts).and_then(|(json, csv, code)| {
                    emit(Some(&out), &format!("{stem}.report.json"), &json)?;
                    emit(Some(&out), &format!("{stem}.residuals.csv"), &csv)?;
                    Ok(code)
                });
                outcome.unwrap_or_else(|e| {
                    eprintln!("{}: {e}", path.display());
                    e.exit_code()
                })
            })
            .collect();
        return Ok(codes.into_iter().max().unwrap_or(EXIT_OK));
    }
    let input = input.ok_or_else(|| CliError::Usage("solve needs an input file or --batch".into()))?;
    let (json, csv, code) = solve_one(&input, from.as_ref(), &opts)?;
    emit(out.as_deref(), "report.json", &json)?;
    if out.is_some() {
        emit(out.as_deref(), "residuals.csv", &csv)?;
    }
    Ok(code)
}

fn cmd_certify(input: PathBuf, povm: Option<PathBuf>, out: Option<PathBuf>, tol: TolArgs) -> CliResult<i32> {
    let (ensemble, povm) = match povm {
        Some(p) => {
            let e = load_input(&input)?.ensemble()?;
            let file: PovmFile = read_json(&p)?;
            (e, file.load()?)
        }
        None => {
            let report: ReportInput = read_json(&input)?;
            let e = report.gram.load()?.ensemble()?;
            (e, report.final_povm.load()?)
        }
    };
    let cert = certify_povm(&ensemble, &povm, tol.tolerances())?;
    log::info!("verdict {:?}, P_s = {}", cert.verdict, cert.p_success);
    emit(out.as_deref(), "certificate.json", &to_json(&cert))?;
    Ok(cert.verdict.exit_code())
}

fn cmd_enumerate(input: PathBuf, out: Option<PathBuf>) -> CliResult<i32> {
    let g = load_input(&input)?.gram()?;
    if !g.is_real() {
        return Err(CliError::Med(MedError::InvalidGram(
            "enumeration needs a real Gram matrix".into(),
        )));
    }
    let land: Landscape = classify_landscape(&g)?;
    if let Some(msg) = &land.anomaly {
        log::warn!("{msg}");
    }
    emit(out.as_deref(), "landscape.json", &to_json(&land))?;
    Ok(if land.global.is_some() { EXIT_OK } else { EXIT_FAILURE })
}

#[derive(Serialize)]
struct AuditOutput<'a> {
    certificate: &'a Certificate,
    audit: &'a AuditReport,
    failures: Vec<String>,
}

fn cmd_audit(input: PathBuf, povm: Option<PathBuf>, out: Option<PathBuf>, solver: SolverArgs) -> CliResult<i32> {
    let parsed = load_input(&input)?;
    let (ensemble, povm) = match povm {
        Some(p) => {
            let file: PovmFile = read_json(&p)?;
            (parsed.ensemble()?, file.load()?)
        }
        None => {
            let g = parsed.gram()?;
            let report = rk4_drag(&g, &solver.options())?;
            (parsed.ensemble()?, report.final_povm)
        }
    };
    let cert = certify_povm(&ensemble, &povm, solver.tol.tolerances())?;
    let z = z_operator(&ensemble, &povm)?;
    let audit = audit_residuals(&ensemble, &povm, &z.z, AUDIT_TOL)?;
    let failures = audit.failures();
    for f in &failures {
        log::warn!("audit: {f}");
    }
    emit(
        out.as_deref(),
        "audit.json",
        &to_json(&AuditOutput {
            certificate: &cert,
            audit: &audit,
            failures: failures.clone(),
        }),
    )?;
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_generate(m: usize, seed: u64, spread: f64, real: bool, gram: bool, out: Option<PathBuf>) -> CliResult<i32> {
    let e = if real {
        random_real_ensemble(m, seed, spread)?
    } else {
        random_ensemble(m, seed, spread)?
    };
    let file = if gram {
        EnsembleFile::from_gram(&e.gram()?)
    } else {
        EnsembleFile::from_ensemble(&e)
    };
    emit(out.as_deref(), "ensemble.json", &to_json(&file))?;
    Ok(EXIT_OK)
}

/// Drags `𝟙/5` to the five-state example and returns the run.
pub fn reproduce_fig1(opts: &DragOptions) -> CliResult<RunReport> {
    Ok(rk4_drag(&five_state_example(), opts)?)
}

fn cmd_reproduce_fig1(out: Option<PathBuf>, solver: SolverArgs) -> CliResult<i32> {
    let report = reproduce_fig1(&solver.options())?;
    let trace = &report.residual_trace;
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        log::info!(
            "log10 residual {:.2} at iteration {} to {:.2} at iteration {}",
            first.log10_residual(),
            first.iter,
            last.log10_residual(),
            last.iter
        );
    }
    emit(out.as_deref(), "fig1_residuals.csv", &residual_csv(&report))?;
    if out.is_some() {
        emit(
            out.as_deref(),
            "report.json",
            &to_json(&SolveOutput::new(&five_state_example(), &report)),
        )?;
    }
    Ok(report.certificate.verdict.exit_code())
}

pub fn execute(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Solve {
            input,
            from,
            batch,
            out,
            solver,
        } => cmd_solve(input, from, batch, out, solver),
        Command::Certify { input, povm, out, tol } => cmd_certify(input, povm, out, tol),
        Command::Enumerate { input, out } => cmd_enumerate(input, out),
        Command::Audit {
            input,
            povm,
            out,
            solver,
        } => cmd_audit(input, povm, out, solver),
        Command::Generate {
            m,
            seed,
            spread,
            real,
            gram,
            out,
        } => cmd_generate(m, seed, spread, real, gram, out),
        Command::ReproduceFig1 { out, solver } => cmd_reproduce_fig1(out, solver),
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("MED_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("med: {e}");
            e.exit_code()
        }
    }
}
