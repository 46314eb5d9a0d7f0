mod angle;
mod output;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use seqbell::bell::{beta_of_theta, mu_of_theta, quantum_max, BellParams};
use seqbell::lab::{self, ConjectureOptions, Method};
use seqbell::npa::{
    bell_max_problem, bell_max_solution, build_basis, build_guessing_sdp, npa_options, BellExpr,
    GuessingMode, Scenario, MAX_LEVEL,
};
use seqbell::par::Exec;
use seqbell::sdp::{self, SdpProblem, SolverOptions};

use angle::parse_angle;
use output::{emit, write_atomic};

const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "seqbell",
    version,
    about = "Sequential Bell tests and certified randomness"
)]
struct Cli {
    /// More log output on stderr (repeat for debug and solver trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tilted-inequality parameters matched to a state angle.
    StateInfo {
        #[arg(long, value_parser = parse_angle)]
        theta: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a measurement sequence and write its branch tree and report.
    Simulate {
        #[arg(long, value_parser = parse_angle)]
        theta: f64,
        /// Comma-separated measurement strengths, one per step.
        #[arg(long, required = true, value_delimiter = ',', value_parser = parse_angle)]
        xis: Vec<f64>,
        /// Directory for tree.json, report.json and distribution.csv.
        /// Without it the report goes to stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Certified randomness of one step.
    Certify {
        #[arg(long, value_parser = parse_angle)]
        theta: f64,
        #[arg(long, value_parser = parse_angle)]
        xi: f64,
        #[command(flatten)]
        method: MethodArgs,
        /// Also write the guessing SDP in SDPA sparse format.
        #[arg(long)]
        export_sdp: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Certified bits over a grid of measurement strengths.
    Sweep {
        #[arg(long, value_parser = parse_angle)]
        theta: f64,
        #[command(flatten)]
        method: MethodArgs,
        /// `table` for 44 points spaced (π/4)/59, or `start:stop:count`.
        #[arg(long, default_value = "table", value_parser = parse_grid)]
        grid: Grid,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Smallest strength at which certified randomness vanishes.
    Threshold {
        #[arg(long, value_parser = parse_angle)]
        theta: f64,
        #[command(flatten)]
        method: MethodArgs,
        /// Scan spacing before bisection.
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Search for violations of the conjectured two-outcome bound.
    Conjecture {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// NPA upper bound on a tilted Bell expression.
    NpaBell {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 2)]
        level: usize,
        /// Also write the SDP in SDPA sparse format.
        #[arg(long)]
        export_sdp: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Solve an SDP given in SDPA sparse format.
    SdpSolve {
        file: PathBuf,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args, Debug, Clone)]
struct MethodArgs {
    /// `analytic`, `npa` or `npa-<level>`.
    #[arg(long, default_value = "analytic")]
    method: String,
    /// Relaxation level for `npa`.
    #[arg(long)]
    level: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Compute(anyhow::Error),
}

impl From<seqbell::Error> for Failure {
    fn from(e: seqbell::Error) -> Self {
        match e {
            seqbell::Error::Domain(_) | seqbell::Error::Parse(_) | seqbell::Error::Capacity(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Compute(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Compute(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Compute(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    if s == "table" {
        return Ok(Grid(lab::table_grid()));
    }
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!(
            "grid must be `table` or start:stop:count, got {s:?}"
        ));
    }
    let start = parse_angle(parts[0])?;
    let stop = parse_angle(parts[1])?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| format!("bad point count {:?}", parts[2]))?;
    match count {
        0 => Err("grid needs at least one point".into()),
        1 => Ok(Grid(vec![start])),
        _ => Ok(Grid(
            (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect(),
        )),
    }
}

impl MethodArgs {
    fn resolve(self) -> Result<Method, Failure> {
        let m: Method = self.method.parse()?;
        let m = match (m, self.level) {
            (Method::Analytic, Some(_)) => return Err(usage("--level needs --method npa")),
            (Method::Npa(_), Some(l)) if self.method == "npa" => Method::Npa(l),
            (Method::Npa(l), Some(k)) if l != k => {
                return Err(usage(format!(
                    "--method npa-{l} conflicts with --level {k}"
                )))
            }
            (m, _) => m,
        };
        if let Method::Npa(l) = m {
            if !(1..=MAX_LEVEL).contains(&l) {
                return Err(usage(format!("level must be in 1..={MAX_LEVEL}, got {l}")));
            }
        }
        Ok(m)
    }
}

fn check_state_angle(theta: f64) -> CmdResult {
    if !(0.0..=FRAC_PI_4).contains(&theta) {
        return Err(usage(format!("--theta must lie in [0, π/4], got {theta}")));
    }
    Ok(())
}

fn check_strength(xi: f64) -> CmdResult {
    if !(0.0..=FRAC_PI_4).contains(&xi) {
        return Err(usage(format!("strength must lie in [0, π/4], got {xi}")));
    }
    Ok(())
}

fn json_bytes(v: &impl serde::Serialize) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn state_info(theta: f64, format: Format) -> CmdResult {
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return Err(usage(format!("--theta must lie in (0, π/2), got {theta}")));
    }
    let beta = beta_of_theta(theta)?;
    let mu = mu_of_theta(theta);
    let i_max = quantum_max(&BellParams::for_state(theta)?);
    let bytes = match format {
        Format::Text => format!("beta {beta:.6}\nmu {mu:.6}\ni_max {i_max:.6}\n").into_bytes(),
        Format::Json => {
            json_bytes(&json!({"theta": theta, "beta": beta, "mu": mu, "i_max": i_max}))?
        }
        Format::Csv => return Err(usage("state-info supports text or json")),
    };
    emit(None, &bytes)?;
    Ok(())
}

fn simulate(theta: f64, xis: &[f64], out_dir: Option<&Path>, exec: Exec) -> CmdResult {
    check_state_angle(theta)?;
    if xis.is_empty() {
        return Err(usage("--xis needs at least one strength"));
    }
    for &xi in xis {
        check_strength(xi)?;
    }
    let (tree, seq, report) = lab::sequence_report(theta, xis, exec)?;
    let report_bytes = json_bytes(&report)?;
    match out_dir {
        None => emit(None, &report_bytes)?,
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_atomic(&dir.join("tree.json"), &json_bytes(&tree.to_json())?)?;
            let mut csv = Vec::new();
            seq.write_csv(&mut csv)?;
            write_atomic(&dir.join("distribution.csv"), &csv)?;
            write_atomic(&dir.join("report.json"), &report_bytes)?;
            info!("wrote {}", dir.display());
            let mut summary = String::new();
            for s in &report.steps {
                let _ = writeln!(
                    summary,
                    "step {} theta {:.6} bits {:.6}",
                    s.step, s.theta, s.bits
                );
            }
            let _ = writeln!(summary, "certificate {:.6}", report.certificate_bits);
            let _ = writeln!(summary, "alice_settings {}", report.alice_settings.len());
            emit(None, summary.as_bytes())?;
        }
    }
    Ok(())
}

fn certify(
    theta: f64,
    xi: f64,
    method: Method,
    export_sdp: Option<&Path>,
    format: Format,
) -> CmdResult {
    check_state_angle(theta)?;
    check_strength(xi)?;
    let behavior = lab::step_behavior(theta, xi)?;
    if let Some(path) = export_sdp {
        let Method::Npa(level) = method else {
            return Err(usage("--export-sdp needs --method npa"));
        };
        let basis = build_basis(Scenario::two_by_two(), level)?;
        let sdp = build_guessing_sdp(&behavior, 1, &basis, &GuessingMode::FullStatistics)?;
        let mut buf = Vec::new();
        sdp.write_sdpa(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    let c = lab::certify(&behavior, theta, method)?;
    let bytes = match format {
        Format::Text => format!(
            "method {method}\ng_upper {:.6}\nbits {:.6}\n",
            c.g_upper, c.bits
        )
        .into_bytes(),
        Format::Json => json_bytes(&json!({
            "theta": theta,
            "xi": xi,
            "method": method.to_string(),
            "g_upper": c.g_upper,
            "bits": c.bits,
        }))?,
        Format::Csv => return Err(usage("certify supports text or json")),
    };
    emit(None, &bytes)?;
    Ok(())
}

fn sweep(
    theta: f64,
    method: Method,
    grid: &[f64],
    out: Option<&Path>,
    format: Format,
    exec: Exec,
) -> CmdResult {
    check_state_angle(theta)?;
    let rows = lab::sweep_xi(theta, grid, method, exec)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let bytes = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            lab::write_sweep_csv(&rows, &mut buf)?;
            buf
        }
        Format::Json => json_bytes(&rows)?,
        Format::Text => return Err(usage("sweep supports csv or json")),
    };
    emit(out, &bytes)?;
    if failed > 0 {
        return Err(Failure::Compute(anyhow::anyhow!(
            "{failed} of {} points failed",
            rows.len()
        )));
    }
    Ok(())
}

fn threshold(theta: f64, method: Method, resolution: f64, format: Format, exec: Exec) -> CmdResult {
    check_state_angle(theta)?;
    let xi = lab::threshold_xi(theta, method, resolution, exec).map_err(|e| match e {
        seqbell::Error::NotFound(_) => Failure::Compute(e.into()),
        e => e.into(),
    })?;
    let bytes = match format {
        Format::Text => format!("threshold_xi {xi:.6}\n").into_bytes(),
        Format::Json => json_bytes(&json!({
            "theta": theta,
            "method": method.to_string(),
            "threshold_xi": xi,
        }))?,
        Format::Csv => return Err(usage("threshold supports text or json")),
    };
    emit(None, &bytes)?;
    Ok(())
}

fn conjecture(
    alpha: f64,
    beta: f64,
    restarts: usize,
    samples: usize,
    seed: u64,
    out: Option<&Path>,
    exec: Exec,
) -> CmdResult {
    let p = BellParams::new(alpha, beta)?;
    if restarts == 0 {
        return Err(usage("--restarts must be positive"));
    }
    let report = lab::conjecture_search_with(
        &p,
        &ConjectureOptions {
            restarts,
            samples,
            seed,
            exec,
            ..ConjectureOptions::default()
        },
    )?;
    emit(out, &json_bytes(&report)?)?;
    Ok(())
}

fn npa_bell(
    alpha: f64,
    beta: f64,
    level: usize,
    export_sdp: Option<&Path>,
    format: Format,
) -> CmdResult {
    let p = BellParams::new(alpha, beta)?;
    if !(1..=MAX_LEVEL).contains(&level) {
        return Err(usage(format!(
            "level must be in 1..={MAX_LEVEL}, got {level}"
        )));
    }
    let basis = build_basis(Scenario::two_by_two(), level)?;
    let expr = BellExpr::tilted(&p);
    if let Some(path) = export_sdp {
        let mut buf = Vec::new();
        bell_max_problem(&expr, &basis)?.write_sdpa(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    let sol = bell_max_solution(&expr, &basis, &npa_options())?;
    let bytes = match format {
        Format::Text => format!(
            "npa_bound {:.6}\nquantum_max {:.6}\nclassical_bound {:.6}\n",
            sol.dual_objective,
            quantum_max(&p),
            seqbell::bell::classical_bound(&p)
        )
        .into_bytes(),
        Format::Json => json_bytes(&json!({
            "alpha": alpha,
            "beta": beta,
            "level": level,
            "npa_bound": sol.dual_objective,
            "quantum_max": quantum_max(&p),
            "classical_bound": seqbell::bell::classical_bound(&p),
            "iterations": sol.iterations,
        }))?,
        Format::Csv => return Err(usage("npa-bell supports text or json")),
    };
    emit(None, &bytes)?;
    Ok(())
}

fn sdp_solve(file: &Path, tol: f64, format: Format) -> CmdResult {
    if tol.is_nan() || tol <= 0.0 {
        return Err(usage("--tol must be positive"));
    }
    let f = fs::File::open(file).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    let problem = SdpProblem::read_sdpa(BufReader::new(f))?;
    let sol = sdp::solve(
        &problem,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )?;
    let bytes = match format {
        Format::Text => format!(
            "status {:?}\niterations {}\nprimal_objective {:.9}\ndual_objective {:.9}\nprimal_res {:.3e}\ndual_res {:.3e}\ngap {:.3e}\n",
            sol.status,
            sol.iterations,
            sol.primal_objective,
            sol.dual_objective,
            sol.primal_res(),
            sol.dual_res(),
            sol.gap()
        )
        .into_bytes(),
        Format::Json => json_bytes(&json!({
            "status": sol.status,
            "iterations": sol.iterations,
            "primal_objective": sol.primal_objective,
            "dual_objective": sol.dual_objective,
            "residuals": sol.residuals,
        }))?,
        Format::Csv => return Err(usage("sdp-solve supports text or json")),
    };
    emit(None, &bytes)?;
    sol.require_optimal()?;
    Ok(())
}

fn init_threads() -> CmdResult {
    let Ok(v) = std::env::var("SEQBELL_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        usage(format!(
            "SEQBELL_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Compute(e.into()))
}

fn run(cli: Cli) -> CmdResult {
    init_threads()?;
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::available()
    };
    match cli.command {
        Command::StateInfo { theta, format } => state_info(theta, format),
        Command::Simulate {
            theta,
            xis,
            out_dir,
        } => simulate(theta, &xis, out_dir.as_deref(), exec),
        Command::Certify {
            theta,
            xi,
            method,
            export_sdp,
            format,
        } => certify(theta, xi, method.resolve()?, export_sdp.as_deref(), format),
        Command::Sweep {
            theta,
            method,
            grid,
            out,
            format,
        } => sweep(
            theta,
            method.resolve()?,
            &grid.0,
            out.as_deref(),
            format,
            exec,
        ),
        Command::Threshold {
            theta,
            method,
            resolution,
            format,
        } => threshold(theta, method.resolve()?, resolution, format, exec),
        Command::Conjecture {
            alpha,
            beta,
            restarts,
            samples,
            seed,
            out,
        } => conjecture(alpha, beta, restarts, samples, seed, out.as_deref(), exec),
        Command::NpaBell {
            alpha,
            beta,
            level,
            export_sdp,
            format,
        } => npa_bell(alpha, beta, level, export_sdp.as_deref(), format),
        Command::SdpSolve { file, tol, format } => sdp_solve(&file, tol, format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("Usage: seqbell <COMMAND> [OPTIONS]; see `seqbell --help`");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
