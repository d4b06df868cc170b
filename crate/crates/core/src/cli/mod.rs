//! `switchsos` command line: `certify`, `verify`, `simulate` and `levelset`.
//!
//! Exit codes: 0 success, 1 usage/file/parse error, 2 proven infeasible up to the degree cap,
//! 3 numerical failure, 4 verification failed or absorption violated, 5 divergence under a
//! verified certificate.

pub mod files;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::certify::{
    classify, decrease_problem, escalate, verify_certificate, BetaSpec, CertificationQuery, CertifyError, LyapunovObjective,
    SdpSize, VerifyConfig,
};
use crate::poly::even_power_norm;
use crate::sdp::{sdpa, SolverConfig};
use crate::sim::{
    absorption_entry, adversarial_switching, grid_points, integrate, random_switching, SimError, SwitchingSignal, DEFAULT_STEP,
};
use files::{parse_assignment, parse_certificate, parse_system, render_certificate, report_lines, FileError, SystemFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;
pub const EXIT_CONTRADICTION: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "switchsos", version, about = "SOS absorbing-set certificates for switched polynomial systems")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search for a Lyapunov certificate and its absorbing level set.
    Certify(CertifyArgs),
    /// Re-check a certificate file against a system file.
    Verify(VerifyArgs),
    /// Simulate switched trajectories, optionally checking absorption.
    Simulate(SimulateArgs),
    /// Sample V on a grid for contouring.
    Levelset(LevelsetArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Objective {
    Feasibility,
    MinTrace,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    system: PathBuf,
    #[arg(long, default_value_t = 1)]
    ell: u32,
    /// Required when deg(V) or the degree cap exceeds 4; defaults to 1 otherwise.
    #[arg(long)]
    delta: Option<f64>,
    /// Starting degree of V (default 2ℓ).
    #[arg(long)]
    degree: Option<u32>,
    /// Highest degree tried (default: the starting degree).
    #[arg(long)]
    degree_cap: Option<u32>,
    /// Fixed ball radius squared.
    #[arg(long, conflicts_with = "beta_max")]
    beta: Option<f64>,
    /// Search β in [0, BETA_MAX] and keep the smallest certified value.
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    beta_tol: f64,
    #[arg(long)]
    homogeneous: bool,
    #[arg(long)]
    q_degree: Option<u32>,
    #[arg(long, value_enum, default_value = "feasibility")]
    objective: Objective,
    /// Override a system parameter, `name=value`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Write the certificate here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the decrease SDP of the last attempted degree in SDPA format.
    #[arg(long)]
    dump_sdp: Option<PathBuf>,
    /// Sample count for the verification checks.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Parallel Schur assembly in the SDP solver.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    system: PathBuf,
    certificate: PathBuf,
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    system: PathBuf,
    /// Number of random switching signals.
    #[arg(long, default_value_t = 20)]
    signals: usize,
    /// Add the greedy signal maximizing dV/dt (V from the certificate, else |x|²).
    #[arg(long)]
    adversarial: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Initial points per axis over the window.
    #[arg(long, default_value_t = 10)]
    x0_grid: usize,
    /// Explicit initial point `a,b,...`; repeatable, replaces the grid.
    #[arg(long, allow_hyphen_values = true, value_name = "X1,X2,..")]
    x0: Vec<String>,
    /// `lo:hi,lo:hi,..` (default: the system file's window).
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    /// Mean dwell time of the random signals.
    #[arg(long, default_value_t = 0.5)]
    dwell: f64,
    #[arg(long)]
    certificate: Option<PathBuf>,
    /// Directory for per-trajectory CSVs and summary.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
}

#[derive(Debug, Args)]
struct LevelsetArgs {
    certificate: PathBuf,
    /// `lo:hi,lo:hi,..` for every coordinate, or for the sliced pair.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Two 1-based coordinates `i,j` to grid; the others are held at zero.
    #[arg(long)]
    slice: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, msg: msg.into() }
    }
}

impl From<FileError> for Failure {
    fn from(e: FileError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<CertifyError> for Failure {
    fn from(e: CertifyError) -> Self {
        let code = match &e {
            CertifyError::InfeasibleAtCap { .. } | CertifyError::Infeasible(_) | CertifyError::BetaMaxInfeasible(_) => {
                EXIT_INFEASIBLE
            }
            CertifyError::NumericalFailure(_) | CertifyError::Sdp(_) => EXIT_NUMERICAL,
            CertifyError::VerificationFailed(_) | CertifyError::Unverified => EXIT_VERIFICATION,
            _ => EXIT_USAGE,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::CertificateContradiction { .. } => EXIT_CONTRADICTION,
            _ => EXIT_USAGE,
        };
        Failure { code, msg: e.to_string() }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "error",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {}", e);
        }
    }
    let result = match cli.command {
        Command::Certify(a) => cmd_certify(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Levelset(a) => cmd_levelset(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn load_system(path: &Path, params: &[String]) -> Result<SystemFile, Failure> {
    let overrides = params
        .iter()
        .map(|p| parse_assignment(0, p).map_err(|_| Failure::usage(format!("--param expects name=value, got '{}'", p))))
        .collect::<Result<Vec<_>, _>>()?;
    let text = files::read(path)?;
    parse_system(&text, &overrides).map_err(|e| Failure::usage(format!("{}: {}", path.display(), e)))
}

fn load_certificate(path: &Path) -> Result<files::CertificateFile, Failure> {
    let text = files::read(path)?;
    parse_certificate(&text).map_err(|e| Failure::usage(format!("{}: {}", path.display(), e)))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {}", p.display(), e))),
        None => {
            io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn size_text(size: &SdpSize) -> String {
    format!(
        "{} equalities, {} decision variables ({} full), {} blocks",
        size.equalities, size.decision_variables, size.full_variables, size.blocks
    )
}

fn cmd_certify(a: CertifyArgs) -> Result<i32, Failure> {
    let file = load_system(&a.system, &a.params)?;
    let degree = a.degree.unwrap_or(2 * a.ell);
    let cap = a.degree_cap.unwrap_or(degree);
    if cap < degree {
        return Err(Failure::usage(format!("--degree-cap {} is below the starting degree {}", cap, degree)));
    }
    let delta = match a.delta {
        Some(d) => d,
        None if cap > 4 => return Err(Failure::usage("--delta is required when deg(V) can exceed 4")),
        None => 1.0,
    };
    let beta = match (a.beta, a.beta_max) {
        (_, Some(b)) => BetaSpec::Interval(b),
        (Some(b), None) => BetaSpec::Fixed(b),
        (None, None) => BetaSpec::Fixed(0.0),
    };
    let beta_top = match beta {
        BetaSpec::Fixed(b) | BetaSpec::Interval(b) => b,
    };
    let query = CertificationQuery {
        ell: a.ell,
        delta,
        degree,
        beta,
        homogeneous: a.homogeneous,
        q_degree: a.q_degree,
        objective: match a.objective {
            Objective::Feasibility => LyapunovObjective::Feasibility,
            Objective::MinTrace => LyapunovObjective::MinTrace,
        },
        beta_tol: a.beta_tol,
        degree_cap: cap,
        solver: SolverConfig { parallel: a.parallel, ..SolverConfig::default() },
        samples: a.samples,
        seed: a.seed,
    };
    let system = &file.system;
    let result = escalate(system, &query);
    if let Some(path) = &a.dump_sdp {
        let last = match &result {
            Ok(r) => CertificationQuery { beta: BetaSpec::Fixed(r.certificate.beta), ..query.with_degree(r.degree) },
            Err(_) => CertificationQuery { beta: BetaSpec::Fixed(beta_top), ..query.with_degree(cap) },
        };
        let problem = decrease_problem(system, &last)?;
        sdpa::write_file(&problem, path).map_err(|e| Failure::usage(format!("{}: {}", path.display(), e)))?;
    }
    let result = match result {
        Ok(r) => r,
        Err(CertifyError::InfeasibleAtCap { cap, attempts }) => {
            let mut out = String::new();
            for at in &attempts {
                let _ = writeln!(out, "deg V = {}, beta = {}: infeasible; SDP {}", at.degree, at.beta, size_text(&at.size));
            }
            emit(None, &out)?;
            return Err(Failure { code: EXIT_INFEASIBLE, msg: format!("no certificate up to degree {}", cap) });
        }
        Err(e) => return Err(e.into()),
    };
    let verdict = classify(system, &result.certificate)?;
    let mut comments = vec![format!("system {}", a.system.display())];
    for at in &result.attempts {
        comments.push(format!(
            "sdp deg V = {}, beta = {}: {}; {}",
            at.degree,
            at.beta,
            if at.feasible { "feasible" } else { "infeasible" },
            size_text(&at.size)
        ));
    }
    if let Some(t) = &result.tighten {
        let probes: Vec<String> = t
            .probes
            .iter()
            .map(|p| format!("{}:{}", p.beta, match p.feasible {
                Some(true) => "ok",
                Some(false) => "no",
                None => "fail",
            }))
            .collect();
        comments.push(format!("beta search {}", probes.join(" ")));
    }
    comments.push(format!("sdp level set: {}", size_text(&result.level_size)));
    comments.push(format!(
        "lyapunov margin {:.3e}{}, max residual {:.3e}",
        result.lyapunov.margin,
        if result.lyapunov.marginal { " (marginal)" } else { "" },
        result.lyapunov.max_residual
    ));
    let window = file.window.as_deref();
    let text = render_certificate(&result.certificate, Some(&verdict), window, &comments);
    match &a.out {
        Some(p) => {
            emit(Some(p), &text)?;
            let mut summary = String::new();
            for c in &comments[1..] {
                let _ = writeln!(summary, "{}", c);
            }
            let _ = writeln!(summary, "verdict {}", files::verdict_label(verdict.kind));
            let _ = writeln!(summary, "deg V = {}, beta = {}, gamma = {:.10e}", result.degree, result.certificate.beta, result.certificate.gamma);
            emit(None, &summary)?;
        }
        None => emit(None, &text)?,
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs) -> Result<i32, Failure> {
    let file = load_system(&a.system, &a.params)?;
    let cert = load_certificate(&a.certificate)?;
    if cert.dim != file.system.dim() || cert.certificate.v.dim() != file.system.dim() {
        return Err(Failure::usage(format!(
            "certificate dimension {} does not match system dimension {}",
            cert.dim,
            file.system.dim()
        )));
    }
    let config = VerifyConfig { samples: a.samples, seed: a.seed, ..VerifyConfig::default() };
    let report = verify_certificate(&file.system, &cert.certificate, &config)?;
    let mut out = String::new();
    for line in report_lines(&report) {
        let _ = writeln!(out, "{}", line);
    }
    let code = match report.failing_check() {
        None => {
            let _ = writeln!(out, "verification passed");
            EXIT_OK
        }
        Some(check) => {
            let _ = writeln!(out, "verification failed: {}", check);
            EXIT_VERIFICATION
        }
    };
    emit(None, &out)?;
    Ok(code)
}

fn parse_window(text: &str) -> Result<Vec<(f64, f64)>, Failure> {
    text.split(',')
        .map(|part| {
            let bad = || Failure::usage(format!("window interval '{}' is not lo:hi with lo < hi", part));
            let (lo, hi) = part.split_once(':').ok_or_else(bad)?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            if lo < hi && lo.is_finite() && hi.is_finite() {
                Ok((lo, hi))
            } else {
                Err(bad())
            }
        })
        .collect()
}

fn parse_point(text: &str, dim: usize) -> Result<Vec<f64>, Failure> {
    let p: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| Failure::usage(format!("initial point '{}' is not a comma-separated list of numbers", text)))?;
    if p.len() != dim {
        return Err(Failure::usage(format!("initial point '{}' has {} coordinates, expected {}", text, p.len(), dim)));
    }
    Ok(p)
}

fn num(v: f64) -> String {
    format!("{:.16e}", v)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn cmd_simulate(a: SimulateArgs) -> Result<i32, Failure> {
    let file = load_system(&a.system, &a.params)?;
    let system = &file.system;
    let n = system.dim();
    let starts: Vec<Vec<f64>> = if a.x0.is_empty() {
        let window = match &a.window {
            Some(w) => parse_window(w)?,
            None => file.window.clone().ok_or_else(|| Failure::usage("no --window given and the system file has none"))?,
        };
        if window.len() != n {
            return Err(Failure::usage(format!("window has {} intervals for dimension {}", window.len(), n)));
        }
        if a.x0_grid == 0 {
            return Err(Failure::usage("--x0-grid must be positive"));
        }
        let lo: Vec<f64> = window.iter().map(|w| w.0).collect();
        let hi: Vec<f64> = window.iter().map(|w| w.1).collect();
        grid_points(&lo, &hi, a.x0_grid)
    } else {
        a.x0.iter().map(|p| parse_point(p, n)).collect::<Result<_, _>>()?
    };
    let header_x: Vec<String> = (1..=n).map(|j| format!("x{}", j)).collect();
    if a.signals == 0 && !a.adversarial {
        let mut out = header_x.join(",") + "\n";
        for p in &starts {
            let row: Vec<String> = p.iter().map(|v| num(*v)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        emit(None, &out)?;
        return Ok(EXIT_OK);
    }
    let certificate = match &a.certificate {
        Some(path) => {
            let mut c = load_certificate(path)?;
            if c.dim != n {
                return Err(Failure::usage(format!("certificate dimension {} does not match system dimension {}", c.dim, n)));
            }
            let report = verify_certificate(system, &c.certificate, &VerifyConfig::default())?;
            if let Some(check) = report.failing_check() {
                return Err(Failure { code: EXIT_VERIFICATION, msg: format!("certificate fails the {} check", check) });
            }
            c.certificate.report = Some(report);
            Some(c.certificate)
        }
        None => None,
    };
    let signals: Vec<SwitchingSignal> = (0..a.signals)
        .map(|k| random_switching(system.len(), a.horizon, a.dwell, a.seed.wrapping_add(k as u64)))
        .collect::<Result<_, _>>()?;
    let v_adv = certificate.as_ref().map_or_else(|| even_power_norm(n, 1), |c| c.v.clone());
    let n_sig = signals.len() + usize::from(a.adversarial);
    let pairs: Vec<(usize, usize)> = (0..starts.len()).flat_map(|s| (0..n_sig).map(move |g| (s, g))).collect();
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {}", dir.display(), e)))?;
    }
    let rows: Vec<Result<(String, bool), Failure>> = pairs
        .par_iter()
        .map(|&(s, g)| {
            let x0 = &starts[s];
            let signal = if g < signals.len() {
                signals[g].clone()
            } else {
                adversarial_switching(system, &v_adv, x0, a.step, a.horizon)?
            };
            let traj = integrate(system, &signal, x0, a.step, a.horizon)?;
            if let Some(dir) = &a.out_dir {
                let path = dir.join(format!("traj_{:04}_{:03}.csv", s, g));
                let mut buf = Vec::new();
                traj.write_csv(&mut buf)?;
                fs::write(&path, buf).map_err(|e| Failure::usage(format!("{}: {}", path.display(), e)))?;
            }
            let label = if g < signals.len() { format!("random{}", g) } else { "adversarial".into() };
            let max_norm = traj.states.iter().map(|x| norm(x)).fold(0.0, f64::max);
            let mut row = format!("{},{}", s, label);
            for v in x0 {
                row.push(',');
                row.push_str(&num(*v));
            }
            let _ = write!(
                row,
                ",{},{},{},{}",
                num(norm(traj.final_state())),
                num(max_norm),
                signal.switch_count(),
                traj.diverged_at.map_or(String::new(), num)
            );
            if let Some(cert) = &certificate {
                if let Some(time) = traj.diverged_at {
                    return Err(SimError::CertificateContradiction { x0: x0.clone(), time }.into());
                }
                let e = absorption_entry(&traj, &cert.v, cert.gamma, s, g);
                let _ = write!(
                    row,
                    ",{},{},{}",
                    e.first_entry.map_or(String::new(), num),
                    if e.first_entry.is_some() { num(e.post_entry_excess) } else { String::new() },
                    e.violation
                );
                return Ok((row, e.violation));
            }
            Ok((row, false))
        })
        .collect();
    let mut summary = format!("start,signal,{},final_norm,max_norm,switches,diverged_at", header_x.iter().map(|x| format!("{}_0", x)).collect::<Vec<_>>().join(","));
    if certificate.is_some() {
        summary.push_str(",first_entry,post_entry_excess,violation");
    }
    summary.push('\n');
    let mut violations = 0;
    for r in rows {
        let (row, violation) = r?;
        violations += usize::from(violation);
        summary.push_str(&row);
        summary.push('\n');
    }
    if let Some(dir) = &a.out_dir {
        let path = dir.join("summary.csv");
        fs::write(&path, &summary).map_err(|e| Failure::usage(format!("{}: {}", path.display(), e)))?;
    }
    emit(None, &summary)?;
    if violations > 0 {
        return Err(Failure { code: EXIT_VERIFICATION, msg: format!("{} trajectories left the absorbing set after entry", violations) });
    }
    Ok(EXIT_OK)
}

fn cmd_levelset(a: LevelsetArgs) -> Result<i32, Failure> {
    let cert = load_certificate(&a.certificate)?;
    let n = cert.dim;
    let axes: Vec<usize> = match &a.slice {
        Some(s) => {
            let idx: Vec<usize> = s
                .split(',')
                .map(|t| t.trim().parse::<usize>().ok().filter(|&i| i >= 1 && i <= n))
                .collect::<Option<_>>()
                .ok_or_else(|| Failure::usage(format!("--slice expects two coordinates in 1..{}, got '{}'", n, s)))?;
            if idx.len() != 2 || idx[0] == idx[1] {
                return Err(Failure::usage("--slice expects two distinct coordinates"));
            }
            idx.into_iter().map(|i| i - 1).collect()
        }
        None if n > 3 => return Err(Failure::usage(format!("dimension {} needs --slice i,j", n))),
        None => (0..n).collect(),
    };
    let window = match &a.window {
        Some(w) => parse_window(w)?,
        None => cert.window.clone().ok_or_else(|| Failure::usage("no --window given and the certificate has none"))?,
    };
    let box_: Vec<(f64, f64)> = if window.len() == axes.len() {
        window
    } else if window.len() == n {
        axes.iter().map(|&j| window[j]).collect()
    } else {
        return Err(Failure::usage(format!("window has {} intervals, expected {} or {}", window.len(), axes.len(), n)));
    };
    if a.resolution == 0 {
        return Err(Failure::usage("--resolution must be positive"));
    }
    let lo: Vec<f64> = box_.iter().map(|w| w.0).collect();
    let hi: Vec<f64> = box_.iter().map(|w| w.1).collect();
    let v = &cert.certificate.v;
    let mut out = (1..=n).map(|j| format!("x{}", j)).collect::<Vec<_>>().join(",") + ",V\n";
    let mut x = vec![0.0; n];
    for p in grid_points(&lo, &hi, a.resolution) {
        for (&j, &c) in axes.iter().zip(&p) {
            x[j] = c;
        }
        for c in &x {
            out.push_str(&num(*c));
            out.push(',');
        }
        out.push_str(&num(v.eval_unchecked(&x)));
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)?;
    Ok(EXIT_OK)
}
