//! Text formats for switched systems and certificates.
//!
//! System file:
//!
//! ```text
//! # comment
//! dim 2
//! param b = 12
//! window -3 3 -4 4
//! subsystems 2
//! subsystem 1
//! x2
//! -0.1*x1 - 2*x2
//! subsystem 2
//! x2
//! -b*x1 - 2*x2
//! ```
//!
//! `subsystem k` markers are optional; without them the expressions are
//! taken `dim` at a time. Certificate files hold `key value` lines and
//! `name = polynomial` listings for `V`, `p1..pN` and `q`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::certify::{AbsorbingSetCertificate, CertifyError, SwitchedSystem, Verdict, VerdictKind, VerificationReport};
use crate::poly::{parse_expression, parse_expression_with, PolyError, Polynomial, PolynomialVectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FileError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Poly { line: usize, source: PolyError },
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

pub fn read(path: &Path) -> Result<String, FileError> {
    std::fs::read_to_string(path).map_err(|e| FileError::Io { path: path.display().to_string(), msg: e.to_string() })
}

fn parse_err(line: usize, msg: impl Into<String>) -> FileError {
    FileError::Parse { line, msg: msg.into() }
}

/// Lines with comments stripped, numbered from 1, blank lines dropped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(k, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((k + 1, line))
    })
}

fn number(line: usize, tok: &str, what: &str) -> Result<f64, FileError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("expected a number for {}, found '{}'", what, tok)))
}

fn count(line: usize, tok: Option<&str>, what: &str) -> Result<usize, FileError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {}", what)))?;
    tok.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| parse_err(line, format!("{} must be a positive integer, found '{}'", what, tok)))
}

fn window(line: usize, rest: &str) -> Result<Vec<(f64, f64)>, FileError> {
    let vals = rest.split_whitespace().map(|t| number(line, t, "window")).collect::<Result<Vec<_>, _>>()?;
    if vals.is_empty() || vals.len() % 2 != 0 {
        return Err(parse_err(line, "window needs pairs of bounds"));
    }
    let pairs: Vec<(f64, f64)> = vals.chunks(2).map(|c| (c[0], c[1])).collect();
    if pairs.iter().any(|(a, b)| !(a < b)) {
        return Err(parse_err(line, "window bounds must satisfy lower < upper"));
    }
    Ok(pairs)
}

/// `name = value` or `name=value`.
pub fn parse_assignment(line: usize, text: &str) -> Result<(String, f64), FileError> {
    let (name, value) = text.split_once('=').ok_or_else(|| parse_err(line, format!("expected name=value, found '{}'", text)))?;
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') || name.starts_with(|c: char| c.is_ascii_digit()) {
        return Err(parse_err(line, format!("invalid parameter name '{}'", name)));
    }
    Ok((name.to_string(), number(line, value.trim(), name)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemFile {
    pub name: Option<String>,
    pub system: SwitchedSystem,
    pub params: HashMap<String, f64>,
    pub window: Option<Vec<(f64, f64)>>,
}

/// Parses a system file; `overrides` replace or add `param` values.
pub fn parse_system(text: &str, overrides: &[(String, f64)]) -> Result<SystemFile, FileError> {
    let mut dim = None;
    let mut subsystems = None;
    let mut params = HashMap::new();
    let mut win = None;
    let mut name = None;
    let mut exprs: Vec<(usize, &str)> = Vec::new();
    let mut markers: Vec<(usize, usize, usize)> = Vec::new();
    for (ln, line) in content_lines(text) {
        let (word, rest) = line.split_once(char::is_whitespace).map_or((line, ""), |(w, r)| (w, r.trim()));
        match word {
            "dim" => {
                if dim.is_some() {
                    return Err(parse_err(ln, "duplicate dim"));
                }
                dim = Some(count(ln, rest.split_whitespace().next(), "dim")?);
            }
            "subsystems" => {
                if subsystems.is_some() {
                    return Err(parse_err(ln, "duplicate subsystems"));
                }
                subsystems = Some(count(ln, rest.split_whitespace().next(), "subsystems")?);
            }
            "param" => {
                let (k, v) = parse_assignment(ln, rest)?;
                if params.insert(k.clone(), v).is_some() {
                    return Err(parse_err(ln, format!("duplicate param '{}'", k)));
                }
            }
            "window" => win = Some(window(ln, rest)?),
            "name" => name = Some(rest.to_string()),
            "subsystem" => markers.push((ln, count(ln, rest.split_whitespace().next(), "subsystem index")?, exprs.len())),
            _ => exprs.push((ln, line)),
        }
    }
    let dim = dim.ok_or_else(|| parse_err(1, "missing 'dim' line"))?;
    let n_sub = subsystems.ok_or_else(|| parse_err(1, "missing 'subsystems' line"))?;
    for (k, &(ln, idx, pos)) in markers.iter().enumerate() {
        if idx != k + 1 || pos != k * dim {
            return Err(parse_err(ln, format!("subsystem {} out of order or preceded by an incomplete block", idx)));
        }
    }
    if exprs.len() != dim * n_sub {
        let line = exprs.last().map_or(1, |e| e.0);
        return Err(parse_err(
            line,
            format!("expected {} expressions ({} subsystems of dimension {}), found {}", dim * n_sub, n_sub, dim, exprs.len()),
        ));
    }
    if let Some(w) = &win {
        if w.len() != dim {
            return Err(parse_err(1, format!("window has {} intervals for dimension {}", w.len(), dim)));
        }
    }
    for (k, v) in overrides {
        params.insert(k.clone(), *v);
    }
    let mut fields = Vec::with_capacity(n_sub);
    for block in exprs.chunks(dim) {
        let comps = block
            .iter()
            .map(|&(ln, e)| parse_expression_with(e, dim, &params).map_err(|source| FileError::Poly { line: ln, source }))
            .collect::<Result<Vec<_>, _>>()?;
        fields.push(PolynomialVectorField::new(comps).map_err(|source| FileError::Poly { line: block[0].0, source })?);
    }
    Ok(SystemFile { name, system: SwitchedSystem::new(fields)?, params, window: win })
}

pub fn verdict_label(kind: VerdictKind) -> &'static str {
    match kind {
        VerdictKind::GloballyAsymptoticallyStable => "GLOBALLY_ASYMPTOTICALLY_STABLE",
        VerdictKind::UltimatelyBounded => "ULTIMATELY_BOUNDED",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateFile {
    pub dim: usize,
    pub certificate: AbsorbingSetCertificate,
    pub verdict: Option<String>,
    pub window: Option<Vec<(f64, f64)>>,
    /// Outcome recorded by the writer, if any.
    pub recorded_pass: Option<bool>,
}

pub fn parse_certificate(text: &str) -> Result<CertificateFile, FileError> {
    let mut scalars: HashMap<&str, (usize, f64)> = HashMap::new();
    let mut dim = None;
    let mut ell = None;
    let mut verdict = None;
    let mut win = None;
    let mut recorded_pass = None;
    let mut polys: Vec<(usize, String, &str)> = Vec::new();
    for (ln, line) in content_lines(text) {
        if let Some((lhs, rhs)) = line.split_once('=') {
            let lhs = lhs.trim();
            if lhs == "V" || lhs == "q" || (lhs.starts_with('p') && lhs[1..].parse::<usize>().is_ok()) {
                polys.push((ln, lhs.to_string(), rhs.trim()));
                continue;
            }
        }
        let (word, rest) = line.split_once(char::is_whitespace).map_or((line, ""), |(w, r)| (w, r.trim()));
        match word {
            "dim" => dim = Some(count(ln, Some(rest), "dim")?),
            "ell" => ell = Some(count(ln, Some(rest), "ell")? as u32),
            "delta" | "beta" | "gamma" => {
                scalars.insert(word, (ln, number(ln, rest, word)?));
            }
            "verdict" => verdict = Some(rest.to_string()),
            "window" => win = Some(window(ln, rest)?),
            "verified" => {
                recorded_pass = Some(match rest {
                    "true" => true,
                    "false" => false,
                    _ => return Err(parse_err(ln, format!("verified must be true or false, found '{}'", rest))),
                })
            }
            "report" | "sdp" => {}
            _ => return Err(parse_err(ln, format!("unrecognized line '{}'", line))),
        }
    }
    let dim = dim.ok_or_else(|| parse_err(1, "missing 'dim' line"))?;
    let ell = ell.ok_or_else(|| parse_err(1, "missing 'ell' line"))?;
    let get = |k: &str| scalars.get(k).map(|s| s.1);
    let beta = get("beta").ok_or_else(|| parse_err(1, "missing 'beta' line"))?;
    let gamma = get("gamma").ok_or_else(|| parse_err(1, "missing 'gamma' line"))?;
    let delta = get("delta").unwrap_or(1.0);
    if beta < 0.0 || delta <= 0.0 {
        return Err(parse_err(scalars.get("beta").map_or(1, |s| s.0), "β must be non-negative and δ positive"));
    }
    let mut v = None;
    let mut q = None;
    let mut ps: Vec<(usize, Polynomial)> = Vec::new();
    for (ln, name, expr) in polys {
        let p = parse_expression(expr, dim).map_err(|source| FileError::Poly { line: ln, source })?;
        match name.as_str() {
            "V" if v.is_none() => v = Some(p),
            "q" if q.is_none() => q = Some(p),
            "V" | "q" => return Err(parse_err(ln, format!("duplicate {}", name))),
            _ => ps.push((name[1..].parse().expect("checked above"), p)),
        }
    }
    let v = v.ok_or_else(|| parse_err(1, "missing 'V = ...' line"))?;
    ps.sort_by_key(|p| p.0);
    if ps.iter().enumerate().any(|(k, p)| p.0 != k + 1) {
        return Err(parse_err(1, "multipliers must be numbered p1, p2, ... without gaps"));
    }
    Ok(CertificateFile {
        dim,
        certificate: AbsorbingSetCertificate {
            v,
            multipliers: ps.into_iter().map(|p| p.1).collect(),
            q,
            beta,
            gamma,
            delta,
            ell,
            report: None,
        },
        verdict,
        window: win,
        recorded_pass,
    })
}

pub fn report_lines(report: &VerificationReport) -> Vec<String> {
    let mut out = Vec::new();
    let pass = |b: bool| if b { "pass" } else { "fail" };
    for c in &report.identities {
        out.push(format!(
            "report identity {} residual {:.3e} scale {:.3e} {} min_eigenvalue {:.3e} trace {:.3e} {}",
            c.name,
            c.residual,
            c.scale,
            pass(c.residual_ok(report.residual_tol)),
            c.min_eigenvalue,
            c.trace,
            pass(c.psd_ok(report.psd_tol)),
        ));
    }
    out.push(format!(
        "report decrease samples {} margin {:.6e} {}",
        report.decrease_samples,
        report.decrease_margin,
        pass(report.decrease_ok())
    ));
    out.push(format!(
        "report containment samples {} margin {:.6e} violations {} {}",
        report.containment_samples,
        report.containment_margin,
        report.containment_violations,
        pass(report.containment_ok())
    ));
    out.push(format!("report outer_slack {:.6e}", report.outer_slack));
    out
}

pub fn render_certificate(
    cert: &AbsorbingSetCertificate,
    verdict: Option<&Verdict>,
    window: Option<&[(f64, f64)]>,
    comments: &[String],
) -> String {
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {}", c);
    }
    let label = verdict.map_or("UNCLASSIFIED", |v| verdict_label(v.kind));
    let _ = writeln!(s, "verdict {}", label);
    if verdict.is_some_and(|v| v.no_periodic_solutions) {
        let _ = writeln!(s, "# no periodic switched solutions");
    }
    let _ = writeln!(s, "dim {}", cert.v.dim());
    let _ = writeln!(s, "ell {}", cert.ell);
    let _ = writeln!(s, "delta {:e}", cert.delta);
    let _ = writeln!(s, "beta {:e}", cert.beta);
    let _ = writeln!(s, "gamma {:.16e}", cert.gamma);
    if let Some(w) = window {
        let parts: Vec<String> = w.iter().map(|(a, b)| format!("{} {}", a, b)).collect();
        let _ = writeln!(s, "window {}", parts.join(" "));
    }
    let _ = writeln!(s, "V = {}", cert.v);
    for (k, p) in cert.multipliers.iter().enumerate() {
        let _ = writeln!(s, "p{} = {}", k + 1, p);
    }
    if let Some(q) = &cert.q {
        let _ = writeln!(s, "q = {}", q);
    }
    if let Some(r) = &cert.report {
        let _ = writeln!(s, "verified {}", r.passed());
        for line in report_lines(r) {
            let _ = writeln!(s, "{}", line);
        }
    }
    s
}
