//! Absorbing-set certificates for switched polynomial systems.
//!
//! A certificate is a Lyapunov function `V = S + δ‖x‖_{2ℓ}^{2ℓ}` with `S` SOS,
//! SOS multipliers `p_i` such that
//! `-∇V·f_i - p_i(‖x‖² - β) - δ‖x‖_{2ℓ}^{2ℓ}` is SOS for every subsystem, and
//! a level `γ` with SOS `q` such that `-(V - γ) + q(‖x‖² - β)` is SOS. Then
//! `{V ≤ γ}` is absorbing under arbitrary switching.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::poly::{even_power_norm, lie_derivative, PolyError, Polynomial, PolynomialVectorField};
use crate::sdp::{self, SdpError, SdpProblem, SdpStatus, SolverConfig};
use crate::sosprog::{
    self, decode, encode, identity_residuals, monomial_basis, Action, GramBasis, Objective, SosError, SosIdentity,
    SosProgram, UnknownRole,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("subsystem {0} does not vanish at the origin")]
    NoCommonEquilibrium(usize),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("no certificate up to degree {cap}")]
    InfeasibleAtCap { cap: u32, attempts: Vec<DegreeAttempt> },
    #[error("the upper end β = {0} of the search interval is infeasible")]
    BetaMaxInfeasible(f64),
    #[error("certificate rejected: {0}")]
    VerificationFailed(String),
    #[error("certificate has not passed verification")]
    Unverified,
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    dim: usize,
    subsystems: Vec<PolynomialVectorField>,
    linear: Vec<bool>,
}

impl SwitchedSystem {
    pub fn new(subsystems: Vec<PolynomialVectorField>) -> Result<Self, CertifyError> {
        let first = subsystems.first().ok_or_else(|| CertifyError::InvalidQuery("no subsystems".into()))?;
        let dim = first.dim();
        if let Some(f) = subsystems.iter().find(|f| f.dim() != dim) {
            return Err(CertifyError::DimensionMismatch { expected: dim, found: f.dim() });
        }
        let linear = subsystems.iter().map(PolynomialVectorField::is_linear).collect();
        Ok(SwitchedSystem { dim, subsystems, linear })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[PolynomialVectorField] {
        &self.subsystems
    }

    pub fn is_linear(&self, i: usize) -> bool {
        self.linear[i]
    }

    pub fn all_linear(&self) -> bool {
        self.linear.iter().all(|&l| l)
    }

    /// First subsystem with `f_i(0) != 0`.
    pub fn origin_violation(&self) -> Option<usize> {
        let zero = vec![0.0; self.dim];
        self.subsystems.iter().position(|f| f.evaluate(&zero).map(|v| v.iter().any(|c| *c != 0.0)).unwrap_or(true))
    }

    pub fn linear_matrices(&self) -> Option<Vec<DMatrix<f64>>> {
        self.subsystems
            .iter()
            .map(|f| {
                let rows = f.linear_matrix()?;
                Some(DMatrix::from_fn(self.dim, self.dim, |i, j| rows[i][j]))
            })
            .collect()
    }

    /// `max_i ∇V(x)·f_i(x)` and the first maximizing index.
    pub fn max_lie(&self, grad: &[Polynomial], x: &[f64]) -> (f64, usize) {
        let g: Vec<f64> = grad.iter().map(|p| p.eval_unchecked(x)).collect();
        let mut best = (f64::NEG_INFINITY, 0);
        let mut fx = vec![0.0; self.dim];
        for (i, f) in self.subsystems.iter().enumerate() {
            f.eval_into(x, &mut fx);
            let v: f64 = g.iter().zip(&fx).map(|(a, b)| a * b).sum();
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSpec {
    Fixed(f64),
    /// Search `[0, max]`.
    Interval(f64),
}

/// What the Lyapunov search optimizes among feasible certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovObjective {
    Feasibility,
    /// Minimize the trace of the Gram matrix of `S`.
    MinTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationQuery {
    pub ell: u32,
    pub delta: f64,
    /// Degree of `V`; the starting degree for [`escalate`].
    pub degree: u32,
    pub beta: BetaSpec,
    /// Forces the homogeneous basis for `S`; only valid when `degree == 2ℓ`, where it is automatic anyway.
    pub homogeneous: bool,
    /// Degree of `q`; `max(0, deg V - 2)` when absent.
    pub q_degree: Option<u32>,
    pub objective: LyapunovObjective,
    pub beta_tol: f64,
    pub degree_cap: u32,
    pub solver: SolverConfig,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CertificationQuery {
    fn default() -> Self {
        CertificationQuery {
            ell: 1,
            delta: 1.0,
            degree: 2,
            beta: BetaSpec::Fixed(0.0),
            homogeneous: false,
            q_degree: None,
            objective: LyapunovObjective::Feasibility,
            beta_tol: 0.05,
            degree_cap: 12,
            solver: SolverConfig::default(),
            samples: 2000,
            seed: 1,
        }
    }
}

impl CertificationQuery {
    pub fn new(ell: u32, delta: f64, degree: u32, beta: f64) -> Self {
        CertificationQuery { ell, delta, degree, beta: BetaSpec::Fixed(beta), ..Default::default() }
    }

    fn validate(&self) -> Result<(), CertifyError> {
        if self.ell == 0 {
            return Err(CertifyError::InvalidQuery("ℓ must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(CertifyError::InvalidQuery("δ must be positive".into()));
        }
        if !self.degree.is_multiple_of(2) || self.degree < 2 * self.ell {
            return Err(CertifyError::InvalidQuery(format!(
                "deg(V) = {} must be even and at least 2ℓ = {}",
                self.degree,
                2 * self.ell
            )));
        }
        if self.homogeneous && self.degree != 2 * self.ell {
            return Err(CertifyError::InvalidQuery("a homogeneous V requires deg(V) = 2ℓ".into()));
        }
        let b = match self.beta {
            BetaSpec::Fixed(b) | BetaSpec::Interval(b) => b,
        };
        if !(b >= 0.0 && b.is_finite()) {
            return Err(CertifyError::InvalidQuery("β must be non-negative".into()));
        }
        if self.beta_tol <= 0.0 {
            return Err(CertifyError::InvalidQuery("β tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Same query at another degree of `V`.
    pub fn with_degree(&self, degree: u32) -> Self {
        CertificationQuery { degree, homogeneous: self.homogeneous && degree == 2 * self.ell, ..self.clone() }
    }
}

/// SDP size in the two usual counting conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SdpSize {
    pub equalities: usize,
    /// Gram entries counted once per symmetric pair, plus free scalars.
    pub decision_variables: usize,
    /// Gram entries counted as full squares, plus free scalars.
    pub full_variables: usize,
    pub blocks: usize,
}

impl SdpSize {
    pub fn of(problem: &SdpProblem) -> SdpSize {
        SdpSize {
            equalities: problem.constraint_count(),
            decision_variables: problem.decision_variable_count(),
            full_variables: problem.full_variable_count(),
            blocks: problem.blocks.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub v: Polynomial,
    pub s: Polynomial,
    pub multipliers: Vec<Polynomial>,
    pub beta: f64,
    pub size: SdpSize,
    /// `min λ_min - psd_tol` over all Gram blocks.
    pub margin: f64,
    /// Positive margin was not reached even after the tightened re-solve.
    pub marginal: bool,
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub enum SearchOutcome {
    Feasible(LyapunovSolution),
    Infeasible { size: SdpSize },
}

impl SearchOutcome {
    pub fn size(&self) -> SdpSize {
        match self {
            SearchOutcome::Feasible(s) => s.size,
            SearchOutcome::Infeasible { size } => *size,
        }
    }

    pub fn solution(&self) -> Option<&LyapunovSolution> {
        match self {
            SearchOutcome::Feasible(s) => Some(s),
            SearchOutcome::Infeasible { .. } => None,
        }
    }
}

fn norm_sq_minus(dim: usize, beta: f64) -> Polynomial {
    let mut p = even_power_norm(dim, 1);
    p.add_term(crate::poly::Monomial::one(dim), -beta);
    p
}

/// `max(0, deg V - 1 + deg f - 2)` rounded down to even.
pub fn multiplier_degree(v_degree: u32, f_degree: u32) -> u32 {
    let d = (v_degree + f_degree).saturating_sub(3);
    d - d % 2
}

pub fn default_q_degree(v_degree: u32) -> u32 {
    v_degree.saturating_sub(2)
}

/// Basis of `S`: homogeneous of degree `ℓ` when `deg V = 2ℓ`, else degrees `1..deg V / 2`.
pub fn lyapunov_basis(dim: usize, ell: u32, degree: u32) -> GramBasis {
    if degree == 2 * ell {
        monomial_basis(dim, ell, ell)
    } else {
        monomial_basis(dim, 1, degree / 2)
    }
}

/// Multiplier basis for one decrease identity, or `None` when `p_i` must vanish.
///
/// With `β = 0` the lowest-degree part of `-p_i ‖x‖²` is non-positive and
/// cannot be matched, so monomials below the rest's lowest degree are pruned.
fn multiplier_basis(dim: usize, p_degree: u32, beta: f64, rest_min_degree: u32) -> Option<GramBasis> {
    let top = p_degree / 2;
    let low = if beta > 0.0 { 0 } else { rest_min_degree.saturating_sub(2).div_ceil(2) };
    (low <= top).then(|| monomial_basis(dim, low, top))
}

fn lie_min_degree(basis: &GramBasis, f: &PolynomialVectorField) -> Result<u32, PolyError> {
    let mut lo = u32::MAX;
    for (_, _, m) in basis.products() {
        let d = lie_derivative(&Polynomial::monomial(m, 1.0), f)?;
        if !d.is_zero() {
            lo = lo.min(d.min_degree());
        }
    }
    Ok(lo)
}

struct DecreaseProgram {
    program: SosProgram,
    s: Option<sosprog::UnknownId>,
    multipliers: Vec<Option<sosprog::UnknownId>>,
}

/// Decrease identities `-∇V·f_i - p_i(‖x‖² - β) - δN` with `V = known_v + S`.
fn decrease_program(
    system: &SwitchedSystem,
    known_v: &Polynomial,
    s_basis: Option<GramBasis>,
    multipliers: Option<&[Polynomial]>,
    ell: u32,
    delta: f64,
    beta: f64,
    v_degree: u32,
) -> Result<DecreaseProgram, CertifyError> {
    let n = system.dim();
    let norm = even_power_norm(n, ell);
    let shell = norm_sq_minus(n, beta);
    let mut program = SosProgram::new(n);
    let s = s_basis.clone().map(|b| program.add_unknown("S", b, UnknownRole::Lyapunov));
    let mut ids = Vec::new();
    for (i, f) in system.subsystems().iter().enumerate() {
        let mut known = -&(&lie_derivative(known_v, f)? + &(&norm * delta));
        if let Some(given) = multipliers {
            known = &known - &(&given[i] * &shell);
        }
        let mut id = SosIdentity::new(format!("decrease_{}", i + 1), known.clone());
        if let Some(sid) = s {
            id.add_unknown(sid, Action::Lie(f.clone()), -1.0);
        }
        let mut pid = None;
        if multipliers.is_none() {
            let p_degree = multiplier_degree(v_degree, f.degree());
            let mut rest = if known.is_zero() { u32::MAX } else { known.min_degree() };
            if let Some(b) = &s_basis {
                rest = rest.min(lie_min_degree(b, f)?);
            }
            if let Some(basis) = multiplier_basis(n, p_degree, beta, rest) {
                let p = program.add_unknown(format!("p_{}", i + 1), basis, UnknownRole::Multiplier);
                id.add_unknown(p, Action::Multiply(shell.clone()), -1.0);
                pid = Some(p);
            }
        }
        ids.push(pid);
        program.add_identity(id);
    }
    Ok(DecreaseProgram { program, s, multipliers: ids })
}

fn solve_with_margin(
    problem: &SdpProblem,
    config: &SolverConfig,
) -> Result<(sdp::SdpSolution, f64, bool), CertifyError> {
    let sol = sdp::solve(problem, config)?;
    match sol.status {
        SdpStatus::Optimal | SdpStatus::Feasible => {}
        _ => return Ok((sol, f64::NAN, false)),
    }
    let margin = sdp::strict_feasibility_margin(problem, &sol);
    if margin > 0.0 {
        return Ok((sol, margin, false));
    }
    log::debug!("margin {:.3e} not positive; re-solving with tightened tolerances", margin);
    let retry = sdp::solve(problem, &config.tightened(1e-2))?;
    if !retry.status.is_feasible() {
        return Ok((sol, margin, true));
    }
    let m2 = sdp::strict_feasibility_margin(problem, &retry);
    Ok((retry, m2, m2 <= 0.0))
}

fn status_error(status: SdpStatus, what: &str) -> CertifyError {
    CertifyError::NumericalFailure(format!("{} ended with status {:?}", what, status))
}

fn fixed_beta(query: &CertificationQuery) -> Result<f64, CertifyError> {
    match query.beta {
        BetaSpec::Fixed(b) => Ok(b),
        BetaSpec::Interval(_) => Err(CertifyError::InvalidQuery("a fixed β is required".into())),
    }
}

fn lyapunov_program(system: &SwitchedSystem, query: &CertificationQuery) -> Result<(DecreaseProgram, Polynomial), CertifyError> {
    query.validate()?;
    let beta = fixed_beta(query)?;
    let n = system.dim();
    let s_basis = lyapunov_basis(n, query.ell, query.degree);
    let norm_v = &even_power_norm(n, query.ell) * query.delta;
    let mut dp = decrease_program(system, &norm_v, Some(s_basis), None, query.ell, query.delta, beta, query.degree)?;
    if query.objective == LyapunovObjective::MinTrace {
        dp.program.objective = Objective { scalars: vec![], traces: vec![(dp.s.expect("S"), 1.0)] };
    }
    Ok((dp, norm_v))
}

/// The SDP solved by [`find_absorbing_lyapunov`].
pub fn decrease_problem(system: &SwitchedSystem, query: &CertificationQuery) -> Result<SdpProblem, CertifyError> {
    let (dp, _) = lyapunov_program(system, query)?;
    Ok(encode(&dp.program)?.problem)
}

/// Solves the decrease identities for `V` and the multipliers at a fixed `β`.
pub fn find_absorbing_lyapunov(system: &SwitchedSystem, query: &CertificationQuery) -> Result<SearchOutcome, CertifyError> {
    let (dp, norm_v) = lyapunov_program(system, query)?;
    let beta = fixed_beta(query)?;
    let n = system.dim();
    let enc = encode(&dp.program)?;
    let size = SdpSize::of(&enc.problem);
    log::info!(
        "decrease SDP (deg V = {}, β = {}): {} equalities, {} decision variables ({} full), {} blocks",
        query.degree, beta, size.equalities, size.decision_variables, size.full_variables, size.blocks
    );
    let (sol, margin, marginal) = solve_with_margin(&enc.problem, &query.solver)?;
    match sol.status {
        SdpStatus::Infeasible => {
            if let Some(c) = &sol.certificate {
                log::debug!("infeasibility ray: λ_max {:.3e}, free residual {:.3e}", c.max_eigenvalue, c.free_residual);
            }
            return Ok(SearchOutcome::Infeasible { size });
        }
        SdpStatus::Optimal | SdpStatus::Feasible => {}
        other => return Err(status_error(other, "decrease SDP")),
    }
    let dec = decode(&dp.program, &enc, &sol)?;
    let res = identity_residuals(&dp.program, &dec)?;
    let max_residual = res.iter().map(|r| r.relative()).fold(0.0, f64::max);
    let s = dec.unknown(dp.s.expect("S")).poly.clone();
    let v = &s + &norm_v;
    let multipliers = dp
        .multipliers
        .iter()
        .map(|p| p.map(|id| dec.unknown(id).poly.clone()).unwrap_or_else(|| Polynomial::zero(n)))
        .collect();
    Ok(SearchOutcome::Feasible(LyapunovSolution { v, s, multipliers, beta, size, margin, marginal, max_residual }))
}

#[derive(Debug, Clone)]
pub struct GammaSolution {
    pub gamma: f64,
    pub q: Polynomial,
    pub size: SdpSize,
}

/// Minimizes `γ` subject to `-(V - γ) + q(‖x‖² - β)` SOS with `deg q = q_degree`.
pub fn minimize_gamma(
    system: &SwitchedSystem,
    v: &Polynomial,
    beta: f64,
    q_degree: u32,
    config: &SolverConfig,
) -> Result<GammaSolution, CertifyError> {
    let n = system.dim();
    if v.dim() != n {
        return Err(CertifyError::DimensionMismatch { expected: n, found: v.dim() });
    }
    let mut program = SosProgram::new(n);
    let q = program.add_unknown("q", monomial_basis(n, 0, q_degree / 2), UnknownRole::Multiplier);
    let g = program.add_scalar("gamma");
    let mut id = SosIdentity::new("level", -v);
    id.add_unknown(q, Action::Multiply(norm_sq_minus(n, beta)), 1.0);
    id.add_scalar(g, Polynomial::constant(n, 1.0));
    program.add_identity(id);
    program.objective = Objective::minimize(g);
    let enc = encode(&program)?;
    let size = SdpSize::of(&enc.problem);
    log::info!("level SDP (deg q = {}): {} equalities, {} decision variables", q_degree, size.equalities, size.decision_variables);
    let sol = sdp::solve(&enc.problem, config)?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => {
            return Err(CertifyError::Infeasible(format!("no level set with deg(q) = {}; raise deg(q)", q_degree)))
        }
        other => return Err(status_error(other, "level SDP")),
    }
    let dec = decode(&program, &enc, &sol)?;
    Ok(GammaSolution { gamma: dec.scalar(g), q: dec.unknown(q).poly.clone(), size })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaProbe {
    pub beta: f64,
    /// `None` when the solver failed numerically.
    pub feasible: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct TightenResult {
    pub beta: f64,
    pub solution: LyapunovSolution,
    pub probes: Vec<BetaProbe>,
    /// Pairs `(β_feasible, β_infeasible)` with `β_feasible < β_infeasible`.
    pub monotonicity_violations: Vec<(f64, f64)>,
}

fn probe(system: &SwitchedSystem, query: &CertificationQuery, beta: f64) -> Result<Option<LyapunovSolution>, CertifyError> {
    let q = CertificationQuery { beta: BetaSpec::Fixed(beta), ..query.clone() };
    match find_absorbing_lyapunov(system, &q) {
        Ok(SearchOutcome::Feasible(s)) => Ok(Some(s)),
        Ok(SearchOutcome::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Bisection for the smallest feasible `β` in `[0, β_max]`.
pub fn tighten_beta(system: &SwitchedSystem, query: &CertificationQuery) -> Result<TightenResult, CertifyError> {
    query.validate()?;
    let beta_max = match query.beta {
        BetaSpec::Interval(b) | BetaSpec::Fixed(b) => b,
    };
    let mut probes = Vec::new();
    let record = |probes: &mut Vec<BetaProbe>, beta: f64, r: &Result<Option<LyapunovSolution>, CertifyError>| {
        let feasible = match r {
            Ok(s) => Some(s.is_some()),
            Err(CertifyError::NumericalFailure(_)) => None,
            Err(_) => None,
        };
        probes.push(BetaProbe { beta, feasible });
    };
    let top = probe(system, query, beta_max);
    record(&mut probes, beta_max, &top);
    let mut best = match top? {
        Some(s) => s,
        None => return Err(CertifyError::BetaMaxInfeasible(beta_max)),
    };
    let mut lo = 0.0;
    let mut hi = beta_max;
    if beta_max > 0.0 {
        let bottom = probe(system, query, 0.0);
        record(&mut probes, 0.0, &bottom);
        if let Ok(Some(s)) = bottom {
            best = s;
            hi = 0.0;
        }
    }
    while hi - lo > query.beta_tol {
        let mid = 0.5 * (lo + hi);
        let r = probe(system, query, mid);
        record(&mut probes, mid, &r);
        match r {
            Ok(Some(s)) => {
                best = s;
                hi = mid;
            }
            Ok(None) => lo = mid,
            Err(CertifyError::NumericalFailure(msg)) => {
                log::warn!("β = {}: {}; treated as not certified", mid, msg);
                lo = mid;
            }
            Err(e) => return Err(e),
        }
    }
    let mut violations = Vec::new();
    for a in &probes {
        for b in &probes {
            if a.feasible == Some(true) && b.feasible == Some(false) && a.beta < b.beta {
                violations.push((a.beta, b.beta));
            }
        }
    }
    if !violations.is_empty() {
        log::warn!("feasibility is not monotone in β: {:?}", violations);
    }
    Ok(TightenResult { beta: hi, solution: best, probes, monotonicity_violations: violations })
}

/// Common Lyapunov function search (`β = 0`); requires `f_i(0) = 0` for all `i`.
pub fn find_common_lyapunov(system: &SwitchedSystem, query: &CertificationQuery) -> Result<SearchOutcome, CertifyError> {
    if let Some(i) = system.origin_violation() {
        return Err(CertifyError::NoCommonEquilibrium(i + 1));
    }
    find_absorbing_lyapunov(system, &CertificationQuery { beta: BetaSpec::Fixed(0.0), ..query.clone() })
}

/// Linear system `ẋ = A x`.
pub fn linear_field(a: &DMatrix<f64>) -> PolynomialVectorField {
    let rows: Vec<Vec<f64>> = (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect();
    PolynomialVectorField::linear(&rows)
}

fn has_cqlf(mats: &[DMatrix<f64>], config: &SolverConfig) -> Result<bool, CertifyError> {
    let fields = mats.iter().map(linear_field).collect();
    let system = SwitchedSystem::new(fields)?;
    let query = CertificationQuery { solver: config.clone(), ..CertificationQuery::new(1, 1.0, 2, 0.0) };
    match find_absorbing_lyapunov(&system, &query) {
        Ok(SearchOutcome::Feasible(s)) => Ok(!s.marginal),
        Ok(SearchOutcome::Infeasible { .. }) => Ok(false),
        Err(CertifyError::NumericalFailure(msg)) => {
            log::warn!("CQLF probe failed numerically ({}); treated as infeasible", msg);
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

pub const CQLF_TOLERANCE: f64 = 0.01;

/// Largest `b` in `[lo, hi]` whose matrices share a quadratic Lyapunov function.
pub fn cqlf_bisection(
    family: impl Fn(f64) -> Vec<DMatrix<f64>>,
    lo: f64,
    hi: f64,
    config: &SolverConfig,
) -> Result<f64, CertifyError> {
    if !(lo <= hi) {
        return Err(CertifyError::InvalidQuery("empty interval".into()));
    }
    if !has_cqlf(&family(lo), config)? {
        return Err(CertifyError::Infeasible(format!("no common quadratic Lyapunov function at b = {}", lo)));
    }
    if has_cqlf(&family(hi), config)? {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > CQLF_TOLERANCE {
        let mid = 0.5 * (a + b);
        if has_cqlf(&family(mid), config)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingSetCertificate {
    pub v: Polynomial,
    /// Empty when only `V` is known; verification then reconstructs them.
    pub multipliers: Vec<Polynomial>,
    pub q: Option<Polynomial>,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub ell: u32,
    pub report: Option<VerificationReport>,
}

impl AbsorbingSetCertificate {
    pub fn verified(&self) -> bool {
        self.report.as_ref().is_some_and(VerificationReport::passed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    /// `max |coef|` of `expression - χᵀQχ`.
    pub residual: f64,
    /// `1 + max |coef|` of the expression.
    pub scale: f64,
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub sdp_status: SdpStatus,
}

impl IdentityCheck {
    pub fn residual_ok(&self, tol: f64) -> bool {
        self.sdp_status.is_feasible() && self.residual <= tol * self.scale
    }

    pub fn psd_ok(&self, tol: f64) -> bool {
        self.sdp_status.is_feasible() && self.min_eigenvalue >= -tol * (1.0 + self.trace.abs())
    }
}

pub const RESIDUAL_TOL: f64 = 1e-6;
pub const PSD_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub identities: Vec<IdentityCheck>,
    pub residual_tol: f64,
    pub psd_tol: f64,
    pub decrease_samples: usize,
    /// `min -max_i ∇V·f_i` over shell samples outside `{V ≤ γ}`.
    pub decrease_margin: f64,
    pub containment_samples: usize,
    /// `γ - max V` over samples of the `β`-ball.
    pub containment_margin: f64,
    pub containment_violations: usize,
    /// `max ‖x‖² - β` over samples with `V ≤ γ`.
    pub outer_slack: f64,
}

impl VerificationReport {
    pub fn residuals_ok(&self) -> bool {
        self.identities.iter().all(|c| c.residual_ok(self.residual_tol))
    }

    pub fn gram_ok(&self) -> bool {
        self.identities.iter().all(|c| c.psd_ok(self.psd_tol))
    }

    pub fn decrease_ok(&self) -> bool {
        self.decrease_samples > 0 && self.decrease_margin > 0.0
    }

    pub fn containment_ok(&self) -> bool {
        self.containment_violations == 0
    }

    pub fn passed(&self) -> bool {
        self.failing_check().is_none()
    }

    pub fn failing_check(&self) -> Option<&'static str> {
        if !self.residuals_ok() {
            Some("identity residual")
        } else if !self.gram_ok() {
            Some("Gram eigenvalue")
        } else if !self.decrease_ok() {
            Some("decrease sampling")
        } else if !self.containment_ok() {
            Some("containment")
        } else {
            None
        }
    }

    /// Checks (a) to (c), without containment.
    pub fn lyapunov_checks_passed(&self) -> bool {
        self.residuals_ok() && self.gram_ok() && self.decrease_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub samples: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { samples: 2000, seed: 7, solver: SolverConfig::default() }
    }
}

/// Solves an SOS program whose only unknowns are the given multipliers and records each identity's check.
fn check_program(program: &SosProgram, config: &SolverConfig, checks: &mut Vec<IdentityCheck>) -> Result<(), CertifyError> {
    let trivial = |id: &SosIdentity| id.known.is_zero() && id.scalar_terms.is_empty();
    if program.unknowns.is_empty() && program.identities.iter().all(trivial) {
        for id in &program.identities {
            checks.push(IdentityCheck {
                name: id.name.clone(),
                residual: 0.0,
                scale: 1.0,
                min_eigenvalue: 0.0,
                trace: 0.0,
                sdp_status: SdpStatus::Optimal,
            });
        }
        return Ok(());
    }
    let enc = encode(program)?;
    let sol = sdp::solve(&enc.problem, config)?;
    if !sol.status.is_feasible() {
        for id in &program.identities {
            let scale = 1.0 + id.known.max_abs_coefficient();
            checks.push(IdentityCheck {
                name: id.name.clone(),
                residual: id.known.max_abs_coefficient(),
                scale,
                min_eigenvalue: sol.min_eigenvalue(),
                trace: 0.0,
                sdp_status: sol.status,
            });
        }
        return Ok(());
    }
    let dec = decode(program, &enc, &sol)?;
    let res = identity_residuals(program, &dec)?;
    for ((id, r), gram) in program.identities.iter().zip(&res).zip(&dec.identity_grams) {
        checks.push(IdentityCheck {
            name: id.name.clone(),
            residual: r.max_abs,
            scale: r.scale,
            min_eigenvalue: sdp::min_eigenvalue(gram)?,
            trace: gram.trace(),
            sdp_status: sol.status,
        });
    }
    for u in &dec.unknowns {
        checks.push(IdentityCheck {
            name: u.name.clone(),
            residual: 0.0,
            scale: 1.0,
            min_eigenvalue: sdp::min_eigenvalue(&u.gram)?,
            trace: u.gram.trace(),
            sdp_status: sol.status,
        });
    }
    Ok(())
}

fn sos_alone(name: &str, p: &Polynomial) -> SosProgram {
    let mut prog = SosProgram::new(p.dim());
    prog.add_identity(SosIdentity::new(name, p.clone()));
    prog
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let d: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return d.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Re-derives every condition of the certificate independently of how it was found.
pub fn verify_certificate(
    system: &SwitchedSystem,
    cert: &AbsorbingSetCertificate,
    config: &VerifyConfig,
) -> Result<VerificationReport, CertifyError> {
    let n = system.dim();
    if cert.v.dim() != n {
        return Err(CertifyError::DimensionMismatch { expected: n, found: cert.v.dim() });
    }
    if !cert.multipliers.is_empty() && cert.multipliers.len() != system.len() {
        return Err(CertifyError::InvalidQuery(format!(
            "{} multipliers for {} subsystems",
            cert.multipliers.len(),
            system.len()
        )));
    }
    let norm = even_power_norm(n, cert.ell);
    let shell = norm_sq_minus(n, cert.beta);
    let mut checks = Vec::new();

    // V - δN is SOS.
    check_program(&sos_alone("lower_bound", &(&cert.v - &(&norm * cert.delta))), &config.solver, &mut checks)?;

    // Decrease identities, one SDP per subsystem.
    let v_degree = cert.v.degree().max(2);
    for (i, f) in system.subsystems().iter().enumerate() {
        let single = SwitchedSystem::new(vec![f.clone()])?;
        let given = if cert.multipliers.is_empty() { None } else { Some(&cert.multipliers[i..=i]) };
        let mut dp = decrease_program(&single, &cert.v, None, given, cert.ell, cert.delta, cert.beta, v_degree)?;
        dp.program.identities[0].name = format!("decrease_{}", i + 1);
        if let Some(unknown) = dp.program.unknowns.first_mut() {
            unknown.name = format!("p_{}", i + 1);
        }
        check_program(&dp.program, &config.solver, &mut checks)?;
        if let Some(given) = given {
            check_program(&sos_alone(&format!("p_{}", i + 1), &given[0]), &config.solver, &mut checks)?;
        }
    }

    // Level-set identity.
    {
        let mut prog = SosProgram::new(n);
        let mut known = -&cert.v;
        known.add_term(crate::poly::Monomial::one(n), cert.gamma);
        match &cert.q {
            Some(q) => {
                known = &known + &(q * &shell);
                prog.add_identity(SosIdentity::new("level", known));
                check_program(&prog, &config.solver, &mut checks)?;
                check_program(&sos_alone("q", q), &config.solver, &mut checks)?;
            }
            None => {
                let q_deg = default_q_degree(v_degree);
                let qid = prog.add_unknown("q", monomial_basis(n, 0, q_deg / 2), UnknownRole::Multiplier);
                let mut id = SosIdentity::new("level", known);
                id.add_unknown(qid, Action::Multiply(shell.clone()), 1.0);
                prog.add_identity(id);
                check_program(&prog, &config.solver, &mut checks)?;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grad = cert.v.gradient();

    // (c) decrease on shells outside the absorbing set.
    let (r2_lo, r2_hi) = if cert.beta > 0.0 { (cert.beta, 4.0 * cert.beta) } else { (1.0, 4.0) };
    let mut decrease_samples = 0;
    let mut decrease_margin = f64::INFINITY;
    let mut scale = 1.0;
    let mut attempts = 0;
    while decrease_samples < config.samples && attempts < 40 * config.samples.max(1) {
        attempts += 1;
        if attempts % config.samples.max(1) == 0 && decrease_samples * 10 < config.samples {
            scale *= 2.0;
        }
        let r = (rng.random_range(r2_lo..=r2_hi) * scale).sqrt();
        let x: Vec<f64> = random_direction(&mut rng, n).into_iter().map(|d| d * r).collect();
        if cert.v.eval_unchecked(&x) <= cert.gamma {
            continue;
        }
        decrease_samples += 1;
        decrease_margin = decrease_margin.min(-system.max_lie(&grad, &x).0);
    }
    if decrease_samples == 0 {
        decrease_margin = f64::NEG_INFINITY.max(-f64::MAX);
    }

    // (d) containment: V ≤ γ on the β-ball.
    let mut containment_margin = f64::INFINITY;
    let mut containment_violations = 0;
    let radius = cert.beta.sqrt();
    let contain_samples = config.samples.max(1);
    for k in 0..contain_samples {
        let dir = random_direction(&mut rng, n);
        // Half the samples on the sphere ‖x‖² = β, half uniform in the ball.
        let r = if k % 2 == 0 { radius } else { radius * rng.random::<f64>().powf(1.0 / n as f64) };
        let x: Vec<f64> = dir.iter().map(|d| d * r).collect();
        let v = cert.v.eval_unchecked(&x);
        containment_margin = containment_margin.min(cert.gamma - v);
        if v > cert.gamma {
            containment_violations += 1;
        }
    }

    // Outer slack: how far {V ≤ γ} reaches beyond the β-ball.
    let mut outer_slack = f64::NEG_INFINITY;
    for _ in 0..config.samples.max(1) {
        let dir = random_direction(&mut rng, n);
        let mut r = radius.max(1e-3);
        let mut guard = 0;
        while cert.v.eval_unchecked(&dir.iter().map(|d| d * r).collect::<Vec<_>>()) <= cert.gamma && guard < 60 {
            r *= 1.25;
            guard += 1;
        }
        let (mut a, mut b) = (r / 1.25, r);
        for _ in 0..40 {
            let mid = 0.5 * (a + b);
            if cert.v.eval_unchecked(&dir.iter().map(|d| d * mid).collect::<Vec<_>>()) <= cert.gamma {
                a = mid;
            } else {
                b = mid;
            }
        }
        outer_slack = outer_slack.max(a * a - cert.beta);
    }

    Ok(VerificationReport {
        identities: checks,
        residual_tol: RESIDUAL_TOL,
        psd_tol: PSD_TOL,
        decrease_samples,
        decrease_margin,
        containment_samples: contain_samples,
        containment_margin,
        containment_violations,
        outer_slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    GloballyAsymptoticallyStable,
    UltimatelyBounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// The verified absorbing set is `{V ≤ γ}`.
    pub gamma: f64,
    pub beta: f64,
    pub no_periodic_solutions: bool,
}

/// `true` when every eigenvalue has negative real part.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.clone().complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Stability verdict for a verified certificate.
pub fn classify(system: &SwitchedSystem, cert: &AbsorbingSetCertificate) -> Result<Verdict, CertifyError> {
    if !cert.verified() {
        return Err(CertifyError::Unverified);
    }
    let gas = system.all_linear()
        && system.linear_matrices().is_some_and(|ms| ms.iter().all(is_hurwitz));
    Ok(Verdict {
        kind: if gas { VerdictKind::GloballyAsymptoticallyStable } else { VerdictKind::UltimatelyBounded },
        gamma: cert.gamma,
        beta: cert.beta,
        no_periodic_solutions: gas,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeAttempt {
    pub degree: u32,
    pub beta: f64,
    pub feasible: bool,
    pub size: SdpSize,
}

#[derive(Debug, Clone)]
pub struct EscalationResult {
    pub degree: u32,
    pub certificate: AbsorbingSetCertificate,
    pub attempts: Vec<DegreeAttempt>,
    pub tighten: Option<TightenResult>,
    pub level_size: SdpSize,
    pub lyapunov: LyapunovSolution,
}

/// `γ` rounded up so the recorded level set sits strictly inside the feasible range.
fn safe_gamma(gamma: f64) -> f64 {
    gamma + 1e-6 * (1.0 + gamma.abs())
}

/// Raises `deg V` from the query's degree in steps of two until the decrease identities are feasible,
/// then tightens `β` (for an interval), minimizes `γ`, and verifies.
pub fn escalate(system: &SwitchedSystem, base: &CertificationQuery) -> Result<EscalationResult, CertifyError> {
    base.validate()?;
    let beta_top = match base.beta {
        BetaSpec::Fixed(b) | BetaSpec::Interval(b) => b,
    };
    let mut attempts = Vec::new();
    let mut degree = base.degree;
    let found = loop {
        if degree > base.degree_cap {
            return Err(CertifyError::InfeasibleAtCap { cap: base.degree_cap, attempts });
        }
        let q = CertificationQuery { beta: BetaSpec::Fixed(beta_top), ..base.with_degree(degree) };
        let outcome = match find_absorbing_lyapunov(system, &q) {
            Ok(o) => o,
            Err(CertifyError::NumericalFailure(msg)) => {
                log::warn!("deg V = {}: {}", degree, msg);
                SearchOutcome::Infeasible { size: SdpSize { equalities: 0, decision_variables: 0, full_variables: 0, blocks: 0 } }
            }
            Err(e) => return Err(e),
        };
        let feasible = matches!(outcome, SearchOutcome::Feasible(_));
        log::info!("deg V = {}: {}", degree, if feasible { "feasible" } else { "infeasible" });
        attempts.push(DegreeAttempt { degree, beta: beta_top, feasible, size: outcome.size() });
        if let SearchOutcome::Feasible(sol) = outcome {
            break (q, sol);
        }
        degree += 2;
    };
    let (query, mut solution) = found;
    let mut tighten = None;
    if let BetaSpec::Interval(_) = base.beta {
        let t = tighten_beta(system, &CertificationQuery { beta: BetaSpec::Interval(beta_top), ..query.clone() })?;
        solution = t.solution.clone();
        tighten = Some(t);
    }
    let q_degree = base.q_degree.unwrap_or_else(|| default_q_degree(degree));
    let level = minimize_gamma(system, &solution.v, solution.beta, q_degree, &query.solver)?;
    let mut certificate = AbsorbingSetCertificate {
        v: solution.v.clone(),
        multipliers: solution.multipliers.clone(),
        q: Some(level.q.clone()),
        beta: solution.beta,
        gamma: safe_gamma(level.gamma),
        delta: base.delta,
        ell: base.ell,
        report: None,
    };
    let report = verify_certificate(
        system,
        &certificate,
        &VerifyConfig { samples: base.samples, seed: base.seed, solver: base.solver.clone() },
    )?;
    if let Some(check) = report.failing_check() {
        return Err(CertifyError::VerificationFailed(format!("{} check failed", check)));
    }
    certificate.report = Some(report);
    Ok(EscalationResult { degree, certificate, attempts, tighten, level_size: level.size, lyapunov: solution })
}
