//! Standard-form semidefinite programs with block-diagonal PSD variables and
//! free scalars:
//!
//! ```text
//! minimize    Σ_b <C_b, X_b> + cfᵀ u
//! subject to  Σ_b <A_jb, X_b> + F_j u = b_j     j = 1..m
//!             X_b ⪰ 0,  u free
//! ```
//!
//! [`solve`] runs a homogeneous self-dual interior-point method and falls back
//! to a first-order splitting method when the Newton system breaks down.

mod admm;
mod ipm;
mod prepared;
pub mod sdpa;

use nalgebra::DMatrix;
use thiserror::Error;

use prepared::Prepared;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("SDPA format error on line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("I/O error: {0}")]
    Io(String),
}

/// Entry `(row, col)` of a symmetric block; the mirrored entry is implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl SymEntry {
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        SymEntry { block, row, col, value }
    }
}

/// A linear form `Σ_b <A_b, X_b> + Σ_k f_k u_k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearForm {
    pub entries: Vec<SymEntry>,
    pub free: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(|e| e.value == 0.0) && self.free.iter().all(|&(_, v)| v == 0.0)
    }

    pub fn evaluate(&self, blocks: &[DMatrix<f64>], free: &[f64]) -> f64 {
        let mut acc = 0.0;
        for e in &self.entries {
            let x = &blocks[e.block];
            acc += if e.row == e.col {
                e.value * x[(e.row, e.row)]
            } else {
                e.value * (x[(e.row, e.col)] + x[(e.col, e.row)])
            };
        }
        for &(k, v) in &self.free {
            acc += v * free[k];
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint {
    pub form: LinearForm,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub free_count: usize,
    pub constraints: Vec<SdpConstraint>,
    pub objective: LinearForm,
}

impl SdpProblem {
    pub fn new(blocks: Vec<usize>, free_count: usize) -> Self {
        SdpProblem { blocks, free_count, constraints: Vec::new(), objective: LinearForm::default() }
    }

    pub fn add_constraint(&mut self, form: LinearForm, rhs: f64) {
        self.constraints.push(SdpConstraint { form, rhs });
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    /// Scalar unknowns counted with one entry per symmetric pair, plus free scalars.
    pub fn decision_variable_count(&self) -> usize {
        self.blocks.iter().map(|&n| n * (n + 1) / 2).sum::<usize>() + self.free_count
    }

    /// Scalar unknowns counted as full `n × n` squares, plus free scalars.
    pub fn full_variable_count(&self) -> usize {
        self.blocks.iter().map(|&n| n * n).sum::<usize>() + self.free_count
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.blocks.is_empty() {
            return Err(SdpError::Malformed("no PSD blocks".into()));
        }
        if self.blocks.contains(&0) {
            return Err(SdpError::Malformed("zero-sized block".into()));
        }
        let check = |form: &LinearForm, what: &str| -> Result<(), SdpError> {
            for e in &form.entries {
                if e.block >= self.blocks.len() || e.col >= self.blocks[e.block] || e.row > e.col {
                    return Err(SdpError::Malformed(format!("bad entry {:?} in {}", e, what)));
                }
                if !e.value.is_finite() {
                    return Err(SdpError::Malformed(format!("non-finite value in {}", what)));
                }
            }
            for &(k, v) in &form.free {
                if k >= self.free_count || !v.is_finite() {
                    return Err(SdpError::Malformed(format!("bad free coefficient in {}", what)));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (j, c) in self.constraints.iter().enumerate() {
            check(&c.form, &format!("constraint {}", j))?;
            if !c.rhs.is_finite() {
                return Err(SdpError::Malformed(format!("non-finite rhs in constraint {}", j)));
            }
        }
        Ok(())
    }

    /// `max_j |<A_j, X> + F_j u - b_j|`.
    pub fn primal_residual_inf(&self, blocks: &[DMatrix<f64>], free: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| (c.form.evaluate(blocks, free) - c.rhs).abs())
            .fold(0.0, f64::max)
    }

    pub fn rhs_inf(&self) -> f64 {
        self.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max)
    }

    pub fn objective_value(&self, blocks: &[DMatrix<f64>], free: &[f64]) -> f64 {
        self.objective.evaluate(blocks, free)
    }

    pub fn has_objective(&self) -> bool {
        !self.objective.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Feasible,
    /// A dual improving ray proves the constraints cannot be met.
    Infeasible,
    /// A primal improving ray proves the objective is unbounded below.
    Unbounded,
    NumericalFailure,
}

impl SdpStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, SdpStatus::Optimal | SdpStatus::Feasible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    InteriorPoint,
    SplittingFallback,
}

/// Ray `y` with `bᵀy > 0`, `Σ y_j A_j ⪯ 0`, `Fᵀy = 0`, normalized to `bᵀy = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub ray: Vec<f64>,
    /// `λ_max(Σ y_j A_j)`; non-positive for an exact certificate.
    pub max_eigenvalue: f64,
    /// `‖Fᵀy‖∞`.
    pub free_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub method: SolveMethod,
    pub blocks: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    pub dual: Vec<f64>,
    pub dual_slack: Vec<DMatrix<f64>>,
    /// `‖A(X) + Fu - b‖∞ / (1 + ‖b‖∞)` in the caller's scaling.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub min_eigenvalues: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub certificate: Option<InfeasibilityCertificate>,
    pub psd_tol: f64,
}

impl SdpSolution {
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub psd_tol: f64,
    pub max_iterations: usize,
    pub gap_tol: f64,
    /// Compute per-block Schur contributions on the rayon pool.
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { feas_tol: 1e-7, psd_tol: 1e-8, max_iterations: 20000, gap_tol: 1e-7, parallel: false }
    }
}

impl SolverConfig {
    pub fn tightened(&self, factor: f64) -> SolverConfig {
        SolverConfig {
            feas_tol: self.feas_tol * factor,
            gap_tol: self.gap_tol * factor,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<(), SdpError> {
        if self.feas_tol <= 0.0 || self.psd_tol <= 0.0 || self.gap_tol <= 0.0 {
            return Err(SdpError::Malformed("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

const IPM_ITERATION_CAP: usize = 200;

/// Solves `problem`. Deterministic for a fixed `config`.
pub fn solve(problem: &SdpProblem, config: &SolverConfig) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    config.validate()?;
    let prepared = Prepared::new(problem);
    if let Some(row) = prepared.inconsistent_row {
        return Ok(trivially_infeasible(problem, row, config));
    }
    let ipm_cap = config.max_iterations.min(IPM_ITERATION_CAP);
    let outcome = ipm::run(&prepared, config, ipm_cap);
    let mut solution = match outcome {
        ipm::Outcome::Done(sol) => sol,
        ipm::Outcome::Stalled(best) => {
            log::debug!("interior point stalled after {} iterations, switching to splitting", best.iterations);
            let budget = config.max_iterations.saturating_sub(best.iterations);
            admm::run(&prepared, config, best, budget)
        }
    };
    finalize(problem, &prepared, config, &mut solution);
    Ok(solution)
}

fn trivially_infeasible(problem: &SdpProblem, row: usize, config: &SolverConfig) -> SdpSolution {
    let mut ray = vec![0.0; problem.constraints.len()];
    let rhs = problem.constraints[row].rhs;
    ray[row] = 1.0 / rhs;
    let blocks: Vec<DMatrix<f64>> = problem.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    SdpSolution {
        status: SdpStatus::Infeasible,
        method: SolveMethod::InteriorPoint,
        dual_slack: blocks.clone(),
        min_eigenvalues: vec![0.0; blocks.len()],
        blocks,
        free: vec![0.0; problem.free_count],
        dual: ray.clone(),
        primal_residual: rhs.abs() / (1.0 + problem.rhs_inf()),
        dual_residual: 0.0,
        primal_objective: 0.0,
        dual_objective: 0.0,
        iterations: 0,
        certificate: Some(InfeasibilityCertificate { ray, max_eigenvalue: 0.0, free_residual: 0.0 }),
        psd_tol: config.psd_tol,
    }
}

/// Fills residuals, eigenvalues and objectives in the caller's scaling.
fn finalize(problem: &SdpProblem, prepared: &Prepared, config: &SolverConfig, sol: &mut SdpSolution) {
    sol.psd_tol = config.psd_tol;
    sol.min_eigenvalues = sol.blocks.iter().map(min_eigenvalue_unchecked).collect();
    sol.primal_residual = problem.primal_residual_inf(&sol.blocks, &sol.free) / (1.0 + problem.rhs_inf());
    sol.primal_objective = problem.objective_value(&sol.blocks, &sol.free);
    sol.dual_objective = problem
        .constraints
        .iter()
        .zip(&sol.dual)
        .map(|(c, y)| c.rhs * y)
        .sum();
    let (aty, fty) = prepared::adjoint_original(problem, &sol.dual);
    let (c, cf) = prepared::form_matrices(problem, &problem.objective);
    let mut num = 0.0;
    let mut den = 0.0;
    for b in 0..c.len() {
        num += (&c[b] - &aty[b] - &sol.dual_slack[b]).norm_squared();
        den += c[b].norm_squared();
    }
    for k in 0..cf.len() {
        num += (cf[k] - fty[k]).powi(2);
        den += cf[k] * cf[k];
    }
    sol.dual_residual = num.sqrt() / (1.0 + den.sqrt());
    if let Some(cert) = sol.certificate.as_mut() {
        let (lmax, fres) = prepared.certificate_quality(problem, &cert.ray);
        cert.max_eigenvalue = lmax;
        cert.free_residual = fres;
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64, SdpError> {
    if m.nrows() != m.ncols() {
        return Err(SdpError::Malformed("matrix is not square".into()));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(SdpError::NotSymmetric(asym));
    }
    Ok(min_eigenvalue_unchecked(m))
}

pub(crate) fn min_eigenvalue_unchecked(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `min_b λ_min(X_b) - psd_tol`; positive means every block is safely interior.
pub fn strict_feasibility_margin(problem: &SdpProblem, solution: &SdpSolution) -> f64 {
    debug_assert_eq!(problem.blocks.len(), solution.blocks.len());
    solution.min_eigenvalue() - solution.psd_tol
}
