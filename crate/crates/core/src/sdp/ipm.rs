//! Homogeneous self-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector) on the row-normalized problem.
//!
//! Embedding, with `τ, κ ≥ 0`:
//!
//! ```text
//! A(X) + F u = b τ
//! Aᵀy + Z    = C τ
//! Fᵀy        = cf τ
//! bᵀy - <C,X> - cfᵀu = κ
//! ```
//!
//! A solution with `τ > 0` yields an optimal pair `(X, u, y, Z) / τ`; one with
//! `κ > 0` yields an improving ray, i.e. an infeasibility certificate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use super::prepared::{inner, BlockEntries, Prepared};
use super::{InfeasibilityCertificate, SdpSolution, SdpStatus, SolveMethod, SolverConfig};

const STEP_FRACTION: f64 = 0.95;
const MIN_STEP: f64 = 1e-7;
const MAX_SHORT_STEPS: usize = 4;

/// Normalized point handed to the splitting fallback.
pub(crate) struct Start {
    pub x: Vec<DMatrix<f64>>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub iterations: usize,
}

pub(crate) enum Outcome {
    Done(SdpSolution),
    Stalled(Start),
}

struct State {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    u: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    du: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rf: DVector<f64>,
    rg: f64,
    /// `Aᵀy + Z` (without the `τ C` part).
    aty_z: Vec<DMatrix<f64>>,
    /// `A(X) + F u`.
    ax: DVector<f64>,
    pobj: f64,
    dobj: f64,
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn identity_blocks(sizes: &[usize]) -> Vec<DMatrix<f64>> {
    sizes.iter().map(|&n| DMatrix::identity(n, n)).collect()
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = Cholesky::new(m.clone())?;
    Some(sym(chol.inverse()))
}

/// Largest `α` with `X + α dX ⪰ 0`; `f64::INFINITY` if unbounded.
fn max_psd_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let chol = match Cholesky::new(x.clone()) {
        Some(c) => c,
        None => return 0.0,
    };
    let l = chol.l();
    let left = match l.solve_lower_triangular(dx) {
        Some(v) => v,
        None => return 0.0,
    };
    let w = match l.solve_lower_triangular(&left.transpose()) {
        Some(v) => v,
        None => return 0.0,
    };
    let lmin = super::min_eigenvalue_unchecked(&w);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_scalar_step(v: f64, dv: f64) -> f64 {
    if dv < 0.0 {
        -v / dv
    } else {
        f64::INFINITY
    }
}

/// `tr(E_rs X E_pq Zinv)` summed over the symmetric orientations of both entries.
#[inline]
fn schur_kernel(r: usize, s: usize, p: usize, q: usize, x: &DMatrix<f64>, zi: &DMatrix<f64>) -> f64 {
    let mut acc = x[(s, p)] * zi[(q, r)];
    if p != q {
        acc += x[(s, q)] * zi[(p, r)];
    }
    if r != s {
        acc += x[(r, p)] * zi[(q, s)];
        if p != q {
            acc += x[(r, q)] * zi[(p, s)];
        }
    }
    acc
}

/// Contribution of one block to the Schur matrix `M_ij = tr(A_i X A_j Z⁻¹)`.
fn block_schur(rows: &[(usize, BlockEntries)], x: &DMatrix<f64>, zi: &DMatrix<f64>, m: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(rows.len() * (rows.len() + 1) / 2);
    let _ = m;
    for (a, (ri, ei)) in rows.iter().enumerate() {
        for (rj, ej) in &rows[a..] {
            let mut acc = 0.0;
            for &(r, s, w) in ei {
                for &(p, q, v) in ej {
                    acc += w * v * schur_kernel(r, s, p, q, x, zi);
                }
            }
            out.push((*ri, *rj, acc));
        }
    }
    out
}

/// Factorization of the saddle-point matrix `[[M, F], [Fᵀ, 0]]`.
struct Kkt {
    chol: Cholesky<f64, Dyn>,
    minv_f: DMatrix<f64>,
    schur_free: Option<nalgebra::LU<f64, Dyn, Dyn>>,
}

impl Kkt {
    fn factor(mut mat: DMatrix<f64>, free: &DMatrix<f64>) -> Option<Kkt> {
        let n = mat.nrows();
        let diag_max = (0..n).map(|i| mat[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut reg = 0.0;
        let chol = loop {
            if let Some(c) = Cholesky::new(mat.clone()) {
                break c;
            }
            reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
            if reg > 1e-6 * diag_max {
                return None;
            }
            for i in 0..n {
                mat[(i, i)] += reg;
            }
        };
        let nf = free.ncols();
        if nf == 0 {
            return Some(Kkt { chol, minv_f: DMatrix::zeros(n, 0), schur_free: None });
        }
        let minv_f = chol.solve(free);
        let s = free.transpose() * &minv_f;
        let lu = s.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Kkt { chol, minv_f, schur_free: Some(lu) })
    }

    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>, free: &DMatrix<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let minv_r1 = self.chol.solve(r1);
        match &self.schur_free {
            None => Some((minv_r1, DVector::zeros(0))),
            Some(lu) => {
                let rhs = free.transpose() * &minv_r1 - r2;
                let du = lu.solve(&rhs)?;
                let dy = minv_r1 - &self.minv_f * &du;
                Some((dy, du))
            }
        }
    }
}

struct Linearization {
    zinv: Vec<DMatrix<f64>>,
    kkt: Kkt,
    /// `𝓗(C) = sym(X C Z⁻¹)`.
    hc: Vec<DMatrix<f64>>,
    /// `A(𝓗(C))`.
    v: DVector<f64>,
    c_hc: f64,
    z2y: DVector<f64>,
    z2u: DVector<f64>,
}

fn hkm(x: &DMatrix<f64>, w: &DMatrix<f64>, zinv: &DMatrix<f64>) -> DMatrix<f64> {
    sym(x * w * zinv)
}

pub(crate) fn run(prep: &Prepared, config: &SolverConfig, max_iter: usize) -> Outcome {
    let mut st = State {
        x: identity_blocks(&prep.blocks),
        z: identity_blocks(&prep.blocks),
        y: DVector::zeros(prep.m),
        u: DVector::zeros(prep.nf),
        tau: 1.0,
        kappa: 1.0,
    };
    let nu = prep.barrier_degree() + 1.0;
    let b_inf_orig = prep
        .b
        .iter()
        .zip(&prep.row_scale)
        .map(|(b, s)| (b * s).abs())
        .fold(0.0, f64::max);
    let c_norm = (prep.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + prep.cf.norm_squared()).sqrt();
    let has_objective = c_norm > 0.0;
    let mut short_steps = 0;

    for iter in 0..max_iter {
        let res = residuals(prep, &st);
        let tau = st.tau;

        let pres = res
            .rp
            .iter()
            .zip(&prep.row_scale)
            .map(|(r, s)| (r * s).abs())
            .fold(0.0, f64::max)
            / tau
            / (1.0 + b_inf_orig);
        let rd_norm = (res.rd.iter().map(|m| m.norm_squared()).sum::<f64>() + res.rf.norm_squared()).sqrt();
        let dres = rd_norm / tau / (1.0 + c_norm);
        let pobj = res.pobj / tau;
        let dobj = res.dobj / tau;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        log::trace!(
            "ipm {:3}: pres {:.2e} dres {:.2e} gap {:.2e} tau {:.2e} kappa {:.2e}",
            iter, pres, dres, gap, st.tau, st.kappa
        );

        if pres <= config.feas_tol && dres <= config.feas_tol && gap <= config.gap_tol {
            let status = if has_objective { SdpStatus::Optimal } else { SdpStatus::Feasible };
            return Outcome::Done(normalized_solution(prep, &st, status, iter, None));
        }
        if res.dobj > 0.0 {
            // Normalize first: on feasibility problems y and Z can shrink toward underflow.
            let s = st
                .y
                .amax()
                .max(st.z.iter().map(|z| z.amax()).fold(0.0, f64::max));
            if s > 0.0 {
                let ray_res = (res.aty_z.iter().map(|m| (m / s).norm_squared()).sum::<f64>()
                    + (prep.free.transpose() * &st.y / s).norm_squared())
                .sqrt();
                if ray_res / (res.dobj / s) <= config.feas_tol {
                    let cert = dual_ray(prep, &st.y, res.dobj);
                    return Outcome::Done(normalized_solution(prep, &st, SdpStatus::Infeasible, iter, Some(cert)));
                }
            }
        }
        if res.pobj < 0.0 {
            let s = st.u.amax().max(st.x.iter().map(|x| x.amax()).fold(0.0, f64::max));
            if s > 0.0 && (&res.ax / s).norm() / (-res.pobj / s) <= config.feas_tol {
                return Outcome::Done(normalized_solution(prep, &st, SdpStatus::Unbounded, iter, None));
            }
        }

        let mu = (inner(&st.x, &st.z) + st.tau * st.kappa) / nu;
        let lin = match linearize(prep, &st, config.parallel) {
            Some(l) => l,
            None => {
                log::debug!("ipm {}: Schur complement is numerically singular", iter);
                return Outcome::Stalled(start_point(&st, iter));
            }
        };

        let pred = match direction(prep, &st, &res, &lin, mu, 0.0, 1.0, None) {
            Some(d) => d,
            None => return Outcome::Stalled(start_point(&st, iter)),
        };
        let alpha_aff = step_length(&st, &pred).min(1.0);
        let mu_aff = (st
            .x
            .iter()
            .zip(&pred.dx)
            .zip(st.z.iter().zip(&pred.dz))
            .map(|((x, dx), (z, dz))| (x + dx * alpha_aff).dot(&(z + dz * alpha_aff)))
            .sum::<f64>()
            + (st.tau + alpha_aff * pred.dtau) * (st.kappa + alpha_aff * pred.dkappa))
            / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let corr: Vec<DMatrix<f64>> = pred
            .dx
            .iter()
            .zip(&pred.dz)
            .zip(&lin.zinv)
            .map(|((dx, dz), zi)| sym(dx * dz * zi))
            .collect();
        let corr_tk = pred.dtau * pred.dkappa;
        let dir = match direction(prep, &st, &res, &lin, mu, sigma, 1.0 - sigma, Some((&corr, corr_tk))) {
            Some(d) => d,
            None => return Outcome::Stalled(start_point(&st, iter)),
        };
        let alpha = (STEP_FRACTION * step_length(&st, &dir)).min(1.0);
        if !alpha.is_finite() || alpha < MIN_STEP {
            short_steps += 1;
            if short_steps >= MAX_SHORT_STEPS || !alpha.is_finite() {
                return Outcome::Stalled(start_point(&st, iter));
            }
        } else {
            short_steps = 0;
        }
        apply_step(&mut st, &dir, alpha);
        if !(st.tau.is_finite() && st.kappa.is_finite()) {
            return Outcome::Stalled(start_point(&st, iter));
        }
    }
    Outcome::Stalled(start_point(&st, max_iter))
}

fn residuals(prep: &Prepared, st: &State) -> Residuals {
    let ax = prep.apply(&st.x) + &prep.free * &st.u;
    let rp = &prep.b * st.tau - &ax;
    let aty = prep.apply_adjoint(&st.y);
    let aty_z: Vec<DMatrix<f64>> = aty.iter().zip(&st.z).map(|(a, z)| a + z).collect();
    let rd: Vec<DMatrix<f64>> = prep.c_blocks.iter().zip(&aty_z).map(|(c, a)| c * st.tau - a).collect();
    let rf = &prep.cf * st.tau - prep.free.transpose() * &st.y;
    let pobj = inner(&prep.c_blocks, &st.x) + prep.cf.dot(&st.u);
    let dobj = prep.b.dot(&st.y);
    let rg = st.kappa + pobj - dobj;
    Residuals { rp, rd, rf, rg, aty_z, ax, pobj, dobj }
}

fn linearize(prep: &Prepared, st: &State, parallel: bool) -> Option<Linearization> {
    let zinv: Vec<DMatrix<f64>> = st.z.iter().map(spd_inverse).collect::<Option<_>>()?;
    let m = prep.m;
    let contributions: Vec<Vec<(usize, usize, f64)>> = if parallel {
        (0..prep.blocks.len())
            .into_par_iter()
            .map(|b| block_schur(&prep.by_block[b], &st.x[b], &zinv[b], m))
            .collect()
    } else {
        (0..prep.blocks.len())
            .map(|b| block_schur(&prep.by_block[b], &st.x[b], &zinv[b], m))
            .collect()
    };
    let mut schur = DMatrix::zeros(m, m);
    for list in contributions {
        for (i, j, v) in list {
            schur[(i, j)] += v;
            if i != j {
                schur[(j, i)] += v;
            }
        }
    }
    let kkt = Kkt::factor(schur, &prep.free)?;
    let hc: Vec<DMatrix<f64>> = st
        .x
        .iter()
        .zip(&prep.c_blocks)
        .zip(&zinv)
        .map(|((x, c), zi)| hkm(x, c, zi))
        .collect();
    let v = prep.apply(&hc);
    let c_hc = inner(&prep.c_blocks, &hc);
    let (z2y, z2u) = kkt.solve(&(&prep.b + &v), &prep.cf, &prep.free)?;
    Some(Linearization { zinv, kkt, hc, v, c_hc, z2y, z2u })
}

#[allow(clippy::too_many_arguments)]
fn direction(
    prep: &Prepared,
    st: &State,
    res: &Residuals,
    lin: &Linearization,
    mu: f64,
    sigma: f64,
    eta: f64,
    corr: Option<(&Vec<DMatrix<f64>>, f64)>,
) -> Option<Direction> {
    let target = sigma * mu;
    // D0 = σμZ⁻¹ - X - corr - η 𝓗(r_d)
    let d0: Vec<DMatrix<f64>> = (0..prep.blocks.len())
        .map(|b| {
            let mut r = &lin.zinv[b] * target - &st.x[b];
            if let Some((c, _)) = corr {
                r -= &c[b];
            }
            if eta != 0.0 {
                r -= hkm(&st.x[b], &res.rd[b], &lin.zinv[b]) * eta;
            }
            r
        })
        .collect();
    let corr_tk = corr.map(|(_, c)| c).unwrap_or(0.0);
    let r1 = &res.rp * eta - prep.apply(&d0);
    let r2 = &res.rf * eta;
    let (z1y, z1u) = lin.kkt.solve(&r1, &r2, &prep.free)?;

    let vmb = &lin.v - &prep.b;
    let rhs4 = -eta * res.rg - inner(&prep.c_blocks, &d0) - (target - st.tau * st.kappa - corr_tk) / st.tau;
    let denom = vmb.dot(&lin.z2y) + prep.cf.dot(&lin.z2u) - st.kappa / st.tau - lin.c_hc;
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    let dtau = (rhs4 - vmb.dot(&z1y) - prep.cf.dot(&z1u)) / denom;
    let dy = z1y + &lin.z2y * dtau;
    let du = z1u + &lin.z2u * dtau;
    let aty = prep.apply_adjoint(&dy);
    let dz: Vec<DMatrix<f64>> = (0..prep.blocks.len())
        .map(|b| sym(&res.rd[b] * eta - &aty[b] + &prep.c_blocks[b] * dtau))
        .collect();
    let dx: Vec<DMatrix<f64>> = (0..prep.blocks.len())
        .map(|b| sym(&d0[b] + hkm(&st.x[b], &aty[b], &lin.zinv[b]) - &lin.hc[b] * dtau))
        .collect();
    let dkappa = (target - st.tau * st.kappa - corr_tk - st.kappa * dtau) / st.tau;
    if !dtau.is_finite() || !dkappa.is_finite() {
        return None;
    }
    Some(Direction { dx, dz, dy, du, dtau, dkappa })
}

fn step_length(st: &State, d: &Direction) -> f64 {
    let mut alpha = max_scalar_step(st.tau, d.dtau).min(max_scalar_step(st.kappa, d.dkappa));
    for (x, dx) in st.x.iter().zip(&d.dx) {
        alpha = alpha.min(max_psd_step(x, dx));
    }
    for (z, dz) in st.z.iter().zip(&d.dz) {
        alpha = alpha.min(max_psd_step(z, dz));
    }
    alpha
}

fn apply_step(st: &mut State, d: &Direction, alpha: f64) {
    for (x, dx) in st.x.iter_mut().zip(&d.dx) {
        *x += dx * alpha;
    }
    for (z, dz) in st.z.iter_mut().zip(&d.dz) {
        *z += dz * alpha;
    }
    st.y += &d.dy * alpha;
    st.u += &d.du * alpha;
    st.tau += alpha * d.dtau;
    st.kappa += alpha * d.dkappa;
}

fn start_point(st: &State, iterations: usize) -> Start {
    let t = st.tau;
    Start {
        x: st.x.iter().map(|x| x / t).collect(),
        u: &st.u / t,
        y: &st.y / t,
        z: st.z.iter().map(|z| z / t).collect(),
        iterations,
    }
}

fn dual_ray(prep: &Prepared, y: &DVector<f64>, by: f64) -> InfeasibilityCertificate {
    let total = prep.kept.iter().copied().max().map(|v| v + 1).unwrap_or(0);
    let mut ray = vec![0.0; total];
    for (j, &orig) in prep.kept.iter().enumerate() {
        ray[orig] = y[j] / prep.row_scale[j] / by;
    }
    InfeasibilityCertificate { ray, max_eigenvalue: f64::NAN, free_residual: f64::NAN }
}

fn normalized_solution(
    prep: &Prepared,
    st: &State,
    status: SdpStatus,
    iterations: usize,
    certificate: Option<InfeasibilityCertificate>,
) -> SdpSolution {
    let t = st.tau;
    let total = prep.kept.iter().copied().max().map(|v| v + 1).unwrap_or(0);
    solution_from_scaled(
        prep,
        st.x.iter().map(|x| x / t).collect(),
        &st.u / t,
        &st.y / t,
        st.z.iter().map(|z| z / t).collect(),
        status,
        SolveMethod::InteriorPoint,
        iterations,
        certificate,
        total,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solution_from_scaled(
    prep: &Prepared,
    x: Vec<DMatrix<f64>>,
    u: DVector<f64>,
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
    status: SdpStatus,
    method: SolveMethod,
    iterations: usize,
    certificate: Option<InfeasibilityCertificate>,
    total_rows: usize,
) -> SdpSolution {
    let total_rows = total_rows.max(prep.kept.iter().copied().max().map(|v| v + 1).unwrap_or(0));
    let mut cert = certificate;
    if let Some(c) = cert.as_mut() {
        c.ray.resize(total_rows, 0.0);
    }
    SdpSolution {
        status,
        method,
        blocks: x,
        free: u.iter().copied().collect(),
        dual: prep.unscale_dual(&y, total_rows),
        dual_slack: z.into_iter().map(|m| m * prep.obj_scale).collect(),
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        min_eigenvalues: Vec::new(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations,
        certificate: cert,
        psd_tol: 0.0,
    }
}
