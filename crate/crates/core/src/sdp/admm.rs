//! Alternating-direction augmented Lagrangian method on the dual problem.
//!
//! Each sweep solves `(AAᵀ + FFᵀ) y = μ(b - A(X) - Fu) - A(Z - C) + F cf`,
//! projects `V = C - Aᵀy - μX` onto the PSD cone for `Z`, and sets
//! `X = (Z - V)/μ`, `u += (Fᵀy - cf)/μ`.

use nalgebra::{Cholesky, DMatrix};

use super::ipm::{solution_from_scaled, Start};
use super::prepared::{inner, Prepared};
use super::{SdpSolution, SdpStatus, SolveMethod, SolverConfig};

const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;

fn psd_split(v: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = v.nrows();
    let eig = ((v + v.transpose()) * 0.5).symmetric_eigen();
    let mut pos = DMatrix::zeros(n, n);
    let mut neg = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        let q = eig.eigenvectors.column(k);
        let outer = q * q.transpose();
        if lam > 0.0 {
            pos += outer * lam;
        } else if lam < 0.0 {
            neg -= outer * lam;
        }
    }
    (pos, neg)
}

/// `AAᵀ + FFᵀ` for the scaled rows.
fn gram_of_rows(prep: &Prepared) -> DMatrix<f64> {
    let m = prep.m;
    let mut g = &prep.free * prep.free.transpose();
    for (rows, &n) in prep.by_block.iter().zip(&prep.blocks) {
        // Dense lookup: entry (r, c) of row j sits at slot r * n + c.
        let mut slots: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n * n];
        for (j, entries) in rows {
            for &(r, c, v) in entries {
                let w = if r == c { v } else { v * 2f64.sqrt() };
                slots[r * n + c].push((*j, w));
            }
        }
        for list in &slots {
            for &(i, a) in list {
                for &(j, b) in list {
                    g[(i, j)] += a * b;
                }
            }
        }
    }
    debug_assert_eq!(g.nrows(), m);
    g
}

pub(crate) fn run(prep: &Prepared, config: &SolverConfig, start: Start, budget: usize) -> SdpSolution {
    let m = prep.m;
    let total_rows = prep.kept.iter().copied().max().map(|v| v + 1).unwrap_or(0);
    let mut gram = gram_of_rows(prep);
    let diag_max = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max).max(1.0);
    for i in 0..m {
        gram[(i, i)] += 1e-12 * diag_max;
    }
    let chol = match Cholesky::new(gram) {
        Some(c) => c,
        None => {
            return solution_from_scaled(
                prep, start.x, start.u, start.y, start.z,
                SdpStatus::NumericalFailure, SolveMethod::SplittingFallback, start.iterations, None, total_rows,
            )
        }
    };

    let b_inf_orig = prep
        .b
        .iter()
        .zip(&prep.row_scale)
        .map(|(b, s)| (b * s).abs())
        .fold(0.0, f64::max);
    let c_norm = (prep.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + prep.cf.norm_squared()).sqrt();
    let has_objective = c_norm > 0.0;

    let Start { mut x, mut u, mut y, mut z, iterations } = start;
    for xb in x.iter_mut() {
        *xb = psd_split(xb).0;
    }
    for zb in z.iter_mut() {
        *zb = psd_split(zb).0;
    }
    let mut mu = 1.0;
    let mut ratio_acc = 0.0;
    let mut ratio_n = 0usize;
    let mut status = SdpStatus::NumericalFailure;
    let mut used = 0;

    for it in 1..=budget {
        used = it;
        let ax = prep.apply(&x) + &prep.free * &u;
        let zc: Vec<DMatrix<f64>> = z.iter().zip(&prep.c_blocks).map(|(z, c)| z - c).collect();
        let rhs = (&prep.b - &ax) * mu - prep.apply(&zc) + &prep.free * &prep.cf;
        y = chol.solve(&rhs);
        let aty = prep.apply_adjoint(&y);
        for b in 0..x.len() {
            let v = &prep.c_blocks[b] - &aty[b] - &x[b] * mu;
            let (pos, neg) = psd_split(&v);
            z[b] = pos;
            x[b] = neg / mu;
        }
        let fty = prep.free.transpose() * &y;
        u += (&fty - &prep.cf) / mu;

        if it % CHECK_EVERY != 0 && it != budget {
            continue;
        }
        let ax = prep.apply(&x) + &prep.free * &u;
        let pres = (&ax - &prep.b)
            .iter()
            .zip(&prep.row_scale)
            .map(|(r, s)| (r * s).abs())
            .fold(0.0, f64::max)
            / (1.0 + b_inf_orig);
        let dres_sq: f64 = (0..x.len())
            .map(|b| (&aty[b] + &z[b] - &prep.c_blocks[b]).norm_squared())
            .sum::<f64>()
            + (&fty - &prep.cf).norm_squared();
        let dres = dres_sq.sqrt() / (1.0 + c_norm);
        let pobj = inner(&prep.c_blocks, &x) + prep.cf.dot(&u);
        let dobj = prep.b.dot(&y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if it % (CHECK_EVERY * 50) == 0 {
            log::trace!("admm {}: pres {:.2e} dres {:.2e} gap {:.2e} mu {:.2e}", it, pres, dres, gap, mu);
        }
        if pres <= config.feas_tol && dres <= config.feas_tol && gap <= config.gap_tol {
            status = if has_objective { SdpStatus::Optimal } else { SdpStatus::Feasible };
            break;
        }
        if !(pres.is_finite() && dres.is_finite()) {
            break;
        }
        ratio_acc += (pres.max(1e-300) / dres.max(1e-300)).ln();
        ratio_n += 1;
        if it % ADAPT_EVERY == 0 && ratio_n > 0 {
            let mean = ratio_acc / ratio_n as f64;
            // Large primal residual: lower μ so the multiplier moves faster.
            if mean > 5f64.ln() {
                mu = (mu / 1.6).max(1e-6);
            } else if mean < -(5f64.ln()) {
                mu = (mu * 1.6).min(1e6);
            }
            ratio_acc = 0.0;
            ratio_n = 0;
        }
    }
    solution_from_scaled(
        prep, x, u, y, z, status, SolveMethod::SplittingFallback, iterations + used, None, total_rows,
    )
}
