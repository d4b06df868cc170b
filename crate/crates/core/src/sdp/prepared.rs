//! Row-normalized, block-indexed copy of an [`SdpProblem`] shared by the solvers.

use nalgebra::{DMatrix, DVector};

use super::{SdpProblem, SymEntry};

/// Constraint entries restricted to one block: `(row, col, value)` with `row <= col`.
pub(crate) type BlockEntries = Vec<(usize, usize, f64)>;

pub(crate) struct Prepared {
    pub blocks: Vec<usize>,
    pub nf: usize,
    pub m: usize,
    /// Original index of each kept constraint.
    pub kept: Vec<usize>,
    /// Kept row `j` equals the original row divided by `row_scale[j]`.
    pub row_scale: Vec<f64>,
    /// `by_block[b]` lists `(row, entries)` for every kept row touching block `b`.
    pub by_block: Vec<Vec<(usize, BlockEntries)>>,
    /// Free-variable coefficients, `m × nf`.
    pub free: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c_blocks: Vec<DMatrix<f64>>,
    pub cf: DVector<f64>,
    /// Objective was divided by this factor.
    pub obj_scale: f64,
    /// Set when some constraint reads `0 = b_j` with `b_j != 0`.
    pub inconsistent_row: Option<usize>,
}

fn merge_entries(entries: &[SymEntry], nblocks: usize) -> Vec<BlockEntries> {
    let mut per_block: Vec<BlockEntries> = vec![Vec::new(); nblocks];
    for e in entries {
        per_block[e.block].push((e.row, e.col, e.value));
    }
    for list in &mut per_block {
        list.sort_by_key(|a| (a.0, a.1));
        let mut merged: BlockEntries = Vec::with_capacity(list.len());
        for &(r, c, v) in list.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        *list = merged;
    }
    per_block
}

fn entries_norm_sq(entries: &BlockEntries) -> f64 {
    entries.iter().map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v }).sum()
}

impl Prepared {
    pub fn new(problem: &SdpProblem) -> Prepared {
        let nblocks = problem.blocks.len();
        let nf = problem.free_count;
        let mut kept = Vec::new();
        let mut row_scale = Vec::new();
        let mut rows: Vec<Vec<BlockEntries>> = Vec::new();
        let mut free_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut rhs = Vec::new();
        let mut inconsistent_row = None;
        let rhs_scale = 1.0 + problem.rhs_inf();
        for (j, con) in problem.constraints.iter().enumerate() {
            let per_block = merge_entries(&con.form.entries, nblocks);
            let mut free = vec![0.0; nf];
            for &(k, v) in &con.form.free {
                free[k] += v;
            }
            let norm_sq: f64 = per_block.iter().map(entries_norm_sq).sum::<f64>()
                + free.iter().map(|v| v * v).sum::<f64>();
            let norm = norm_sq.sqrt();
            if norm == 0.0 {
                if con.rhs.abs() > 1e-12 * rhs_scale && inconsistent_row.is_none() {
                    inconsistent_row = Some(j);
                }
                continue;
            }
            kept.push(j);
            row_scale.push(norm);
            rows.push(
                per_block
                    .into_iter()
                    .map(|l| l.into_iter().map(|(r, c, v)| (r, c, v / norm)).collect())
                    .collect(),
            );
            free_rows.push(free.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, v)| (k, v / norm)).collect());
            rhs.push(con.rhs / norm);
        }
        let m = kept.len();
        let mut by_block: Vec<Vec<(usize, BlockEntries)>> = vec![Vec::new(); nblocks];
        for (j, per_block) in rows.into_iter().enumerate() {
            for (blk, entries) in per_block.into_iter().enumerate() {
                if !entries.is_empty() {
                    by_block[blk].push((j, entries));
                }
            }
        }
        let mut free = DMatrix::zeros(m, nf);
        for (j, row) in free_rows.iter().enumerate() {
            for &(k, v) in row {
                free[(j, k)] = v;
            }
        }

        let obj_blocks = merge_entries(&problem.objective.entries, nblocks);
        let mut cf: DVector<f64> = DVector::zeros(nf);
        for &(k, v) in &problem.objective.free {
            cf[k] += v;
        }
        let mut c_blocks: Vec<DMatrix<f64>> = problem.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (blk, entries) in obj_blocks.iter().enumerate() {
            for &(r, c, v) in entries {
                c_blocks[blk][(r, c)] += v;
                if r != c {
                    c_blocks[blk][(c, r)] += v;
                }
            }
        }
        let obj_norm = (c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + cf.norm_squared()).sqrt();
        let obj_scale = obj_norm.max(1.0);
        for c in &mut c_blocks {
            *c /= obj_scale;
        }
        cf /= obj_scale;

        Prepared {
            blocks: problem.blocks.clone(),
            nf,
            m,
            kept,
            row_scale,
            by_block,
            free,
            b: DVector::from_vec(rhs),
            c_blocks,
            cf,
            obj_scale,
            inconsistent_row,
        }
    }

    /// `A(X)` for the scaled rows (free columns excluded).
    pub fn apply(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (blk, rows) in self.by_block.iter().enumerate() {
            let xb = &x[blk];
            for (j, entries) in rows {
                out[*j] += inner_entries(entries, xb);
            }
        }
        out
    }

    /// `Σ_j y_j A_j`, one dense symmetric matrix per block.
    pub fn apply_adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (blk, rows) in self.by_block.iter().enumerate() {
            let ob = &mut out[blk];
            for (j, entries) in rows {
                let yj = y[*j];
                if yj == 0.0 {
                    continue;
                }
                for &(r, c, v) in entries {
                    ob[(r, c)] += yj * v;
                    if r != c {
                        ob[(c, r)] += yj * v;
                    }
                }
            }
        }
        out
    }

    pub fn barrier_degree(&self) -> f64 {
        self.blocks.iter().sum::<usize>() as f64
    }

    /// Converts a scaled dual vector into the caller's row scaling.
    pub fn unscale_dual(&self, y: &DVector<f64>, total_rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; total_rows];
        for (j, &orig) in self.kept.iter().enumerate() {
            out[orig] = y[j] / self.row_scale[j] * self.obj_scale;
        }
        out
    }

    /// `(λ_max(Σ y_j A_j), ‖Fᵀy‖∞)` for a ray normalized to `bᵀy = 1`, in original scaling.
    pub fn certificate_quality(&self, problem: &SdpProblem, ray: &[f64]) -> (f64, f64) {
        let (mats, free) = adjoint_original(problem, ray);
        let lmax = mats
            .iter()
            .map(|m| -super::min_eigenvalue_unchecked(&(-m)))
            .fold(f64::NEG_INFINITY, f64::max);
        let fres = free.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        (lmax, fres)
    }
}

/// `(Σ y_j A_j, Fᵀy)` over the caller's constraint rows.
pub(crate) fn adjoint_original(problem: &SdpProblem, y: &[f64]) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let mut mats: Vec<DMatrix<f64>> = problem.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut free = vec![0.0; problem.free_count];
    for (con, &yj) in problem.constraints.iter().zip(y) {
        if yj == 0.0 {
            continue;
        }
        for e in &con.form.entries {
            mats[e.block][(e.row, e.col)] += yj * e.value;
            if e.row != e.col {
                mats[e.block][(e.col, e.row)] += yj * e.value;
            }
        }
        for &(k, v) in &con.form.free {
            free[k] += yj * v;
        }
    }
    (mats, free)
}

/// Dense symmetric matrices of a linear form.
pub(crate) fn form_matrices(problem: &SdpProblem, form: &super::LinearForm) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let mut mats: Vec<DMatrix<f64>> = problem.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut free = vec![0.0; problem.free_count];
    for e in &form.entries {
        mats[e.block][(e.row, e.col)] += e.value;
        if e.row != e.col {
            mats[e.block][(e.col, e.row)] += e.value;
        }
    }
    for &(k, v) in &form.free {
        free[k] += v;
    }
    (mats, free)
}

/// `<A, X>` for symmetric `A` given by upper-triangular entries.
pub(crate) fn inner_entries(entries: &BlockEntries, x: &DMatrix<f64>) -> f64 {
    entries
        .iter()
        .map(|&(r, c, v)| if r == c { v * x[(r, r)] } else { v * (x[(r, c)] + x[(c, r)]) })
        .sum()
}

pub(crate) fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}
