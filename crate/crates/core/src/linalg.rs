//! Sparse compressed-row matrices, restarted GMRES with zero-fill incomplete
//! LU preconditioning, and small dense helpers used as fallbacks and oracles.

use crate::error::{Error, Result};

/// Compressed-row sparse matrix. Column indices are strictly increasing
/// within each row and duplicates are summed at assembly.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                dense[i][j] = v;
            }
        }
        dense
    }

    /// Largest absolute asymmetry |A - A^T|_max (square matrices).
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Sum duplicate (row, col) triplets into canonical compressed-row form.
impl SparseMatrix {
    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push((j, i, v));
            }
        }
        assemble_from_triplets(&triplets, self.ncols, self.nrows)
            .expect("transpose of a valid matrix cannot fail")
    }
}

pub fn assemble_from_triplets(
    triplets: &[(usize, usize, f64)],
    nrows: usize,
    ncols: usize,
) -> Result<SparseMatrix> {
    for &(r, c, _) in triplets {
        if r >= nrows || c >= ncols {
            return Err(Error::InvalidArgument(format!(
                "triplet ({r},{c}) out of range for {nrows}x{ncols} matrix"
            )));
        }
    }
    // bucket by row, then sort and merge columns
    let mut counts = vec![0usize; nrows];
    for &(r, _, _) in triplets {
        counts[r] += 1;
    }
    let mut starts = vec![0usize; nrows + 1];
    for i in 0..nrows {
        starts[i + 1] = starts[i] + counts[i];
    }
    let mut by_row: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
    let mut cursor = starts.clone();
    for &(r, c, v) in triplets {
        by_row[cursor[r]] = (c, v);
        cursor[r] += 1;
    }

    let mut row_offsets = Vec::with_capacity(nrows + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for i in 0..nrows {
        let row = &mut by_row[starts[i]..starts[i + 1]];
        row.sort_unstable_by_key(|&(c, _)| c);
        let mut k = 0;
        while k < row.len() {
            let col = row[k].0;
            let mut sum = 0.0;
            while k < row.len() && row[k].0 == col {
                sum += row[k].1;
                k += 1;
            }
            col_indices.push(col);
            values.push(sum);
        }
        row_offsets.push(col_indices.len());
    }
    Ok(SparseMatrix {
        nrows,
        ncols,
        row_offsets,
        col_indices,
        values,
    })
}

/// y = A x
pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.ncols {
        return Err(Error::InvalidArgument(format!(
            "spmv dimension mismatch: matrix {}x{}, vector {}",
            a.nrows,
            a.ncols,
            x.len()
        )));
    }
    let mut y = vec![0.0; a.nrows];
    for i in 0..a.nrows {
        let (cols, vals) = a.row(i);
        let mut acc = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            acc += v * x[j];
        }
        y[i] = acc;
    }
    Ok(y)
}

/// Preconditioner interface: z = M^{-1} r.
pub trait Preconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

/// Identity (no preconditioning).
pub struct IdentityPrecond;

impl Preconditioner for IdentityPrecond {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

/// Diagonal (Jacobi) scaling, the fallback when ILU(0) breaks down.
pub struct DiagonalPrecond {
    inv_diag: Vec<f64>,
}

impl DiagonalPrecond {
    pub fn new(a: &SparseMatrix) -> Self {
        let inv_diag = (0..a.nrows)
            .map(|i| {
                let d = a.get(i, i);
                if d.abs() > 0.0 {
                    1.0 / d
                } else {
                    1.0
                }
            })
            .collect();
        DiagonalPrecond { inv_diag }
    }
}

impl Preconditioner for DiagonalPrecond {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.inv_diag).map(|(v, d)| v * d).collect()
    }
}

/// Zero-fill incomplete LU factorisation sharing A's sparsity pattern.
/// L has unit diagonal (stored implicitly); U holds the diagonal.
pub struct Ilu0 {
    lu: SparseMatrix,
    diag_ptr: Vec<usize>,
}

/// Level-of-fill selection for the incomplete factorisation.
#[derive(Debug, Clone, Copy, Default)]
pub struct IluOptions {
    pub fill_level: usize,
}

pub fn ilu0_factor(a: &SparseMatrix) -> Result<Ilu0> {
    ilu_factor(a, IluOptions::default())
}

/// Incomplete LU with level-of-fill p (ILU(p)): entries created during
/// elimination are kept while their fill level lev(i,k) + lev(k,j) + 1 stays
/// at most p, original entries having level 0. IKJ ordering with a sorted
/// linked list over the active row, so fill created to the left of the
/// current pivot column still participates in the elimination of its row.
pub fn ilu_factor(a: &SparseMatrix, opts: IluOptions) -> Result<Ilu0> {
    if a.nrows != a.ncols {
        return Err(Error::InvalidArgument("ILU needs a square matrix".into()));
    }
    let n = a.nrows;
    let p = opts.fill_level;

    // factored rows, column-sorted; levels kept only while factoring
    let mut rows: Vec<Vec<(usize, f64, usize)>> = Vec::with_capacity(n);
    let mut diag_of: Vec<usize> = Vec::with_capacity(n); // position of the diagonal in rows[i]

    // dense work arrays for the active row
    const NONE: usize = usize::MAX;
    let mut val = vec![0.0f64; n];
    let mut lev = vec![NONE; n]; // NONE = not in the active row
    let mut next = vec![NONE; n]; // sorted singly linked list over columns

    for i in 0..n {
        // load row i of A
        let (cols, vals) = a.row(i);
        if cols.is_empty() {
            return Err(Error::FactorBreakdown { row: i });
        }
        let mut head = NONE;
        for (&j, &v) in cols.iter().zip(vals).rev() {
            val[j] = v;
            lev[j] = 0;
            next[j] = head;
            head = j;
        }

        // eliminate columns k < i in ascending order
        let mut k = head;
        let mut prev = NONE;
        while k != NONE && k < i {
            if lev[k] <= p {
                let krow = &rows[k];
                let dk = diag_of[k];
                let pivot = krow[dk].1;
                if pivot.abs() < 1e-300 {
                    for j in cols_of(head, &next) {
                        lev[j] = NONE;
                    }
                    return Err(Error::FactorBreakdown { row: i });
                }
                let lik = val[k] / pivot;
                val[k] = lik;
                let base = lev[k];
                // subtract lik * U(k, k+1..); walk the linked list in step
                let mut pos = k;
                for &(j, ukj, lkj) in &krow[dk + 1..] {
                    let fill = base + lkj + 1;
                    if lev[j] != NONE {
                        val[j] -= lik * ukj;
                        if fill < lev[j] {
                            lev[j] = fill;
                        }
                    } else if fill <= p {
                        val[j] = -lik * ukj;
                        lev[j] = fill;
                        // insert j into the sorted list starting from pos
                        while next[pos] != NONE && next[pos] < j {
                            pos = next[pos];
                        }
                        next[j] = next[pos];
                        next[pos] = j;
                    }
                }
            } else {
                // dropped multiplier: remove the entry entirely
                lev[k] = NONE;
                val[k] = 0.0;
                if prev == NONE {
                    head = next[k];
                } else {
                    next[prev] = next[k];
                }
                let nk = next[k];
                next[k] = NONE;
                k = nk;
                continue;
            }
            prev = k;
            k = next[k];
        }

        // harvest the active row
        let mut row = Vec::new();
        let mut dpos = NONE;
        let mut j = head;
        while j != NONE {
            if lev[j] <= p {
                if j == i {
                    dpos = row.len();
                }
                row.push((j, val[j], lev[j]));
            }
            let nj = next[j];
            lev[j] = NONE;
            val[j] = 0.0;
            next[j] = NONE;
            j = nj;
        }
        if dpos == NONE || row[dpos].1.abs() < 1e-300 {
            return Err(Error::FactorBreakdown { row: i });
        }
        rows.push(row);
        diag_of.push(dpos);
    }

    // pack into compressed-row storage
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    let mut diag_ptr = Vec::with_capacity(n);
    row_offsets.push(0);
    for (i, row) in rows.iter().enumerate() {
        diag_ptr.push(col_indices.len() + diag_of[i]);
        for &(j, v, _) in row {
            col_indices.push(j);
            values.push(v);
        }
        row_offsets.push(col_indices.len());
    }
    Ok(Ilu0 {
        lu: SparseMatrix {
            nrows: n,
            ncols: n,
            row_offsets,
            col_indices,
            values,
        },
        diag_ptr,
    })
}

fn cols_of(head: usize, next: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut j = head;
    while j != usize::MAX {
        out.push(j);
        j = next[j];
    }
    out
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.lu.nrows;
        let mut y = r.to_vec();
        // forward: L y = r (unit diagonal)
        for i in 0..n {
            let (r0, _) = (self.lu.row_offsets[i], self.lu.row_offsets[i + 1]);
            let mut acc = r[i];
            for k in r0..self.diag_ptr[i] {
                acc -= self.lu.values[k] * y[self.lu.col_indices[k]];
            }
            y[i] = acc;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in (self.diag_ptr[i] + 1)..self.lu.row_offsets[i + 1] {
                acc -= self.lu.values[k] * y[self.lu.col_indices[k]];
            }
            y[i] = acc / self.lu.values[self.diag_ptr[i]];
        }
        y
    }
}

/// Outcome of one linear solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES on the left-preconditioned system. Convergence is
/// declared when the preconditioned residual drops below `tol` relative to
/// the preconditioned right-hand side.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    m: &dyn Preconditioner,
    tol: f64,
    restart: usize,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    if a.nrows != a.ncols {
        return Err(Error::InvalidArgument("gmres needs a square matrix".into()));
    }
    if b.len() != a.nrows {
        return Err(Error::InvalidArgument("gmres rhs dimension mismatch".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("gmres tolerance must be positive".into()));
    }
    let n = a.nrows;
    let mut x = vec![0.0; n];
    let b_pre = m.apply(b);
    let b_norm = norm(&b_pre);
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
            },
        ));
    }

    let mut total_iters = 0usize;
    #[allow(unused_assignments)]
    let mut res = f64::INFINITY;
    'outer: while total_iters < maxit {
        // r = M^{-1}(b - A x)
        let ax = spmv(a, &x)?;
        let raw: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut r = m.apply(&raw);
        let beta = norm(&r);
        res = beta / b_norm;
        if res <= tol {
            break;
        }
        let k_max = restart.min(maxit - total_iters);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
        for v in r.iter_mut() {
            *v /= beta;
        }
        basis.push(r);
        let mut h = vec![vec![0.0f64; k_max]; k_max + 1];
        let mut cs = vec![0.0f64; k_max];
        let mut sn = vec![0.0f64; k_max];
        let mut g = vec![0.0f64; k_max + 1];
        g[0] = beta;

        let mut k_used = 0;
        for k in 0..k_max {
            total_iters += 1;
            let av = spmv(a, &basis[k])?;
            let mut w = m.apply(&av);
            // modified Gram-Schmidt
            for j in 0..=k {
                let hjk = dot(&w, &basis[j]);
                h[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                    *wi -= hjk * vi;
                }
            }
            let hk1 = norm(&w);
            h[k + 1][k] = hk1;
            // apply accumulated Givens rotations
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + hk1 * hk1).sqrt();
            if denom == 0.0 {
                k_used = k + 1;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = hk1 / denom;
            h[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            res = g[k + 1].abs() / b_norm;
            if res <= tol || hk1 == 0.0 {
                break;
            }
            if hk1 > 0.0 {
                for v in w.iter_mut() {
                    *v /= hk1;
                }
                basis.push(w);
            }
        }

        // back substitution for y, then x += V y
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * vi;
            }
        }
        if res <= tol {
            break 'outer;
        }
    }

    // final check on the preconditioned residual
    let ax = spmv(a, &x)?;
    let raw: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let final_res = norm(&m.apply(&raw)) / b_norm;
    Ok((
        x,
        SolveReport {
            iterations: total_iters,
            final_residual: final_res,
            converged: final_res <= tol,
        },
    ))
}

/// Dense LU with partial pivoting; oracle and small-system fallback.
/// Sparse direct solve (LU with pivoting, via `faer`). Used as the
/// robust fallback when the iterative path cannot reach its tolerance,
/// and as the primary solver for large systems where restarted GMRES
/// stagnates on the stiff coupled blocks.
pub fn sparse_direct_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    use faer::prelude::*;
    use faer::sparse::{SparseColMat, Triplet};
    if a.nrows != a.ncols || b.len() != a.nrows {
        return Err(Error::InvalidArgument(
            "direct solve needs a square system".into(),
        ));
    }
    let n = a.nrows;
    let mut trips: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(a.nnz());
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            trips.push(Triplet::new(i, j, v));
        }
    }
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| Error::InvalidArgument(format!("sparse matrix build: {e:?}")))?;
    let lu = m
        .sp_lu()
        .map_err(|_| Error::SingularMatrix { col: 0, pivot: 0.0 })?;
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    let sol: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix { col: 0, pivot: 0.0 });
    }
    Ok(sol)
}

pub fn dense_lu_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    if n == 0 || a.iter().any(|row| row.len() != n) || b.len() != n {
        return Err(Error::InvalidArgument("dense solve needs square system".into()));
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if pval < 1e-14 {
            return Err(Error::SingularMatrix { col, pivot: pval });
        }
        m.swap(col, piv);
        x.swap(col, piv);
        perm.swap(col, piv);
        for r in (col + 1)..n {
            let factor = m[r][col] / m[col][col];
            m[r][col] = factor;
            for c in (col + 1)..n {
                let upper = m[col][c];
                m[r][c] -= factor * upper;
            }
            x[r] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= m[col][col];
        for r in 0..col {
            x[r] -= m[r][col] * x[col];
        }
    }
    Ok(x)
}

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations.
/// Used by the dense spectral oracles (coercivity, inf-sup floor).
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _ in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i][j] * m[i][j];
            }
        }
        let scale: f64 = (0..n).map(|i| m[i][i].abs()).fold(0.0, f64::max).max(1e-300);
        if off.sqrt() < 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Dense Cholesky factor (lower triangular) of an SPD matrix.
pub fn dense_cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::SingularMatrix { col: i, pivot: sum });
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Forward substitution L y = b for lower-triangular L.
pub fn forward_substitute(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let f = l[i][k] * y[k];
            y[i] -= f;
        }
        y[i] /= l[i][i];
    }
    y
}
