//! Sparse LDL^T factorization with a reusable symbolic phase.
//!
//! Up-looking algorithm over the elimination tree. The symbolic analysis
//! (elimination tree and column counts of `L`) depends only on the sparsity
//! pattern, so it is done once per topology and every numeric factorization
//! reuses it. Entries that happen to be zero in a given step are carried as
//! explicit zeros.

/// Upper-triangular pattern in compressed-column form, already permuted.
/// Column `k` lists the rows `i <= k` that may be nonzero.
#[derive(Debug, Clone)]
pub struct UpperPattern {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SymbolicLdl {
    n: usize,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl SymbolicLdl {
    pub fn analyze(pattern: &UpperPattern) -> Self {
        let n = pattern.n;
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut counts = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &row in &pattern.row_idx[pattern.col_ptr[k]..pattern.col_ptr[k + 1]] {
                let mut i = row;
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    counts[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + counts[k];
        }
        SymbolicLdl { n, parent, l_ptr }
    }

    /// Number of stored off-diagonal entries of `L`.
    pub fn factor_nnz(&self) -> usize {
        self.l_ptr[self.n]
    }
}

/// Numeric factors plus scratch space, reused across factorizations.
#[derive(Debug, Clone)]
pub struct NumericLdl {
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    diag: Vec<f64>,
    y: Vec<f64>,
    flag: Vec<usize>,
    stack: Vec<usize>,
    col_len: Vec<usize>,
}

/// Factorization stopped at a pivot that was not safely positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub column: usize,
    pub pivot: f64,
}

impl NumericLdl {
    pub fn new(sym: &SymbolicLdl) -> Self {
        let nnz = sym.factor_nnz();
        NumericLdl {
            l_idx: vec![0; nnz],
            l_val: vec![0.0; nnz],
            diag: vec![0.0; sym.n],
            y: vec![0.0; sym.n],
            flag: vec![NONE; sym.n],
            stack: vec![0; sym.n],
            col_len: vec![0; sym.n],
        }
    }

    /// Factors the matrix whose upper-triangle values are `values`, aligned with
    /// `pattern.row_idx`. Pivots at or below `min_pivot` are reported as failures.
    pub fn factor(
        &mut self,
        sym: &SymbolicLdl,
        pattern: &UpperPattern,
        values: &[f64],
        min_pivot: f64,
    ) -> Result<(), PivotFailure> {
        let n = sym.n;
        for k in 0..n {
            self.y[k] = 0.0;
            let mut top = n;
            self.flag[k] = k;
            self.col_len[k] = 0;
            for p in pattern.col_ptr[k]..pattern.col_ptr[k + 1] {
                let mut i = pattern.row_idx[p];
                if i > k {
                    continue;
                }
                self.y[i] += values[p];
                let mut len = 0;
                while self.flag[i] != k {
                    self.stack[len] = i;
                    len += 1;
                    self.flag[i] = k;
                    i = sym.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    self.stack[top] = self.stack[len];
                }
            }
            let mut d = self.y[k];
            self.y[k] = 0.0;
            while top < n {
                let i = self.stack[top];
                top += 1;
                let yi = self.y[i];
                self.y[i] = 0.0;
                let start = sym.l_ptr[i];
                let end = start + self.col_len[i];
                for p in start..end {
                    self.y[self.l_idx[p]] -= self.l_val[p] * yi;
                }
                let l_ki = yi / self.diag[i];
                d -= l_ki * yi;
                self.l_idx[end] = k;
                self.l_val[end] = l_ki;
                self.col_len[i] += 1;
            }
            if !(d > min_pivot) {
                return Err(PivotFailure { column: k, pivot: d });
            }
            self.diag[k] = d;
        }
        Ok(())
    }

    /// Solves `L D L^T x = b` in place (permuted coordinates).
    pub fn solve_in_place(&self, sym: &SymbolicLdl, x: &mut [f64]) {
        let n = sym.n;
        for j in 0..n {
            let xj = x[j];
            for p in sym.l_ptr[j]..sym.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.diag[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in sym.l_ptr[j]..sym.l_ptr[j + 1] {
                xj -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = xj;
        }
    }
}
