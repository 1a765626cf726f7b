//! Small sparse linear-algebra kernel: CSR storage, reverse Cuthill–McKee
//! ordering and an envelope (skyline) Cholesky factorization.
//!
//! The meshes produced by this crate are ring- or grid-structured, so after
//! RCM reordering the envelope of every system stays close to one mesh row
//! and an envelope factorization is both fast and deterministic.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self { n, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, val));
    }

    pub fn build(mut self) -> SparseMatrix {
        self.entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { n: self.n, row_ptr, cols, vals }
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(c, v)| v * y[c]).sum::<f64>())
            .sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `self + alpha * other` (patterns are merged).
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.n, other.n);
        let mut b = TripletBuilder::with_capacity(self.n, self.nnz() + other.nnz());
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                b.add(i, c, v);
            }
            for (c, v) in other.row(i) {
                b.add(i, c, alpha * v);
            }
        }
        b.build()
    }

    pub fn add_diagonal(&self, d: &[f64]) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.n, self.nnz() + self.n);
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                b.add(i, c, v);
            }
            b.add(i, i, d[i]);
        }
        b.build()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(c, v)| (v - self.get(c, i)).abs() <= tol))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                m[(i, c)] += v;
            }
        }
        m
    }
}

/// Reverse Cuthill–McKee permutation of the symmetric pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &SparseMatrix) -> Vec<usize> {
    let n = a.n();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(c, _)| c).filter(|&c| c != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_last = |start: usize, visited: &[bool]| -> (usize, usize) {
        let mut level = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        level[start] = 0;
        let mut last = start;
        while let Some(u) = q.pop_front() {
            last = u;
            for &w in &adj[u] {
                if !visited[w] && level[w] == usize::MAX {
                    level[w] = level[u] + 1;
                    q.push_back(w);
                }
            }
        }
        (last, level[last])
    };

    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]).unwrap();
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut far, mut ecc) = bfs_last(start, &visited);
        for _ in 0..4 {
            let (f2, e2) = bfs_last(far, &visited);
            if e2 <= ecc {
                break;
            }
            start = far;
            far = f2;
            ecc = e2;
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor stored by rows within the matrix envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factorizes a symmetric positive definite matrix (RCM-reordered).
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let perm = rcm_ordering(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &SparseMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (c, _) in a.row(old) {
                let j = inv[c];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for old in 0..n {
            let i = inv[old];
            for (c, v) in a.row(old) {
                let j = inv[c];
                if j <= i {
                    data[offset[i] + (j - first[i])] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = data[offset[i] + (j - fi)];
                let ri = &data[offset[i] + (k0 - fi)..offset[i] + (j - fi)];
                let rj = &data[offset[j] + (k0 - fj)..offset[j] + (j - fj)];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                let ljj = data[offset[j] + (j - fj)];
                data[offset[i] + (j - fi)] = s / ljj;
            }
            let row = &data[offset[i]..offset[i] + (i - fi)];
            let d = data[offset[i] + (i - fi)] - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Solver(format!(
                    "matrix not positive definite at pivot {i} (value {d:.3e})"
                )));
            }
            data[offset[i] + (i - fi)] = d.sqrt();
        }
        Ok(Self { n, perm, first, offset, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, x)| l * x).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Solves a symmetric tridiagonal system (Thomas algorithm).
/// `sub[i]` couples rows `i` and `i+1`.
pub fn solve_tridiagonal(diag: &[f64], sub: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if sub.len() + 1 != n.max(1) || rhs.len() != n {
        return Err(Error::SizeMismatch { expected: n, got: rhs.len() });
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
    }
    if n > 1 {
        c[0] = sub[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i - 1] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
        }
        if i + 1 < n {
            c[i] = sub[i] / denom;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
