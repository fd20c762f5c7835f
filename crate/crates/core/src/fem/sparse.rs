//! Symmetric sparse matrices in CSR form and an envelope (skyline) Cholesky factorization
//! with reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use crate::{Error, Result};

/// Sparsity pattern with sorted column indices; both triangles stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds the pattern from element index lists (every pair inside a list couples).
    pub fn from_cliques<'a>(n: usize, cliques: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for c in cliques {
            for &i in c {
                for &j in c {
                    rows[i].push(j);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        SparsityPattern { row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: &SparsityPattern) -> Self {
        SparseMatrix {
            row_ptr: pattern.row_ptr.clone(),
            col_idx: pattern.col_idx.clone(),
            values: vec![0.0; pattern.col_idx.len()],
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Dense row-major input; zeros are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in rows {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn pattern(&self) -> SparsityPattern {
        SparsityPattern {
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        let k = lo
            + self.col_idx[lo..hi]
                .binary_search(&j)
                .unwrap_or_else(|_| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let mut max_entry = 0.0f64;
        let mut max_diff = 0.0f64;
        for i in 0..self.dim() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                max_entry = max_entry.max(self.values[k].abs());
                max_diff = max_diff.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_diff / max_entry
        }
    }
}

/// Matrix and right-hand side on the free degrees of freedom.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub fn rcm_ordering(pattern: &SparsityPattern) -> Vec<usize> {
    let n = pattern.dim();
    let degree: Vec<usize> = (0..n).map(|i| pattern.row(i).len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize, visited_mask: &[bool]| -> (Vec<usize>, usize) {
        let mut level = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        level[start] = 0;
        q.push_back(start);
        let mut last = start;
        while let Some(u) = q.pop_front() {
            last = u;
            for &v in pattern.row(u) {
                if !visited_mask[v] && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        (level, last)
    };
    while order.len() < n {
        // Lowest-degree unvisited node, then walk to a pseudo-peripheral node.
        let mut start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        let mut ecc = 0;
        for _ in 0..4 {
            let (level, far) = bfs_levels(start, &visited);
            let e = level[far];
            if e <= ecc && ecc > 0 {
                break;
            }
            ecc = e;
            // Among the last level pick the minimum-degree node.
            start = (0..n)
                .filter(|&i| level[i] == e)
                .min_by_key(|&i| (degree[i], i))
                .unwrap();
        }
        let begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let mut nbrs: Vec<usize> = pattern.row(u).iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_unstable_by_key(|&v| (degree[v], v));
            for v in nbrs {
                visited[v] = true;
                order.push(v);
            }
        }
    }
    order.reverse();
    order
}

/// Symbolic data for envelope factorization: ordering and row envelopes.
#[derive(Clone, Debug)]
pub struct Ordering {
    /// `perm[new] = old`.
    pub perm: Vec<usize>,
    /// `inv[old] = new`.
    pub inv: Vec<usize>,
    /// First column of the envelope of each (new) row.
    first: Vec<usize>,
    /// Offsets into the packed envelope storage; row `i` has `i - first[i] + 1` entries.
    offset: Vec<usize>,
}

impl Ordering {
    pub fn new(pattern: &SparsityPattern) -> Self {
        let perm = rcm_ordering(pattern);
        Self::with_permutation(pattern, perm)
    }

    pub fn with_permutation(pattern: &SparsityPattern, perm: Vec<usize>) -> Self {
        let n = pattern.dim();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for &c in pattern.row(old) {
                let j = inv[c];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + i - first[i] + 1);
        }
        Ordering {
            perm,
            inv,
            first,
            offset,
        }
    }

    pub fn envelope_size(&self) -> usize {
        *self.offset.last().unwrap()
    }
}

/// Envelope Cholesky factor `P A P^T = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    ordering: Ordering,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SparseMatrix, ordering: &Ordering) -> Result<Self> {
        let n = a.dim();
        let ord = ordering;
        let mut l = vec![0.0; ord.envelope_size()];
        for old in 0..n {
            let i = ord.inv[old];
            for k in a.row_ptr[old]..a.row_ptr[old + 1] {
                let j = ord.inv[a.col_idx[k]];
                if j <= i {
                    l[ord.offset[i] + j - ord.first[i]] = a.values[k];
                }
            }
        }
        let mut min_pivot = f64::INFINITY;
        for i in 0..n {
            let fi = ord.first[i];
            let oi = ord.offset[i];
            for j in fi..i {
                let fj = ord.first[j];
                let oj = ord.offset[j];
                let k0 = fi.max(fj);
                let (ri, rj) = (&l[oi + k0 - fi..oi + j - fi], &l[oj + k0 - fj..oj + j - fj]);
                let s: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
                let diag = l[oj + j - fj];
                l[oi + j - fi] = (l[oi + j - fi] - s) / diag;
            }
            let row = &l[oi..oi + i - fi];
            let s: f64 = row.iter().map(|x| x * x).sum();
            let a_ii = l[oi + i - fi];
            let d = a_ii - s;
            if !(d > 1e-14 * a_ii.abs()) || !d.is_finite() {
                return Err(Error::LinearSolve(format!(
                    "matrix is not positive definite: pivot {d:e} at row {} (diagonal {a_ii:e})",
                    ord.perm[i]
                )));
            }
            let piv = d.sqrt();
            min_pivot = min_pivot.min(piv);
            l[oi + i - fi] = piv;
        }
        Ok(Cholesky {
            ordering: ord.clone(),
            l,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let ord = &self.ordering;
        let n = ord.perm.len();
        let mut y: Vec<f64> = (0..n).map(|i| b[ord.perm[i]]).collect();
        for i in 0..n {
            let fi = ord.first[i];
            let oi = ord.offset[i];
            let row = &self.l[oi..oi + i - fi];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.l[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = ord.first[i];
            let oi = ord.offset[i];
            y[i] /= self.l[oi + i - fi];
            let yi = y[i];
            for (k, lv) in self.l[oi..oi + i - fi].iter().enumerate() {
                y[fi + k] -= lv * yi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[ord.perm[i]] = y[i];
        }
        x
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves with a given factorization and up to three steps of iterative refinement;
/// fails if the relative residual stays above `1e-10`.
pub fn solve_factored(a: &SparseMatrix, chol: &Cholesky, b: &[f64]) -> Result<Vec<f64>> {
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut x = chol.solve(b);
    let mut rel = f64::INFINITY;
    for _ in 0..4 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        rel = norm2(&r) / bn;
        if rel < 1e-10 {
            return Ok(x);
        }
        let dx = chol.solve(&r);
        for (x, d) in x.iter_mut().zip(dx) {
            *x += d;
        }
    }
    Err(Error::LinearSolve(format!(
        "iterative refinement stagnated at relative residual {rel:e}"
    )))
}

pub fn solve_linear(system: &LinearSystem) -> Result<Vec<f64>> {
    let ordering = Ordering::new(&system.matrix.pattern());
    let chol = Cholesky::factor(&system.matrix, &ordering)?;
    solve_factored(&system.matrix, &chol, &system.rhs)
}
