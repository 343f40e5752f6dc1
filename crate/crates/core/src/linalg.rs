//! Compressed sparse row storage and a Jacobi-preconditioned conjugate
//! gradient solver for the symmetric positive semi-definite systems of the
//! pure-Neumann and periodic problems.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a zero matrix whose sparsity pattern contains every `(i, j)`.
    pub fn with_pattern<I>(n: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in entries {
            rows[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Storage index of entry `(i, j)`; panics if it is outside the pattern.
    pub fn slot(&self, i: usize, j: usize) -> usize {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        let k = row
            .binary_search(&j)
            .unwrap_or_else(|_| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.row_ptr[i] + k
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn add_at_slot(&mut self, slot: usize, value: f64) {
        self.values[slot] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Stop once `‖r‖ ≤ rel_tol · max(‖b‖, abs_floor)`.
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub max_iter: usize,
    /// Remove the constant component of the residual (singular Neumann systems).
    pub project_constants: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_floor: 0.0,
            max_iter: 20_000,
            project_constants: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solves `A x = b` with `x` as the initial guess.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgOutcome> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let mut rhs = b.to_vec();
    if opts.project_constants {
        remove_mean(&mut rhs);
    }
    let bnorm = dot(&rhs, &rhs).sqrt();
    let target = opts.rel_tol * bnorm.max(opts.abs_floor);

    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    if opts.project_constants {
        remove_mean(&mut r);
    }
    let mut rnorm = dot(&r, &r).sqrt();
    if rnorm <= target {
        return Ok(CgOutcome {
            iterations: 0,
            residual: rnorm,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                solver: "conjugate gradient (indefinite direction)",
                iterations: it,
                residual: rnorm,
                history: Vec::new(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if opts.project_constants {
            remove_mean(&mut r);
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= target {
            return Ok(CgOutcome {
                iterations: it,
                residual: rnorm,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradient",
        iterations: opts.max_iter,
        residual: rnorm,
        history: Vec::new(),
    })
}
