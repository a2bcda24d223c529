//! Standard-form convex quadratic program and its solution.
//!
//! The objective convention is `minimize 1/2 x'Hx + q'x` subject to
//! `Aeq x = beq` and `Ain x <= bin`. The Lagrangian convention is
//!
//! ```text
//! L = 1/2 x'Hx + q'x + y_eq'(Aeq x - beq) + y_in'(Ain x - bin)
//! ```
//!
//! so stationarity reads `Hx + q + Aeq'y_eq + Ain'y_in = 0` and the optimal
//! objective responds to a right-hand-side perturbation `db` with `-y'db`.

use serde::Serialize;
use thiserror::Error;

/// Compressed sparse row matrix with a fixed shape.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets; duplicate coordinates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of shape {nrows}x{ncols}");
            per_row[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
        y
    }

    /// `y += A' x` accumulated into `y`.
    pub fn add_mul_transpose_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * xr;
            }
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                m[(r, *c)] += v;
            }
        }
        m
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(c, v)| (r, *c, *v))
        })
    }
}

/// Convex QP in standard form. `h_upper` stores the upper triangle of the
/// symmetric quadratic term; symmetry holds by construction.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub num_vars: usize,
    pub h_upper: CsrMatrix,
    pub q: Vec<f64>,
    pub a_eq: CsrMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: CsrMatrix,
    pub b_in: Vec<f64>,
    pub variable_names: Vec<String>,
}

/// Incremental construction of a [`QpProblem`].
#[derive(Debug, Clone)]
pub struct QpProblemBuilder {
    names: Vec<String>,
    h: Vec<(usize, usize, f64)>,
    q: Vec<f64>,
    eq: Vec<(usize, usize, f64)>,
    b_eq: Vec<f64>,
    ineq: Vec<(usize, usize, f64)>,
    b_in: Vec<f64>,
}

impl QpProblemBuilder {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            h: Vec::new(),
            q: Vec::new(),
            eq: Vec::new(),
            b_eq: Vec::new(),
            ineq: Vec::new(),
            b_in: Vec::new(),
        }
    }

    /// Adds a variable and returns its column index.
    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.q.push(0.0);
        self.names.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    /// Adds `v` to `H[i][j]` (and `H[j][i]` implicitly).
    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.h.push((lo, hi, v));
    }

    pub fn add_linear(&mut self, i: usize, v: f64) {
        self.q[i] += v;
    }

    /// Adds an equality row `sum coeffs = rhs` and returns its row index.
    pub fn add_eq_row(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        let r = self.b_eq.len();
        for &(c, v) in coeffs {
            self.eq.push((r, c, v));
        }
        self.b_eq.push(rhs);
        r
    }

    /// Adds an inequality row `sum coeffs <= rhs` and returns its row index.
    pub fn add_in_row(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        let r = self.b_in.len();
        for &(c, v) in coeffs {
            self.ineq.push((r, c, v));
        }
        self.b_in.push(rhs);
        r
    }

    pub fn build(self) -> QpProblem {
        let n = self.names.len();
        QpProblem {
            num_vars: n,
            h_upper: CsrMatrix::from_triplets(n, n, &self.h),
            q: self.q,
            a_eq: CsrMatrix::from_triplets(self.b_eq.len(), n, &self.eq),
            b_eq: self.b_eq,
            a_in: CsrMatrix::from_triplets(self.b_in.len(), n, &self.ineq),
            b_in: self.b_in,
            variable_names: self.names,
        }
    }
}

impl Default for QpProblemBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl QpProblem {
    pub fn num_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn num_in(&self) -> usize {
        self.b_in.len()
    }

    /// `1/2 x'Hx + q'x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.mul_h(x);
        let mut obj = 0.0;
        for i in 0..self.num_vars {
            obj += 0.5 * x[i] * hx[i] + self.q[i] * x[i];
        }
        obj
    }

    /// `y = H x` using the symmetric upper-triangle storage.
    pub fn mul_h(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.num_vars];
        for (i, j, v) in self.h_upper.iter() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// Full symmetric H as a dense matrix.
    pub fn h_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.num_vars, self.num_vars);
        for (i, j, v) in self.h_upper.iter() {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }

    /// KKT residuals at a candidate primal-dual point. Non-finite values
    /// poison the corresponding residual to infinity rather than being
    /// silently dropped by the max-folds.
    pub fn residuals_at(&self, x: &[f64], y_eq: &[f64], y_in: &[f64]) -> KktResiduals {
        let guard = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
        let mut rd = self.mul_h(x);
        for i in 0..self.num_vars {
            rd[i] += self.q[i];
        }
        self.a_eq.add_mul_transpose_vec(y_eq, &mut rd);
        self.a_in.add_mul_transpose_vec(y_in, &mut rd);
        let stationarity = rd.iter().fold(0.0f64, |m, v| m.max(guard(v.abs())));

        let primal_eq = self
            .a_eq
            .mul_vec(x)
            .iter()
            .zip(&self.b_eq)
            .fold(0.0f64, |m, (ax, b)| m.max(guard((ax - b).abs())));

        let ax_in = self.a_in.mul_vec(x);
        let mut primal_in = 0.0f64;
        let mut complementarity = 0.0f64;
        if self.num_in() > 0 {
            primal_in = f64::NEG_INFINITY;
            for i in 0..self.num_in() {
                let slack = ax_in[i] - self.b_in[i];
                primal_in = primal_in.max(guard(slack));
                complementarity += y_in[i] * slack;
            }
            complementarity = guard(complementarity.abs());
        }
        KktResiduals { stationarity, primal_eq, primal_in, complementarity }
    }

    /// Writes the problem (and optionally a solution) as dense JSON for
    /// cross-checking against external solvers.
    pub fn dump_json(
        &self,
        solution: Option<&QpSolution>,
        path: &std::path::Path,
    ) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Dump<'a> {
            h: Vec<Vec<f64>>,
            q: &'a [f64],
            a_eq: Vec<Vec<f64>>,
            b_eq: &'a [f64],
            a_in: Vec<Vec<f64>>,
            b_in: &'a [f64],
            variable_names: &'a [String],
            solution: Option<&'a QpSolution>,
        }
        let dense_rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
        };
        let dump = Dump {
            h: dense_rows(&self.h_dense()),
            q: &self.q,
            a_eq: dense_rows(&self.a_eq.to_dense()),
            b_eq: &self.b_eq,
            a_in: dense_rows(&self.a_in.to_dense()),
            b_in: &self.b_in,
            variable_names: &self.variable_names,
            solution,
        };
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &dump)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Infinity norms of the four KKT conditions. `primal_in` is the signed
/// worst inequality violation (negative when strictly interior).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_in: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn worst(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_in)
            .max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.stationarity <= tol
            && self.primal_eq <= tol
            && self.primal_in <= tol
            && self.complementarity <= tol
    }
}

/// Primal-dual solution with certified residuals.
#[derive(Debug, Clone, Serialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y_eq: Vec<f64>,
    pub y_in: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub residuals: KktResiduals,
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("malformed problem: {0}")]
    BadProblem(String),
    #[error("problem is primal infeasible")]
    Infeasible,
    #[error("iteration limit reached (worst residual {worst:.3e})", worst = solution.residuals.worst())]
    MaxIterations { solution: Box<QpSolution> },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("active-set enumeration limited to {limit} inequalities, problem has {inequalities}")]
    TooLarge { inequalities: usize, limit: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Absolute tolerance on all four KKT residuals.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100 }
    }
}
