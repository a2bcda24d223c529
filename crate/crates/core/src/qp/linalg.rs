//! Newton-system solvers for the interior-point method.
//!
//! Each iteration solves the symmetric quasi-definite system
//!
//! ```text
//! [ H + Ain' W Ain   Aeq' ] [dx]   [r1]
//! [ Aeq               0   ] [dy] = [r2]
//! ```
//!
//! Small systems use dense LU with partial pivoting; large systems use a
//! sparse LDL' factorization with a fill-reducing ordering. Both refine the
//! computed step against the unregularized matrix.

use super::problem::QpProblem;

const DENSE_LIMIT: usize = 800;
const REFINE_ROUNDS: usize = 6;

/// Sparse upper-triangle KKT matrix with slots for the per-iteration
/// inequality weights, plus a factorization backend.
pub(crate) struct KktSystem {
    n: usize,
    dim: usize,
    // CSC of the upper triangle (diagonal always present).
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    base: Vec<f64>,
    values: Vec<f64>,
    reg_values: Vec<f64>,
    diag_slots: Vec<usize>,
    // For each inequality row: (slot, v_i * v_j) contributions of Ain' W Ain.
    w_updates: Vec<Vec<(usize, f64)>>,
    backend: Backend,
}

enum Backend {
    Dense(DenseLu),
    Sparse(SparseLdl),
}

impl KktSystem {
    pub fn new(problem: &QpProblem) -> Self {
        let n = problem.num_vars;
        let me = problem.num_eq();
        let dim = n + me;

        // Deterministic slot layout: column-major, row ascending.
        let mut slots: std::collections::BTreeMap<(usize, usize), f64> =
            std::collections::BTreeMap::new();
        for i in 0..dim {
            slots.insert((i, i), 0.0);
        }
        for (i, j, v) in problem.h_upper.iter() {
            *slots.entry((j, i)).or_insert(0.0) += v; // key = (col, row), row <= col
        }
        for (r, c, v) in problem.a_eq.iter() {
            *slots.entry((n + r, c)).or_insert(0.0) += v;
        }
        for r in 0..problem.num_in() {
            let (cols, _) = problem.a_in.row(r);
            for (ai, &ci) in cols.iter().enumerate() {
                for &cj in cols.iter().skip(ai) {
                    slots.entry((cj.max(ci), cj.min(ci))).or_insert(0.0);
                }
            }
        }

        let mut slot_of = std::collections::HashMap::with_capacity(slots.len());
        let mut col_ptr = vec![0usize; dim + 1];
        let mut row_idx = Vec::with_capacity(slots.len());
        let mut base = Vec::with_capacity(slots.len());
        for (&(c, r), &v) in &slots {
            slot_of.insert((c, r), row_idx.len());
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            base.push(v);
        }
        for c in 0..dim {
            col_ptr[c + 1] += col_ptr[c];
        }

        let mut w_updates = Vec::with_capacity(problem.num_in());
        for r in 0..problem.num_in() {
            let (cols, vals) = problem.a_in.row(r);
            let mut upd = Vec::with_capacity(cols.len() * (cols.len() + 1) / 2);
            for (ai, (&ci, &vi)) in cols.iter().zip(vals).enumerate() {
                for (&cj, &vj) in cols.iter().zip(vals).skip(ai) {
                    let slot = slot_of[&(cj.max(ci), cj.min(ci))];
                    upd.push((slot, vi * vj));
                }
            }
            w_updates.push(upd);
        }

        let backend = if dim <= DENSE_LIMIT {
            Backend::Dense(DenseLu::new(dim))
        } else {
            Backend::Sparse(SparseLdl::new(dim, &col_ptr, &row_idx))
        };

        let diag_slots: Vec<usize> = (0..dim).map(|i| slot_of[&(i, i)]).collect();
        let values = base.clone();
        let reg_values = base.clone();
        Self { n, dim, col_ptr, row_idx, base, values, reg_values, diag_slots, w_updates, backend }
    }

    /// Rebuilds the numeric values with inequality weights `w` and factors.
    ///
    /// The factorization sees a statically regularized copy (`+delta` on the
    /// primal diagonal, `-delta` on the dual diagonal) so degenerate flat
    /// directions stay factorable; the refinement in [`Self::solve`] works
    /// against the true matrix.
    pub fn factor(&mut self, w: &[f64]) -> Result<(), String> {
        self.values.copy_from_slice(&self.base);
        for (r, upd) in self.w_updates.iter().enumerate() {
            let wr = w[r];
            for &(slot, coeff) in upd {
                self.values[slot] += wr * coeff;
            }
        }
        self.reg_values.copy_from_slice(&self.values);
        let scale = self.base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let delta = 1e-11 * (1.0 + scale.min(1e6));
        for (i, &slot) in self.diag_slots.iter().enumerate() {
            if i < self.n {
                self.reg_values[slot] += delta;
            } else {
                self.reg_values[slot] -= delta;
            }
        }
        match &mut self.backend {
            Backend::Dense(lu) => {
                lu.factor(self.dim, &self.col_ptr, &self.row_idx, &self.reg_values)
            }
            Backend::Sparse(ldl) => ldl.factor(self.n, &self.reg_values),
        }
    }

    /// Solves against the current factorization with iterative refinement
    /// against the unregularized matrix.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.solve_with_residual(rhs).0
    }

    /// Like [`Self::solve`], also reporting the final residual infinity norm
    /// so callers can reject solutions of inconsistent systems.
    pub fn solve_with_residual(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        let mut x = self.raw_solve(rhs);
        let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = self.residual_of(&x, rhs);
        for _ in 0..REFINE_ROUNDS {
            if !worst.is_finite() || worst <= 1e-13 * scale {
                break;
            }
            let mut r = rhs.to_vec();
            self.mul_sub(&x, &mut r);
            let dx = self.raw_solve(&r);
            for i in 0..self.dim {
                x[i] += dx[i];
            }
            let next = self.residual_of(&x, rhs);
            if !next.is_finite() || next >= worst {
                for i in 0..self.dim {
                    x[i] -= dx[i];
                }
                break;
            }
            worst = next;
        }
        (x, worst)
    }

    fn residual_of(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let mut r = rhs.to_vec();
        self.mul_sub(x, &mut r);
        r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Dense(lu) => lu.solve(rhs),
            Backend::Sparse(ldl) => ldl.solve(rhs),
        }
    }

    /// `out -= K x` with the symmetric matrix defined by the upper triangle.
    fn mul_sub(&self, x: &[f64], out: &mut [f64]) {
        for c in 0..self.dim {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                let v = self.values[p];
                out[r] -= v * x[c];
                if r != c {
                    out[c] -= v * x[r];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense backend
// ---------------------------------------------------------------------------

struct DenseLu {
    dim: usize,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl DenseLu {
    fn new(dim: usize) -> Self {
        Self { dim, lu: None }
    }

    fn factor(
        &mut self,
        dim: usize,
        col_ptr: &[usize],
        row_idx: &[usize],
        values: &[f64],
    ) -> Result<(), String> {
        let mut m = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for c in 0..dim {
            for p in col_ptr[c]..col_ptr[c + 1] {
                let r = row_idx[p];
                m[(r, c)] = values[p];
                if r != c {
                    m[(c, r)] = values[p];
                }
            }
        }
        let lu = m.lu();
        // A numerically singular KKT matrix shows up as garbage steps; the
        // refinement loop and the caller's guards deal with it rather than
        // failing here outright.
        self.lu = Some(lu);
        Ok(())
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = nalgebra::DVector::from_column_slice(rhs);
        match self.lu.as_ref().and_then(|lu| lu.solve(&b)) {
            Some(x) => x.as_slice().to_vec(),
            None => vec![f64::NAN; self.dim],
        }
    }
}

// ---------------------------------------------------------------------------
// Sparse LDL' backend
// ---------------------------------------------------------------------------

const NONE: usize = usize::MAX;

/// LDL' factorization of a symmetric quasi-definite matrix: no pivoting,
/// static plus dynamic diagonal regularization, fixed fill-reducing order.
struct SparseLdl {
    dim: usize,
    perm: Vec<usize>,
    // Permuted upper-triangle pattern.
    pcol_ptr: Vec<usize>,
    prow_idx: Vec<usize>,
    // scatter[s] = slot in permuted values for original slot s.
    scatter: Vec<usize>,
    pvalues: Vec<f64>,
    // Symbolic factorization.
    parent: Vec<usize>,
    l_col_ptr: Vec<usize>,
    // Numeric factorization.
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    diag: Vec<f64>,
}

impl SparseLdl {
    fn new(dim: usize, col_ptr: &[usize], row_idx: &[usize]) -> Self {
        let perm = hybrid_rcm(dim, col_ptr, row_idx);
        let mut iperm = vec![0usize; dim];
        for (k, &orig) in perm.iter().enumerate() {
            iperm[orig] = k;
        }

        // Permute the upper triangle: original entry (r, c) lands at
        // (min(ir, ic), max(ir, ic)) in the permuted matrix.
        let nnz = row_idx.len();
        let mut pairs: Vec<(usize, usize, usize)> = Vec::with_capacity(nnz); // (pc, pr, slot)
        for c in 0..dim {
            for p in col_ptr[c]..col_ptr[c + 1] {
                let r = row_idx[p];
                let (ir, ic) = (iperm[r], iperm[c]);
                pairs.push((ir.max(ic), ir.min(ic), p));
            }
        }
        pairs.sort_unstable();
        let mut pcol_ptr = vec![0usize; dim + 1];
        let mut prow_idx = Vec::with_capacity(nnz);
        let mut scatter = vec![0usize; nnz];
        for (k, &(pc, pr, slot)) in pairs.iter().enumerate() {
            pcol_ptr[pc + 1] += 1;
            prow_idx.push(pr);
            scatter[slot] = k;
        }
        for c in 0..dim {
            pcol_ptr[c + 1] += pcol_ptr[c];
        }

        let mut this = Self {
            dim,
            perm,
            pcol_ptr,
            prow_idx,
            scatter,
            pvalues: vec![0.0; nnz],
            parent: vec![NONE; dim],
            l_col_ptr: vec![0; dim + 1],
            l_row_idx: Vec::new(),
            l_values: Vec::new(),
            diag: vec![0.0; dim],
        };
        this.symbolic();
        this
    }

    fn symbolic(&mut self) {
        let dim = self.dim;
        let mut flag = vec![NONE; dim];
        let mut l_nz = vec![0usize; dim];
        for k in 0..dim {
            self.parent[k] = NONE;
            flag[k] = k;
            for p in self.pcol_ptr[k]..self.pcol_ptr[k + 1] {
                let mut i = self.prow_idx[p];
                while i < k && flag[i] != k {
                    if self.parent[i] == NONE {
                        self.parent[i] = k;
                    }
                    l_nz[i] += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
            }
        }
        self.l_col_ptr[0] = 0;
        for k in 0..dim {
            self.l_col_ptr[k + 1] = self.l_col_ptr[k] + l_nz[k];
        }
        let total = self.l_col_ptr[dim];
        self.l_row_idx = vec![0; total];
        self.l_values = vec![0.0; total];
    }

    fn factor(&mut self, n_primal: usize, values: &[f64]) -> Result<(), String> {
        for (s, &v) in values.iter().enumerate() {
            self.pvalues[self.scatter[s]] = v;
        }
        let dim = self.dim;
        let scale = 1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pivot_floor = 1e-13 * scale;

        let mut y = vec![0.0f64; dim];
        let mut flag = vec![NONE; dim];
        let mut pattern = vec![0usize; dim];
        let mut stack = vec![0usize; dim];
        let mut l_next = vec![0usize; dim]; // next free slot per column of L

        for k in 0..dim {
            let mut top = dim;
            flag[k] = k;
            y[k] = 0.0;
            for p in self.pcol_ptr[k]..self.pcol_ptr[k + 1] {
                let i0 = self.prow_idx[p];
                y[i0] += self.pvalues[p];
                let mut len = 0;
                let mut i = i0;
                while i < k && flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    stack[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            for idx in top..dim {
                let i = stack[idx];
                let yi = y[i];
                y[i] = 0.0;
                let pstart = self.l_col_ptr[i];
                let pend = pstart + l_next[i];
                for p in pstart..pend {
                    y[self.l_row_idx[p]] -= self.l_values[p] * yi;
                }
                let lki = yi / self.diag[i];
                dk -= lki * yi;
                self.l_row_idx[pend] = k;
                self.l_values[pend] = lki;
                l_next[i] += 1;
            }
            // Dynamic regularization keeps the quasi-definite sign pattern.
            if self.perm[k] < n_primal {
                if dk < pivot_floor {
                    dk = pivot_floor;
                }
            } else if dk > -pivot_floor {
                dk = -pivot_floor;
            }
            self.diag[k] = dk;
        }
        Ok(())
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let dim = self.dim;
        let mut b = vec![0.0; dim];
        for k in 0..dim {
            b[k] = rhs[self.perm[k]];
        }
        for j in 0..dim {
            let bj = b[j];
            if bj != 0.0 {
                for p in self.l_col_ptr[j]..self.l_col_ptr[j + 1] {
                    b[self.l_row_idx[p]] -= self.l_values[p] * bj;
                }
            }
        }
        for j in 0..dim {
            b[j] /= self.diag[j];
        }
        for j in (0..dim).rev() {
            let mut bj = b[j];
            for p in self.l_col_ptr[j]..self.l_col_ptr[j + 1] {
                bj -= self.l_values[p] * b[self.l_row_idx[p]];
            }
            b[j] = bj;
        }
        let mut x = vec![0.0; dim];
        for k in 0..dim {
            x[self.perm[k]] = b[k];
        }
        x
    }
}

/// Reverse Cuthill-McKee with high-degree vertices ordered last. The KKT
/// matrices here are block-banded in time with a low-rank "arrow" coupling
/// (storage capacities, budget row); pushing the arrow columns to the end
/// keeps the banded part thin.
fn hybrid_rcm(dim: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
    for c in 0..dim {
        for p in col_ptr[c]..col_ptr[c + 1] {
            let r = row_idx[p];
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degrees: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let avg = degrees.iter().sum::<usize>().max(1) / dim.max(1);
    let dense_cut = (3 * avg.max(1)).max(8);

    let mut is_dense = vec![false; dim];
    let mut dense_nodes: Vec<usize> = Vec::new();
    for v in 0..dim {
        if degrees[v] > dense_cut {
            is_dense[v] = true;
            dense_nodes.push(v);
        }
    }
    dense_nodes.sort_by_key(|&v| (degrees[v], v));

    let mut order: Vec<usize> = Vec::with_capacity(dim);
    let mut visited = is_dense.clone();
    let light_degree = |v: usize, adj: &Vec<Vec<usize>>, is_dense: &Vec<bool>| {
        adj[v].iter().filter(|&&w| !is_dense[w]).count()
    };

    for start_candidate in 0..dim {
        if visited[start_candidate] {
            continue;
        }
        // Pseudo-peripheral start: BFS, take a min-degree node of the last level.
        let mut start = start_candidate;
        for _ in 0..2 {
            let mut level = vec![start];
            let mut seen = std::collections::HashSet::from([start]);
            let mut last = level.clone();
            while !level.is_empty() {
                last = level.clone();
                let mut next = Vec::new();
                for &v in &level {
                    for &w in &adj[v] {
                        if !is_dense[w] && !visited[w] && seen.insert(w) {
                            next.push(w);
                        }
                    }
                }
                level = next;
            }
            start = *last
                .iter()
                .min_by_key(|&&v| (light_degree(v, &adj, &is_dense), v))
                .unwrap();
        }
        // Cuthill-McKee breadth-first ordering for this component.
        let comp_start = order.len();
        let mut queue = std::collections::VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (light_degree(w, &adj, &is_dense), w));
            for w in nbrs {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        order[comp_start..].reverse();
    }
    order.extend(dense_nodes);
    debug_assert_eq!(order.len(), dim);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::problem::QpProblemBuilder;
    use rand::Rng;
    use rand::SeedableRng;

    /// Random quasi-definite KKT solves must agree between the dense path and
    /// the sparse LDL path.
    #[test]
    fn sparse_ldl_matches_dense_lu() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _trial in 0..20 {
            let n = rng.random_range(5..40);
            let me = rng.random_range(1..(n / 2 + 2));
            let mut b = QpProblemBuilder::new();
            for i in 0..n {
                b.add_var(format!("x{i}"));
                b.add_linear(i, rng.random_range(-1.0..1.0));
            }
            for i in 0..n {
                b.add_quadratic(i, i, rng.random_range(0.5..3.0));
                if i + 1 < n && rng.random_bool(0.4) {
                    b.add_quadratic(i, i + 1, rng.random_range(-0.3..0.3));
                }
            }
            for _ in 0..me {
                // Full rows keep Aeq full-rank with probability one.
                let coeffs: Vec<(usize, f64)> =
                    (0..n).map(|i| (i, rng.random_range(-1.0..1.0))).collect();
                b.add_eq_row(&coeffs, rng.random_range(-1.0..1.0));
            }
            // A couple of inequality rows to exercise the W slots.
            let mi = rng.random_range(1..5);
            for _ in 0..mi {
                let c = rng.random_range(0..n);
                b.add_in_row(&[(c, 1.0)], rng.random_range(0.5..2.0));
            }
            let p = b.build();
            let w: Vec<f64> = (0..p.num_in()).map(|_| rng.random_range(0.01..100.0)).collect();

            let mut dense_sys = KktSystem::new(&p);
            // Force the sparse backend on a copy.
            let mut sparse_sys = KktSystem::new(&p);
            sparse_sys.backend = Backend::Sparse(SparseLdl::new(
                sparse_sys.dim,
                &sparse_sys.col_ptr,
                &sparse_sys.row_idx,
            ));

            dense_sys.factor(&w).unwrap();
            sparse_sys.factor(&w).unwrap();

            let rhs: Vec<f64> = (0..n + p.num_eq()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xd = dense_sys.solve(&rhs);
            let xs = sparse_sys.solve(&rhs);
            for i in 0..xd.len() {
                assert!(
                    (xd[i] - xs[i]).abs() < 1e-8 * (1.0 + xd[i].abs()),
                    "mismatch at {i}: {} vs {}",
                    xd[i],
                    xs[i]
                );
            }
        }
    }

    #[test]
    fn rcm_orders_arrow_columns_last() {
        // Chain 0-1-2-...-9 plus a hub connected to everything.
        let dim = 11;
        let mut slots: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
        for i in 0..dim {
            slots.insert((i, i), 1.0);
        }
        for i in 0..9 {
            slots.insert((i + 1, i), 1.0);
        }
        for i in 0..10 {
            slots.insert((10, i), 1.0);
        }
        let mut col_ptr = vec![0usize; dim + 1];
        let mut row_idx = Vec::new();
        for (&(c, r), _) in &slots {
            col_ptr[c + 1] += 1;
            row_idx.push(r);
        }
        for c in 0..dim {
            col_ptr[c + 1] += col_ptr[c];
        }
        let perm = hybrid_rcm(dim, &col_ptr, &row_idx);
        assert_eq!(*perm.last().unwrap(), 10, "hub must be ordered last");
        assert_eq!(perm.len(), dim);
    }
}
