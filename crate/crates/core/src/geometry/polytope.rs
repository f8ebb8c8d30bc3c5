//! Bounded polytopes `{x : Ax <= c}` with Dykstra projection.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::ProjectionOptions;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Rows with a norm below this are rejected at construction.
const MIN_ROW_NORM: f64 = 1e-12;

/// A polytope in halfspace form. Row norms are cached; every row is nonzero.
#[derive(Clone, Debug)]
pub struct Polytope {
    rows: Vec<Vec<f64>>,
    c: Vec<f64>,
    norms: Vec<f64>,
    norms_sq: Vec<f64>,
    center: Vec<f64>,
    max_shrinkage: f64,
}

impl Polytope {
    /// Builds a polytope from a row-major `m x d` matrix and an `m`-vector.
    ///
    /// Rejects zero rows, sets that are unbounded along some coordinate axis,
    /// and sets without interior.
    pub fn new(rows: Vec<Vec<f64>>, c: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidSet("polytope needs at least one row".into()));
        }
        if rows.len() != c.len() {
            return Err(Error::InvalidSet(format!(
                "{} rows but {} right-hand sides",
                rows.len(),
                c.len()
            )));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidSet(
                "rows must share a positive dimension".into(),
            ));
        }
        if rows
            .iter()
            .flatten()
            .chain(c.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidSet("non-finite polytope data".into()));
        }
        let norms: Vec<f64> = rows.iter().map(|r| norm(r)).collect();
        if let Some(j) = norms.iter().position(|&n| n <= MIN_ROW_NORM) {
            return Err(Error::InvalidSet(format!("row {j} has zero norm")));
        }

        let mut poly = Self::assemble(rows, c, norms, Vec::new(), 0.0);
        poly.check_bounded()?;
        let (center, radius) = poly.chebyshev()?;
        if radius <= 0.0 {
            return Err(Error::InvalidSet("polytope has empty interior".into()));
        }
        poly.center = center;
        poly.max_shrinkage = radius;
        Ok(poly)
    }

    fn assemble(
        rows: Vec<Vec<f64>>,
        c: Vec<f64>,
        norms: Vec<f64>,
        center: Vec<f64>,
        h: f64,
    ) -> Self {
        let norms_sq = norms.iter().map(|n| n * n).collect();
        Self {
            rows,
            c,
            norms,
            norms_sq,
            center,
            max_shrinkage: h,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.c
    }

    pub fn matrix(&self) -> Matrix {
        crate::linalg::matrix_from_rows(&self.rows)
    }

    pub fn center(&self) -> Vector {
        Vector::from_column_slice(&self.center)
    }

    pub fn max_shrinkage(&self) -> f64 {
        self.max_shrinkage
    }

    /// `min_j (c_j - A_j x) / |A_j|`: the distance to the complement for interior points,
    /// negative outside.
    pub fn depth(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.c)
            .zip(&self.norms)
            .map(|((r, &c), &n)| (c - dot(r, x)) / n)
            .fold(f64::INFINITY, f64::min)
    }

    /// `{x : A_j x <= c_j - delta |A_j|}`. The caller checks `delta <= H`.
    pub(crate) fn eroded(&self, delta: f64) -> Self {
        let c = self
            .c
            .iter()
            .zip(&self.norms)
            .map(|(&c, &n)| c - delta * n)
            .collect();
        Self::assemble(
            self.rows.clone(),
            c,
            self.norms.clone(),
            self.center.clone(),
            (self.max_shrinkage - delta).max(0.0),
        )
    }

    /// Concatenates the rows of several polytopes over the same space.
    pub(crate) fn stack(parts: &[&Polytope]) -> Result<Self> {
        let mut rows = Vec::new();
        let mut c = Vec::new();
        for p in parts {
            rows.extend(p.rows.iter().cloned());
            c.extend(p.c.iter().copied());
        }
        Self::new(rows, c)
    }

    /// Largest `t` with `x + t u` inside.
    pub fn ray_to_boundary(&self, x: &[f64], u: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.c)
            .filter_map(|(r, &c)| {
                let rate = dot(r, u);
                (rate > 0.0).then(|| (c - dot(r, x)) / rate)
            })
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    fn check_bounded(&self) -> Result<()> {
        let d = self.dim();
        for k in 0..d {
            for sign in [1.0, -1.0] {
                let mut objective = vec![0.0; d];
                objective[k] = sign;
                match self.solve_lp(&objective, None) {
                    Ok(_) => {}
                    Err(minilp::Error::Unbounded) => {
                        return Err(Error::InvalidSet(format!(
                            "polytope is unbounded along {}e_{k}",
                            if sign > 0.0 { "+" } else { "-" }
                        )))
                    }
                    Err(minilp::Error::Infeasible) => {
                        return Err(Error::InvalidSet("polytope is empty".into()))
                    }
                }
            }
        }
        Ok(())
    }

    /// Chebyshev center: `max r s.t. A_j x + r |A_j| <= c_j`.
    fn chebyshev(&self) -> Result<(Vec<f64>, f64)> {
        let d = self.dim();
        let (x, r) = self
            .solve_lp(&vec![0.0; d], Some(1.0))
            .map_err(|e| Error::InvalidSet(format!("Chebyshev program failed: {e}")))?;
        Ok((x, r.unwrap_or(0.0)))
    }

    /// Maximizes `objective . x (+ radius_weight * r)` over the polytope, where the optional
    /// radius variable shrinks every row by `r |A_j|`.
    fn solve_lp(
        &self,
        objective: &[f64],
        radius_weight: Option<f64>,
    ) -> std::result::Result<(Vec<f64>, Option<f64>), minilp::Error> {
        // Free coordinates are split as x = x+ - x-; minilp does not report unboundedness
        // reliably for variables with two infinite bounds.
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = objective
            .iter()
            .map(|&w| {
                (
                    problem.add_var(w, (0.0, f64::INFINITY)),
                    problem.add_var(-w, (0.0, f64::INFINITY)),
                )
            })
            .collect();
        let radius = radius_weight.map(|w| problem.add_var(w, (0.0, f64::INFINITY)));
        for ((row, &c), &n) in self.rows.iter().zip(&self.c).zip(&self.norms) {
            let mut expr: Vec<_> = vars
                .iter()
                .zip(row)
                .flat_map(|(&(pos, neg), &a)| [(pos, a), (neg, -a)])
                .collect();
            if let Some(r) = radius {
                expr.push((r, n));
            }
            problem.add_constraint(expr.as_slice(), ComparisonOp::Le, c);
        }
        let solution = problem.solve()?;
        let x: Vec<f64> = vars
            .iter()
            .map(|&(pos, neg)| solution[pos] - solution[neg])
            .collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(minilp::Error::Unbounded);
        }
        Ok((x, radius.map(|r| solution[r])))
    }

    /// Euclidean projection by Dykstra's method over the halfspaces.
    ///
    /// Dykstra's correction for halfspace `j` is always a nonnegative multiple of `A_j`, so only
    /// the multipliers are stored. Every few sweeps the rows with positive multipliers are taken
    /// as a candidate active set; if the equality-constrained projection onto them satisfies the
    /// full KKT system, that point is returned.
    pub fn project(&self, x: &Vector, opts: &ProjectionOptions) -> Result<Vector> {
        let xs = x.as_slice();
        if self.depth(xs) >= 0.0 {
            return Ok(x.clone());
        }
        let m = self.n_rows();
        let mut y = xs.to_vec();
        let mut nu = vec![0.0; m];
        let mut residual = f64::INFINITY;

        for cycle in 1..=opts.max_cycles {
            // Movement of the corrections; `y` alone can repeat across a cycle while they drift.
            let mut moved = 0.0_f64;
            for j in 0..m {
                let row = &self.rows[j];
                let slack = dot(row, &y) + nu[j] * self.norms_sq[j] - self.c[j];
                let next = (slack / self.norms_sq[j]).max(0.0);
                let step = nu[j] - next;
                if step != 0.0 {
                    axpy(step, row, &mut y);
                    moved = moved.max(step.abs() * self.norms[j]);
                }
                nu[j] = next;
            }
            residual = moved;
            let violation = -self.depth(&y);
            let converged = residual <= opts.tol && violation <= opts.tol;

            if converged || cycle % opts.polish_every == 0 {
                if let Some(z) = self.polish(xs, &nu) {
                    return Ok(Vector::from_vec(z));
                }
            }
            if converged {
                return Ok(Vector::from_vec(y));
            }
        }
        Err(Error::NonConvergence {
            iterations: opts.max_cycles,
            residual,
        })
    }

    /// Projection onto `{z : A_S z = c_S}` for `S = {j : nu_j > 0}`, accepted only when its
    /// multipliers are nonnegative and the point satisfies every row.
    fn polish(&self, x: &[f64], nu: &[f64]) -> Option<Vec<f64>> {
        let mut active: Vec<usize> = (0..nu.len()).filter(|&j| nu[j] > 0.0).collect();
        // Strongest multipliers first so the independent subset keeps the dominant rows.
        active.sort_by(|&a, &b| (nu[b] * self.norms[b]).total_cmp(&(nu[a] * self.norms[a])));
        let basis = self.independent_rows(&active);
        if basis.is_empty() {
            return None;
        }
        let k = basis.len();
        let gram = Matrix::from_fn(k, k, |a, b| dot(&self.rows[basis[a]], &self.rows[basis[b]]));
        let rhs =
            Vector::from_iterator(k, basis.iter().map(|&j| dot(&self.rows[j], x) - self.c[j]));
        let mult = gram.cholesky()?.solve(&rhs);

        let scale = mult.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if mult.iter().any(|&v| v < -1e-12 * scale) {
            return None;
        }
        let mut z = x.to_vec();
        for (a, &j) in basis.iter().enumerate() {
            axpy(-mult[a], &self.rows[j], &mut z);
        }
        let zscale = z.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if self.depth(&z) < -1e-12 * zscale {
            return None;
        }
        Some(z)
    }

    /// Greedy Gram-Schmidt selection of linearly independent rows, in the given order.
    fn independent_rows(&self, order: &[usize]) -> Vec<usize> {
        let d = self.dim();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut picked = Vec::new();
        for &j in order {
            if picked.len() == d {
                break;
            }
            let mut v: Vec<f64> = self.rows[j].iter().map(|a| a / self.norms[j]).collect();
            for q in &basis {
                let proj = dot(q, &v);
                axpy(-proj, q, &mut v);
            }
            let n = norm(&v);
            if n > 1e-9 {
                v.iter_mut().for_each(|a| *a /= n);
                basis.push(v);
                picked.push(j);
            }
        }
        picked
    }

    /// Vertices obtained from every linearly independent `d`-subset of rows, if the number of
    /// subsets stays under `cap`.
    pub(crate) fn vertices(&self, cap: u128) -> Option<Vec<Vec<f64>>> {
        let d = self.dim();
        let m = self.n_rows();
        if binomial(m, d) > cap {
            return None;
        }
        let mut out = Vec::new();
        for subset in Combinations::new(m, d) {
            let a = Matrix::from_fn(d, d, |i, k| self.rows[subset[i]][k]);
            let b = Vector::from_iterator(d, subset.iter().map(|&j| self.c[j]));
            let Some(sol) = a.lu().solve(&b) else {
                continue;
            };
            let v: Vec<f64> = sol.iter().copied().collect();
            let scale = v.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
            if v.iter().all(|x| x.is_finite()) && self.depth(&v) >= -1e-9 * scale {
                out.push(v);
            }
        }
        Some(out)
    }
}

pub(crate) fn binomial(m: usize, d: usize) -> u128 {
    if d > m {
        return 0;
    }
    let d = d.min(m - d);
    let mut acc: u128 = 1;
    for i in 0..d {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Lexicographic `k`-subsets of `0..n`.
pub(crate) struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub(crate) fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}
