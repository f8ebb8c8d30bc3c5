//! Central reference solution and run metrics: regret, last-iterate error, infeasibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FeasibleSet, Polytope, ProjectionOptions};
use crate::linalg::{Matrix, Vector};
use crate::spnum::RunTrace;
use crate::utilities::Population;

/// Iteration cap of the central solver.
pub const CENTRAL_MAX_ITER: usize = 1_000_000;
/// Projection tolerance used by the central solver.
pub const CENTRAL_TOL_PROJ: f64 = 1e-12;
/// Required KKT residual of the central solution.
pub const CENTRAL_KKT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub instance_hash: Option<String>,
}

impl CentralSolution {
    pub fn x(&self) -> Vector {
        Vector::from_column_slice(&self.x_star)
    }
}

/// Maximizes `f` over the set by projected gradient ascent with step `1 / l`, stopping when
/// successive iterates are within `tol`.
pub fn solve_central(
    set: &FeasibleSet,
    population: &Population,
    l: f64,
    tol: f64,
) -> Result<CentralSolution> {
    if !(l > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidConstants(format!(
            "central solver needs l > 0 and tol > 0 (got {l}, {tol})"
        )));
    }
    let opts = ProjectionOptions::with_tol(CENTRAL_TOL_PROJ);
    let (lo, hi) = population.domain();
    // Projections may land an ulp outside the utility domain.
    let step = |x: &Vector| -> Result<Vector> {
        let g = population.gradient(x)?;
        let y = set.project(&(x + g / l), &opts)?;
        Ok(y.zip_zip_map(&lo, &hi, |v, a, b| v.clamp(a, b)))
    };
    let mut x = set.deepest_point()?;
    let mut iterations = 0;
    let residual = |x: &Vector| -> Result<f64> { Ok(l * (step(x)? - x).norm()) };
    loop {
        if iterations >= CENTRAL_MAX_ITER {
            return Err(Error::NonConvergence {
                iterations,
                residual: residual(&x)?,
            });
        }
        let next = step(&x)?;
        iterations += 1;
        let moved = (&next - &x).norm();
        x = next;
        if moved <= tol {
            break;
        }
    }
    let kkt_residual = residual(&x)?;
    if kkt_residual > CENTRAL_KKT_TOL {
        return Err(Error::NonConvergence {
            iterations,
            residual: kkt_residual,
        });
    }
    Ok(CentralSolution {
        f_star: population.value(&x)?,
        x_star: x.as_slice().to_vec(),
        kkt_residual,
        iterations,
        instance_hash: None,
    })
}

/// `|[A x - c]_+| / |c|` for polytopes, `dist(x, X) / diameter` otherwise.
pub fn infeasibility(set: &FeasibleSet, x: &Vector) -> Result<f64> {
    if let Some(poly) = set.as_polytope() {
        return Ok(polytope_infeasibility(&poly, x));
    }
    if set.depth(x) >= 0.0 {
        return Ok(0.0);
    }
    let y = set.project(x, &ProjectionOptions::with_tol(CENTRAL_TOL_PROJ))?;
    Ok((y - x).norm() / diameter_bound(set))
}

pub fn polytope_infeasibility(poly: &Polytope, x: &Vector) -> f64 {
    excess_ratio(poly.rows().iter().map(|r| r.as_slice()), poly.rhs(), x)
}

/// `|[A x - c]_+| / |c|` for constraints that need not form a bounded polytope.
pub fn constraint_infeasibility(a: &Matrix, c: &Vector, x: &Vector) -> f64 {
    let rows: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    excess_ratio(rows.iter().map(|r| r.as_slice()), c.as_slice(), x)
}

fn excess_ratio<'a>(rows: impl Iterator<Item = &'a [f64]>, c: &[f64], x: &Vector) -> f64 {
    let excess: f64 = rows
        .zip(c)
        .map(|(r, &c)| {
            let v = r.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() - c;
            v.max(0.0).powi(2)
        })
        .sum();
    let c_norm = c.iter().map(|c| c * c).sum::<f64>().sqrt();
    excess.sqrt() / if c_norm > 0.0 { c_norm } else { 1.0 }
}

fn diameter_bound(set: &FeasibleSet) -> f64 {
    match set {
        FeasibleSet::Ball(b) => 2.0 * b.radius(),
        FeasibleSet::Box(b) => (b.hi() - b.lo()).norm(),
        FeasibleSet::Polytope(_) => 1.0,
        FeasibleSet::Intersection(i) => i
            .parts()
            .iter()
            .filter(|p| !matches!(p, FeasibleSet::Polytope(_)))
            .map(diameter_bound)
            .fold(f64::INFINITY, f64::min)
            .min(f64::MAX),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `R(T)` over all `T/2` iterations.
    pub regret: f64,
    /// `(f* - f(x^0)) / n`, the gap of the initial demand. Not part of `R(T)`.
    pub initial_gap: f64,
    /// `R(k)` for `k = 1..=T/2`.
    pub regret_curve: Vec<f64>,
    /// `R(k) / log(1 + k)`.
    pub regret_over_log: Vec<f64>,
    /// `|x^k - x*|^2` for `k = 0..=T/2`.
    pub dist_sq: Vec<f64>,
    pub last_iterate_err: f64,
    /// Infeasibility of `x^k` for `k = 0..=T/2`.
    pub infeasibility: Vec<f64>,
    /// Whether `x^k` or `x^{k,s}` left the set, for `k = 0..=T/2`.
    pub violations: Vec<bool>,
    pub max_infeasibility: f64,
    pub violation_count: usize,
}

/// Two-stage regret `R(k) = (1/n) sum_{t<=k} (2 f* - f(x^t) - f(x^{t,s}))` and the other
/// per-iterate metrics. `feasible_set` defines infeasibility (it may differ from the set
/// the algorithm ran on, e.g. without redundant sign rows).
pub fn regret(
    trace: &RunTrace,
    central: &CentralSolution,
    feasible_set: &FeasibleSet,
) -> Result<MetricsReport> {
    if let (Some(a), Some(b)) = (&trace.instance_hash, &central.instance_hash) {
        if a != b {
            return Err(Error::InstanceMismatch {
                trace: a.clone(),
                central: b.clone(),
            });
        }
    }
    let x_star = central.x();
    if let Some(first) = trace.records.first() {
        if first.x.len() != x_star.len() {
            return Err(Error::InstanceMismatch {
                trace: format!("dimension {}", first.x.len()),
                central: format!("dimension {}", x_star.len()),
            });
        }
    }
    let n = trace.schedule.n as f64;
    let updates: Vec<_> = trace.updates().collect();
    let samples: Vec<_> = trace.samples().collect();
    if updates.len() != samples.len() {
        return Err(Error::InvalidConfig(
            "trace has unmatched update and sampling stages".into(),
        ));
    }

    let mut regret_curve = Vec::with_capacity(updates.len());
    let mut total = 0.0;
    for (u, s) in updates.iter().zip(&samples) {
        total += (2.0 * central.f_star - u.f - s.f) / n;
        regret_curve.push(total);
    }
    let regret_over_log = regret_curve
        .iter()
        .enumerate()
        .map(|(k, r)| r / ((k + 2) as f64).ln())
        .collect();

    let mut dist_sq = Vec::with_capacity(updates.len() + 1);
    let mut infeas = Vec::with_capacity(updates.len() + 1);
    let mut violations = Vec::with_capacity(updates.len() + 1);
    if let Some(init) = trace.initial() {
        dist_sq.push((&init.x - &x_star).norm_squared());
        infeas.push(infeasibility(feasible_set, &init.x)?);
        let probes_ok = trace
            .records
            .iter()
            .filter(|r| r.t <= 0)
            .all(|r| feasible_set.depth(&r.x) >= -crate::geometry::TOL_PROJ);
        violations.push(!probes_ok);
    }
    for (u, s) in updates.iter().zip(&samples) {
        dist_sq.push((&u.x - &x_star).norm_squared());
        infeas.push(infeasibility(feasible_set, &u.x)?);
        let bad = [&u.x, &s.x]
            .iter()
            .any(|x| feasible_set.depth(x) < -crate::geometry::TOL_PROJ);
        violations.push(bad);
    }
    let initial_gap = trace.initial().map_or(0.0, |r| (central.f_star - r.f) / n);
    Ok(MetricsReport {
        regret: total,
        initial_gap,
        last_iterate_err: dist_sq.last().copied().unwrap_or(f64::NAN),
        max_infeasibility: infeas.iter().copied().fold(0.0, f64::max),
        violation_count: violations.iter().filter(|v| **v).count(),
        regret_curve,
        regret_over_log,
        dist_sq,
        infeasibility: infeas,
        violations,
    })
}
