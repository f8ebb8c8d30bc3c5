//! Constant-step projected dual gradient pricing for polytope constraints.
//!
//! Prices are `p = A' lambda` and the multipliers ascend on the constraint residual. Fast, but
//! nothing keeps the transient demand inside the polytope.

use crate::error::{Error, Result};
use crate::geometry::Polytope;
use crate::linalg::{sigma_max, Matrix, Vector};
use crate::metrics::constraint_infeasibility;
use crate::utilities::Population;

#[derive(Clone, Debug, PartialEq)]
pub struct DualGradientState {
    pub t: usize,
    pub lambda: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DgRecord {
    pub t: usize,
    pub x: Vector,
    pub p: Vector,
    pub lambda: Vector,
    pub infeasibility: f64,
    pub f: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DgTrace {
    pub records: Vec<DgRecord>,
}

impl DgTrace {
    pub fn max_infeasibility(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.infeasibility)
            .fold(0.0, f64::max)
    }

    pub fn last_iterate(&self) -> Option<&Vector> {
        self.records.last().map(|r| &r.x)
    }
}

#[derive(Clone, Debug)]
pub struct DualGradient<'a> {
    a: Matrix,
    c: Vector,
    step: f64,
    population: &'a Population,
}

impl<'a> DualGradient<'a> {
    /// Step `alpha = mu / sigma_max(A)^2`.
    pub fn new(polytope: &Polytope, population: &'a Population, mu: f64) -> Result<Self> {
        Self::from_constraints(
            polytope.matrix(),
            Vector::from_column_slice(polytope.rhs()),
            population,
            mu,
        )
    }

    /// Constraints `A x <= c` that need not bound a polytope on their own (the demand domain
    /// does the rest).
    pub fn from_constraints(
        a: Matrix,
        c: Vector,
        population: &'a Population,
        mu: f64,
    ) -> Result<Self> {
        let s = sigma_max(&a);
        Self::with_step(a, c, population, mu / (s * s))
    }

    pub fn with_step(a: Matrix, c: Vector, population: &'a Population, step: f64) -> Result<Self> {
        if a.ncols() != population.dim() || a.nrows() != c.len() || a.nrows() == 0 {
            return Err(Error::InvalidConfig(format!(
                "{}x{} constraints with {} right-hand sides do not fit demand dimension {}",
                a.nrows(),
                a.ncols(),
                c.len(),
                population.dim()
            )));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidConstants(format!(
                "dual step must be positive, got {step}"
            )));
        }
        Ok(Self {
            a,
            c,
            step,
            population,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `lambda^0 = 0`.
    pub fn initial_state(&self) -> DualGradientState {
        DualGradientState {
            t: 0,
            lambda: Vector::zeros(self.a.nrows()),
        }
    }

    /// Posts `p^t = A' lambda^t`, observes `x^t = g(p^t)` and sets
    /// `lambda^{t+1} = [lambda^t + alpha (A x^t - c)]_+`.
    pub fn dg_step(&self, state: &mut DualGradientState) -> Result<DgRecord> {
        let p = self.a.transpose() * &state.lambda;
        let x = self.population.respond(&p)?;
        let record = DgRecord {
            t: state.t,
            infeasibility: constraint_infeasibility(&self.a, &self.c, &x),
            f: self.population.value(&x)?,
            lambda: state.lambda.clone(),
            x: x.clone(),
            p,
        };
        let residual = &self.a * &x - &self.c;
        state.lambda = (&state.lambda + residual * self.step).map(|v| v.max(0.0));
        state.t += 1;
        Ok(record)
    }

    pub fn run(&self, horizon: usize) -> Result<DgTrace> {
        let mut state = self.initial_state();
        let mut records = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            records.push(self.dg_step(&mut state)?);
        }
        Ok(DgTrace { records })
    }
}
