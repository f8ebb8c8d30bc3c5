//! Safe pricing: a projected-gradient target on a shrinking inner set, turned into prices
//! through finite-difference estimates of each user's price-response Jacobian.
//!
//! Every stage re-checks the margins that keep realized demand feasible and aborts with
//! [`Error::SafetyMarginViolation`] if one fails.

mod schedule;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use schedule::{compute_schedule, safe_delta, tau_terms, ScheduleMode, ScheduleParams};

use crate::error::{Error, Result};
use crate::geometry::{FeasibleSet, ProjectionOptions, TOL_PROJ};
use crate::linalg::{norm2, sigma_min, Matrix, Vector};
use crate::utilities::Population;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpnumOptions {
    pub tol_proj: f64,
    /// Measure Jacobian estimate errors against the exact Jacobian when it exists.
    pub check_jacobian: bool,
    /// Abort when a measured Jacobian error exceeds its bound (plus a rounding floor).
    pub enforce_jacobian_bound: bool,
    /// Abort when a target step exceeds `M sqrt(n) gamma^t + Delta^t Gamma`.
    pub enforce_step_bound: bool,
}

impl Default for SpnumOptions {
    fn default() -> Self {
        Self {
            tol_proj: TOL_PROJ,
            check_jacobian: true,
            enforce_jacobian_bound: true,
            enforce_step_bound: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Initial demand `x^0`.
    Init,
    /// Initialization probe `x^{-k}`.
    Probe,
    Update,
    Sample,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Init => "init",
            Self::Probe => "probe",
            Self::Update => "update",
            Self::Sample => "sample",
        })
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "init" => Self::Init,
            "probe" => Self::Probe,
            "update" => Self::Update,
            "sample" => Self::Sample,
            other => return Err(Error::InvalidConfig(format!("unknown stage {other:?}"))),
        })
    }
}

/// One realized demand vector.
///
/// `t` is the superscript of the iterate: update row `t` holds `x^t`, sample row `t` holds
/// `x^{t,s}`, probe rows use `t = -k`. For update and sample rows, `delta_t` and `gamma_t` are
/// the shrinkage and step of iteration `t - 1` that produced them and `eta_t` is `eta^t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: i64,
    pub stage: Stage,
    pub x: Vector,
    pub p: Vector,
    /// Target `x_hat^t` (update rows).
    pub x_desired: Option<Vector>,
    /// `|x_hat^t - x^t|` for update rows, `|x^{t,s} - x^t|` for sample rows.
    pub deviation: Option<f64>,
    /// Depth of `x` in the feasible set.
    pub margin: f64,
    pub delta_t: f64,
    pub gamma_t: f64,
    pub eta_t: f64,
    pub f: f64,
    pub feasible: bool,
    /// Per-user `|Jhat - J|` measured before the update that produced this row.
    pub jacobian_errors: Vec<Option<f64>>,
    pub jacobian_bounds: Vec<f64>,
    pub sigma_min: Option<f64>,
    /// Largest per-user `|x_hat_i - x_i|` and its bound.
    pub step: Option<f64>,
    pub step_bound: Option<f64>,
}

/// Append-only record of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub schedule: ScheduleParams,
    pub records: Vec<TraceRecord>,
    pub instance_hash: Option<String>,
}

impl RunTrace {
    pub fn updates(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.stage == Stage::Update)
    }

    pub fn samples(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.stage == Stage::Sample)
    }

    pub fn initial(&self) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.stage == Stage::Init)
    }

    /// Number of completed update stages.
    pub fn iterations(&self) -> usize {
        self.updates().count()
    }

    pub fn all_feasible(&self) -> bool {
        self.records.iter().all(|r| r.feasible)
    }

    /// Last update iterate `x^{T/2}`.
    pub fn last_iterate(&self) -> Option<&Vector> {
        self.updates().last().map(|r| &r.x)
    }
}

/// Full algorithm state between iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct SpnumState {
    pub t: usize,
    pub p: Vector,
    pub x: Vector,
    pub jac: Vec<Matrix>,
    /// Sampling step used when each column was last refreshed.
    pub column_eta: Vec<Vec<f64>>,
    pub x_desired: Option<Vector>,
    pub x_sample: Option<Vector>,
    pub p_sample: Option<Vector>,
}

impl SpnumState {
    /// Column refreshed by the sampling stage of iteration `t` for a block of size `d_i`.
    pub fn cursor(t: usize, d_i: usize) -> usize {
        t % d_i
    }
}

/// Binds an instance (set, users, schedule) for running the algorithm.
#[derive(Clone, Copy, Debug)]
pub struct Spnum<'a> {
    pub set: &'a FeasibleSet,
    pub population: &'a Population,
    pub schedule: &'a ScheduleParams,
    pub options: SpnumOptions,
}

fn block(v: &Vector, r: std::ops::Range<usize>) -> Vector {
    v.rows(r.start, r.len()).into_owned()
}

impl<'a> Spnum<'a> {
    pub fn new(
        set: &'a FeasibleSet,
        population: &'a Population,
        schedule: &'a ScheduleParams,
    ) -> Self {
        Self {
            set,
            population,
            schedule,
            options: SpnumOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SpnumOptions) -> Self {
        self.options = options;
        self
    }

    fn projection(&self) -> ProjectionOptions {
        ProjectionOptions::with_tol(self.options.tol_proj)
    }

    fn record(&self, t: i64, stage: Stage, x: &Vector, p: &Vector) -> Result<TraceRecord> {
        let margin = self.set.depth(x);
        Ok(TraceRecord {
            t,
            stage,
            x: x.clone(),
            p: p.clone(),
            x_desired: None,
            deviation: None,
            margin,
            delta_t: 0.0,
            gamma_t: 0.0,
            eta_t: 0.0,
            f: self.population.value(x)?,
            feasible: margin >= -self.options.tol_proj,
            jacobian_errors: Vec::new(),
            jacobian_bounds: Vec::new(),
            sigma_min: None,
            step: None,
            step_bound: None,
        })
    }

    /// `x_i^0 = eta^0 / mu` when that clears the initialization margin; otherwise its
    /// projection onto a slightly deeper shrunk set (the `x >= 0` rows of a polytope only give
    /// it depth `eta^0 / mu`).
    pub fn default_start(&self) -> Result<Vector> {
        let s = self.schedule;
        let x0 = Vector::from_element(self.population.dim(), s.eta(0) / s.constants.mu);
        if self.set.depth(&x0) >= s.init_margin() {
            return Ok(x0);
        }
        let shrunk = self.set.shrink(s.init_margin() * (1.0 + 1e-3))?;
        shrunk.project(&x0, &ProjectionOptions::with_tol(1e-12))
    }

    /// Prices `p^0 = grad f(x0_target)`, then one probe round per block coordinate.
    pub fn initialize(&self, x0_target: &Vector) -> Result<(SpnumState, Vec<TraceRecord>)> {
        let s = self.schedule;
        let pop = self.population;
        let required = s.init_margin();
        let depth = self.set.depth(x0_target);
        if !(depth >= required) {
            return Err(Error::UnsafeInitialization { depth, required });
        }
        let eta0 = s.eta(0);
        let p0 = pop.gradient(x0_target)?;
        let x0 = pop.respond(&p0)?;
        let mut init = self.record(0, Stage::Init, &x0, &p0)?;
        init.delta_t = s.shrinkage(-1);
        init.eta_t = eta0;
        let mut records = vec![init];

        let mut jac: Vec<Matrix> = pop
            .users()
            .iter()
            .map(|u| Matrix::zeros(u.dim(), u.dim()))
            .collect();
        let mut column_eta: Vec<Vec<f64>> =
            pop.users().iter().map(|u| vec![eta0; u.dim()]).collect();
        for k in 1..=pop.d_bar() {
            let mut probe = p0.clone();
            for (i, u) in pop.users().iter().enumerate() {
                if u.dim() >= k {
                    probe[pop.block(i).start + k % u.dim()] += eta0;
                }
            }
            let xk = pop.respond(&probe)?;
            let joint = self.set.depth(&xk);
            if !(joint > 0.0) {
                let culprit = (0..pop.n())
                    .map(|i| {
                        let mut alone = x0.clone();
                        let b = pop.block(i);
                        alone
                            .rows_mut(b.start, b.len())
                            .copy_from(&xk.rows(b.start, b.len()));
                        (i, self.set.depth(&alone))
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                return Err(Error::ProbeViolation {
                    user: culprit,
                    depth: joint,
                });
            }
            for (i, u) in pop.users().iter().enumerate() {
                if u.dim() < k {
                    continue;
                }
                let b = pop.block(i);
                let col = k % u.dim();
                let diff = (block(&xk, b.clone()) - block(&x0, b)) / eta0;
                jac[i].set_column(col, &diff);
                column_eta[i][col] = eta0;
            }
            let mut rec = self.record(-(k as i64), Stage::Probe, &xk, &probe)?;
            rec.delta_t = s.shrinkage(-1);
            rec.eta_t = eta0;
            records.push(rec);
        }
        let state = SpnumState {
            t: 0,
            p: p0,
            x: x0,
            jac,
            column_eta,
            x_desired: None,
            x_sample: None,
            p_sample: None,
        };
        Ok((state, records))
    }

    fn violation(t: usize, what: String) -> Error {
        Error::SafetyMarginViolation { t, what }
    }

    /// Steps 6-9: target, price update, realized demand.
    pub fn update_stage(&self, state: &mut SpnumState) -> Result<TraceRecord> {
        let s = self.schedule;
        let pop = self.population;
        let t = state.t;
        let delta_t = s.shrinkage(t as i64);
        let gamma_t = s.gamma(t);
        let threshold = s.sigma_threshold();

        let mut smallest = f64::INFINITY;
        let mut errors = Vec::with_capacity(pop.n());
        let mut bounds = Vec::with_capacity(pop.n());
        for (i, u) in pop.users().iter().enumerate() {
            let sig = sigma_min(&state.jac[i]);
            smallest = smallest.min(sig);
            if !(sig >= threshold - 1e-12) {
                return Err(Error::SingularJacobianEstimate {
                    user: i,
                    t,
                    sigma_min: sig,
                    threshold,
                });
            }
            let bound = s.jacobian_error_bound(t, u.dim());
            bounds.push(bound);
            if !self.options.check_jacobian {
                errors.push(None);
                continue;
            }
            let b = pop.block(i);
            let exact = match u.response_jacobian_exact(&state.p.as_slice()[b.clone()]) {
                Ok(j) => j,
                Err(Error::BoundaryResponse { .. }) => {
                    errors.push(None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let err = norm2(&(&state.jac[i] - exact));
            errors.push(Some(err));
            if self.options.enforce_jacobian_bound {
                let xi = block(&state.x, b);
                let min_eta = state.column_eta[i]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                // Rounding in the difference quotients.
                let floor =
                    16.0 * f64::EPSILON * (xi.amax() + 1.0) * (u.dim() as f64).sqrt() / min_eta;
                if err > bound + floor {
                    return Err(Self::violation(
                        t,
                        format!("user {i}: Jacobian error {err:e} exceeds bound {bound:e}"),
                    ));
                }
            }
        }

        let shrunk = self.set.shrink(delta_t)?;
        let ascent = &state.x + &state.p * gamma_t;
        let x_hat = shrunk.project(&ascent, &self.projection())?;

        let step_bound = s.step_bound(t);
        let mut step: f64 = 0.0;
        let mut p_next = state.p.clone();
        for (i, _) in pop.users().iter().enumerate() {
            let b = pop.block(i);
            let dx = block(&x_hat, b.clone()) - block(&state.x, b.clone());
            step = step.max(dx.norm());
            let dp = state.jac[i].clone().lu().solve(&dx).ok_or_else(|| {
                Error::SingularJacobianEstimate {
                    user: i,
                    t,
                    sigma_min: 0.0,
                    threshold,
                }
            })?;
            let mut pb = p_next.rows_mut(b.start, b.len());
            pb += dp;
        }
        if self.options.enforce_step_bound
            && step > step_bound * (1.0 + 1e-9) + self.options.tol_proj
        {
            return Err(Self::violation(
                t,
                format!("target step {step:e} exceeds bound {step_bound:e}"),
            ));
        }

        let x_next = pop.respond(&p_next)?;
        let deviation = (&x_hat - &x_next).norm();
        if !(deviation < 0.75 * delta_t + self.options.tol_proj) {
            return Err(Self::violation(
                t,
                format!(
                    "|x_hat - x| = {deviation:e} is not below 3/4 Delta^t = {:e}",
                    0.75 * delta_t
                ),
            ));
        }
        let mut rec = self.record(t as i64 + 1, Stage::Update, &x_next, &p_next)?;
        if !(rec.margin >= 0.25 * delta_t - self.options.tol_proj) {
            return Err(Self::violation(
                t,
                format!(
                    "depth {:e} of x^(t+1) is below Delta^t/4 = {:e}",
                    rec.margin,
                    0.25 * delta_t
                ),
            ));
        }
        rec.x_desired = Some(x_hat.clone());
        rec.deviation = Some(deviation);
        rec.delta_t = delta_t;
        rec.gamma_t = gamma_t;
        rec.eta_t = s.eta(t + 1);
        rec.jacobian_errors = errors;
        rec.jacobian_bounds = bounds;
        rec.sigma_min = Some(smallest);
        rec.step = Some(step);
        rec.step_bound = Some(step_bound);

        state.p = p_next;
        state.x = x_next;
        state.x_desired = Some(x_hat);
        Ok(rec)
    }

    /// Steps 10-12: perturb one price coordinate per user and refresh that Jacobian column.
    pub fn sampling_stage(&self, state: &mut SpnumState) -> Result<TraceRecord> {
        let s = self.schedule;
        let pop = self.population;
        let t = state.t;
        let delta_t = s.shrinkage(t as i64);
        let eta = s.eta(t + 1);
        if !(eta > 0.0) {
            return Err(Error::InvalidConstants(format!(
                "sampling step eta^{} = {eta}",
                t + 1
            )));
        }
        let mut p_s = state.p.clone();
        for (i, u) in pop.users().iter().enumerate() {
            p_s[pop.block(i).start + SpnumState::cursor(t, u.dim())] += eta;
        }
        let x_s = pop.respond(&p_s)?;
        let deviation = (&x_s - &state.x).norm();
        // Quadratic users attain the bound exactly.
        if deviation > 0.25 * delta_t * (1.0 + 1e-9) + 1e-15 {
            return Err(Self::violation(
                t,
                format!(
                    "|x^(t+1,s) - x^(t+1)| = {deviation:e} exceeds Delta^t/4 = {:e}",
                    0.25 * delta_t
                ),
            ));
        }
        let mut rec = self.record(t as i64 + 1, Stage::Sample, &x_s, &p_s)?;
        if !(rec.margin > 0.0) {
            return Err(Self::violation(
                t,
                format!("sampling demand left the interior (depth {:e})", rec.margin),
            ));
        }
        for (i, u) in pop.users().iter().enumerate() {
            let b = pop.block(i);
            let col = SpnumState::cursor(t, u.dim());
            let diff = (block(&x_s, b.clone()) - block(&state.x, b)) / eta;
            state.jac[i].set_column(col, &diff);
            state.column_eta[i][col] = eta;
        }
        rec.deviation = Some(deviation);
        rec.delta_t = delta_t;
        rec.gamma_t = s.gamma(t);
        rec.eta_t = eta;
        state.x_sample = Some(x_s);
        state.p_sample = Some(p_s);
        state.t += 1;
        Ok(rec)
    }

    /// Initialization followed by `horizon / 2` update and sampling stages.
    pub fn run(&self, x0_target: &Vector, horizon: usize) -> Result<RunTrace> {
        if horizon == 0 || horizon % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "horizon must be a positive even number, got {horizon}"
            )));
        }
        let (mut state, mut records) = self.initialize(x0_target)?;
        records.reserve(horizon);
        for _ in 0..horizon / 2 {
            records.push(self.update_stage(&mut state)?);
            records.push(self.sampling_stage(&mut state)?);
        }
        Ok(RunTrace {
            schedule: self.schedule.clone(),
            records,
            instance_hash: None,
        })
    }

    /// [`Spnum::run`] from [`Spnum::default_start`].
    pub fn run_default(&self, horizon: usize) -> Result<RunTrace> {
        let x0 = self.default_start()?;
        self.run(&x0, horizon)
    }
}
