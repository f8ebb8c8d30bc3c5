use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utilities::RegularityConstants;

/// How the shrinkage constant `Delta` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScheduleMode {
    /// The constant that the feasibility proof needs.
    Paper,
    /// That constant times a factor in `(0, 1]`; `tau` is recomputed from the scaled value.
    Scaled(f64),
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Paper => write!(f, "paper"),
            Self::Scaled(s) => write!(f, "scaled:{s}"),
        }
    }
}

impl From<ScheduleMode> for String {
    fn from(m: ScheduleMode) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for ScheduleMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;

    /// Accepts `paper`, `scaled:<factor>` and `scaled(<factor>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "paper" {
            return Ok(Self::Paper);
        }
        let factor = s
            .strip_prefix("scaled:")
            .or_else(|| s.strip_prefix("scaled(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown schedule mode {s:?}")))?;
        let v: f64 = factor
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad scale factor {factor:?}")))?;
        Ok(Self::Scaled(v))
    }
}

/// `Delta`, `tau` and the step, shrinkage and sampling sequences derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub delta: f64,
    pub tau: f64,
    pub n: usize,
    pub d: usize,
    pub d_bar: usize,
    pub constants: RegularityConstants,
    /// Sharpness constant of the feasible set.
    pub gamma_x: f64,
    /// Maximum shrinkage of the feasible set.
    pub h: f64,
    pub mode: ScheduleMode,
}

/// `beta L M n^{3/2} (6L + sqrt(d) (mu / sqrt(n) + 32 L (d_bar - 1))) / mu^5`.
pub fn safe_delta(c: &RegularityConstants, n: usize, d: usize, d_bar: usize) -> f64 {
    let nf = n as f64;
    let inner =
        6.0 * c.l + (d as f64).sqrt() * (c.mu / nf.sqrt() + 32.0 * c.l * (d_bar as f64 - 1.0));
    c.beta * c.l * c.m * nf.powf(1.5) * inner / c.mu.powi(5)
}

/// The five lower bounds whose maximum is `tau`.
pub fn tau_terms(
    c: &RegularityConstants,
    delta: f64,
    gamma_x: f64,
    h: f64,
    n: usize,
    d_bar: usize,
) -> [f64; 5] {
    let sqrt_n = (n as f64).sqrt();
    let db = d_bar as f64;
    [
        2.0,
        2.0 * db - 1.0,
        1.0 + 2.0 * c.mu * delta * gamma_x / (c.m * sqrt_n),
        (delta / h).sqrt(),
        c.l * c.beta * c.m * db.sqrt() * (c.mu + 32.0 * c.l * gamma_x * sqrt_n * (db - 1.0))
            / (2.0 * c.mu.powi(4) * gamma_x),
    ]
}

pub fn compute_schedule(
    constants: RegularityConstants,
    gamma_x: f64,
    h: f64,
    n: usize,
    d: usize,
    d_bar: usize,
    mode: ScheduleMode,
) -> Result<ScheduleParams> {
    constants.validate()?;
    if !(gamma_x >= 1.0) || !gamma_x.is_finite() {
        return Err(Error::InvalidConstants(format!(
            "Gamma must be at least 1, got {gamma_x}"
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidConstants(format!(
            "maximum shrinkage must be positive, got {h}"
        )));
    }
    if n == 0 || d_bar == 0 || d < n || d_bar > d {
        return Err(Error::InvalidConstants(format!(
            "inconsistent sizes n={n}, d={d}, d_bar={d_bar}"
        )));
    }
    let mut delta = safe_delta(&constants, n, d, d_bar);
    if let ScheduleMode::Scaled(factor) = mode {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::InvalidConstants(format!(
                "scale factor must lie in (0, 1], got {factor}"
            )));
        }
        delta *= factor;
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidConstants(format!(
            "Delta = {delta}; beta must be positive for a nonzero sampling step"
        )));
    }
    let tau = tau_terms(&constants, delta, gamma_x, h, n, d_bar)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ScheduleParams {
        delta,
        tau,
        n,
        d,
        d_bar,
        constants,
        gamma_x,
        h,
        mode,
    })
}

impl ScheduleParams {
    /// `gamma^t = 1 / (mu (t + tau))`.
    pub fn gamma(&self, t: usize) -> f64 {
        1.0 / (self.constants.mu * (t as f64 + self.tau))
    }

    /// `Delta^t = Delta / (t + tau)^2`, also for `t = -1`.
    pub fn shrinkage(&self, t: i64) -> f64 {
        self.delta / (t as f64 + self.tau).powi(2)
    }

    /// `eta^t = mu Delta^{t-1} / (4 sqrt(n))`.
    pub fn eta(&self, t: usize) -> f64 {
        self.constants.mu * self.shrinkage(t as i64 - 1) / (4.0 * (self.n as f64).sqrt())
    }

    /// Depth that the initial demand must have: `sqrt(n) eta^0 / mu`.
    pub fn init_margin(&self) -> f64 {
        (self.n as f64).sqrt() * self.eta(0) / self.constants.mu
    }

    /// Bound on the Jacobian estimate error of a user with block dimension `d_i`.
    pub fn jacobian_error_bound(&self, t: usize, d_i: usize) -> f64 {
        let c = &self.constants;
        let sqrt_n = (self.n as f64).sqrt();
        let di = d_i as f64;
        2.0 * c.beta * di.sqrt() / c.mu.powi(3)
            * (self.eta(t)
                + 2.0
                    * c.l
                    * (di - 1.0)
                    * (c.m * sqrt_n * self.gamma(t)
                        + 2.0 * self.shrinkage(t as i64) * self.gamma_x))
    }

    /// Bound on `|x_hat_i^{t+1} - x_i^t|`.
    pub fn step_bound(&self, t: usize) -> f64 {
        self.constants.m * (self.n as f64).sqrt() * self.gamma(t)
            + self.shrinkage(t as i64) * self.gamma_x
    }

    /// Threshold on the smallest singular value of a Jacobian estimate.
    pub fn sigma_threshold(&self) -> f64 {
        1.0 / (2.0 * self.constants.l)
    }
}
