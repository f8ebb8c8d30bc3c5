use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Study};
use super::instance::{generate_instance, jobs, start_of, InstanceRecord, JobSpec, SweepCell};
use crate::baselines::{DgTrace, DualGradient};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::metrics::{regret, solve_central, CentralSolution, MetricsReport};
use crate::spnum::{RunTrace, Spnum, SpnumOptions};

/// Environment variable bounding the number of worker threads.
pub const WORKERS_ENV: &str = "SAFENUM_WORKERS";
/// Successive-iterate tolerance of the central solve.
pub const CENTRAL_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// A feasibility margin or a realized iterate left the set.
    Safety,
    /// Anything else: bad instance, solver failure, I/O.
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    fn from_error(e: &Error) -> Self {
        let kind = match e {
            Error::SafetyMarginViolation { .. }
            | Error::ProbeViolation { .. }
            | Error::UnsafeInitialization { .. } => FailureKind::Safety,
            _ => FailureKind::Error,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

/// Baseline trajectory measured against the central solution.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOutcome {
    pub trace: DgTrace,
    pub dist_sq: Vec<f64>,
    pub infeasibility: Vec<f64>,
}

/// Everything produced for one job. Missing pieces come with a failure marker.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub id: String,
    pub job: JobSpec,
    pub instance: Option<InstanceRecord>,
    pub trace: Option<RunTrace>,
    pub central: Option<CentralSolution>,
    pub metrics: Option<MetricsReport>,
    pub baseline: Option<BaselineOutcome>,
    pub failure: Option<Failure>,
}

impl RunOutcome {
    /// No safety assertion failed and every recorded iterate is feasible.
    pub fn safety_ok(&self) -> bool {
        let failed = matches!(&self.failure, Some(f) if f.kind == FailureKind::Safety);
        let infeasible_rows = self.trace.as_ref().is_some_and(|t| !t.all_feasible());
        let violations = self.metrics.as_ref().is_some_and(|m| m.violation_count > 0);
        !failed && !infeasible_rows && !violations
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Outcomes of every job, in job order.
#[derive(Clone, Debug)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub runs: Vec<RunOutcome>,
}

impl ResultBundle {
    pub fn safety_ok(&self) -> bool {
        self.runs.iter().all(RunOutcome::safety_ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.failure.is_some())
    }
}

/// Worker count from `SAFENUM_WORKERS`, or the number of logical CPUs.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs every job of `config` on a bounded worker pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultBundle> {
    run_experiment_with_workers(config, worker_count())
}

pub fn run_experiment_with_workers(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<ResultBundle> {
    config.validate()?;
    let all = jobs(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let runs = pool.install(|| all.par_iter().map(|job| run_job(config, job)).collect());
    Ok(ResultBundle {
        config: config.clone(),
        runs,
    })
}

/// Generates the instance of `job` and runs everything on it.
pub fn run_job(config: &ExperimentConfig, job: &JobSpec) -> RunOutcome {
    let mut out = RunOutcome {
        id: job.id(config.study),
        job: *job,
        instance: None,
        trace: None,
        central: None,
        metrics: None,
        baseline: None,
        failure: None,
    };
    if let Err(e) = fill(config, job, &mut out) {
        out.failure = Some(Failure::from_error(&e));
    }
    out
}

fn fill(config: &ExperimentConfig, job: &JobSpec, out: &mut RunOutcome) -> Result<()> {
    let instance = generate_instance(config, job)?;
    out.instance = Some(instance.clone());
    let set = instance.build_set()?;
    let population = instance.build_population()?;

    let options = SpnumOptions {
        check_jacobian: config.check_jacobian,
        ..SpnumOptions::default()
    };
    let spnum = Spnum::new(&set, &population, &instance.schedule).with_options(options);
    let x0 = match start_of(&instance) {
        Some(x0) => x0,
        None => spnum.default_start()?,
    };
    let mut trace = spnum.run(&x0, config.horizon)?;
    trace.instance_hash = Some(instance.hash.clone());
    out.trace = Some(trace);
    let trace = out.trace.as_ref().expect("just stored");

    let mut central = solve_central(&set, &population, instance.constants.l, CENTRAL_TOL)?;
    central.instance_hash = Some(instance.hash.clone());
    let x_star = central.x();
    out.metrics = Some(regret(trace, &central, &set)?);
    out.central = Some(central);

    if config.run_baseline {
        let (a, c) = match (instance.baseline_constraints(), set.as_polytope()) {
            (Some(ac), _) => ac,
            (None, Some(poly)) => (poly.matrix(), Vector::from_column_slice(poly.rhs())),
            (None, None) => return Ok(()),
        };
        let dg = DualGradient::from_constraints(a, c, &population, instance.constants.mu)?;
        let dg_trace = dg.run(config.horizon)?;
        let dist_sq = dg_trace
            .records
            .iter()
            .map(|r| (&r.x - &x_star).norm_squared())
            .collect();
        let infeas = dg_trace.records.iter().map(|r| r.infeasibility).collect();
        out.baseline = Some(BaselineOutcome {
            trace: dg_trace,
            dist_sq,
            infeasibility: infeas,
        });
    }
    Ok(())
}

/// Mean and population standard deviation of each point of a curve across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Per-`k` mean and population standard deviation over curves of possibly different lengths.
/// Entry `j` of every curve belongs to `k = first_k + j`.
pub fn bands_of(curves: &[&[f64]], first_k: usize) -> Vec<Band> {
    let sums: BTreeMap<usize, (usize, f64)> = curves.iter().fold(BTreeMap::new(), |mut acc, c| {
        for (j, &v) in c.iter().enumerate() {
            let e = acc.entry(j).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += v;
        }
        acc
    });
    sums.into_iter()
        .map(|(j, (count, sum))| {
            let mean = sum / count as f64;
            let var = curves
                .iter()
                .filter_map(|c| c.get(j))
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / count as f64;
            Band {
                k: first_k + j,
                mean,
                std: var.sqrt(),
                count,
            }
        })
        .collect()
}

/// The curves of one completed run that feed the figures.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCurves {
    pub beta: f64,
    pub cell: Option<SweepCell>,
    /// `R(k)`, `k >= 1`.
    pub regret: Vec<f64>,
    /// `R(k) / log(1 + k)`, `k >= 1`.
    pub regret_over_log: Vec<f64>,
    /// `k >= 0`.
    pub dist_sq: Vec<f64>,
    /// `k >= 0`.
    pub infeasibility: Vec<f64>,
    /// Baseline curves, `t >= 0`.
    pub dg_dist_sq: Option<Vec<f64>>,
    pub dg_infeasibility: Option<Vec<f64>>,
}

impl RunCurves {
    pub fn from_outcome(r: &RunOutcome) -> Option<Self> {
        if !r.completed() {
            return None;
        }
        let inst = r.instance.as_ref()?;
        let m = r.metrics.as_ref()?;
        Some(Self {
            beta: inst.constants.beta,
            cell: r.job.cell,
            regret: m.regret_curve.clone(),
            regret_over_log: m.regret_over_log.clone(),
            dist_sq: m.dist_sq.clone(),
            infeasibility: m.infeasibility.clone(),
            dg_dist_sq: r.baseline.as_ref().map(|b| b.dist_sq.clone()),
            dg_infeasibility: r.baseline.as_ref().map(|b| b.infeasibility.clone()),
        })
    }
}

/// One curve of one figure, aggregated across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub figure: String,
    pub method: String,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub n: Option<usize>,
    pub bands: Vec<Band>,
}

/// Figure data of a finished bundle. Only completed runs contribute.
pub fn aggregate(bundle: &ResultBundle) -> Vec<Series> {
    let curves: Vec<RunCurves> = bundle
        .runs
        .iter()
        .filter_map(RunCurves::from_outcome)
        .collect();
    aggregate_curves(bundle.config.study, &curves)
}

/// Figure data from per-run curves.
pub fn aggregate_curves(study: Study, runs: &[RunCurves]) -> Vec<Series> {
    let mut out = Vec::new();
    let plain = |figure: &str, method: &str, curves: Vec<&[f64]>, first_k: usize| Series {
        figure: figure.to_string(),
        method: method.to_string(),
        beta: None,
        gamma: None,
        n: None,
        bands: bands_of(&curves, first_k),
    };
    if runs.is_empty() {
        return out;
    }
    if study == Study::SharpnessSweep {
        let mut groups: BTreeMap<(u64, u64, usize), Vec<&[f64]>> = BTreeMap::new();
        for r in runs {
            let Some(cell) = r.cell else { continue };
            groups
                .entry((r.beta.to_bits(), cell.gamma.to_bits(), cell.n))
                .or_default()
                .push(&r.regret);
        }
        let mut keyed: Vec<_> = groups.into_iter().collect();
        keyed.sort_by(|a, b| {
            let fa = (f64::from_bits(a.0 .0), f64::from_bits(a.0 .1), a.0 .2);
            let fb = (f64::from_bits(b.0 .0), f64::from_bits(b.0 .1), b.0 .2);
            fa.partial_cmp(&fb).expect("finite grid values")
        });
        for ((beta, gamma, n), curves) in keyed {
            out.push(Series {
                beta: Some(f64::from_bits(beta)),
                gamma: Some(f64::from_bits(gamma)),
                n: Some(n),
                ..plain("regret_sweep", "spnum", curves, 1)
            });
        }
        return out;
    }
    out.push(plain(
        "dist_sq",
        "spnum",
        runs.iter().map(|r| r.dist_sq.as_slice()).collect(),
        0,
    ));
    out.push(plain(
        "infeasibility",
        "spnum",
        runs.iter().map(|r| r.infeasibility.as_slice()).collect(),
        0,
    ));
    out.push(plain(
        "regret_over_log",
        "spnum",
        runs.iter().map(|r| r.regret_over_log.as_slice()).collect(),
        1,
    ));
    let dg_dist: Vec<&[f64]> = runs
        .iter()
        .filter_map(|r| r.dg_dist_sq.as_deref())
        .collect();
    let dg_inf: Vec<&[f64]> = runs
        .iter()
        .filter_map(|r| r.dg_infeasibility.as_deref())
        .collect();
    if !dg_dist.is_empty() {
        out.push(plain("dist_sq", "dg", dg_dist, 0));
        out.push(plain("infeasibility", "dg", dg_inf, 0));
    }
    out
}
