use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, SetSpec, Study, UserSpec};
use crate::error::{Error, Result};
use crate::geometry::{FeasibleSet, SharpnessMode};
use crate::linalg::{Matrix, Vector};
use crate::spnum::{compute_schedule, ScheduleParams};
use crate::utilities::{Population, PriceResponse, RegularityConstants, UtilityModel};

/// Attempts before a degenerate instance is reported instead of resampled.
pub const MAX_RESAMPLES: u64 = 100;

/// One point of the sharpness grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub omega: f64,
    pub gamma: f64,
}

/// Identifies one run of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub seed: u64,
    pub cell: Option<SweepCell>,
}

impl JobSpec {
    pub fn id(&self, study: Study) -> String {
        match self.cell {
            Some(c) => format!("{study}-n{}-w{}-g{}-s{}", c.n, c.omega, c.gamma, self.seed),
            None => format!("{study}-s{}", self.seed),
        }
    }
}

/// All jobs of an experiment, in a fixed order.
pub fn jobs(config: &ExperimentConfig) -> Vec<JobSpec> {
    if config.study != Study::SharpnessSweep {
        return config
            .seeds
            .iter()
            .map(|&seed| JobSpec { seed, cell: None })
            .collect();
    }
    let mut out = Vec::new();
    for &omega in &config.sweep.omega_values {
        for &gamma in &config.sweep.gamma_values {
            for &n in &config.sweep.n_values {
                for &seed in &config.seeds {
                    out.push(JobSpec {
                        seed,
                        cell: Some(SweepCell { n, omega, gamma }),
                    });
                }
            }
        }
    }
    out
}

/// Everything sampled for one job plus the constants derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub study: Study,
    pub job: JobSpec,
    /// Resampling attempts spent on degenerate draws.
    pub attempt: u64,
    pub hash: String,
    pub n: usize,
    pub m: Option<usize>,
    pub set: SetSpec,
    /// Constraints without the sign rows, used by the baseline. They bound a set only
    /// together with the demand domain, so they are kept as raw data.
    pub baseline_set: Option<SetSpec>,
    pub users: Vec<UserSpec>,
    pub k: Option<f64>,
    pub constants: RegularityConstants,
    pub gamma_x: f64,
    pub gamma_method: String,
    pub h: f64,
    pub schedule: ScheduleParams,
    pub x0: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct HashedPart<'a> {
    study: Study,
    set: &'a SetSpec,
    baseline_set: &'a Option<SetSpec>,
    users: &'a [UserSpec],
    k: Option<f64>,
}

impl InstanceRecord {
    pub fn build_set(&self) -> Result<FeasibleSet> {
        build_set(&self.set)
    }

    /// `(A, c)` of the baseline constraints.
    pub fn baseline_constraints(&self) -> Option<(Matrix, Vector)> {
        match self.baseline_set.as_ref()? {
            SetSpec::Polytope { rows, c } => Some(constraint_data(rows, c)),
            _ => None,
        }
    }

    pub fn build_population(&self) -> Result<Population> {
        build_population(&self.users)
    }

    /// Recomputes the hash of the sampled data.
    pub fn compute_hash(&self) -> String {
        hash_parts(
            self.study,
            &self.set,
            &self.baseline_set,
            &self.users,
            self.k,
        )
    }
}

fn hash_parts(
    study: Study,
    set: &SetSpec,
    baseline_set: &Option<SetSpec>,
    users: &[UserSpec],
    k: Option<f64>,
) -> String {
    let part = HashedPart {
        study,
        set,
        baseline_set,
        users,
        k,
    };
    let bytes = serde_json::to_vec(&part).expect("instance data serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn build_set(spec: &SetSpec) -> Result<FeasibleSet> {
    match spec {
        SetSpec::Polytope { rows, c } => FeasibleSet::polytope(rows.clone(), c.clone()),
        SetSpec::Ball { center, radius } => FeasibleSet::ball(center.clone(), *radius),
        SetSpec::Box { lo, hi } => FeasibleSet::boxed(lo.clone(), hi.clone()),
        SetSpec::Intersection { parts } => {
            FeasibleSet::intersection(parts.iter().map(build_set).collect::<Result<Vec<_>>>()?)
        }
    }
}

fn constraint_data(rows: &[Vec<f64>], c: &[f64]) -> (Matrix, Vector) {
    let d = rows.first().map_or(0, Vec::len);
    (
        Matrix::from_fn(rows.len(), d, |i, j| rows[i][j]),
        Vector::from_column_slice(c),
    )
}

pub fn build_user(spec: &UserSpec) -> Result<PriceResponse> {
    let model = match spec {
        UserSpec::QuadLog { y, theta, lo, hi } => UtilityModel::quad_log(*y, *theta, *lo, *hi)?,
        UserSpec::QuadLogBlock {
            y,
            theta,
            q,
            lo,
            hi,
        } => {
            let d = y.len();
            if q.len() != d || q.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidModel(
                    "coupling matrix has the wrong shape".into(),
                ));
            }
            let qm = Matrix::from_fn(d, d, |i, j| q[i][j]);
            UtilityModel::quad_log_block(y.clone(), *theta, qm, lo.clone(), hi.clone())?
        }
        UserSpec::AlphaFair { alpha, lo, hi } => UtilityModel::alpha_fair(*alpha, *lo, *hi)?,
        UserSpec::CosQuad {
            theta,
            omega,
            lo,
            hi,
        } => UtilityModel::cos_quad(*theta, *omega, *lo, *hi)?,
    };
    Ok(PriceResponse::new(model))
}

pub fn build_population(users: &[UserSpec]) -> Result<Population> {
    Population::new(users.iter().map(build_user).collect::<Result<Vec<_>>>()?)
}

fn identity_rows(n: usize, sign: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut r = vec![0.0; n];
            r[i] = sign;
            r
        })
        .collect()
}

fn uniform(rng: &mut ChaCha20Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Sampled data before derived constants.
struct Draw {
    n: usize,
    m: Option<usize>,
    set: SetSpec,
    baseline_set: Option<SetSpec>,
    users: Vec<UserSpec>,
    k: Option<f64>,
    constants: RegularityConstants,
    gamma: Option<f64>,
    x0: Option<Vec<f64>>,
}

fn draw(config: &ExperimentConfig, job: &JobSpec, attempt: u64) -> Result<Draw> {
    let mut rng = ChaCha20Rng::seed_from_u64(job.seed);
    match config.study {
        Study::BenchmarkBinary | Study::BenchmarkReal => {
            rng.set_stream(attempt);
            let n = rng.gen_range(config.n_range.0..=config.n_range.1);
            let m = rng.gen_range(config.m_range.0..=config.m_range.1);
            let binary = config.study == Study::BenchmarkBinary;
            let a_hat: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            if binary {
                                if rng.gen_bool(0.5) {
                                    1.0
                                } else {
                                    0.0
                                }
                            } else {
                                rng.gen_range(-1.0..=1.0)
                            }
                        })
                        .collect()
                })
                .collect();
            let users = (0..n)
                .map(|_| UserSpec::QuadLog {
                    y: uniform(&mut rng, config.y_range),
                    theta: uniform(&mut rng, config.theta_range),
                    lo: 0.0,
                    hi: 1.0,
                })
                .collect();
            let coupling_c = if binary { 1.0 } else { 0.1 };
            let mut rows = a_hat;
            rows.extend(identity_rows(n, 1.0));
            let mut c = vec![coupling_c; m];
            c.extend(vec![1.0; n]);
            let baseline = SetSpec::Polytope {
                rows: rows.clone(),
                c: c.clone(),
            };
            rows.extend(identity_rows(n, -1.0));
            c.extend(vec![0.0; n]);
            Ok(Draw {
                n,
                m: Some(m),
                set: SetSpec::Polytope { rows, c },
                baseline_set: Some(baseline),
                users,
                k: None,
                constants: RegularityConstants::benchmark(),
                gamma: None,
                x0: None,
            })
        }
        Study::Ball => {
            rng.set_stream(attempt);
            let n = rng.gen_range(config.n_range.0..=config.n_range.1);
            let users = (0..n)
                .map(|_| {
                    let theta = uniform(&mut rng, config.theta_range);
                    let y = uniform(&mut rng, config.y_range);
                    UserSpec::QuadLog {
                        y,
                        theta,
                        lo: -1.0,
                        hi: 1.0,
                    }
                })
                .collect();
            Ok(Draw {
                n,
                m: None,
                set: SetSpec::Ball {
                    center: vec![0.0; n],
                    radius: 1.0,
                },
                baseline_set: None,
                users,
                k: None,
                constants: RegularityConstants::ball(),
                gamma: Some(1.0),
                x0: None,
            })
        }
        Study::SharpnessSweep => {
            let cell = job
                .cell
                .ok_or_else(|| Error::InvalidConfig("sharpness job without a grid cell".into()))?;
            let n = cell.n;
            // Depends on (seed, n) only, so every (omega, Gamma) cell sees the same users.
            rng.set_stream(((n as u64) << 32) | attempt);
            let users = (0..n)
                .map(|_| UserSpec::CosQuad {
                    theta: uniform(&mut rng, config.theta_range),
                    omega: cell.omega,
                    lo: 0.0,
                    hi: 1.0,
                })
                .collect();
            let nf = n as f64;
            let k = cell.gamma / nf.sqrt();
            let off = (1.0 - k) / (1.0 + k * (nf - 1.0));
            let mut rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { off }).collect())
                .collect();
            let mut c = vec![nf / (1.0 + k * (nf - 1.0)); n];
            rows.extend(identity_rows(n, -1.0));
            c.extend(vec![0.0; n]);
            Ok(Draw {
                n,
                m: Some(n),
                set: SetSpec::Polytope { rows, c },
                baseline_set: None,
                users,
                k: Some(k),
                constants: RegularityConstants::cos_quad(cell.omega),
                gamma: Some(cell.gamma),
                x0: None,
            })
        }
        Study::Custom => {
            let custom = config.custom.as_ref().ok_or_else(|| {
                Error::InvalidConfig("custom study needs a [custom] table".into())
            })?;
            Ok(Draw {
                n: custom.users.len(),
                m: None,
                set: custom.set.clone(),
                baseline_set: None,
                users: custom.users.clone(),
                k: None,
                constants: custom.constants,
                gamma: custom.gamma,
                x0: custom.x0.clone(),
            })
        }
    }
}

fn finish(
    config: &ExperimentConfig,
    job: &JobSpec,
    attempt: u64,
    d: Draw,
) -> Result<InstanceRecord> {
    let set = build_set(&d.set)?;
    let population = build_population(&d.users)?;
    if population.dim() != set.dim() {
        return Err(Error::InvalidConfig(format!(
            "users span {} coordinates but the set lives in R^{}",
            population.dim(),
            set.dim()
        )));
    }
    let baseline = match &d.baseline_set {
        Some(SetSpec::Polytope { rows, c }) => Some(constraint_data(rows, c)),
        _ => None,
    };
    let (gamma_x, gamma_method) = match (d.gamma, &baseline) {
        (Some(g), _) => (
            set.sharpness_bound(SharpnessMode::Supplied(g))?,
            "supplied".to_string(),
        ),
        (None, Some((a, _))) => {
            let kappa = crate::linalg::condition_number(a);
            if !kappa.is_finite() {
                return Err(Error::InvalidSet(
                    "baseline constraint matrix is rank deficient".into(),
                ));
            }
            (
                (set.dim() as f64).sqrt() * kappa.max(1.0),
                "spectral".to_string(),
            )
        }
        (None, None) => {
            let (g, mode) = set.sharpness_bound_auto()?;
            let method = match mode {
                SharpnessMode::ExactEnumeration => "exact",
                _ => "spectral",
            };
            (g, method.to_string())
        }
    };
    let h = set.max_shrinkage()?;
    let schedule = compute_schedule(
        d.constants,
        gamma_x,
        h,
        population.n(),
        population.dim(),
        population.d_bar(),
        config.schedule_mode,
    )?;
    let hash = hash_parts(config.study, &d.set, &d.baseline_set, &d.users, d.k);
    Ok(InstanceRecord {
        id: job.id(config.study),
        study: config.study,
        job: *job,
        attempt,
        hash,
        n: d.n,
        m: d.m,
        set: d.set,
        baseline_set: d.baseline_set,
        users: d.users,
        k: d.k,
        constants: d.constants,
        gamma_x,
        gamma_method,
        h,
        schedule,
        x0: d.x0,
    })
}

/// Samples the instance of `job`. Draws whose set has an empty interior (or is otherwise
/// invalid) are redrawn on the next sub-stream.
pub fn generate_instance(config: &ExperimentConfig, job: &JobSpec) -> Result<InstanceRecord> {
    let mut last = None;
    for attempt in 0..MAX_RESAMPLES {
        let d = draw(config, job, attempt)?;
        match finish(config, job, attempt, d) {
            Ok(rec) => return Ok(rec),
            Err(e @ (Error::InvalidSet(_) | Error::EmptyShrunkSet { .. }))
                if config.study.is_benchmark() =>
            {
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateInstance(format!(
        "{} draws failed for seed {}; last error: {}",
        MAX_RESAMPLES,
        job.seed,
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Initial demand target of a record: the configured one or `None` for the default start.
pub fn start_of(record: &InstanceRecord) -> Option<Vector> {
    record.x0.as_ref().map(|v| Vector::from_column_slice(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_shapes() {
        let cfg = ExperimentConfig::for_study(Study::BenchmarkBinary);
        let rec = generate_instance(
            &cfg,
            &JobSpec {
                seed: 3,
                cell: None,
            },
        )
        .unwrap();
        let m = rec.m.unwrap();
        let SetSpec::Polytope { rows, c } = &rec.set else {
            panic!()
        };
        assert_eq!(rows.len(), m + 2 * rec.n);
        assert!(c[..m + rec.n].iter().all(|&v| v == 1.0));
        let SetSpec::Polytope { rows, .. } = rec.baseline_set.as_ref().unwrap() else {
            panic!()
        };
        assert_eq!(rows.len(), m + rec.n);
        assert!(rows[..m].iter().flatten().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn deterministic_hash() {
        let cfg = ExperimentConfig::for_study(Study::BenchmarkReal);
        let job = JobSpec {
            seed: 11,
            cell: None,
        };
        let a = generate_instance(&cfg, &job).unwrap();
        let b = generate_instance(&cfg, &job).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash, a.compute_hash());
        let c = generate_instance(
            &cfg,
            &JobSpec {
                seed: 12,
                cell: None,
            },
        )
        .unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn sweep_matrix_has_condition_number_k() {
        let cfg = ExperimentConfig::for_study(Study::SharpnessSweep);
        let job = JobSpec {
            seed: 0,
            cell: Some(SweepCell {
                n: 2,
                omega: 0.1,
                gamma: 4.0,
            }),
        };
        let rec = generate_instance(&cfg, &job).unwrap();
        let k = rec.k.unwrap();
        assert!((k - 4.0 / 2f64.sqrt()).abs() < 1e-15);
        let SetSpec::Polytope { rows, .. } = &rec.set else {
            panic!()
        };
        let a = Matrix::from_fn(2, 2, |i, j| rows[i][j]);
        assert!((crate::linalg::condition_number(&a) - k).abs() < 1e-12);
        assert!((rows[0][1] - (1.0 - k) / (1.0 + k)).abs() < 1e-15);
        assert_eq!(rec.gamma_x, 4.0);
    }

    #[test]
    fn ball_draws_are_in_range() {
        let cfg = ExperimentConfig::for_study(Study::Ball);
        for seed in 0..20 {
            let rec = generate_instance(&cfg, &JobSpec { seed, cell: None }).unwrap();
            assert!((5..=20).contains(&rec.n));
            for u in &rec.users {
                let UserSpec::QuadLog { y, theta, .. } = u else {
                    panic!()
                };
                assert!((-2.0..=2.0).contains(y) && (0.0..=1.0).contains(theta));
            }
        }
    }
}
