use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spnum::ScheduleMode;
use crate::utilities::RegularityConstants;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    BenchmarkBinary,
    BenchmarkReal,
    Ball,
    SharpnessSweep,
    Custom,
}

impl Study {
    pub const ALL: [Study; 5] = [
        Self::BenchmarkBinary,
        Self::BenchmarkReal,
        Self::Ball,
        Self::SharpnessSweep,
        Self::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::BenchmarkBinary => "benchmark_binary",
            Self::BenchmarkReal => "benchmark_real",
            Self::Ball => "ball",
            Self::SharpnessSweep => "sharpness_sweep",
            Self::Custom => "custom",
        }
    }

    pub fn is_benchmark(self) -> bool {
        matches!(self, Self::BenchmarkBinary | Self::BenchmarkReal)
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown study {s:?}")))
    }
}

/// Grid of the sharpness study: one job per `(n, omega, Gamma, seed)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub omega_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![2, 4, 8, 16],
            omega_values: vec![0.001, 0.1],
            gamma_values: vec![4.0, 8.0, 16.0, 32.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Polytope { rows: Vec<Vec<f64>>, c: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Intersection { parts: Vec<SetSpec> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum UserSpec {
    QuadLog {
        y: f64,
        theta: f64,
        lo: f64,
        hi: f64,
    },
    QuadLogBlock {
        y: Vec<f64>,
        theta: f64,
        q: Vec<Vec<f64>>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    AlphaFair {
        alpha: f64,
        lo: f64,
        hi: f64,
    },
    CosQuad {
        theta: f64,
        omega: f64,
        lo: f64,
        hi: f64,
    },
}

/// A hand-specified instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub set: SetSpec,
    pub users: Vec<UserSpec>,
    pub constants: RegularityConstants,
    /// Sharpness constant; computed from the set when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Initial demand target; defaults to the standard start.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub schedule_mode: ScheduleMode,
    /// Inclusive range of the number of users.
    pub n_range: (usize, usize),
    /// Inclusive range of the number of coupling constraints (benchmarks).
    pub m_range: (usize, usize),
    pub theta_range: (f64, f64),
    /// Range of the quadratic shift; degenerate `(3, 3)` for the benchmarks.
    pub y_range: (f64, f64),
    pub sweep: SweepConfig,
    pub custom: Option<CustomConfig>,
    /// Also run the dual-gradient baseline (polytope studies).
    pub run_baseline: bool,
    /// Measure Jacobian errors against exact Jacobians.
    pub check_jacobian: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_study(Study::Ball)
    }
}

impl ExperimentConfig {
    /// Defaults reproducing each study at its usual scale.
    pub fn for_study(study: Study) -> Self {
        let base = Self {
            study,
            seeds: (0..100).collect(),
            horizon: 50,
            schedule_mode: ScheduleMode::Paper,
            n_range: (5, 20),
            m_range: (5, 10),
            theta_range: (0.0, 1.0),
            y_range: (-2.0, 2.0),
            sweep: SweepConfig::default(),
            custom: None,
            run_baseline: false,
            check_jacobian: true,
        };
        match study {
            Study::Ball => base,
            Study::BenchmarkBinary | Study::BenchmarkReal => Self {
                seeds: (0..50).collect(),
                horizon: 1000,
                y_range: (3.0, 3.0),
                run_baseline: true,
                ..base
            },
            Study::SharpnessSweep => Self {
                seeds: (0..10).collect(),
                horizon: 500,
                theta_range: (1.0, 2.0),
                ..base
            },
            Study::Custom => Self {
                seeds: vec![0],
                horizon: 100,
                ..base
            },
        }
    }

    /// Parses a TOML document. Keys that are absent take the defaults of the named study.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        let study = match value.get("study") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "study must be a string, got {other}"
                )))
            }
            None => Study::Ball,
        };
        let defaults = toml::Table::try_from(Self::for_study(study))
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let merged = merge(defaults, value);
        let config: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.horizon == 0 || self.horizon % 2 != 0 {
            return bad(format!(
                "horizon must be a positive even number, got {}",
                self.horizon
            ));
        }
        if self.n_range.0 == 0 || self.n_range.0 > self.n_range.1 {
            return bad(format!("empty user range {:?}", self.n_range));
        }
        if self.m_range.0 == 0 || self.m_range.0 > self.m_range.1 {
            return bad(format!("empty constraint range {:?}", self.m_range));
        }
        if !(self.theta_range.0 <= self.theta_range.1) || !(self.y_range.0 <= self.y_range.1) {
            return bad("parameter ranges must be ordered".into());
        }
        if let ScheduleMode::Scaled(f) = self.schedule_mode {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("scale factor must lie in (0, 1], got {f}"));
            }
        }
        if self.study == Study::SharpnessSweep {
            let s = &self.sweep;
            if s.n_values.is_empty() || s.omega_values.is_empty() || s.gamma_values.is_empty() {
                return bad("sweep grid is empty".into());
            }
            if s.n_values.contains(&0) || s.omega_values.iter().any(|w| !(*w > 0.0)) {
                return bad("sweep needs n >= 1 and omega > 0".into());
            }
            for &n in &s.n_values {
                for &g in &s.gamma_values {
                    if !(g >= (n as f64).sqrt()) {
                        return bad(format!(
                            "Gamma = {g} gives condition number below 1 for n = {n}"
                        ));
                    }
                }
            }
        }
        if self.study == Study::Custom && self.custom.is_none() {
            return bad("custom study needs a [custom] table".into());
        }
        Ok(())
    }
}

fn merge(mut base: toml::Table, overlay: toml::Table) -> toml::Table {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}
