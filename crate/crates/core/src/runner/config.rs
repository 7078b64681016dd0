use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Barrier, Interval, ModelParams};
use crate::sampler::DEFAULT_LEAF_BUDGET;

/// What an experiment measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MeanMeasure,
    Avoidance,
    MaxLaw,
    OverlapCensus,
    Ballot,
    Perturbation,
    LogCorrection,
    ChenSteinBudget,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::MeanMeasure,
        ExperimentKind::Avoidance,
        ExperimentKind::MaxLaw,
        ExperimentKind::OverlapCensus,
        ExperimentKind::Ballot,
        ExperimentKind::Perturbation,
        ExperimentKind::LogCorrection,
        ExperimentKind::ChenSteinBudget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MeanMeasure => "mean_measure",
            ExperimentKind::Avoidance => "avoidance",
            ExperimentKind::MaxLaw => "max_law",
            ExperimentKind::OverlapCensus => "overlap_census",
            ExperimentKind::Ballot => "ballot",
            ExperimentKind::Perturbation => "perturbation",
            ExperimentKind::LogCorrection => "log_correction",
            ExperimentKind::ChenSteinBudget => "chen_stein_budget",
        }
    }

    /// Bridge experiments run over `n_grid`; the rest sample trees over
    /// `ladder`.
    pub fn uses_bridges(self) -> bool {
        matches!(self, ExperimentKind::Ballot | ExperimentKind::Perturbation)
    }
}

/// A declarative experiment, read from TOML.
///
/// ```toml
/// kind = "mean_measure"
/// ladder = [[1, 16], [2, 8]]
/// window = [-1.0, 4.0]
/// reps = 2000
/// master_seed = 7
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// `(K, m)` pairs.
    #[serde(default)]
    pub ladder: Vec<[u32; 2]>,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    /// Exponent of the lowered barrier; `(1−α)/4` per entry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub reps: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Bridge lengths for `ballot` and `perturbation`.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Threshold on `D(n)·n/|ε|` above which a grid point is flagged.
    #[serde(default = "default_cap")]
    pub cap: f64,
    /// Largest tree (in leaves) a ladder entry may have.
    #[serde(default = "default_budget")]
    pub leaf_budget: u64,
}

fn default_window() -> [f64; 2] {
    [-1.0, 4.0]
}

fn default_threads() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn default_eps() -> f64 {
    0.1
}

fn default_cap() -> f64 {
    10.0
}

fn default_budget() -> u64 {
    DEFAULT_LEAF_BUDGET
}

/// Fewest replicates accepted for a maximum-law fit.
pub const MIN_MAX_LAW_REPS: u64 = 100;

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(kind: ExperimentKind, reps: u64) -> Self {
        Self {
            kind,
            ladder: Vec::new(),
            window: default_window(),
            gamma: None,
            reps,
            master_seed: 0,
            threads: default_threads(),
            out: default_out(),
            n_grid: Vec::new(),
            eps: default_eps(),
            cap: default_cap(),
            leaf_budget: default_budget(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn window_interval(&self) -> Result<Interval> {
        Interval::new(self.window[0], self.window[1])
            .map_err(|e| Error::config("window", e.to_string()))
    }

    /// Validated `ModelParams` for each ladder entry.
    pub fn params(&self) -> Result<Vec<ModelParams>> {
        self.ladder
            .iter()
            .enumerate()
            .map(|(i, &[k, m])| {
                ModelParams::new(k, m).map_err(|e| Error::config(format!("ladder[{i}]"), e.to_string()))
            })
            .collect()
    }

    /// The filter barrier for one ladder entry.
    pub fn barrier(&self, params: &ModelParams) -> Result<Barrier> {
        match self.gamma {
            Some(gamma) => {
                let b = Barrier::Lowered { gamma };
                b.validate(params).map_err(|e| Error::config("gamma", e.to_string()))?;
                Ok(b)
            }
            None => Barrier::lowered_default(params),
        }
    }

    /// Field-level validation. Tree sizes are checked separately by
    /// [`ExperimentConfig::check_budget`].
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::config("reps", "must be at least 1"));
        }
        if self.threads < 1 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        if self.kind.uses_bridges() {
            return self.validate_bridges();
        }
        let window = self.window_interval()?;
        if !window.is_compact() {
            return Err(Error::config("window", "upper end must be finite"));
        }
        let params = self.params()?;
        for (i, p) in params.iter().enumerate() {
            if p.size() < 2 {
                return Err(Error::config(format!("ladder[{i}]"), "size N = K·m must be at least 2"));
            }
            if self.gamma.is_none() && p.alpha() >= 1.0 {
                return Err(Error::config(
                    format!("ladder[{i}]"),
                    "K = N leaves no admissible gamma in (0, (1-alpha)/2)",
                ));
            }
            self.barrier(p)?;
            let needs_pairs = matches!(
                self.kind,
                ExperimentKind::OverlapCensus | ExperimentKind::ChenSteinBudget
            );
            if needs_pairs && p.scales() < 2 {
                return Err(Error::config(
                    format!("ladder[{i}]"),
                    "overlap statistics need K >= 2",
                ));
            }
        }
        match self.kind {
            ExperimentKind::MaxLaw if self.reps < MIN_MAX_LAW_REPS => Err(Error::config(
                "reps",
                format!("max_law needs at least {MIN_MAX_LAW_REPS} replicates"),
            )),
            ExperimentKind::LogCorrection => {
                let mut sizes: Vec<u32> = params.iter().map(|p| p.size()).collect();
                sizes.sort_unstable();
                sizes.dedup();
                if sizes.len() < 3 {
                    Err(Error::config("ladder", "log_correction needs at least 3 distinct sizes N"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn validate_bridges(&self) -> Result<()> {
        if let Some(i) = self.n_grid.iter().position(|&n| n < 2) {
            return Err(Error::config(format!("n_grid[{i}]"), "bridge length must be at least 2"));
        }
        if self.kind == ExperimentKind::Perturbation {
            if self.n_grid.is_empty() {
                return Err(Error::config("n_grid", "must not be empty"));
            }
            if !(self.eps != 0.0 && self.eps.abs() <= 1.0) {
                return Err(Error::config("eps", "must satisfy 0 < |eps| <= 1"));
            }
            if !(self.cap > 0.0 && self.cap.is_finite()) {
                return Err(Error::config("cap", "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Refuses ladder entries whose tree exceeds `leaf_budget`.
    pub fn check_budget(&self) -> Result<()> {
        if self.kind.uses_bridges() {
            return Ok(());
        }
        for p in self.params()? {
            let leaves = p.leaf_count().unwrap_or(u128::MAX);
            if leaves > u128::from(self.leaf_budget) {
                return Err(Error::BudgetExceeded {
                    leaves,
                    budget: self.leaf_budget,
                });
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, leaving out `out` and `threads`,
    /// which do not affect the statistics.
    pub fn content_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        let map = value.as_object_mut().expect("config is an object");
        map.remove("out");
        map.remove("threads");
        let canonical = serde_json::to_vec(&value).expect("value serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
