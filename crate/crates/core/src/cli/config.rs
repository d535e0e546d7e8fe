use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::noise::NoiseConfig;
use super::CliError;
use crate::evalkit::DEFAULT_TAU;
use crate::posesolve::{FusionStrategy, SolverParams, DEFAULT_MAX_CORRESPONDENCES};
use crate::scenegen::GenConfig;
use crate::stereomatch::BlockMatchParams;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "STEREO6D_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisparitySource {
    /// Rendered depth converted to disparity, plus Gaussian noise.
    #[default]
    Gt,
    /// Block matching on the rendered RGB pair.
    BlockMatch,
}

impl fmt::Display for DisparitySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisparitySource::Gt => "gt",
            DisparitySource::BlockMatch => "block-match",
        })
    }
}

impl std::str::FromStr for DisparitySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gt" => Ok(DisparitySource::Gt),
            "block-match" => Ok(DisparitySource::BlockMatch),
            _ => Err(format!("unknown disparity source '{s}' (gt | block-match)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub strategies: Vec<FusionStrategy>,
    pub noise: NoiseConfig,
    pub disparity_source: DisparitySource,
    pub block_match: BlockMatchParams,
    /// Per view and object.
    pub max_correspondences: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            strategies: FusionStrategy::ALL.to_vec(),
            noise: NoiseConfig::default(),
            disparity_source: DisparitySource::Gt,
            block_match: BlockMatchParams::default(),
            max_correspondences: DEFAULT_MAX_CORRESPONDENCES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub tau: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub frames: usize,
    pub objects: u32,
    /// Fraction of the recorded baseline below which `bench` fails.
    pub gate: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            objects: 8,
            gate: 0.5,
        }
    }
}

/// Run configuration file (TOML). Every section is optional; unknown keys
/// are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub generate: GenConfig,
    pub solver: SolverParams,
    pub estimate: EstimateConfig,
    pub evaluate: EvaluateConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = |e: String| CliError::Validation(e);
        self.generate.validate().map_err(|e| v(e.to_string()))?;
        self.solver.validate().map_err(|e| v(e.to_string()))?;
        self.estimate.noise.validate().map_err(v)?;
        if self.estimate.strategies.is_empty() {
            return Err(v("estimate.strategies is empty".into()));
        }
        if self.estimate.max_correspondences < 4 {
            return Err(v("estimate.max_correspondences must be at least 4".into()));
        }
        if !(self.evaluate.tau > 0.0) {
            return Err(v(format!("evaluate.tau must be positive, got {}", self.evaluate.tau)));
        }
        if self.workers == Some(0) {
            return Err(v("workers must be positive".into()));
        }
        if self.bench.frames == 0 || !(self.bench.gate > 0.0 && self.bench.gate <= 1.0) {
            return Err(v("bench.frames must be positive and bench.gate in (0, 1]".into()));
        }
        Ok(())
    }

    /// Flag, then file, then environment, then available parallelism.
    pub fn resolve_workers(&self, flag: Option<usize>) -> Result<usize, CliError> {
        if let Some(w) = flag.or(self.workers) {
            return if w == 0 { Err(CliError::Validation("workers must be positive".into())) } else { Ok(w) };
        }
        if let Ok(s) = std::env::var(WORKERS_ENV) {
            return match s.trim().parse::<usize>() {
                Ok(w) if w > 0 => Ok(w),
                _ => Err(CliError::Validation(format!("{WORKERS_ENV}='{s}' is not a positive integer"))),
            };
        }
        Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}
