//! Dense-correspondence pose estimation.
//!
//! Stereo strategies differ in where the two views are combined:
//!
//! | strategy | solver |
//! |---|---|
//! | `MONO_LEFT` | RANSAC P3P + refinement on the left view |
//! | `LATE_POSE_COMBINE` | independent per-view solves, poses averaged in the left frame |
//! | `MID_JOINT_PNP` | one pose fitted to the concatenated correspondences of both cameras |
//! | `DISPARITY_3D3D` | correspondences lifted to 3D with disparity, rigid 3D-3D alignment |
//! | `EARLY_JOINT_PNP_PLUS_DEPTH` | joint PnP refined with additional disparity-lifted point residuals |

mod dense;
mod fusion;
mod kabsch;
mod p3p;
mod pnp;
mod refine;

pub use dense::{correspondences_from_maps, DEFAULT_MAX_CORRESPONDENCES};
pub use fusion::{disparity_3d3d_solve, estimate, fuse_late, lift_correspondences, FrameInputs, LiftedPoint};
pub use kabsch::{kabsch_align, kabsch_fit, kabsch_ransac};
pub use p3p::{p3p, solve_polynomial_real};
pub use pnp::{joint_stereo_pnp, pnp_solve, reprojection_stats, Camera};
pub use refine::{
    apply_increment, refine_pose, refine_problem, DepthTerm, Observation, RefineProblem, RefineReport,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: Vector2<f64>,
    /// Object-frame point (mm).
    pub object: Vector3<f64>,
    pub weight: f64,
    pub view: View,
}

impl Correspondence {
    pub fn new(pixel: Vector2<f64>, object: Vector3<f64>, view: View) -> Self {
        Correspondence {
            pixel,
            object,
            weight: 1.0,
            view,
        }
    }
}

/// 2D-3D correspondences, possibly from both views.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    entries: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<Correspondence>) -> Result<Self, SolveError> {
        let mut set = Self::new();
        for e in entries {
            set.push(e)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, c: Correspondence) -> Result<(), SolveError> {
        if !(0.0..=1.0).contains(&c.weight) {
            return Err(SolveError::InvalidInput(format!("weight {} outside [0, 1]", c.weight)));
        }
        if !c.pixel.iter().chain(c.object.iter()).all(|v| v.is_finite()) {
            return Err(SolveError::InvalidInput("non-finite correspondence".into()));
        }
        self.entries.push(c);
        Ok(())
    }

    pub fn entries(&self) -> &[Correspondence] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn view(&self, view: View) -> Vec<Correspondence> {
        self.entries.iter().filter(|c| c.view == view).cloned().collect()
    }

    pub fn count(&self, view: View) -> usize {
        self.entries.iter().filter(|c| c.view == view).count()
    }

    pub fn extend(&mut self, other: &CorrespondenceSet) {
        self.entries.extend_from_slice(&other.entries);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub ransac_threshold_px: f64,
    pub ransac_confidence: f64,
    pub max_iterations: usize,
    pub refine_iterations: usize,
    pub inlier_threshold_mm: f64,
    /// Pixels of reprojection residual equivalent to one millimeter of
    /// 3D point residual in the combined objective.
    pub depth_weight: f64,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            ransac_threshold_px: 3.0,
            ransac_confidence: 0.999,
            max_iterations: 10_000,
            refine_iterations: 20,
            inlier_threshold_mm: 10.0,
            depth_weight: 1.0,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.ransac_threshold_px > 0.0) || !(self.inlier_threshold_mm > 0.0) {
            return Err(SolveError::Configuration("thresholds must be positive".into()));
        }
        if !(self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0) {
            return Err(SolveError::Configuration(format!(
                "ransac_confidence {} outside (0, 1)",
                self.ransac_confidence
            )));
        }
        if self.max_iterations == 0 {
            return Err(SolveError::Configuration("max_iterations must be positive".into()));
        }
        if !(self.depth_weight >= 0.0) {
            return Err(SolveError::Configuration("depth_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FusionStrategy {
    MonoLeft,
    LatePoseCombine,
    MidJointPnp,
    #[serde(rename = "DISPARITY_3D3D")]
    Disparity3d3d,
    EarlyJointPnpPlusDepth,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 5] = [
        FusionStrategy::MonoLeft,
        FusionStrategy::LatePoseCombine,
        FusionStrategy::MidJointPnp,
        FusionStrategy::Disparity3d3d,
        FusionStrategy::EarlyJointPnpPlusDepth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FusionStrategy::MonoLeft => "MONO_LEFT",
            FusionStrategy::LatePoseCombine => "LATE_POSE_COMBINE",
            FusionStrategy::MidJointPnp => "MID_JOINT_PNP",
            FusionStrategy::Disparity3d3d => "DISPARITY_3D3D",
            FusionStrategy::EarlyJointPnpPlusDepth => "EARLY_JOINT_PNP_PLUS_DEPTH",
        }
    }

    pub fn needs_disparity(&self) -> bool {
        matches!(self, FusionStrategy::Disparity3d3d | FusionStrategy::EarlyJointPnpPlusDepth)
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionStrategy {
    type Err = SolveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FusionStrategy::ALL
            .iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .copied()
            .ok_or_else(|| SolveError::Configuration(format!("unknown strategy '{s}'")))
    }
}

/// Solved pose (object → left camera) with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub inlier_count: usize,
    pub correspondence_count: usize,
    pub inlier_ratio: f64,
    /// Mean reprojection error over inliers, per view.
    pub reprojection_px_left: Option<f64>,
    pub reprojection_px_right: Option<f64>,
    /// Mean 3D point residual over inliers, for solvers with 3D terms.
    pub residual_mm: Option<f64>,
    pub strategy: FusionStrategy,
    pub converged: bool,
    /// Set when a stereo strategy fell back to a single-view result.
    pub fallback: bool,
    pub inliers: Vec<bool>,
}

impl PoseEstimate {
    pub fn mean_reprojection_px(&self) -> Option<f64> {
        match (self.reprojection_px_left, self.reprojection_px_right) {
            (Some(l), Some(r)) => Some(0.5 * (l + r)),
            (l, r) => l.or(r),
        }
    }

    pub(crate) fn with_strategy(mut self, strategy: FusionStrategy) -> Self {
        self.strategy = strategy;
        self
    }
}
