//! Stereo 6D object pose estimation toolkit.
//!
//! Synthetic stereo data in an extended BOP layout with dense ground-truth
//! features, classical disparity estimation, dense-correspondence pose
//! solvers with several stereo fusion strategies, and ADD(-S) evaluation.

pub mod bopstore;
pub mod cli;
pub mod evalkit;
pub mod geometry;
pub mod rasterizer;
pub mod scenegen;
pub mod posesolve;
pub mod stereomatch;
