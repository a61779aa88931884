//! Stereo visual odometry from dense optical flow and disparity.
//!
//! The crate estimates the camera twist (v, ω) between frames with a
//! 3-point RANSAC over the rigid motion-field model, recovers disparity
//! from flow given a twist, scores image pairs with unsupervised warp
//! losses, generates synthetic ground-truth scenes, and evaluates
//! trajectories, flow and depth against reference data.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod eval;
pub mod exec;
pub mod field;
pub mod geometry;
pub mod image;
pub mod io;
pub mod losses;
pub mod motion;
pub mod ransac;
pub mod sum;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Execution;
pub use field::{DisparityField, FlowField, InlierMask, Mask};
pub use geometry::{
    depth_to_disparity, disparity_to_depth, motion_matrices, normalize_pixel, twist_exp,
    CameraIntrinsics, NormalizedPoint, SE3Pose, StereoRig, Twist,
};
pub use image::{PixelMap, ScalarImage, WarpField};
pub use motion::{
    disparity_from_flow, predict_flow_field, predict_flow_point, solve_twist_ls, MotionSample,
};
pub use ransac::{estimate_pose_ransac, score_inliers, PoseEstimate, RansacConfig, ResidualNorm};
