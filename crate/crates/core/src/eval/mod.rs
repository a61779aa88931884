//! Trajectory integration and the odometry, flow and depth error metrics.

mod metrics;
mod odometry;

pub use metrics::{
    depth_errors, flow_errors, flow_errors_masked, Crop, DepthErrors, DepthEvalOptions, DepthMap,
    FlowErrors, FLOW_OUTLIER_ABS_PX, FLOW_OUTLIER_REL,
};
pub use odometry::{
    integrate_trajectory, kitti_odometry_errors, kitti_odometry_errors_with, scale_align,
    LengthError, OdometryErrors, OdometryProtocol, Trajectory, SEGMENT_LENGTHS,
};
