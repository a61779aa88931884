use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{twist_exp, SE3Pose, Twist};
use crate::sum::compensated_sum;

/// Sub-sequence lengths in meters, measured along the ground-truth path.
pub const SEGMENT_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

/// World-from-camera poses, one per frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub poses: Vec<SE3Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<SE3Pose>) -> Self {
        Self { poses }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Cumulative path length at each frame.
    pub fn path_distances(&self) -> Vec<f64> {
        let mut dist = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for (k, p) in self.poses.iter().enumerate() {
            if k > 0 {
                acc += (p.translation - self.poses[k - 1].translation).norm();
            }
            dist.push(acc);
        }
        dist
    }

    /// Applies `t` on the left of every pose.
    pub fn transformed(&self, t: &SE3Pose) -> Trajectory {
        Trajectory::new(self.poses.iter().map(|p| t.compose(p)).collect())
    }
}

/// pose₀ = identity, pose_{k+1} = pose_k ∘ exp(twist_k).
pub fn integrate_trajectory(twists: &[Twist]) -> Result<Trajectory> {
    if twists.is_empty() {
        return Err(Error::invalid("cannot integrate an empty twist sequence"));
    }
    let mut poses = Vec::with_capacity(twists.len() + 1);
    poses.push(SE3Pose::identity());
    for t in twists {
        let last = poses[poses.len() - 1];
        poses.push(last.compose(&twist_exp(t)));
    }
    Ok(Trajectory::new(poses))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryProtocol {
    pub lengths: Vec<f64>,
    /// Start-frame stride; 1 evaluates every frame.
    pub stride: usize,
}

impl Default for OdometryProtocol {
    fn default() -> Self {
        Self {
            lengths: SEGMENT_LENGTHS.to_vec(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthError {
    pub length: f64,
    /// percent
    pub t_rel: f64,
    /// degrees per 100 m
    pub r_rel: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryErrors {
    /// Mean translation drift, percent.
    pub t_rel: f64,
    /// Mean rotation drift, degrees per 100 m.
    pub r_rel: f64,
    pub segments: usize,
    /// Only lengths with at least one segment appear.
    pub per_length: Vec<LengthError>,
}

pub fn kitti_odometry_errors(traj: &Trajectory, gt: &Trajectory) -> Result<OdometryErrors> {
    kitti_odometry_errors_with(traj, gt, &OdometryProtocol::default(), Execution::default())
}

/// Relative-pose drift over fixed-length sub-sequences.
///
/// For every start frame and every length ℓ the end frame is the first one
/// whose ground-truth path distance reaches start + ℓ. The segment error is
/// E = (Δest)⁻¹·Δgt; translation error is ‖t_E‖/ℓ and rotation error is
/// angle(R_E)/ℓ.
pub fn kitti_odometry_errors_with(
    traj: &Trajectory,
    gt: &Trajectory,
    protocol: &OdometryProtocol,
    exec: Execution,
) -> Result<OdometryErrors> {
    if traj.len() != gt.len() {
        return Err(Error::invalid(format!(
            "trajectory lengths differ: {} vs {}",
            traj.len(),
            gt.len()
        )));
    }
    if gt.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: gt.len(),
        });
    }
    if protocol.stride == 0 || protocol.lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("bad odometry protocol"));
    }
    let dist = gt.path_distances();
    let starts: Vec<usize> = (0..gt.len()).step_by(protocol.stride).collect();

    // per start frame: (length index, t_err, r_err) for each length that fits
    let per_start: Vec<Vec<(usize, f64, f64)>> = exec.map_indices(starts.len(), |s| {
        let first = starts[s];
        let mut out = Vec::new();
        for (li, &len) in protocol.lengths.iter().enumerate() {
            let target = dist[first] + len;
            let Some(last) = (first + 1..gt.len()).find(|&j| dist[j] >= target) else {
                continue;
            };
            let d_gt = gt.poses[first].inverse().compose(&gt.poses[last]);
            let d_est = traj.poses[first].inverse().compose(&traj.poses[last]);
            let e = d_est.inverse().compose(&d_gt);
            out.push((li, e.translation.norm() / len, e.rotation_angle() / len));
        }
        out
    });

    let deg_per_100m = 180.0 / std::f64::consts::PI * 100.0;
    let mut t_all = Vec::new();
    let mut r_all = Vec::new();
    let mut per_length = Vec::new();
    for (li, &len) in protocol.lengths.iter().enumerate() {
        let (t, r): (Vec<f64>, Vec<f64>) = per_start
            .iter()
            .flatten()
            .filter(|e| e.0 == li)
            .map(|e| (e.1, e.2))
            .unzip();
        if t.is_empty() {
            continue;
        }
        let n = t.len() as f64;
        per_length.push(LengthError {
            length: len,
            t_rel: 100.0 * compensated_sum(t.iter().copied()) / n,
            r_rel: deg_per_100m * compensated_sum(r.iter().copied()) / n,
            segments: t.len(),
        });
        t_all.extend(t);
        r_all.extend(r);
    }
    if t_all.is_empty() {
        return Err(Error::InsufficientData {
            needed: protocol
                .lengths
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min) as usize,
            found: dist[dist.len() - 1] as usize,
        });
    }
    let n = t_all.len() as f64;
    Ok(OdometryErrors {
        t_rel: 100.0 * compensated_sum(t_all) / n,
        r_rel: deg_per_100m * compensated_sum(r_all) / n,
        segments: n as usize,
        per_length,
    })
}

/// Global scale s minimizing Σ‖s·tᵢ − tᵢ^gt‖²; rotations are untouched.
pub fn scale_align(traj: &Trajectory, gt: &Trajectory) -> Result<(f64, Trajectory)> {
    if traj.len() != gt.len() {
        return Err(Error::invalid(format!(
            "trajectory lengths differ: {} vs {}",
            traj.len(),
            gt.len()
        )));
    }
    let num = compensated_sum(
        traj.poses
            .iter()
            .zip(&gt.poses)
            .map(|(a, b)| a.translation.dot(&b.translation)),
    );
    let den = compensated_sum(traj.poses.iter().map(|a| a.translation.norm_squared()));
    if !(den > 0.0) {
        return Err(Error::DegenerateScale(
            "all estimated translations are zero".into(),
        ));
    }
    let s = num / den;
    let aligned = Trajectory::new(
        traj.poses
            .iter()
            .map(|p| SE3Pose::new(p.rotation, p.translation * s))
            .collect(),
    );
    Ok((s, aligned))
}
