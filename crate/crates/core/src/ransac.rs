//! 3-point RANSAC over the motion-field model.
//!
//! Each hypothesis samples three jointly-valid pixels, solves the square
//! 6×6 system for (v, ω) and counts pixels whose predicted flow lies within
//! `threshold_px` of the input flow. Iteration `i` seeds its own generator
//! with `seed ^ i`, so the result does not depend on how iterations are
//! scheduled across threads.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{ensure_same_dims, DisparityField, FlowField, InlierMask, Mask};
use crate::geometry::{normalize_pixel, NormalizedPoint, StereoRig, Twist};
use crate::motion::{design_rows, solve_minimal, solve_twist_ls, MotionSample};

/// How the 2-vector flow residual is reduced to a scalar in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualNorm {
    #[default]
    Euclidean,
    /// max(|du|, |dv|)
    MaxAbs,
}

impl ResidualNorm {
    #[inline]
    fn apply(self, du: f64, dv: f64) -> f64 {
        match self {
            ResidualNorm::Euclidean => du.hypot(dv),
            ResidualNorm::MaxAbs => du.abs().max(dv.abs()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub iterations: usize,
    pub threshold_px: f64,
    pub seed: u64,
    pub min_inliers: usize,
    /// Re-solve over the winning inlier set before the final scoring.
    pub refit: bool,
    pub residual_norm: ResidualNorm,
    pub execution: Execution,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            threshold_px: 1.0,
            seed: 0,
            min_inliers: 6,
            refit: true,
            residual_norm: ResidualNorm::Euclidean,
            execution: Execution::default(),
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("RANSAC needs at least one iteration"));
        }
        if !(self.threshold_px > 0.0 && self.threshold_px.is_finite()) {
            return Err(Error::invalid("inlier threshold must be > 0"));
        }
        if self.min_inliers < 3 {
            return Err(Error::invalid("min_inliers must be >= 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub twist: Twist,
    pub mask: InlierMask,
    pub inlier_count: usize,
    /// Inliers over jointly-valid pixels.
    pub inlier_fraction: f64,
    pub mean_residual_px: f64,
    /// Iteration whose minimal sample produced the winning hypothesis.
    pub best_iteration: usize,
    /// Hypotheses that survived the degeneracy check.
    pub hypotheses: usize,
}

/// Jointly-valid pixels with their design rows, ready for repeated scoring.
struct Correspondences {
    focal: f64,
    index: Vec<usize>,
    rows: Vec<[[f64; 6]; 2]>,
    flow_px: Vec<Vector2<f64>>,
    points: Vec<(NormalizedPoint, f64)>,
}

impl Correspondences {
    fn build(rig: &StereoRig, flow: &FlowField, disp: &DisparityField) -> Result<Self> {
        ensure_same_dims(flow.dims(), disp.dims())?;
        ensure_same_dims(flow.dims(), (rig.width(), rig.height()))?;
        let intr = rig.intrinsics;
        let fb = rig.fb();
        let w = flow.width;
        let mut c = Correspondences {
            focal: intr.f,
            index: Vec::new(),
            rows: Vec::new(),
            flow_px: Vec::new(),
            points: Vec::new(),
        };
        for i in 0..flow.len() {
            let (u, v) = (flow.u[i], flow.v[i]);
            if !(flow.valid[i]
                && disp.valid[i]
                && disp.d[i] > 0.0
                && u.is_finite()
                && v.is_finite())
            {
                continue;
            }
            let p = normalize_pixel(&intr, (i % w) as f64, (i / w) as f64);
            let inv_depth = disp.d[i] / fb;
            c.index.push(i);
            c.rows.push(design_rows(p, inv_depth));
            c.flow_px.push(Vector2::new(u, v));
            c.points.push((p, 1.0 / inv_depth));
        }
        Ok(c)
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    #[inline]
    fn residual(&self, k: usize, x: &[f64; 6], norm: ResidualNorm) -> f64 {
        let r = &self.rows[k];
        let pu: f64 = (0..6).map(|c| r[0][c] * x[c]).sum::<f64>() * self.focal;
        let pv: f64 = (0..6).map(|c| r[1][c] * x[c]).sum::<f64>() * self.focal;
        norm.apply(pu - self.flow_px[k].x, pv - self.flow_px[k].y)
    }

    /// (inlier count, residual sum over inliers)
    fn score(&self, t: &Twist, threshold: f64, norm: ResidualNorm) -> (usize, f64) {
        let x = t.to_array();
        let mut count = 0;
        let mut sum = 0.0;
        for k in 0..self.len() {
            let r = self.residual(k, &x, norm);
            if r < threshold {
                count += 1;
                sum += r;
            }
        }
        (count, sum)
    }

    fn mask(
        &self,
        t: &Twist,
        threshold: f64,
        norm: ResidualNorm,
        dims: (usize, usize),
    ) -> (Mask, f64) {
        let x = t.to_array();
        let mut mask = Mask::filled(dims.0, dims.1, false);
        let mut sum = 0.0;
        for k in 0..self.len() {
            let r = self.residual(k, &x, norm);
            if r < threshold {
                mask.data[self.index[k]] = true;
                sum += r;
            }
        }
        (mask, sum)
    }

    fn sample(&self, k: usize) -> MotionSample {
        let (p, depth) = self.points[k];
        MotionSample {
            point: p,
            depth,
            flow: self.flow_px[k] / self.focal,
        }
    }
}

pub fn score_inliers(
    rig: &StereoRig,
    t: &Twist,
    flow: &FlowField,
    disp: &DisparityField,
    threshold_px: f64,
) -> Result<InlierMask> {
    score_inliers_with(rig, t, flow, disp, threshold_px, ResidualNorm::Euclidean)
}

/// A pixel is an inlier iff it is valid in both fields, has positive
/// disparity, and its flow residual under `t` is below `threshold_px`.
pub fn score_inliers_with(
    rig: &StereoRig,
    t: &Twist,
    flow: &FlowField,
    disp: &DisparityField,
    threshold_px: f64,
    norm: ResidualNorm,
) -> Result<InlierMask> {
    let c = Correspondences::build(rig, flow, disp)?;
    Ok(c.mask(t, threshold_px, norm, flow.dims()).0)
}

#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    iteration: usize,
    twist: Twist,
    count: usize,
    mean_residual: f64,
}

impl Hypothesis {
    /// More inliers, then lower mean residual, then earlier iteration.
    fn better_than(&self, other: &Hypothesis) -> bool {
        (self.count, other.mean_residual, other.iteration)
            .partial_cmp(&(other.count, self.mean_residual, self.iteration))
            .map(|o| o.is_gt())
            .unwrap_or(false)
    }
}

/// Draws three distinct indices in `0..n` from a per-iteration generator.
pub fn minimal_sample(seed: u64, iteration: usize, n: usize) -> [usize; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ iteration as u64);
    let idx = rand::seq::index::sample(&mut rng, n, 3);
    [idx.index(0), idx.index(1), idx.index(2)]
}

pub fn estimate_pose_ransac(
    rig: &StereoRig,
    flow: &FlowField,
    disp: &DisparityField,
    cfg: &RansacConfig,
) -> Result<PoseEstimate> {
    cfg.validate()?;
    let corr = Correspondences::build(rig, flow, disp)?;
    let n = corr.len();
    if n < cfg.min_inliers {
        return Err(Error::InsufficientData {
            needed: cfg.min_inliers,
            found: n,
        });
    }

    let hypotheses: Vec<Option<Hypothesis>> = cfg.execution.map_indices(cfg.iterations, |it| {
        let pick = minimal_sample(cfg.seed, it, n);
        let rows = [corr.rows[pick[0]], corr.rows[pick[1]], corr.rows[pick[2]]];
        let flows = pick.map(|k| corr.flow_px[k] / corr.focal);
        let twist = solve_minimal(&rows, &flows).ok()?;
        if !twist.is_finite() {
            return None;
        }
        let (count, sum) = corr.score(&twist, cfg.threshold_px, cfg.residual_norm);
        Some(Hypothesis {
            iteration: it,
            twist,
            count,
            mean_residual: if count > 0 {
                sum / count as f64
            } else {
                f64::INFINITY
            },
        })
    });

    let survivors = hypotheses.iter().flatten().count();
    let best = hypotheses
        .into_iter()
        .flatten()
        .fold(None::<Hypothesis>, |acc, h| match acc {
            Some(b) if !h.better_than(&b) => Some(b),
            _ => Some(h),
        })
        .ok_or_else(|| {
            Error::EstimationFailed(format!(
                "all {} minimal samples were degenerate",
                cfg.iterations
            ))
        })?;

    let twist = if cfg.refit {
        let (mask, _) = corr.mask(
            &best.twist,
            cfg.threshold_px,
            cfg.residual_norm,
            flow.dims(),
        );
        let samples: Vec<MotionSample> = (0..n)
            .filter(|&k| mask.data[corr.index[k]])
            .map(|k| corr.sample(k))
            .collect();
        solve_twist_ls(&samples)?
    } else {
        best.twist
    };

    let (mask, sum) = corr.mask(&twist, cfg.threshold_px, cfg.residual_norm, flow.dims());
    let inlier_count = mask.count();
    Ok(PoseEstimate {
        twist,
        inlier_count,
        inlier_fraction: inlier_count as f64 / n as f64,
        mean_residual_px: if inlier_count > 0 {
            sum / inlier_count as f64
        } else {
            0.0
        },
        mask,
        best_iteration: best.iteration,
        hypotheses: survivors,
    })
}
