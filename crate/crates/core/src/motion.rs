//! The rigid motion-field model in both directions.
//!
//! Forward: flow = (1/Z)·A·v + B·ω at each normalized point. Inverse: the
//! twist from stacked flow/depth samples (linear least squares), and the
//! disparity from flow and twist (per-pixel projection onto A·v).
//!
//! Flow is carried in normalized units (pixels / f) inside the solver;
//! fields at the boundary are in pixels.

use nalgebra::{DMatrix, DVector, Matrix6, Vector2, Vector6};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{ensure_same_dims, DisparityField, FlowField};
use crate::geometry::{
    disparity_to_depth, motion_matrices, normalize_pixel, NormalizedPoint, StereoRig, Twist,
};

/// Systems with a larger condition number are treated as rank-deficient.
pub const MAX_CONDITION: f64 = 1e10;

/// |A·v/(f·b)| below this marks a pixel as unobservable for disparity.
pub const MIN_PARALLAX: f64 = 1e-12;

/// One flow observation: a normalized point, its depth and its flow in
/// normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSample {
    pub point: NormalizedPoint,
    pub depth: f64,
    pub flow: Vector2<f64>,
}

impl MotionSample {
    pub fn new(point: NormalizedPoint, depth: f64, flow: Vector2<f64>) -> Result<Self> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(Error::invalid(format!("depth must be > 0, got {depth}")));
        }
        if !(point.x.is_finite() && point.y.is_finite() && flow.x.is_finite() && flow.y.is_finite())
        {
            return Err(Error::invalid("non-finite motion sample"));
        }
        Ok(Self { point, depth, flow })
    }

    /// The two rows [A/Z | B] of the design matrix.
    pub fn design_rows(&self) -> [[f64; 6]; 2] {
        design_rows(self.point, 1.0 / self.depth)
    }
}

#[inline]
pub(crate) fn design_rows(p: NormalizedPoint, inv_depth: f64) -> [[f64; 6]; 2] {
    let (a, b) = motion_matrices(p);
    let mut rows = [[0.0; 6]; 2];
    for r in 0..2 {
        for c in 0..3 {
            rows[r][c] = a[(r, c)] * inv_depth;
            rows[r][c + 3] = b[(r, c)];
        }
    }
    rows
}

/// Flow in normalized units given inverse depth; no validation.
#[inline]
pub(crate) fn flow_at(t: &Twist, p: NormalizedPoint, inv_depth: f64) -> Vector2<f64> {
    let (a, b) = motion_matrices(p);
    a * t.v * inv_depth + b * t.omega
}

pub fn predict_flow_point(t: &Twist, p: NormalizedPoint, depth: f64) -> Result<Vector2<f64>> {
    if !(depth > 0.0) {
        return Err(Error::invalid(format!("depth must be > 0, got {depth}")));
    }
    Ok(flow_at(t, p, 1.0 / depth))
}

pub fn predict_flow_field(rig: &StereoRig, t: &Twist, disp: &DisparityField) -> Result<FlowField> {
    predict_flow_field_with(rig, t, disp, Execution::default())
}

/// Flow in pixels predicted from disparity and twist. Pixels with invalid
/// disparity come out invalid (and zero).
pub fn predict_flow_field_with(
    rig: &StereoRig,
    t: &Twist,
    disp: &DisparityField,
    exec: Execution,
) -> Result<FlowField> {
    ensure_same_dims(disp.dims(), (rig.width(), rig.height()))?;
    let (w, h) = disp.dims();
    let intr = rig.intrinsics;
    let fb = rig.fb();
    let mut uv = vec![(0.0, 0.0); w * h];
    exec.fill_rows(&mut uv, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if !disp.valid[i] {
                continue;
            }
            let p = normalize_pixel(&intr, x as f64, y as f64);
            let fl = flow_at(t, p, disp.d[i] / fb);
            *out = (fl.x * intr.f, fl.y * intr.f);
        }
    });
    let (u, v) = uv.into_iter().unzip();
    FlowField::from_parts(w, h, u, v, disp.valid.clone())
}

/// Least-squares twist from three or more samples.
///
/// Exactly three samples give a square 6×6 system solved by LU; more use a
/// QR factorisation of the stacked 2N×6 design. The condition number is
/// estimated from singular values of the (triangular factor of the) design.
pub fn solve_twist_ls(samples: &[MotionSample]) -> Result<Twist> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            found: samples.len(),
        });
    }
    if samples.len() == 3 {
        let rows: Vec<[[f64; 6]; 2]> = samples.iter().map(|s| s.design_rows()).collect();
        let flows = [samples[0].flow, samples[1].flow, samples[2].flow];
        return solve_minimal(&[rows[0], rows[1], rows[2]], &flows);
    }

    let n = samples.len() * 2;
    let mut design = DMatrix::<f64>::zeros(n, 6);
    let mut rhs = DVector::<f64>::zeros(n);
    for (k, s) in samples.iter().enumerate() {
        let rows = s.design_rows();
        for r in 0..2 {
            for c in 0..6 {
                design[(2 * k + r, c)] = rows[r][c];
            }
        }
        rhs[2 * k] = s.flow.x;
        rhs[2 * k + 1] = s.flow.y;
    }
    solve_overdetermined(design, rhs).map(|x| Twist::from_vector(&x))
}

/// Exact solve of the 6×6 system built from three samples.
pub(crate) fn solve_minimal(rows: &[[[f64; 6]; 2]; 3], flows: &[Vector2<f64>; 3]) -> Result<Twist> {
    let mut m = Matrix6::<f64>::zeros();
    let mut b = Vector6::<f64>::zeros();
    for k in 0..3 {
        for r in 0..2 {
            for c in 0..6 {
                m[(2 * k + r, c)] = rows[k][r][c];
            }
        }
        b[2 * k] = flows[k].x;
        b[2 * k + 1] = flows[k].y;
    }
    let condition = condition_number(m.svd(false, false).singular_values.as_slice());
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Degenerate { condition });
    }
    let x = m.lu().solve(&b).ok_or(Error::Degenerate {
        condition: f64::INFINITY,
    })?;
    Ok(Twist::from_vector(&x))
}

fn solve_overdetermined(design: DMatrix<f64>, rhs: DVector<f64>) -> Result<Vector6<f64>> {
    if !design.iter().chain(rhs.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite least-squares system"));
    }
    let qr = design.qr();
    let r = qr.r();
    let condition = condition_number(r.clone().svd(false, false).singular_values.as_slice());
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Degenerate { condition });
    }
    let qtb = qr.q().transpose() * rhs;
    let x = r.solve_upper_triangular(&qtb).ok_or(Error::Degenerate {
        condition: f64::INFINITY,
    })?;
    Ok(Vector6::from_iterator(x.iter().copied()))
}

fn condition_number(singular: &[f64]) -> f64 {
    let max = singular.iter().cloned().fold(0.0, f64::max);
    let min = singular.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

pub fn disparity_from_flow(rig: &StereoRig, t: &Twist, flow: &FlowField) -> Result<DisparityField> {
    disparity_from_flow_with(rig, t, flow, Execution::default())
}

/// Per-pixel disparity that best explains `flow` under twist `t`: the
/// projection of (F − B·ω) onto A·v/(f·b). Pixels without parallax or with a
/// non-positive estimate are invalid.
pub fn disparity_from_flow_with(
    rig: &StereoRig,
    t: &Twist,
    flow: &FlowField,
    exec: Execution,
) -> Result<DisparityField> {
    ensure_same_dims(flow.dims(), (rig.width(), rig.height()))?;
    let (w, h) = flow.dims();
    let intr = rig.intrinsics;
    let fb = rig.fb();
    let mut out = vec![None; w * h];
    exec.fill_rows(&mut out, w, |y, row| {
        for (x, slot) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if !flow.valid[i] {
                continue;
            }
            let p = normalize_pixel(&intr, x as f64, y as f64);
            let (a, b) = motion_matrices(p);
            let v1 = a * t.v / fb;
            let norm2 = v1.norm_squared();
            if !(norm2.sqrt() >= MIN_PARALLAX) {
                continue;
            }
            let f_norm = Vector2::new(flow.u[i], flow.v[i]) / intr.f;
            let v2 = f_norm - b * t.omega;
            let d = v2.dot(&v1) / norm2;
            if d > 0.0 && d.is_finite() {
                *slot = Some(d);
            }
        }
    });
    let valid = out.iter().map(Option::is_some).collect();
    let d = out.into_iter().map(|o| o.unwrap_or(0.0)).collect();
    DisparityField::from_parts(w, h, d, valid)
}

/// Converts disparity to a depth-per-pixel vector (`None` where invalid).
pub fn depth_map(rig: &StereoRig, disp: &DisparityField) -> Vec<Option<f64>> {
    disp.d
        .iter()
        .zip(&disp.valid)
        .map(|(&d, &ok)| {
            if ok {
                disparity_to_depth(rig, d).ok()
            } else {
                None
            }
        })
        .collect()
}
