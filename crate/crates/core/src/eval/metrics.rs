use crate::error::{Error, Result};
use crate::field::{ensure_same_dims, DisparityField, FlowField, Mask};
use crate::geometry::{disparity_to_depth, StereoRig};
use crate::sum::CompensatedSum;

/// A flow pixel is an outlier when its endpoint error exceeds both this
/// many pixels and [`FLOW_OUTLIER_REL`] of the ground-truth magnitude.
pub const FLOW_OUTLIER_ABS_PX: f64 = 3.0;
pub const FLOW_OUTLIER_REL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowErrors {
    pub epe_noc: f64,
    pub epe_all: f64,
    pub outlier_pct_noc: f64,
    pub outlier_pct_all: f64,
    pub pixels_noc: usize,
    pub pixels_all: usize,
}

pub fn flow_errors(pred: &FlowField, gt: &FlowField, noc_mask: &Mask) -> Result<FlowErrors> {
    flow_errors_masked(pred, gt, noc_mask, None)
}

/// Endpoint error and outlier percentage over valid ground-truth pixels
/// ("all") and over those also in `noc_mask` ("noc"). `restrict`, when
/// given, further limits both sets (e.g. to a RANSAC inlier mask).
/// Prediction values are used as stored, regardless of their validity flag.
pub fn flow_errors_masked(
    pred: &FlowField,
    gt: &FlowField,
    noc_mask: &Mask,
    restrict: Option<&Mask>,
) -> Result<FlowErrors> {
    ensure_same_dims(pred.dims(), gt.dims())?;
    ensure_same_dims(gt.dims(), (noc_mask.width, noc_mask.height))?;
    if let Some(m) = restrict {
        ensure_same_dims(gt.dims(), (m.width, m.height))?;
    }
    let mut epe_all = CompensatedSum::new();
    let mut epe_noc = CompensatedSum::new();
    let (mut n_all, mut n_noc, mut out_all, mut out_noc) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..gt.len() {
        if !gt.valid[i] || restrict.is_some_and(|m| !m.data[i]) {
            continue;
        }
        let du = pred.u[i] - gt.u[i];
        let dv = pred.v[i] - gt.v[i];
        let epe = du.hypot(dv);
        let mag = gt.u[i].hypot(gt.v[i]);
        let outlier = epe > FLOW_OUTLIER_ABS_PX && epe > FLOW_OUTLIER_REL * mag;
        epe_all.add(epe);
        n_all += 1;
        out_all += outlier as usize;
        if noc_mask.data[i] {
            epe_noc.add(epe);
            n_noc += 1;
            out_noc += outlier as usize;
        }
    }
    if n_all == 0 || n_noc == 0 {
        return Err(Error::InsufficientData {
            needed: 1,
            found: n_noc.min(n_all),
        });
    }
    Ok(FlowErrors {
        epe_noc: epe_noc.value() / n_noc as f64,
        epe_all: epe_all.value() / n_all as f64,
        outlier_pct_noc: 100.0 * out_noc as f64 / n_noc as f64,
        outlier_pct_all: 100.0 * out_all as f64 / n_all as f64,
        pixels_noc: n_noc,
        pixels_all: n_all,
    })
}

/// Depth in meters per pixel; non-positive or non-finite values are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        crate::field::check_len(width, height, values.len(), "depth map")?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Invalid disparities become missing (0).
    pub fn from_disparity(rig: &StereoRig, disp: &DisparityField) -> Self {
        let values = disp
            .d
            .iter()
            .zip(&disp.valid)
            .map(|(&d, &ok)| {
                if ok {
                    disparity_to_depth(rig, d).unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            width: disp.width,
            height: disp.height,
            values,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Half-open pixel rectangle [x0, x1) × [y0, y1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl Crop {
    /// The crop commonly paired with the Eigen split at a 50 m cap.
    pub fn garg(width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        Self {
            y0: (0.40810811 * h) as usize,
            y1: (0.99189189 * h) as usize,
            x0: (0.03594771 * w) as usize,
            x1: (0.96405229 * w) as usize,
        }
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthEvalOptions {
    pub cap: f64,
    /// Predictions are clamped from below to this depth before the log.
    pub min_depth: f64,
    pub crop: Option<Crop>,
    pub mask: Option<Mask>,
}

impl Default for DepthEvalOptions {
    fn default() -> Self {
        Self {
            cap: 50.0,
            min_depth: 1e-3,
            crop: None,
            mask: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthErrors {
    pub rmse: f64,
    pub rmse_log: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub pixels: usize,
}

/// Standard monocular depth metrics over pixels with 0 < gt ≤ cap.
pub fn depth_errors(
    pred: &DepthMap,
    gt: &DepthMap,
    opts: &DepthEvalOptions,
) -> Result<DepthErrors> {
    ensure_same_dims(pred.dims(), gt.dims())?;
    if let Some(m) = &opts.mask {
        ensure_same_dims(gt.dims(), (m.width, m.height))?;
    }
    if !(opts.cap > 0.0 && opts.min_depth > 0.0) {
        return Err(Error::invalid("depth cap and minimum must be > 0"));
    }
    let mut sq = CompensatedSum::new();
    let mut sq_log = CompensatedSum::new();
    let mut abs_rel = CompensatedSum::new();
    let mut sq_rel = CompensatedSum::new();
    let mut within = [0usize; 3];
    let mut n = 0usize;
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    for i in 0..gt.values.len() {
        let g = gt.values[i];
        if !(g > 0.0 && g <= opts.cap) {
            continue;
        }
        let (x, y) = (i % gt.width, i / gt.width);
        if opts.crop.is_some_and(|c| !c.contains(x, y)) {
            continue;
        }
        if opts.mask.as_ref().is_some_and(|m| !m.data[i]) {
            continue;
        }
        let raw = pred.values[i];
        let p = if raw.is_finite() {
            raw.max(opts.min_depth)
        } else {
            opts.min_depth
        };
        let d = p - g;
        sq.add(d * d);
        let dl = p.ln() - g.ln();
        sq_log.add(dl * dl);
        abs_rel.add(d.abs() / g);
        sq_rel.add(d * d / g);
        let ratio = (p / g).max(g / p);
        for (k, t) in thresholds.iter().enumerate() {
            within[k] += (ratio < *t) as usize;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData {
            needed: 1,
            found: 0,
        });
    }
    let nf = n as f64;
    Ok(DepthErrors {
        rmse: (sq.value() / nf).sqrt(),
        rmse_log: (sq_log.value() / nf).sqrt(),
        abs_rel: abs_rel.value() / nf,
        sq_rel: sq_rel.value() / nf,
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
        pixels: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_examples() {
        let gt = FlowField::constant(4, 3, 6.0, 8.0);
        let all = Mask::filled(4, 3, true);
        let e = flow_errors(&gt, &gt, &all).unwrap();
        assert_eq!((e.epe_all, e.outlier_pct_all), (0.0, 0.0));

        let pred = FlowField::constant(4, 3, 9.0, 12.0);
        let e = flow_errors(&pred, &gt, &all).unwrap();
        assert_eq!((e.epe_all, e.epe_noc), (5.0, 5.0));
        assert_eq!(e.outlier_pct_all, 100.0);

        let big = FlowField::constant(4, 3, 120.0, 160.0);
        let pred = FlowField::constant(4, 3, 123.0, 164.0);
        let e = flow_errors(&pred, &big, &all).unwrap();
        assert_eq!(e.epe_all, 5.0);
        assert_eq!(e.outlier_pct_all, 0.0);
    }

    #[test]
    fn flow_empty_is_error() {
        let gt = FlowField::new(2, 2);
        assert!(flow_errors(&gt, &gt, &Mask::filled(2, 2, true)).is_err());
        let gt = FlowField::constant(2, 2, 1.0, 1.0);
        assert!(flow_errors(&gt, &gt, &Mask::filled(2, 2, false)).is_err());
    }

    #[test]
    fn depth_examples() {
        let gt = DepthMap::new(3, 2, vec![2.0, 5.0, 10.0, 20.0, 30.0, 45.0]).unwrap();
        let e = depth_errors(&gt, &gt, &DepthEvalOptions::default()).unwrap();
        assert_eq!(
            (e.rmse, e.rmse_log, e.abs_rel, e.sq_rel),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!((e.delta1, e.delta2, e.delta3), (1.0, 1.0, 1.0));

        let pred = DepthMap::new(3, 2, gt.values.iter().map(|g| 1.5 * g).collect()).unwrap();
        let e = depth_errors(&pred, &gt, &DepthEvalOptions::default()).unwrap();
        assert!((e.abs_rel - 0.5).abs() < 1e-15);
        assert_eq!((e.delta1, e.delta2, e.delta3), (0.0, 1.0, 1.0));
    }

    #[test]
    fn depth_cap_crop_and_empty() {
        let gt = DepthMap::new(2, 1, vec![10.0, 80.0]).unwrap();
        let e = depth_errors(&gt, &gt, &DepthEvalOptions::default()).unwrap();
        assert_eq!(e.pixels, 1);
        let none = DepthMap::new(2, 1, vec![0.0, 60.0]).unwrap();
        assert!(matches!(
            depth_errors(&none, &none, &DepthEvalOptions::default()),
            Err(Error::InsufficientData { .. })
        ));
        let c = Crop::garg(1242, 375);
        assert_eq!((c.y0, c.y1, c.x0, c.x1), (153, 371, 44, 1197));
    }
}
