//! Unsupervised warp losses: Charbonnier photometric, SSIM appearance,
//! forward-backward consistency, edge-aware smoothness, occlusion masking,
//! their per-warp total, and the refinement losses driven by an estimated
//! twist.
//!
//! Loss functions return per-pixel maps. Aggregates are row-major
//! compensated sums so results do not depend on the thread count.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{ensure_same_dims, DisparityField, FlowField, InlierMask, Mask};
use crate::geometry::{StereoRig, Twist};
use crate::image::{bilinear, PixelMap, ScalarImage, WarpField};
use crate::motion::{disparity_from_flow_with, predict_flow_field_with};
use crate::sum::CompensatedSum;

/// Which reading of the SSIM term enters the appearance loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimTerm {
    /// (1 − SSIM)/2, clamped to [0, 1]; minimised at perfect similarity.
    #[default]
    Dissimilarity,
    /// SSIM itself, as literally mixed into the appearance loss.
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub ssim_window: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    pub ssim_term: SsimTerm,
    pub execution: Execution,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            alpha: 0.85,
            lambda1: 1.0,
            lambda2: 0.1,
            ssim_window: 3,
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
            ssim_term: SsimTerm::Dissimilarity,
            execution: Execution::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::invalid("loss weights must be >= 0"));
        }
        if self.ssim_window < 3 || self.ssim_window.is_multiple_of(2) {
            return Err(Error::invalid("ssim_window must be odd and >= 3"));
        }
        if !(self.ssim_c1 > 0.0 && self.ssim_c2 > 0.0) {
            return Err(Error::invalid("SSIM stabilizers must be > 0"));
        }
        Ok(())
    }
}

#[inline]
pub fn charbonnier(x: f64, epsilon: f64) -> f64 {
    (x * x + epsilon * epsilon).sqrt()
}

fn map_pixels(
    exec: Execution,
    width: usize,
    height: usize,
    f: impl Fn(usize) -> f64 + Sync + Send,
) -> PixelMap {
    let mut values = vec![0.0; width * height];
    exec.fill_rows(&mut values, width, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = f(y * width + x);
        }
    });
    PixelMap {
        width,
        height,
        values,
    }
}

/// 1 where the warp target stays inside [0, w−1]×[0, h−1], 0 otherwise.
pub fn occlusion_mask(w: &WarpField) -> Mask {
    let (wd, ht) = w.dims();
    let data = (0..wd * ht)
        .map(|i| {
            let (x, y) = w.target(i);
            x >= 0.0 && y >= 0.0 && x <= (wd - 1) as f64 && y <= (ht - 1) as f64
        })
        .collect();
    Mask {
        width: wd,
        height: ht,
        data,
    }
}

/// Samples `img` at x + offset(x). Out-of-bounds samples read 0 and are
/// flagged in the returned mask.
pub fn warp_image(img: &ScalarImage, w: &WarpField) -> Result<(ScalarImage, Mask)> {
    warp_image_with(img, w, Execution::default())
}

pub fn warp_image_with(
    img: &ScalarImage,
    w: &WarpField,
    exec: Execution,
) -> Result<(ScalarImage, Mask)> {
    ensure_same_dims(img.dims(), w.dims())?;
    let (wd, ht) = img.dims();
    let mut out = vec![None; wd * ht];
    exec.fill_rows(&mut out, wd, |y, row| {
        for (x, s) in row.iter_mut().enumerate() {
            let (tx, ty) = w.target(y * wd + x);
            *s = bilinear(&img.data, wd, ht, tx, ty);
        }
    });
    let oob = Mask {
        width: wd,
        height: ht,
        data: out.iter().map(Option::is_none).collect(),
    };
    let data = out.into_iter().map(|s| s.unwrap_or(0.0)).collect();
    Ok((
        ScalarImage {
            width: wd,
            height: ht,
            data,
        },
        oob,
    ))
}

/// ρ(I_i(x) − I_j(x + w(x))), zero where the warp leaves the image.
pub fn photometric_loss(
    ii: &ScalarImage,
    ij: &ScalarImage,
    w: &WarpField,
    cfg: &LossConfig,
) -> Result<PixelMap> {
    cfg.validate()?;
    ensure_same_dims(ii.dims(), ij.dims())?;
    let (warped, oob) = warp_image_with(ij, w, cfg.execution)?;
    Ok(photometric_from_warped(ii, &warped, &oob, cfg))
}

fn photometric_from_warped(
    ii: &ScalarImage,
    warped: &ScalarImage,
    oob: &Mask,
    cfg: &LossConfig,
) -> PixelMap {
    map_pixels(cfg.execution, ii.width, ii.height, |i| {
        if oob.data[i] {
            0.0
        } else {
            charbonnier(ii.data[i] - warped.data[i], cfg.epsilon)
        }
    })
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Windowed SSIM with a box window and reflected borders.
pub fn ssim_map(i1: &ScalarImage, i2: &ScalarImage, cfg: &LossConfig) -> Result<PixelMap> {
    cfg.validate()?;
    ensure_same_dims(i1.dims(), i2.dims())?;
    let (w, h) = i1.dims();
    let win = cfg.ssim_window;
    if w < win || h < win {
        return Err(Error::invalid(format!(
            "image {w}x{h} smaller than SSIM window {win}"
        )));
    }
    let r = (win / 2) as isize;
    let n = (win * win) as f64;
    let (c1, c2) = (cfg.ssim_c1, cfg.ssim_c2);
    Ok(map_pixels(cfg.execution, w, h, |i| {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for dy in -r..=r {
            let yy = reflect(y + dy, h);
            for dx in -r..=r {
                let k = yy * w + reflect(x + dx, w);
                let (a, b) = (i1.data[k], i2.data[k]);
                sa += a;
                sb += b;
                saa += a * a;
                sbb += b * b;
                sab += a * b;
            }
        }
        let (ma, mb) = (sa / n, sb / n);
        let va = saa / n - ma * ma;
        let vb = sbb / n - mb * mb;
        let cov = sab / n - ma * mb;
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    }))
}

fn ssim_term_value(s: f64, term: SsimTerm) -> f64 {
    match term {
        SsimTerm::Dissimilarity => ((1.0 - s) / 2.0).clamp(0.0, 1.0),
        SsimTerm::Similarity => s,
    }
}

/// (1 − α)·SSIM-term + α·photometric, zero where the warp leaves the image.
pub fn appearance_loss(
    ii: &ScalarImage,
    ij: &ScalarImage,
    w: &WarpField,
    cfg: &LossConfig,
) -> Result<PixelMap> {
    cfg.validate()?;
    ensure_same_dims(ii.dims(), ij.dims())?;
    let (warped, oob) = warp_image_with(ij, w, cfg.execution)?;
    let photo = photometric_from_warped(ii, &warped, &oob, cfg);
    let ssim = ssim_map(ii, &warped, cfg)?;
    let a = cfg.alpha;
    Ok(map_pixels(cfg.execution, ii.width, ii.height, |i| {
        if oob.data[i] {
            0.0
        } else {
            (1.0 - a) * ssim_term_value(ssim.values[i], cfg.ssim_term) + a * photo.values[i]
        }
    }))
}

/// ρ(w_f(x) + w_b(x + w_f(x))) summed over both components, with the
/// backward warp sampled bilinearly. Zero where the forward warp leaves the
/// image.
pub fn consistency_loss(fwd: &WarpField, bwd: &WarpField, cfg: &LossConfig) -> Result<PixelMap> {
    cfg.validate()?;
    ensure_same_dims(fwd.dims(), bwd.dims())?;
    let (w, h) = fwd.dims();
    Ok(map_pixels(cfg.execution, w, h, |i| {
        let (tx, ty) = fwd.target(i);
        match (
            bilinear(&bwd.du, w, h, tx, ty),
            bilinear(&bwd.dv, w, h, tx, ty),
        ) {
            (Some(bu), Some(bv)) => {
                charbonnier(fwd.du[i] + bu, cfg.epsilon) + charbonnier(fwd.dv[i] + bv, cfg.epsilon)
            }
            _ => 0.0,
        }
    }))
}

/// Edge-aware smoothness with forward differences. The x term exists for
/// x < w−1 and the y term for y < h−1; each term sums both warp components.
pub fn smoothness_loss(w: &WarpField, img: &ScalarImage, cfg: &LossConfig) -> Result<PixelMap> {
    cfg.validate()?;
    ensure_same_dims(w.dims(), img.dims())?;
    let (wd, ht) = w.dims();
    let eps = cfg.epsilon;
    Ok(map_pixels(cfg.execution, wd, ht, |i| {
        let (x, y) = (i % wd, i / wd);
        let mut acc = 0.0;
        if x + 1 < wd {
            let j = i + 1;
            let g = (-(img.data[j] - img.data[i]).abs()).exp();
            acc += charbonnier((w.du[j] - w.du[i]) * g, eps)
                + charbonnier((w.dv[j] - w.dv[i]) * g, eps);
        }
        if y + 1 < ht {
            let j = i + wd;
            let g = (-(img.data[j] - img.data[i]).abs()).exp();
            acc += charbonnier((w.du[j] - w.du[i]) * g, eps)
                + charbonnier((w.dv[j] - w.dv[i]) * g, eps);
        }
        acc
    }))
}

/// Component maps of one warp's total loss.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpLossMaps {
    pub photometric: PixelMap,
    pub ssim: PixelMap,
    pub appearance: PixelMap,
    /// Absent when no backward warp was supplied.
    pub consistency: Option<PixelMap>,
    pub smoothness: PixelMap,
    pub occlusion: Mask,
}

impl WarpLossMaps {
    /// Σ M_occ·(appearance + λ1·consistency) + λ2·smoothness.
    pub fn total(&self, cfg: &LossConfig) -> f64 {
        let mut s = CompensatedSum::new();
        for i in 0..self.appearance.values.len() {
            let occ = if self.occlusion.data[i] { 1.0 } else { 0.0 };
            let cons = self.consistency.as_ref().map_or(0.0, |c| c.values[i]);
            s.add(
                occ * (self.appearance.values[i] + cfg.lambda1 * cons)
                    + cfg.lambda2 * self.smoothness.values[i],
            );
        }
        s.value()
    }
}

pub fn warp_loss_maps(
    ii: &ScalarImage,
    ij: &ScalarImage,
    fwd: &WarpField,
    bwd: Option<&WarpField>,
    cfg: &LossConfig,
) -> Result<WarpLossMaps> {
    cfg.validate()?;
    ensure_same_dims(ii.dims(), ij.dims())?;
    ensure_same_dims(ii.dims(), fwd.dims())?;
    let (warped, oob) = warp_image_with(ij, fwd, cfg.execution)?;
    let photometric = photometric_from_warped(ii, &warped, &oob, cfg);
    let ssim = ssim_map(ii, &warped, cfg)?;
    let a = cfg.alpha;
    let appearance = map_pixels(cfg.execution, ii.width, ii.height, |i| {
        if oob.data[i] {
            0.0
        } else {
            (1.0 - a) * ssim_term_value(ssim.values[i], cfg.ssim_term) + a * photometric.values[i]
        }
    });
    let consistency = bwd.map(|b| consistency_loss(fwd, b, cfg)).transpose()?;
    Ok(WarpLossMaps {
        photometric,
        ssim,
        appearance,
        consistency,
        smoothness: smoothness_loss(fwd, ii, cfg)?,
        occlusion: occlusion_mask(fwd),
    })
}

/// Total loss for a single warp from `ii` into `ij`.
pub fn total_warp_loss(
    ii: &ScalarImage,
    ij: &ScalarImage,
    fwd: &WarpField,
    bwd: &WarpField,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(warp_loss_maps(ii, ij, fwd, Some(bwd), cfg)?.total(cfg))
}

/// One warp's inputs for the multi-warp aggregate.
#[derive(Debug, Clone, Copy)]
pub struct WarpTerm<'a> {
    pub source: &'a ScalarImage,
    pub target: &'a ScalarImage,
    pub forward: &'a WarpField,
    pub backward: &'a WarpField,
}

/// Sum of per-warp totals, e.g. the four flows and four disparities of a
/// stereo-temporal image quadruple.
pub fn combined_total_loss(terms: &[WarpTerm<'_>], cfg: &LossConfig) -> Result<f64> {
    let mut s = CompensatedSum::new();
    for t in terms {
        s.add(total_warp_loss(
            t.source, t.target, t.forward, t.backward, cfg,
        )?);
    }
    Ok(s.value())
}

/// Appearance losses obtained by converting flow to disparity (stereo pair)
/// and disparity to flow (temporal pair) with an estimated twist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementLosses {
    pub stereo: f64,
    pub stereo_pixels: usize,
    pub temporal: f64,
    pub temporal_pixels: usize,
}

impl RefinementLosses {
    pub fn stereo_mean(&self) -> f64 {
        mean(self.stereo, self.stereo_pixels)
    }

    pub fn temporal_mean(&self) -> f64 {
        mean(self.temporal, self.temporal_pixels)
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `temporal` is (I_t, I_t+1) for the reference camera, `stereo` is
/// (I_left, I_right) at time t. Both losses sum the appearance map over
/// pixels that are inliers, valid under the conversion and warped in-bounds.
#[allow(clippy::too_many_arguments)]
pub fn refinement_losses(
    rig: &StereoRig,
    twist: &Twist,
    flow: &FlowField,
    disp: &DisparityField,
    temporal: (&ScalarImage, &ScalarImage),
    stereo: (&ScalarImage, &ScalarImage),
    inliers: &InlierMask,
    cfg: &LossConfig,
) -> Result<RefinementLosses> {
    cfg.validate()?;
    let dims = (rig.width(), rig.height());
    for d in [
        flow.dims(),
        disp.dims(),
        temporal.0.dims(),
        temporal.1.dims(),
        stereo.0.dims(),
        stereo.1.dims(),
        (inliers.width, inliers.height),
    ] {
        ensure_same_dims(d, dims)?;
    }

    let disp_hat = disparity_from_flow_with(rig, twist, flow, cfg.execution)?;
    let stereo_warp = WarpField::from_disparity(&disp_hat, -1.0);
    let (stereo_sum, stereo_pixels) =
        masked_appearance(stereo, &stereo_warp, &disp_hat.valid, inliers, cfg)?;

    let flow_hat = predict_flow_field_with(rig, twist, disp, cfg.execution)?;
    let temporal_warp = WarpField::from_flow(&flow_hat);
    let (temporal_sum, temporal_pixels) =
        masked_appearance(temporal, &temporal_warp, &flow_hat.valid, inliers, cfg)?;

    Ok(RefinementLosses {
        stereo: stereo_sum,
        stereo_pixels,
        temporal: temporal_sum,
        temporal_pixels,
    })
}

fn masked_appearance(
    pair: (&ScalarImage, &ScalarImage),
    warp: &WarpField,
    valid: &[bool],
    inliers: &InlierMask,
    cfg: &LossConfig,
) -> Result<(f64, usize)> {
    if inliers.count() == 0 {
        return Ok((0.0, 0));
    }
    let map = appearance_loss(pair.0, pair.1, warp, cfg)?;
    let occ = occlusion_mask(warp);
    let mut s = CompensatedSum::new();
    let mut n = 0;
    for (i, &v) in map.values.iter().enumerate() {
        if inliers.data[i] && valid[i] && occ.data[i] {
            s.add(v);
            n += 1;
        }
    }
    Ok((s.value(), n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LossConfig {
        LossConfig::default()
    }

    fn ramp(w: usize, h: usize) -> ScalarImage {
        ScalarImage::from_fn(w, h, |x, y| (x as f64 * 0.07 + y as f64 * 0.03).min(1.0)).unwrap()
    }

    fn texture(w: usize, h: usize) -> ScalarImage {
        ScalarImage::from_fn(w, h, |x, y| {
            0.5 + 0.3 * (0.9 * x as f64).sin() * (0.7 * y as f64 + 0.3).cos()
                + 0.1 * ((x * y) as f64 * 0.05).sin()
        })
        .unwrap()
    }

    #[test]
    fn charbonnier_examples() {
        assert_eq!(charbonnier(0.0, 1e-3), 1e-3);
        assert_eq!(charbonnier(3.0, 1e-3), (9.0f64 + 1e-6).sqrt());
        for x in [0.1, -2.5, 1e-4, 7.0] {
            assert_eq!(charbonnier(x, 1e-3), charbonnier(-x, 1e-3));
            assert!(charbonnier(x, 1e-3) >= 1e-3);
        }
        assert!((charbonnier(2.0, 1e-9) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn warp_examples() {
        let img = texture(6, 5);
        let (same, oob) = warp_image(&img, &WarpField::zero(6, 5)).unwrap();
        assert_eq!(same, img);
        assert_eq!(oob.count(), 0);

        let (shift, oob) = warp_image(&img, &WarpField::constant(6, 5, 1.0, 0.0)).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(shift.at(x, y), img.at(x + 1, y));
                assert!(!oob.get(x, y));
            }
            assert!(oob.get(5, y));
            assert_eq!(shift.at(5, y), 0.0);
        }

        // horizontal ramp 0, 0.25, 0.5, 0.75 on 4×4; half-pixel shift averages neighbours
        let r = ScalarImage::from_fn(4, 4, |x, _| x as f64 * 0.25).unwrap();
        let (half, oob) = warp_image(&r, &WarpField::constant(4, 4, 0.5, 0.0)).unwrap();
        for y in 0..4 {
            assert_eq!(half.at(0, y), 0.125);
            assert_eq!(half.at(1, y), 0.375);
            assert_eq!(half.at(2, y), 0.625);
            assert!(oob.get(3, y));
        }
        assert!(warp_image(&r, &WarpField::zero(3, 4)).is_err());
    }

    #[test]
    fn occlusion_examples() {
        assert_eq!(occlusion_mask(&WarpField::zero(5, 4)).count(), 20);
        assert_eq!(
            occlusion_mask(&WarpField::constant(5, 4, 5.0, 0.0)).count(),
            0
        );
        let m = occlusion_mask(&WarpField::constant(5, 4, 1.0, 0.0));
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(m.get(x, y), x < 4);
            }
        }
    }

    #[test]
    fn photometric_examples() {
        let img = texture(8, 6);
        let p = photometric_loss(&img, &img, &WarpField::zero(8, 6), &cfg()).unwrap();
        assert!(p.values.iter().all(|&v| v == 1e-3));

        // I_i(x) = I_j(x + 2): a shifted copy explained exactly by the warp
        let ij = texture(10, 6);
        let ii = ScalarImage::from_fn(10, 6, |x, y| if x + 2 < 10 { ij.at(x + 2, y) } else { 0.0 })
            .unwrap();
        let p = photometric_loss(&ii, &ij, &WarpField::constant(10, 6, 2.0, 0.0), &cfg()).unwrap();
        for y in 0..6 {
            for x in 0..10 {
                assert_eq!(p.at(x, y), if x < 8 { 1e-3 } else { 0.0 });
            }
        }

        let ones = ScalarImage::filled(4, 4, 1.0).unwrap();
        let zeros = ScalarImage::filled(4, 4, 0.0).unwrap();
        let p = photometric_loss(&ones, &zeros, &WarpField::zero(4, 4), &cfg()).unwrap();
        assert!(p.values.iter().all(|&v| v == (1.0f64 + 1e-6).sqrt()));
    }

    #[test]
    fn ssim_examples() {
        let img = texture(9, 7);
        let s = ssim_map(&img, &img, &cfg()).unwrap();
        assert!(s.values.iter().all(|&v| v == 1.0));

        let c = ScalarImage::filled(5, 5, 0.3).unwrap();
        let d = ScalarImage::filled(5, 5, 0.3).unwrap();
        assert!(ssim_map(&c, &d, &cfg())
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 1.0));

        let checker =
            ScalarImage::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { 0.9 } else { 0.1 }).unwrap();
        let inv = ScalarImage::from_fn(8, 8, |x, y| 1.0 - checker.at(x, y)).unwrap();
        let s = ssim_map(&checker, &inv, &cfg()).unwrap();
        // 3×3 window with 5 highs and 4 lows: μ=(4.9/9 | 4.1/9), σ² = 0.1580..., cov = −σ²
        let (ma, mb) = (4.9 / 9.0, 4.1 / 9.0);
        let var_a: f64 = (5.0 * 0.81 + 4.0 * 0.01) / 9.0 - ma * ma;
        let var_b: f64 = (5.0 * 0.01 + 4.0 * 0.81) / 9.0 - mb * mb;
        let cov = (9.0 * 0.09) / 9.0 - ma * mb;
        let want = ((2.0 * ma * mb + 1e-4) * (2.0 * cov + 9e-4))
            / ((ma * ma + mb * mb + 1e-4) * (var_a + var_b + 9e-4));
        assert!(want < 0.0);
        assert!((s.at(2, 2) - want).abs() < 1e-12);
        assert!(s.values.iter().all(|&v| v < 0.0));

        assert!(ssim_map(
            &ScalarImage::filled(2, 5, 0.0).unwrap(),
            &ScalarImage::filled(2, 5, 0.0).unwrap(),
            &cfg()
        )
        .is_err());
    }

    #[test]
    fn appearance_mixing() {
        let a = texture(8, 8);
        let b = ramp(8, 8);
        let w = WarpField::constant(8, 8, 0.3, -0.2);
        let same = appearance_loss(&a, &a, &WarpField::zero(8, 8), &cfg()).unwrap();
        assert!(same.values.iter().all(|&v| (v - 0.85e-3).abs() < 1e-18));

        let c1 = LossConfig {
            alpha: 1.0,
            ..cfg()
        };
        assert_eq!(
            appearance_loss(&a, &b, &w, &c1).unwrap(),
            photometric_loss(&a, &b, &w, &c1).unwrap()
        );

        let c0 = LossConfig {
            alpha: 0.0,
            ..cfg()
        };
        let app = appearance_loss(&a, &b, &w, &c0).unwrap();
        let (warped, oob) = warp_image(&b, &w).unwrap();
        let s = ssim_map(&a, &warped, &c0).unwrap();
        for i in 0..64 {
            let want = if oob.data[i] {
                0.0
            } else {
                ((1.0 - s.values[i]) / 2.0).clamp(0.0, 1.0)
            };
            assert_eq!(app.values[i], want);
        }

        let lit = LossConfig {
            alpha: 0.0,
            ssim_term: SsimTerm::Similarity,
            ..cfg()
        };
        let app = appearance_loss(&a, &a, &WarpField::zero(8, 8), &lit).unwrap();
        assert!(app.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn consistency_examples() {
        let f = WarpField::constant(6, 6, 1.0, 0.5);
        let b = WarpField::constant(6, 6, -1.0, -0.5);
        let c = consistency_loss(&f, &b, &cfg()).unwrap();
        let occ = occlusion_mask(&f);
        for i in 0..36 {
            assert_eq!(c.values[i], if occ.data[i] { 2e-3 } else { 0.0 });
        }

        let f = WarpField::constant(6, 6, 0.4, -0.3);
        let c = consistency_loss(&f, &WarpField::zero(6, 6), &cfg()).unwrap();
        assert_eq!(c.at(0, 3), charbonnier(0.4, 1e-3) + charbonnier(-0.3, 1e-3));
    }

    #[test]
    fn smoothness_examples() {
        let img = texture(6, 5);
        let s = smoothness_loss(&WarpField::constant(6, 5, 2.0, -1.0), &img, &cfg()).unwrap();
        assert!((s.at(2, 2) - 4e-3).abs() < 1e-18);
        assert!((s.at(5, 2) - 2e-3).abs() < 1e-18);
        assert_eq!(s.at(5, 4), 0.0);

        let flat = ScalarImage::filled(6, 5, 0.5).unwrap();
        let g = 0.25;
        let du = (0..30).map(|i| (i % 6) as f64 * g).collect();
        let ramp_warp = WarpField::new(6, 5, du, vec![0.0; 30]).unwrap();
        let s = smoothness_loss(&ramp_warp, &flat, &cfg()).unwrap();
        assert!((s.at(1, 1) - (charbonnier(g, 1e-3) + 3e-3)).abs() < 1e-15);

        // warp step at column 3; image edge at the same place lowers the penalty
        let du: Vec<f64> = (0..30)
            .map(|i| if i % 6 >= 3 { 2.0 } else { 0.0 })
            .collect();
        let step = WarpField::new(6, 5, du, vec![0.0; 30]).unwrap();
        let edge = ScalarImage::from_fn(6, 5, |x, _| if x >= 3 { 0.95 } else { 0.05 }).unwrap();
        let on_edge = smoothness_loss(&step, &edge, &cfg()).unwrap();
        let on_flat = smoothness_loss(&step, &flat, &cfg()).unwrap();
        assert!(on_edge.at(2, 2) < on_flat.at(2, 2));
    }

    #[test]
    fn total_examples() {
        let img = texture(8, 7);
        let z = WarpField::zero(8, 7);
        let c = LossConfig {
            alpha: 1.0,
            lambda1: 0.0,
            lambda2: 0.0,
            ..cfg()
        };
        let t = total_warp_loss(&img, &img, &z, &z, &c).unwrap();
        assert!((t - 56.0 * 1e-3).abs() < 1e-15);

        let c2 = LossConfig { lambda2: 0.5, ..c };
        let w = WarpField::constant(8, 7, 0.0, 0.0);
        let t2 = total_warp_loss(&img, &img, &w, &w, &c2).unwrap();
        let smooth_terms = (7 * 7 + 8 * 6) as f64 * 2.0 * 1e-3;
        assert!((t2 - t - 0.5 * smooth_terms).abs() < 1e-14);
    }

    #[test]
    fn refinement_empty_mask_is_zero() {
        use crate::geometry::CameraIntrinsics;
        let rig =
            StereoRig::new(CameraIntrinsics::new(20.0, 4.0, 4.0, 8, 8).unwrap(), 0.5).unwrap();
        let img = texture(8, 8);
        let disp = DisparityField::constant(8, 8, 1.0).unwrap();
        let flow = FlowField::constant(8, 8, 0.5, 0.0);
        let r = refinement_losses(
            &rig,
            &Twist::from_array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
            &flow,
            &disp,
            (&img, &img),
            (&img, &img),
            &Mask::filled(8, 8, false),
            &cfg(),
        )
        .unwrap();
        assert_eq!(
            r,
            RefinementLosses {
                stereo: 0.0,
                stereo_pixels: 0,
                temporal: 0.0,
                temporal_pixels: 0
            }
        );
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig {
            epsilon: 0.0,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            alpha: 1.1,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            ssim_window: 4,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            lambda2: -1.0,
            ..cfg()
        }
        .validate()
        .is_err());
    }
}
