//! Grayscale images, generic warp fields and bilinear sampling.

use crate::error::{Error, Result};
use crate::field::{check_len, ensure_same_dims, DisparityField, FlowField, Mask};
use crate::sum::compensated_sum;

/// Grayscale intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len(), "image")?;
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let data = (0..width * height)
            .map(|i| f(i % width, i / width))
            .collect();
        Self::new(width, height, data)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a real position; `None` outside [0, w−1]×[0, h−1].
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    pub fn flip_horizontal(&self) -> ScalarImage {
        let data = (0..self.data.len())
            .map(|i| {
                let (x, y) = (i % self.width, i / self.width);
                self.at(self.width - 1 - x, y)
            })
            .collect();
        ScalarImage { data, ..*self }
    }

    /// Bilinear resize with half-pixel centers.
    pub fn resize(&self, width: usize, height: usize) -> Result<ScalarImage> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("resize target must be non-empty"));
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let data = (0..width * height)
            .map(|i| {
                let (x, y) = ((i % width) as f64, (i / width) as f64);
                let px = ((x + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let py = ((y + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
                self.sample(px, py).unwrap_or(0.0).clamp(0.0, 1.0)
            })
            .collect();
        Ok(ScalarImage {
            width,
            height,
            data,
        })
    }
}

/// Bilinear interpolation on a row-major grid. Positions outside the closed
/// rectangle [0, w−1]×[0, h−1] return `None`; integer positions return the
/// grid value exactly.
#[inline]
pub(crate) fn bilinear(data: &[f64], w: usize, h: usize, x: f64, y: f64) -> Option<f64> {
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let top = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
    let bottom = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Per-pixel offset: the warp maps pixel x to x + offset(x).
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    pub width: usize,
    pub height: usize,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

impl WarpField {
    pub fn new(width: usize, height: usize, du: Vec<f64>, dv: Vec<f64>) -> Result<Self> {
        check_len(width, height, du.len(), "warp u")?;
        check_len(width, height, dv.len(), "warp v")?;
        if du.iter().chain(&dv).any(|v| !v.is_finite()) {
            return Err(Error::invalid("warp offsets must be finite"));
        }
        Ok(Self {
            width,
            height,
            du,
            dv,
        })
    }

    pub fn zero(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, du: f64, dv: f64) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            du: vec![du; n],
            dv: vec![dv; n],
        }
    }

    /// Flow as a warp; invalid flow pixels get a zero offset.
    pub fn from_flow(flow: &FlowField) -> Self {
        let pick = |vals: &[f64]| {
            vals.iter()
                .zip(&flow.valid)
                .map(|(&v, &ok)| if ok && v.is_finite() { v } else { 0.0 })
                .collect()
        };
        Self {
            width: flow.width,
            height: flow.height,
            du: pick(&flow.u),
            dv: pick(&flow.v),
        }
    }

    /// Disparity as a horizontal warp with offset `sign · d`. A left image
    /// samples the right image at x − d, so left-to-right uses `sign = −1`.
    pub fn from_disparity(disp: &DisparityField, sign: f64) -> Self {
        Self {
            width: disp.width,
            height: disp.height,
            du: disp
                .d
                .iter()
                .zip(&disp.valid)
                .map(|(&d, &ok)| if ok { sign * d } else { 0.0 })
                .collect(),
            dv: vec![0.0; disp.len()],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn flip_horizontal(&self) -> WarpField {
        let w = self.width;
        let idx = |i: usize| (i / w) * w + (w - 1 - i % w);
        WarpField {
            width: w,
            height: self.height,
            du: (0..self.du.len()).map(|i| -self.du[idx(i)]).collect(),
            dv: (0..self.dv.len()).map(|i| self.dv[idx(i)]).collect(),
        }
    }

    #[inline]
    pub(crate) fn target(&self, i: usize) -> (f64, f64) {
        (
            (i % self.width) as f64 + self.du[i],
            (i / self.width) as f64 + self.dv[i],
        )
    }
}

/// Per-pixel scalar map produced by the loss functions.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl PixelMap {
    pub fn sum(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    /// Sum over pixels where `mask` is set.
    pub fn masked_sum(&self, mask: &Mask) -> Result<f64> {
        ensure_same_dims((self.width, self.height), (mask.width, mask.height))?;
        Ok(compensated_sum(
            self.values
                .iter()
                .zip(&mask.data)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v),
        ))
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
