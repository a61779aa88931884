//! Dense per-pixel fields: optical flow, disparity and boolean masks.
//!
//! Storage is row-major, index = y·width + x, with pixel (x, y) located at
//! integer image coordinates.

use crate::error::{Error, Result};

/// Per-pixel boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

/// Pixels whose flow residual under the estimated twist is below threshold.
pub type InlierMask = Mask;

impl Mask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_len(width, height, data.len(), "mask")?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        ensure_same_dims((self.width, self.height), (other.width, other.height))?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    pub fn not(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }
}

/// Dense optical flow in pixels with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FlowField {
    /// All-zero, all-invalid field.
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        u: Vec<f64>,
        v: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        check_len(width, height, u.len(), "flow u")?;
        check_len(width, height, v.len(), "flow v")?;
        check_len(width, height, valid.len(), "flow validity")?;
        Ok(Self {
            width,
            height,
            u,
            v,
            valid,
        })
    }

    /// Constant flow, valid everywhere.
    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
            valid: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.valid.clone(),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }
}

/// Dense disparity in pixels. Valid pixels always carry d > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityField {
    pub width: usize,
    pub height: usize,
    pub d: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DisparityField {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            d: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    /// Validity is derived from the values: finite and strictly positive.
    pub fn from_values(width: usize, height: usize, d: Vec<f64>) -> Result<Self> {
        check_len(width, height, d.len(), "disparity")?;
        let valid = d.iter().map(|&x| x.is_finite() && x > 0.0).collect();
        Ok(Self {
            width,
            height,
            d,
            valid,
        })
    }

    pub fn from_parts(width: usize, height: usize, d: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        check_len(width, height, d.len(), "disparity")?;
        check_len(width, height, valid.len(), "disparity validity")?;
        if let Some(i) = (0..d.len()).find(|&i| valid[i] && !(d[i] > 0.0 && d[i].is_finite())) {
            return Err(Error::invalid(format!(
                "valid disparity pixel {i} has non-positive value {}",
                d[i]
            )));
        }
        Ok(Self {
            width,
            height,
            d,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, d: f64) -> Result<Self> {
        Self::from_values(width, height, vec![d; width * height])
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.valid.clone(),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }
}

pub(crate) fn check_len(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width.checked_mul(height) != Some(len) {
        return Err(Error::invalid(format!(
            "{what}: expected {width}x{height} values, got {len}"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disparity_validity_follows_sign() {
        let d = DisparityField::from_values(2, 2, vec![1.0, 0.0, -1.0, f64::NAN]).unwrap();
        assert_eq!(d.valid, vec![true, false, false, false]);
        assert!(DisparityField::from_parts(1, 1, vec![0.0], vec![true]).is_err());
        assert!(DisparityField::from_values(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn mask_ops() {
        let a = Mask::from_vec(2, 1, vec![true, false]).unwrap();
        let b = Mask::filled(2, 1, true);
        assert_eq!(a.and(&b).unwrap().count(), 1);
        assert_eq!(a.not().data, vec![false, true]);
        assert!(a.and(&Mask::filled(1, 2, true)).is_err());
    }
}
