//! Interchange formats: 16-bit PNG flow/disparity codecs, 8-bit masks,
//! grayscale images, a plain-text field format, calibration and pose files.

mod png16;
mod text;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use png16::{
    decode_disparity_png, decode_flow_png, decode_mask_png, encode_disparity_png, encode_flow_png,
    encode_gray16_png, encode_mask_png, read_image, DISPARITY_SCALE, FLOW_OFFSET, FLOW_SCALE,
};
pub use text::{
    decode_disparity_text, decode_flow_text, encode_disparity_text, encode_flow_text, encode_poses,
    format_calibration, format_number, format_pose_line, format_twist, parse_calibration,
    parse_poses, parse_twist, parse_twists,
};

use crate::eval::Trajectory;
use crate::field::{DisparityField, FlowField, Mask};
use crate::geometry::StereoRig;
use crate::image::ScalarImage;

/// On-disk field encoding, chosen by file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFormat {
    Png,
    Text,
}

impl FieldFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
        {
            Some(e) if e == "png" => Ok(FieldFormat::Png),
            Some(e) if e == "txt" => Ok(FieldFormat::Text),
            _ => Err(Error::invalid(format!(
                "{}: expected a .png or .txt extension",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            FieldFormat::Png => "png",
            FieldFormat::Text => "txt",
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{}: not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = read_bytes(path)?;
    match FieldFormat::from_path(path)? {
        FieldFormat::Png => decode_flow_png(&bytes, path),
        FieldFormat::Text => decode_flow_text(&bytes, path),
    }
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let bytes = match FieldFormat::from_path(path)? {
        FieldFormat::Png => encode_flow_png(flow)?,
        FieldFormat::Text => encode_flow_text(flow).into_bytes(),
    };
    write_atomic(path, &bytes)
}

pub fn read_disparity(path: &Path) -> Result<DisparityField> {
    let bytes = read_bytes(path)?;
    match FieldFormat::from_path(path)? {
        FieldFormat::Png => decode_disparity_png(&bytes, path),
        FieldFormat::Text => decode_disparity_text(&bytes, path),
    }
}

pub fn write_disparity(path: &Path, disp: &DisparityField) -> Result<()> {
    let bytes = match FieldFormat::from_path(path)? {
        FieldFormat::Png => encode_disparity_png(disp)?,
        FieldFormat::Text => encode_disparity_text(disp).into_bytes(),
    };
    write_atomic(path, &bytes)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    decode_mask_png(&read_bytes(path)?, path)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_atomic(path, &encode_mask_png(mask)?)
}

pub fn write_image(path: &Path, img: &ScalarImage) -> Result<()> {
    write_atomic(path, &encode_gray16_png(img)?)
}

pub fn read_calibration(path: &Path) -> Result<StereoRig> {
    let bytes = read_bytes(path)?;
    parse_calibration(&bytes, path)
}

pub fn read_poses(path: &Path) -> Result<Trajectory> {
    parse_poses(&read_bytes(path)?, path)
}

pub fn write_poses(path: &Path, traj: &Trajectory) -> Result<()> {
    write_atomic(path, encode_poses(traj).as_bytes())
}
