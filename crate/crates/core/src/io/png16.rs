use std::cell::Cell;
use std::io::{BufRead, Cursor, Read, Seek, SeekFrom};
use std::path::Path;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::field::{DisparityField, FlowField, Mask};
use crate::image::ScalarImage;

/// Flow is stored as u = (u_enc − FLOW_OFFSET) / FLOW_SCALE.
pub const FLOW_OFFSET: f64 = 32768.0;
pub const FLOW_SCALE: f64 = 64.0;
/// Disparity is stored as d = d_enc / DISPARITY_SCALE; 0 means invalid.
pub const DISPARITY_SCALE: f64 = 256.0;

// IHDR field offsets from the start of the file
const BIT_DEPTH_OFFSET: u64 = 24;
const COLOR_TYPE_OFFSET: u64 = 25;

/// Cursor that publishes how far the decoder has read.
struct Tracked<'a> {
    inner: Cursor<&'a [u8]>,
    pos: Rc<Cell<u64>>,
}

impl Read for Tracked<'_> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.pos.set(self.inner.position());
        Ok(n)
    }
}

impl BufRead for Tracked<'_> {
    fn fill_buf(&mut self) -> std::io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.pos.set(self.inner.position());
    }
}

impl Seek for Tracked<'_> {
    fn seek(&mut self, pos: SeekFrom) -> std::io::Result<u64> {
        let p = self.inner.seek(pos)?;
        self.pos.set(p);
        Ok(p)
    }
}

struct Decoded {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
    end: u64,
}

fn format_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

fn decode(bytes: &[u8], path: &Path) -> Result<Decoded> {
    let pos = Rc::new(Cell::new(0));
    let reader = Tracked {
        inner: Cursor::new(bytes),
        pos: pos.clone(),
    };
    let decoder = png::Decoder::new(reader);
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, pos.get(), e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, pos.get(), "image too large"))?;
    let mut data = vec![0; size];
    let info = reader
        .next_frame(&mut data)
        .map_err(|e| format_err(path, pos.get(), e.to_string()))?;
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
        end: pos.get(),
    })
}

fn expect_layout(
    d: &Decoded,
    path: &Path,
    color: png::ColorType,
    depth: png::BitDepth,
) -> Result<()> {
    if d.depth != depth {
        return Err(format_err(
            path,
            BIT_DEPTH_OFFSET,
            format!("expected {depth:?}-bit samples, found {:?}", d.depth),
        ));
    }
    if d.color != color {
        return Err(format_err(
            path,
            COLOR_TYPE_OFFSET,
            format!("expected {color:?} channels, found {:?}", d.color),
        ));
    }
    Ok(())
}

fn encode(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<Vec<u8>> {
    let to_u32 =
        |v: usize| u32::try_from(v).map_err(|_| Error::invalid("image dimension too large"));
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, to_u32(width)?, to_u32(height)?);
        enc.set_color(color);
        enc.set_depth(depth);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::Adaptive);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::invalid(format!("png encode: {e}")))?;
        w.write_image_data(data)
            .map_err(|e| Error::invalid(format!("png encode: {e}")))?;
        w.finish()
            .map_err(|e| Error::invalid(format!("png encode: {e}")))?;
    }
    Ok(out)
}

fn quantize(x: f64, scale: f64, offset: f64, lo: u16) -> u16 {
    (x * scale + offset)
        .round()
        .clamp(lo as f64, u16::MAX as f64) as u16
}

/// 16-bit RGB: (u_enc, v_enc, valid). Invalid pixels keep their values.
pub fn encode_flow_png(flow: &FlowField) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(flow.len() * 6);
    for i in 0..flow.len() {
        let u = quantize(flow.u[i], FLOW_SCALE, FLOW_OFFSET, 0);
        let v = quantize(flow.v[i], FLOW_SCALE, FLOW_OFFSET, 0);
        data.extend_from_slice(&u.to_be_bytes());
        data.extend_from_slice(&v.to_be_bytes());
        data.extend_from_slice(&(flow.valid[i] as u16).to_be_bytes());
    }
    encode(
        flow.width,
        flow.height,
        png::ColorType::Rgb,
        png::BitDepth::Sixteen,
        &data,
    )
}

pub fn decode_flow_png(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let d = decode(bytes, path)?;
    expect_layout(&d, path, png::ColorType::Rgb, png::BitDepth::Sixteen)?;
    let n = d.width * d.height;
    let mut flow = FlowField::new(d.width, d.height);
    for i in 0..n {
        let s = &d.data[i * 6..i * 6 + 6];
        let u = u16::from_be_bytes([s[0], s[1]]);
        let v = u16::from_be_bytes([s[2], s[3]]);
        let valid = u16::from_be_bytes([s[4], s[5]]);
        if valid > 1 {
            return Err(format_err(
                path,
                d.end,
                format!(
                    "validity channel {valid} at pixel ({}, {}) is not 0 or 1",
                    i % d.width,
                    i / d.width
                ),
            ));
        }
        flow.u[i] = (u as f64 - FLOW_OFFSET) / FLOW_SCALE;
        flow.v[i] = (v as f64 - FLOW_OFFSET) / FLOW_SCALE;
        flow.valid[i] = valid == 1;
    }
    Ok(flow)
}

/// 16-bit gray, d_enc = round(256·d) clamped to [1, 65535] on valid pixels.
pub fn encode_disparity_png(disp: &DisparityField) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(disp.len() * 2);
    for i in 0..disp.len() {
        let enc = if disp.valid[i] {
            quantize(disp.d[i], DISPARITY_SCALE, 0.0, 1)
        } else {
            0
        };
        data.extend_from_slice(&enc.to_be_bytes());
    }
    encode(
        disp.width,
        disp.height,
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )
}

pub fn decode_disparity_png(bytes: &[u8], path: &Path) -> Result<DisparityField> {
    let d = decode(bytes, path)?;
    expect_layout(&d, path, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    let mut disp = DisparityField::new(d.width, d.height);
    for i in 0..d.width * d.height {
        let enc = u16::from_be_bytes([d.data[2 * i], d.data[2 * i + 1]]);
        disp.valid[i] = enc != 0;
        disp.d[i] = enc as f64 / DISPARITY_SCALE;
    }
    Ok(disp)
}

/// 8-bit gray, 255 = set.
pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    let data: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode(
        mask.width,
        mask.height,
        png::ColorType::Grayscale,
        png::BitDepth::Eight,
        &data,
    )
}

/// Any nonzero sample counts as set.
pub fn decode_mask_png(bytes: &[u8], path: &Path) -> Result<Mask> {
    let d = decode(bytes, path)?;
    expect_layout(&d, path, png::ColorType::Grayscale, png::BitDepth::Eight)?;
    Mask::from_vec(d.width, d.height, d.data.iter().map(|&b| b != 0).collect())
}

/// 16-bit gray with intensity·65535 rounded.
pub fn encode_gray16_png(img: &ScalarImage) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(img.data.len() * 2);
    for &v in &img.data {
        let q = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
        data.extend_from_slice(&q.to_be_bytes());
    }
    encode(
        img.width,
        img.height,
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )
}

/// Loads any supported image as luma in [0, 1].
pub fn read_image(path: &Path) -> Result<ScalarImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => format_err(path, 0, other.to_string()),
    })?;
    let luma = img.to_luma16();
    let (w, h) = luma.dimensions();
    let data = luma
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 65535.0)
        .collect();
    ScalarImage::new(w as usize, h as usize, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("fixture.png")
    }

    #[test]
    fn flow_format_arithmetic() {
        let mut f = FlowField::new(3, 1);
        f.u = vec![1.0, 0.0, -512.0];
        f.v = vec![0.0, 511.984375, -0.015625];
        f.valid = vec![true, false, true];
        let bytes = encode_flow_png(&f).unwrap();
        let d = decode(&bytes, p()).unwrap();
        let word = |k: usize| u16::from_be_bytes([d.data[2 * k], d.data[2 * k + 1]]);
        assert_eq!(word(0), 32768 + 64);
        assert_eq!(word(1), 32768);
        assert_eq!(word(2), 1);
        assert_eq!(word(3), 32768);
        assert_eq!(word(5), 0);
        assert_eq!(word(6), 0);
        assert_eq!(word(7), 32767);
        assert_eq!(decode_flow_png(&bytes, p()).unwrap(), f);
    }

    #[test]
    fn disparity_format_arithmetic() {
        let disp =
            DisparityField::from_parts(3, 1, vec![1.0, 0.0, 255.99609375], vec![true, false, true])
                .unwrap();
        let bytes = encode_disparity_png(&disp).unwrap();
        let d = decode(&bytes, p()).unwrap();
        assert_eq!(&d.data, &[1, 0, 0, 0, 255, 255]);
        assert_eq!(decode_disparity_png(&bytes, p()).unwrap(), disp);
    }

    #[test]
    fn wrong_layout_reports_header_offset() {
        let disp = DisparityField::constant(2, 2, 1.0).unwrap();
        let bytes = encode_disparity_png(&disp).unwrap();
        match decode_flow_png(&bytes, p()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, COLOR_TYPE_OFFSET),
            other => panic!("{other:?}"),
        }
        let mask = encode_mask_png(&Mask::filled(2, 2, true)).unwrap();
        match decode_disparity_png(&mask, p()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, BIT_DEPTH_OFFSET),
            other => panic!("{other:?}"),
        }
        match decode_flow_png(b"not a png at all", p()) {
            Err(Error::Format { .. }) => {}
            other => panic!("{other:?}"),
        }
        let mut truncated = encode_flow_png(&FlowField::constant(8, 8, 1.0, 2.0)).unwrap();
        let cut = truncated.len() - 20;
        truncated.truncate(cut);
        match decode_flow_png(&truncated, p()) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0 && offset <= cut as u64),
            other => panic!("{other:?}"),
        }
    }
}
