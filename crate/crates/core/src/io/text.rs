use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::field::{DisparityField, FlowField};
use crate::geometry::{CameraIntrinsics, SE3Pose, StereoRig, Twist};

const FLOW_MAGIC: &str = "flow";
const DISPARITY_MAGIC: &str = "disparity";
/// Rotation blocks further than this from orthonormal are rejected on load.
pub(crate) const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with their byte offsets.
fn lines<'a>(bytes: &'a [u8], path: &Path) -> Result<Vec<(usize, &'a str)>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| format_err(path, e.valid_up_to(), "not valid UTF-8"))?;
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.split('#').next().unwrap_or("").trim();
        if !line.is_empty() {
            out.push((offset + (raw.len() - raw.trim_start().len()), line));
        }
        offset += raw.len();
    }
    Ok(out)
}

fn tokens(line: &str, offset: usize) -> impl Iterator<Item = (usize, &str)> {
    let base = line.as_ptr() as usize;
    line.split_whitespace()
        .map(move |t| (offset + (t.as_ptr() as usize - base), t))
}

fn parse_f64(tok: (usize, &str), path: &Path) -> Result<f64> {
    let v: f64 = tok
        .1
        .parse()
        .map_err(|_| format_err(path, tok.0, format!("expected a number, found {:?}", tok.1)))?;
    if !v.is_finite() {
        return Err(format_err(
            path,
            tok.0,
            format!("non-finite value {:?}", tok.1),
        ));
    }
    Ok(v)
}

fn parse_usize(tok: (usize, &str), path: &Path) -> Result<usize> {
    tok.1.parse().map_err(|_| {
        format_err(
            path,
            tok.0,
            format!("expected an integer, found {:?}", tok.1),
        )
    })
}

fn parse_flag(tok: (usize, &str), path: &Path) -> Result<bool> {
    match tok.1 {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format_err(
            path,
            tok.0,
            format!("validity must be 0 or 1, found {other:?}"),
        )),
    }
}

/// Splits a file into a `magic W H` header and rows of exactly `cols` tokens.
type Grid<'a> = (usize, usize, Vec<Vec<(usize, &'a str)>>);

fn parse_grid<'a>(bytes: &'a [u8], path: &Path, magic: &str, cols: usize) -> Result<Grid<'a>> {
    let ls = lines(bytes, path)?;
    let Some(&(off, header)) = ls.first() else {
        return Err(format_err(path, 0, "empty file"));
    };
    let head: Vec<_> = tokens(header, off).collect();
    if head.len() != 3 || head[0].1 != magic {
        return Err(format_err(
            path,
            off,
            format!("expected header \"{magic} WIDTH HEIGHT\""),
        ));
    }
    let w = parse_usize(head[1], path)?;
    let h = parse_usize(head[2], path)?;
    let n = w
        .checked_mul(h)
        .ok_or_else(|| format_err(path, head[1].0, "dimensions overflow"))?;
    let body = &ls[1..];
    if body.len() != n {
        let at = body.get(n).map_or(bytes.len(), |l| l.0);
        return Err(format_err(
            path,
            at,
            format!("expected {n} pixel lines, found {}", body.len()),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    for &(off, line) in body {
        let row: Vec<_> = tokens(line, off).collect();
        if row.len() != cols {
            return Err(format_err(
                path,
                off,
                format!("expected {cols} fields, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    Ok((w, h, rows))
}

/// One `u v valid` line per pixel in row-major order; values round-trip exactly.
pub fn encode_flow_text(flow: &FlowField) -> String {
    let mut s = format!("{FLOW_MAGIC} {} {}\n", flow.width, flow.height);
    for i in 0..flow.len() {
        let _ = writeln!(s, "{} {} {}", flow.u[i], flow.v[i], flow.valid[i] as u8);
    }
    s
}

pub fn decode_flow_text(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let (w, h, rows) = parse_grid(bytes, path, FLOW_MAGIC, 3)?;
    let mut flow = FlowField::new(w, h);
    for (i, row) in rows.into_iter().enumerate() {
        flow.u[i] = parse_f64(row[0], path)?;
        flow.v[i] = parse_f64(row[1], path)?;
        flow.valid[i] = parse_flag(row[2], path)?;
    }
    Ok(flow)
}

/// One `d valid` line per pixel.
pub fn encode_disparity_text(disp: &DisparityField) -> String {
    let mut s = format!("{DISPARITY_MAGIC} {} {}\n", disp.width, disp.height);
    for i in 0..disp.len() {
        let _ = writeln!(s, "{} {}", disp.d[i], disp.valid[i] as u8);
    }
    s
}

pub fn decode_disparity_text(bytes: &[u8], path: &Path) -> Result<DisparityField> {
    let (w, h, rows) = parse_grid(bytes, path, DISPARITY_MAGIC, 2)?;
    let mut disp = DisparityField::new(w, h);
    for (i, row) in rows.into_iter().enumerate() {
        let d = parse_f64(row[0], path)?;
        let valid = parse_flag(row[1], path)?;
        if valid && d <= 0.0 {
            return Err(format_err(
                path,
                row[0].0,
                format!("valid disparity must be positive, found {d}"),
            ));
        }
        disp.d[i] = d;
        disp.valid[i] = valid;
    }
    Ok(disp)
}

/// `f cx cy width height baseline` on a single line.
pub fn parse_calibration(bytes: &[u8], path: &Path) -> Result<StereoRig> {
    let ls = lines(bytes, path)?;
    let Some(&(off, line)) = ls.first() else {
        return Err(format_err(path, 0, "empty calibration file"));
    };
    if let Some(&(extra, _)) = ls.get(1) {
        return Err(format_err(path, extra, "unexpected trailing content"));
    }
    let t: Vec<_> = tokens(line, off).collect();
    if t.len() != 6 {
        return Err(format_err(
            path,
            off,
            "expected: f cx cy width height baseline",
        ));
    }
    let intr = CameraIntrinsics::new(
        parse_f64(t[0], path)?,
        parse_f64(t[1], path)?,
        parse_f64(t[2], path)?,
        parse_usize(t[3], path)?,
        parse_usize(t[4], path)?,
    )
    .map_err(|e| format_err(path, off, e.to_string()))?;
    StereoRig::new(intr, parse_f64(t[5], path)?)
        .map_err(|e| format_err(path, t[5].0, e.to_string()))
}

pub fn format_calibration(rig: &StereoRig) -> String {
    let k = &rig.intrinsics;
    format!(
        "{} {} {} {} {} {}\n",
        k.f, k.cx, k.cy, k.width, k.height, rig.baseline
    )
}

/// Nearest rotation in the Frobenius sense, with det = +1.
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut q = u * vt;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * vt;
    }
    q
}

/// Twelve numbers per line: the 3×4 matrix [R | t] in row-major order.
pub fn parse_poses(bytes: &[u8], path: &Path) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (off, line) in lines(bytes, path)? {
        let t: Vec<_> = tokens(line, off).collect();
        if t.len() != 12 {
            return Err(format_err(
                path,
                off,
                format!("expected 12 values per pose, found {}", t.len()),
            ));
        }
        let mut m = [0.0; 12];
        for (slot, tok) in m.iter_mut().zip(&t) {
            *slot = parse_f64(*tok, path)?;
        }
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let pose = SE3Pose::new(r, Vector3::new(m[3], m[7], m[11]));
        let err = pose.orthonormality_error();
        if err > ORTHONORMAL_TOLERANCE || r.determinant() <= 0.0 {
            return Err(format_err(
                path,
                off,
                format!("rotation block is not a proper rotation (orthonormality error {err:.3e})"),
            ));
        }
        poses.push(SE3Pose::new(orthonormalize(&r), pose.translation));
    }
    if poses.is_empty() {
        return Err(format_err(path, 0, "no poses"));
    }
    Ok(Trajectory::new(poses))
}

/// C-style scientific notation with a signed two-digit exponent.
fn sci(x: f64, precision: usize) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    let s = format!("{x:.precision$e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn format_pose_line(p: &SE3Pose) -> String {
    let r = &p.rotation;
    let t = &p.translation;
    let vals = [
        r[(0, 0)],
        r[(0, 1)],
        r[(0, 2)],
        t[0],
        r[(1, 0)],
        r[(1, 1)],
        r[(1, 2)],
        t[1],
        r[(2, 0)],
        r[(2, 1)],
        r[(2, 2)],
        t[2],
    ];
    vals.iter()
        .map(|&v| sci(v, 15))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn encode_poses(traj: &Trajectory) -> String {
    let mut s = String::new();
    for p in &traj.poses {
        s.push_str(&format_pose_line(p));
        s.push('\n');
    }
    s
}

/// Report formatting: nine significant digits, locale independent.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    sci(x, 8)
}

/// `vx vy vz wx wy wz`.
pub fn format_twist(t: &Twist) -> String {
    t.to_array()
        .iter()
        .map(|&v| format_number(v))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_twist(s: &str) -> Result<Twist> {
    let vals: Vec<f64> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad twist component {t:?}")))
        })
        .collect::<Result<_>>()?;
    let arr: [f64; 6] = vals.try_into().map_err(|v: Vec<f64>| {
        Error::invalid(format!("twist needs 6 components, found {}", v.len()))
    })?;
    let t = Twist::from_array(arr);
    if !t.is_finite() {
        return Err(Error::invalid("twist has non-finite components"));
    }
    Ok(t)
}

/// One twist per line.
pub fn parse_twists(bytes: &[u8], path: &Path) -> Result<Vec<Twist>> {
    lines(bytes, path)?
        .into_iter()
        .map(|(off, line)| parse_twist(line).map_err(|e| format_err(path, off, e.to_string())))
        .collect()
}
