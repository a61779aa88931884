//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the crate's numerical routines.

#![allow(dead_code, clippy::needless_range_loop)]

use flowpose::eval::{Crop, FlowErrors};

/// Motion-field rows [A/Z | B] at normalized (x, y), written out by hand.
pub fn rows(x: f64, y: f64, inv_z: f64) -> [[f64; 6]; 2] {
    [
        [-inv_z, 0.0, x * inv_z, x * y, -(1.0 + x * x), y],
        [0.0, -inv_z, y * inv_z, 1.0 + y * y, -x * y, -x],
    ]
}

/// Flow in normalized units for twist [vx vy vz wx wy wz].
pub fn flow(t: &[f64; 6], x: f64, y: f64, inv_z: f64) -> [f64; 2] {
    let r = rows(x, y, inv_z);
    let dot = |row: &[f64; 6]| row.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
    [dot(&r[0]), dot(&r[1])]
}

fn gauss_jordan(mut m: [[f64; 6]; 6], mut b: [f64; 6]) -> [f64; 6] {
    for col in 0..6 {
        let piv = (col..6)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        let d = m[col][col];
        assert!(d != 0.0, "singular normal matrix");
        for k in 0..6 {
            m[col][k] /= d;
        }
        b[col] /= d;
        for r in 0..6 {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for k in 0..6 {
                        m[r][k] -= f * m[col][k];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    b
}

/// Least squares through the normal equations AᵀA x = Aᵀb with a few rounds
/// of iterative refinement on the original residual.
pub fn normal_equations(a: &[[f64; 6]], b: &[f64]) -> [f64; 6] {
    let mut ata = [[0.0; 6]; 6];
    for row in a {
        for i in 0..6 {
            for j in 0..6 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let at_times = |r: &[f64]| {
        let mut out = [0.0; 6];
        for (row, &ri) in a.iter().zip(r) {
            for i in 0..6 {
                out[i] += row[i] * ri;
            }
        }
        out
    };
    let mut x = gauss_jordan(ata, at_times(b));
    for _ in 0..4 {
        let resid: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(row, &bi)| bi - row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>())
            .collect();
        let dx = gauss_jordan(ata, at_times(&resid));
        for i in 0..6 {
            x[i] += dx[i];
        }
    }
    x
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Plain-loop flow metrics: pixels valid in `gt` and inside `restrict`.
pub fn flow_metrics(
    pred: &[(f64, f64)],
    gt: &[(f64, f64, bool)],
    noc: &[bool],
    restrict: Option<&[bool]>,
) -> FlowErrors {
    let (mut s_all, mut s_noc, mut n_all, mut n_noc, mut o_all, mut o_noc) = (0.0, 0.0, 0, 0, 0, 0);
    for i in 0..gt.len() {
        let (gu, gv, ok) = gt[i];
        if !ok || restrict.is_some_and(|r| !r[i]) {
            continue;
        }
        let e = ((pred[i].0 - gu).powi(2) + (pred[i].1 - gv).powi(2)).sqrt();
        let bad = e > 3.0 && e > 0.05 * (gu * gu + gv * gv).sqrt();
        s_all += e;
        n_all += 1;
        o_all += bad as usize;
        if noc[i] {
            s_noc += e;
            n_noc += 1;
            o_noc += bad as usize;
        }
    }
    FlowErrors {
        epe_noc: s_noc / n_noc as f64,
        epe_all: s_all / n_all as f64,
        outlier_pct_noc: 100.0 * o_noc as f64 / n_noc as f64,
        outlier_pct_all: 100.0 * o_all as f64 / n_all as f64,
        pixels_noc: n_noc,
        pixels_all: n_all,
    }
}

/// (abs_rel, sq_rel, rmse, rmse_log, δ1, δ2, δ3, n) over 0 < gt ≤ cap.
pub fn depth_metrics(
    pred: &[f64],
    gt: &[f64],
    width: usize,
    cap: f64,
    crop: Option<Crop>,
    mask: Option<&[bool]>,
) -> [f64; 8] {
    let mut acc = [0.0; 8];
    for i in 0..gt.len() {
        let g = gt[i];
        let (x, y) = (i % width, i / width);
        let in_crop = crop.is_none_or(|c| x >= c.x0 && x < c.x1 && y >= c.y0 && y < c.y1);
        if !(g > 0.0 && g <= cap) || !in_crop || mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let p = if pred[i].is_finite() {
            pred[i].max(1e-3)
        } else {
            1e-3
        };
        let r = if p / g > g / p { p / g } else { g / p };
        acc[0] += (p - g).abs() / g;
        acc[1] += (p - g) * (p - g) / g;
        acc[2] += (p - g) * (p - g);
        acc[3] += (p.ln() - g.ln()).powi(2);
        acc[4] += (r < 1.25) as u8 as f64;
        acc[5] += (r < 1.5625) as u8 as f64;
        acc[6] += (r < 1.953125) as u8 as f64;
        acc[7] += 1.0;
    }
    let n = acc[7];
    [
        acc[0] / n,
        acc[1] / n,
        (acc[2] / n).sqrt(),
        (acc[3] / n).sqrt(),
        acc[4] / n,
        acc[5] / n,
        acc[6] / n,
        n,
    ]
}

/// 3×3 rotation about z by `a` radians, row-major.
pub fn rot_z(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Rotation about y (yaw for a camera with y pointing down).
pub fn rot_y(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}
