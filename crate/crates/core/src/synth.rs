//! Ground-truth scene generator.
//!
//! A smooth random depth surface seen by a rectified stereo rig, a camera
//! twist, rectangular independently-moving objects, optional noise and
//! gross outliers, and optionally a set of textured images that satisfy the
//! photometric relation under the generated flow and disparity.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{DisparityField, FlowField, Mask};
use crate::geometry::{normalize_pixel, CameraIntrinsics, StereoRig, Twist};
use crate::image::ScalarImage;
use crate::motion::flow_at;

const SURFACE_STREAM: u64 = 0x5EED_0001;
const TWIST_STREAM: u64 = 0x5EED_0002;
const OBJECT_STREAM: u64 = 0x5EED_0003;
const TEXTURE_STREAM: u64 = 0x5EED_0004;
const NOISE_STREAM: u64 = 0x5EED_0005;

/// Largest gross-outlier flow magnitude, pixels.
pub const OUTLIER_MAX_FLOW: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TwistSpec {
    Fixed(Twist),
    /// Uniform direction for v and ω with magnitudes in the given ranges.
    Random {
        speed: (f64, f64),
        omega_max: f64,
    },
}

/// Bounds on each object's twist relative to the camera twist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectOffsetBounds {
    pub speed: (f64, f64),
    pub omega_max: f64,
    /// Every object pixel's flow must differ from the background model by
    /// at least this many pixels; offsets are resampled until it holds.
    pub min_flow_difference_px: f64,
}

impl Default for ObjectOffsetBounds {
    fn default() -> Self {
        Self {
            speed: (1.5, 4.0),
            omega_max: 0.05,
            min_flow_difference_px: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub rig: StereoRig,
    pub depth_range: (f64, f64),
    pub twist: TwistSpec,
    pub object_count: usize,
    /// Fraction of the image covered by objects in total.
    pub object_fraction: f64,
    pub object_offset: ObjectOffsetBounds,
    pub noise_sigma_flow: f64,
    pub noise_sigma_disp: f64,
    pub outlier_fraction: f64,
    pub with_images: bool,
    pub seed: u64,
}

impl SceneConfig {
    /// Square image with the principal point at the center pixel.
    pub fn square(size: usize, seed: u64) -> Self {
        let c = (size / 2) as f64;
        let intr =
            CameraIntrinsics::new(size as f64, c, c, size, size).expect("size must be positive");
        Self {
            rig: StereoRig::new(intr, 0.5).expect("positive baseline"),
            depth_range: (4.0, 40.0),
            twist: TwistSpec::Random {
                speed: (0.5, 1.5),
                omega_max: 0.03,
            },
            object_count: 0,
            object_fraction: 0.0,
            object_offset: ObjectOffsetBounds::default(),
            noise_sigma_flow: 0.0,
            noise_sigma_disp: 0.0,
            outlier_fraction: 0.0,
            with_images: false,
            seed,
        }
    }

    pub fn width(&self) -> usize {
        self.rig.width()
    }

    pub fn height(&self) -> usize {
        self.rig.height()
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::invalid(format!("bad depth range ({lo}, {hi})")));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier_fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.object_fraction) {
            return Err(Error::invalid("object_fraction must lie in [0, 1)"));
        }
        if self.object_count > 0 && self.object_fraction <= 0.0 {
            return Err(Error::invalid("objects need a positive object_fraction"));
        }
        if !(self.noise_sigma_flow >= 0.0 && self.noise_sigma_disp >= 0.0) {
            return Err(Error::invalid("noise sigmas must be >= 0"));
        }
        if let TwistSpec::Random { speed, omega_max } = self.twist {
            if !(speed.0 >= 0.0 && speed.0 <= speed.1 && omega_max >= 0.0) {
                return Err(Error::invalid("bad random twist bounds"));
            }
        }
        let o = self.object_offset;
        if !(o.speed.0 >= 0.0 && o.speed.0 <= o.speed.1 && o.omega_max >= 0.0) {
            return Err(Error::invalid("bad object offset bounds"));
        }
        Ok(())
    }
}

/// Low-frequency sinusoid sum over normalized coordinates, mapped into the
/// depth range and clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSurface {
    range: (f64, f64),
    terms: Vec<(f64, f64, f64, f64)>,
}

impl DepthSurface {
    fn random(rng: &mut ChaCha8Rng, range: (f64, f64)) -> Self {
        let terms = (0..8)
            .map(|_| {
                let amp = rng.random_range(0.2..1.0);
                let kx = rng.random_range(-1.5..1.5) * std::f64::consts::TAU;
                let ky = rng.random_range(-1.5..1.5) * std::f64::consts::TAU;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (amp, kx, ky, phase)
            })
            .collect();
        Self { range, terms }
    }

    /// Depth in meters at a normalized image position.
    pub fn depth(&self, x: f64, y: f64) -> f64 {
        let (lo, hi) = self.range;
        let total: f64 = self.terms.iter().map(|t| t.0).sum();
        let s: f64 = self
            .terms
            .iter()
            .map(|&(a, kx, ky, ph)| a * (kx * x + ky * y + ph).sin())
            .sum::<f64>()
            / total;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        // the sum rarely reaches ±1, so stretch before clamping
        (mid + 2.0 * half * s).clamp(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingObject {
    pub region: Rect,
    pub twist: Twist,
}

/// Reference left image at t, left at t+1, right at t and right at t+1.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImages {
    pub left_t: ScalarImage,
    pub left_t1: ScalarImage,
    pub right_t: ScalarImage,
    pub right_t1: ScalarImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub surface: DepthSurface,
    pub disparity_gt: DisparityField,
    pub flow_gt: FlowField,
    pub twist_gt: Twist,
    pub objects: Vec<MovingObject>,
    /// True on independently moving pixels.
    pub object_mask: Mask,
    /// True on pixels replaced by gross outliers.
    pub outlier_mask: Mask,
    pub images: Option<SceneImages>,
}

impl SyntheticScene {
    pub fn rig(&self) -> &StereoRig {
        &self.config.rig
    }

    /// Pixels that follow the camera model: not on an object, not a gross outlier.
    pub fn clean_mask(&self) -> Mask {
        let data = self
            .object_mask
            .data
            .iter()
            .zip(&self.outlier_mask.data)
            .map(|(&o, &q)| !o && !q)
            .collect();
        Mask {
            width: self.object_mask.width,
            height: self.object_mask.height,
            data,
        }
    }

    /// Twist governing the continuous pixel position (u, v).
    fn twist_at(&self, u: f64, v: f64) -> Twist {
        self.objects
            .iter()
            .rev()
            .find(|o| o.region.contains(u, v))
            .map_or(self.twist_gt, |o| o.twist)
    }

    /// Flow in pixels at a continuous reference-image position.
    pub fn flow_at(&self, u: f64, v: f64) -> Vector2<f64> {
        let intr = self.config.rig.intrinsics;
        let p = normalize_pixel(&intr, u, v);
        let z = self.surface.depth(p.x, p.y);
        flow_at(&self.twist_at(u, v), p, 1.0 / z) * intr.f
    }

    /// Disparity in pixels at a continuous reference-image position.
    pub fn disparity_at(&self, u: f64, v: f64) -> f64 {
        let intr = self.config.rig.intrinsics;
        let p = normalize_pixel(&intr, u, v);
        self.config.rig.fb() / self.surface.depth(p.x, p.y)
    }
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn random_twist(rng: &mut ChaCha8Rng, speed: (f64, f64), omega_max: f64) -> Twist {
    let s = if speed.1 > speed.0 {
        rng.random_range(speed.0..speed.1)
    } else {
        speed.0
    };
    let w = if omega_max > 0.0 {
        rng.random_range(0.0..omega_max)
    } else {
        0.0
    };
    let v = random_direction(rng) * s;
    let omega = random_direction(rng) * w;
    Twist::new(v, omega)
}

fn place_objects(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Vec<Rect> {
    let (w, h) = (cfg.width(), cfg.height());
    if cfg.object_count == 0 {
        return Vec::new();
    }
    let area = cfg.object_fraction * (w * h) as f64 / cfg.object_count as f64;
    let mut rects: Vec<Rect> = Vec::with_capacity(cfg.object_count);
    for _ in 0..cfg.object_count {
        let mut chosen = None;
        for attempt in 0..500 {
            let aspect = rng.random_range(0.5..2.0);
            let rw = ((area * aspect).sqrt().round() as usize).clamp(1, w);
            let rh = ((area / rw as f64).round() as usize).clamp(1, h);
            let x0 = rng.random_range(0..=w - rw);
            let y0 = rng.random_range(0..=h - rh);
            let r = Rect {
                x0,
                y0,
                x1: x0 + rw,
                y1: y0 + rh,
            };
            if attempt == 499 || rects.iter().all(|o| !o.overlaps(&r)) {
                chosen = Some(r);
                break;
            }
        }
        rects.extend(chosen);
    }
    rects
}

/// Resamples object offsets until the object's flow differs from the
/// background model by the required margin at every object pixel.
fn object_twist(
    rng: &mut ChaCha8Rng,
    cfg: &SceneConfig,
    surface: &DepthSurface,
    background: &Twist,
    region: &Rect,
) -> Result<Twist> {
    let intr = cfg.rig.intrinsics;
    let bounds = cfg.object_offset;
    for _ in 0..1000 {
        let offset = random_twist(rng, bounds.speed, bounds.omega_max);
        let separated = (region.y0..region.y1).all(|y| {
            (region.x0..region.x1).all(|x| {
                let p = normalize_pixel(&intr, x as f64, y as f64);
                let z = surface.depth(p.x, p.y);
                (flow_at(&offset, p, 1.0 / z) * intr.f).norm() >= bounds.min_flow_difference_px
            })
        });
        if separated {
            return Ok(*background + offset);
        }
    }
    Err(Error::invalid(
        "object offset bounds cannot separate object flow from the background",
    ))
}

pub fn generate(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let (w, h) = (cfg.width(), cfg.height());
    let intr = cfg.rig.intrinsics;

    let surface = DepthSurface::random(
        &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ SURFACE_STREAM),
        cfg.depth_range,
    );
    let twist_gt = match cfg.twist {
        TwistSpec::Fixed(t) => t,
        TwistSpec::Random { speed, omega_max } => random_twist(
            &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ TWIST_STREAM),
            speed,
            omega_max,
        ),
    };

    let mut obj_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ OBJECT_STREAM);
    let rects = place_objects(&mut obj_rng, cfg);
    let mut objects = Vec::with_capacity(rects.len());
    for r in rects {
        let t = object_twist(&mut obj_rng, cfg, &surface, &twist_gt, &r)?;
        objects.push(MovingObject {
            region: r,
            twist: t,
        });
    }

    let mut scene = SyntheticScene {
        config: *cfg,
        surface,
        disparity_gt: DisparityField::new(w, h),
        flow_gt: FlowField::new(w, h),
        twist_gt,
        objects,
        object_mask: Mask::filled(w, h, false),
        outlier_mask: Mask::filled(w, h, false),
        images: None,
    };

    let fb = cfg.rig.fb();
    for i in 0..w * h {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let p = normalize_pixel(&intr, x, y);
        let d = fb / scene.surface.depth(p.x, p.y);
        scene.disparity_gt.d[i] = d;
        scene.disparity_gt.valid[i] = true;
        let on_object = scene.objects.iter().any(|o| o.region.contains(x, y));
        scene.object_mask.data[i] = on_object;
        let f = flow_at(&scene.twist_at(x, y), p, d / fb) * intr.f;
        scene.flow_gt.u[i] = f.x;
        scene.flow_gt.v[i] = f.y;
        scene.flow_gt.valid[i] = true;
    }

    if cfg.with_images {
        scene.images = Some(render_images(&scene)?);
    }

    if cfg.noise_sigma_flow > 0.0 || cfg.noise_sigma_disp > 0.0 || cfg.outlier_fraction > 0.0 {
        scene = perturb(
            &scene,
            cfg.noise_sigma_flow,
            cfg.noise_sigma_disp,
            cfg.outlier_fraction,
            cfg.seed ^ NOISE_STREAM,
        )?;
    }
    Ok(scene)
}

/// Adds i.i.d. Gaussian noise to flow and disparity, then replaces exactly
/// ⌊fraction·N⌋ random pixels with uniform gross flow outliers. Disparities
/// pushed to ≤ 0 by noise become invalid.
pub fn perturb(
    scene: &SyntheticScene,
    noise_sigma_flow: f64,
    noise_sigma_disp: f64,
    outlier_fraction: f64,
    seed: u64,
) -> Result<SyntheticScene> {
    if !(noise_sigma_flow >= 0.0 && noise_sigma_disp >= 0.0) {
        return Err(Error::invalid("noise sigmas must be >= 0"));
    }
    if !(0.0..1.0).contains(&outlier_fraction) {
        return Err(Error::invalid("outlier_fraction must lie in [0, 1)"));
    }
    let mut out = scene.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = out.flow_gt.len();

    if noise_sigma_flow > 0.0 {
        let nf = Normal::new(0.0, noise_sigma_flow).expect("finite sigma");
        for i in 0..n {
            out.flow_gt.u[i] += nf.sample(&mut rng);
            out.flow_gt.v[i] += nf.sample(&mut rng);
        }
    }
    if noise_sigma_disp > 0.0 {
        let nd = Normal::new(0.0, noise_sigma_disp).expect("finite sigma");
        for i in 0..n {
            if out.disparity_gt.valid[i] {
                let d = out.disparity_gt.d[i] + nd.sample(&mut rng);
                if d > 0.0 {
                    out.disparity_gt.d[i] = d;
                } else {
                    out.disparity_gt.d[i] = 0.0;
                    out.disparity_gt.valid[i] = false;
                }
            }
        }
    }

    let count = (outlier_fraction * n as f64).floor() as usize;
    if count > 0 {
        let picks = rand::seq::index::sample(&mut rng, n, count);
        for i in picks.iter() {
            let r = OUTLIER_MAX_FLOW * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            out.flow_gt.u[i] = r * a.cos();
            out.flow_gt.v[i] = r * a.sin();
            out.flow_gt.valid[i] = true;
            out.outlier_mask.data[i] = true;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Texture {
    terms: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut terms = Vec::new();
        // coarse shading
        for _ in 0..4 {
            let period = rng.random_range(20.0..60.0);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / period;
            terms.push((
                0.08,
                k * angle.cos(),
                k * angle.sin(),
                rng.random_range(0.0..std::f64::consts::TAU),
            ));
        }
        // fine detail
        for _ in 0..6 {
            let period = rng.random_range(5.0..10.0);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / period;
            terms.push((
                0.035,
                k * angle.cos(),
                k * angle.sin(),
                rng.random_range(0.0..std::f64::consts::TAU),
            ));
        }
        Self { terms }
    }

    fn value(&self, u: f64, v: f64) -> f64 {
        let s: f64 = self
            .terms
            .iter()
            .map(|&(a, kx, ky, ph)| a * (kx * u + ky * v + ph).sin())
            .sum();
        (0.5 + s).clamp(0.0, 1.0)
    }
}

/// Finds x with x + offset(x) = y by fixed-point iteration.
fn invert_warp(y: Vector2<f64>, offset: impl Fn(f64, f64) -> Vector2<f64>) -> Vector2<f64> {
    let mut x = y;
    for _ in 0..50 {
        let next = y - offset(x.x, x.y);
        let done = (next - x).norm() < 1e-12;
        x = next;
        if done {
            break;
        }
    }
    x
}

fn render_images(scene: &SyntheticScene) -> Result<SceneImages> {
    let cfg = &scene.config;
    let (w, h) = (cfg.width(), cfg.height());
    let tex = Texture::random(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ TEXTURE_STREAM));
    let intr = cfg.rig.intrinsics;
    let fb = cfg.rig.fb();

    let render = |offset: &dyn Fn(f64, f64) -> Vector2<f64>| {
        ScalarImage::from_fn(w, h, |x, y| {
            let src = invert_warp(Vector2::new(x as f64, y as f64), offset);
            tex.value(src.x, src.y)
        })
    };

    let left_t = ScalarImage::from_fn(w, h, |x, y| tex.value(x as f64, y as f64))?;
    let left_t1 = render(&|u, v| scene.flow_at(u, v))?;
    let right_t = render(&|u, v| Vector2::new(-scene.disparity_at(u, v), 0.0))?;
    let right_t1 = render(&|u, v| {
        // position in right t+1: follow the flow, then shift by the disparity
        // of the displaced point at t+1
        let f = scene.flow_at(u, v);
        let p = normalize_pixel(&intr, u, v);
        let z = scene.surface.depth(p.x, p.y);
        let t = scene.twist_at(u, v);
        let point = Vector3::new(p.x * z, p.y * z, z);
        let z1 = z - t.v.z - t.omega.cross(&point).z;
        let d1 = if z1 > 0.0 { fb / z1 } else { 0.0 };
        Vector2::new(f.x - d1, f.y)
    })?;
    Ok(SceneImages {
        left_t,
        left_t1,
        right_t,
        right_t1,
    })
}
