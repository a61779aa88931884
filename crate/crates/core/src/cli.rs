//! Command-line front end.
//!
//! Every subcommand prints `key=value` lines on stdout. Numbers use
//! [`format_number`] so output never depends on locale or thread count.
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 estimation failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::eval::{
    depth_errors, flow_errors_masked, integrate_trajectory, kitti_odometry_errors, scale_align,
    Crop, DepthEvalOptions, DepthMap,
};
use crate::field::{DisparityField, FlowField};
use crate::geometry::{CameraIntrinsics, StereoRig, Twist};
use crate::image::{ScalarImage, WarpField};
use crate::io::{self, format_number, format_twist, FieldFormat};
use crate::losses::{refinement_losses, warp_loss_maps, LossConfig, WarpLossMaps};
use crate::motion::{disparity_from_flow, predict_flow_field};
use crate::ransac::{estimate_pose_ransac, score_inliers, PoseEstimate, RansacConfig};
use crate::synth::{generate, SceneConfig, TwistSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "flowpose",
    version,
    about = "Stereo odometry from dense flow and disparity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the camera twist from flow, disparity and calibration.
    Estimate(EstimateArgs),
    /// Predict the rigid flow field of a twist over a disparity map.
    PredictFlow(PredictFlowArgs),
    /// Recover disparity from flow and a known twist.
    DisparityFromFlow(DisparityFromFlowArgs),
    /// Evaluate the warp losses on a stereo image quadruple.
    Losses(LossesArgs),
    /// Generate a synthetic ground-truth scene.
    Synth(SynthArgs),
    /// KITTI-style relative drift of a trajectory against ground truth.
    EvalOdometry(EvalOdometryArgs),
    /// Endpoint error and outlier rate of a flow field.
    EvalFlow(EvalFlowArgs),
    /// Depth error metrics of a disparity map.
    EvalDepth(EvalDepthArgs),
    /// Estimate and chain per-frame twists over a directory of fields.
    RunSequence(RunSequenceArgs),
}

#[derive(Debug, Args)]
struct RansacArgs {
    #[arg(long, default_value_t = 100)]
    ransac_iters: usize,
    /// Inlier threshold on the flow residual, pixels.
    #[arg(long, default_value_t = 1.0)]
    inlier_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the least-squares refit over the best consensus set.
    #[arg(long)]
    no_refit: bool,
}

impl RansacArgs {
    fn config(&self) -> RansacConfig {
        RansacConfig {
            iterations: self.ransac_iters,
            threshold_px: self.inlier_threshold,
            seed: self.seed,
            refit: !self.no_refit,
            ..RansacConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct TwistArgs {
    /// "vx,vy,vz,wx,wy,wz" (m and rad per frame).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "twist_file")]
    twist: Option<String>,
    /// File holding one twist line.
    #[arg(long)]
    twist_file: Option<PathBuf>,
}

impl TwistArgs {
    fn load(&self) -> Result<Twist, CliError> {
        match (&self.twist, &self.twist_file) {
            (Some(s), _) => io::parse_twist(s).map_err(|e| CliError::Usage(e.to_string())),
            (None, Some(p)) => {
                let bytes = read_input(p)?;
                let ts = io::parse_twists(&bytes, p).map_err(CliError::Data)?;
                match ts.as_slice() {
                    [t] => Ok(*t),
                    _ => Err(CliError::Data(Error::InvalidInput(format!(
                        "{}: expected exactly one twist, found {}",
                        p.display(),
                        ts.len()
                    )))),
                }
            }
            (None, None) => Err(CliError::Usage(
                "one of --twist or --twist-file is required".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    disparity: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[command(flatten)]
    ransac: RansacArgs,
    /// Write the inlier mask as an 8-bit PNG.
    #[arg(long)]
    mask_out: Option<PathBuf>,
    /// Write the twist as a one-line text file.
    #[arg(long)]
    twist_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictFlowArgs {
    #[arg(long)]
    disparity: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[command(flatten)]
    twist: TwistArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DisparityFromFlowArgs {
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[command(flatten)]
    twist: TwistArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LossesArgs {
    #[arg(long)]
    left_t: PathBuf,
    #[arg(long)]
    left_t1: PathBuf,
    #[arg(long)]
    right_t: PathBuf,
    /// With --disparity-t1, adds the stereo terms at t+1.
    #[arg(long, requires = "disparity_t1")]
    right_t1: Option<PathBuf>,
    /// Forward flow, left t → left t+1.
    #[arg(long)]
    flow: PathBuf,
    /// Left disparity at t.
    #[arg(long)]
    disparity: PathBuf,
    /// Left disparity at t+1.
    #[arg(long, requires = "right_t1")]
    disparity_t1: Option<PathBuf>,
    /// Backward flow, left t+1 → left t; enables the consistency term.
    #[arg(long)]
    backward_flow: Option<PathBuf>,
    /// Resize images to WIDTHxHEIGHT (bilinear) before evaluation.
    #[arg(long, value_parser = parse_size)]
    resize: Option<(usize, usize)>,
    /// With a twist, also report the refinement losses over its inliers.
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    twist: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    inlier_threshold: f64,
    #[arg(long, default_value_t = LossConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = LossConfig::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = LossConfig::default().lambda1)]
    lambda1: f64,
    #[arg(long, default_value_t = LossConfig::default().lambda2)]
    lambda2: f64,
    /// Write each per-pixel map as a 16-bit PNG, scaled by its maximum.
    #[arg(long)]
    maps_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Png,
    Txt,
}

impl FormatArg {
    fn format(self) -> FieldFormat {
        match self {
            FormatArg::Png => FieldFormat::Png,
            FormatArg::Txt => FieldFormat::Text,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Focal length in pixels; defaults to the image width.
    #[arg(long)]
    focal: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    baseline: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed camera twist; random when absent.
    #[arg(long, allow_hyphen_values = true)]
    twist: Option<String>,
    #[arg(long, default_value_t = 0)]
    objects: usize,
    #[arg(long, default_value_t = 0.3)]
    object_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    flow_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    disparity_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_fraction: f64,
    /// Also render the four stereo images.
    #[arg(long)]
    images: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Png)]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct EvalOdometryArgs {
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Rescale translations by the least-squares global scale first.
    #[arg(long)]
    scale_align: bool,
    /// Write "frame x y z x_gt y_gt z_gt" rows for plotting.
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalFlowArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Non-occluded mask; defaults to the ground-truth validity.
    #[arg(long)]
    noc_mask: Option<PathBuf>,
    /// Restrict every statistic to this mask (e.g. RANSAC inliers).
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CropArg {
    None,
    Garg,
}

#[derive(Debug, Args)]
struct EvalDepthArgs {
    /// Predicted disparity.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth disparity.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long, default_value_t = DepthEvalOptions::default().cap)]
    cap: f64,
    #[arg(long, value_enum, default_value_t = CropArg::None)]
    crop: CropArg,
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunSequenceArgs {
    /// Directory of NNNNNN_flow.{png,txt} and NNNNNN_disparity.{png,txt}.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    ransac: RansacArgs,
    /// Also write the per-frame twists.
    #[arg(long)]
    twists_out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, found {s:?}"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
    Estimation(Error),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Estimation(_) => EXIT_ESTIMATION,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("usage error: {m}"),
            CliError::Data(e) => format!("data error: {e}"),
            CliError::Estimation(e) => format!("estimation failed: {e}"),
        }
    }
}

/// Failures of the numerical core map to exit 3, everything else to exit 2.
fn classify(e: Error) -> CliError {
    match e {
        Error::Degenerate { .. }
        | Error::EstimationFailed(_)
        | Error::InsufficientData { .. }
        | Error::DegenerateScale(_) => CliError::Estimation(e),
        other => CliError::Data(other),
    }
}

/// A missing input file is a usage problem rather than bad data.
fn check_input(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "input file not found: {}",
            path.display()
        )))
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    check_input(path)?;
    fs::read(path).map_err(|e| {
        CliError::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn load<T>(path: &Path, f: impl FnOnce(&Path) -> crate::Result<T>) -> Result<T, CliError> {
    check_input(path)?;
    f(path).map_err(CliError::Data)
}

fn data<T>(r: crate::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Data)
}

fn compute<T>(r: crate::Result<T>) -> Result<T, CliError> {
    r.map_err(classify)
}

fn field_format(path: &Path) -> Result<FieldFormat, CliError> {
    FieldFormat::from_path(path).map_err(|e| CliError::Usage(e.to_string()))
}

fn check_dims(what: &str, got: (usize, usize), rig: &StereoRig) -> Result<(), CliError> {
    if got != (rig.width(), rig.height()) {
        return Err(CliError::Data(Error::InvalidInput(format!(
            "{what} is {}x{} but the calibration says {}x{}",
            got.0,
            got.1,
            rig.width(),
            rig.height()
        ))));
    }
    Ok(())
}

struct Report(String);

impl Report {
    fn new() -> Self {
        Report(String::new())
    }

    fn num(&mut self, key: &str, v: f64) {
        let _ = writeln!(self.0, "{key}={}", format_number(v));
    }

    fn int(&mut self, key: &str, v: usize) {
        let _ = writeln!(self.0, "{key}={v}");
    }

    fn text(&mut self, key: &str, v: &str) {
        let _ = writeln!(self.0, "{key}={v}");
    }
}

fn report_estimate(r: &mut Report, est: &PoseEstimate) {
    r.text("twist", &format_twist(&est.twist));
    r.int("inlier_count", est.inlier_count);
    r.num("inlier_fraction", est.inlier_fraction);
    r.num("mean_residual_px", est.mean_residual_px);
    r.int("best_iteration", est.best_iteration);
    r.int("hypotheses", est.hypotheses);
}

fn cmd_estimate(a: &EstimateArgs) -> Result<Report, CliError> {
    let rig = load(&a.calib, io::read_calibration)?;
    let flow = load(&a.flow, io::read_flow)?;
    let disp = load(&a.disparity, io::read_disparity)?;
    check_dims("flow", flow.dims(), &rig)?;
    check_dims("disparity", disp.dims(), &rig)?;
    let est = compute(estimate_pose_ransac(&rig, &flow, &disp, &a.ransac.config()))?;
    if let Some(p) = &a.mask_out {
        data(io::write_mask(p, &est.mask))?;
    }
    if let Some(p) = &a.twist_out {
        data(io::write_atomic(
            p,
            full_precision_twist(&est.twist).as_bytes(),
        ))?;
    }
    let mut r = Report::new();
    report_estimate(&mut r, &est);
    Ok(r)
}

/// Round-trippable twist line, used for files consumed by other commands.
fn full_precision_twist(t: &Twist) -> String {
    let a = t.to_array();
    format!("{} {} {} {} {} {}\n", a[0], a[1], a[2], a[3], a[4], a[5])
}

fn cmd_predict_flow(a: &PredictFlowArgs) -> Result<Report, CliError> {
    field_format(&a.out)?;
    let twist = a.twist.load()?;
    let rig = load(&a.calib, io::read_calibration)?;
    let disp = load(&a.disparity, io::read_disparity)?;
    check_dims("disparity", disp.dims(), &rig)?;
    let flow = compute(predict_flow_field(&rig, &twist, &disp))?;
    data(io::write_flow(&a.out, &flow))?;
    let mut r = Report::new();
    r.int("valid_pixels", flow.valid_count());
    r.int("pixels", flow.len());
    Ok(r)
}

fn cmd_disparity_from_flow(a: &DisparityFromFlowArgs) -> Result<Report, CliError> {
    field_format(&a.out)?;
    let twist = a.twist.load()?;
    let rig = load(&a.calib, io::read_calibration)?;
    let flow = load(&a.flow, io::read_flow)?;
    check_dims("flow", flow.dims(), &rig)?;
    let disp = compute(disparity_from_flow(&rig, &twist, &flow))?;
    data(io::write_disparity(&a.out, &disp))?;
    let mut r = Report::new();
    r.int("valid_pixels", disp.valid.iter().filter(|&&b| b).count());
    r.int("pixels", disp.len());
    Ok(r)
}

fn load_image(path: &Path, resize: Option<(usize, usize)>) -> Result<ScalarImage, CliError> {
    let img = load(path, io::read_image)?;
    match resize {
        Some((w, h)) => data(img.resize(w, h)),
        None => Ok(img),
    }
}

fn report_maps(r: &mut Report, prefix: &str, maps: &WarpLossMaps, cfg: &LossConfig) {
    let n = maps.photometric.values.len() as f64;
    r.num(&format!("{prefix}.photometric"), maps.photometric.sum());
    r.num(&format!("{prefix}.ssim_mean"), maps.ssim.sum() / n);
    r.num(&format!("{prefix}.appearance"), maps.appearance.sum());
    if let Some(c) = &maps.consistency {
        r.num(&format!("{prefix}.consistency"), c.sum());
    }
    r.num(&format!("{prefix}.smoothness"), maps.smoothness.sum());
    r.int(
        &format!("{prefix}.occluded_pixels"),
        maps.occlusion.data.iter().filter(|&&b| !b).count(),
    );
    r.num(&format!("{prefix}.total"), maps.total(cfg));
}

// Each map is divided by its maximum so it fits the 16-bit range; the
// maximum is reported as `<prefix>.<name>_max` so values can be recovered.
fn write_maps(
    r: &mut Report,
    dir: &Path,
    prefix: &str,
    maps: &WarpLossMaps,
) -> Result<(), CliError> {
    let mut named = vec![
        ("photometric", &maps.photometric),
        ("ssim", &maps.ssim),
        ("appearance", &maps.appearance),
        ("smoothness", &maps.smoothness),
    ];
    if let Some(c) = &maps.consistency {
        named.push(("consistency", c));
    }
    for (name, map) in named {
        let max = map.values.iter().cloned().fold(0.0, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        let img = ScalarImage {
            width: map.width,
            height: map.height,
            data: map.values.iter().map(|v| (v * scale).max(0.0)).collect(),
        };
        io::write_image(&dir.join(format!("{prefix}_{name}.png")), &img).map_err(CliError::Data)?;
        r.num(&format!("{prefix}.{name}_max"), max);
    }
    io::write_mask(
        &dir.join(format!("{prefix}_occlusion.png")),
        &maps.occlusion,
    )
    .map_err(CliError::Data)?;
    Ok(())
}

fn cmd_losses(a: &LossesArgs) -> Result<Report, CliError> {
    let cfg = LossConfig {
        alpha: a.alpha,
        epsilon: a.epsilon,
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        ..LossConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let twist = a
        .twist
        .as_deref()
        .map(io::parse_twist)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if twist.is_some() != a.calib.is_some() {
        return Err(CliError::Usage(
            "--twist and --calib must be given together".into(),
        ));
    }
    let left_t = load_image(&a.left_t, a.resize)?;
    let left_t1 = load_image(&a.left_t1, a.resize)?;
    let right_t = load_image(&a.right_t, a.resize)?;
    let right_t1 = a
        .right_t1
        .as_deref()
        .map(|p| load_image(p, a.resize))
        .transpose()?;
    let disp_t1 = a
        .disparity_t1
        .as_deref()
        .map(|p| load(p, io::read_disparity))
        .transpose()?;
    let flow = load(&a.flow, io::read_flow)?;
    let disp = load(&a.disparity, io::read_disparity)?;
    let backward = a
        .backward_flow
        .as_deref()
        .map(|p| load(p, io::read_flow))
        .transpose()?;

    let dims = left_t.dims();
    for (what, d) in [
        ("left t+1 image", left_t1.dims()),
        ("right t image", right_t.dims()),
        ("flow", flow.dims()),
        ("disparity", disp.dims()),
    ]
    .into_iter()
    .chain(right_t1.as_ref().map(|i| ("right t+1 image", i.dims())))
    .chain(disp_t1.as_ref().map(|d| ("disparity t+1", d.dims())))
    {
        if d != dims {
            return Err(CliError::Data(Error::InvalidInput(format!(
                "{what} is {}x{}, expected {}x{}",
                d.0, d.1, dims.0, dims.1
            ))));
        }
    }

    let fwd = WarpField::from_flow(&flow);
    let bwd = backward.as_ref().map(WarpField::from_flow);
    let temporal = data(warp_loss_maps(&left_t, &left_t1, &fwd, bwd.as_ref(), &cfg))?;
    let stereo_warp = WarpField::from_disparity(&disp, -1.0);
    let stereo = data(warp_loss_maps(&left_t, &right_t, &stereo_warp, None, &cfg))?;

    let mut r = Report::new();
    report_maps(&mut r, "temporal", &temporal, &cfg);
    report_maps(&mut r, "stereo", &stereo, &cfg);
    if let Some(dir) = &a.maps_out {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(Error::io(dir, e)))?;
        write_maps(&mut r, dir, "temporal", &temporal)?;
        write_maps(&mut r, dir, "stereo", &stereo)?;
    }
    if let (Some(img), Some(d)) = (&right_t1, &disp_t1) {
        let w = WarpField::from_disparity(d, -1.0);
        let maps = data(warp_loss_maps(&left_t1, img, &w, None, &cfg))?;
        report_maps(&mut r, "stereo_t1", &maps, &cfg);
        if let Some(dir) = &a.maps_out {
            write_maps(&mut r, dir, "stereo_t1", &maps)?;
        }
    }

    if let (Some(t), Some(calib)) = (twist, &a.calib) {
        let rig = load(calib, io::read_calibration)?;
        check_dims("images", dims, &rig)?;
        let inliers = compute(score_inliers(&rig, &t, &flow, &disp, a.inlier_threshold))?;
        let rl = compute(refinement_losses(
            &rig,
            &t,
            &flow,
            &disp,
            (&left_t, &left_t1),
            (&left_t, &right_t),
            &inliers,
            &cfg,
        ))?;
        r.int("refinement.inliers", inliers.count());
        r.num("refinement.stereo_mean", rl.stereo_mean());
        r.num("refinement.temporal_mean", rl.temporal_mean());
    }
    Ok(r)
}

fn cmd_synth(a: &SynthArgs) -> Result<Report, CliError> {
    let usage = |e: Error| CliError::Usage(e.to_string());
    let f = a.focal.unwrap_or(a.width as f64);
    let intr = CameraIntrinsics::new(
        f,
        (a.width / 2) as f64,
        (a.height / 2) as f64,
        a.width,
        a.height,
    )
    .map_err(usage)?;
    let rig = StereoRig::new(intr, a.baseline).map_err(usage)?;
    let mut cfg = SceneConfig::square(a.width.max(1), a.seed);
    cfg.rig = rig;
    if let Some(t) = &a.twist {
        cfg.twist = TwistSpec::Fixed(io::parse_twist(t).map_err(usage)?);
    }
    cfg.object_count = a.objects;
    cfg.object_fraction = if a.objects > 0 {
        a.object_fraction
    } else {
        0.0
    };
    cfg.noise_sigma_flow = a.flow_noise;
    cfg.noise_sigma_disp = a.disparity_noise;
    cfg.outlier_fraction = a.outlier_fraction;
    cfg.with_images = a.images;
    cfg.validate().map_err(usage)?;
    let scene = compute(generate(&cfg))?;

    fs::create_dir_all(&a.out).map_err(|e| {
        CliError::Data(Error::Io {
            path: a.out.clone(),
            source: e,
        })
    })?;
    let ext = a.format.format().extension();
    let out = |name: &str| a.out.join(name);
    data(io::write_flow(&out(&format!("flow.{ext}")), &scene.flow_gt))?;
    data(io::write_disparity(
        &out(&format!("disparity.{ext}")),
        &scene.disparity_gt,
    ))?;
    data(io::write_atomic(
        &out("calib.txt"),
        io::format_calibration(&rig).as_bytes(),
    ))?;
    data(io::write_atomic(
        &out("twist_gt.txt"),
        full_precision_twist(&scene.twist_gt).as_bytes(),
    ))?;
    data(io::write_mask(&out("object_mask.png"), &scene.object_mask))?;
    data(io::write_mask(
        &out("outlier_mask.png"),
        &scene.outlier_mask,
    ))?;
    if let Some(imgs) = &scene.images {
        data(io::write_image(&out("left_t.png"), &imgs.left_t))?;
        data(io::write_image(&out("left_t1.png"), &imgs.left_t1))?;
        data(io::write_image(&out("right_t.png"), &imgs.right_t))?;
        data(io::write_image(&out("right_t1.png"), &imgs.right_t1))?;
    }

    let mut meta = String::new();
    let _ = writeln!(meta, "seed={}", a.seed);
    let _ = writeln!(meta, "width={}", a.width);
    let _ = writeln!(meta, "height={}", a.height);
    let _ = write!(meta, "twist_gt={}", full_precision_twist(&scene.twist_gt));
    let _ = writeln!(meta, "objects={}", scene.objects.len());
    let _ = writeln!(meta, "object_pixels={}", scene.object_mask.count());
    let _ = writeln!(meta, "outlier_pixels={}", scene.outlier_mask.count());
    data(io::write_atomic(&out("meta.txt"), meta.as_bytes()))?;

    let mut r = Report::new();
    r.text("twist_gt", &format_twist(&scene.twist_gt));
    r.int("object_pixels", scene.object_mask.count());
    r.int("outlier_pixels", scene.outlier_mask.count());
    Ok(r)
}

fn cmd_eval_odometry(a: &EvalOdometryArgs) -> Result<Report, CliError> {
    let traj = load(&a.poses, io::read_poses)?;
    let gt = load(&a.gt, io::read_poses)?;
    let mut r = Report::new();
    let traj = if a.scale_align {
        let (s, aligned) = compute(scale_align(&traj, &gt))?;
        r.num("scale", s);
        aligned
    } else {
        traj
    };
    let errs = compute(kitti_odometry_errors(&traj, &gt))?;
    r.num("t_rel_pct", errs.t_rel);
    r.num("r_rel_deg_per_100m", errs.r_rel);
    r.int("segments", errs.segments);
    for l in &errs.per_length {
        let m = l.length as usize;
        r.num(&format!("t_rel_pct.{m}"), l.t_rel);
        r.num(&format!("r_rel_deg_per_100m.{m}"), l.r_rel);
        r.int(&format!("segments.{m}"), l.segments);
    }
    if let Some(p) = &a.plot_out {
        let mut s = String::from("# frame x y z x_gt y_gt z_gt\n");
        for (k, (e, g)) in traj.poses.iter().zip(&gt.poses).enumerate() {
            let (t, tg) = (e.translation, g.translation);
            let _ = writeln!(
                s,
                "{k} {} {} {} {} {} {}",
                format_number(t.x),
                format_number(t.y),
                format_number(t.z),
                format_number(tg.x),
                format_number(tg.y),
                format_number(tg.z)
            );
        }
        data(io::write_atomic(p, s.as_bytes()))?;
    }
    Ok(r)
}

fn cmd_eval_flow(a: &EvalFlowArgs) -> Result<Report, CliError> {
    let pred = load(&a.pred, io::read_flow)?;
    let gt = load(&a.gt, io::read_flow)?;
    let noc = match &a.noc_mask {
        Some(p) => load(p, io::read_mask)?,
        None => gt.valid_mask(),
    };
    let restrict = a
        .mask
        .as_deref()
        .map(|p| load(p, io::read_mask))
        .transpose()?;
    let e = compute(flow_errors_masked(&pred, &gt, &noc, restrict.as_ref()))?;
    let mut r = Report::new();
    r.num("epe_noc", e.epe_noc);
    r.num("epe_all", e.epe_all);
    r.num("outlier_pct_noc", e.outlier_pct_noc);
    r.num("outlier_pct_all", e.outlier_pct_all);
    r.int("pixels_noc", e.pixels_noc);
    r.int("pixels_all", e.pixels_all);
    Ok(r)
}

fn cmd_eval_depth(a: &EvalDepthArgs) -> Result<Report, CliError> {
    let rig = load(&a.calib, io::read_calibration)?;
    let pred: DisparityField = load(&a.pred, io::read_disparity)?;
    let gt: DisparityField = load(&a.gt, io::read_disparity)?;
    check_dims("prediction", pred.dims(), &rig)?;
    check_dims("ground truth", gt.dims(), &rig)?;
    let mask = a
        .mask
        .as_deref()
        .map(|p| load(p, io::read_mask))
        .transpose()?;
    let opts = DepthEvalOptions {
        cap: a.cap,
        crop: match a.crop {
            CropArg::None => None,
            CropArg::Garg => Some(Crop::garg(rig.width(), rig.height())),
        },
        mask,
        ..DepthEvalOptions::default()
    };
    let e = compute(depth_errors(
        &DepthMap::from_disparity(&rig, &pred),
        &DepthMap::from_disparity(&rig, &gt),
        &opts,
    ))?;
    let mut r = Report::new();
    r.num("abs_rel", e.abs_rel);
    r.num("sq_rel", e.sq_rel);
    r.num("rmse", e.rmse);
    r.num("rmse_log", e.rmse_log);
    r.num("delta1", e.delta1);
    r.num("delta2", e.delta2);
    r.num("delta3", e.delta3);
    r.int("pixels", e.pixels);
    Ok(r)
}

/// Frame ids with both a flow and a disparity file, in ascending order.
fn sequence_frames(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|_| CliError::Usage(format!("cannot read directory {}", dir.display())))?;
    let mut names: Vec<String> = Vec::new();
    for e in entries {
        let e = e.map_err(|e| {
            CliError::Data(Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })
        })?;
        if let Some(n) = e.file_name().to_str() {
            names.push(n.to_string());
        }
    }
    names.sort();
    let mut frames = Vec::new();
    for n in &names {
        let Some((id, rest)) = n.split_once("_flow.") else {
            continue;
        };
        if !matches!(rest, "png" | "txt") {
            continue;
        }
        let disp = names
            .iter()
            .find(|m| {
                m.strip_prefix(id)
                    .and_then(|r| r.strip_prefix("_disparity."))
                    .is_some_and(|x| x == "png" || x == "txt")
            })
            .ok_or_else(|| {
                CliError::Data(Error::InvalidInput(format!(
                    "frame {id} has no disparity file"
                )))
            })?;
        frames.push((id.to_string(), dir.join(n), dir.join(disp)));
    }
    if frames.is_empty() {
        return Err(CliError::Data(Error::InvalidInput(format!(
            "no NNNNNN_flow.* files in {}",
            dir.display()
        ))));
    }
    Ok(frames)
}

fn cmd_run_sequence(a: &RunSequenceArgs) -> Result<Report, CliError> {
    let rig = load(&a.calib, io::read_calibration)?;
    if !a.dir.is_dir() {
        return Err(CliError::Usage(format!(
            "not a directory: {}",
            a.dir.display()
        )));
    }
    let frames = sequence_frames(&a.dir)?;
    let cfg = a.ransac.config();
    let mut twists = Vec::with_capacity(frames.len());
    let mut fractions = Vec::with_capacity(frames.len());
    for (id, flow_path, disp_path) in &frames {
        let flow: FlowField = data(io::read_flow(flow_path))?;
        let disp = data(io::read_disparity(disp_path))?;
        check_dims("flow", flow.dims(), &rig)?;
        check_dims("disparity", disp.dims(), &rig)?;
        let est = estimate_pose_ransac(&rig, &flow, &disp, &cfg).map_err(|e| {
            classify(match e {
                Error::EstimationFailed(m) => Error::EstimationFailed(format!("frame {id}: {m}")),
                other => other,
            })
        })?;
        twists.push(est.twist);
        fractions.push(est.inlier_fraction);
    }
    let traj = compute(integrate_trajectory(&twists))?;
    data(io::write_poses(&a.out, &traj))?;
    if let Some(p) = &a.twists_out {
        let s: String = twists.iter().map(full_precision_twist).collect();
        data(io::write_atomic(p, s.as_bytes()))?;
    }
    let mut r = Report::new();
    r.int("frames", frames.len());
    r.int("poses", traj.len());
    r.num(
        "mean_inlier_fraction",
        crate::sum::compensated_sum(fractions.iter().copied()) / fractions.len() as f64,
    );
    r.num(
        "min_inlier_fraction",
        fractions.iter().copied().fold(f64::INFINITY, f64::min),
    );
    Ok(r)
}

fn dispatch(cmd: &Command) -> Result<Report, CliError> {
    match cmd {
        Command::Estimate(a) => cmd_estimate(a),
        Command::PredictFlow(a) => cmd_predict_flow(a),
        Command::DisparityFromFlow(a) => cmd_disparity_from_flow(a),
        Command::Losses(a) => cmd_losses(a),
        Command::Synth(a) => cmd_synth(a),
        Command::EvalOdometry(a) => cmd_eval_odometry(a),
        Command::EvalFlow(a) => cmd_eval_flow(a),
        Command::EvalDepth(a) => cmd_eval_depth(a),
        Command::RunSequence(a) => cmd_run_sequence(a),
    }
}

/// Runs the CLI with explicit output streams; returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(&cli.command) {
        Ok(report) => {
            let _ = out.write_all(report.0.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let mut msg = e.message().replace('\n', " ");
            if e.code() == EXIT_USAGE {
                msg.push_str("\nrun `flowpose --help` for usage");
            }
            let _ = writeln!(err, "{msg}");
            e.code()
        }
    }
}

pub fn cli_main(argv: Vec<OsString>) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run(argv, &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    code
}
