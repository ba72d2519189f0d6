//! Command-line front end for the road-segmentation pipeline.
//!
//! One binary, batch subcommands: rasterize geometric weak labels, track
//! points between frames, render synthetic sequences, train, predict,
//! score, and draw overlays. Every run is seeded and single-threaded by
//! default, so identical inputs produce identical output bytes.
//!
//! Exit codes: 0 on success, 1 on a usage error (bad flags or arguments),
//! 2 on a data error (unreadable or inconsistent inputs).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use geoseg::geometry::{parse_calibration, CameraRig, RotationConvention, VehicleParams};
use geoseg::img::{GrayImage, RgbImage};
use geoseg::metrics::{iou, EvalResult};
use geoseg::net::{forward, load_checkpoint, save_checkpoint};
use geoseg::pipeline::{run_training, save_training_log, SequenceIndex, TrainConfig};
use geoseg::synthworld::{render_sequence, SceneSpec};
use geoseg::tracker::{
    forward_backward_filter, lk_track, read_pairs_csv, shi_tomasi, write_pairs_csv, LkParams,
    ShiTomasiParams, TrackStatus, TrackedPair, DEFAULT_FB_THRESHOLD,
};
use geoseg::weakmask::{rasterize_partial_mask, BinaryMask, Label, PartialMask};
use geoseg::with_thread_pool;

#[derive(Parser)]
#[command(
    name = "geoseg",
    version,
    about = "Self-supervised road segmentation from calibrated monocular video",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for parallel stages (1 keeps runs bit-reproducible).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the geometric weak-label mask for a calibrated camera
    GenMask(GenMaskArgs),
    /// Detect corners in one frame and track them into the next
    Track(TrackArgs),
    /// Render a synthetic drive sequence with ground-truth masks
    SynthGen(SynthGenArgs),
    /// Train the segmentation net on a dataset directory
    Train(TrainArgs),
    /// Write predicted road masks for every frame in a directory
    Predict(PredictArgs),
    /// Score predicted masks against ground-truth masks
    Eval(EvalArgs),
    /// Tint a frame with mask labels and draw tracked point pairs
    Overlay(OverlayArgs),
}

#[derive(Args)]
struct GenMaskArgs {
    /// Camera calibration JSON (intrinsic and extrinsic blocks)
    #[arg(long)]
    camera: PathBuf,
    /// Image size as WxH, e.g. 2048x1024
    #[arg(long, value_parser = parse_size)]
    size: (u32, u32),
    /// Output mask PNG (0 non-road, 128 ignore, 255 road)
    #[arg(long)]
    out: PathBuf,
    /// Vehicle width in meters
    #[arg(long, default_value_t = VehicleParams::default().width)]
    vehicle_width: f64,
    /// Distance from the rear axle to the front bumper, meters
    #[arg(long, default_value_t = VehicleParams::default().front_bumper)]
    overhang: f64,
    /// Near edge of the road band, meters ahead of the bumper
    #[arg(long, default_value_t = 2.0)]
    near: f64,
    /// Far edge of the road band, meters ahead of the bumper
    #[arg(long, default_value_t = 5.0)]
    far: f64,
    /// Use the mounting angles directly as a world rotation instead of
    /// composing them with the vehicle-to-optical axis permutation
    #[arg(long)]
    raw_rotation: bool,
}

#[derive(Args)]
struct TrackArgs {
    /// Earlier frame PNG
    #[arg(long)]
    prev: PathBuf,
    /// Later frame PNG
    #[arg(long)]
    next: PathBuf,
    /// Output CSV (pu,pv,qu,qv,status)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ShiTomasiParams::default().max_corners)]
    max_corners: usize,
    /// Keep corners scoring at least this fraction of the best score
    #[arg(long, default_value_t = ShiTomasiParams::default().quality_level)]
    quality: f64,
    /// Minimum pixel distance between detected corners
    #[arg(long, default_value_t = ShiTomasiParams::default().min_distance)]
    min_distance: f64,
    /// Pyramid levels above full resolution
    #[arg(long, default_value_t = LkParams::default().levels)]
    levels: usize,
    /// Half-width of the tracking window, pixels
    #[arg(long, default_value_t = LkParams::default().window_radius)]
    window_radius: usize,
    /// Maximum forward-backward return error, pixels
    #[arg(long, default_value_t = DEFAULT_FB_THRESHOLD)]
    fb_threshold: f64,
}

#[derive(Args)]
struct SynthGenArgs {
    /// Scene description JSON
    #[arg(long)]
    spec: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory: frames, camera/, optional vehicle/
    #[arg(long)]
    data: PathBuf,
    /// Training config JSON; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Training log path (JSON lines); defaults to <out>.log.jsonl
    #[arg(long)]
    log: Option<PathBuf>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the consistency-loss weight
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    phase1_epochs: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    epochs_per_cycle: Option<usize>,
    #[arg(long)]
    pair_interval: Option<usize>,
    #[arg(long)]
    speed_threshold: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Train phase 2 on all valid pairs instead of mined hard pairs
    #[arg(long)]
    no_mining: bool,
    /// Re-mine hard pairs before every epoch instead of once per cycle
    #[arg(long)]
    mine_every_epoch: bool,
    /// Symmetrize the joint label distribution in the consistency term
    #[arg(long)]
    symmetrize_joint: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    ckpt: PathBuf,
    /// Directory of frame PNGs
    #[arg(long)]
    data: PathBuf,
    /// Output directory for binary mask PNGs (0 non-road, 255 road)
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted binary mask PNGs
    #[arg(long)]
    pred_dir: PathBuf,
    /// Directory of ground-truth binary mask PNGs with matching names
    #[arg(long)]
    gt_dir: PathBuf,
    /// Output report JSON
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct OverlayArgs {
    /// Frame PNG to draw over
    #[arg(long)]
    frame: PathBuf,
    /// Mask PNG: 0 non-road, 128 ignore, 255 road
    #[arg(long)]
    mask: PathBuf,
    /// Optional tracked-pair CSV from `track`
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Output PNG
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |v: &str, name: &str| {
        v.parse::<u32>()
            .map_err(|_| format!("bad {name} in size {s:?}"))
            .and_then(|n| {
                if n == 0 {
                    Err(format!("{name} must be nonzero in size {s:?}"))
                } else {
                    Ok(n)
                }
            })
    };
    Ok((parse(w, "width")?, parse(h, "height")?))
}

/// Parses arguments and runs one subcommand, translating failures into the
/// documented exit codes.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let code = match err.kind() {
                DisplayHelp | DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    let outcome = with_thread_pool(cli.threads, || dispatch(cli.command));
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenMask(args) => gen_mask(&args),
        Command::Track(args) => track(&args),
        Command::SynthGen(args) => synth_gen(&args),
        Command::Train(args) => train(&args),
        Command::Predict(args) => predict(&args),
        Command::Eval(args) => eval(&args),
        Command::Overlay(args) => overlay(&args),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn gen_mask(args: &GenMaskArgs) -> Result<()> {
    let text = read_text(&args.camera)?;
    let (width, height) = args.size;
    let (intrinsics, extrinsics) = parse_calibration(&text, width, height)
        .with_context(|| format!("parsing {}", args.camera.display()))?;
    let convention = if args.raw_rotation {
        RotationConvention::Raw
    } else {
        RotationConvention::VehicleToOptical
    };
    let rig = CameraRig::new(intrinsics, extrinsics, convention)?;
    let vehicle = VehicleParams {
        width: args.vehicle_width,
        front_bumper: args.overhang,
    };
    let mask = rasterize_partial_mask(&rig, &vehicle, args.near, args.far)?;
    mask.save_png(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let (road, nonroad, ignore) = mask.counts();
    eprintln!("wrote {}: {road} road, {nonroad} non-road, {ignore} ignore", args.out.display());
    Ok(())
}

fn track(args: &TrackArgs) -> Result<()> {
    let prev = GrayImage::load_png(&args.prev)
        .with_context(|| format!("reading {}", args.prev.display()))?;
    let next = GrayImage::load_png(&args.next)
        .with_context(|| format!("reading {}", args.next.display()))?;
    let st = ShiTomasiParams {
        max_corners: args.max_corners,
        quality_level: args.quality,
        min_distance: args.min_distance,
        ..ShiTomasiParams::default()
    };
    let lk = LkParams {
        levels: args.levels,
        window_radius: args.window_radius,
        ..LkParams::default()
    };
    let corners = shi_tomasi(&prev, &st)?;
    let points: Vec<(f64, f64)> = corners.iter().map(|c| (c.u, c.v)).collect();
    let tracked = lk_track(&prev, &next, &points, &lk)?;
    let filtered = forward_backward_filter(&tracked, &prev, &next, args.fb_threshold, &lk)?;
    write_pairs_csv(&args.out, &filtered)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let valid = filtered
        .iter()
        .filter(|t| t.status == TrackStatus::Valid)
        .count();
    eprintln!(
        "wrote {}: {} corners, {} valid tracks",
        args.out.display(),
        corners.len(),
        valid
    );
    Ok(())
}

fn synth_gen(args: &SynthGenArgs) -> Result<()> {
    let spec =
        SceneSpec::load(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    render_sequence(&spec, &args.out)
        .with_context(|| format!("rendering into {}", args.out.display()))?;
    eprintln!("wrote {} frames to {}", spec.frame_count, args.out.display());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            TrainConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.phase1_epochs {
        cfg.phase1_epochs = v;
    }
    if let Some(v) = args.cycles {
        cfg.cycles = v;
    }
    if let Some(v) = args.epochs_per_cycle {
        cfg.epochs_per_cycle = v;
    }
    if let Some(v) = args.pair_interval {
        cfg.pair_interval = v;
    }
    if let Some(v) = args.speed_threshold {
        cfg.speed_threshold = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if args.no_mining {
        cfg.mining_enabled = false;
    }
    if args.mine_every_epoch {
        cfg.mine_every_epoch = true;
    }
    if args.symmetrize_joint {
        cfg.symmetrize_joint = true;
    }
    cfg.validate()?;

    let index = SequenceIndex::load(&args.data)
        .with_context(|| format!("indexing {}", args.data.display()))?;
    let outcome = run_training(&index, &cfg)?;

    if outcome.selection.missing_speed > 0 {
        eprintln!(
            "warning: kept {} frame pairs with no speed record",
            outcome.selection.missing_speed
        );
    }
    for report in &outcome.reports {
        eprintln!(
            "cycle {}: tracked {} valid {} inconsistent {} retained {}",
            report.cycle, report.tracked, report.valid, report.inconsistent, report.retained
        );
    }

    save_checkpoint(&outcome.params, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        // Append rather than Path::with_extension: the checkpoint's own
        // extension is part of the documented <out>.log.jsonl default.
        let mut name = args.out.clone().into_os_string();
        name.push(".log.jsonl");
        PathBuf::from(name)
    });
    let mut logs = outcome.phase1_logs;
    logs.extend(outcome.phase2_logs);
    save_training_log(&log_path, &logs)
        .with_context(|| format!("writing {}", log_path.display()))?;
    eprintln!(
        "wrote {} and {} ({} epochs logged)",
        args.out.display(),
        log_path.display(),
        logs.len()
    );
    Ok(())
}

/// PNG basenames directly inside `dir`, shortest-then-lexicographic so both
/// zero-padded and plain integer ids sort in temporal order.
fn list_png_ids(dir: &Path) -> Result<Vec<String>> {
    let entries =
        std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let path = entry.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    if ids.is_empty() {
        bail!("no PNG files found in {}", dir.display());
    }
    ids.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(ids)
}

fn predict(args: &PredictArgs) -> Result<()> {
    let params = load_checkpoint(&args.ckpt)
        .with_context(|| format!("loading {}", args.ckpt.display()))?;
    let ids = list_png_ids(&args.data)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    for id in &ids {
        let src = args.data.join(format!("{id}.png"));
        let image =
            RgbImage::load_png(&src).with_context(|| format!("reading {}", src.display()))?;
        let logits = forward(&params, &image)
            .with_context(|| format!("running the net on {}", src.display()))?;
        let dst = args.out_dir.join(format!("{id}.png"));
        logits
            .to_binary_mask()
            .save_png(&dst)
            .with_context(|| format!("writing {}", dst.display()))?;
    }
    eprintln!("wrote {} masks to {}", ids.len(), args.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct PerImageReport {
    frame_id: String,
    iou: f64,
    #[serde(flatten)]
    counts: EvalResult,
}

#[derive(Serialize)]
struct EvalReport {
    n_images: usize,
    /// Road IoU of the summed pixel counts over all images.
    aggregate_iou: f64,
    /// Unweighted mean of the per-image road IoU values.
    mean_iou: f64,
    per_image: Vec<PerImageReport>,
}

fn eval(args: &EvalArgs) -> Result<()> {
    let ids = list_png_ids(&args.pred_dir)?;
    let mut per_image = Vec::with_capacity(ids.len());
    let mut counts = Vec::with_capacity(ids.len());
    for id in ids {
        let pred_path = args.pred_dir.join(format!("{id}.png"));
        let gt_path = args.gt_dir.join(format!("{id}.png"));
        let pred = BinaryMask::load_png(&pred_path)
            .with_context(|| format!("reading {}", pred_path.display()))?;
        let gt = BinaryMask::load_png(&gt_path)
            .with_context(|| format!("reading {}", gt_path.display()))?;
        let result = iou(&pred, &gt).with_context(|| format!("scoring frame {id}"))?;
        counts.push(result);
        per_image.push(PerImageReport {
            frame_id: id,
            iou: result.iou_road(),
            counts: result,
        });
    }
    let aggregate_iou = EvalResult::merged(counts).iou_road();
    let mean_iou = per_image.iter().map(|p| p.iou).sum::<f64>() / per_image.len() as f64;
    let report = EvalReport {
        n_images: per_image.len(),
        aggregate_iou,
        mean_iou,
        per_image,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&args.report, text)
        .with_context(|| format!("writing {}", args.report.display()))?;
    println!(
        "aggregate road IoU {aggregate_iou:.4} over {} images (mean per-image {mean_iou:.4})",
        report.n_images
    );
    Ok(())
}

/// Blend weight of the label tint over the original pixel.
pub const OVERLAY_ALPHA: f64 = 0.4;
/// Tint for road pixels (green).
pub const ROAD_TINT: [f64; 3] = [0.0, 1.0, 0.0];
/// Tint for non-road pixels (red).
pub const NONROAD_TINT: [f64; 3] = [1.0, 0.0, 0.0];
/// Segment color for valid tracked pairs (yellow).
pub const VALID_TRACK_COLOR: [f64; 3] = [1.0, 1.0, 0.0];
/// Segment color for label-inconsistent pairs (magenta).
pub const INCONSISTENT_TRACK_COLOR: [f64; 3] = [1.0, 0.0, 1.0];

fn draw_segment(image: &mut RgbImage, p: (f64, f64), q: (f64, f64), color: [f64; 3]) {
    if !(p.0.is_finite() && p.1.is_finite() && q.0.is_finite() && q.1.is_finite()) {
        return;
    }
    let steps = ((q.0 - p.0).abs().max((q.1 - p.1).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (p.0 + t * (q.0 - p.0)).round() as i64;
        let y = (p.1 + t * (q.1 - p.1)).round() as i64;
        if x >= 0 && y >= 0 && (x as usize) < image.width && (y as usize) < image.height {
            image.set_pixel(x as usize, y as usize, color);
        }
    }
}

/// Tints road pixels green and non-road pixels red (alpha 0.4), leaves
/// ignore pixels untouched, then draws tracked pairs as line segments:
/// valid pairs yellow, label-inconsistent pairs magenta. Pairs with any
/// other status have no meaningful endpoint and are skipped.
pub fn overlay_image(
    frame: &RgbImage,
    mask: &PartialMask,
    pairs: Option<&[TrackedPair]>,
) -> Result<RgbImage> {
    if frame.width != mask.width || frame.height != mask.height {
        bail!(
            "mask size {}x{} does not match frame size {}x{}",
            mask.width,
            mask.height,
            frame.width,
            frame.height
        );
    }
    let mut out = frame.clone();
    for y in 0..out.height {
        for x in 0..out.width {
            let tint = match mask.label(x, y) {
                Label::Road => ROAD_TINT,
                Label::NonRoad => NONROAD_TINT,
                Label::Ignore => continue,
            };
            let px = out.pixel(x, y);
            let mut blended = [0.0; 3];
            for c in 0..3 {
                blended[c] = (1.0 - OVERLAY_ALPHA) * px[c] + OVERLAY_ALPHA * tint[c];
            }
            out.set_pixel(x, y, blended);
        }
    }
    if let Some(pairs) = pairs {
        for pair in pairs {
            let color = match pair.status {
                TrackStatus::Valid => VALID_TRACK_COLOR,
                TrackStatus::Inconsistent => INCONSISTENT_TRACK_COLOR,
                _ => continue,
            };
            draw_segment(&mut out, pair.p, pair.q, color);
        }
    }
    Ok(out)
}

fn overlay(args: &OverlayArgs) -> Result<()> {
    let frame = RgbImage::load_png(&args.frame)
        .with_context(|| format!("reading {}", args.frame.display()))?;
    let mask = PartialMask::load_png(&args.mask)
        .with_context(|| format!("reading {}", args.mask.display()))?;
    let pairs = match &args.pairs {
        Some(path) => Some(
            read_pairs_csv(path).with_context(|| format!("reading {}", path.display()))?,
        ),
        None => None,
    };
    let out = overlay_image(&frame, &mask, pairs.as_deref())?;
    out.save_png(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use geoseg::weakmask::Label;

    #[test]
    fn size_strings_parse_or_fail_loudly() {
        assert_eq!(parse_size("2048x1024").unwrap(), (2048, 1024));
        assert_eq!(parse_size("64X32").unwrap(), (64, 32));
        assert!(parse_size("64").is_err());
        assert!(parse_size("0x32").is_err());
        assert!(parse_size("64x-3").is_err());
        assert!(parse_size("wide x tall").is_err());
    }

    #[test]
    fn ignore_labels_leave_the_frame_untouched() {
        let frame = RgbImage::from_fn(8, 6, |x, y| {
            [x as f64 / 8.0, y as f64 / 6.0, 0.5]
        });
        let mask = PartialMask { width: 8, height: 6, labels: vec![Label::Ignore; 48] };
        let out = overlay_image(&frame, &mask, None).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn road_tint_never_reduces_the_green_channel() {
        let frame = RgbImage::from_fn(8, 6, |x, y| {
            [0.3, (x as f64 * 31.7 + y as f64 * 17.3).fract(), 0.9]
        });
        let mask = PartialMask { width: 8, height: 6, labels: vec![Label::Road; 48] };
        let out = overlay_image(&frame, &mask, None).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                assert!(out.pixel(x, y)[1] >= frame.pixel(x, y)[1]);
                assert!(out.pixel(x, y)[0] < frame.pixel(x, y)[0]);
            }
        }
    }

    #[test]
    fn mismatched_mask_sizes_are_rejected() {
        let frame = RgbImage::zeros(8, 6);
        let mask = PartialMask { width: 6, height: 8, labels: vec![Label::Road; 48] };
        assert!(overlay_image(&frame, &mask, None).is_err());
    }

    #[test]
    fn segments_draw_both_endpoints_and_stay_in_bounds() {
        let mut img = RgbImage::zeros(16, 16);
        draw_segment(&mut img, (2.0, 3.0), (12.0, 9.0), [1.0, 1.0, 0.0]);
        assert_eq!(img.pixel(2, 3), [1.0, 1.0, 0.0]);
        assert_eq!(img.pixel(12, 9), [1.0, 1.0, 0.0]);
        // Off-image segments must not panic and must leave the image alone.
        let before = img.clone();
        draw_segment(&mut img, (-40.0, -2.0), (-1.0, -30.0), [1.0, 0.0, 0.0]);
        assert_eq!(img, before);
        draw_segment(&mut img, (14.0, 14.0), (40.0, 22.0), [1.0, 0.0, 1.0]);
        assert_eq!(img.pixel(14, 14), [1.0, 0.0, 1.0]);
    }

    #[test]
    fn inconsistent_pairs_get_their_own_color() {
        let frame = RgbImage::zeros(16, 8);
        let mask = PartialMask { width: 16, height: 8, labels: vec![Label::Ignore; 128] };
        let pairs = vec![
            TrackedPair {
                p: (1.0, 1.0),
                q: (6.0, 1.0),
                status: TrackStatus::Valid,
            },
            TrackedPair {
                p: (1.0, 5.0),
                q: (6.0, 5.0),
                status: TrackStatus::Inconsistent,
            },
            TrackedPair {
                p: (1.0, 6.0),
                q: (6.0, 6.0),
                status: TrackStatus::Diverged,
            },
        ];
        let out = overlay_image(&frame, &mask, Some(&pairs)).unwrap();
        assert_eq!(out.pixel(3, 1), VALID_TRACK_COLOR);
        assert_eq!(out.pixel(3, 5), INCONSISTENT_TRACK_COLOR);
        // Failed tracks are not drawn.
        assert_eq!(out.pixel(3, 6), [0.0, 0.0, 0.0]);
    }
}
