//! Two-phase training orchestration.
//!
//! Phase 1 trains the network on the geometric weak labels alone: one Adam
//! step per frame, shuffled each epoch with a seeded generator. Phase 2
//! alternates between extracting temporally inconsistent point pairs with
//! the current model (hard-pair mining) and training on the joint objective
//! (averaged geometric terms plus the tracked-pair consistency term) over
//! frame pairs selected at a fixed interval, skipping frames where the
//! vehicle was too slow for tracked motion to mean anything.
//!
//! Determinism is a contract here, not a nicety: a full two-phase run with
//! the same seed reproduces parameters and logs bit for bit, which is what
//! makes the consistency-off ablation (`lambda = 0` must equal pure
//! geometric training on the same schedule, bitwise) testable at all.
//! The epoch definition is one pass over the training units of the phase:
//! frames in phase 1, selected frame pairs in phase 2. Mining runs at the
//! start of every cycle; `mine_every_epoch` switches to re-mining before
//! every epoch for the more aggressive schedule.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{parse_calibration, CameraRig, GeometryError, RotationConvention, VehicleParams};
use crate::img::{GrayImage, ImgError, RgbImage};
use crate::losses::{final_loss, geometric_loss, LogitMap, LossError, LossOptions};
use crate::metrics::labels_disagree;
use crate::net::{
    adam_step, backward, forward, AdamParams, AdamState, NetError, SegNetParams,
};
use crate::tracker::{
    forward_backward_filter, lk_track, shi_tomasi, LkParams, ShiTomasiParams, TrackError,
    TrackStatus, TrackedPair,
};
use crate::weakmask::{rasterize_partial_mask, MaskError, PartialMask};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid training config: {reason}")]
    InvalidConfig { reason: String },
    #[error("no frames found in {dir}")]
    NoFrames { dir: String },
    #[error("no frame pairs to train on (after interval and speed filtering)")]
    NoPairs,
    #[error("frame {frame_id} has invalid speed {speed}")]
    BadSpeed { frame_id: String, speed: f64 },
    #[error("malformed JSON in {path}: {source}")]
    MalformedJson {
        path: String,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Img(#[from] ImgError),
    #[error("i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

/// One frame of a drive sequence as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub image_path: PathBuf,
    pub calibration_path: PathBuf,
    /// Vehicle speed in m/s, when telemetry exists for the frame.
    pub speed: Option<f64>,
}

/// A time-ordered drive sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceIndex {
    pub root: PathBuf,
    pub frames: Vec<FrameRecord>,
}

#[derive(Deserialize)]
struct SpeedFile {
    speed: f64,
}

impl SequenceIndex {
    /// Scans a dataset directory: `<dir>/<frame_id>.png` frames with
    /// `camera/<frame_id>.json` calibrations and optional
    /// `vehicle/<frame_id>.json` speed records. Frames are ordered by id,
    /// shorter ids first, so both zero-padded and plain integer ids come
    /// out in temporal order.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let mut ids: Vec<String> = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            let path = entry.path();
            let is_png = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if !is_png {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
        if ids.is_empty() {
            return Err(PipelineError::NoFrames {
                dir: dir.display().to_string(),
            });
        }
        ids.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

        let mut frames = Vec::with_capacity(ids.len());
        for id in ids {
            let speed_path = dir.join("vehicle").join(format!("{id}.json"));
            let speed = if speed_path.exists() {
                let text = std::fs::read_to_string(&speed_path)?;
                let parsed: SpeedFile = serde_json::from_str(&text).map_err(|source| {
                    PipelineError::MalformedJson {
                        path: speed_path.display().to_string(),
                        source,
                    }
                })?;
                if !(parsed.speed >= 0.0) {
                    return Err(PipelineError::BadSpeed {
                        frame_id: id.clone(),
                        speed: parsed.speed,
                    });
                }
                Some(parsed.speed)
            } else {
                None
            };
            frames.push(FrameRecord {
                image_path: dir.join(format!("{id}.png")),
                calibration_path: dir.join("camera").join(format!("{id}.json")),
                frame_id: id,
                speed,
            });
        }
        Ok(Self {
            root: dir.to_path_buf(),
            frames,
        })
    }
}

/// Every tunable of the training run; flat JSON, all fields optional with
/// these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub phase1_epochs: usize,
    pub cycles: usize,
    pub epochs_per_cycle: usize,
    /// Frame-pair spacing k: pairs are (i, i+k) for i divisible by k.
    pub pair_interval: usize,
    /// Minimum vehicle speed (m/s) for a frame to enter a pair.
    pub speed_threshold: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Weight of the consistency term in the phase-2 objective.
    pub lambda: f64,
    pub mining_enabled: bool,
    /// Re-mine hard pairs before every epoch instead of once per cycle.
    pub mine_every_epoch: bool,
    /// Symmetrize the joint label distribution in the consistency term.
    pub symmetrize_joint: bool,
    pub vehicle_width: f64,
    pub front_bumper: f64,
    /// Weak-label road band, meters ahead of the front bumper.
    pub mask_near_m: f64,
    pub mask_far_m: f64,
    pub max_corners: usize,
    pub corner_quality: f64,
    pub corner_min_distance: f64,
    pub lk_window_radius: usize,
    pub lk_levels: usize,
    pub fb_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phase1_epochs: 100,
            cycles: 10,
            epochs_per_cycle: 100,
            pair_interval: 5,
            speed_threshold: 2.0,
            learning_rate: AdamParams::default().lr,
            seed: 0,
            lambda: 1.0,
            mining_enabled: true,
            mine_every_epoch: false,
            symmetrize_joint: false,
            vehicle_width: VehicleParams::default().width,
            front_bumper: VehicleParams::default().front_bumper,
            mask_near_m: 2.0,
            mask_far_m: 5.0,
            max_corners: ShiTomasiParams::default().max_corners,
            corner_quality: ShiTomasiParams::default().quality_level,
            corner_min_distance: ShiTomasiParams::default().min_distance,
            lk_window_radius: LkParams::default().window_radius,
            lk_levels: LkParams::default().levels,
            fb_threshold: crate::tracker::DEFAULT_FB_THRESHOLD,
        }
    }
}

impl TrainConfig {
    /// Rejects out-of-range settings with a message naming the field.
    /// `phase1_epochs` and `cycles` may be zero (skip that phase).
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |reason: String| Err(PipelineError::InvalidConfig { reason });
        if self.pair_interval == 0 {
            return fail("pair_interval must be at least 1".into());
        }
        if self.epochs_per_cycle == 0 {
            return fail("epochs_per_cycle must be at least 1".into());
        }
        if !(self.speed_threshold >= 0.0) {
            return fail(format!(
                "speed_threshold must be nonnegative, got {}",
                self.speed_threshold
            ));
        }
        if !(self.learning_rate > 0.0) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.lambda >= 0.0) {
            return fail(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(self.vehicle_width > 0.0) {
            return fail(format!(
                "vehicle_width must be positive, got {}",
                self.vehicle_width
            ));
        }
        if !(self.front_bumper >= 0.0) {
            return fail(format!(
                "front_bumper must be nonnegative, got {}",
                self.front_bumper
            ));
        }
        if !(self.mask_near_m > 0.0 && self.mask_far_m > self.mask_near_m) {
            return fail(format!(
                "weak-label band must satisfy 0 < near < far, got near {} far {}",
                self.mask_near_m, self.mask_far_m
            ));
        }
        if self.max_corners == 0 {
            return fail("max_corners must be at least 1".into());
        }
        if !(self.corner_quality > 0.0 && self.corner_quality <= 1.0) {
            return fail(format!(
                "corner_quality must be in (0, 1], got {}",
                self.corner_quality
            ));
        }
        if !(self.corner_min_distance >= 0.0) {
            return fail(format!(
                "corner_min_distance must be nonnegative, got {}",
                self.corner_min_distance
            ));
        }
        if self.lk_window_radius == 0 {
            return fail("lk_window_radius must be at least 1".into());
        }
        if !(self.fb_threshold >= 0.0) {
            return fail(format!(
                "fb_threshold must be nonnegative, got {}",
                self.fb_threshold
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|source| PipelineError::MalformedJson {
                path: "<config>".into(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|source| PipelineError::MalformedJson {
                path: path.display().to_string(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn vehicle(&self) -> VehicleParams {
        VehicleParams {
            width: self.vehicle_width,
            front_bumper: self.front_bumper,
        }
    }

    fn shi_tomasi(&self) -> ShiTomasiParams {
        ShiTomasiParams {
            max_corners: self.max_corners,
            quality_level: self.corner_quality,
            min_distance: self.corner_min_distance,
            ..ShiTomasiParams::default()
        }
    }

    fn lk(&self) -> LkParams {
        LkParams {
            levels: self.lk_levels,
            window_radius: self.lk_window_radius,
            ..LkParams::default()
        }
    }

    fn loss_options(&self) -> LossOptions {
        LossOptions {
            lambda: self.lambda,
            symmetrize: self.symmetrize_joint,
        }
    }
}

/// Frame pairs chosen for phase 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSelection {
    /// Indices into the sequence: (earlier frame, later frame).
    pub pairs: Vec<(usize, usize)>,
    /// Pairs kept although at least one frame had no speed record.
    pub missing_speed: usize,
}

/// Picks frame pairs (i, i+k) for i divisible by k, keeping a pair only
/// when both frames moved at least `speed_threshold`. A frame without a
/// speed record passes the filter; such pairs are counted separately so
/// callers can warn.
pub fn select_pairs(index: &SequenceIndex, cfg: &TrainConfig) -> PairSelection {
    let k = cfg.pair_interval;
    let mut pairs = Vec::new();
    let mut missing_speed = 0;
    let n = index.frames.len();
    let mut i = 0;
    while i + k < n {
        let (a, b) = (&index.frames[i], &index.frames[i + k]);
        let fast = |f: &FrameRecord| f.speed.is_none_or(|s| s >= cfg.speed_threshold);
        if fast(a) && fast(b) {
            if a.speed.is_none() || b.speed.is_none() {
                missing_speed += 1;
            }
            pairs.push((i, i + k));
        }
        i += k;
    }
    PairSelection {
        pairs,
        missing_speed,
    }
}

/// A frame loaded and preprocessed for training.
#[derive(Debug, Clone)]
pub struct TrainingFrame {
    pub frame_id: String,
    pub image: RgbImage,
    pub gray: GrayImage,
    pub mask: PartialMask,
}

/// Loads one frame: image, calibration, weak-label mask, tracking image.
pub fn load_training_frame(
    record: &FrameRecord,
    cfg: &TrainConfig,
) -> Result<TrainingFrame, PipelineError> {
    let image = RgbImage::load_png(&record.image_path)?;
    let text = std::fs::read_to_string(&record.calibration_path)?;
    let (intr, extr) = parse_calibration(&text, image.width as u32, image.height as u32)?;
    let rig = CameraRig::new(intr, extr, RotationConvention::VehicleToOptical)?;
    let mask = rasterize_partial_mask(&rig, &cfg.vehicle(), cfg.mask_near_m, cfg.mask_far_m)?;
    let gray = image.to_gray();
    Ok(TrainingFrame {
        frame_id: record.frame_id.clone(),
        image,
        gray,
        mask,
    })
}

/// Loads the whole sequence in index order.
pub fn load_training_frames(
    index: &SequenceIndex,
    cfg: &TrainConfig,
) -> Result<Vec<TrainingFrame>, PipelineError> {
    index
        .frames
        .par_iter()
        .map(|record| load_training_frame(record, cfg))
        .collect()
}

/// One log record per trained epoch; serialized as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1 or 2.
    pub phase: u8,
    /// Phase-2 cycle index; null in phase 1.
    pub cycle: Option<usize>,
    /// Epoch index within the phase (phase 1) or cycle (phase 2).
    pub epoch: usize,
    /// Mean per-step loss over the epoch, in step order.
    pub loss: f64,
    /// Point pairs in the active training set (0 in phase 1).
    pub n_pairs: usize,
    /// Inconsistent pairs found by the most recent mining pass.
    pub n_inconsistent: usize,
}

/// Writes one JSON object per line.
pub fn save_training_log(path: &Path, logs: &[EpochLog]) -> Result<(), PipelineError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for log in logs {
        serde_json::to_writer(&mut out, log).map_err(|source| PipelineError::MalformedJson {
            path: path.display().to_string(),
            source,
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_training_log(path: &Path) -> Result<Vec<EpochLog>, PipelineError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut logs = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        logs.push(
            serde_json::from_str(&line).map_err(|source| PipelineError::MalformedJson {
                path: path.display().to_string(),
                source,
            })?,
        );
    }
    Ok(logs)
}

/// Seed salt separating the phase-1 shuffle stream from everything else.
pub const PHASE1_SHUFFLE_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
/// Seed salt for the phase-2 shuffle stream.
pub const PHASE2_SHUFFLE_SALT: u64 = 0x2545_F491_4F6C_DD1D;

/// Phase 1: geometric training only. One Adam step per frame, frames
/// shuffled every epoch by a generator seeded from `cfg.seed`; the log gets
/// one record per epoch with the mean per-step loss. `phase1_epochs = 0`
/// leaves the model untouched and returns an empty log.
pub fn train_phase1(
    params: &mut SegNetParams,
    adam: &mut AdamState,
    frames: &[TrainingFrame],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, PipelineError> {
    cfg.validate()?;
    let mut logs = Vec::new();
    if cfg.phase1_epochs == 0 {
        return Ok(logs);
    }
    if frames.is_empty() {
        return Err(PipelineError::NoFrames {
            dir: "<in-memory frame list>".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ PHASE1_SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    for epoch in 0..cfg.phase1_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let frame = &frames[i];
            let logits = forward(params, &frame.image)?;
            let (value, grad) = geometric_loss(&logits, &frame.mask)?;
            let grads = backward(params, &frame.image, &grad)?;
            adam_step(params, &grads, adam);
            loss_sum += value;
        }
        logs.push(EpochLog {
            phase: 1,
            cycle: None,
            epoch,
            loss: loss_sum / order.len() as f64,
            n_pairs: 0,
            n_inconsistent: 0,
        });
    }
    Ok(logs)
}

/// The VALID tracked pairs whose predicted labels differ between the two
/// frames under the current model; always a subset of the input.
pub fn mine_inconsistent(
    logits_a: &LogitMap,
    logits_b: &LogitMap,
    tracked: &[TrackedPair],
) -> Vec<TrackedPair> {
    tracked
        .iter()
        .filter(|t| t.status == TrackStatus::Valid && labels_disagree(logits_a, logits_b, t.p, t.q))
        .copied()
        .collect()
}

/// Per-cycle mining statistics. `retained` is the point-pair set actually
/// trained on: the inconsistent set when mining is enabled and found
/// anything, otherwise every VALID pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningReport {
    pub cycle: usize,
    /// All tracked point pairs over the selected frame pairs.
    pub tracked: usize,
    /// Pairs that tracked forward and survived the backward check.
    pub valid: usize,
    /// VALID pairs with disagreeing predicted labels.
    pub inconsistent: usize,
    /// Size of the active training set after mining and fallback.
    pub retained: usize,
}

/// Tracks every selected frame pair once: corner detection on the earlier
/// frame, pyramidal tracking into the later one, forward-backward
/// filtering. Tracking is model-independent, so phase 2 caches this across
/// cycles.
pub fn track_frame_pairs(
    frames: &[TrainingFrame],
    frame_pairs: &[(usize, usize)],
    cfg: &TrainConfig,
) -> Result<Vec<Vec<TrackedPair>>, PipelineError> {
    let st = cfg.shi_tomasi();
    let lk = cfg.lk();
    frame_pairs
        .par_iter()
        .map(|&(ia, ib)| {
            let prev = &frames[ia].gray;
            let next = &frames[ib].gray;
            let corners = shi_tomasi(prev, &st)?;
            let points: Vec<(f64, f64)> = corners.iter().map(|c| (c.u, c.v)).collect();
            let tracked = lk_track(prev, next, &points, &lk)?;
            Ok(forward_backward_filter(
                &tracked,
                prev,
                next,
                cfg.fb_threshold,
                &lk,
            )?)
        })
        .collect()
}

/// Outcome of one mining pass: the report counts and the per-frame-pair
/// active point sets.
struct MiningPass {
    tracked: usize,
    valid: usize,
    inconsistent: usize,
    retained: usize,
    active: Vec<Vec<TrackedPair>>,
}

fn mine_pass(
    params: &SegNetParams,
    frames: &[TrainingFrame],
    frame_pairs: &[(usize, usize)],
    tracked: &[Vec<TrackedPair>],
    cfg: &TrainConfig,
) -> Result<MiningPass, PipelineError> {
    // Logits once per distinct frame in the pair list.
    let mut logits: Vec<Option<LogitMap>> = vec![None; frames.len()];
    for &(ia, ib) in frame_pairs {
        for i in [ia, ib] {
            if logits[i].is_none() {
                logits[i] = Some(forward(params, &frames[i].image)?);
            }
        }
    }
    let map = |i: usize| logits[i].as_ref().expect("logits computed above");

    let mut total_tracked = 0;
    let mut total_valid = 0;
    let mut total_inconsistent = 0;
    let mut valid_sets = Vec::with_capacity(frame_pairs.len());
    let mut hard_sets = Vec::with_capacity(frame_pairs.len());
    for (pi, &(ia, ib)) in frame_pairs.iter().enumerate() {
        let set = &tracked[pi];
        total_tracked += set.len();
        let valid: Vec<TrackedPair> = set
            .iter()
            .filter(|t| t.status == TrackStatus::Valid)
            .copied()
            .collect();
        total_valid += valid.len();
        let hard = mine_inconsistent(map(ia), map(ib), &valid);
        total_inconsistent += hard.len();
        valid_sets.push(valid);
        hard_sets.push(hard);
    }
    // Mining off trains on everything VALID; so does the fallback when no
    // inconsistency is left anywhere (keeps the consistency signal alive).
    let active = if cfg.mining_enabled && total_inconsistent > 0 {
        hard_sets
    } else {
        valid_sets
    };
    let retained = active.iter().map(Vec::len).sum();
    Ok(MiningPass {
        tracked: total_tracked,
        valid: total_valid,
        inconsistent: total_inconsistent,
        retained,
        active,
    })
}

/// Phase 2: alternating mining and joint training.
///
/// Per cycle: mine hard pairs with the current model (see
/// [`MiningReport`]), then run `epochs_per_cycle` epochs over the selected
/// frame pairs, one Adam step per pair on the joint objective. Stops early
/// once the inconsistent fraction of VALID pairs stays below 1% for two
/// consecutive mining passes at cycle granularity (the deciding pass is
/// still recorded in the report list).
pub fn train_phase2(
    params: &mut SegNetParams,
    adam: &mut AdamState,
    frames: &[TrainingFrame],
    frame_pairs: &[(usize, usize)],
    cfg: &TrainConfig,
) -> Result<(Vec<MiningReport>, Vec<EpochLog>), PipelineError> {
    cfg.validate()?;
    if frame_pairs.is_empty() {
        return Err(PipelineError::NoPairs);
    }
    let tracked = track_frame_pairs(frames, frame_pairs, cfg)?;
    let opts = cfg.loss_options();
    let mut reports = Vec::new();
    let mut logs = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ PHASE2_SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..frame_pairs.len()).collect();
    let mut consecutive_low = 0;

    for cycle in 0..cfg.cycles {
        let mut pass = mine_pass(params, frames, frame_pairs, &tracked, cfg)?;
        reports.push(MiningReport {
            cycle,
            tracked: pass.tracked,
            valid: pass.valid,
            inconsistent: pass.inconsistent,
            retained: pass.retained,
        });
        let fraction = if pass.valid == 0 {
            0.0
        } else {
            pass.inconsistent as f64 / pass.valid as f64
        };
        if fraction < 0.01 {
            consecutive_low += 1;
        } else {
            consecutive_low = 0;
        }
        if consecutive_low >= 2 {
            break;
        }

        for epoch in 0..cfg.epochs_per_cycle {
            if cfg.mine_every_epoch && epoch > 0 {
                pass = mine_pass(params, frames, frame_pairs, &tracked, cfg)?;
            }
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for &pi in &order {
                let (ia, ib) = frame_pairs[pi];
                let point_pairs: Vec<((f64, f64), (f64, f64))> =
                    pass.active[pi].iter().map(|t| (t.p, t.q)).collect();
                let la = forward(params, &frames[ia].image)?;
                let lb = forward(params, &frames[ib].image)?;
                let out = final_loss(
                    &la,
                    &lb,
                    &frames[ia].mask,
                    &frames[ib].mask,
                    &point_pairs,
                    &opts,
                )?;
                let mut grads = backward(params, &frames[ia].image, &out.grad_a)?;
                grads.add_assign(&backward(params, &frames[ib].image, &out.grad_b)?);
                adam_step(params, &grads, adam);
                loss_sum += out.value;
            }
            logs.push(EpochLog {
                phase: 2,
                cycle: Some(cycle),
                epoch,
                loss: loss_sum / order.len() as f64,
                n_pairs: pass.retained,
                n_inconsistent: pass.inconsistent,
            });
        }
    }
    Ok((reports, logs))
}

/// Everything a full training run produces.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: SegNetParams,
    pub phase1_logs: Vec<EpochLog>,
    pub phase2_logs: Vec<EpochLog>,
    pub reports: Vec<MiningReport>,
    pub selection: PairSelection,
}

/// Runs the whole two-phase pipeline from a dataset directory: load frames,
/// phase 1 on every frame, pair selection, phase 2 on the selected pairs.
/// `cycles = 0` skips phase 2 entirely (and never raises
/// [`PipelineError::NoPairs`]).
pub fn run_training(index: &SequenceIndex, cfg: &TrainConfig) -> Result<TrainOutcome, PipelineError> {
    cfg.validate()?;
    let frames = load_training_frames(index, cfg)?;
    let mut params = SegNetParams::seeded(cfg.seed);
    let mut adam = AdamState::new(AdamParams {
        lr: cfg.learning_rate,
        ..AdamParams::default()
    });
    let phase1_logs = train_phase1(&mut params, &mut adam, &frames, cfg)?;
    let selection = select_pairs(index, cfg);
    let (reports, phase2_logs) = if cfg.cycles == 0 {
        (Vec::new(), Vec::new())
    } else {
        train_phase2(&mut params, &mut adam, &frames, &selection.pairs, cfg)?
    };
    Ok(TrainOutcome {
        params,
        phase1_logs,
        phase2_logs,
        reports,
        selection,
    })
}
