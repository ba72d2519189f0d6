//! Sparse feature tracking: Shi-Tomasi corner detection and pyramidal
//! Lucas-Kanade optical flow with a forward-backward consistency filter.
//!
//! Corners are local maxima of the minimum eigenvalue of the 3x3-Sobel
//! structure tensor summed over a square window. Flow is the classic
//! coarse-to-fine iterative scheme: a 5-tap Gaussian pyramid, per-level
//! normal equations built from bilinearly sampled gradients, and a flow
//! estimate that doubles as it descends to the next finer level.
//!
//! Every tracked point carries a status instead of being dropped: DIVERGED
//! when the normal equations were singular or the iteration hit its budget,
//! OUT_OF_BOUNDS when the track left the image, FB_REJECTED when re-tracking
//! the endpoint backward did not land on the start. Downstream consumers may
//! rely on VALID pairs having in-bounds endpoints in both frames. The
//! INCONSISTENT status never comes from this module; it exists so that
//! downstream evaluation can annotate pairs whose two segmentation labels
//! disagree while reusing the same CSV format.
//!
//! All operations are pure and order-stable: output pair order equals input
//! point order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::img::{bilinear, reflect101, GrayImage};

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("image is {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("images are {a_w}x{a_h} and {b_w}x{b_h}, need equal sizes")]
    SizeMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
    #[error("pairs file line {line}: {reason}")]
    BadCsv { line: usize, reason: String },
    #[error("pairs file i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

/// A detected corner: integer pixel position and its min-eigenvalue score
/// in intensity^2 per px^2 units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub u: f64,
    pub v: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Valid,
    Diverged,
    OutOfBounds,
    FbRejected,
    /// Downstream annotation only; see the module docs.
    Inconsistent,
}

impl fmt::Display for TrackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackStatus::Valid => "VALID",
            TrackStatus::Diverged => "DIVERGED",
            TrackStatus::OutOfBounds => "OUT_OF_BOUNDS",
            TrackStatus::FbRejected => "FB_REJECTED",
            TrackStatus::Inconsistent => "INCONSISTENT",
        })
    }
}

impl FromStr for TrackStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "VALID" => Ok(TrackStatus::Valid),
            "DIVERGED" => Ok(TrackStatus::Diverged),
            "OUT_OF_BOUNDS" => Ok(TrackStatus::OutOfBounds),
            "FB_REJECTED" => Ok(TrackStatus::FbRejected),
            "INCONSISTENT" => Ok(TrackStatus::Inconsistent),
            other => Err(format!("unknown track status {other:?}")),
        }
    }
}

/// A point correspondence between two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPair {
    /// Position in the earlier frame.
    pub p: (f64, f64),
    /// Position in the later frame (best estimate even for failed tracks).
    pub q: (f64, f64),
    pub status: TrackStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiTomasiParams {
    pub max_corners: usize,
    /// Keep corners scoring at least this fraction of the best score.
    pub quality_level: f64,
    /// Minimum pairwise distance between returned corners, pixels.
    pub min_distance: f64,
    /// Side length of the structure-tensor summation window, odd.
    pub window: usize,
}

impl Default for ShiTomasiParams {
    fn default() -> Self {
        Self {
            max_corners: 500,
            quality_level: 0.01,
            min_distance: 10.0,
            window: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    /// Pyramid reductions above the full-resolution base (the usual LK
    /// max-level convention): the coarsest image is downsampled `2^levels`
    /// times, so the capture range is roughly `2^levels * window / 3` px.
    /// The depth is reduced automatically when the tracking window would no
    /// longer fit the coarsest image.
    pub levels: usize,
    /// Half-width of the tracking window; the window is `2r + 1` square.
    pub window_radius: usize,
    pub max_iterations: usize,
    /// Convergence threshold on the per-iteration update norm, pixels.
    pub epsilon: f64,
    /// Singularity threshold on the window tensor's minimum eigenvalue.
    pub min_eigenvalue: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window_radius: 10,
            max_iterations: 30,
            epsilon: 0.01,
            min_eigenvalue: 1e-7,
        }
    }
}

/// Default forward-backward round-trip tolerance, pixels.
pub const DEFAULT_FB_THRESHOLD: f64 = 0.5;

/// 3x3 Sobel gradients normalized to intensity-per-pixel units (divided by
/// 8), reflect-101 borders.
fn sobel(image: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width, image.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let at = |x: i64, y: i64| -> f64 {
        image.data[reflect101(y, h as i64) * w + reflect101(x, w as i64)]
    };
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let idx = y as usize * w + x as usize;
            gx[idx] = ((at(x + 1, y - 1) - at(x - 1, y - 1))
                + 2.0 * (at(x + 1, y) - at(x - 1, y))
                + (at(x + 1, y + 1) - at(x - 1, y + 1)))
                / 8.0;
            gy[idx] = ((at(x - 1, y + 1) - at(x - 1, y - 1))
                + 2.0 * (at(x, y + 1) - at(x, y - 1))
                + (at(x + 1, y + 1) - at(x + 1, y - 1)))
                / 8.0;
        }
    }
    (gx, gy)
}

/// Minimum eigenvalue of `[[a, b], [b, c]]` through the determinant form
/// `2 det / (trace + discriminant)`, which returns an exact zero for the
/// rank-deficient tensors that flat regions and straight edges produce.
fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let denom = a + c + disc;
    if denom <= 0.0 {
        return 0.0;
    }
    2.0 * (a * c - b * b) / denom
}

/// Per-pixel min-eigenvalue score map of the windowed structure tensor.
fn score_map(image: &GrayImage, window: usize) -> Vec<f64> {
    let (w, h) = (image.width, image.height);
    let (gx, gy) = sobel(image);
    let r = (window / 2) as i64;
    let mut scores = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -r..=r {
                let ry = reflect101(y + dy, h as i64);
                for dx in -r..=r {
                    let rx = reflect101(x + dx, w as i64);
                    let i = ry * w + rx;
                    a += gx[i] * gx[i];
                    b += gx[i] * gy[i];
                    c += gy[i] * gy[i];
                }
            }
            scores[y as usize * w + x as usize] = min_eigenvalue(a, b, c);
        }
    }
    scores
}

/// Shi-Tomasi corner detection.
///
/// Returns local maxima of the min-eigenvalue map scoring at least
/// `quality_level` times the global maximum, greedily thinned to pairwise
/// distances of at least `min_distance`, best first, at most `max_corners`.
pub fn shi_tomasi(image: &GrayImage, params: &ShiTomasiParams) -> Result<Vec<Corner>, TrackError> {
    assert!(
        params.quality_level > 0.0 && params.quality_level <= 1.0,
        "quality_level must be in (0, 1]"
    );
    assert!(params.window % 2 == 1, "window must be odd");
    if image.width < params.window || image.height < params.window {
        return Err(TrackError::ImageTooSmall {
            width: image.width,
            height: image.height,
            min: params.window,
        });
    }
    let (w, h) = (image.width, image.height);
    let scores = score_map(image, params.window);
    let max_score = scores.iter().cloned().fold(0.0f64, f64::max);
    if max_score <= 0.0 {
        return Ok(Vec::new());
    }
    let threshold = params.quality_level * max_score;

    // Local maxima over the 8-neighborhood (ties allowed so plateau corners
    // survive; the distance filter thins them). The outermost pixel ring is
    // skipped so every candidate has a full neighborhood.
    let mut candidates: Vec<Corner> = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let s = scores[y * w + x];
            if s < threshold || s <= 0.0 {
                continue;
            }
            let is_max = (-1..=1).all(|dy: i64| {
                (-1..=1).all(|dx: i64| {
                    (dx == 0 && dy == 0)
                        || scores[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize] <= s
                })
            });
            if is_max {
                candidates.push(Corner {
                    u: x as f64,
                    v: y as f64,
                    score: s,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.v.partial_cmp(&b.v).unwrap())
            .then(a.u.partial_cmp(&b.u).unwrap())
    });

    let min_dist_sq = params.min_distance * params.min_distance;
    let mut picked: Vec<Corner> = Vec::new();
    for c in candidates {
        if picked.len() >= params.max_corners {
            break;
        }
        let far_enough = picked
            .iter()
            .all(|p| (p.u - c.u).powi(2) + (p.v - c.v).powi(2) >= min_dist_sq);
        if far_enough {
            picked.push(c);
        }
    }
    Ok(picked)
}

/// 2x downsampling with a (1, 4, 6, 4, 1)/16 smoothing kernel and even-index
/// decimation, reflect-101 borders.
fn downsample(image: &GrayImage) -> GrayImage {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (image.width, image.height);
    // Horizontal pass.
    let mut hpass = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for (t, k) in K.iter().enumerate() {
                acc += k * image.data[y * w + reflect101(x + t as i64 - 2, w as i64)];
            }
            hpass[y * w + x as usize] = acc;
        }
    }
    // Vertical pass plus decimation.
    let (dw, dh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = GrayImage::zeros(dw, dh);
    for dy in 0..dh {
        let y = (dy * 2) as i64;
        for dx in 0..dw {
            let x = dx * 2;
            let mut acc = 0.0;
            for (t, k) in K.iter().enumerate() {
                acc += k * hpass[reflect101(y + t as i64 - 2, h as i64) * w + x];
            }
            out.data[dy * dw + dx] = acc;
        }
    }
    out
}

fn build_pyramid(image: &GrayImage, levels: usize) -> Vec<GrayImage> {
    let mut pyramid = Vec::with_capacity(levels);
    pyramid.push(image.clone());
    for _ in 1..levels {
        let next = downsample(pyramid.last().unwrap());
        pyramid.push(next);
    }
    pyramid
}

/// Central-difference gradient maps of one pyramid level.
fn central_gradients(image: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width, image.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let at = |x: i64, y: i64| -> f64 {
        image.data[reflect101(y, h as i64) * w + reflect101(x, w as i64)]
    };
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            gy[i] = (at(x, y + 1) - at(x, y - 1)) / 2.0;
        }
    }
    (gx, gy)
}

struct LevelData {
    image: GrayImage,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

fn prepare_levels(pyramid: Vec<GrayImage>) -> Vec<LevelData> {
    pyramid
        .into_iter()
        .map(|image| {
            let (gx, gy) = central_gradients(&image);
            LevelData { image, gx, gy }
        })
        .collect()
}

fn track_one(
    prev: &[LevelData],
    next: &[LevelData],
    point: (f64, f64),
    params: &LkParams,
) -> TrackedPair {
    let r = params.window_radius as i64;
    let base = &prev[0].image;
    let in_bounds = |x: f64, y: f64, img: &GrayImage| {
        x >= 0.0 && y >= 0.0 && x <= (img.width - 1) as f64 && y <= (img.height - 1) as f64
    };
    if !in_bounds(point.0, point.1, base) {
        return TrackedPair {
            p: point,
            q: point,
            status: TrackStatus::OutOfBounds,
        };
    }

    let mut flow = (0.0f64, 0.0f64);
    let mut diverged = false;
    for level in (0..prev.len()).rev() {
        let pl = &prev[level];
        let nl = &next[level];
        let (w, h) = (pl.image.width, pl.image.height);
        let scale = 0.5f64.powi(level as i32);
        let px = point.0 * scale;
        let py = point.1 * scale;

        // Gradient window of the earlier frame, sampled once per level.
        let n = (2 * r + 1) * (2 * r + 1);
        let mut gxs = Vec::with_capacity(n as usize);
        let mut gys = Vec::with_capacity(n as usize);
        let mut vals = Vec::with_capacity(n as usize);
        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let sx = px + dx as f64;
                let sy = py + dy as f64;
                let gx = bilinear(&pl.gx, w, h, sx, sy);
                let gy = bilinear(&pl.gy, w, h, sx, sy);
                let v = bilinear(&pl.image.data, w, h, sx, sy);
                gxx += gx * gx;
                gxy += gx * gy;
                gyy += gy * gy;
                gxs.push(gx);
                gys.push(gy);
                vals.push(v);
            }
        }
        if min_eigenvalue(gxx, gxy, gyy) < params.min_eigenvalue {
            diverged = true;
            break;
        }
        let det = gxx * gyy - gxy * gxy;

        let mut nu = (0.0f64, 0.0f64);
        let mut converged = false;
        for _ in 0..params.max_iterations {
            let (mut bx, mut by) = (0.0, 0.0);
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = px + flow.0 + nu.0 + dx as f64;
                    let sy = py + flow.1 + nu.1 + dy as f64;
                    let diff = vals[k] - bilinear(&nl.image.data, w, h, sx, sy);
                    bx += diff * gxs[k];
                    by += diff * gys[k];
                    k += 1;
                }
            }
            let eta = (
                (gyy * bx - gxy * by) / det,
                (gxx * by - gxy * bx) / det,
            );
            nu.0 += eta.0;
            nu.1 += eta.1;
            if (eta.0 * eta.0 + eta.1 * eta.1).sqrt() < params.epsilon {
                converged = true;
                break;
            }
        }
        if !converged {
            diverged = true;
            break;
        }
        flow.0 += nu.0;
        flow.1 += nu.1;
        if level > 0 {
            flow.0 *= 2.0;
            flow.1 *= 2.0;
        }
    }

    let q = (point.0 + flow.0, point.1 + flow.1);
    let status = if diverged {
        TrackStatus::Diverged
    } else if !in_bounds(q.0, q.1, base) {
        TrackStatus::OutOfBounds
    } else {
        TrackStatus::Valid
    };
    TrackedPair {
        p: point,
        q,
        status,
    }
}

/// Pyramidal Lucas-Kanade flow from `prev` to `next` for each start point.
pub fn lk_track(
    prev: &GrayImage,
    next: &GrayImage,
    points: &[(f64, f64)],
    params: &LkParams,
) -> Result<Vec<TrackedPair>, TrackError> {
    if prev.width != next.width || prev.height != next.height {
        return Err(TrackError::SizeMismatch {
            a_w: prev.width,
            a_h: prev.height,
            b_w: next.width,
            b_h: next.height,
        });
    }
    let window = 2 * params.window_radius + 1;
    let mut depth = 0;
    let (mut w, mut h) = (prev.width, prev.height);
    while depth < params.levels {
        let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
        if nw < window || nh < window {
            break;
        }
        (w, h) = (nw, nh);
        depth += 1;
    }
    let prev_levels = prepare_levels(build_pyramid(prev, depth + 1));
    let next_levels = prepare_levels(build_pyramid(next, depth + 1));
    Ok(points
        .iter()
        .map(|&p| track_one(&prev_levels, &next_levels, p, params))
        .collect())
}

/// Re-tracks every VALID pair's endpoint backward and demotes pairs whose
/// round trip misses the start by more than `fb_threshold_px` (or whose
/// backward track fails outright) to FB_REJECTED. Other statuses pass
/// through untouched; order is preserved.
pub fn forward_backward_filter(
    pairs: &[TrackedPair],
    prev: &GrayImage,
    next: &GrayImage,
    fb_threshold_px: f64,
    params: &LkParams,
) -> Result<Vec<TrackedPair>, TrackError> {
    let valid_endpoints: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|pr| pr.status == TrackStatus::Valid)
        .map(|pr| pr.q)
        .collect();
    if valid_endpoints.is_empty() {
        return Ok(pairs.to_vec());
    }
    let back = lk_track(next, prev, &valid_endpoints, params)?;
    let mut back_iter = back.iter();
    Ok(pairs
        .iter()
        .map(|pr| {
            if pr.status != TrackStatus::Valid {
                return *pr;
            }
            let b = back_iter.next().expect("one backward track per VALID pair");
            let err = ((pr.p.0 - b.q.0).powi(2) + (pr.p.1 - b.q.1).powi(2)).sqrt();
            let ok = b.status == TrackStatus::Valid && err <= fb_threshold_px;
            TrackedPair {
                status: if ok {
                    TrackStatus::Valid
                } else {
                    TrackStatus::FbRejected
                },
                ..*pr
            }
        })
        .collect())
}

/// Header line of the pairs CSV format.
pub const PAIRS_CSV_HEADER: &str = "pu,pv,qu,qv,status";

pub fn pairs_to_csv(pairs: &[TrackedPair]) -> String {
    let mut out = String::from(PAIRS_CSV_HEADER);
    out.push('\n');
    for pr in pairs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            pr.p.0, pr.p.1, pr.q.0, pr.q.1, pr.status
        ));
    }
    out
}

pub fn pairs_from_csv(text: &str) -> Result<Vec<TrackedPair>, TrackError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == PAIRS_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(TrackError::BadCsv {
                line: 1,
                reason: format!("header is {header:?}, want {PAIRS_CSV_HEADER:?}"),
            })
        }
        None => {
            return Err(TrackError::BadCsv {
                line: 1,
                reason: "empty file".into(),
            })
        }
    }
    let mut pairs = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(TrackError::BadCsv {
                line: line_no,
                reason: format!("{} fields, want 5", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64, TrackError> {
            s.trim().parse::<f64>().map_err(|e| TrackError::BadCsv {
                line: line_no,
                reason: format!("bad number {s:?}: {e}"),
            })
        };
        let status = fields[4]
            .trim()
            .parse::<TrackStatus>()
            .map_err(|reason| TrackError::BadCsv {
                line: line_no,
                reason,
            })?;
        pairs.push(TrackedPair {
            p: (num(fields[0])?, num(fields[1])?),
            q: (num(fields[2])?, num(fields[3])?),
            status,
        });
    }
    Ok(pairs)
}

pub fn write_pairs_csv(path: &Path, pairs: &[TrackedPair]) -> Result<(), TrackError> {
    std::fs::write(path, pairs_to_csv(pairs))?;
    Ok(())
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<TrackedPair>, TrackError> {
    pairs_from_csv(&std::fs::read_to_string(path)?)
}
