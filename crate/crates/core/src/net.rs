//! A small differentiable per-pixel segmentation network.
//!
//! Fixed topology: conv(3->16, 3x3, stride 2, reflect padding) -> ReLU ->
//! conv(16->32, 3x3, stride 2, reflect padding) -> ReLU -> conv(32->1, 1x1)
//! -> bilinear x4 upsample back to input resolution. The receptive field is
//! 11 input pixels. Everything is double precision so the reverse-mode
//! gradients can be verified against finite differences to tight tolerances,
//! and the whole module is framework-free: the training pipeline only sees
//! [`forward`] / [`backward`] / [`adam_step`], so a larger backbone could be
//! swapped in behind the same three calls.
//!
//! Upsampling uses the align-corners = false convention: output pixel `o`
//! reads the source at `(o + 0.5) / 4 - 0.5`, clamped to the source grid,
//! with bilinear weights. [`backward`] routes gradients through the exact
//! transpose of those weights.
//!
//! Checkpoints are a little-endian binary container (magic `GEOSEG01`) of
//! shape-tagged named tensors; save/load round-trips are bitwise exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::img::{bilinear, bilinear_scatter, reflect101, RgbImage};
use crate::losses::LogitMap;

/// Channels after the first convolution.
pub const CONV1_CHANNELS: usize = 16;
/// Channels after the second convolution.
pub const CONV2_CHANNELS: usize = 32;
/// First bytes of every checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GEOSEG01";

#[derive(Debug, Error)]
pub enum NetError {
    #[error("bad shape: {what}")]
    BadShape { what: String },
    #[error("checkpoint i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (magic {found:?})")]
    BadMagic { found: [u8; 8] },
    #[error("corrupt checkpoint: {reason}")]
    Corrupt { reason: String },
}

/// A dense array of f64 values with an explicit shape tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }
}

/// All learnable parameters of the fixed topology. The same struct doubles
/// as the container for parameter gradients and Adam moments, which keeps
/// every per-parameter loop a single zipped iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SegNetParams {
    /// `[16, 3, 3, 3]` kernels of the first convolution.
    pub conv1_w: Tensor,
    /// `[16]` biases.
    pub conv1_b: Tensor,
    /// `[32, 16, 3, 3]` kernels of the second convolution.
    pub conv2_w: Tensor,
    /// `[32]` biases.
    pub conv2_b: Tensor,
    /// `[1, 32, 1, 1]` kernel of the final pointwise convolution.
    pub conv3_w: Tensor,
    /// `[1]` bias.
    pub conv3_b: Tensor,
}

impl SegNetParams {
    pub fn zeros() -> Self {
        Self {
            conv1_w: Tensor::zeros(&[CONV1_CHANNELS, 3, 3, 3]),
            conv1_b: Tensor::zeros(&[CONV1_CHANNELS]),
            conv2_w: Tensor::zeros(&[CONV2_CHANNELS, CONV1_CHANNELS, 3, 3]),
            conv2_b: Tensor::zeros(&[CONV2_CHANNELS]),
            conv3_w: Tensor::zeros(&[1, CONV2_CHANNELS, 1, 1]),
            conv3_b: Tensor::zeros(&[1]),
        }
    }

    /// Kaiming-uniform fan-in initialization (`|w| <= sqrt(6 / fan_in)`),
    /// biases zero, fully determined by `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros();
        for (tensor, fan_in) in [
            (&mut params.conv1_w, 3 * 3 * 3),
            (&mut params.conv2_w, CONV1_CHANNELS * 3 * 3),
            (&mut params.conv3_w, CONV2_CHANNELS),
        ] {
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in tensor.data.iter_mut() {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 6] {
        [
            ("conv1_w", &self.conv1_w),
            ("conv1_b", &self.conv1_b),
            ("conv2_w", &self.conv2_w),
            ("conv2_b", &self.conv2_b),
            ("conv3_w", &self.conv3_w),
            ("conv3_b", &self.conv3_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 6] {
        [
            ("conv1_w", &mut self.conv1_w),
            ("conv1_b", &mut self.conv1_b),
            ("conv2_w", &mut self.conv2_w),
            ("conv2_b", &mut self.conv2_b),
            ("conv3_w", &mut self.conv3_w),
            ("conv3_b", &mut self.conv3_b),
        ]
    }

    /// Elementwise `self += other`, used to combine the two per-frame
    /// gradient contributions of a pair step.
    pub fn add_assign(&mut self, other: &Self) {
        for ((_, t), (_, o)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in t.data.iter_mut().zip(&o.data) {
                *a += b;
            }
        }
    }

    fn validate(&self) -> Result<(), NetError> {
        let reference = Self::zeros();
        for ((name, t), (_, want)) in self.tensors().into_iter().zip(reference.tensors()) {
            if t.shape != want.shape || t.data.len() != want.data.len() {
                return Err(NetError::BadShape {
                    what: format!("tensor {name} has shape {:?}, want {:?}", t.shape, want.shape),
                });
            }
        }
        Ok(())
    }
}

fn check_image(image: &RgbImage) -> Result<(), NetError> {
    if image.width == 0 || image.height == 0 || image.width % 4 != 0 || image.height % 4 != 0 {
        return Err(NetError::BadShape {
            what: format!(
                "image is {}x{}, need nonzero dimensions divisible by 4",
                image.width, image.height
            ),
        });
    }
    Ok(())
}

/// Stride-2 3x3 convolution with reflected borders; output is half the input
/// size in each dimension, window centers sit on even input coordinates.
fn conv3x3_s2(
    inp: &[f64],
    c_in: usize,
    w_in: usize,
    h_in: usize,
    wgt: &[f64],
    bias: &[f64],
    c_out: usize,
    out: &mut [f64],
) {
    let (w_out, h_out) = (w_in / 2, h_in / 2);
    for oc in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = bias[oc];
                for ic in 0..c_in {
                    let plane = &inp[ic * w_in * h_in..(ic + 1) * w_in * h_in];
                    let wbase = ((oc * c_in) + ic) * 9;
                    for ky in 0..3 {
                        let ry = reflect101(2 * oy as i64 + ky as i64 - 1, h_in as i64);
                        for kx in 0..3 {
                            let rx = reflect101(2 * ox as i64 + kx as i64 - 1, w_in as i64);
                            acc += wgt[wbase + ky * 3 + kx] * plane[ry * w_in + rx];
                        }
                    }
                }
                out[(oc * h_out + oy) * w_out + ox] = acc;
            }
        }
    }
}

/// Reverse-mode pass of [`conv3x3_s2`]. `d_inp` is optional because the
/// first layer does not need gradients with respect to the image.
#[allow(clippy::too_many_arguments)]
fn conv3x3_s2_backward(
    inp: &[f64],
    c_in: usize,
    w_in: usize,
    h_in: usize,
    wgt: &[f64],
    c_out: usize,
    d_out: &[f64],
    d_wgt: &mut [f64],
    d_bias: &mut [f64],
    mut d_inp: Option<&mut [f64]>,
) {
    let (w_out, h_out) = (w_in / 2, h_in / 2);
    for oc in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let g = d_out[(oc * h_out + oy) * w_out + ox];
                if g == 0.0 {
                    continue;
                }
                d_bias[oc] += g;
                for ic in 0..c_in {
                    let base = ic * w_in * h_in;
                    let wbase = ((oc * c_in) + ic) * 9;
                    for ky in 0..3 {
                        let ry = reflect101(2 * oy as i64 + ky as i64 - 1, h_in as i64);
                        for kx in 0..3 {
                            let rx = reflect101(2 * ox as i64 + kx as i64 - 1, w_in as i64);
                            let idx = base + ry * w_in + rx;
                            d_wgt[wbase + ky * 3 + kx] += g * inp[idx];
                            if let Some(d) = d_inp.as_deref_mut() {
                                d[idx] += g * wgt[wbase + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Intermediate activations kept around for the backward pass.
struct ForwardCache {
    planes: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    z3: Vec<f64>,
}

fn forward_cached(
    params: &SegNetParams,
    image: &RgbImage,
) -> Result<(LogitMap, ForwardCache), NetError> {
    check_image(image)?;
    params.validate()?;
    let (w, h) = (image.width, image.height);
    let (w1, h1) = (w / 2, h / 2);
    let (w2, h2) = (w / 4, h / 4);

    // Interleaved RGB to channel-major planes.
    let mut planes = vec![0.0; 3 * w * h];
    for i in 0..w * h {
        for c in 0..3 {
            planes[c * w * h + i] = image.data[i * 3 + c];
        }
    }

    let mut z1 = vec![0.0; CONV1_CHANNELS * w1 * h1];
    conv3x3_s2(
        &planes,
        3,
        w,
        h,
        &params.conv1_w.data,
        &params.conv1_b.data,
        CONV1_CHANNELS,
        &mut z1,
    );
    let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();

    let mut z2 = vec![0.0; CONV2_CHANNELS * w2 * h2];
    conv3x3_s2(
        &a1,
        CONV1_CHANNELS,
        w1,
        h1,
        &params.conv2_w.data,
        &params.conv2_b.data,
        CONV2_CHANNELS,
        &mut z2,
    );
    let a2: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();

    let mut z3 = vec![params.conv3_b.data[0]; w2 * h2];
    for ic in 0..CONV2_CHANNELS {
        let k = params.conv3_w.data[ic];
        let plane = &a2[ic * w2 * h2..(ic + 1) * w2 * h2];
        for (o, v) in z3.iter_mut().zip(plane) {
            *o += k * v;
        }
    }

    let mut logits = LogitMap::zeros(w, h);
    for oy in 0..h {
        let sy = (oy as f64 + 0.5) / 4.0 - 0.5;
        for ox in 0..w {
            let sx = (ox as f64 + 0.5) / 4.0 - 0.5;
            logits.data[oy * w + ox] = bilinear(&z3, w2, h2, sx, sy);
        }
    }

    Ok((
        logits,
        ForwardCache {
            planes,
            z1,
            a1,
            z2,
            a2,
            z3,
        },
    ))
}

/// Runs the network on a 3-channel image with values in `[0, 1]`.
/// Deterministic; output dimensions equal input dimensions.
pub fn forward(params: &SegNetParams, image: &RgbImage) -> Result<LogitMap, NetError> {
    forward_cached(params, image).map(|(logits, _)| logits)
}

/// Exact reverse-mode gradients of [`forward`] contracted with
/// `output_gradient`: returns `d(sum(output_gradient * logits)) / d(params)`.
pub fn backward(
    params: &SegNetParams,
    image: &RgbImage,
    output_gradient: &LogitMap,
) -> Result<SegNetParams, NetError> {
    if output_gradient.width != image.width || output_gradient.height != image.height {
        return Err(NetError::BadShape {
            what: format!(
                "output gradient is {}x{} but image is {}x{}",
                output_gradient.width, output_gradient.height, image.width, image.height
            ),
        });
    }
    let (_, cache) = forward_cached(params, image)?;
    let (w, h) = (image.width, image.height);
    let (w1, h1) = (w / 2, h / 2);
    let (w2, h2) = (w / 4, h / 4);
    let mut grads = SegNetParams::zeros();

    // Upsample transpose: scatter every output-pixel gradient back onto the
    // coarse grid through the same bilinear weights the forward pass used.
    let mut d_z3 = vec![0.0; w2 * h2];
    for oy in 0..h {
        let sy = (oy as f64 + 0.5) / 4.0 - 0.5;
        for ox in 0..w {
            let g = output_gradient.data[oy * w + ox];
            if g == 0.0 {
                continue;
            }
            let sx = (ox as f64 + 0.5) / 4.0 - 0.5;
            bilinear_scatter(&mut d_z3, w2, h2, sx, sy, g);
        }
    }
    debug_assert_eq!(cache.z3.len(), d_z3.len());

    // Pointwise convolution.
    let mut d_a2 = vec![0.0; CONV2_CHANNELS * w2 * h2];
    grads.conv3_b.data[0] = d_z3.iter().sum();
    for ic in 0..CONV2_CHANNELS {
        let a_plane = &cache.a2[ic * w2 * h2..(ic + 1) * w2 * h2];
        let d_plane = &mut d_a2[ic * w2 * h2..(ic + 1) * w2 * h2];
        let k = params.conv3_w.data[ic];
        let mut dw = 0.0;
        for ((d, &a), &g) in d_plane.iter_mut().zip(a_plane).zip(&d_z3) {
            dw += g * a;
            *d = k * g;
        }
        grads.conv3_w.data[ic] = dw;
    }

    let d_z2: Vec<f64> = d_a2
        .iter()
        .zip(&cache.z2)
        .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
        .collect();
    let mut d_a1 = vec![0.0; CONV1_CHANNELS * w1 * h1];
    conv3x3_s2_backward(
        &cache.a1,
        CONV1_CHANNELS,
        w1,
        h1,
        &params.conv2_w.data,
        CONV2_CHANNELS,
        &d_z2,
        &mut grads.conv2_w.data,
        &mut grads.conv2_b.data,
        Some(&mut d_a1),
    );

    let d_z1: Vec<f64> = d_a1
        .iter()
        .zip(&cache.z1)
        .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
        .collect();
    conv3x3_s2_backward(
        &cache.planes,
        3,
        w,
        h,
        &params.conv1_w.data,
        CONV1_CHANNELS,
        &d_z1,
        &mut grads.conv1_w.data,
        &mut grads.conv1_b.data,
        None,
    );

    Ok(grads)
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: SegNetParams,
    pub v: SegNetParams,
    pub step: u64,
    pub hyper: AdamParams,
}

impl AdamState {
    pub fn new(hyper: AdamParams) -> Self {
        Self {
            m: SegNetParams::zeros(),
            v: SegNetParams::zeros(),
            step: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update, in place. The first step reduces to
/// `p -= lr * g / (|g| + eps)` elementwise.
pub fn adam_step(params: &mut SegNetParams, grads: &SegNetParams, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let AdamParams {
        lr,
        beta1,
        beta2,
        eps,
    } = state.hyper;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (((_, p), (_, g)), ((_, m), (_, v))) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().into_iter().zip(state.v.tensors_mut()))
    {
        for i in 0..p.data.len() {
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Writes `params` as a shape-tagged little-endian binary container.
///
/// Layout: magic `GEOSEG01`, then a u32 tensor count, then per tensor a u32
/// name length, the UTF-8 name, a u32 rank, the dimensions as u64 values,
/// and the payload as f64 little-endian words.
pub fn save_checkpoint(params: &SegNetParams, path: &Path) -> Result<(), NetError> {
    params.validate()?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    let tensors = params.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
        for &dim in &tensor.shape {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &value in &tensor.data {
            out.write_all(&value.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]; bitwise exact.
pub fn load_checkpoint(path: &Path) -> Result<SegNetParams, NetError> {
    let mut inp = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NetError::BadMagic { found: magic });
    }
    let mut u32buf = [0u8; 4];
    inp.read_exact(&mut u32buf)?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut params = SegNetParams::zeros();
    let expected = params.tensors().map(|(name, _)| name);
    if count != expected.len() {
        return Err(NetError::Corrupt {
            reason: format!("{count} tensors, want {}", expected.len()),
        });
    }
    for want_name in expected {
        inp.read_exact(&mut u32buf)?;
        let name_len = u32::from_le_bytes(u32buf) as usize;
        if name_len > 256 {
            return Err(NetError::Corrupt {
                reason: format!("tensor name length {name_len} is implausible"),
            });
        }
        let mut name_buf = vec![0u8; name_len];
        inp.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf).map_err(|_| NetError::Corrupt {
            reason: "tensor name is not UTF-8".into(),
        })?;
        if name != want_name {
            return Err(NetError::Corrupt {
                reason: format!("tensor {name}, want {want_name}"),
            });
        }
        inp.read_exact(&mut u32buf)?;
        let rank = u32::from_le_bytes(u32buf) as usize;
        let mut u64buf = [0u8; 8];
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            inp.read_exact(&mut u64buf)?;
            shape.push(u64::from_le_bytes(u64buf) as usize);
        }
        let target = params
            .tensors_mut()
            .into_iter()
            .find(|(n, _)| *n == want_name)
            .map(|(_, t)| t)
            .expect("tensor names are fixed");
        if shape != target.shape {
            return Err(NetError::Corrupt {
                reason: format!("tensor {name} has shape {shape:?}, want {:?}", target.shape),
            });
        }
        let mut f64buf = [0u8; 8];
        for slot in target.data.iter_mut() {
            inp.read_exact(&mut f64buf)?;
            *slot = f64::from_le_bytes(f64buf);
        }
    }
    let mut trailing = [0u8; 1];
    if inp.read(&mut trailing)? != 0 {
        return Err(NetError::Corrupt {
            reason: "trailing data after last tensor".into(),
        });
    }
    params.validate()?;
    Ok(params)
}
