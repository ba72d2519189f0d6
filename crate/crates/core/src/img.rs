//! Float image containers shared by the tracker, the net, and the renderer.
//!
//! Two coordinate conventions coexist in this crate and both are anchored
//! here:
//!
//! * **Sample grid** (tracking, logit maps): the value of pixel `(i, j)` lives
//!   at continuous coordinate `(i, j)`; [`bilinear`] interpolates between
//!   sample points and clamps at the borders.
//! * **Pixel areas** (rasterization, rendering): pixel `(i, j)` covers the
//!   unit square `[i, i+1) x [j, j+1)` with center `(i + 0.5, j + 0.5)`. That
//!   convention is applied by the geometry consumers, not by this module.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImgError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: String,
        source: image::ImageError,
    },
    #[error("failed to encode {path}: {source}")]
    Encode {
        path: String,
        source: image::ImageError,
    },
    #[error("image dimensions {width}x{height} are invalid")]
    BadDimensions { width: u32, height: u32 },
}

/// Single-channel image, f64 row-major, values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at `(x, y)` in the sample-grid convention, clamped to
    /// the image border.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    pub fn load_png(path: &Path) -> Result<Self, ImgError> {
        let img = open_image(path)?.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImgError> {
        let buf: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .ok_or(ImgError::BadDimensions {
                width: self.width as u32,
                height: self.height as u32,
            })?;
        img.save(path).map_err(|source| ImgError::Encode {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Three-channel image, f64 interleaved RGB, values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// len = width * height * 3, layout `[r g b, r g b, ...]` row-major.
    pub data: Vec<f64>,
}

impl RgbImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    /// Luminance-free channel mean; the tracker wants one channel and the
    /// renderer keeps channels near-equal, so a plain mean is enough.
    pub fn to_gray(&self) -> GrayImage {
        let mut g = GrayImage::zeros(self.width, self.height);
        for i in 0..self.width * self.height {
            g.data[i] = (self.data[3 * i] + self.data[3 * i + 1] + self.data[3 * i + 2]) / 3.0;
        }
        g
    }

    pub fn load_png(path: &Path) -> Result<Self, ImgError> {
        let img = open_image(path)?.into_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImgError> {
        let buf: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .ok_or(ImgError::BadDimensions {
                width: self.width as u32,
                height: self.height as u32,
            })?;
        img.save(path).map_err(|source| ImgError::Encode {
            path: path.display().to_string(),
            source,
        })
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage, ImgError> {
    image::open(path).map_err(|source| ImgError::Decode {
        path: path.display().to_string(),
        source,
    })
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Bilinear interpolation over a row-major single-channel buffer in the
/// sample-grid convention; coordinates are clamped to the valid range first.
#[inline]
pub fn bilinear(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let v00 = data[y0 * width + x0];
    let v10 = data[y0 * width + x1];
    let v01 = data[y1 * width + x0];
    let v11 = data[y1 * width + x1];
    v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy
}

/// Scatters `g` into the four bilinear taps of `(x, y)`: the exact transpose
/// of [`bilinear`], used to backpropagate through subpixel samples.
#[inline]
pub fn bilinear_scatter(data: &mut [f64], width: usize, height: usize, x: f64, y: f64, g: f64) {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    data[y0 * width + x0] += g * (1.0 - fx) * (1.0 - fy);
    data[y0 * width + x1] += g * fx * (1.0 - fy);
    data[y1 * width + x0] += g * (1.0 - fx) * fy;
    data[y1 * width + x1] += g * fx * fy;
}

/// Mirrors an out-of-range index back into `[0, n)` without repeating the
/// border sample (`-1 -> 1`, `n -> n-2`). Requires `n >= 2` for indices
/// outside the range.
#[inline]
pub fn reflect101(i: i64, n: i64) -> usize {
    debug_assert!(n >= 1);
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        } else {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}
