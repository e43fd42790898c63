//! Preprocessing: bilinear resize, min-max normalization, and the seeded
//! augmentation pipeline (brightness/contrast, Gaussian blur, flips,
//! rotation — applied in that order).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{Domain, Image};
use crate::rng::CounterRng;

/// Augmentation parameters. Ranges are sampled uniformly; flips are
/// Bernoulli draws. A collapsed blur range (`[0, 0]`) disables the blur.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AugmentConfig {
    pub rotation_max_deg: f64,
    pub p_flip_h: f64,
    pub p_flip_v: f64,
    pub blur_sigma_range: [f64; 2],
    /// Additive brightness bias range, +/- on the unit scale.
    pub brightness_range: f64,
    /// Multiplicative contrast gain range.
    pub contrast_range: [f64; 2],
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_max_deg: 15.0,
            p_flip_h: 0.5,
            p_flip_v: 0.5,
            blur_sigma_range: [0.5, 1.0],
            brightness_range: 0.1,
            contrast_range: [0.9, 1.1],
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Config whose augment pass is the identity, used for plain prediction.
    pub fn disabled(seed: u64) -> Self {
        AugmentConfig {
            rotation_max_deg: 0.0,
            p_flip_h: 0.0,
            p_flip_v: 0.0,
            blur_sigma_range: [0.0, 0.0],
            brightness_range: 0.0,
            contrast_range: [1.0, 1.0],
            seed,
        }
    }
}

/// Sampled augmentation parameters for one image, drawn once so the
/// composed transform can be compared against manual stage application.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentDraw {
    pub gain: f64,
    pub bias: f64,
    pub sigma: f64,
    pub flip_v: bool,
    pub flip_h: bool,
    pub theta_deg: f64,
}

/// Draw the per-image parameters from the counter generator keyed by
/// `(cfg.seed, sample_index)`. Draw order matches application order.
pub fn draw_augment_params(cfg: &AugmentConfig, sample_index: u64) -> AugmentDraw {
    let mut rng = CounterRng::new(cfg.seed, sample_index);
    let gain = rng.uniform(cfg.contrast_range[0], cfg.contrast_range[1]);
    let bias = rng.uniform(-cfg.brightness_range, cfg.brightness_range);
    let sigma = rng.uniform(cfg.blur_sigma_range[0], cfg.blur_sigma_range[1]);
    let flip_v = rng.bernoulli(cfg.p_flip_v);
    let flip_h = rng.bernoulli(cfg.p_flip_h);
    let theta_deg = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
    AugmentDraw { gain, bias, sigma, flip_v, flip_h, theta_deg }
}

/// Bilinear resize with half-pixel-center coordinate mapping and edge
/// clamping. Output values are convex combinations of the four source
/// neighbors.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::EmptyImage);
    }
    let (w, h) = (img.width(), img.height());
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let src_y = (oy as f64 + 0.5) * sy - 0.5;
        let y0 = src_y.floor();
        let fy = (src_y - y0) as f32;
        let y0c = (y0 as isize).clamp(0, h as isize - 1) as usize;
        let y1c = (y0 as isize + 1).clamp(0, h as isize - 1) as usize;
        for ox in 0..out_w {
            let src_x = (ox as f64 + 0.5) * sx - 0.5;
            let x0 = src_x.floor();
            let fx = (src_x - x0) as f32;
            let x0c = (x0 as isize).clamp(0, w as isize - 1) as usize;
            let x1c = (x0 as isize + 1).clamp(0, w as isize - 1) as usize;
            let top = img.get(x0c, y0c) * (1.0 - fx) + img.get(x1c, y0c) * fx;
            let bot = img.get(x0c, y1c) * (1.0 - fx) + img.get(x1c, y1c) * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Image::new(out_w, out_h, out, img.domain())
}

/// Min-max normalization to [0, 1]. A constant image maps to all zeros.
pub fn normalize_minmax(img: &Image) -> Image {
    let min = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
    let max = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let data = if max > min {
        // True division so the extremes land exactly on 0 and 1, making
        // the transform idempotent.
        let range = max - min;
        img.data().iter().map(|&v| (v - min) / range).collect()
    } else {
        vec![0.0; img.data().len()]
    };
    Image::new(img.width(), img.height(), data, Domain::Unit).expect("same shape")
}

/// Rotation about the image center with bilinear resampling; out-of-bounds
/// samples are filled with 0.
pub fn rotate(img: &Image, theta_deg: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let theta = theta_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut out = Vec::with_capacity(w * h);
    for oy in 0..h {
        let dy = oy as f64 - cy;
        for ox in 0..w {
            let dx = ox as f64 - cx;
            // Inverse mapping: rotate the destination offset by -theta.
            let src_x = cos * dx + sin * dy + cx;
            let src_y = -sin * dx + cos * dy + cy;
            out.push(sample_bilinear_zero(img, src_x, src_y));
        }
    }
    Image::new(w, h, out, img.domain()).expect("same shape")
}

fn sample_bilinear_zero(img: &Image, x: f64, y: f64) -> f32 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0 = x.floor() as isize;
    let y0 = y.floor() as isize;
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let at = |xi: isize, yi: isize| -> f32 {
        if xi >= 0 && xi < w && yi >= 0 && yi < h {
            img.get(xi as usize, yi as usize)
        } else {
            0.0
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bot = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bot * fy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlipAxis {
    Horizontal,
    Vertical,
}

/// Mirror the pixel order along the requested axis.
pub fn flip(img: &Image, axis: FlipAxis) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = match axis {
                FlipAxis::Horizontal => img.get(w - 1 - x, y),
                FlipAxis::Vertical => img.get(x, h - 1 - y),
            };
            out.push(v);
        }
    }
    Image::new(w, h, out, img.domain()).expect("same shape")
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f32>> {
    if sigma <= 0.0 {
        return Err(Error::InvalidSigma(sigma as f32));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let inv = -1.0 / (2.0 * sigma * sigma);
    let mut k: Vec<f64> = (-radius..=radius).map(|i| ((i * i) as f64 * inv).exp()).collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    Ok(k.into_iter().map(|v| v as f32).collect())
}

#[inline]
fn reflect(i: isize, n: isize) -> usize {
    // Symmetric reflection with the edge sample included: -1 -> 0, n -> n-1.
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with symmetric reflective padding.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    let kernel = gaussian_kernel_1d(sigma)?;
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());

    // Horizontal pass.
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = img.row(y);
        for x in 0..w as isize {
            let mut acc = 0.0f64;
            for (ki, &kv) in kernel.iter().enumerate() {
                let xi = reflect(x + ki as isize - radius, w as isize);
                acc += kv as f64 * row[xi] as f64;
            }
            tmp[y * w + x as usize] = acc as f32;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (ki, &kv) in kernel.iter().enumerate() {
                let yi = reflect(y + ki as isize - radius, h as isize);
                acc += kv as f64 * tmp[yi * w + x] as f64;
            }
            out[y as usize * w + x] = acc as f32;
        }
    }
    Image::new(w, h, out, img.domain())
}

/// `clamp(gain * I + bias, 0, 1)` on a unit-domain image.
pub fn brightness_contrast(img: &Image, gain: f64, bias: f64) -> Image {
    let data = img
        .data()
        .iter()
        .map(|&v| ((gain * v as f64 + bias).clamp(0.0, 1.0)) as f32)
        .collect();
    Image::new(img.width(), img.height(), data, img.domain()).expect("same shape")
}

/// Apply the drawn stages in order: brightness/contrast, blur, vertical
/// flip, horizontal flip, rotation.
pub fn apply_augment(img: &Image, draw: &AugmentDraw) -> Result<Image> {
    let mut out = if draw.gain == 1.0 && draw.bias == 0.0 {
        img.clone()
    } else {
        brightness_contrast(img, draw.gain, draw.bias)
    };
    if draw.sigma > 0.0 {
        out = gaussian_blur(&out, draw.sigma)?;
    }
    if draw.flip_v {
        out = flip(&out, FlipAxis::Vertical);
    }
    if draw.flip_h {
        out = flip(&out, FlipAxis::Horizontal);
    }
    if draw.theta_deg != 0.0 {
        out = rotate(&out, draw.theta_deg);
    }
    Ok(out)
}

/// Full augmentation of one image, deterministic in `(cfg.seed, sample_index)`.
pub fn augment(img: &Image, cfg: &AugmentConfig, sample_index: u64) -> Result<Image> {
    apply_augment(img, &draw_augment_params(cfg, sample_index))
}
