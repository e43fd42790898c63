//! Orthonormal Haar wavelet decomposition and sub-band statistics.
//!
//! Each level splits the running low-pass band into LL / LH / HL / HH with
//! the 1/sqrt(2) scaling, so the transform is energy preserving and exactly
//! invertible. Odd dimensions are padded to even by edge replication before
//! a level is applied.

use crate::error::{Error, Result};
use crate::imgio::{Domain, Image};

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// One decomposition level: detail bands plus the dimensions they were
/// produced at (after any pad-to-even).
#[derive(Debug, Clone)]
pub struct DwtLevel {
    pub lh: Vec<f32>,
    pub hl: Vec<f32>,
    pub hh: Vec<f32>,
    /// Half-size band width/height at this level.
    pub band_w: usize,
    pub band_h: usize,
    /// Input dimensions before pad-to-even, needed to undo the padding.
    pub input_w: usize,
    pub input_h: usize,
}

#[derive(Debug, Clone)]
pub struct DwtPyramid {
    /// Finest-to-coarsest detail levels.
    pub levels: Vec<DwtLevel>,
    pub ll: Vec<f32>,
    pub ll_w: usize,
    pub ll_h: usize,
}

fn pad_to_even(data: &[f32], w: usize, h: usize) -> (Vec<f32>, usize, usize) {
    let nw = w + w % 2;
    let nh = h + h % 2;
    if nw == w && nh == h {
        return (data.to_vec(), w, h);
    }
    let mut out = vec![0.0f32; nw * nh];
    for y in 0..nh {
        let sy = y.min(h - 1);
        for x in 0..nw {
            out[y * nw + x] = data[sy * w + x.min(w - 1)];
        }
    }
    (out, nw, nh)
}

fn decompose_level(data: &[f32], w: usize, h: usize) -> (DwtLevel, Vec<f32>) {
    debug_assert!(w % 2 == 0 && h % 2 == 0);
    let (bw, bh) = (w / 2, h / 2);
    // Row pass: low half | high half. Intermediates stay in f64 so the
    // column pass rounds only once.
    let mut rows = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..bw {
            let a = data[y * w + 2 * x] as f64;
            let b = data[y * w + 2 * x + 1] as f64;
            rows[y * w + x] = (a + b) * INV_SQRT2;
            rows[y * w + bw + x] = (a - b) * INV_SQRT2;
        }
    }
    // Column pass.
    let mut ll = vec![0.0f32; bw * bh];
    let mut lh = vec![0.0f32; bw * bh];
    let mut hl = vec![0.0f32; bw * bh];
    let mut hh = vec![0.0f32; bw * bh];
    for y in 0..bh {
        for x in 0..bw {
            let la = rows[(2 * y) * w + x];
            let lb = rows[(2 * y + 1) * w + x];
            let ha = rows[(2 * y) * w + bw + x];
            let hb = rows[(2 * y + 1) * w + bw + x];
            ll[y * bw + x] = ((la + lb) * INV_SQRT2) as f32;
            lh[y * bw + x] = ((la - lb) * INV_SQRT2) as f32;
            hl[y * bw + x] = ((ha + hb) * INV_SQRT2) as f32;
            hh[y * bw + x] = ((ha - hb) * INV_SQRT2) as f32;
        }
    }
    (DwtLevel { lh, hl, hh, band_w: bw, band_h: bh, input_w: w, input_h: h }, ll)
}

/// Forward multi-level Haar decomposition.
pub fn haar_forward(img: &Image, levels: usize) -> Result<DwtPyramid> {
    if levels < 1 {
        return Err(Error::InvalidLevels(levels));
    }
    let mut data = img.data().to_vec();
    let mut w = img.width();
    let mut h = img.height();
    let mut out_levels = Vec::with_capacity(levels);
    for _ in 0..levels {
        if w < 2 || h < 2 {
            return Err(Error::ImageTooSmall(format!(
                "band shrunk to {}x{} before all {} levels applied",
                w, h, levels
            )));
        }
        let (input_w, input_h) = (w, h);
        let (padded, pw, ph) = pad_to_even(&data, w, h);
        let (mut level, ll) = decompose_level(&padded, pw, ph);
        level.input_w = input_w;
        level.input_h = input_h;
        data = ll;
        w = level.band_w;
        h = level.band_h;
        out_levels.push(level);
    }
    Ok(DwtPyramid { levels: out_levels, ll: data, ll_w: w, ll_h: h })
}

/// Inverse of [`haar_forward`]. Exact (up to float rounding) when no
/// pad-to-even occurred; padded levels are cropped back to their original
/// dimensions.
pub fn haar_inverse(pyramid: &DwtPyramid) -> Result<Image> {
    let mut data = pyramid.ll.clone();
    for level in pyramid.levels.iter().rev() {
        let (bw, bh) = (level.band_w, level.band_h);
        if data.len() != bw * bh {
            return Err(Error::ShapeMismatch(format!(
                "LL band has {} values, level expects {}x{}",
                data.len(),
                bw,
                bh
            )));
        }
        let (w, h) = (2 * bw, 2 * bh);
        let mut full = vec![0.0f32; w * h];
        for y in 0..bh {
            for x in 0..bw {
                let ll = data[y * bw + x] as f64;
                let lh = level.lh[y * bw + x] as f64;
                let hl = level.hl[y * bw + x] as f64;
                let hh = level.hh[y * bw + x] as f64;
                // Undo column pass, then row pass.
                let la = (ll + lh) * INV_SQRT2;
                let lb = (ll - lh) * INV_SQRT2;
                let ha = (hl + hh) * INV_SQRT2;
                let hb = (hl - hh) * INV_SQRT2;
                full[(2 * y) * w + 2 * x] = ((la + ha) * INV_SQRT2) as f32;
                full[(2 * y) * w + 2 * x + 1] = ((la - ha) * INV_SQRT2) as f32;
                full[(2 * y + 1) * w + 2 * x] = ((lb + hb) * INV_SQRT2) as f32;
                full[(2 * y + 1) * w + 2 * x + 1] = ((lb - hb) * INV_SQRT2) as f32;
            }
        }
        // Crop away any pad-to-even replication.
        if level.input_w != w || level.input_h != h {
            let mut cropped = vec![0.0f32; level.input_w * level.input_h];
            for y in 0..level.input_h {
                cropped[y * level.input_w..(y + 1) * level.input_w]
                    .copy_from_slice(&full[y * w..y * w + level.input_w]);
            }
            data = cropped;
        } else {
            data = full;
        }
    }
    let level0 = &pyramid.levels[0];
    Image::new(level0.input_w, level0.input_h, data, Domain::Unit)
}

fn band_stats(band: &[f32], out: &mut Vec<f32>) {
    let n = band.len() as f64;
    let mean: f64 = band.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var: f64 = band
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let energy: f64 = band.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / n;
    out.push(mean as f32);
    out.push(var.sqrt() as f32);
    out.push(energy as f32);
}

/// `[mean, std, energy]` per sub-band: final LL first, then LH/HL/HH for
/// each level from finest to coarsest. Length `(3 * levels + 1) * 3`.
pub fn dwt_features(img: &Image, levels: usize) -> Result<Vec<f32>> {
    let pyramid = haar_forward(img, levels)?;
    let mut out = Vec::with_capacity((3 * levels + 1) * 3);
    band_stats(&pyramid.ll, &mut out);
    for level in &pyramid.levels {
        band_stats(&level.lh, &mut out);
        band_stats(&level.hl, &mut out);
        band_stats(&level.hh, &mut out);
    }
    Ok(out)
}

pub fn dwt_feature_len(levels: usize) -> usize {
    (3 * levels + 1) * 3
}
