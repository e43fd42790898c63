//! Histogram of Oriented Gradients.
//!
//! Central-difference gradients with a replicated border, unsigned
//! orientations over [0, 180), magnitude-weighted cell histograms with
//! linear bin interpolation, and block-wise L2 normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::Image;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HogConfig {
    /// Cell side in pixels.
    pub cell_size: usize,
    /// Block side in cells.
    pub block_size: usize,
    /// Block stride in cells.
    pub block_stride: usize,
    /// Orientation bins over [0, 180).
    pub bins: usize,
    pub l2_eps: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig { cell_size: 8, block_size: 2, block_stride: 1, bins: 9, l2_eps: 1e-6 }
    }
}

impl HogConfig {
    fn validate(&self) -> Result<()> {
        if self.cell_size < 2 || self.bins < 2 || self.block_size < 1 || self.block_stride < 1 {
            return Err(Error::InvalidParam(format!("bad HOG config: {:?}", self)));
        }
        Ok(())
    }

    /// Feature length for a given image size (whole cells only).
    pub fn feature_len(&self, width: usize, height: usize) -> usize {
        let cells_x = width / self.cell_size;
        let cells_y = height / self.cell_size;
        if cells_x < self.block_size || cells_y < self.block_size {
            return 0;
        }
        let blocks_x = (cells_x - self.block_size) / self.block_stride + 1;
        let blocks_y = (cells_y - self.block_size) / self.block_stride + 1;
        blocks_y * blocks_x * self.block_size * self.block_size * self.bins
    }
}

pub fn hog_features(img: &Image, cfg: &HogConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    let cells_x = w / cfg.cell_size;
    let cells_y = h / cfg.cell_size;
    if cells_x < cfg.block_size || cells_y < cfg.block_size {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image holds {}x{} cells, block needs {}",
            w, h, cells_x, cells_y, cfg.block_size
        )));
    }

    // Magnitude-weighted orientation histogram per cell.
    let bin_width = 180.0 / cfg.bins as f64;
    let mut cells = vec![0.0f64; cells_x * cells_y * cfg.bins];
    let span_x = cells_x * cfg.cell_size;
    let span_y = cells_y * cfg.cell_size;
    for y in 0..span_y {
        let ym = if y == 0 { 0 } else { y - 1 };
        let yp = (y + 1).min(h - 1);
        for x in 0..span_x {
            let xm = if x == 0 { 0 } else { x - 1 };
            let xp = (x + 1).min(w - 1);
            let gx = (img.get(xp, y) - img.get(xm, y)) as f64;
            let gy = (img.get(x, yp) - img.get(x, ym)) as f64;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx).to_degrees();
            if theta < 0.0 {
                theta += 180.0;
            }
            if theta >= 180.0 {
                theta -= 180.0;
            }
            // Bin centers sit at i * bin_width; votes split linearly
            // between the two nearest centers.
            let t = theta / bin_width;
            let b0 = t.floor() as usize % cfg.bins;
            let frac = t - t.floor();
            let cell = (y / cfg.cell_size) * cells_x + x / cfg.cell_size;
            cells[cell * cfg.bins + b0] += mag * (1.0 - frac);
            cells[cell * cfg.bins + (b0 + 1) % cfg.bins] += mag * frac;
        }
    }

    // Block gathering with L2 normalization.
    let blocks_x = (cells_x - cfg.block_size) / cfg.block_stride + 1;
    let blocks_y = (cells_y - cfg.block_size) / cfg.block_stride + 1;
    let block_len = cfg.block_size * cfg.block_size * cfg.bins;
    let mut out = Vec::with_capacity(blocks_x * blocks_y * block_len);
    let mut block = vec![0.0f64; block_len];
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let mut i = 0;
            for cy in 0..cfg.block_size {
                for cx in 0..cfg.block_size {
                    let cell =
                        (by * cfg.block_stride + cy) * cells_x + bx * cfg.block_stride + cx;
                    block[i..i + cfg.bins]
                        .copy_from_slice(&cells[cell * cfg.bins..(cell + 1) * cfg.bins]);
                    i += cfg.bins;
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>()
                + cfg.l2_eps * cfg.l2_eps)
                .sqrt();
            out.extend(block.iter().map(|&v| (v / norm) as f32));
        }
    }
    Ok(out)
}
