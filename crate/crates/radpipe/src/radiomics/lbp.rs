//! Local Binary Patterns.
//!
//! Per-pixel code over `P` neighbors sampled on the radius-`R` circle with
//! bilinear interpolation for off-grid points, aggregated into an
//! L1-normalized histogram over the interior pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::Image;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LbpConfig {
    pub neighbors: usize,
    pub radius: f64,
}

impl Default for LbpConfig {
    fn default() -> Self {
        LbpConfig { neighbors: 8, radius: 1.0 }
    }
}

impl LbpConfig {
    pub fn histogram_bins(&self) -> usize {
        1 << self.neighbors
    }

    fn validate(&self) -> Result<()> {
        if self.neighbors == 0 || self.neighbors > 16 || self.radius <= 0.0 {
            return Err(Error::InvalidParam(format!("bad LBP config: {:?}", self)));
        }
        Ok(())
    }
}

/// Bilinear sample in lerp form, exact when the four corners are equal.
#[inline]
fn sample(img: &Image, x: f64, y: f64) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = (x - x0) as f32;
    let fy = (y - y0) as f32;
    let (xi, yi) = (x0 as usize, y0 as usize);
    let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
    let x1 = (xi + 1).min(img.width() - 1);
    let y1 = (yi + 1).min(img.height() - 1);
    let top = lerp(img.get(xi, yi), img.get(x1, yi), fx);
    let bot = lerp(img.get(xi, y1), img.get(x1, y1), fx);
    lerp(top, bot, fy)
}

/// Precomputed circle sampling offset: on-grid neighbors are read
/// directly, off-grid ones interpolated.
enum Offset {
    Grid(isize, isize),
    Frac(f64, f64),
}

/// Circle sampling offsets, with near-integer components snapped so
/// axis-aligned neighbors hit the grid exactly.
fn neighbor_offsets(cfg: &LbpConfig) -> Vec<Offset> {
    (0..cfg.neighbors)
        .map(|p| {
            let angle = 2.0 * std::f64::consts::PI * p as f64 / cfg.neighbors as f64;
            let mut dx = cfg.radius * angle.cos();
            let mut dy = cfg.radius * angle.sin();
            if (dx - dx.round()).abs() < 1e-9 {
                dx = dx.round();
            }
            if (dy - dy.round()).abs() < 1e-9 {
                dy = dy.round();
            }
            if dx.fract() == 0.0 && dy.fract() == 0.0 {
                Offset::Grid(dx as isize, dy as isize)
            } else {
                Offset::Frac(dx, dy)
            }
        })
        .collect()
}

fn code_at(img: &Image, x: usize, y: usize, offsets: &[Offset]) -> u32 {
    let center = img.get(x, y);
    let mut code = 0u32;
    for (p, offset) in offsets.iter().enumerate() {
        let neighbor = match *offset {
            Offset::Grid(dx, dy) => {
                img.get((x as isize + dx) as usize, (y as isize + dy) as usize)
            }
            Offset::Frac(dx, dy) => sample(img, x as f64 + dx, y as f64 + dy),
        };
        if neighbor >= center {
            code |= 1 << p;
        }
    }
    code
}

/// LBP code for a single interior pixel.
pub fn lbp_code(img: &Image, x: usize, y: usize, cfg: &LbpConfig) -> u32 {
    code_at(img, x, y, &neighbor_offsets(cfg))
}

/// L1-normalized histogram of LBP codes over the interior pixels.
pub fn lbp_features(img: &Image, cfg: &LbpConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let margin = cfg.radius.ceil() as usize;
    let (w, h) = (img.width(), img.height());
    if w <= 2 * margin || h <= 2 * margin {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image too small for LBP radius {}",
            w, h, cfg.radius
        )));
    }
    let offsets = neighbor_offsets(cfg);
    let mut hist = vec![0u64; cfg.histogram_bins()];
    let mut total = 0u64;
    for y in margin..h - margin {
        for x in margin..w - margin {
            hist[code_at(img, x, y, &offsets) as usize] += 1;
            total += 1;
        }
    }
    Ok(hist.iter().map(|&c| (c as f64 / total as f64) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::Domain;

    fn unit(w: usize, h: usize, data: Vec<f32>) -> Image {
        Image::new(w, h, data, Domain::Unit).unwrap()
    }

    #[test]
    fn constant_image_all_codes_255() {
        let img = unit(8, 8, vec![0.3; 64]);
        let hist = lbp_features(&img, &LbpConfig::default()).unwrap();
        assert_eq!(hist.len(), 256);
        assert_eq!(hist[255], 1.0);
        assert!(hist[..255].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn isolated_peak_gives_code_zero() {
        let mut data = vec![0.0f32; 9];
        data[4] = 5.0;
        let img = unit(3, 3, data);
        assert_eq!(lbp_code(&img, 1, 1, &LbpConfig::default()), 0);
    }

    #[test]
    fn histogram_sums_to_one() {
        let mut rng = crate::rng::CounterRng::new(8, 0);
        let img = unit(16, 16, (0..256).map(|_| rng.next_f64() as f32).collect());
        let hist = lbp_features(&img, &LbpConfig::default()).unwrap();
        // Bins are stored as f32, so the sum is 1 up to f32 rounding.
        let sum: f64 = hist.iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }

    #[test]
    fn shift_invariance() {
        let mut rng = crate::rng::CounterRng::new(9, 0);
        let base: Vec<f32> = (0..256).map(|_| rng.next_f64() as f32 * 0.5).collect();
        let img = unit(16, 16, base.clone());
        let shifted = unit(16, 16, base.iter().map(|v| v + 0.25).collect());
        assert_eq!(
            lbp_features(&img, &LbpConfig::default()).unwrap(),
            lbp_features(&shifted, &LbpConfig::default()).unwrap()
        );
    }

    #[test]
    fn too_small_rejected() {
        let img = unit(2, 2, vec![0.0; 4]);
        assert!(matches!(
            lbp_features(&img, &LbpConfig::default()).unwrap_err(),
            Error::ImageTooSmall(_)
        ));
    }
}
