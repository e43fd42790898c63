//! Gabor filter bank: oriented sinusoids under a Gaussian envelope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::Image;

use super::conv::{convolve2d_reflect, convolve_separable_reflect};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GaborBank {
    /// Orientations in degrees.
    pub orientations_deg: Vec<f64>,
    /// Wavelengths in pixels.
    pub wavelengths: Vec<f64>,
    /// Phase offset.
    pub psi: f64,
    /// Envelope sigma as a fraction of the wavelength (bandwidth-one
    /// convention).
    pub sigma_ratio: f64,
    /// Spatial aspect ratio.
    pub gamma: f64,
}

impl Default for GaborBank {
    fn default() -> Self {
        GaborBank {
            orientations_deg: vec![0.0, 45.0, 90.0, 135.0],
            wavelengths: vec![4.0, 8.0],
            psi: 0.0,
            sigma_ratio: 0.56,
            gamma: 0.5,
        }
    }
}

impl GaborBank {
    fn validate(&self) -> Result<()> {
        if self.orientations_deg.is_empty()
            || self.wavelengths.is_empty()
            || self.wavelengths.iter().any(|&l| l <= 0.0)
            || self.sigma_ratio <= 0.0
            || self.gamma <= 0.0
        {
            return Err(Error::InvalidParam(format!("bad Gabor bank: {:?}", self)));
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        self.orientations_deg.len() * self.wavelengths.len() * 2
    }
}

/// Square Gabor kernel of radius `ceil(3 sigma)` sampled on the integer
/// grid. Row-major, y increasing downward.
pub fn gabor_kernel(
    theta_deg: f64,
    lambda: f64,
    psi: f64,
    sigma: f64,
    gamma: f64,
) -> Result<(Vec<f32>, usize)> {
    if lambda <= 0.0 || sigma <= 0.0 || gamma <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "gabor kernel needs lambda, sigma, gamma > 0 (got {}, {}, {})",
            lambda, sigma, gamma
        )));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let side = 2 * radius + 1;
    let theta = theta_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut kernel = Vec::with_capacity(side * side);
    for yi in 0..side {
        let y = yi as f64 - radius as f64;
        for xi in 0..side {
            let x = xi as f64 - radius as f64;
            let xp = x * cos + y * sin;
            let yp = -x * sin + y * cos;
            let envelope = (-(xp * xp + gamma * gamma * yp * yp) / (2.0 * sigma * sigma)).exp();
            let carrier = (2.0 * std::f64::consts::PI * xp / lambda + psi).cos();
            kernel.push((envelope * carrier) as f32);
        }
    }
    Ok((kernel, radius))
}

/// Axis-aligned orientations factor into an outer product of a modulated
/// profile and a plain Gaussian envelope, letting the convolution run as
/// two 1-D passes.
fn separable_profiles(
    theta_deg: f64,
    lambda: f64,
    psi: f64,
    sigma: f64,
    gamma: f64,
    radius: usize,
) -> Option<(Vec<f32>, Vec<f32>)> {
    let side = 2 * radius + 1;
    // `sign` orients the modulation axis: x' = +/-x for 0/180 degrees and
    // +/-y for 90/270, which only matters for a nonzero phase.
    let modulated = |sign: f64| -> Vec<f32> {
        (0..side)
            .map(|i| {
                let t = sign * (i as f64 - radius as f64);
                let env = (-t * t / (2.0 * sigma * sigma)).exp();
                (env * (2.0 * std::f64::consts::PI * t / lambda + psi).cos()) as f32
            })
            .collect()
    };
    let envelope: Vec<f32> = (0..side)
        .map(|i| {
            let t = i as f64 - radius as f64;
            (-(gamma * gamma * t * t) / (2.0 * sigma * sigma)).exp() as f32
        })
        .collect();
    match theta_deg.rem_euclid(360.0) {
        t if t == 0.0 => Some((modulated(1.0), envelope)),
        t if t == 180.0 => Some((modulated(-1.0), envelope)),
        t if t == 90.0 => Some((envelope, modulated(1.0))),
        t if t == 270.0 => Some((envelope, modulated(-1.0))),
        _ => None,
    }
}

/// Per-(orientation, wavelength) response statistics: `[mean(|r|), std(|r|)]`.
/// Ordering: orientations outer, wavelengths inner.
pub fn gabor_features(img: &Image, bank: &GaborBank) -> Result<Vec<f32>> {
    bank.validate()?;
    let mut out = Vec::with_capacity(bank.feature_len());
    for &theta in &bank.orientations_deg {
        for &lambda in &bank.wavelengths {
            let sigma = bank.sigma_ratio * lambda;
            let radius = (3.0 * sigma).ceil() as usize;
            let response = match separable_profiles(theta, lambda, bank.psi, sigma, bank.gamma, radius)
            {
                Some((kx, ky)) => convolve_separable_reflect(img, &kx, &ky, radius),
                None => {
                    let (kernel, radius) =
                        gabor_kernel(theta, lambda, bank.psi, sigma, bank.gamma)?;
                    convolve2d_reflect(img, &kernel, radius)
                }
            };
            let n = response.len() as f64;
            let mean: f64 = response.iter().map(|&r| r.abs() as f64).sum::<f64>() / n;
            let var: f64 = response
                .iter()
                .map(|&r| {
                    let d = r.abs() as f64 - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            out.push(mean as f32);
            out.push(var.sqrt() as f32);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::Domain;

    #[test]
    fn kernel_origin_is_one_at_zero_phase() {
        let (kernel, radius) = gabor_kernel(30.0, 4.0, 0.0, 2.0, 0.5).unwrap();
        let side = 2 * radius + 1;
        assert_eq!(kernel[radius * side + radius], 1.0);
    }

    #[test]
    fn kernel_even_symmetry_at_zero_phase() {
        let (kernel, radius) = gabor_kernel(72.0, 5.0, 0.0, 1.8, 0.5).unwrap();
        let side = 2 * radius + 1;
        for y in 0..side {
            for x in 0..side {
                let a = kernel[y * side + x];
                let b = kernel[(side - 1 - y) * side + (side - 1 - x)];
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn ninety_degree_rotation_identity() {
        let (k90, radius) = gabor_kernel(90.0, 4.0, 0.0, 2.0, 0.5).unwrap();
        let (k0, r0) = gabor_kernel(0.0, 4.0, 0.0, 2.0, 0.5).unwrap();
        assert_eq!(radius, r0);
        let side = 2 * radius + 1;
        for t in 0..side {
            // theta=90 sampled along the y axis equals theta=0 along x.
            let a = k90[t * side + radius];
            let b = k0[radius * side + t];
            assert!((a - b).abs() < 1e-6, "t={}: {} vs {}", t, a, b);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(matches!(
            gabor_kernel(0.0, 0.0, 0.0, 1.0, 0.5).unwrap_err(),
            Error::InvalidParam(_)
        ));
        assert!(matches!(
            gabor_kernel(0.0, 4.0, 0.0, -1.0, 0.5).unwrap_err(),
            Error::InvalidParam(_)
        ));
    }

    #[test]
    fn default_bank_yields_16_values() {
        let img = Image::new(16, 16, vec![0.5; 256], Domain::Unit).unwrap();
        let feats = gabor_features(&img, &GaborBank::default()).unwrap();
        assert_eq!(feats.len(), 16);
    }

    #[test]
    fn constant_image_has_zero_std_channels() {
        let img = Image::new(20, 20, vec![0.7; 400], Domain::Unit).unwrap();
        let feats = gabor_features(&img, &GaborBank::default()).unwrap();
        for std in feats.iter().skip(1).step_by(2) {
            assert_eq!(*std, 0.0);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = crate::rng::CounterRng::new(2, 0);
        let data: Vec<f32> = (0..400).map(|_| rng.next_f64() as f32).collect();
        let img = Image::new(20, 20, data, Domain::Unit).unwrap();
        let a = gabor_features(&img, &GaborBank::default()).unwrap();
        let b = gabor_features(&img, &GaborBank::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_path_matches_dense_kernel() {
        use super::super::conv::{convolve2d_reflect, convolve_separable_reflect};
        let mut rng = crate::rng::CounterRng::new(21, 0);
        let data: Vec<f32> = (0..30 * 30).map(|_| rng.next_f64() as f32).collect();
        let img = Image::new(30, 30, data, Domain::Unit).unwrap();
        for theta in [0.0, 90.0, 180.0, 270.0] {
            let (lambda, sigma, gamma, psi) = (4.0, 2.24, 0.5, 0.3);
            let radius = (3.0f64 * sigma).ceil() as usize;
            let (kx, ky) =
                separable_profiles(theta, lambda, psi, sigma, gamma, radius).unwrap();
            let fast = convolve_separable_reflect(&img, &kx, &ky, radius);
            let (kernel, r2) = gabor_kernel(theta, lambda, psi, sigma, gamma).unwrap();
            assert_eq!(radius, r2);
            let dense = convolve2d_reflect(&img, &kernel, radius);
            for (a, b) in fast.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-4, "theta {}: {} vs {}", theta, a, b);
            }
        }
        assert!(separable_profiles(45.0, 4.0, 0.0, 2.24, 0.5, 7).is_none());
    }

    #[test]
    fn mean_channels_linear_in_image() {
        let mut rng = crate::rng::CounterRng::new(6, 0);
        let base: Vec<f32> = (0..400).map(|_| rng.next_f64() as f32 * 0.25).collect();
        let img = Image::new(20, 20, base.clone(), Domain::Unit).unwrap();
        let scaled =
            Image::new(20, 20, base.iter().map(|v| v * 3.0).collect(), Domain::Unit).unwrap();
        let a = gabor_features(&img, &GaborBank::default()).unwrap();
        let b = gabor_features(&scaled, &GaborBank::default()).unwrap();
        for (x, y) in a.iter().step_by(2).zip(b.iter().step_by(2)) {
            assert!((y - 3.0 * x).abs() < 1e-4 * (1.0 + y.abs()), "{} vs {}", 3.0 * x, y);
        }
    }
}
