//! Handcrafted radiomic descriptors and radiomic tensor assembly.

pub mod conv;
pub mod gabor;
pub mod hog;
pub mod lbp;
pub mod wavelet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::Image;

pub use gabor::{gabor_features, gabor_kernel, GaborBank};
pub use hog::{hog_features, HogConfig};
pub use lbp::{lbp_features, LbpConfig};
pub use wavelet::{dwt_features, haar_forward, haar_inverse};

/// Segment names in tensor order.
pub const SEGMENT_NAMES: [&str; 4] = ["hog", "lbp", "gabor", "wavelet"];

/// Concatenated HOG || LBP || Gabor || Wavelet vector with the segment
/// layout recorded as (offset, length) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiomicTensor {
    pub vector: Vec<f32>,
    /// (offset, length) for HOG, LBP, Gabor, Wavelet, in that order.
    pub segments: [(usize, usize); 4],
}

impl RadiomicTensor {
    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }

    pub fn segment(&self, index: usize) -> &[f32] {
        let (off, len) = self.segments[index];
        &self.vector[off..off + len]
    }
}

/// Concatenate the four descriptor vectors in the fixed order.
pub fn concat_radiomic(
    hog: &[f32],
    lbp: &[f32],
    gabor: &[f32],
    wavelet: &[f32],
) -> Result<RadiomicTensor> {
    let parts: [(&str, &[f32]); 4] =
        [("hog", hog), ("lbp", lbp), ("gabor", gabor), ("wavelet", wavelet)];
    let mut vector = Vec::with_capacity(parts.iter().map(|(_, p)| p.len()).sum());
    let mut segments = [(0usize, 0usize); 4];
    for (i, (name, part)) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::EmptyComponent(match *name {
                "hog" => "hog",
                "lbp" => "lbp",
                "gabor" => "gabor",
                _ => "wavelet",
            }));
        }
        segments[i] = (vector.len(), part.len());
        vector.extend_from_slice(part);
    }
    Ok(RadiomicTensor { vector, segments })
}

/// Extraction configuration for all four descriptors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureConfig {
    pub hog: HogConfig,
    pub lbp: LbpConfig,
    pub gabor: GaborBank,
    pub wavelet_levels: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            hog: HogConfig::default(),
            lbp: LbpConfig::default(),
            gabor: GaborBank::default(),
            wavelet_levels: 2,
        }
    }
}

/// Compute all four descriptors on a preprocessed unit-domain image and
/// assemble the radiomic tensor.
pub fn extract_tensor(img: &Image, cfg: &FeatureConfig) -> Result<RadiomicTensor> {
    let hog = hog_features(img, &cfg.hog)?;
    let lbp = lbp_features(img, &cfg.lbp)?;
    let gabor = gabor_features(img, &cfg.gabor)?;
    let wavelet = dwt_features(img, cfg.wavelet_levels)?;
    concat_radiomic(&hog, &lbp, &gabor, &wavelet)
}

/// Segment table sidecar written next to extracted feature files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SegmentTable {
    pub segments: Vec<SegmentEntry>,
    pub total_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SegmentEntry {
    pub name: String,
    pub offset: usize,
    pub length: usize,
}

impl SegmentTable {
    pub fn from_tensor(t: &RadiomicTensor) -> Self {
        SegmentTable {
            segments: SEGMENT_NAMES
                .iter()
                .zip(t.segments.iter())
                .map(|(name, &(offset, length))| SegmentEntry {
                    name: name.to_string(),
                    offset,
                    length,
                })
                .collect(),
            total_dim: t.len(),
        }
    }
}
