//! Radiomics-enhanced brain-tumor MRI classification pipeline.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`imgio`]: PGM decoding, dataset scanning, splits, and the binary
//!   feature-file format (`RFV1`).
//! - [`preprocess`]: bilinear resize, min-max normalization, and the seeded
//!   geometric/photometric augmentation pipeline.
//! - [`radiomics`]: the four handcrafted descriptors (HOG, LBP, Gabor,
//!   Haar wavelet) and radiomic tensor assembly.
//! - [`fusionnet`]: deep/radiomic feature fusion and the trainable
//!   dense + BatchNorm + GELU + Dropout + softmax head (Adam,
//!   ReduceLROnPlateau, early stopping).
//! - [`eval`]: confusion matrix, precision/recall/F1 reports, and
//!   test-time augmentation.
//! - [`cli`]: the `extract` / `train` / `eval` commands and run manifests.

pub mod cli;
pub mod error;
pub mod eval;
pub mod fusionnet;
pub mod imgio;
pub mod preprocess;
pub mod radiomics;
pub mod rng;

pub use error::{Error, Result};
