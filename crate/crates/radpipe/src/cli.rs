//! Pipeline front-end: feature extraction, training, and evaluation runs
//! plus the reproducibility manifest each stage writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{evaluate_features, metrics_from_confusion, tta_predict, ConfusionMatrix};
use crate::fusionnet::train::history_to_csv;
use crate::fusionnet::{load_checkpoint, save_checkpoint, train, Mat, TrainConfig};
use crate::imgio::{
    load_pgm, read_feature_file, scan_dataset, stratified_split, write_feature_file,
    FeatureMatrix, Image, LabeledDataset,
};
use crate::preprocess::{normalize_minmax, resize_bilinear, AugmentConfig};
use crate::radiomics::{extract_tensor, FeatureConfig, SegmentTable};

/// Full run configuration. A resolved copy is embedded in the manifest so
/// a run can be reproduced from its output directory alone.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunConfig {
    /// Dataset root containing `Training/` and `Testing/` class trees.
    pub data_root: PathBuf,
    /// Output directory for all artifacts.
    pub out_dir: PathBuf,
    /// Square preprocessing size in pixels.
    pub resize: usize,
    /// Fraction of the training split kept for fitting; the rest validates.
    pub train_fraction: f64,
    pub augment: AugmentConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    /// Optional externally produced deep-feature files, row-aligned with
    /// the extracted feature files of the same split.
    pub deep_train_features: Option<PathBuf>,
    pub deep_val_features: Option<PathBuf>,
    pub deep_test_features: Option<PathBuf>,
    pub tta: bool,
    pub tta_views: usize,
    /// Master seed; propagated to the augmentation and training seeds.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_root: PathBuf::from("."),
            out_dir: PathBuf::from("run"),
            resize: 224,
            train_fraction: 0.9,
            augment: AugmentConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            deep_train_features: None,
            deep_val_features: None,
            deep_test_features: None,
            tta: false,
            tta_views: 8,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Push the master seed into the stage seeds so one knob controls the
    /// whole run.
    pub fn resolve(mut self) -> Self {
        self.augment.seed = self.seed;
        self.train.seed = self.seed;
        self
    }
}

/// Reproducibility record written to `manifest.json` after every stage.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub config: RunConfig,
    /// Fixed at 1; all stages are single-threaded.
    pub threads: usize,
    /// SHA-256 of files each stage consumed.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of files each stage produced.
    pub outputs: BTreeMap<String, String>,
    pub extract_ms_per_image: Option<f64>,
    pub tta_accuracy_delta: Option<f64>,
}

impl Manifest {
    fn new(config: &RunConfig) -> Self {
        Manifest {
            config: config.clone(),
            threads: 1,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            extract_ms_per_image: None,
            tta_accuracy_delta: None,
        }
    }

    fn load_or_new(config: &RunConfig) -> Self {
        let path = config.out_dir.join("manifest.json");
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|_| Manifest::new(config)),
            Err(_) => Manifest::new(config),
        }
    }

    fn save(&self, out_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(out_dir.join("manifest.json"), text)?;
        Ok(())
    }

    fn record_output(&mut self, out_dir: &Path, name: &str) -> Result<()> {
        let digest = sha256_file(&out_dir.join(name))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Load, resize, and min-max normalize one image.
pub fn preprocess_image(path: &Path, resize: usize) -> Result<Image> {
    let img = load_pgm(path)?;
    let resized = resize_bilinear(&img, resize, resize)?;
    Ok(normalize_minmax(&resized))
}

fn extract_split(
    ds: &LabeledDataset,
    cfg: &RunConfig,
    tag: &str,
) -> Result<(FeatureMatrix, SegmentTable, f64)> {
    let started = Instant::now();
    let mut rows = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    let mut table = None;
    for (i, (path, label)) in ds.samples.iter().enumerate() {
        let img = preprocess_image(path, cfg.resize)?;
        let tensor = extract_tensor(&img, &cfg.features)?;
        if table.is_none() {
            table = Some(SegmentTable::from_tensor(&tensor));
        }
        rows.push(tensor.vector);
        labels.push(*label as u8);
        if (i + 1) % 200 == 0 {
            eprintln!("extract[{}]: {}/{} images", tag, i + 1, ds.len());
        }
    }
    let ms_per_image = started.elapsed().as_secs_f64() * 1000.0 / ds.len().max(1) as f64;
    eprintln!("extract[{}]: {} images, {:.2} ms/image", tag, ds.len(), ms_per_image);
    let matrix = FeatureMatrix::from_rows(&rows, &labels)?;
    Ok((matrix, table.ok_or(Error::EmptyDataset)?, ms_per_image))
}

/// Extract radiomic features for the train/validation/test splits and
/// write the feature files plus the segment-table sidecar.
pub fn cmd_extract(cfg: &RunConfig) -> Result<()> {
    let training = scan_dataset(&cfg.data_root.join("Training"))?;
    let testing = scan_dataset(&cfg.data_root.join("Testing"))?;
    let (train_ds, val_ds) = stratified_split(&training, cfg.train_fraction, cfg.seed)?;

    fs::create_dir_all(&cfg.out_dir)?;
    let (train_m, table, train_ms) = extract_split(&train_ds, cfg, "train")?;
    let (val_m, _, val_ms) = extract_split(&val_ds, cfg, "val")?;
    let (test_m, _, test_ms) = extract_split(&testing, cfg, "test")?;

    write_feature_file(&cfg.out_dir.join("train_features.rfv"), &train_m)?;
    write_feature_file(&cfg.out_dir.join("val_features.rfv"), &val_m)?;
    write_feature_file(&cfg.out_dir.join("test_features.rfv"), &test_m)?;
    fs::write(
        cfg.out_dir.join("segments.json"),
        serde_json::to_string_pretty(&table)?,
    )?;

    let mut manifest = Manifest::load_or_new(cfg);
    manifest.config = cfg.clone();
    let total = train_ds.len() + val_ds.len() + testing.len();
    manifest.extract_ms_per_image = Some(
        (train_ms * train_ds.len() as f64
            + val_ms * val_ds.len() as f64
            + test_ms * testing.len() as f64)
            / total as f64,
    );
    for name in ["train_features.rfv", "val_features.rfv", "test_features.rfv", "segments.json"] {
        manifest.record_output(&cfg.out_dir, name)?;
    }
    manifest.save(&cfg.out_dir)
}

/// Row-wise deep || radiomic concatenation of two aligned feature files.
fn fuse_matrix(radiomic: &FeatureMatrix, deep: Option<&FeatureMatrix>) -> Result<FeatureMatrix> {
    let deep = match deep {
        None => return Ok(radiomic.clone()),
        Some(d) => d,
    };
    if deep.count != radiomic.count {
        return Err(Error::DimMismatch(format!(
            "deep feature file has {} rows, radiomic file has {}",
            deep.count, radiomic.count
        )));
    }
    if deep.labels != radiomic.labels {
        return Err(Error::DimMismatch("deep/radiomic label streams disagree".into()));
    }
    let mut rows = Vec::with_capacity(radiomic.count);
    for i in 0..radiomic.count {
        let mut row = Vec::with_capacity(deep.dim + radiomic.dim);
        row.extend_from_slice(deep.row(i));
        row.extend_from_slice(radiomic.row(i));
        rows.push(row);
    }
    FeatureMatrix::from_rows(&rows, &radiomic.labels)
}

fn load_features(
    cfg: &RunConfig,
    manifest: &mut Manifest,
    name: &str,
    deep_path: Option<&PathBuf>,
) -> Result<FeatureMatrix> {
    let path = cfg.out_dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let digest = sha256_file(&path)?;
    if let Some(recorded) = manifest.outputs.get(name) {
        if recorded != &digest {
            return Err(Error::StaleCache(format!(
                "{} no longer matches the digest in manifest.json; re-run extract",
                name
            )));
        }
    }
    manifest.inputs.insert(name.to_string(), digest);
    let radiomic = read_feature_file(&path)?;
    let deep = match deep_path {
        Some(p) => {
            manifest
                .inputs
                .insert(p.display().to_string(), sha256_file(p)?);
            Some(read_feature_file(p)?)
        }
        None => None,
    };
    fuse_matrix(&radiomic, deep.as_ref())
}

fn to_mat(features: &FeatureMatrix) -> Mat {
    Mat {
        rows: features.count,
        cols: features.dim,
        data: features.data.iter().map(|&v| v as f64).collect(),
    }
}

/// Train the fusion head on the extracted (optionally deep-fused) feature
/// files; writes the checkpoint, the learning-curve CSV, and the manifest.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let mut manifest = Manifest::load_or_new(cfg);
    manifest.config = cfg.clone();
    let train_m =
        load_features(cfg, &mut manifest, "train_features.rfv", cfg.deep_train_features.as_ref())?;
    let val_m =
        load_features(cfg, &mut manifest, "val_features.rfv", cfg.deep_val_features.as_ref())?;

    let classes: Vec<String> =
        crate::imgio::CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let (params, history) = train(
        &to_mat(&train_m),
        &train_m.labels,
        &to_mat(&val_m),
        &val_m.labels,
        &classes,
        &cfg.train,
    )?;
    eprintln!(
        "train: {} epochs, best val loss {:.6}",
        history.len(),
        history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min)
    );

    save_checkpoint(&cfg.out_dir.join("model.rhn"), &params)?;
    fs::write(cfg.out_dir.join("history.csv"), history_to_csv(&history))?;
    manifest.record_output(&cfg.out_dir, "model.rhn")?;
    manifest.record_output(&cfg.out_dir, "history.csv")?;
    manifest.save(&cfg.out_dir)
}

/// Evaluate the trained head on the test feature file; with TTA enabled,
/// also re-predicts from augmented test images and reports the delta.
pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let mut manifest = Manifest::load_or_new(cfg);
    manifest.config = cfg.clone();
    let model_path = cfg.out_dir.join("model.rhn");
    if !model_path.is_file() {
        return Err(Error::MissingInput(model_path.display().to_string()));
    }
    manifest
        .inputs
        .insert("model.rhn".to_string(), sha256_file(&model_path)?);
    let params = load_checkpoint(&model_path)?;
    let test_m =
        load_features(cfg, &mut manifest, "test_features.rfv", cfg.deep_test_features.as_ref())?;

    let report = evaluate_features(&params, &test_m)?;
    eprintln!("eval: accuracy {:.2}% over {} samples", report.accuracy, report.n_samples);
    fs::write(
        cfg.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    manifest.record_output(&cfg.out_dir, "metrics.json")?;

    if cfg.tta {
        let deep = match cfg.deep_test_features.as_ref() {
            Some(p) => Some(read_feature_file(p)?),
            None => None,
        };
        let testing = scan_dataset(&cfg.data_root.join("Testing"))?;
        if testing.len() != test_m.count {
            return Err(Error::StaleCache(format!(
                "test feature file has {} rows but the Testing split has {} images",
                test_m.count,
                testing.len()
            )));
        }
        let mut pred = Vec::with_capacity(testing.len());
        let mut truth = Vec::with_capacity(testing.len());
        for (i, (path, label)) in testing.samples.iter().enumerate() {
            let img = preprocess_image(path, cfg.resize)?;
            let deep_row = deep.as_ref().map(|d| d.row(i));
            let probs = tta_predict(
                &params,
                &img,
                deep_row,
                &cfg.features,
                &cfg.augment,
                cfg.tta_views,
            )?;
            pred.push(crate::eval::argmax(&probs) as u8);
            truth.push(*label as u8);
            if (i + 1) % 200 == 0 {
                eprintln!("tta: {}/{} images", i + 1, testing.len());
            }
        }
        let cm = ConfusionMatrix::from_labels(&params.classes, &truth, &pred)?;
        let tta_report = metrics_from_confusion(&cm, true)?;
        eprintln!(
            "eval(tta): accuracy {:.2}% ({} views)",
            tta_report.accuracy, cfg.tta_views
        );
        fs::write(
            cfg.out_dir.join("metrics_tta.json"),
            serde_json::to_string_pretty(&tta_report)?,
        )?;
        manifest.record_output(&cfg.out_dir, "metrics_tta.json")?;
        manifest.tta_accuracy_delta = Some(tta_report.accuracy - report.accuracy);
    }
    manifest.save(&cfg.out_dir)
}
