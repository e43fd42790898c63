//! Confusion-matrix evaluation, per-class metrics, and test-time
//! augmentation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusionnet::{fuse_features, predict_probs, Mat, ModelParams};
use crate::imgio::{FeatureMatrix, Image};
use crate::preprocess::{augment, AugmentConfig};
use crate::radiomics::{extract_tensor, FeatureConfig};

/// Square confusion matrix; rows index the true class, columns the
/// predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[String]) -> Self {
        ConfusionMatrix { classes: classes.to_vec(), counts: vec![0; classes.len() * classes.len()] }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn record(&mut self, true_class: usize, pred_class: usize) -> Result<()> {
        let n = self.num_classes();
        if true_class >= n || pred_class >= n {
            return Err(Error::IndexOutOfRange(format!(
                "class ({}, {}) outside {} classes",
                true_class, pred_class, n
            )));
        }
        self.counts[true_class * n + pred_class] += 1;
        Ok(())
    }

    pub fn from_labels(classes: &[String], y_true: &[u8], y_pred: &[u8]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::LengthMismatch(format!(
                "{} true labels vs {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            cm.record(t as usize, p as usize)?;
        }
        Ok(cm)
    }

    pub fn get(&self, true_class: usize, pred_class: usize) -> u64 {
        self.counts[true_class * self.num_classes() + pred_class]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        let n = self.num_classes();
        (0..n).map(|i| self.counts[i * n..(i + 1) * n].to_vec()).collect()
    }
}

/// Precision, recall, and F1 in percent, plus the class support count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Unweighted (macro) averages over all classes, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percent of samples on the confusion-matrix diagonal.
    pub accuracy: f64,
    /// Row/column order of `confusion` and keys of `per_class`.
    pub classes: Vec<String>,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub overall: OverallMetrics,
    pub confusion: Vec<Vec<u64>>,
    pub tta: bool,
    pub n_samples: u64,
}

/// Derive accuracy, per-class precision/recall/F1, and macro averages from
/// a confusion matrix. Undefined ratios (zero denominator) are reported
/// as 0.
pub fn metrics_from_confusion(cm: &ConfusionMatrix, tta: bool) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = cm.num_classes();
    let mut per_class = BTreeMap::new();
    let mut trace = 0u64;
    for c in 0..n {
        let tp = cm.get(c, c);
        trace += tp;
        let fp: u64 = (0..n).filter(|&t| t != c).map(|t| cm.get(t, c)).sum();
        let fn_: u64 = (0..n).filter(|&p| p != c).map(|p| cm.get(c, p)).sum();
        let support = tp + fn_;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.insert(
            cm.classes[c].clone(),
            ClassMetrics {
                precision: 100.0 * precision,
                recall: 100.0 * recall,
                f1: 100.0 * f1,
                support,
            },
        );
    }
    // Macro averages over the per-class percentages, in map order, so the
    // emitted overall block is exactly the mean of the emitted class blocks.
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for m in per_class.values() {
        p_sum += m.precision;
        r_sum += m.recall;
        f_sum += m.f1;
    }
    Ok(EvalReport {
        accuracy: 100.0 * trace as f64 / total as f64,
        classes: cm.classes.clone(),
        per_class,
        overall: OverallMetrics {
            precision: p_sum / n as f64,
            recall: r_sum / n as f64,
            f1: f_sum / n as f64,
        },
        confusion: cm.rows(),
        tta,
        n_samples: total,
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Highest-probability class; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    crate::fusionnet::train::argmax(row)
}

fn features_to_mat(features: &FeatureMatrix) -> Mat {
    Mat {
        rows: features.count,
        cols: features.dim,
        data: features.data.iter().map(|&v| v as f64).collect(),
    }
}

/// Predicted class index per row of a precomputed feature matrix.
pub fn predict_labels(params: &ModelParams, features: &FeatureMatrix) -> Result<Vec<u8>> {
    if features.count == 0 {
        return Err(Error::EmptyDataset);
    }
    let x = features_to_mat(features);
    let chunk = 256;
    let mut labels = Vec::with_capacity(features.count);
    let mut start = 0;
    while start < features.count {
        let end = (start + chunk).min(features.count);
        let mut batch = Mat::zeros(end - start, x.cols);
        for i in start..end {
            batch.row_mut(i - start).copy_from_slice(x.row(i));
        }
        let probs = predict_probs(params, &batch)?;
        for i in 0..probs.rows {
            labels.push(argmax(probs.row(i)) as u8);
        }
        start = end;
    }
    Ok(labels)
}

/// Evaluate a trained head against a labelled feature matrix.
pub fn evaluate_features(params: &ModelParams, features: &FeatureMatrix) -> Result<EvalReport> {
    let pred = predict_labels(params, features)?;
    let cm = ConfusionMatrix::from_labels(&params.classes, &features.labels, &pred)?;
    metrics_from_confusion(&cm, false)
}

/// Test-time augmentation over one preprocessed image.
///
/// View 0 is the untouched image; views 1..n are drawn from the
/// augmentation policy with the view index as the sample key. Any deep
/// feature vector is held fixed across views. Per-view softmax outputs
/// are averaged and renormalized.
pub fn tta_predict(
    params: &ModelParams,
    img: &Image,
    deep: Option<&[f32]>,
    feature_cfg: &FeatureConfig,
    augment_cfg: &AugmentConfig,
    views: usize,
) -> Result<Vec<f64>> {
    if views == 0 {
        return Err(Error::InvalidParam("tta needs at least one view".into()));
    }
    let mut per_view = Vec::with_capacity(views);
    for view in 0..views {
        let view_img;
        let current = if view == 0 {
            img
        } else {
            view_img = augment(img, augment_cfg, view as u64)?;
            &view_img
        };
        let tensor = extract_tensor(current, feature_cfg)?;
        let row: Vec<f64> = match deep {
            Some(d) => fuse_features(d, &tensor)?.vector.iter().map(|&v| v as f64).collect(),
            None => tensor.vector.iter().map(|&v| v as f64).collect(),
        };
        let x = Mat { rows: 1, cols: row.len(), data: row };
        per_view.push(predict_probs(params, &x)?.row(0).to_vec());
    }
    // The mean of identical vectors is the vector itself; returning it
    // directly keeps single-view and identity-augmentation TTA bitwise
    // equal to plain prediction.
    if per_view.iter().all(|v| v == &per_view[0]) {
        return Ok(per_view.remove(0));
    }
    let mut mean = vec![0.0f64; params.num_classes()];
    for probs in &per_view {
        for (acc, &p) in mean.iter_mut().zip(probs) {
            *acc += p;
        }
    }
    let sum: f64 = mean.iter().sum();
    for v in &mut mean {
        *v /= sum;
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::{Domain, CLASS_NAMES};
    use crate::rng::CounterRng;

    fn classes() -> Vec<String> {
        CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_worked_binaryish_case() {
        // One class with TP=8, FP=2, FN=1 inside a 4-class matrix.
        let mut cm = ConfusionMatrix::new(&classes());
        for _ in 0..8 {
            cm.record(0, 0).unwrap();
        }
        for _ in 0..2 {
            cm.record(1, 0).unwrap();
        }
        cm.record(0, 1).unwrap();
        for _ in 0..5 {
            cm.record(2, 2).unwrap();
        }
        let report = metrics_from_confusion(&cm, false).unwrap();
        let m = &report.per_class["glioma"];
        assert!((m.precision - 80.0).abs() < 1e-9);
        assert!((m.recall - 100.0 * 8.0 / 9.0).abs() < 1e-9);
        assert!((m.f1 - 100.0 * 2.0 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0)).abs() < 1e-9);
        assert_eq!(m.support, 9);
    }

    #[test]
    fn perfect_predictions() {
        let y: Vec<u8> = (0..40).map(|i| (i % 4) as u8).collect();
        let cm = ConfusionMatrix::from_labels(&classes(), &y, &y).unwrap();
        let report = metrics_from_confusion(&cm, false).unwrap();
        assert_eq!(report.accuracy, 100.0);
        assert_eq!(report.overall.f1, 100.0);
        for m in report.per_class.values() {
            assert_eq!(m.precision, 100.0);
            assert_eq!(m.recall, 100.0);
            assert_eq!(m.support, 10);
        }
    }

    #[test]
    fn absent_class_gets_zero_metrics() {
        // Class 3 never appears as truth or prediction.
        let y_true = vec![0u8, 1, 2, 0, 1, 2];
        let y_pred = vec![0u8, 1, 2, 1, 1, 2];
        let cm = ConfusionMatrix::from_labels(&classes(), &y_true, &y_pred).unwrap();
        let report = metrics_from_confusion(&cm, false).unwrap();
        let m = &report.per_class["notumor"];
        assert_eq!((m.precision, m.recall, m.f1, m.support), (0.0, 0.0, 0.0, 0));
    }

    #[test]
    fn matches_brute_force_counts() {
        let mut rng = CounterRng::new(77, 0);
        let n = 500;
        let y_true: Vec<u8> = (0..n).map(|_| rng.below(4) as u8).collect();
        let y_pred: Vec<u8> = (0..n).map(|_| rng.below(4) as u8).collect();
        let cm = ConfusionMatrix::from_labels(&classes(), &y_true, &y_pred).unwrap();
        let report = metrics_from_confusion(&cm, false).unwrap();
        for c in 0..4u8 {
            let tp = y_true
                .iter()
                .zip(&y_pred)
                .filter(|(t, p)| **t == c && **p == c)
                .count() as f64;
            let fp = y_true
                .iter()
                .zip(&y_pred)
                .filter(|(t, p)| **t != c && **p == c)
                .count() as f64;
            let fn_ = y_true
                .iter()
                .zip(&y_pred)
                .filter(|(t, p)| **t == c && **p != c)
                .count() as f64;
            let m = &report.per_class[CLASS_NAMES[c as usize]];
            assert!((m.precision - 100.0 * tp / (tp + fp)).abs() < 1e-9);
            assert!((m.recall - 100.0 * tp / (tp + fn_)).abs() < 1e-9);
        }
        let acc =
            y_true.iter().zip(&y_pred).filter(|(t, p)| t == p).count() as f64 / n as f64;
        assert!((report.accuracy - 100.0 * acc).abs() < 1e-9);
    }

    #[test]
    fn label_permutation_invariance() {
        let mut rng = CounterRng::new(5, 1);
        let n = 200;
        let y_true: Vec<u8> = (0..n).map(|_| rng.below(4) as u8).collect();
        let y_pred: Vec<u8> = (0..n).map(|_| rng.below(4) as u8).collect();
        let cm = ConfusionMatrix::from_labels(&classes(), &y_true, &y_pred).unwrap();
        let base = metrics_from_confusion(&cm, false).unwrap();

        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let t2: Vec<u8> = order.iter().map(|&i| y_true[i]).collect();
        let p2: Vec<u8> = order.iter().map(|&i| y_pred[i]).collect();
        let cm2 = ConfusionMatrix::from_labels(&classes(), &t2, &p2).unwrap();
        assert_eq!(base, metrics_from_confusion(&cm2, false).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            ConfusionMatrix::from_labels(&classes(), &[0, 1], &[0]).unwrap_err(),
            Error::LengthMismatch(_)
        ));
        assert!(matches!(
            ConfusionMatrix::from_labels(&classes(), &[9], &[0]).unwrap_err(),
            Error::IndexOutOfRange(_)
        ));
        let empty = ConfusionMatrix::new(&classes());
        assert!(matches!(metrics_from_confusion(&empty, false).unwrap_err(), Error::EmptyMatrix));
    }

    #[test]
    fn report_json_roundtrip() {
        let y: Vec<u8> = (0..20).map(|i| (i % 4) as u8).collect();
        let p: Vec<u8> = (0..20).map(|i| ((i + 1) % 4) as u8).collect();
        let cm = ConfusionMatrix::from_labels(&classes(), &y, &p).unwrap();
        let report = metrics_from_confusion(&cm, true).unwrap();
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    fn unit_image(seed: u64) -> Image {
        let mut rng = CounterRng::new(seed, 0);
        let data: Vec<f32> = (0..64 * 64).map(|_| rng.next_f64() as f32).collect();
        Image::new(64, 64, data, Domain::Unit).unwrap()
    }

    #[test]
    fn tta_single_view_equals_plain_prediction() {
        let cfg = FeatureConfig::default();
        let img = unit_image(3);
        let tensor = extract_tensor(&img, &cfg).unwrap();
        let params = ModelParams::init(tensor.len(), &[8], &classes(), 0.5, 2).unwrap();

        let tta = tta_predict(&params, &img, None, &cfg, &AugmentConfig::disabled(0), 1).unwrap();
        let row: Vec<f64> = tensor.vector.iter().map(|&v| v as f64).collect();
        let x = Mat { rows: 1, cols: row.len(), data: row };
        let plain = predict_probs(&params, &x).unwrap();
        assert_eq!(tta, plain.row(0).to_vec());
    }

    #[test]
    fn tta_disabled_augment_equals_plain_for_any_view_count() {
        let cfg = FeatureConfig::default();
        let img = unit_image(4);
        let tensor = extract_tensor(&img, &cfg).unwrap();
        let params = ModelParams::init(tensor.len(), &[8], &classes(), 0.5, 2).unwrap();
        let one = tta_predict(&params, &img, None, &cfg, &AugmentConfig::disabled(0), 1).unwrap();
        let five = tta_predict(&params, &img, None, &cfg, &AugmentConfig::disabled(0), 5).unwrap();
        for (a, b) in one.iter().zip(&five) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tta_probabilities_normalized_and_deterministic() {
        let cfg = FeatureConfig::default();
        let img = unit_image(6);
        let tensor = extract_tensor(&img, &cfg).unwrap();
        let params = ModelParams::init(tensor.len(), &[8], &classes(), 0.5, 2).unwrap();
        let acfg = AugmentConfig::default();
        let a = tta_predict(&params, &img, None, &cfg, &acfg, 4).unwrap();
        let b = tta_predict(&params, &img, None, &cfg, &acfg, 4).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
