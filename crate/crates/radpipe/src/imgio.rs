//! Image decoding, dataset layout, splits, label encoding, and the binary
//! feature-file format.
//!
//! Dataset layout on disk is `<root>/<split>/<class>/<image>.pgm` with
//! split one of `Training` / `Testing` and the fixed class table below.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Fixed class-index table, written into every metrics report so confusion
/// matrices are comparable across runs.
pub const CLASS_NAMES: [&str; 4] = ["glioma", "meningioma", "pituitary", "notumor"];

pub const NUM_CLASSES: usize = 4;

/// Value domain of an [`Image`]'s samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Raw 8-bit intensities in [0, 255].
    Raw8,
    /// Normalized intensities in [0, 1].
    Unit,
}

/// Single-channel 2-D float raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
    domain: Domain,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>, domain: Domain) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "image data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Image { width, height, data, domain })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Ordered collection of (path, label) pairs plus the class table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub classes: Vec<String>,
    pub samples: Vec<(PathBuf, usize)>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for (_, label) in &self.samples {
            counts[*label] += 1;
        }
        counts
    }
}

/// Decode a binary PGM ("P5") file with 8-bit maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;

    fn skip_ws(bytes: &[u8], pos: &mut usize) {
        while *pos < bytes.len() {
            match bytes[*pos] {
                b' ' | b'\t' | b'\r' | b'\n' => *pos += 1,
                b'#' => {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
        skip_ws(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::CorruptFile("truncated PGM header".into()));
        }
        Ok(&bytes[start..*pos])
    }

    let magic = token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::UnsupportedFormat(format!(
            "expected binary PGM magic P5, got {:?}",
            String::from_utf8_lossy(magic)
        )));
    }

    let parse_int = |tok: &[u8]| -> Result<usize> {
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::CorruptFile("malformed PGM header field".into()))
    };

    let width = parse_int(token(bytes, &mut pos)?)?;
    let height = parse_int(token(bytes, &mut pos)?)?;
    let maxval = parse_int(token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "only 8-bit PGM supported, maxval {}",
            maxval
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::CorruptFile("zero image dimension".into()));
    }

    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::CorruptFile("missing header/payload separator".into()));
    }
    pos += 1;

    let expected = width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::CorruptFile(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            expected
        )));
    }
    let data = payload[..expected].iter().map(|&b| b as f32).collect();
    Image::new(width, height, data, Domain::Raw8)
}

/// Encode an image as binary PGM. Unit-domain values are scaled to [0, 255].
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    let scale = match img.domain() {
        Domain::Raw8 => 1.0,
        Domain::Unit => 255.0,
    };
    out.extend(
        img.data()
            .iter()
            .map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn load_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes)
}

/// Scan one split directory (`<root>` containing one subdirectory per class)
/// into a labeled dataset. Paths are ordered lexicographically within each
/// class so the result is a pure function of directory contents.
pub fn scan_dataset(root: &Path) -> Result<LabeledDataset> {
    let mut samples = Vec::new();
    for (label, class) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(class);
        if !dir.is_dir() {
            return Err(Error::MissingClassDir(dir.display().to_string()));
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .map(|e| e.eq_ignore_ascii_case("pgm"))
                        .unwrap_or(false)
            })
            .collect();
        if paths.is_empty() {
            return Err(Error::EmptyClass(dir.display().to_string()));
        }
        paths.sort();
        samples.extend(paths.into_iter().map(|p| (p, label)));
    }
    Ok(LabeledDataset {
        classes: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        samples,
    })
}

/// Stratified train/validation split. Per class, `round(count * fraction)`
/// samples (round half up) go to train and the remainder to validation;
/// shuffling within each class is driven only by the seed.
pub fn stratified_split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "train_fraction must be in (0,1), got {}",
            train_fraction
        )));
    }
    let counts = ds.class_counts();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (label, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let n_train = (count as f64 * train_fraction + 0.5).floor() as usize;
        if n_train == 0 || n_train == count {
            return Err(Error::DegenerateSplit(format!(
                "class {} with {} samples would give an empty side at fraction {}",
                ds.classes[label], count, train_fraction
            )));
        }
        let mut members: Vec<(PathBuf, usize)> = ds
            .samples
            .iter()
            .filter(|(_, l)| *l == label)
            .cloned()
            .collect();
        CounterRng::new(seed, label as u64).shuffle(&mut members);
        val.extend(members.split_off(n_train));
        train.extend(members);
    }
    Ok((
        LabeledDataset { classes: ds.classes.clone(), samples: train },
        LabeledDataset { classes: ds.classes.clone(), samples: val },
    ))
}

/// One-hot encode a class label.
pub fn encode_onehot(label: usize, num_classes: usize) -> Result<Vec<f32>> {
    if label >= num_classes {
        return Err(Error::IndexOutOfRange(format!(
            "label {} >= num_classes {}",
            label, num_classes
        )));
    }
    let mut v = vec![0.0; num_classes];
    v[label] = 1.0;
    Ok(v)
}

/// Row-major float32 feature matrix with one byte label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub count: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub labels: Vec<u8>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f32>], labels: &[u8]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimMismatch(format!(
                    "row of dim {} in a matrix of dim {}",
                    row.len(),
                    dim
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix { count: rows.len(), dim, data, labels: labels.to_vec() })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

const FEATURE_MAGIC: &[u8; 4] = b"RFV1";

/// Write a feature matrix in the RFV1 binary format:
/// magic "RFV1", count u32 LE, dim u32 LE, count*dim float32 LE row-major,
/// count label bytes.
pub fn write_feature_file(path: &Path, m: &FeatureMatrix) -> Result<()> {
    if m.labels.len() != m.count {
        return Err(Error::DimMismatch(format!(
            "{} labels for {} rows",
            m.labels.len(),
            m.count
        )));
    }
    if m.labels.iter().any(|&l| l as usize >= NUM_CLASSES) {
        return Err(Error::IndexOutOfRange("label byte >= 4".into()));
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(FEATURE_MAGIC)?;
    f.write_all(&(m.count as u32).to_le_bytes())?;
    f.write_all(&(m.dim as u32).to_le_bytes())?;
    for v in &m.data {
        f.write_all(&v.to_le_bytes())?;
    }
    f.write_all(&m.labels)?;
    f.flush()?;
    Ok(())
}

/// Read an RFV1 feature file written by [`write_feature_file`].
pub fn read_feature_file(path: &Path) -> Result<FeatureMatrix> {
    let mut f = std::io::BufReader::new(fs::File::open(path)?);
    let mut header = [0u8; 12];
    f.read_exact(&mut header)
        .map_err(|_| Error::CorruptFile("feature file shorter than header".into()))?;
    if &header[0..4] != FEATURE_MAGIC {
        return Err(Error::BadMagic(format!(
            "expected RFV1, got {:?}",
            String::from_utf8_lossy(&header[0..4])
        )));
    }
    let count = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; count * dim * 4];
    f.read_exact(&mut payload)
        .map_err(|_| Error::CorruptFile("feature payload truncated".into()))?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut labels = vec![0u8; count];
    f.read_exact(&mut labels)
        .map_err(|_| Error::CorruptFile("label block truncated".into()))?;
    if labels.iter().any(|&l| l as usize >= NUM_CLASSES) {
        return Err(Error::CorruptFile("label byte >= 4".into()));
    }
    Ok(FeatureMatrix { count, dim, data, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pgm(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut b = header.as_bytes().to_vec();
        b.push(b'\n');
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn decode_pgm_2x2() {
        let img = decode_pgm(&pgm("P5 2 2 255", &[0, 255, 128, 64])).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 2);
        assert_eq!(img.data(), &[0.0, 255.0, 128.0, 64.0]);
        assert_eq!(img.domain(), Domain::Raw8);
    }

    #[test]
    fn decode_pgm_rejects_16bit() {
        let err = decode_pgm(&pgm("P5 2 2 65535", &[0; 8])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }

    #[test]
    fn decode_pgm_truncated_payload() {
        let err = decode_pgm(&pgm("P5 2 2 255", &[0, 1, 2])).unwrap_err();
        assert!(matches!(err, Error::CorruptFile(_)));
    }

    #[test]
    fn decode_pgm_rejects_p2() {
        let err = decode_pgm(b"P2 1 1 255\n7").unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }

    #[test]
    fn decode_pgm_with_comment() {
        let img = decode_pgm(&pgm("P5\n# a comment\n2 1 255", &[9, 8])).unwrap();
        assert_eq!(img.data(), &[9.0, 8.0]);
    }

    #[test]
    fn pgm_roundtrip() {
        let img = decode_pgm(&pgm("P5 3 2 255", &[1, 2, 3, 4, 5, 6])).unwrap();
        let again = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(img, again);
    }

    fn write_class_dirs(root: &Path, per_class: &[usize]) {
        for (class, &n) in CLASS_NAMES.iter().zip(per_class) {
            let dir = root.join(class);
            fs::create_dir_all(&dir).unwrap();
            for i in 0..n {
                fs::write(dir.join(format!("img_{:03}.pgm", i)), pgm("P5 2 2 255", &[0, 1, 2, 3]))
                    .unwrap();
            }
        }
    }

    #[test]
    fn scan_dataset_labels_from_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        write_class_dirs(tmp.path(), &[1, 1, 1, 1]);
        let ds = scan_dataset(tmp.path()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.samples.iter().map(|(_, l)| *l).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        // Rerun gives the identical list.
        assert_eq!(ds, scan_dataset(tmp.path()).unwrap());
    }

    #[test]
    fn scan_dataset_missing_class() {
        let tmp = tempfile::tempdir().unwrap();
        write_class_dirs(tmp.path(), &[1, 1, 1, 1]);
        fs::remove_dir_all(tmp.path().join("pituitary")).unwrap();
        let err = scan_dataset(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::MissingClassDir(_)));
    }

    #[test]
    fn scan_dataset_empty_class() {
        let tmp = tempfile::tempdir().unwrap();
        write_class_dirs(tmp.path(), &[1, 0, 1, 1]);
        let err = scan_dataset(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(_)));
    }

    #[test]
    fn split_exact_divisibility() {
        let tmp = tempfile::tempdir().unwrap();
        write_class_dirs(tmp.path(), &[25, 25, 25, 25]);
        let ds = scan_dataset(tmp.path()).unwrap();
        let (train, val) = stratified_split(&ds, 0.8, 7).unwrap();
        assert_eq!(train.class_counts(), vec![20, 20, 20, 20]);
        assert_eq!(val.class_counts(), vec![5, 5, 5, 5]);
    }

    #[test]
    fn split_deterministic_and_disjoint() {
        let tmp = tempfile::tempdir().unwrap();
        write_class_dirs(tmp.path(), &[7, 9, 5, 11]);
        let ds = scan_dataset(tmp.path()).unwrap();
        let (t1, v1) = stratified_split(&ds, 0.8, 42).unwrap();
        let (t2, v2) = stratified_split(&ds, 0.8, 42).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(v1, v2);
        let mut all: Vec<_> = t1.samples.iter().chain(v1.samples.iter()).cloned().collect();
        all.sort();
        let mut orig = ds.samples.clone();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_degenerate_single_sample() {
        let tmp = tempfile::tempdir().unwrap();
        write_class_dirs(tmp.path(), &[1, 5, 5, 5]);
        let ds = scan_dataset(tmp.path()).unwrap();
        let err = stratified_split(&ds, 0.8, 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit(_)));
    }

    #[test]
    fn onehot_cases() {
        assert_eq!(encode_onehot(2, 4).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(encode_onehot(0, 4).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(encode_onehot(5, 4).unwrap_err(), Error::IndexOutOfRange(_)));
    }

    #[test]
    fn feature_file_byte_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("f.rfv");
        let m = FeatureMatrix::from_rows(
            &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            &[0, 3],
        )
        .unwrap();
        write_feature_file(&path, &m).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 4 + 4 + 4 + 24 + 2);
        assert_eq!(read_feature_file(&path).unwrap(), m);
    }

    #[test]
    fn feature_file_empty_set() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("empty.rfv");
        let m = FeatureMatrix { count: 0, dim: 5, data: vec![], labels: vec![] };
        write_feature_file(&path, &m).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 12);
        assert_eq!(read_feature_file(&path).unwrap(), m);
    }

    #[test]
    fn feature_file_bad_magic() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("bad.rfv");
        fs::write(&path, b"XXXX\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_feature_file(&path).unwrap_err(), Error::BadMagic(_)));
    }

    #[test]
    fn feature_file_dim_mismatch() {
        let err =
            FeatureMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]], &[0, 0]).unwrap_err();
        assert!(matches!(err, Error::DimMismatch(_)));
    }

    proptest! {
        #[test]
        fn feature_file_roundtrip_bit_exact(
            rows in proptest::collection::vec(
                proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 4),
                1..8,
            ),
        ) {
            let labels: Vec<u8> = (0..rows.len()).map(|i| (i % 4) as u8).collect();
            let m = FeatureMatrix::from_rows(&rows, &labels).unwrap();
            let tmp = tempfile::tempdir().unwrap();
            let path = tmp.path().join("p.rfv");
            write_feature_file(&path, &m).unwrap();
            let back = read_feature_file(&path).unwrap();
            prop_assert_eq!(
                m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(m.labels, back.labels);
        }

        #[test]
        fn split_proportions_within_one(seed in any::<u64>(), n in 4usize..40) {
            let tmp = tempfile::tempdir().unwrap();
            write_class_dirs(tmp.path(), &[n, n + 1, n + 2, n + 3]);
            let ds = scan_dataset(tmp.path()).unwrap();
            let (train, _val) = stratified_split(&ds, 0.8, seed).unwrap();
            for (t, total) in train.class_counts().iter().zip(ds.class_counts()) {
                let ideal = total as f64 * 0.8;
                prop_assert!((*t as f64 - ideal).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
