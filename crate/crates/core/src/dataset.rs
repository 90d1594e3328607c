//! Dataset ingestion: MNIST IDX and CIFAR-10 binary readers, photon-budget
//! normalization, train/validation/test splitting and the canonical dataset
//! file.
//!
//! Every image carries a source `index` that is unique across the whole
//! corpus (training-source files first, then test-source files). Measurement
//! noise is keyed by that index, so it must survive splitting and
//! subsampling unchanged.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{check_version, read_file_maybe_gz, LeReader, LeWriter};

pub const MNIST_SIDE: usize = 28;
pub const MNIST_DIM: usize = MNIST_SIDE * MNIST_SIDE;
pub const CIFAR10_DIM: usize = 3 * 32 * 32;
pub const CIFAR10_RECORD: usize = 1 + CIFAR10_DIM;
pub const NUM_CLASSES: u8 = 10;

const IDX_IMAGE_MAGIC: u32 = 2051;
const IDX_LABEL_MAGIC: u32 = 2049;
const DATASET_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn dim(self) -> usize {
        match self {
            DatasetKind::Mnist => MNIST_DIM,
            DatasetKind::Cifar10 => CIFAR10_DIM,
        }
    }

    pub fn split_policy(self) -> SplitPolicy {
        match self {
            DatasetKind::Mnist => SplitPolicy::mnist(),
            DatasetKind::Cifar10 => SplitPolicy::cifar10(),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" | "cifar-10" => Ok(DatasetKind::Cifar10),
            other => Err(Error::Parameter(format!("unknown dataset '{other}'"))),
        }
    }
}

/// An image as read from disk, pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub index: usize,
    pub pixels: Vec<f64>,
    pub label: u8,
}

/// An image normalized to a photon budget: `Σ alpha² = photon_budget`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub index: usize,
    pub alpha: Vec<f64>,
    pub label: u8,
    pub photon_budget: f64,
}

impl ImageRecord {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn energy(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn idx_header(bytes: &[u8], magic: u32, header_len: usize, what: &str) -> Result<()> {
    if bytes.len() < header_len {
        return Err(Error::Length(format!(
            "{what}: {} bytes is shorter than the {header_len}-byte header",
            bytes.len()
        )));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::Format(format!(
            "{what}: magic {found} does not match expected {magic}"
        )));
    }
    Ok(())
}

/// Parse an MNIST image/label IDX pair (optionally gzip-compressed).
pub fn parse_mnist(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Vec<RawImage>> {
    let image_bytes = crate::io::maybe_gunzip(image_bytes.to_vec())?;
    let label_bytes = crate::io::maybe_gunzip(label_bytes.to_vec())?;

    idx_header(&image_bytes, IDX_IMAGE_MAGIC, 16, "IDX image stream")?;
    idx_header(&label_bytes, IDX_LABEL_MAGIC, 8, "IDX label stream")?;

    let count = be_u32(&image_bytes, 4) as usize;
    let rows = be_u32(&image_bytes, 8) as usize;
    let cols = be_u32(&image_bytes, 12) as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(Error::Format(format!(
            "IDX image stream: expected {MNIST_SIDE}x{MNIST_SIDE} images, found {rows}x{cols}"
        )));
    }
    let label_count = be_u32(&label_bytes, 4) as usize;
    if label_count != count {
        return Err(Error::Pairing(format!(
            "image stream declares {count} items, label stream declares {label_count}"
        )));
    }

    let pixels = &image_bytes[16..];
    let labels = &label_bytes[8..];
    if pixels.len() != count * MNIST_DIM {
        return Err(Error::Length(format!(
            "IDX image stream: expected {} pixel bytes, found {}",
            count * MNIST_DIM,
            pixels.len()
        )));
    }
    if labels.len() != count {
        return Err(Error::Length(format!(
            "IDX label stream: expected {count} label bytes, found {}",
            labels.len()
        )));
    }

    pixels
        .chunks_exact(MNIST_DIM)
        .zip(labels)
        .enumerate()
        .map(|(index, (chunk, &label))| {
            if label >= NUM_CLASSES {
                return Err(Error::Label(format!("image {index} has label {label}")));
            }
            Ok(RawImage {
                index,
                pixels: chunk.iter().map(|&b| f64::from(b) / 255.0).collect(),
                label,
            })
        })
        .collect()
}

fn pixel_byte(p: f64) -> u8 {
    (p * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Serialize images back into an MNIST IDX (image, label) pair.
pub fn write_mnist(images: &[RawImage]) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut img = Vec::with_capacity(16 + images.len() * MNIST_DIM);
    let mut lbl = Vec::with_capacity(8 + images.len());
    let count = images.len() as u32;
    img.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&count.to_be_bytes());
    img.extend_from_slice(&(MNIST_SIDE as u32).to_be_bytes());
    img.extend_from_slice(&(MNIST_SIDE as u32).to_be_bytes());
    lbl.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&count.to_be_bytes());
    for image in images {
        if image.pixels.len() != MNIST_DIM {
            return Err(Error::Dimension(format!(
                "MNIST image {} has {} pixels, expected {MNIST_DIM}",
                image.index,
                image.pixels.len()
            )));
        }
        img.extend(image.pixels.iter().map(|&p| pixel_byte(p)));
        lbl.push(image.label);
    }
    Ok((img, lbl))
}

/// Parse a CIFAR-10 binary batch: records of one label byte followed by
/// 3072 channel-major pixel bytes.
pub fn parse_cifar10(batch_bytes: &[u8]) -> Result<Vec<RawImage>> {
    let bytes = crate::io::maybe_gunzip(batch_bytes.to_vec())?;
    if bytes.len() % CIFAR10_RECORD != 0 {
        return Err(Error::Format(format!(
            "CIFAR-10 batch length {} is not a multiple of {CIFAR10_RECORD}",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(CIFAR10_RECORD)
        .enumerate()
        .map(|(index, rec)| {
            let label = rec[0];
            if label >= NUM_CLASSES {
                return Err(Error::Label(format!("record {index} has label {label}")));
            }
            Ok(RawImage {
                index,
                pixels: rec[1..].iter().map(|&b| f64::from(b) / 255.0).collect(),
                label,
            })
        })
        .collect()
}

pub fn write_cifar10(images: &[RawImage]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(images.len() * CIFAR10_RECORD);
    for image in images {
        if image.pixels.len() != CIFAR10_DIM {
            return Err(Error::Dimension(format!(
                "CIFAR-10 image {} has {} pixels, expected {CIFAR10_DIM}",
                image.index,
                image.pixels.len()
            )));
        }
        out.push(image.label);
        out.extend(image.pixels.iter().map(|&p| pixel_byte(p)));
    }
    Ok(out)
}

/// Scale an image so that its squared amplitudes sum to `n_s`.
///
/// A blank image stays blank: it carries no signal regardless of budget.
pub fn normalize_photon_budget(image: &RawImage, n_s: f64) -> Result<ImageRecord> {
    if !(n_s >= 0.0) || !n_s.is_finite() {
        return Err(Error::Parameter(format!(
            "photon budget must be finite and non-negative, got {n_s}"
        )));
    }
    if let Some(p) = image.pixels.iter().find(|p| !p.is_finite()) {
        return Err(Error::Data(format!("image {} has pixel {p}", image.index)));
    }
    let energy: f64 = image.pixels.iter().map(|p| p * p).sum();
    let alpha = if energy > 0.0 {
        let scale = (n_s / energy).sqrt();
        image.pixels.iter().map(|p| p * scale).collect()
    } else {
        vec![0.0; image.pixels.len()]
    };
    Ok(ImageRecord {
        index: image.index,
        alpha,
        label: image.label,
        photon_budget: n_s,
    })
}

pub fn normalize_all(images: &[RawImage], n_s: f64) -> Result<Vec<ImageRecord>> {
    images
        .iter()
        .map(|im| normalize_photon_budget(im, n_s))
        .collect()
}

/// Images from the dataset's training-source and test-source files.
#[derive(Debug, Clone)]
pub struct SourceImages {
    pub kind: DatasetKind,
    pub train: Vec<RawImage>,
    pub test: Vec<RawImage>,
}

fn find_existing(dir: &Path, names: &[&str]) -> Result<PathBuf> {
    for name in names {
        for candidate in [dir.join(name), dir.join(format!("{name}.gz"))] {
            if candidate.is_file() {
                return Ok(candidate);
            }
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!(
            "none of {names:?} (optionally .gz) found in {}",
            dir.display()
        ),
    )))
}

fn reindex(images: &mut [RawImage], offset: usize) {
    for (i, im) in images.iter_mut().enumerate() {
        im.index = offset + i;
    }
}

/// Load the four canonical MNIST IDX files from `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<SourceImages> {
    let read_pair = |img: &[&str], lbl: &[&str]| -> Result<Vec<RawImage>> {
        let images = read_file_maybe_gz(&find_existing(dir, img)?)?;
        let labels = read_file_maybe_gz(&find_existing(dir, lbl)?)?;
        parse_mnist(&images, &labels)
    };
    let train = read_pair(
        &["train-images-idx3-ubyte", "train-images.idx3-ubyte"],
        &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"],
    )?;
    let mut test = read_pair(
        &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"],
        &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"],
    )?;
    reindex(&mut test, train.len());
    Ok(SourceImages {
        kind: DatasetKind::Mnist,
        train,
        test,
    })
}

/// Load `data_batch_{1..5}.bin` and `test_batch.bin` from `dir` (or its
/// `cifar-10-batches-bin` subdirectory).
pub fn load_cifar10_dir(dir: &Path) -> Result<SourceImages> {
    let nested = dir.join("cifar-10-batches-bin");
    let dir = if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    };
    let mut train = Vec::new();
    for b in 1..=5 {
        let name = format!("data_batch_{b}.bin");
        let bytes = read_file_maybe_gz(&find_existing(&dir, &[&name])?)?;
        train.extend(parse_cifar10(&bytes)?);
    }
    reindex(&mut train, 0);
    let mut test = parse_cifar10(&read_file_maybe_gz(&find_existing(
        &dir,
        &["test_batch.bin"],
    )?)?)?;
    reindex(&mut test, train.len());
    Ok(SourceImages {
        kind: DatasetKind::Cifar10,
        train,
        test,
    })
}

pub fn load_dir(kind: DatasetKind, dir: &Path) -> Result<SourceImages> {
    match kind {
        DatasetKind::Mnist => load_mnist_dir(dir),
        DatasetKind::Cifar10 => load_cifar10_dir(dir),
    }
}

/// Split sizes. Validation is carved out of the training-source records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPolicy {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitPolicy {
    pub fn mnist() -> Self {
        Self {
            train: 50_000,
            validation: 10_000,
            test: 10_000,
        }
    }

    pub fn cifar10() -> Self {
        Self {
            train: 50_000,
            validation: 0,
            test: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<ImageRecord>,
    pub validation: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
    pub seed: u64,
}

/// Shuffle the training-source records under `seed`; the first
/// `policy.train` become the training split and the remainder the
/// validation split. Test-source records form the test split.
///
/// Each split is returned in ascending source-index order.
pub fn make_splits(
    train_source: Vec<ImageRecord>,
    test_source: Vec<ImageRecord>,
    policy: SplitPolicy,
    seed: u64,
) -> Result<DatasetSplit> {
    if train_source.len() != policy.train + policy.validation {
        return Err(Error::Split(format!(
            "{} training-source records, policy needs {} + {}",
            train_source.len(),
            policy.train,
            policy.validation
        )));
    }
    if test_source.len() != policy.test {
        return Err(Error::Split(format!(
            "{} test-source records, policy needs {}",
            test_source.len(),
            policy.test
        )));
    }

    let mut order: Vec<usize> = (0..train_source.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_validation = vec![false; train_source.len()];
    for &pos in &order[policy.train..] {
        is_validation[pos] = true;
    }

    let mut train = Vec::with_capacity(policy.train);
    let mut validation = Vec::with_capacity(policy.validation);
    for (rec, val) in train_source.into_iter().zip(is_validation) {
        if val {
            validation.push(rec);
        } else {
            train.push(rec);
        }
    }
    let by_index = |a: &ImageRecord, b: &ImageRecord| a.index.cmp(&b.index);
    train.sort_by(by_index);
    validation.sort_by(by_index);
    let mut test = test_source;
    test.sort_by(by_index);

    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed,
    })
}

/// Read, normalize and split a dataset directory in one step.
pub fn ingest(kind: DatasetKind, dir: &Path, n_s: f64, seed: u64) -> Result<DatasetSplit> {
    let source = load_dir(kind, dir)?;
    let train = normalize_all(&source.train, n_s)?;
    let test = normalize_all(&source.test, n_s)?;
    make_splits(train, test, kind.split_policy(), seed)
}

/// Pick `n` positions from `labels`, proportionally per class.
///
/// Per-class quotas use largest-remainder rounding so they sum to exactly
/// `n`; ties in the remainder go to the lower class label. The returned
/// positions are sorted ascending.
pub fn stratified_subsample(labels: &[u8], n: usize, seed: u64) -> Vec<usize> {
    if n >= labels.len() {
        return (0..labels.len()).collect();
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 256];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let total = labels.len();
    let mut quotas: Vec<(usize, usize, usize)> = by_class
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(c, v)| {
            let exact = v.len() * n;
            (c, exact / total, exact % total)
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        quotas[b]
            .2
            .cmp(&quotas[a].2)
            .then(quotas[a].0.cmp(&quotas[b].0))
    });
    for &o in order.iter().take(n - assigned) {
        quotas[o].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (class, quota, _) in quotas {
        let mut members = by_class[class].clone();
        members.shuffle(&mut rng);
        picked.extend_from_slice(&members[..quota]);
    }
    picked.sort_unstable();
    picked
}

/// Contents of a canonical dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub dim: usize,
    pub photon_budget: f64,
    pub seed: u64,
    pub records: Vec<ImageRecord>,
}

/// Encode records as `{version u32, d u32, count u32, n_S f64, seed u64}`
/// followed by `count × (label u8, d × f32)`, all little-endian.
pub fn encode_dataset(records: &[ImageRecord], n_s: f64, seed: u64) -> Result<Vec<u8>> {
    let dim = records.first().map_or(0, |r| r.dim());
    let mut w = LeWriter::default();
    w.buf.reserve(28 + records.len() * (1 + 4 * dim));
    w.u32(DATASET_FILE_VERSION);
    w.u32(dim as u32);
    w.u32(records.len() as u32);
    w.f64(n_s);
    w.u64(seed);
    for rec in records {
        if rec.dim() != dim {
            return Err(Error::Dimension(format!(
                "record {} has dimension {}, file dimension is {dim}",
                rec.index,
                rec.dim()
            )));
        }
        w.u8(rec.label);
        for &a in &rec.alpha {
            w.f32(a as f32);
        }
    }
    Ok(w.buf)
}

/// Decode a canonical dataset file. Record indices are file positions.
pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetFile> {
    let mut r = LeReader::new(bytes, "dataset file");
    check_version(r.u32()?, DATASET_FILE_VERSION, "dataset file")?;
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let photon_budget = r.f64()?;
    let seed = r.u64()?;
    if r.remaining() != count * (1 + 4 * dim) {
        return Err(Error::Length(format!(
            "dataset file: header declares {count} records of dimension {dim}, payload is {} bytes",
            r.remaining()
        )));
    }
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        let label = r.u8()?;
        let alpha = (0..dim)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        records.push(ImageRecord {
            index,
            alpha,
            label,
            photon_budget,
        });
    }
    Ok(DatasetFile {
        dim,
        photon_budget,
        seed,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_stream(count: u32) -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3];
        img.extend_from_slice(&count.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        for i in 0..count as usize * MNIST_DIM {
            img.push((i % 256) as u8);
        }
        let mut lbl = vec![0, 0, 8, 1];
        lbl.extend_from_slice(&count.to_be_bytes());
        lbl.extend((0..count).map(|i| (i % 10) as u8));
        (img, lbl)
    }

    #[test]
    fn mnist_header_yields_three_images() {
        let (img, lbl) = idx_stream(3);
        let images = parse_mnist(&img, &lbl).unwrap();
        assert_eq!(images.len(), 3);
        assert!(images.iter().all(|im| im.pixels.len() == 784));
        assert_eq!(images[0].pixels[0], 0.0);
        assert_eq!(images[0].pixels[255], 1.0);
        assert_eq!(images[2].label, 2);
    }

    #[test]
    fn mnist_rejects_bad_magic_count_and_truncation() {
        let (mut img, lbl) = idx_stream(2);
        img[3] = 1;
        assert!(matches!(parse_mnist(&img, &lbl), Err(Error::Format(_))));

        let (img, mut lbl) = idx_stream(2);
        lbl[7] = 3;
        assert!(matches!(parse_mnist(&img, &lbl), Err(Error::Pairing(_))));

        let (mut img, lbl) = idx_stream(2);
        img.truncate(img.len() - 1);
        assert!(matches!(parse_mnist(&img, &lbl), Err(Error::Length(_))));

        assert!(matches!(parse_mnist(&[0, 0], &lbl), Err(Error::Length(_))));
    }

    #[test]
    fn cifar_records() {
        let mut bytes = vec![0u8; 2 * CIFAR10_RECORD];
        bytes[CIFAR10_RECORD] = 7;
        bytes[CIFAR10_RECORD + 1] = 255;
        let images = parse_cifar10(&bytes).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].pixels.len(), 3072);
        assert!(images[0].pixels.iter().all(|&p| p == 0.0));
        assert_eq!(images[0].label, 0);
        assert_eq!(images[1].label, 7);
        assert_eq!(images[1].pixels[0], 1.0);

        assert!(matches!(parse_cifar10(&bytes[1..]), Err(Error::Format(_))));
        bytes[0] = 10;
        assert!(matches!(parse_cifar10(&bytes), Err(Error::Label(_))));
    }

    #[test]
    fn normalization_examples() {
        let img = RawImage {
            index: 0,
            pixels: vec![3.0 / 5.0, 4.0 / 5.0],
            label: 1,
        };
        let rec = normalize_photon_budget(&img, 1.0).unwrap();
        assert!((rec.alpha[0] - 0.6).abs() < 1e-15);
        assert!((rec.alpha[1] - 0.8).abs() < 1e-15);

        let rec = normalize_photon_budget(&img, 10.0).unwrap();
        assert!((rec.energy() - 10.0).abs() <= 1e-9 * 10.0);

        let blank = RawImage {
            index: 0,
            pixels: vec![0.0; 5],
            label: 0,
        };
        let rec = normalize_photon_budget(&blank, 7.0).unwrap();
        assert!(rec.alpha.iter().all(|&a| a == 0.0));

        assert!(normalize_photon_budget(&img, -1.0).is_err());
    }

    fn records(range: std::ops::Range<usize>) -> Vec<ImageRecord> {
        range
            .map(|index| ImageRecord {
                index,
                alpha: vec![index as f64],
                label: (index % 10) as u8,
                photon_budget: 1.0,
            })
            .collect()
    }

    #[test]
    fn splits_follow_policy_and_are_deterministic() {
        let policy = SplitPolicy {
            train: 50,
            validation: 10,
            test: 10,
        };
        let a = make_splits(records(0..60), records(60..70), policy, 9).unwrap();
        assert_eq!(
            (a.train.len(), a.validation.len(), a.test.len()),
            (50, 10, 10)
        );
        let b = make_splits(records(0..60), records(60..70), policy, 9).unwrap();
        let ids = |v: &[ImageRecord]| v.iter().map(|r| r.index).collect::<Vec<_>>();
        assert_eq!(ids(&a.validation), ids(&b.validation));
        let c = make_splits(records(0..60), records(60..70), policy, 10).unwrap();
        assert_ne!(ids(&a.validation), ids(&c.validation));

        let mut all: Vec<usize> = ids(&a.train);
        all.extend(ids(&a.validation));
        all.extend(ids(&a.test));
        all.sort_unstable();
        assert_eq!(all, (0..70).collect::<Vec<_>>());

        assert!(matches!(
            make_splits(records(0..59), records(60..70), policy, 9),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn production_policies() {
        assert_eq!(
            SplitPolicy::mnist(),
            SplitPolicy {
                train: 50_000,
                validation: 10_000,
                test: 10_000
            }
        );
        assert_eq!(SplitPolicy::cifar10().validation, 0);
        assert_eq!(
            SplitPolicy::cifar10().train + SplitPolicy::cifar10().test,
            60_000
        );
    }

    #[test]
    fn stratified_subsample_keeps_class_proportions() {
        let labels: Vec<u8> = (0..1000).map(|i| if i < 700 { 0 } else { 1 }).collect();
        let picked = stratified_subsample(&labels, 100, 3);
        assert_eq!(picked.len(), 100);
        let ones = picked.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(ones, 30);
        assert_eq!(picked, stratified_subsample(&labels, 100, 3));
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dataset_file_rejects_wrong_lengths() {
        let recs = records(0..3);
        let bytes = encode_dataset(&recs, 1.0, 5).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back.records.len(), 3);
        assert_eq!(back.seed, 5);
        assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
    }
}
