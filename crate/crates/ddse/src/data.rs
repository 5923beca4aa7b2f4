//! IDX ingestion, class-proportional subsampling, augmentation, and
//! synthetic corpora.
//!
//! Datasets are column-per-sample (n x t) with pixel values in [0, 1].
//! IDX files may be gzip-compressed; compression is detected from the
//! stream's leading bytes, not the file name.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;
use flate2::read::GzDecoder;
use std::fs;
use std::io::Read;
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Feature columns paired with class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.cols != labels.len() {
            return Err(Error::shape(
                "labeled_dataset",
                format!("{} feature columns, {} labels", features.cols, labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::contract(
                "labeled_dataset",
                format!("label {bad} out of range for {class_count} classes"),
            ));
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension n.
    pub fn dim(&self) -> usize {
        self.features.rows
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Truncated {
            path: path.display().to_string(),
            detail: format!("needed {} header bytes, file has {}", end, bytes.len()),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses the IDX image/label pair into a dataset scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let img = read_maybe_gz(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.display().to_string(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let n = rows * cols;
    let expected = 16 + count * n;
    if img.len() != expected {
        return Err(Error::Truncated {
            path: images_path.display().to_string(),
            detail: format!(
                "header promises {count} images of {rows}x{cols} ({expected} bytes), file has {}",
                img.len()
            ),
        });
    }

    let lab = read_maybe_gz(labels_path)?;
    let lab_magic = be_u32(&lab, 0, labels_path)?;
    if lab_magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.display().to_string(),
            expected: LABEL_MAGIC,
            found: lab_magic,
        });
    }
    let lab_count = be_u32(&lab, 4, labels_path)? as usize;
    if lab.len() != 8 + lab_count {
        return Err(Error::Truncated {
            path: labels_path.display().to_string(),
            detail: format!(
                "header promises {lab_count} labels ({} bytes), file has {}",
                8 + lab_count,
                lab.len()
            ),
        });
    }
    if lab_count != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: lab_count,
        });
    }

    let mut features = Matrix::zeros(n, count);
    for i in 0..count {
        let base = 16 + i * n;
        for p in 0..n {
            features.set(p, i, img[base + p] as f64 / 255.0);
        }
    }
    let labels: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().map_or(0, |mx| mx + 1);
    LabeledDataset::new(features, labels, class_count)
}

/// Serializes back to the IDX pair (uncompressed); inverse of `load_idx`
/// for byte-for-byte round-trips.
pub fn save_idx(
    data: &LabeledDataset,
    rows: usize,
    cols: usize,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    if rows * cols != data.dim() {
        return Err(Error::shape(
            "save_idx",
            format!("{rows}x{cols} does not match feature length {}", data.dim()),
        ));
    }
    let count = data.len();
    let mut img = Vec::with_capacity(16 + count * data.dim());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(count as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for i in 0..count {
        for p in 0..data.dim() {
            let v = data.features.at(p, i);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract("save_idx", "pixel value outside [0, 1]"));
            }
            img.push((v * 255.0).round() as u8);
        }
    }
    let mut lab = Vec::with_capacity(8 + count);
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(count as u32).to_be_bytes());
    for &l in &data.labels {
        if l > 255 {
            return Err(Error::contract("save_idx", "label exceeds one byte"));
        }
        lab.push(l as u8);
    }
    fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

fn gather_dataset(data: &LabeledDataset, idx: &[usize]) -> LabeledDataset {
    let mut features = Matrix::zeros(data.dim(), idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    for (b, &i) in idx.iter().enumerate() {
        for p in 0..data.dim() {
            features.set(p, b, data.features.at(p, i));
        }
        labels.push(data.labels[i]);
    }
    LabeledDataset {
        features,
        labels,
        class_count: data.class_count,
    }
}

/// Class-proportional subsample. Per-class counts are
/// floor(fraction * class size); the remainder up to round(fraction * t) is
/// assigned by largest fractional part (ties to the lower class index).
pub fn subsample(data: &LabeledDataset, fraction: f64, rng: &mut Rng) -> Result<LabeledDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::contract(
            "subsample",
            format!("fraction {fraction} outside (0, 1]"),
        ));
    }
    if data.is_empty() {
        return Err(Error::contract("subsample", "dataset is empty"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.class_count];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let total_target = (fraction * data.len() as f64).round() as usize;
    let mut counts: Vec<usize> = Vec::with_capacity(data.class_count);
    let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(data.class_count);
    for (c, members) in by_class.iter().enumerate() {
        let exact = fraction * members.len() as f64;
        let base = exact.floor() as usize;
        counts.push(base);
        fracs.push((exact - base as f64, c));
    }
    let base_sum: usize = counts.iter().sum();
    let remainder = total_target.saturating_sub(base_sum);
    // Largest fractional part first; ties break toward the lower class.
    fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite fractions").then(a.1.cmp(&b.1)));
    for &(_, c) in fracs.iter().take(remainder) {
        if counts[c] < by_class[c].len() {
            counts[c] += 1;
        }
    }
    let mut keep: Vec<usize> = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if counts[c] == 0 && !members.is_empty() {
            return Err(Error::contract(
                "subsample",
                format!("fraction {fraction} empties class {c}"),
            ));
        }
        let perm = rng.permutation(members.len());
        let mut chosen: Vec<usize> = perm[..counts[c]].iter().map(|&p| members[p]).collect();
        keep.append(&mut chosen);
    }
    keep.sort_unstable();
    Ok(gather_dataset(data, &keep))
}

/// Augmentation knobs; all default off.
#[derive(Debug, Clone, Default)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub hflip_prob: f64,
    pub max_shift_px: usize,
    pub enabled: bool,
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::config("hflip_prob must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma must be nonnegative and finite"));
        }
        Ok(())
    }
}

/// Per-sample noise, horizontal flip, and integer shift with zero fill;
/// outputs stay clamped to [0, 1] and labels are preserved.
pub fn augment(data: &LabeledDataset, config: &AugmentConfig, rng: &mut Rng) -> Result<LabeledDataset> {
    config.validate()?;
    if !config.enabled {
        return Ok(data.clone());
    }
    let n = data.dim();
    let spatial = config.hflip_prob > 0.0 || config.max_shift_px > 0;
    let side = (n as f64).sqrt().round() as usize;
    if spatial && side * side != n {
        return Err(Error::contract(
            "augment",
            format!("feature length {n} is not a square image"),
        ));
    }
    let mut features = Matrix::zeros(n, data.len());
    let mut pixels = vec![0.0f64; n];
    let mut scratch = vec![0.0f64; n];
    for i in 0..data.len() {
        for p in 0..n {
            pixels[p] = data.features.at(p, i);
        }
        if config.noise_sigma > 0.0 {
            for v in pixels.iter_mut() {
                *v = (*v + config.noise_sigma * rng.normal()).clamp(0.0, 1.0);
            }
        }
        if config.hflip_prob > 0.0 && rng.bernoulli(config.hflip_prob) {
            for r in 0..side {
                for c in 0..side {
                    scratch[r * side + c] = pixels[r * side + (side - 1 - c)];
                }
            }
            pixels.copy_from_slice(&scratch);
        }
        if config.max_shift_px > 0 {
            let span = 2 * config.max_shift_px + 1;
            let dr = rng.below(span) as isize - config.max_shift_px as isize;
            let dc = rng.below(span) as isize - config.max_shift_px as isize;
            scratch.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..side as isize {
                for c in 0..side as isize {
                    let (sr, sc) = (r - dr, c - dc);
                    if sr >= 0 && sr < side as isize && sc >= 0 && sc < side as isize {
                        scratch[(r * side as isize + c) as usize] =
                            pixels[(sr * side as isize + sc) as usize];
                    }
                }
            }
            pixels.copy_from_slice(&scratch);
        }
        for p in 0..n {
            features.set(p, i, pixels[p]);
        }
    }
    LabeledDataset::new(features, data.labels.clone(), data.class_count)
}

/// Gaussian blobs at simplex-placed means with pairwise distance
/// `separation`, min-max scaled into [0, 1]. Fast deterministic corpus for
/// tests; requires n >= classes for the mean placement.
pub fn synth_gaussian(
    classes: usize,
    n: usize,
    per_class: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::contract("synth_gaussian", "need at least 2 classes"));
    }
    if per_class == 0 || n == 0 {
        return Err(Error::contract("synth_gaussian", "n and per_class must be at least 1"));
    }
    if n < classes {
        return Err(Error::contract(
            "synth_gaussian",
            format!("n = {n} too small to place {classes} simplex means"),
        ));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::contract("synth_gaussian", "separation must be nonnegative"));
    }
    // Scaled standard basis: distinct unit vectors are sqrt(2) apart, so a
    // factor of separation/sqrt(2) yields the requested pairwise distance.
    let scale = separation / 2.0f64.sqrt();
    let t = classes * per_class;
    let mut features = Matrix::zeros(n, t);
    let mut labels = Vec::with_capacity(t);
    let mut col = 0;
    for c in 0..classes {
        for _ in 0..per_class {
            for p in 0..n {
                let mean = if p == c { scale } else { 0.0 };
                features.set(p, col, mean + rng.normal());
            }
            labels.push(c);
            col += 1;
        }
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &features.data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    for v in features.data.iter_mut() {
        *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
    }
    LabeledDataset::new(features, labels, classes)
}
