//! Dataset ingestion, preprocessing, deterministic splitting, shuffling and
//! batching.
//!
//! Raw images (any size, u8 grayscale) come from IDX files or class-directory
//! trees, run through the preprocessing pipeline, and become a [`Dataset`]:
//! an N×1×32×32 tensor in [0,1] plus labels. Splits and epoch shuffles are
//! seeded so every run is reproducible.

pub mod idx;
pub mod image_dir;
pub mod preprocess;
pub mod synthetic;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_u32, write_u32};
use crate::nn::tensor::Tensor;
use crate::rng::{stream_rng, Stream};

/// Cache file magic for preprocessed datasets.
pub const CACHE_MAGIC: [u8; 4] = *b"KGAD";
/// Cache format version written by this build.
pub const CACHE_VERSION: u32 = 1;

/// A grayscale image as loaded, before preprocessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, one byte per pixel.
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<RawImage> {
        if pixels.len() != width * height {
            return Err(Error::data(format!(
                "image buffer holds {} bytes for {width}x{height}",
                pixels.len()
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::data("empty image"));
        }
        Ok(RawImage { width, height, pixels })
    }
}

/// Loaded-but-unprocessed dataset.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub images: Vec<RawImage>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

/// Preprocessed dataset: images stacked into one [N,1,side,side] tensor with
/// values in [0,1], labels as class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Dataset> {
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != shape[3] {
            return Err(Error::data(format!("dataset tensor must be [N,1,S,S], got {shape:?}")));
        }
        if shape[0] == 0 {
            return Err(Error::data("dataset is empty"));
        }
        if shape[0] != labels.len() {
            return Err(Error::data(format!(
                "{} images but {} labels",
                shape[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset { images, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.images.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side(&self) -> usize {
        self.images.dim(2)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// New dataset holding the given rows, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::data("cannot gather an empty selection"));
        }
        let side = self.side();
        let sample = side * side;
        let mut images = Tensor::zeros(&[indices.len(), 1, side, side]);
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::data(format!("index {i} out of range for {}", self.len())));
            }
            images.data_mut()[row * sample..(row + 1) * sample]
                .copy_from_slice(&self.images.data()[i * sample..(i + 1) * sample]);
            labels.push(self.labels[i]);
        }
        Dataset::new(images, labels, self.num_classes)
    }

    /// Writes the `KGAD` cache: header, then labels (u32 LE) and image values
    /// (f64 LE).
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&CACHE_MAGIC)?;
        write_u32(&mut w, CACHE_VERSION)?;
        write_u32(&mut w, self.len() as u32)?;
        write_u32(&mut w, self.num_classes as u32)?;
        write_u32(&mut w, self.side() as u32)?;
        for &l in &self.labels {
            write_u32(&mut w, l as u32)?;
        }
        for &v in self.images.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_cache(path: &Path) -> Result<Dataset> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != CACHE_MAGIC {
            return Err(Error::data(format!(
                "{}: unexpected magic {magic:?} at offset 0",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(Error::data(format!("unsupported cache version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        let num_classes = read_u32(&mut r)? as usize;
        let side = read_u32(&mut r)? as usize;
        if n == 0 || side == 0 || n > 1 << 24 || side > 1 << 12 {
            return Err(Error::data(format!("implausible cache dimensions N={n}, side={side}")));
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(read_u32(&mut r)? as usize);
        }
        let mut data = Vec::with_capacity(n * side * side);
        let mut buf = [0u8; 8];
        for _ in 0..n * side * side {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Dataset::new(Tensor::from_vec(data, &[n, 1, side, side])?, labels, num_classes)
    }
}

/// How to carve the validation set out of the full training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Number of samples held out for validation.
    pub validation_size: usize,
    /// Seed for the split permutation.
    pub split_seed: u64,
}

/// Seeded-shuffle partition into (train, validation).
///
/// The permutation is drawn from the split stream of `split_seed`; the first
/// `validation_size` shuffled indices form the validation set.
pub fn split_train_val(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if spec.validation_size == 0 {
        return Err(Error::config("validation_size must be at least 1"));
    }
    if spec.validation_size >= n {
        return Err(Error::config(format!(
            "validation_size {} must be smaller than the dataset ({n})",
            spec.validation_size
        )));
    }
    if spec.validation_size >= n - spec.validation_size {
        return Err(Error::config(format!(
            "validation_size {} must be smaller than the remaining training set ({})",
            spec.validation_size,
            n - spec.validation_size
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(spec.split_seed, Stream::Split);
    indices.shuffle(&mut rng);
    let val = dataset.gather(&indices[..spec.validation_size])?;
    let train = dataset.gather(&indices[spec.validation_size..])?;
    Ok((train, val))
}

/// Fresh seeded permutation of `0..n`, chunked into batches. The final short
/// batch is retained.
pub fn epoch_batches(n: usize, batch_size: usize, epoch_rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(epoch_rng);
    indices.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
