//! IDX file loading and writing (the MNIST-style container: big-endian magic,
//! dimensions, then raw u8 payload).
//!
//! Images use magic `0x00000803` with dims (N, rows, cols); labels use
//! `0x00000801` with dim (N). Every parse error names the byte offset it
//! happened at.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{RawDataset, RawImage};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reader that tracks its byte offset so errors can point at the spot.
struct Offset<R> {
    inner: R,
    pos: usize,
    path: String,
}

impl<R: Read> Offset<R> {
    fn new(inner: R, path: &Path) -> Offset<R> {
        Offset { inner, pos: 0, path: path.display().to_string() }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        let at = self.pos;
        self.inner.read_exact(buf).map_err(|_| {
            Error::data(format!("{}: truncated file at offset {at}", self.path))
        })?;
        self.pos += buf.len();
        Ok(())
    }

    fn read_u32_be(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf)?;
        Ok(u32::from_be_bytes(buf))
    }
}

/// Loads an IDX image/label file pair into a raw dataset. The label count must
/// match the image count; `num_classes` is max(label)+1.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let mut r = Offset::new(BufReader::new(File::open(images_path)?), images_path);
    let magic = r.read_u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::data(format!(
            "{}: unexpected magic {magic:#010x} at offset 0",
            images_path.display()
        )));
    }
    let n = r.read_u32_be()? as usize;
    let rows = r.read_u32_be()? as usize;
    let cols = r.read_u32_be()? as usize;
    if rows == 0 || cols == 0 || rows > 1 << 12 || cols > 1 << 12 {
        return Err(Error::data(format!(
            "{}: implausible image dimensions {rows}x{cols} at offset 8",
            images_path.display()
        )));
    }
    let mut images = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pixels = vec![0u8; rows * cols];
        r.read_exact(&mut pixels)?;
        images.push(RawImage::new(cols, rows, pixels)?);
    }

    let mut r = Offset::new(BufReader::new(File::open(labels_path)?), labels_path);
    let magic = r.read_u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(Error::data(format!(
            "{}: unexpected magic {magic:#010x} at offset 0",
            labels_path.display()
        )));
    }
    let label_count = r.read_u32_be()? as usize;
    if label_count != n {
        return Err(Error::data(format!(
            "{}: {label_count} labels for {n} images (count field at offset 4)",
            labels_path.display()
        )));
    }
    let mut bytes = vec![0u8; n];
    r.read_exact(&mut bytes)?;
    let labels: Vec<usize> = bytes.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Ok(RawDataset { images, labels, num_classes })
}

/// Writes an IDX image/label pair. All images must share one size.
pub fn write_idx(dataset: &RawDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let first = dataset
        .images
        .first()
        .ok_or_else(|| Error::data("cannot write an empty dataset"))?;
    let (rows, cols) = (first.height, first.width);
    if dataset.images.iter().any(|i| i.height != rows || i.width != cols) {
        return Err(Error::data("IDX files require uniformly sized images"));
    }
    if dataset.labels.len() != dataset.images.len() {
        return Err(Error::data("label count does not match image count"));
    }

    let mut w = BufWriter::new(File::create(images_path)?);
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(dataset.images.len() as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    for image in &dataset.images {
        w.write_all(&image.pixels)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(labels_path)?);
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(dataset.labels.len() as u32).to_be_bytes())?;
    for &l in &dataset.labels {
        if l > u8::MAX as usize {
            return Err(Error::data(format!("label {l} does not fit the IDX u8 payload")));
        }
        w.write_all(&[l as u8])?;
    }
    w.flush()?;
    Ok(())
}
