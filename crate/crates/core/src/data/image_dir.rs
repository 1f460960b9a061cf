//! Loading a class-per-subdirectory image tree.
//!
//! The root holds one subdirectory per class, named by the class index
//! (`0/`, `1/`, …). Files inside a class are loaded in lexicographic order and
//! classes in ascending numeric order, so the same tree always produces the
//! same dataset.

use std::path::Path;

use crate::data::{RawDataset, RawImage};
use crate::error::{Error, Result};

/// Loads every image under `root`, labeling by subdirectory name.
pub fn load_image_dir(root: &Path) -> Result<RawDataset> {
    if !root.is_dir() {
        return Err(Error::data(format!("{} is not a directory", root.display())));
    }
    let mut classes: Vec<(usize, std::path::PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let class: usize = name.parse().map_err(|_| {
            Error::config(format!(
                "class directory {:?} is not a numeric class index",
                name.as_ref()
            ))
        })?;
        classes.push((class, entry.path()));
    }
    if classes.is_empty() {
        return Err(Error::data(format!("{} holds no class directories", root.display())));
    }
    classes.sort_by_key(|(class, _)| *class);
    let num_classes = classes.last().map(|(c, _)| c + 1).unwrap_or(0);

    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (class, dir) in classes {
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(&dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|e| e.path().is_file())
            .map(|e| e.path())
            .collect();
        files.sort();
        if files.is_empty() {
            log::warn!("class {class} ({}) holds no images", dir.display());
            continue;
        }
        for file in files {
            let decoded = image::open(&file)
                .map_err(|e| Error::data(format!("cannot decode {}: {e}", file.display())))?
                .into_luma8();
            let (width, height) = (decoded.width() as usize, decoded.height() as usize);
            images.push(RawImage::new(width, height, decoded.into_raw())?);
            labels.push(class);
        }
    }
    if images.is_empty() {
        return Err(Error::data(format!("{} holds no images", root.display())));
    }
    Ok(RawDataset { images, labels, num_classes })
}
