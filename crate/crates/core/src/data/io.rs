use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use sonoseg_tensor::Tensor;

use super::rgb::{convert_rgb_mask, DEFAULT_BLACK_THRESHOLD};
use super::{BinaryMask, DataError, DatasetManifest, ImageRecord, Label, ManifestEntry, Source};

const MANIFEST_MAGIC: &str = "#sonoseg-manifest v1";
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn unreadable(path: &Path, reason: impl ToString) -> DataError {
    DataError::UnreadableImage {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage, DataError> {
    image::open(path).map_err(|e| unreadable(path, e))
}

/// Decodes an image into `[3, H, W]` with intensities in `[0, 1]`.
pub(crate) fn read_rgb(path: &Path) -> Result<Tensor, DataError> {
    let img = open_image(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = p.0[c] as f64 / 255.0;
        }
    }
    Ok(Tensor::new(&[3, h, w], data))
}

fn read_gray_mask(path: &Path) -> Result<BinaryMask, DataError> {
    let img = open_image(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<bool> = img.pixels().map(|p| p.0[0] > 127).collect();
    Ok(BinaryMask::from_bools(h, w, &values))
}

fn relative(root: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(root)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| path.to_path_buf())
}

/// Scans `<root>/<class>/<name>.png` with sibling `<name>_mask*.png` files.
/// Every image and mask is decoded once to validate it.
pub fn load_busi_manifest(root: &Path) -> Result<DatasetManifest, DataError> {
    let mut entries = Vec::new();
    for label in Label::ALL {
        let Some(dir) = find_class_dir(root, label)? else {
            warn!("no {label} folder under {}", root.display());
            continue;
        };
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        files.sort();
        let (masks, images): (Vec<PathBuf>, Vec<PathBuf>) = files.into_iter().partition(|p| {
            p.file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.contains("_mask"))
        });
        if images.is_empty() {
            warn!("class folder {} is empty", dir.display());
        }
        for image in images {
            let stem = image
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let prefix = format!("{stem}_mask");
            let own: Vec<PathBuf> = masks
                .iter()
                .filter(|m| {
                    m.file_stem()
                        .and_then(|s| s.to_str())
                        .is_some_and(|s| is_mask_of(s, &prefix))
                })
                .cloned()
                .collect();
            if own.is_empty() && label != Label::Normal {
                return Err(DataError::MissingMask(image));
            }
            let entry = ManifestEntry {
                id: format!("{}/{stem}", label.name()),
                image_path: relative(root, &image),
                mask_paths: own.iter().map(|m| relative(root, m)).collect(),
                label,
                source: Source::Busi,
            };
            let record = load_entry(root, &entry)?;
            if label == Label::Normal && record.mask.count() > 0 {
                warn!(
                    "normal image {} has annotated pixels; they are ignored",
                    entry.id
                );
            }
            entries.push(entry);
        }
    }
    Ok(DatasetManifest::new(root.to_path_buf(), entries))
}

/// `stem` is `prefix` optionally followed by `_<suffix>`.
fn is_mask_of(stem: &str, prefix: &str) -> bool {
    stem == prefix
        || stem
            .strip_prefix(prefix)
            .is_some_and(|rest| rest.starts_with('_'))
}

fn find_class_dir(root: &Path, label: Label) -> Result<Option<PathBuf>, DataError> {
    for e in fs::read_dir(root)? {
        let p = e?.path();
        if p.is_dir()
            && p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.eq_ignore_ascii_case(label.name()))
        {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// Scans `<root>/images/*` with colour-coded `<root>/masks/<same name>`.
/// The label comes from the mask colour; an empty mask means normal.
pub fn load_external_manifest(root: &Path) -> Result<DatasetManifest, DataError> {
    let mut images: Vec<PathBuf> = fs::read_dir(root.join("images"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    images.sort();
    let mut entries = Vec::with_capacity(images.len());
    for image in images {
        let name = image.file_name().expect("file has a name");
        let stem = image
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let mask = root.join("masks").join(name);
        if !mask.is_file() {
            return Err(DataError::MissingMask(image));
        }
        let rgb = open_image(&mask)?.to_rgb8();
        let (bin, lesion) = convert_rgb_mask(&rgb, DEFAULT_BLACK_THRESHOLD)?;
        let entry = ManifestEntry {
            id: stem,
            image_path: relative(root, &image),
            mask_paths: vec![relative(root, &mask)],
            label: lesion.to_label(),
            source: Source::External,
        };
        let img = read_rgb(&root.join(&entry.image_path))?;
        check_shape(&mask, &bin, &img)?;
        entries.push(entry);
    }
    Ok(DatasetManifest::new(root.to_path_buf(), entries))
}

fn check_shape(path: &Path, mask: &BinaryMask, image: &Tensor) -> Result<(), DataError> {
    let image_size = (image.shape()[1], image.shape()[2]);
    if (mask.height(), mask.width()) != image_size {
        return Err(DataError::MaskShape {
            mask: path.to_path_buf(),
            mask_size: (mask.height(), mask.width()),
            image_size,
        });
    }
    Ok(())
}

/// Loads one record; multiple masks are merged by pixel-wise OR.
pub(crate) fn load_entry(root: &Path, entry: &ManifestEntry) -> Result<ImageRecord, DataError> {
    let image = read_rgb(&root.join(&entry.image_path))?;
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let mut mask = BinaryMask::zeros(h, w);
    for m in &entry.mask_paths {
        let path = root.join(m);
        let part = match entry.source {
            Source::Busi => read_gray_mask(&path)?,
            Source::External => {
                convert_rgb_mask(&open_image(&path)?.to_rgb8(), DEFAULT_BLACK_THRESHOLD)?.0
            }
        };
        check_shape(&path, &part, &image)?;
        mask = mask.union(&part);
    }
    if entry.label == Label::Normal {
        mask = BinaryMask::zeros(h, w);
    }
    ImageRecord::new(entry.id.clone(), image, mask, entry.label, entry.source)
}

/// Writes the manifest as a tab-separated table.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DataError> {
    let mut out = Vec::new();
    writeln!(out, "{MANIFEST_MAGIC}")?;
    writeln!(out, "#root\t{}", manifest.root.display())?;
    writeln!(out, "id\timage\tmasks\tlabel\tsource\tsplit")?;
    for e in &manifest.entries {
        let masks = if e.mask_paths.is_empty() {
            "-".to_string()
        } else {
            e.mask_paths
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        let split = manifest.split_of(&e.id).map(|s| s.name()).unwrap_or("-");
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.id,
            e.image_path.display(),
            masks,
            e.label,
            e.source,
            split
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, reason: &str| DataError::ManifestFormat {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, MANIFEST_MAGIC)) => {}
        _ => return Err(bad(1, "missing manifest header")),
    }
    let root = match lines.next() {
        Some((_, l)) if l.starts_with("#root\t") => PathBuf::from(&l["#root\t".len()..]),
        _ => return Err(bad(2, "missing #root line")),
    };
    lines.next();
    let mut entries = Vec::new();
    let mut splits = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad(i + 1, "expected 6 tab-separated columns"));
        }
        let label: Label = cols[3].parse().map_err(|e: String| bad(i + 1, &e))?;
        let source: Source = cols[4].parse().map_err(|e: String| bad(i + 1, &e))?;
        let mask_paths = if cols[2] == "-" {
            Vec::new()
        } else {
            cols[2].split(';').map(PathBuf::from).collect()
        };
        if cols[5] != "-" {
            splits.insert(
                cols[0].to_string(),
                cols[5].parse().map_err(|e: String| bad(i + 1, &e))?,
            );
        }
        entries.push(ManifestEntry {
            id: cols[0].to_string(),
            image_path: PathBuf::from(cols[1]),
            mask_paths,
            label,
            source,
        });
    }
    let mut m = DatasetManifest::new(root, entries);
    m.split_assignment = splits;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_suffix_matching() {
        assert!(is_mask_of("benign (1)_mask", "benign (1)_mask"));
        assert!(is_mask_of("benign (1)_mask_1", "benign (1)_mask"));
        assert!(!is_mask_of("benign (1)_mask1", "benign (1)_mask"));
        assert!(!is_mask_of("benign (10)_mask", "benign (1)_mask"));
    }
}
