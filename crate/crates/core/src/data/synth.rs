//! Toy lesion phantoms for tests, demos and the adaptation harness.
//!
//! Benign lesions are smooth ellipses, malignant ones have a spiculated
//! boundary and darker texture, normal images carry no lesion. The
//! [`Domain::Shifted`] variant inverts the intensity scale, which a model
//! trained on [`Domain::Source`] does not transfer to without adaptation.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonoseg_tensor::Tensor;

use super::{BinaryMask, DataError, ImageRecord, Label, Source};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Source,
    Shifted,
}

struct Phantom {
    plane: Vec<f64>,
    mask: BinaryMask,
}

fn phantom(label: Label, size: usize, domain: Domain, rng: &mut ChaCha8Rng) -> Phantom {
    let s = size as f64;
    let (cy, cx) = (rng.gen_range(0.35..0.65) * s, rng.gen_range(0.35..0.65) * s);
    let (ry, rx) = (rng.gen_range(0.14..0.24) * s, rng.gen_range(0.14..0.24) * s);
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let lobes = rng.gen_range(5..8) as f64;
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = theta.sin_cos();
    let inside = |y: f64, x: f64| {
        let (dy, dx) = (y - cy, x - cx);
        let (u, v) = (cos * dx + sin * dy, -sin * dx + cos * dy);
        let r = ((u / rx).powi(2) + (v / ry).powi(2)).sqrt();
        let bound = match label {
            Label::Normal => return false,
            Label::Benign => 1.0,
            Label::Malignant => 1.0 + 0.3 * (lobes * v.atan2(u) + phase).sin(),
        };
        r < bound
    };
    let mask = BinaryMask::from_fn(size, size, |y, x| inside(y as f64 + 0.5, x as f64 + 0.5));
    let lesion_level = match label {
        Label::Malignant => 0.62,
        _ => 0.85,
    };
    let mut plane = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let base = 0.2 + 0.1 * (y as f64 / s);
            let mut v = if mask.get(y, x) { lesion_level } else { base };
            if label == Label::Malignant && mask.get(y, x) {
                v += 0.08 * ((x + 2 * y) % 3) as f64 - 0.08;
            }
            v += rng.gen_range(-0.06..0.06);
            let v = v.clamp(0.0, 1.0);
            plane.push(match domain {
                Domain::Source => v,
                Domain::Shifted => 1.0 - v,
            });
        }
    }
    Phantom { plane, mask }
}

/// One in-memory phantom with a grey image replicated over three channels.
pub fn synth_record(
    id: &str,
    label: Label,
    size: usize,
    domain: Domain,
    rng: &mut ChaCha8Rng,
) -> ImageRecord {
    let p = phantom(label, size, domain, rng);
    let mut data = Vec::with_capacity(3 * size * size);
    for _ in 0..3 {
        data.extend_from_slice(&p.plane);
    }
    ImageRecord::new(
        id,
        Tensor::new(&[3, size, size], data),
        p.mask,
        label,
        Source::Busi,
    )
    .expect("phantoms satisfy record invariants")
}

/// `counts[c]` phantoms of each label, ordered by label then index.
pub fn synth_records(
    counts: [usize; 3],
    size: usize,
    domain: Domain,
    seed: u64,
) -> Vec<ImageRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in Label::ALL {
        for i in 0..counts[label.index()] {
            out.push(synth_record(
                &format!("{label}/{label} ({})", i + 1),
                label,
                size,
                domain,
                &mut rng,
            ));
        }
    }
    out
}

fn grey_image(plane: &[f64], size: usize) -> RgbImage {
    RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let v = (plane[y as usize * size + x as usize] * 255.0).round() as u8;
        Rgb([v, v, v])
    })
}

fn to_io(e: image::ImageError) -> DataError {
    DataError::Io(std::io::Error::other(e))
}

/// Writes a BUSI-style tree: `<root>/<class>/<class> (i).png` plus
/// `_mask.png`. Every fourth benign lesion is split across `_mask.png` and
/// `_mask_1.png` to exercise multi-mask merging.
pub fn write_busi_dataset(
    root: &Path,
    counts: [usize; 3],
    size: usize,
    domain: Domain,
    seed: u64,
) -> Result<(), DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for label in Label::ALL {
        let dir = root.join(label.name());
        fs::create_dir_all(&dir)?;
        for i in 1..=counts[label.index()] {
            let p = phantom(label, size, domain, &mut rng);
            let stem = format!("{label} ({i})");
            grey_image(&p.plane, size)
                .save(dir.join(format!("{stem}.png")))
                .map_err(to_io)?;
            let split = label == Label::Benign && i % 4 == 0;
            let part = |keep: &dyn Fn(u32) -> bool| {
                GrayImage::from_fn(size as u32, size as u32, |x, y| {
                    Luma([if keep(y) && p.mask.get(y as usize, x as usize) {
                        255
                    } else {
                        0
                    }])
                })
            };
            if split {
                let half = size as u32 / 2;
                part(&|y| y < half)
                    .save(dir.join(format!("{stem}_mask.png")))
                    .map_err(to_io)?;
                part(&|y| y >= half)
                    .save(dir.join(format!("{stem}_mask_1.png")))
                    .map_err(to_io)?;
            } else {
                part(&|_| true)
                    .save(dir.join(format!("{stem}_mask.png")))
                    .map_err(to_io)?;
            }
        }
    }
    Ok(())
}

/// Writes an external-style tree: `images/NNNN.png` with colour-coded
/// `masks/NNNN.png` (green benign, red malignant, black normal).
pub fn write_external_dataset(
    root: &Path,
    counts: [usize; 3],
    size: usize,
    domain: Domain,
    seed: u64,
) -> Result<(), DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(root.join("images"))?;
    fs::create_dir_all(root.join("masks"))?;
    let mut k = 0;
    for label in Label::ALL {
        let colour = match label {
            Label::Normal => [0, 0, 0],
            Label::Benign => [0, 255, 0],
            Label::Malignant => [255, 0, 0],
        };
        for _ in 0..counts[label.index()] {
            k += 1;
            let p = phantom(label, size, domain, &mut rng);
            let name = format!("{k:04}.png");
            grey_image(&p.plane, size)
                .save(root.join("images").join(&name))
                .map_err(to_io)?;
            RgbImage::from_fn(size as u32, size as u32, |x, y| {
                Rgb(if p.mask.get(y as usize, x as usize) {
                    colour
                } else {
                    [0, 0, 0]
                })
            })
            .save(root.join("masks").join(&name))
            .map_err(to_io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_masks_agree() {
        for r in synth_records([2, 2, 2], 32, Domain::Source, 1) {
            assert_eq!(r.label == Label::Normal, r.mask.count() == 0, "{}", r.id);
        }
    }

    #[test]
    fn shifted_domain_inverts_contrast() {
        let a = synth_records([0, 1, 0], 32, Domain::Source, 4).remove(0);
        let b = synth_records([0, 1, 0], 32, Domain::Shifted, 4).remove(0);
        assert_eq!(a.mask, b.mask);
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            assert!((x + y - 1.0).abs() < 1e-12);
        }
    }
}
