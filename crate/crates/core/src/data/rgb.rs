use image::RgbImage;

use super::{BinaryMask, DataError, Label};

/// Channel value above which a pixel counts as annotated (10/255).
pub const DEFAULT_BLACK_THRESHOLD: u8 = 10;

/// Lesion class encoded by a colour-coded mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RgbMaskLabel {
    Benign,
    Malignant,
    None,
}

impl RgbMaskLabel {
    pub fn to_label(self) -> Label {
        match self {
            RgbMaskLabel::Benign => Label::Benign,
            RgbMaskLabel::Malignant => Label::Malignant,
            RgbMaskLabel::None => Label::Normal,
        }
    }
}

/// Converts a green (benign) / red (malignant) on black annotation into a
/// binary mask and its lesion label. Foreground is any pixel with a channel
/// above `black_threshold`; each foreground pixel is attributed to its
/// stronger of red and green.
pub fn convert_rgb_mask(
    rgb: &RgbImage,
    black_threshold: u8,
) -> Result<(BinaryMask, RgbMaskLabel), DataError> {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut fg = Vec::with_capacity(w * h);
    let (mut red, mut green, mut other) = (0usize, 0usize, 0usize);
    for p in rgb.pixels() {
        let [r, g, b] = p.0;
        let on = r > black_threshold || g > black_threshold || b > black_threshold;
        fg.push(on);
        if !on {
            continue;
        }
        if r > g && r > black_threshold {
            red += 1;
        } else if g > r && g > black_threshold {
            green += 1;
        } else {
            other += 1;
        }
    }
    if (red > 0 && green > 0) || other > 0 {
        return Err(DataError::AmbiguousAnnotation { red, green });
    }
    let label = if green > 0 {
        RgbMaskLabel::Benign
    } else if red > 0 {
        RgbMaskLabel::Malignant
    } else {
        RgbMaskLabel::None
    };
    Ok((BinaryMask::from_bools(h, w, &fg), label))
}
