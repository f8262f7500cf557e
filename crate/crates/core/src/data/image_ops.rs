use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;

use super::{BinaryMask, DataError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Bicubic,
    Bilinear,
    Nearest,
}

impl std::str::FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bicubic" => Ok(Interpolation::Bicubic),
            "bilinear" => Ok(Interpolation::Bilinear),
            "nearest" => Ok(Interpolation::Nearest),
            other => Err(format!("unknown interpolation {other:?}")),
        }
    }
}

// Keys cubic convolution kernel parameter.
const CUBIC_A: f64 = -0.5;

fn cubic_weights(t: f64) -> [f64; 4] {
    let w = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
        } else if x < 2.0 {
            ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
        } else {
            0.0
        }
    };
    [w(1.0 + t), w(t), w(1.0 - t), w(2.0 - t)]
}

/// Half-pixel nearest source index.
fn nearest_index(d: usize, in_len: usize, out_len: usize) -> usize {
    (((d as f64 + 0.5) * in_len as f64 / out_len as f64).floor() as usize).min(in_len - 1)
}

/// Per-output taps `(indices, weights)` along one axis.
fn taps(in_len: usize, out_len: usize, mode: Interpolation) -> Vec<Vec<(usize, f64)>> {
    match mode {
        Interpolation::Nearest => (0..out_len)
            .map(|d| vec![(nearest_index(d, in_len, out_len), 1.0)])
            .collect(),
        Interpolation::Bilinear => sonoseg_tensor::bilinear_taps(in_len, out_len)
            .into_iter()
            .map(|(lo, hi, f)| vec![(lo, 1.0 - f), (hi, f)])
            .collect(),
        Interpolation::Bicubic => {
            let scale = in_len as f64 / out_len as f64;
            (0..out_len)
                .map(|d| {
                    let src = (d as f64 + 0.5) * scale - 0.5;
                    let base = src.floor();
                    let w = cubic_weights(src - base);
                    (0..4)
                        .map(|k| {
                            let i = (base as isize - 1 + k as isize).clamp(0, in_len as isize - 1)
                                as usize;
                            (i, w[k])
                        })
                        .collect()
                })
                .collect()
        }
    }
}

fn resize_plane(
    src: &[f64],
    h: usize,
    w: usize,
    ty: &[Vec<(usize, f64)>],
    tx: &[Vec<(usize, f64)>],
) -> Vec<f64> {
    // Separable: rows first, then columns.
    let ow = tx.len();
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for (ox, t) in tx.iter().enumerate() {
            rows[y * ow + ox] = t.iter().map(|&(i, wt)| src[y * w + i] * wt).sum();
        }
    }
    let mut out = vec![0.0; ty.len() * ow];
    for (oy, t) in ty.iter().enumerate() {
        for ox in 0..ow {
            out[oy * ow + ox] = t.iter().map(|&(i, wt)| rows[i * ow + ox] * wt).sum();
        }
    }
    out
}

/// Resizes a `[C, H, W]` image. Bicubic output is clamped to `[0, 1]`
/// because the cubic kernel overshoots at edges.
pub fn resize_image(
    image: &Tensor,
    out_h: usize,
    out_w: usize,
    mode: Interpolation,
) -> Result<Tensor, DataError> {
    let sh = image.shape();
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(DataError::Degenerate(h, w));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let ty = taps(h, out_h, mode);
    let tx = taps(w, out_w, mode);
    let mut data = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = resize_plane(&image.data()[ch * h * w..(ch + 1) * h * w], h, w, &ty, &tx);
        if mode == Interpolation::Bicubic {
            data.extend(plane.into_iter().map(|v| v.clamp(0.0, 1.0)));
        } else {
            data.extend(plane);
        }
    }
    Ok(Tensor::new(&[c, out_h, out_w], data))
}

/// Nearest-neighbour resize followed by re-binarisation at 0.5.
pub fn resize_mask(mask: &BinaryMask, out_h: usize, out_w: usize) -> Result<BinaryMask, DataError> {
    let (h, w) = (mask.height(), mask.width());
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(DataError::Degenerate(h, w));
    }
    let plane = mask.to_tensor();
    let ty = taps(h, out_h, Interpolation::Nearest);
    let tx = taps(w, out_w, Interpolation::Nearest);
    let values = resize_plane(plane.data(), h, w, &ty, &tx);
    Ok(BinaryMask::threshold(out_h, out_w, &values, 0.5))
}

/// Per-channel `(x - mean) / std`.
pub fn normalize_image(image: &Tensor, mean: &[f64; 3], std: &[f64; 3]) -> Tensor {
    let sh = image.shape();
    let plane = sh[1] * sh[2];
    let mut out = image.clone();
    for (ch, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        for v in chunk {
            *v = (*v - mean[ch]) / std[ch];
        }
    }
    out
}

pub(crate) fn flip_horizontal(image: &mut Tensor, mask: &mut BinaryMask) {
    let sh = image.shape().to_vec();
    let (h, w) = (sh[1], sh[2]);
    for row in image.data_mut().chunks_mut(w) {
        row.reverse();
    }
    *mask = BinaryMask::from_fn(h, w, |y, x| mask.get(y, w - 1 - x));
}

pub(crate) fn flip_vertical(image: &mut Tensor, mask: &mut BinaryMask) {
    let sh = image.shape().to_vec();
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    let src = image.clone();
    let d = image.data_mut();
    for ch in 0..c {
        for y in 0..h {
            let from = (ch * h + (h - 1 - y)) * w;
            d[(ch * h + y) * w..(ch * h + y + 1) * w].copy_from_slice(&src.data()[from..from + w]);
        }
    }
    *mask = BinaryMask::from_fn(h, w, |y, x| mask.get(h - 1 - y, x));
}

/// Rotation by `degrees` about the image centre. The image is resampled
/// bilinearly, the mask by nearest neighbour; exposed corners become 0.
pub(crate) fn rotate(image: &Tensor, mask: &BinaryMask, degrees: f64) -> (Tensor, BinaryMask) {
    let sh = image.shape();
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    // Inverse map from output pixel to source coordinates.
    let source = |y: usize, x: usize| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        (cos * dy - sin * dx + cy, sin * dy + cos * dx + cx)
    };
    let mut out = vec![0.0; c * h * w];
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = source(y, x);
            if sy < -0.5 || sx < -0.5 || sy > h as f64 - 0.5 || sx > w as f64 - 0.5 {
                continue;
            }
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            for ch in 0..c {
                let plane = &image.data()[ch * h * w..(ch + 1) * h * w];
                let px = |yy: f64, xx: f64| {
                    let (yy, xx) = (
                        yy.clamp(0.0, h as f64 - 1.0) as usize,
                        xx.clamp(0.0, w as f64 - 1.0) as usize,
                    );
                    plane[yy * w + xx]
                };
                let top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1.0) * fx;
                let bot = px(y0 + 1.0, x0) * (1.0 - fx) + px(y0 + 1.0, x0 + 1.0) * fx;
                out[(ch * h + y) * w + x] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    let rotated_mask = BinaryMask::from_fn(h, w, |y, x| {
        let (sy, sx) = source(y, x);
        let (ry, rx) = (sy.round(), sx.round());
        ry >= 0.0
            && rx >= 0.0
            && ry < h as f64
            && rx < w as f64
            && mask.get(ry as usize, rx as usize)
    });
    (Tensor::new(sh, out), rotated_mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_weights_partition_unity() {
        for t in [0.0, 0.25, 0.5, 0.9] {
            let s: f64 = cubic_weights(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(cubic_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_resize_is_exact() {
        let img = Tensor::new(&[3, 2, 2], (0..12).map(|v| v as f64 / 12.0).collect());
        for mode in [
            Interpolation::Bicubic,
            Interpolation::Bilinear,
            Interpolation::Nearest,
        ] {
            assert_eq!(resize_image(&img, 2, 2, mode).unwrap(), img);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Tensor::full(&[3, 5, 7], 0.3);
        for mode in [
            Interpolation::Bicubic,
            Interpolation::Bilinear,
            Interpolation::Nearest,
        ] {
            let r = resize_image(&img, 9, 4, mode).unwrap();
            assert!(r.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn degenerate_resize_is_an_error() {
        let img = Tensor::zeros(&[3, 0, 4]);
        assert!(matches!(
            resize_image(&img, 4, 4, Interpolation::Bilinear),
            Err(DataError::Degenerate(0, 4))
        ));
    }

    #[test]
    fn normalization_of_mean_is_zero() {
        let mut img = Tensor::full(&[3, 2, 2], 0.5);
        img.data_mut()[..4].fill(0.485);
        let n = normalize_image(&img, &[0.485, 0.456, 0.406], &[0.229, 0.224, 0.225]);
        assert!(n.data()[..4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = Tensor::new(&[1, 3, 4], (0..12).map(|v| v as f64).collect());
        let mask = BinaryMask::from_fn(3, 4, |y, x| (x + y) % 2 == 0);
        let (ri, rm) = rotate(&img, &mask, 0.0);
        assert!(ri.max_abs_diff(&img) < 1e-12);
        assert_eq!(rm, mask);
    }
}
