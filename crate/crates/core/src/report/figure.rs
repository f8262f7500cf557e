//! Five-column interpretability panels: input, ground truth, prediction,
//! attention, Grad-CAM.

use image::{Rgb, RgbImage};
use sonoseg_tensor::Tensor;

use crate::data::BinaryMask;

pub const PANEL_COLUMNS: usize = 5;
const GAP: u32 = 4;
const LABEL_ROWS: u32 = 9;

pub struct PanelInputs<'a> {
    /// `[3, H, W]` in `[0, 1]`.
    pub image: &'a Tensor,
    pub ground_truth: &'a BinaryMask,
    pub prediction: &'a BinaryMask,
    /// `[H, W]` values in `[0, 1]`.
    pub attention: &'a Tensor,
    pub grad_cam: &'a Tensor,
    /// Printed under the attention column.
    pub attention_iou: f64,
    /// Printed under the prediction column.
    pub prediction_dice: f64,
}

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Blue to red ramp.
fn heat(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    [
        (1.5 - (4.0 * v - 3.0).abs()).clamp(0.0, 1.0),
        (1.5 - (4.0 * v - 2.0).abs()).clamp(0.0, 1.0),
        (1.5 - (4.0 * v - 1.0).abs()).clamp(0.0, 1.0),
    ]
}

/// 3x5 glyphs for digits and '.'.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        _ => [0; 5],
    }
}

fn stamp(img: &mut RgbImage, x0: u32, y0: u32, text: &str) {
    for (i, c) in text.chars().enumerate() {
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..3 {
                if bits >> (2 - col) & 1 == 1 {
                    let (x, y) = (x0 + 4 * i as u32 + col, y0 + row as u32);
                    if x < img.width() && y < img.height() {
                        img.put_pixel(x, y, Rgb([0, 0, 0]));
                    }
                }
            }
        }
    }
}

pub fn panel_figure(p: &PanelInputs<'_>) -> RgbImage {
    let sh = p.image.shape();
    let (h, w) = (sh[1] as u32, sh[2] as u32);
    let plane = (h * w) as usize;
    let mut img = RgbImage::from_pixel(
        PANEL_COLUMNS as u32 * (w + GAP) - GAP,
        h + LABEL_ROWS,
        Rgb([255, 255, 255]),
    );
    let px = p.image.data();
    let gray = |i: usize| (px[i] + px[plane + i] + px[2 * plane + i]) / 3.0;
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let g = gray(i);
            let mask_px = |m: &BinaryMask| {
                if m.get(y as usize, x as usize) {
                    Rgb([255, 255, 255])
                } else {
                    Rgb([0, 0, 0])
                }
            };
            let blend = |v: f64| {
                let c = heat(v);
                Rgb([
                    byte(0.5 * g + 0.5 * c[0]),
                    byte(0.5 * g + 0.5 * c[1]),
                    byte(0.5 * g + 0.5 * c[2]),
                ])
            };
            let cols = [
                Rgb([byte(px[i]), byte(px[plane + i]), byte(px[2 * plane + i])]),
                mask_px(p.ground_truth),
                mask_px(p.prediction),
                blend(p.attention.data()[i]),
                blend(p.grad_cam.data()[i]),
            ];
            for (c, color) in cols.into_iter().enumerate() {
                img.put_pixel(c as u32 * (w + GAP) + x, y, color);
            }
        }
    }
    stamp(
        &mut img,
        2 * (w + GAP) + 1,
        h + 2,
        &format!("{:.2}", p.prediction_dice),
    );
    stamp(
        &mut img,
        3 * (w + GAP) + 1,
        h + 2,
        &format!("{:.2}", p.attention_iou),
    );
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_has_five_columns() {
        let image = Tensor::full(&[3, 8, 8], 0.5);
        let m = BinaryMask::zeros(8, 8);
        let a = Tensor::zeros(&[8, 8]);
        let fig = panel_figure(&PanelInputs {
            image: &image,
            ground_truth: &m,
            prediction: &m,
            attention: &a,
            grad_cam: &a,
            attention_iou: 1.0,
            prediction_dice: 1.0,
        });
        assert_eq!(fig.width(), 5 * 8 + 4 * GAP);
    }
}
