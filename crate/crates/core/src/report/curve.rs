use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::stats::aggregate_seed_stats;
use crate::train::CurvePoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    aggregate_seed_stats(values).map_or(
        MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        },
        |s| MeanStd {
            mean: s.mean,
            std: s.std,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurvePoint {
    pub fraction: f64,
    pub n_train_images: usize,
    pub dice: MeanStd,
    /// Percent.
    pub accuracy: MeanStd,
    /// `100 * dice / source_reference`.
    pub percent_of_source: Option<f64>,
}

/// Merges per-seed curves (same fractions, same order) into mean ± std rows.
pub fn learning_curve_points(
    runs: &[Vec<CurvePoint>],
    source_reference: Option<f64>,
) -> Vec<LearningCurvePoint> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            let dice: Vec<f64> = runs.iter().map(|r| r[i].dice).collect();
            let acc: Vec<f64> = runs.iter().map(|r| 100.0 * r[i].accuracy).collect();
            let dice = mean_std(&dice);
            LearningCurvePoint {
                fraction: first[i].fraction,
                n_train_images: first[i].n_train,
                dice,
                accuracy: mean_std(&acc),
                percent_of_source: source_reference
                    .filter(|r| *r > 0.0)
                    .map(|r| 100.0 * dice.mean / r),
            }
        })
        .collect()
}

pub fn render_curve_tsv(points: &[LearningCurvePoint]) -> String {
    let mut s = String::from(
        "fraction\tn_train\tdice_mean\tdice_std\taccuracy_mean\taccuracy_std\tpercent_of_source\n",
    );
    for p in points {
        let pct = p
            .percent_of_source
            .map_or("-".to_string(), |v| format!("{v:.1}"));
        let _ = writeln!(
            s,
            "{}\t{}\t{:.4}\t{:.4}\t{:.1}\t{:.1}\t{pct}",
            p.fraction, p.n_train_images, p.dice.mean, p.dice.std, p.accuracy.mean, p.accuracy.std
        );
    }
    s
}

fn line(
    img: &mut RgbImage,
    (x0, y0): (i64, i64),
    (x1, y1): (i64, i64),
    color: Rgb<u8>,
    dashed: bool,
) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for i in 0..=steps {
        if dashed && (i / 6) % 2 == 1 {
            continue;
        }
        let x = x0 + (x1 - x0) * i / steps;
        let y = y0 + (y1 - y0) * i / steps;
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Dice against fraction on `[0, max fraction] x [0, 1]`, with the source
/// reference as a dashed line.
pub fn render_curve_plot(points: &[LearningCurvePoint], source_reference: Option<f64>) -> RgbImage {
    let (w, h, m) = (480i64, 320i64, 30i64);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb([255, 255, 255]));
    let black = Rgb([0, 0, 0]);
    line(&mut img, (m, h - m), (w - m, h - m), black, false);
    line(&mut img, (m, m), (m, h - m), black, false);
    let xmax = points
        .iter()
        .map(|p| p.fraction)
        .fold(0.0, f64::max)
        .max(1e-9);
    let to_px = |f: f64, d: f64| {
        (
            m + ((w - 2 * m) as f64 * f / xmax).round() as i64,
            h - m - ((h - 2 * m) as f64 * d.clamp(0.0, 1.0)).round() as i64,
        )
    };
    if let Some(r) = source_reference {
        line(
            &mut img,
            to_px(0.0, r),
            to_px(xmax, r),
            Rgb([200, 40, 40]),
            true,
        );
    }
    let pts: Vec<(i64, i64)> = points
        .iter()
        .map(|p| to_px(p.fraction, p.dice.mean))
        .collect();
    for pair in pts.windows(2) {
        line(&mut img, pair[0], pair[1], Rgb([30, 80, 200]), false);
    }
    for &(x, y) in &pts {
        for dy in -2..=2 {
            line(
                &mut img,
                (x - 2, y + dy),
                (x + 2, y + dy),
                Rgb([30, 80, 200]),
                false,
            );
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_of_source_is_a_ratio() {
        let p = CurvePoint {
            fraction: 0.1,
            n_train: 68,
            n_test: 615,
            dice: 0.707,
            iou: 0.6,
            lesion_dice: None,
            accuracy: 0.8,
        };
        let rows = learning_curve_points(&[vec![p]], Some(0.7617));
        assert!((rows[0].percent_of_source.unwrap() - 92.8).abs() < 0.05);
        assert_eq!(rows[0].dice.std, 0.0);
    }
}
