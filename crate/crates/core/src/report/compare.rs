use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricsReport;
use crate::stats::BootstrapCi;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: String,
    pub n_images: usize,
    pub dice: f64,
    pub iou: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub dice_ci: Option<BootstrapCi>,
    /// Wilcoxon p against the first run, when both share images.
    pub p_value: Option<f64>,
    pub stars: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

/// One row per run; runs after the first are tested against it.
pub fn compare_reports(runs: &[(String, MetricsReport)]) -> ComparisonTable {
    let baseline = runs.first().map(|(n, _)| n.clone()).unwrap_or_default();
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, (name, r))| {
            let (mut p_value, mut stars) = (None, String::new());
            if i > 0 {
                let mut probe = r.clone();
                if probe.compare_with(&runs[0].1).is_ok() {
                    let c = probe.comparison.unwrap();
                    p_value = Some(c.wilcoxon.p_value);
                    stars = c.stars;
                }
            }
            ComparisonRow {
                run: name.clone(),
                n_images: r.n_images,
                dice: r.mean_dice,
                iou: r.mean_iou,
                accuracy: r.accuracy,
                f1: r.f1,
                dice_ci: r.dice_ci,
                p_value,
                stars,
            }
        })
        .collect();
    ComparisonTable {
        schema_version: super::METRICS_SCHEMA_VERSION,
        baseline,
        rows,
    }
}

pub fn render_comparison(t: &ComparisonTable) -> String {
    let mut s = String::from("| run | images | dice | 95% CI | iou | accuracy | f1 | p vs baseline |\n|---|---|---|---|---|---|---|---|\n");
    for r in &t.rows {
        let ci = r.dice_ci.map_or("-".to_string(), |c| {
            format!("[{:.4}, {:.4}]", c.low, c.high)
        });
        let p = r
            .p_value
            .map_or("-".to_string(), |p| format!("{p:.4}{}", r.stars));
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {ci} | {:.4} | {:.1} | {:.1} | {p} |",
            r.run, r.n_images, r.dice, r.iou, r.accuracy, r.f1
        );
    }
    s
}
