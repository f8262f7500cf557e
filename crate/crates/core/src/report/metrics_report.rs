use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, write_file, write_json, ReportError};
use crate::data::Label;
use crate::stats::{significance_stars, BootstrapCi, SeedStats, WilcoxonResult};
use crate::train::Evaluation;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerImage {
    pub id: String,
    pub label: usize,
    pub predicted: usize,
    pub dice: f64,
    pub iou: f64,
}

/// Per-class rates in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

/// Mean and sample std of per-seed scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub dice: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub dice_stats: SeedStats,
    pub accuracy_stats: SeedStats,
}

/// Paired test of this report's per-image Dice against another run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub against: String,
    pub wilcoxon: WilcoxonResult,
    pub cohens_d: Option<f64>,
    pub stars: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub model: String,
    pub n_images: usize,
    pub mean_dice: f64,
    pub mean_iou: f64,
    /// Dice over images with a lesion only.
    pub lesion_dice: Option<f64>,
    /// Overall classification rates in percent; precision, recall and F1
    /// are macro averages.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassRow>,
    pub per_image: Vec<PerImage>,
    pub seeds: Option<SeedSummary>,
    pub dice_ci: Option<BootstrapCi>,
    pub comparison: Option<Comparison>,
}

impl MetricsReport {
    pub fn from_evaluation(model: &str, ev: &Evaluation) -> Self {
        let c = &ev.classification;
        MetricsReport {
            schema_version: METRICS_SCHEMA_VERSION,
            model: model.to_string(),
            n_images: ev.ids.len(),
            mean_dice: ev.mean_dice,
            mean_iou: ev.mean_iou,
            lesion_dice: ev.lesion_dice,
            accuracy: 100.0 * c.accuracy,
            precision: 100.0 * c.precision,
            recall: 100.0 * c.recall,
            f1: 100.0 * c.f1,
            per_class: c
                .per_class
                .iter()
                .enumerate()
                .map(|(i, m)| ClassRow {
                    class: Label::from_index(i)
                        .map_or_else(|| format!("class{i}"), |l| l.name().to_string()),
                    precision: 100.0 * m.precision,
                    recall: 100.0 * m.recall,
                    f1: 100.0 * m.f1,
                    support: m.support,
                    precision_undefined: m.precision_undefined,
                    recall_undefined: m.recall_undefined,
                })
                .collect(),
            per_image: (0..ev.ids.len())
                .map(|i| PerImage {
                    id: ev.ids[i].clone(),
                    label: ev.labels[i],
                    predicted: ev.predictions[i],
                    dice: ev.dice[i],
                    iou: ev.iou[i],
                })
                .collect(),
            seeds: None,
            dice_ci: None,
            comparison: None,
        }
    }

    pub fn per_image_dice(&self) -> Vec<f64> {
        self.per_image.iter().map(|p| p.dice).collect()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}  images: {}", self.model, self.n_images);
        let _ = write!(s, "dice {:.4}  iou {:.4}", self.mean_dice, self.mean_iou);
        if let Some(d) = self.lesion_dice {
            let _ = write!(s, "  lesion-only dice {d:.4}");
        }
        s.push('\n');
        if let Some(ci) = &self.dice_ci {
            let _ = writeln!(
                s,
                "dice {:.0}% CI [{:.4}, {:.4}]",
                100.0 * ci.level,
                ci.low,
                ci.high
            );
        }
        if let Some(seeds) = &self.seeds {
            let _ = writeln!(
                s,
                "seeds {:?}: dice {:.3} ± {:.3}, accuracy {:.1} ± {:.1}",
                seeds.seeds,
                seeds.dice_stats.mean,
                seeds.dice_stats.std,
                seeds.accuracy_stats.mean,
                seeds.accuracy_stats.std
            );
        }
        let _ = writeln!(
            s,
            "\n{:<10} {:>9} {:>9} {:>9} {:>8}",
            "class", "precision", "recall", "f1", "support"
        );
        for r in &self.per_class {
            let flag = if r.precision_undefined || r.recall_undefined {
                " *"
            } else {
                ""
            };
            let _ = writeln!(
                s,
                "{:<10} {:>9.1} {:>9.1} {:>9.1} {:>8}{flag}",
                r.class, r.precision, r.recall, r.f1, r.support
            );
        }
        let _ = writeln!(
            s,
            "{:<10} {:>9.1} {:>9.1} {:>9.1} {:>8}",
            "overall", self.precision, self.recall, self.f1, self.n_images
        );
        let _ = writeln!(s, "accuracy {:.1}%", self.accuracy);
        if let Some(c) = &self.comparison {
            let _ = writeln!(
                s,
                "\nvs {}: wilcoxon W={} n={} p={:.4}{} d={}",
                c.against,
                c.wilcoxon.statistic,
                c.wilcoxon.n,
                c.wilcoxon.p_value,
                c.stars,
                c.cohens_d.map_or("n/a".to_string(), |d| format!("{d:.3}"))
            );
        }
        s
    }

    /// Tab-separated per-image log.
    pub fn render_per_image(&self) -> String {
        let mut s = String::from("id\tlabel\tpredicted\tdice\tiou\n");
        for p in &self.per_image {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                p.id, p.label, p.predicted, p.dice, p.iou
            );
        }
        s
    }

    /// Writes `metrics.json`, `metrics.txt` and `per_image.tsv`.
    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        write_json(&dir.join("metrics.json"), self)?;
        write_file(&dir.join("metrics.txt"), self.render_text())?;
        write_file(&dir.join("per_image.tsv"), self.render_per_image())
    }

    pub fn read(dir: &Path) -> Result<Self, ReportError> {
        let r: MetricsReport = read_json(&dir.join("metrics.json"))?;
        if r.schema_version != METRICS_SCHEMA_VERSION {
            return Err(ReportError::Invalid(format!(
                "metrics schema {} (expected {})",
                r.schema_version, METRICS_SCHEMA_VERSION
            )));
        }
        Ok(r)
    }

    pub fn compare_with(&mut self, other: &MetricsReport) -> Result<(), ReportError> {
        let (a, b) = (self.per_image_dice(), other.per_image_dice());
        if self
            .per_image
            .iter()
            .map(|p| &p.id)
            .ne(other.per_image.iter().map(|p| &p.id))
        {
            return Err(ReportError::Invalid(format!(
                "{} and {} were evaluated on different images",
                self.model, other.model
            )));
        }
        let wilcoxon = crate::stats::wilcoxon_signed_rank(&a, &b)
            .map_err(|e| ReportError::Invalid(e.to_string()))?;
        self.comparison = Some(Comparison {
            against: other.model.clone(),
            stars: if wilcoxon.degenerate {
                String::new()
            } else {
                significance_stars(wilcoxon.p_value).to_string()
            },
            cohens_d: crate::stats::cohens_d(&a, &b)
                .ok()
                .filter(|d| d.is_finite()),
            wilcoxon,
        });
        Ok(())
    }
}
