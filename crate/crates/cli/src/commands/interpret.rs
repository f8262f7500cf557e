use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use sonoseg::data::{normalize_image, resize_sample, PreprocessConfig, Split};
use sonoseg::interpret::{attention_validation_pipeline, grad_cam};
use sonoseg::metrics::{argmax_rows, binarize, dice_score};
use sonoseg::report::{panel_figure, PanelInputs};
use sonoseg::train::load_checkpoint;

use super::{file_stem, load_config, prepare_out, start_manifest, DataArgs};
use crate::error::{config, runtime, CliResult};
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct InterpretArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Record ids; defaults to the first `--limit` test images.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
    #[arg(long, default_value_t = 4)]
    pub limit: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Serialize)]
struct ImageResult {
    id: String,
    label: usize,
    predicted: usize,
    class_probs: Vec<f64>,
    dice: f64,
    attention_iou: f64,
    otsu_threshold: f64,
    otsu_degenerate: bool,
    empty_ground_truth: bool,
    grad_cam_class: usize,
    figure: String,
}

#[derive(Serialize)]
struct InterpretDocument {
    schema_version: u32,
    mean_attention_iou: f64,
    images: Vec<ImageResult>,
}

/// Writes `panels/<id>.png` with a `.json` sidecar per image, plus
/// `interpret.json` and `attention_iou.tsv`.
pub fn interpret(a: InterpretArgs) -> CliResult<()> {
    let cfg = load_config(&a.config, None)?;
    if !a.checkpoint.is_file() {
        return Err(config(format!(
            "checkpoint {} not found",
            a.checkpoint.display()
        )));
    }
    let model = load_checkpoint(&a.checkpoint)?.to_model()?;
    let manifest = a.data.resolve(&cfg, false)?;
    let ids: Vec<String> = if a.ids.is_empty() {
        let pool = if manifest.split_assignment.is_empty() {
            manifest.entries.iter().collect()
        } else {
            manifest.entries_in(Split::Test)
        };
        pool.into_iter()
            .take(a.limit)
            .map(|e| e.id.clone())
            .collect()
    } else {
        a.ids.clone()
    };
    if let Some(bad) = ids.iter().find(|id| manifest.entry(id).is_none()) {
        let available: Vec<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
        return Err(config(format!(
            "unknown image id {bad:?}; available ids: {}",
            available.join(", ")
        )));
    }
    prepare_out(&a.out, a.force)?;
    let panels = a.out.join("panels");
    std::fs::create_dir_all(&panels)?;
    let pre = PreprocessConfig {
        target_size: model.config.input_size,
        ..cfg.preprocess.clone()
    };
    let s = pre.target_size;

    let mut results = Vec::new();
    for id in &ids {
        let record = manifest.load_record(id)?;
        let (image01, gt) = resize_sample(&record, &pre)?;
        let x = normalize_image(&image01, &pre.normalization_mean, &pre.normalization_std)
            .reshape(&[1, 3, s, s]);
        let out = model.predict(&x)?;
        let att = attention_validation_pipeline(&out, &gt)?;
        let predicted = argmax_rows(&out.class_probs)[0];
        let cam = grad_cam(&model, &x, predicted)?;
        let pred_mask = binarize(&out.seg_probs.index_axis0(0));
        let dice = dice_score(&pred_mask, &gt)?;
        let fig = panel_figure(&PanelInputs {
            image: &image01,
            ground_truth: &gt,
            prediction: &pred_mask,
            attention: att
                .upsampled
                .as_ref()
                .expect("pipeline keeps intermediates"),
            grad_cam: cam.overlay.as_ref().expect("overlay present"),
            attention_iou: att.iou,
            prediction_dice: dice,
        });
        let stem = file_stem(id);
        let figure = format!("panels/{stem}.png");
        fig.save(a.out.join(&figure)).map_err(runtime)?;
        let r = ImageResult {
            id: id.clone(),
            label: record.label.index(),
            predicted,
            class_probs: out.class_probs.data().to_vec(),
            dice,
            attention_iou: att.iou,
            otsu_threshold: att.otsu.threshold,
            otsu_degenerate: att.otsu.degenerate,
            empty_ground_truth: att.empty_ground_truth,
            grad_cam_class: cam.class,
            figure,
        };
        std::fs::write(
            panels.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&r)? + "\n",
        )?;
        results.push(r);
    }
    let mean = if results.is_empty() {
        0.0
    } else {
        results.iter().map(|r| r.attention_iou).sum::<f64>() / results.len() as f64
    };
    let mut tsv = String::from("id\tattention_iou\tdice\tpredicted\tlabel\n");
    for r in &results {
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}",
            r.id, r.attention_iou, r.dice, r.predicted, r.label
        );
    }
    std::fs::write(a.out.join("attention_iou.tsv"), tsv)?;
    let doc = InterpretDocument {
        schema_version: 1,
        mean_attention_iou: mean,
        images: results,
    };
    std::fs::write(
        a.out.join("interpret.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    println!("{} images, mean attention IoU {mean:.4}", doc.images.len());
    let mut rm = start_manifest("interpret", &cfg, Vec::new(), None)?;
    rm.finish();
    rm.write(&a.out)?;
    Ok(())
}
