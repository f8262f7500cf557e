use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use sonoseg::data::PreprocessConfig;
use sonoseg::report::{
    learning_curve_points, render_curve_plot, render_curve_tsv, LearningCurvePoint,
};
use sonoseg::train::{adaptation_curve, load_checkpoint, CurvePoint, Dataset};

use super::{load_config, load_layout, prepare_out, start_manifest, TrainFlags};
use crate::error::{config, CliResult};
use crate::{ConfigArgs, Layout};

#[derive(Args, Debug)]
pub struct AdaptArgs {
    /// Source-domain checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Target-domain dataset root; falls back to `adapt.root`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "external")]
    pub layout: Layout,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Adaptation fractions; the zero-shot row is always included.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// One fine-tuning run per seed; rows report mean ± std.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Source-domain Dice for the percent-of-source column.
    #[arg(long)]
    pub source_reference: Option<f64>,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Serialize)]
struct CurveDocument<'a> {
    schema_version: u32,
    source_reference: Option<f64>,
    seeds: &'a [u64],
    points: &'a [LearningCurvePoint],
    runs: &'a [Vec<CurvePoint>],
}

/// Writes `learning_curve.json`, `learning_curve.tsv`,
/// `learning_curve_series.tsv` and `learning_curve.png`.
pub fn adapt(a: AdaptArgs) -> CliResult<()> {
    let cfg = load_config(&a.config, Some(&a.flags))?;
    if !a.checkpoint.is_file() {
        return Err(config(format!(
            "checkpoint {} not found",
            a.checkpoint.display()
        )));
    }
    let root = a
        .data
        .clone()
        .or_else(|| (!cfg.adapt.root.is_empty()).then(|| PathBuf::from(&cfg.adapt.root)));
    let root = root.ok_or_else(|| config("missing dataset path: pass --data or set adapt.root"))?;
    let manifest = load_layout(&root, a.layout)?;
    let fractions: Vec<f64> = a
        .fractions
        .clone()
        .unwrap_or(cfg.adapt.fractions.clone())
        .into_iter()
        .filter(|&f| f > 0.0)
        .collect();
    if fractions.iter().any(|&f| f > 1.0) {
        return Err(config("fractions must lie in [0, 1]"));
    }
    let seeds = a.seeds.clone().unwrap_or(cfg.adapt.seeds.clone());
    let reference = a
        .source_reference
        .or((cfg.adapt.source_reference > 0.0).then_some(cfg.adapt.source_reference));
    let bundle = load_checkpoint(&a.checkpoint)?;
    prepare_out(&a.out, a.force)?;

    let pre = PreprocessConfig {
        target_size: bundle.model_config.input_size,
        ..cfg.preprocess.clone()
    };
    let ids: Vec<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
    let pool = Dataset::from_ids(&manifest, &ids, &pre)?;
    let mut runs = Vec::new();
    for &seed in &seeds {
        let mut tc = cfg.train.clone();
        tc.seed = seed;
        tc.augmentation.rng_seed = seed;
        runs.push(adaptation_curve(
            &bundle,
            &pool,
            &fractions,
            cfg.adapt.split_seed,
            &tc,
            &cfg.loss,
        )?);
    }
    let points = learning_curve_points(&runs, reference);
    let doc = CurveDocument {
        schema_version: 1,
        source_reference: reference,
        seeds: &seeds,
        points: &points,
        runs: &runs,
    };
    std::fs::write(
        a.out.join("learning_curve.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    std::fs::write(a.out.join("learning_curve.tsv"), render_curve_tsv(&points))?;
    let mut series = String::from("fraction\tdice\tsource_reference\n");
    for p in &points {
        let r = reference.map_or("-".to_string(), |r| r.to_string());
        let _ = writeln!(series, "{}\t{}\t{r}", p.fraction, p.dice.mean);
    }
    std::fs::write(a.out.join("learning_curve_series.tsv"), series)?;
    render_curve_plot(&points, reference)
        .save(a.out.join("learning_curve.png"))
        .map_err(crate::error::runtime)?;
    print!("{}", render_curve_tsv(&points));
    let mut rm = start_manifest("adapt", &cfg, seeds.clone(), Some(&manifest))?;
    rm.finish();
    rm.write(&a.out)?;
    Ok(())
}
