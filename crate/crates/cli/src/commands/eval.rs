use std::path::PathBuf;

use clap::{Args, ValueEnum};
use log::warn;
use sonoseg::data::{DatasetManifest, PreprocessConfig, Split};
use sonoseg::ensemble::{Aggregation, Ensemble, EnsembleError};
use sonoseg::report::{MetricsReport, SeedSummary};
use sonoseg::stats::{aggregate_seed_stats, bootstrap_ci};
use sonoseg::train::{evaluate, evaluate_with, load_checkpoint, Dataset, TrainError};

use super::{load_config, prepare_out, start_manifest, DataArgs};
use crate::error::{config, CliResult};
use crate::ConfigArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    /// Every record, ignoring split assignments.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Probabilities,
    Logits,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// One checkpoint, or several for an averaged ensemble.
    #[arg(long, required = true, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Add a bootstrap confidence interval for the mean Dice.
    #[arg(long)]
    pub bootstrap: bool,
    /// Directory holding another run's `metrics.json` to test against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Model name in the report; defaults to the output directory name.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn select(
    manifest: &DatasetManifest,
    split: SplitArg,
    pre: &PreprocessConfig,
) -> CliResult<Dataset> {
    let s = match split {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Val => Some(Split::Val),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    };
    let ds = match s {
        Some(s) if !manifest.split_assignment.is_empty() => {
            Dataset::from_manifest(manifest, s, pre)?
        }
        _ => Dataset::from_ids(
            manifest,
            &manifest
                .entries
                .iter()
                .map(|e| e.id.as_str())
                .collect::<Vec<_>>(),
            pre,
        )?,
    };
    if ds.is_empty() {
        return Err(config(format!("no images in the {split:?} split")));
    }
    Ok(ds)
}

fn ensemble_err(e: EnsembleError) -> TrainError {
    match e {
        EnsembleError::Model(m) => TrainError::Model(m),
        other => TrainError::InvalidConfig(other.to_string()),
    }
}

/// Writes `metrics.json`, `metrics.txt`, `per_image.tsv` and
/// `run_manifest.json`.
pub fn eval(a: EvalArgs) -> CliResult<()> {
    let cfg = load_config(&a.config, None)?;
    for c in &a.checkpoint {
        if !c.is_file() {
            return Err(config(format!("checkpoint {} not found", c.display())));
        }
    }
    let bundles = a
        .checkpoint
        .iter()
        .map(|c| load_checkpoint(c))
        .collect::<Result<Vec<_>, _>>()?;
    let models = bundles
        .iter()
        .map(|b| b.to_model())
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = a.data.resolve(&cfg, false)?;
    let pre = PreprocessConfig {
        target_size: models[0].config.input_size,
        ..cfg.preprocess.clone()
    };
    let ds = select(&manifest, a.split, &pre)?;
    prepare_out(&a.out, a.force)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.out
            .file_name()
            .map_or("model".into(), |n| n.to_string_lossy().into_owned())
    });
    let bs = cfg.eval.batch_size;
    let seeds: Vec<u64> = bundles.iter().map(|b| b.seed).collect();

    let mut report = if models.len() == 1 {
        MetricsReport::from_evaluation(&name, &evaluate(&models[0], &ds, bs)?)
    } else {
        let members: Vec<_> = models
            .iter()
            .map(|m| evaluate(m, &ds, bs))
            .collect::<Result<_, _>>()?;
        let aggregation = match a.aggregation {
            Some(AggregationArg::Logits) => Aggregation::Logits,
            Some(AggregationArg::Probabilities) => Aggregation::Probabilities,
            None => cfg.eval.aggregation,
        };
        let classes = models[0].config.num_classes;
        let ens = Ensemble::new(models, aggregation).map_err(config)?;
        let ev = evaluate_with(&ds, bs, classes, |x| {
            ens.predict(x).map(|o| o.mean).map_err(ensemble_err)
        })?;
        let mut r = MetricsReport::from_evaluation(&name, &ev);
        let dice: Vec<f64> = members.iter().map(|e| e.mean_dice).collect();
        let accuracy: Vec<f64> = members
            .iter()
            .map(|e| 100.0 * e.classification.accuracy)
            .collect();
        r.seeds = Some(SeedSummary {
            seeds: seeds.clone(),
            dice_stats: aggregate_seed_stats(&dice)?,
            accuracy_stats: aggregate_seed_stats(&accuracy)?,
            dice,
            accuracy,
        });
        r
    };
    if a.bootstrap {
        match bootstrap_ci(
            &report.per_image_dice(),
            cfg.eval.bootstrap_iterations,
            cfg.eval.ci_level,
            cfg.eval.bootstrap_seed,
        ) {
            Ok(ci) => report.dice_ci = Some(ci),
            Err(e) => warn!("no confidence interval: {e}"),
        }
    }
    if let Some(dir) = &a.compare {
        let other = MetricsReport::read(dir).map_err(config)?;
        report.compare_with(&other)?;
    }
    report.write(&a.out)?;
    print!("{}", report.render_text());
    let mut rm = start_manifest("eval", &cfg, seeds, Some(&manifest))?;
    rm.finish();
    rm.write(&a.out)?;
    Ok(())
}
