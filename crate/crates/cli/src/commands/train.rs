use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use log::info;
use sonoseg::data::{write_manifest, Split};
use sonoseg::train::{build_model, save_checkpoint, train as run_training, Dataset};

use super::{load_config, prepare_out, start_manifest, DataArgs, TrainFlags};
use crate::error::CliResult;
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Run directory: `config.toml`, `manifest.tsv`, `history.jsonl`,
/// `checkpoint_best.ckpt`, `checkpoint_last.ckpt`, `run_manifest.json`.
pub fn train(a: TrainArgs) -> CliResult<()> {
    let cfg = load_config(&a.config, Some(&a.flags))?;
    let manifest = a.data.resolve(&cfg, true)?;
    prepare_out(&a.out, a.force)?;
    let mut rm = start_manifest(
        "train",
        &cfg,
        vec![cfg.train.seed, cfg.model.init_seed],
        Some(&manifest),
    )?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml())?;
    write_manifest(&manifest, &a.out.join("manifest.tsv"))?;

    let train_ds = Dataset::from_manifest(&manifest, Split::Train, &cfg.preprocess)?;
    let val_ds = Dataset::from_manifest(&manifest, Split::Val, &cfg.preprocess)?;
    info!(
        "training on {} images, validating on {}",
        train_ds.len(),
        val_ds.len()
    );
    let mut model = build_model(&cfg.model.model_config())?;
    let outcome = run_training(&mut model, &train_ds, &val_ds, &cfg.train, &cfg.loss)?;

    let mut log = std::fs::File::create(a.out.join("history.jsonl"))?;
    for rec in &outcome.history {
        writeln!(log, "{}", serde_json::to_string(rec)?)?;
    }
    save_checkpoint(&outcome.best, &a.out.join("checkpoint_best.ckpt"))?;
    save_checkpoint(&outcome.last, &a.out.join("checkpoint_last.ckpt"))?;
    rm.finish();
    rm.write(&a.out)?;
    println!(
        "trained {} epochs; best epoch {:?}{}",
        outcome.history.len(),
        outcome.best_epoch,
        if outcome.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );
    Ok(())
}
