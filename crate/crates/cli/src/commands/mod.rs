mod adapt;
mod data;
mod eval;
mod interpret;
mod report;
mod train;

use std::path::{Path, PathBuf};

use clap::Args;
use sonoseg::config::ExperimentConfig;
use sonoseg::data::{
    load_busi_manifest, load_external_manifest, read_manifest, stratified_split, DatasetManifest,
};
use sonoseg::report::{dataset_fingerprint, RunManifest};

pub use adapt::{adapt, AdaptArgs};
pub use data::{split, synth, SplitArgs, SynthArgs};
pub use eval::{eval, EvalArgs};
pub use interpret::{interpret, InterpretArgs};
pub use report::{report, ReportArgs};
pub use train::{train, TrainArgs};

use crate::error::{config, CliResult};
use crate::{ConfigArgs, Layout};

/// Flags mirroring every scalar training setting.
#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr_init: Option<f64>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub grad_clip_norm: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `high` or `reduced`.
    #[arg(long)]
    pub precision: Option<String>,
    /// Sets the training, augmentation and initialisation seeds together.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sets both the model input size and the resize target.
    #[arg(long)]
    pub input_size: Option<usize>,
}

impl TrainFlags {
    fn overrides(&self, base: &ExperimentConfig) -> Vec<String> {
        let mut v = Vec::new();
        let mut push = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push(format!("{k}={val}"));
            }
        };
        push("train.epochs", self.epochs.map(|x| x.to_string()));
        let patience = self
            .patience
            .or(self.epochs.map(|e| base.train.patience.min(e)));
        push("train.patience", patience.map(|x| x.to_string()));
        push("train.lr_init", self.lr_init.map(|x| format!("{x:e}")));
        push("train.lr_min", self.lr_min.map(|x| format!("{x:e}")));
        push(
            "train.weight_decay",
            self.weight_decay.map(|x| format!("{x:e}")),
        );
        push(
            "train.grad_clip_norm",
            self.grad_clip_norm.map(|x| format!("{x:e}")),
        );
        push("train.batch_size", self.batch_size.map(|x| x.to_string()));
        push(
            "train.precision",
            self.precision.as_ref().map(|p| format!("\"{p}\"")),
        );
        for k in [
            "train.seed",
            "train.augmentation.rng_seed",
            "model.init_seed",
        ] {
            push(k, self.seed.map(|x| x.to_string()));
        }
        for k in ["model.input_size", "preprocess.target_size"] {
            push(k, self.input_size.map(|x| x.to_string()));
        }
        v
    }
}

/// Loads the configuration file, then `--set` overrides, then `flags`.
pub fn load_config(args: &ConfigArgs, flags: Option<&TrainFlags>) -> CliResult<ExperimentConfig> {
    let path = args.config.as_deref();
    if let Some(p) = path {
        if !p.is_file() {
            return Err(config(format!("config file {} not found", p.display())));
        }
    }
    let base = ExperimentConfig::load(path, &args.sets)?;
    let Some(flags) = flags else { return Ok(base) };
    let mut sets = args.sets.clone();
    sets.extend(flags.overrides(&base));
    Ok(ExperimentConfig::load(path, &sets)?)
}

/// Creates `dir`; an existing non-empty directory needs `force`.
pub fn prepare_out(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() && std::fs::read_dir(dir)?.next().is_some() && !force {
        return Err(config(format!(
            "{} exists and is not empty; pass --force to overwrite",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn load_layout(root: &Path, layout: Layout) -> CliResult<DatasetManifest> {
    if !root.is_dir() {
        return Err(config(format!(
            "dataset directory {} not found",
            root.display()
        )));
    }
    Ok(match layout {
        Layout::Busi => load_busi_manifest(root)?,
        Layout::External => load_external_manifest(root)?,
    })
}

/// Dataset selection shared by the commands that read labelled data.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Manifest written by `sonoseg split`.
    #[arg(long, conflicts_with = "data")]
    pub manifest: Option<PathBuf>,
    /// Dataset root; falls back to `data.root` in the configuration.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "busi")]
    pub layout: Layout,
}

impl DataArgs {
    /// Reads the manifest, or scans the dataset root and applies the
    /// configured stratified split.
    pub fn resolve(
        &self,
        cfg: &ExperimentConfig,
        split_if_missing: bool,
    ) -> CliResult<DatasetManifest> {
        let mut manifest = if let Some(m) = &self.manifest {
            if !m.is_file() {
                return Err(config(format!("manifest {} not found", m.display())));
            }
            read_manifest(m)?
        } else {
            let root = self
                .data
                .clone()
                .or_else(|| (!cfg.data.root.is_empty()).then(|| PathBuf::from(&cfg.data.root)));
            let root = root.ok_or_else(|| {
                config("missing dataset path: pass --data, --manifest or set data.root")
            })?;
            load_layout(&root, self.layout)?
        };
        if split_if_missing && manifest.split_assignment.is_empty() {
            let [a, b, c] = cfg.data.split;
            manifest = stratified_split(&manifest, (a, b, c), cfg.data.split_seed)?;
        }
        Ok(manifest)
    }
}

pub fn start_manifest(
    command: &str,
    cfg: &ExperimentConfig,
    seeds: Vec<u64>,
    dataset: Option<&DatasetManifest>,
) -> CliResult<RunManifest> {
    let mut m = RunManifest::start(command, std::env::args().collect(), cfg.flat(), seeds);
    if let Some(d) = dataset {
        m.dataset_fingerprint = Some(dataset_fingerprint(d)?);
    }
    Ok(m)
}

/// File-system friendly form of a record id.
pub fn file_stem(id: &str) -> String {
    id.replace(['/', '\\'], "__")
}
