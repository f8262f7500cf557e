use std::path::PathBuf;

use clap::{Args, ValueEnum};
use log::info;
use sonoseg::data::synth::{write_busi_dataset, write_external_dataset, Domain};
use sonoseg::data::{
    make_adaptation_splits, stratified_split, write_manifest, AdaptationSplitSpec, Split,
};

use super::{load_config, load_layout, prepare_out, start_manifest};
use crate::error::{config, CliResult};
use crate::{ConfigArgs, Layout};

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "busi")]
    pub layout: Layout,
    #[arg(long)]
    pub out: PathBuf,
    /// Train, val and test fractions; defaults to `data.split`.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Writes `manifest.tsv`; for the external layout also the nested
/// adaptation subsets in `adaptation_splits.json`.
pub fn split(a: SplitArgs) -> CliResult<()> {
    let cfg = load_config(&a.config, None)?;
    let f = a.fractions.clone().unwrap_or(cfg.data.split.to_vec());
    if f.len() != 3 {
        return Err(config("--fractions takes three values: train,val,test"));
    }
    let manifest = load_layout(&a.data, a.layout)?;
    prepare_out(&a.out, a.force)?;
    let seed = a.seed.unwrap_or(cfg.data.split_seed);
    let split = stratified_split(&manifest, (f[0], f[1], f[2]), seed)?;
    write_manifest(&split, &a.out.join("manifest.tsv"))?;
    for s in Split::ALL {
        let c = split.split_counts(s);
        info!("{}: {} images {:?}", s.name(), c.total(), c.0);
        println!("{}\t{}", s.name(), c.total());
    }
    if a.layout == Layout::External {
        let spec = make_adaptation_splits(
            &manifest,
            &AdaptationSplitSpec::new(cfg.adapt.fractions.clone()),
            cfg.adapt.split_seed,
        )?;
        std::fs::write(
            a.out.join("adaptation_splits.json"),
            serde_json::to_string_pretty(&spec)? + "\n",
        )?;
    }
    let mut rm = start_manifest("split", &cfg, vec![seed], Some(&manifest))?;
    rm.finish();
    rm.write(&a.out)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Source,
    Shifted,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "busi")]
    pub layout: Layout,
    /// Normal, benign and malignant counts.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 4, 4])]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, value_enum, default_value = "source")]
    pub domain: DomainArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    if a.size < 8 {
        return Err(config("--size must be at least 8"));
    }
    if a.counts.len() != 3 {
        return Err(config(
            "--counts takes three values: normal,benign,malignant",
        ));
    }
    prepare_out(&a.out, a.force)?;
    let counts = [a.counts[0], a.counts[1], a.counts[2]];
    let domain = match a.domain {
        DomainArg::Source => Domain::Source,
        DomainArg::Shifted => Domain::Shifted,
    };
    match a.layout {
        Layout::Busi => write_busi_dataset(&a.out, counts, a.size, domain, a.seed)?,
        Layout::External => write_external_dataset(&a.out, counts, a.size, domain, a.seed)?,
    }
    Ok(())
}
