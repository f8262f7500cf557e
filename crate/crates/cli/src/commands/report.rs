use std::path::PathBuf;

use clap::Args;
use log::warn;
use sonoseg::report::{compare_reports, render_comparison, MetricsReport};

use super::{load_config, prepare_out, start_manifest};
use crate::error::{runtime, CliResult};
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation directories; the first is the baseline for tests.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Writes `comparison.md` and `comparison.json`. Unreadable run
/// directories are skipped with a warning.
pub fn report(a: ReportArgs) -> CliResult<()> {
    let cfg = load_config(&a.config, None)?;
    let mut runs = Vec::new();
    for dir in &a.runs {
        match MetricsReport::read(dir) {
            Ok(r) => runs.push((
                dir.file_name()
                    .map_or(r.model.clone(), |n| n.to_string_lossy().into_owned()),
                r,
            )),
            Err(e) => warn!("skipping {}: {e}", dir.display()),
        }
    }
    if runs.is_empty() {
        return Err(runtime("no readable run directories"));
    }
    prepare_out(&a.out, a.force)?;
    let table = compare_reports(&runs);
    let text = render_comparison(&table);
    std::fs::write(a.out.join("comparison.md"), &text)?;
    std::fs::write(
        a.out.join("comparison.json"),
        serde_json::to_string_pretty(&table)? + "\n",
    )?;
    print!("{text}");
    let mut rm = start_manifest("report", &cfg, Vec::new(), None)?;
    rm.finish();
    rm.write(&a.out)?;
    Ok(())
}
