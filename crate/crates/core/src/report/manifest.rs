use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_json, write_json, ReportError};
use crate::data::DatasetManifest;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Provenance record written once into every artifact directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Flattened `key = value` configuration after overrides.
    pub config: std::collections::BTreeMap<String, String>,
    pub dataset_fingerprint: Option<String>,
    pub seeds: Vec<u64>,
    pub toolkit_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub fn start(
        command: &str,
        args: Vec<String>,
        config: std::collections::BTreeMap<String, String>,
        seeds: Vec<u64>,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            args,
            config,
            dataset_fingerprint: None,
            seeds,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            finished_at: None,
        }
    }

    pub fn finish(&mut self) {
        self.finished_at =
            Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }

    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        write_json(&dir.join(RUN_MANIFEST_FILE), self)
    }

    pub fn read(dir: &Path) -> Result<Self, ReportError> {
        read_json(&dir.join(RUN_MANIFEST_FILE))
    }
}

/// SHA-256 over every entry's id, label, and the bytes of its image and
/// mask files, in id order.
pub fn dataset_fingerprint(manifest: &DatasetManifest) -> Result<String, ReportError> {
    let mut h = Sha256::new();
    for e in &manifest.entries {
        h.update(e.id.as_bytes());
        h.update([0, e.label.index() as u8]);
        for rel in std::iter::once(&e.image_path).chain(&e.mask_paths) {
            let path = manifest.root.join(rel);
            let bytes = std::fs::read(&path).map_err(|source| ReportError::Io { path, source })?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
