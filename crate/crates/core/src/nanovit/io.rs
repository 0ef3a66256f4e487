//! Checkpoint directories: `manifest.json`, one `.matb` per matrix and, per
//! adapter, `<proj>.lora_a.matb`, `<proj>.lora_b.matb` and `<proj>.lora.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Checkpoint, ModelConfig, Regime};
use crate::adapt::AdapterSidecar;
use crate::error::{Error, Result};
use crate::matcore::matb;
use crate::LoraAdapter;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub regime: Regime,
    #[serde(default)]
    pub freeze_norms: bool,
    pub entries: Vec<ManifestEntry>,
    /// Attention projections carrying an adapter.
    #[serde(default)]
    pub adapters: Vec<String>,
}

pub fn save_checkpoint(dir: &Path, ck: &Checkpoint) -> Result<CheckpointManifest> {
    ck.validate()?;
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(ck.params.len());
    for (name, m) in &ck.params {
        let file = format!("{name}.matb");
        matb::write(dir.join(&file), m)?;
        entries.push(ManifestEntry {
            name: name.clone(),
            rows: m.rows(),
            cols: m.cols(),
            file,
        });
    }
    for (name, ad) in &ck.adapters {
        matb::write(dir.join(format!("{name}.lora_a.matb")), &ad.a)?;
        matb::write(dir.join(format!("{name}.lora_b.matb")), &ad.b)?;
        let sidecar = AdapterSidecar {
            name: name.clone(),
            alpha: ad.alpha,
            rank: ad.rank,
        };
        fs::write(
            dir.join(format!("{name}.lora.json")),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
    }
    let manifest = CheckpointManifest {
        config: ck.config.clone(),
        regime: ck.regime,
        freeze_norms: ck.freeze_norms,
        entries,
        adapters: ck.adapters.keys().cloned().collect(),
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    let mut params = BTreeMap::new();
    for e in &manifest.entries {
        if e.file.contains('/') || e.file.contains('\\') {
            return Err(Error::Format(format!(
                "entry {} points outside the checkpoint",
                e.name
            )));
        }
        let m = matb::read(dir.join(&e.file))?;
        if m.shape() != (e.rows, e.cols) {
            return Err(Error::Format(format!(
                "{} is {:?} on disk, manifest says {:?}",
                e.file,
                m.shape(),
                (e.rows, e.cols)
            )));
        }
        params.insert(e.name.clone(), m);
    }
    let mut adapters = BTreeMap::new();
    for name in &manifest.adapters {
        let sidecar: AdapterSidecar =
            serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.lora.json")))?)?;
        if &sidecar.name != name {
            return Err(Error::Format(format!(
                "sidecar for {name} names {}",
                sidecar.name
            )));
        }
        let a = matb::read(dir.join(format!("{name}.lora_a.matb")))?;
        let b = matb::read(dir.join(format!("{name}.lora_b.matb")))?;
        let ad = LoraAdapter::new(a, b, sidecar.alpha)?;
        if ad.rank != sidecar.rank {
            return Err(Error::Format(format!(
                "adapter {name} has rank {}, sidecar says {}",
                ad.rank, sidecar.rank
            )));
        }
        adapters.insert(name.clone(), ad);
    }
    let ck = Checkpoint {
        config: manifest.config,
        regime: manifest.regime,
        params,
        adapters,
        freeze_norms: manifest.freeze_norms,
    };
    ck.validate()?;
    Ok(ck)
}
