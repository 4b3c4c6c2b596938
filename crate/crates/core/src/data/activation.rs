use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::npy::{read_array, write_array, Precision};
use super::ActivationMatrix;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMeta {
    pub index: usize,
    pub name: String,
    pub layer_type: String,
    pub normalized_position: f64,
}

/// Layer `index` of `num_layers`, mapped onto [0, 1]. A single layer sits at 0.
pub fn normalized_position(index: usize, num_layers: usize) -> f64 {
    if num_layers > 1 {
        index as f64 / (num_layers - 1) as f64
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkManifest {
    pub network_name: String,
    pub num_layers: usize,
    pub num_examples: usize,
    pub layers: Vec<LayerMeta>,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    network_name: String,
    num_layers: usize,
    num_examples: usize,
    layers: Vec<LayerEntry>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    index: usize,
    name: String,
    layer_type: String,
}

impl NetworkManifest {
    /// Builds a manifest from `(name, layer_type)` pairs in layer order.
    pub fn new(
        network_name: impl Into<String>,
        num_examples: usize,
        layers: &[(&str, &str)],
    ) -> Self {
        let n = layers.len();
        NetworkManifest {
            network_name: network_name.into(),
            num_layers: n,
            num_examples,
            layers: layers
                .iter()
                .enumerate()
                .map(|(index, (name, ty))| LayerMeta {
                    index,
                    name: name.to_string(),
                    layer_type: ty.to_string(),
                    normalized_position: normalized_position(index, n),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ManifestFile = serde_json::from_str(text)?;
        let mut entries = raw.layers;
        if entries.len() != raw.num_layers {
            return Err(Error::Mismatch(format!(
                "manifest for {} declares {} layers but lists {}",
                raw.network_name,
                raw.num_layers,
                entries.len()
            )));
        }
        if raw.num_layers == 0 {
            return Err(Error::Data(format!("{} has no layers", raw.network_name)));
        }
        entries.sort_by_key(|e| e.index);
        for (expected, entry) in entries.iter().enumerate() {
            if entry.index != expected {
                return Err(Error::Data(format!(
                    "manifest for {}: layer indices are not contiguous from 0 (found {} at position {})",
                    raw.network_name, entry.index, expected
                )));
            }
        }
        let n = raw.num_layers;
        Ok(NetworkManifest {
            network_name: raw.network_name,
            num_layers: n,
            num_examples: raw.num_examples,
            layers: entries
                .into_iter()
                .map(|e| LayerMeta {
                    normalized_position: normalized_position(e.index, n),
                    index: e.index,
                    name: e.name,
                    layer_type: e.layer_type,
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let raw = ManifestFile {
            network_name: self.network_name.clone(),
            num_layers: self.num_layers,
            num_examples: self.num_examples,
            layers: self
                .layers
                .iter()
                .map(|l| LayerEntry {
                    index: l.index,
                    name: l.name.clone(),
                    layer_type: l.layer_type.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest serializes")
    }
}

pub fn layer_file_name(index: usize) -> String {
    format!("layer_{index:03}.npy")
}

#[derive(Debug, Clone)]
pub struct ActivationSet {
    pub manifest: NetworkManifest,
    pub matrices: Vec<ActivationMatrix>,
}

impl ActivationSet {
    pub fn new(manifest: NetworkManifest, matrices: Vec<ActivationMatrix>) -> Result<Self> {
        if matrices.len() != manifest.num_layers {
            return Err(Error::Mismatch(format!(
                "{}: manifest lists {} layers, got {} matrices",
                manifest.network_name,
                manifest.num_layers,
                matrices.len()
            )));
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.rows() != manifest.num_examples {
                return Err(Error::Mismatch(format!(
                    "{}: layer {} has {} rows, manifest declares {} examples",
                    manifest.network_name,
                    i,
                    m.rows(),
                    manifest.num_examples
                )));
            }
        }
        Ok(ActivationSet { manifest, matrices })
    }

    pub fn name(&self) -> &str {
        &self.manifest.network_name
    }

    pub fn num_layers(&self) -> usize {
        self.manifest.num_layers
    }

    pub fn num_examples(&self) -> usize {
        self.manifest.num_examples
    }

    /// Writes `manifest.json` plus one `layer_NNN.npy` per layer into `dir`.
    pub fn save(&self, dir: &Path, precision: Precision) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        fs::write(&manifest_path, self.manifest.to_json())
            .map_err(|e| Error::io(&manifest_path, e))?;
        for (i, m) in self.matrices.iter().enumerate() {
            write_array(m, &dir.join(layer_file_name(i)), precision)?;
        }
        Ok(())
    }
}

pub fn load_manifest(dir: &Path) -> Result<NetworkManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    NetworkManifest::from_json(&text)
}

pub fn load_activation_set(dir: &Path) -> Result<ActivationSet> {
    let manifest = load_manifest(dir)?;
    let paths: Vec<PathBuf> = (0..manifest.num_layers)
        .map(|i| dir.join(layer_file_name(i)))
        .collect();
    if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
        return Err(Error::MissingFile(missing.clone()));
    }
    let matrices = paths
        .iter()
        .map(|p| read_array(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some((i, m)) = matrices
        .iter()
        .enumerate()
        .find(|(_, m)| m.rows() != matrices[0].rows())
    {
        return Err(Error::Mismatch(format!(
            "{}: layer {} has {} rows but layer 0 has {}",
            manifest.network_name,
            i,
            m.rows(),
            matrices[0].rows()
        )));
    }
    ActivationSet::new(manifest, matrices)
}
