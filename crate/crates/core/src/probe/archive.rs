//! Per-layer pooled embeddings on disk:
//!
//! ```text
//! <dir>/meta.json      {"variant", "n_layers", "dim", "pooling", "ids": [...]}
//! <dir>/layer_00.f32   row-major little-endian f32, one row per id, id order
//! <dir>/layer_01.f32
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ModelVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub variant: ModelVariant,
    pub n_layers: usize,
    pub dim: usize,
    pub pooling: Pooling,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerEmbeddingArchive {
    pub meta: ArchiveMeta,
    /// One `ids × dim` matrix per layer.
    layers: Vec<Array2<f32>>,
}

pub fn layer_file_name(layer: usize) -> String {
    format!("layer_{layer:02}.f32")
}

impl LayerEmbeddingArchive {
    pub fn new(variant: ModelVariant, ids: Vec<String>, layers: Vec<Array2<f32>>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::validation("an embedding archive needs at least one layer"))?;
        let dim = first.ncols();
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::validation(format!("duplicate utterance id {dup:?} in archive")));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.nrows() != ids.len() || l.ncols() != dim {
                return Err(Error::validation(format!(
                    "layer {i} is {}×{}, expected {}×{dim}",
                    l.nrows(),
                    l.ncols(),
                    ids.len()
                )));
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("layer {i} contains non-finite values")));
            }
        }
        Ok(LayerEmbeddingArchive {
            meta: ArchiveMeta {
                variant,
                n_layers: layers.len(),
                dim,
                pooling: Pooling::Mean,
                ids,
            },
            layers,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.meta.n_layers
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.meta.ids
    }

    pub fn layer(&self, layer: usize) -> Result<ArrayView2<'_, f32>> {
        self.layers
            .get(layer)
            .map(Array2::view)
            .ok_or_else(|| Error::validation(format!("layer {layer} not in archive ({} layers)", self.n_layers())))
    }

    /// Same vectors under another variant tag.
    pub fn relabeled(&self, variant: ModelVariant) -> Self {
        let mut out = self.clone();
        out.meta.variant = variant;
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join("meta.json");
        let json = serde_json::to_string_pretty(&self.meta).expect("archive metadata serializes");
        fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
        for (i, l) in self.layers.iter().enumerate() {
            let p = dir.join(layer_file_name(i));
            let bytes: Vec<u8> = l.iter().flat_map(|v| v.to_le_bytes()).collect();
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: ArchiveMeta = serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("{}: {e}", meta_path.display())))?;
        let rows = meta.ids.len();
        let mut layers = Vec::with_capacity(meta.n_layers);
        for i in 0..meta.n_layers {
            let p = dir.join(layer_file_name(i));
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let expected = rows * meta.dim * 4;
            if bytes.len() != expected {
                return Err(Error::validation(format!(
                    "{}: {} bytes, expected {expected} ({rows} rows × {} dims × 4)",
                    p.display(),
                    bytes.len(),
                    meta.dim
                )));
            }
            let vals: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            layers.push(Array2::from_shape_vec((rows, meta.dim), vals).expect("length checked above"));
        }
        let archive = LayerEmbeddingArchive::new(meta.variant, meta.ids.clone(), layers)?;
        if archive.meta != meta {
            return Err(Error::validation("archive metadata disagrees with layer files"));
        }
        Ok(archive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = LayerEmbeddingArchive::new(
            ModelVariant::Frozen,
            ids(2),
            vec![array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]], array![[0.0, -1.0, 1e-7], [7.0, 8.0, 9.0]]],
        )
        .unwrap();
        a.save(dir.path()).unwrap();
        let raw = fs::read(dir.path().join("layer_00.f32")).unwrap();
        assert_eq!(&raw[..4], &1.0f32.to_le_bytes());
        assert_eq!(raw.len(), 24);
        assert_eq!(LayerEmbeddingArchive::load(dir.path()).unwrap(), a);
    }

    #[test]
    fn rejects_inconsistent_archives() {
        assert!(LayerEmbeddingArchive::new(ModelVariant::Mock, ids(2), vec![]).is_err());
        assert!(LayerEmbeddingArchive::new(ModelVariant::Mock, ids(3), vec![Array2::zeros((2, 4))]).is_err());
        assert!(LayerEmbeddingArchive::new(ModelVariant::Mock, ids(1), vec![array![[f32::NAN]]]).is_err());
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(LayerEmbeddingArchive::new(ModelVariant::Mock, dup, vec![Array2::zeros((2, 1))]).is_err());

        let dir = tempfile::tempdir().unwrap();
        LayerEmbeddingArchive::new(ModelVariant::Mock, ids(2), vec![Array2::zeros((2, 3))])
            .unwrap()
            .save(dir.path())
            .unwrap();
        fs::write(dir.path().join("layer_00.f32"), [0u8; 20]).unwrap();
        assert!(LayerEmbeddingArchive::load(dir.path()).is_err());
    }
}
