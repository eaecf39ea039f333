use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ARCHIVE_VERSION: u32 = 1;

/// On-disk description of a feature archive. Feature values live in three
/// flat little-endian f32 buffers referenced by `files`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub fps: f64,
    pub stride: u32,
    pub embed_dim: usize,
    /// `[rows, cols]` of each pooled flow record.
    pub flow_grid: [usize; 2],
    /// `[rows, cols]` of each pooled saliency frame.
    pub saliency_grid: [usize; 2],
    #[serde(default)]
    pub sources: Vec<SourceInfo>,
    pub shots: Vec<ShotRecord>,
    #[serde(default)]
    pub files: FeatureFiles,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub named_text_embeddings: BTreeMap<String, Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub source_id: u32,
    #[serde(default)]
    pub name: String,
    /// Total frames in the source media, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_id: u32,
    pub source_id: u32,
    pub start_frame: u64,
    /// Exclusive.
    pub end_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFiles {
    pub embeddings: String,
    pub flow: String,
    pub saliency: String,
}

impl Default for FeatureFiles {
    fn default() -> Self {
        Self {
            embeddings: "embeddings.f32".to_string(),
            flow: "flow.f32".to_string(),
            saliency: "saliency.f32".to_string(),
        }
    }
}
