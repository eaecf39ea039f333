use serde::{Deserialize, Serialize};

use crate::music::Intensity;

/// Seeded description of a synthetic footage library, music track and
/// optional planted optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub seed: u64,
    #[serde(default)]
    pub footage: FootageBlueprint,
    #[serde(default)]
    pub music: MusicBlueprint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<PlantedDirective>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FootageBlueprint {
    pub fps: f64,
    pub stride: u32,
    pub embed_dim: usize,
    pub flow_grid: [usize; 2],
    pub saliency_grid: [usize; 2],
    /// Pairwise angle between cluster centroids, in degrees (≤ 90).
    pub separation_deg: f64,
    /// Norm of the per-shot embedding perturbation.
    pub noise: f64,
    /// Inclusive range of shot lengths in frames.
    pub shot_frames: [u64; 2],
    pub shots_per_source: usize,
    pub clusters: Vec<ClusterBlueprint>,
}

impl Default for FootageBlueprint {
    fn default() -> Self {
        Self {
            fps: 24.0,
            stride: 4,
            embed_dim: 16,
            flow_grid: [16, 16],
            saliency_grid: [16, 16],
            separation_deg: 90.0,
            noise: 0.15,
            shot_frames: [48, 120],
            shots_per_source: 10,
            clusters: (0..4)
                .map(|i| ClusterBlueprint {
                    shots: 20,
                    motion: i as f64,
                    ..ClusterBlueprint::default()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyPattern {
    /// Blob stays put for the whole shot.
    Static,
    /// Blob moves linearly between two random points.
    Drift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterBlueprint {
    pub shots: usize,
    /// Mean flow magnitude in pooled-flow units; 0 gives all-zero flow.
    pub motion: f64,
    /// Common motion direction in degrees; random per shot when absent.
    pub direction_deg: Option<f64>,
    pub saliency: SaliencyPattern,
    /// Exported as a named text embedding equal to the cluster centroid.
    pub label: Option<String>,
}

impl Default for ClusterBlueprint {
    fn default() -> Self {
        Self {
            shots: 20,
            motion: 1.0,
            direction_deg: None,
            saliency: SaliencyPattern::Drift,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    Constant,
    /// Linear from `low` to `high` over the track.
    Ramp,
    /// `low` before the first section boundary, `high` after.
    Step,
    /// Each section at `low + level·(high − low)`.
    Sections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeBlueprint {
    pub hop_s: f64,
    pub shape: EnvelopeShape,
    pub low: f64,
    pub high: f64,
}

impl Default for EnvelopeBlueprint {
    fn default() -> Self {
        Self {
            hop_s: 0.1,
            shape: EnvelopeShape::Sections,
            low: 0.1,
            high: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionBlueprint {
    pub name: String,
    pub duration_s: f64,
    pub intensity: Intensity,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MusicBlueprint {
    pub duration_s: f64,
    /// Metronome tempo; ignored when `beats` is given.
    pub tempo_bpm: f64,
    pub beats: Option<Vec<f64>>,
    /// Consecutive sections; durations must add up to `duration_s`. A single
    /// medium section is used when empty.
    pub sections: Vec<SectionBlueprint>,
    pub rms: EnvelopeBlueprint,
}

impl Default for MusicBlueprint {
    fn default() -> Self {
        Self {
            duration_s: 24.0,
            tempo_bpm: 120.0,
            beats: None,
            sections: vec![
                SectionBlueprint { name: "intro".into(), duration_s: 8.0, intensity: Intensity::Low, level: 0.2 },
                SectionBlueprint { name: "verse".into(), duration_s: 8.0, intensity: Intensity::Medium, level: 0.5 },
                SectionBlueprint { name: "chorus".into(), duration_s: 8.0, intensity: Intensity::High, level: 0.9 },
            ],
            rms: EnvelopeBlueprint::default(),
        }
    }
}

/// Requests a small pool containing one chain of shots whose boundaries
/// match exactly, plus random decoys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedDirective {
    pub slots: usize,
    pub decoys: usize,
    /// Beats per slot (120 BPM metronome).
    pub slot_beats: u32,
    /// Samples of mismatched lead-in before the matching content of every
    /// chain shot after the first. 0 means matches sit at the shot start.
    pub mid_shot_offset: usize,
    /// Cosine of chain embeddings to the query.
    pub chain_similarity: f64,
    /// Cosine of decoy embeddings to the query; random when absent.
    pub decoy_similarity: Option<f64>,
}

impl Default for PlantedDirective {
    fn default() -> Self {
        Self {
            slots: 3,
            decoys: 3,
            slot_beats: 2,
            mid_shot_offset: 0,
            chain_similarity: 1.0,
            decoy_similarity: None,
        }
    }
}
