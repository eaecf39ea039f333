use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::editor::window_len;
use crate::error::{Error, Result};
use crate::feature_store::{FootageLibrary, WindowView};
use crate::metrics::{evaluate_sequence, FramingSolver, MetricParams, MetricReport, MetricWeights, SequenceItem};
use crate::music::{MusicProfile, PacingSpec};
use crate::planner::TemplateName;

const TIME_EPS: f64 = 1e-9;

/// One trimmed sub-clip placed on the music timeline. Frames are source
/// frame indices, `out_frame` exclusive; times are music-clock seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdlEntry {
    pub source_id: u32,
    pub in_frame: u64,
    pub out_frame: u64,
    pub timeline_start_s: f64,
    pub timeline_end_s: f64,
    /// Shot the frames were taken from, for readability.
    pub shot_id: u32,
    /// Guidance id of the segment that placed this entry.
    pub segment: String,
}

/// How a segment was settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    pub section: String,
    pub query: String,
    pub query_vector: Vec<f64>,
    pub template: TemplateName,
    pub pacing: PacingSpec,
    /// Searches run, the first one included.
    pub attempts: usize,
    /// False when no candidate passed validation and the best one was kept.
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditDecisionList {
    /// Music profile the timeline refers to.
    pub music: String,
    pub fps: f64,
    pub entries: Vec<EdlEntry>,
    pub segments: Vec<SegmentRecord>,
}

impl EditDecisionList {
    /// Timeline span from the first cut to the end of the last entry.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.entries.first()?.timeline_start_s, self.entries.last()?.timeline_end_s))
    }

    /// Checks timeline contiguity and that every boundary sits on a beat.
    pub fn check_timeline(&self, profile: &MusicProfile) -> Result<()> {
        for (k, e) in self.entries.iter().enumerate() {
            if !(e.timeline_end_s > e.timeline_start_s) {
                return Err(Error::InvalidInput(format!("EDL entry {k} has a non-positive duration")));
            }
            if k > 0 && (e.timeline_start_s - self.entries[k - 1].timeline_end_s).abs() > TIME_EPS {
                return Err(Error::InvalidInput(format!("EDL entry {k} does not start where entry {} ends", k - 1)));
            }
            for t in [e.timeline_start_s, e.timeline_end_s] {
                let (_, d) = profile.nearest_beat(t)?;
                if d > TIME_EPS {
                    return Err(Error::InvalidInput(format!("EDL boundary {t} s of entry {k} is off-beat by {d} s")));
                }
            }
        }
        Ok(())
    }

    /// Query vector per segment id.
    pub fn queries(&self) -> BTreeMap<String, Vec<f64>> {
        self.segments.iter().map(|s| (s.id.clone(), s.query_vector.clone())).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("EDL serializes") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// EDL entry for a window placed on `slot`. The out frame covers the slot
/// duration but never runs past the end of the shot.
pub fn entry_for(lib: &FootageLibrary, w: &WindowView, slot: (f64, f64), segment: &str) -> EdlEntry {
    let shot = &lib.shots()[w.shot_index()];
    let (in_frame, _) = lib.window_frames(w);
    let frames = ((slot.1 - slot.0) * lib.fps()).round() as u64;
    EdlEntry {
        source_id: shot.source_id,
        in_frame,
        out_frame: (in_frame + frames.max(1)).min(shot.end_frame),
        timeline_start_s: slot.0,
        timeline_end_s: slot.1,
        shot_id: shot.shot_id,
        segment: segment.to_string(),
    }
}

/// Recovers the window behind an entry from its source frames and duration.
pub fn resolve_entry(lib: &FootageLibrary, e: &EdlEntry) -> Result<WindowView> {
    let missing = || {
        Error::InvalidInput(format!(
            "EDL frame range [{}, {}) of source {} is not contained in any shot",
            e.in_frame, e.out_frame, e.source_id
        ))
    };
    let (idx, shot) = lib
        .shots()
        .iter()
        .enumerate()
        .find(|(_, s)| s.source_id == e.source_id && s.start_frame <= e.in_frame && e.in_frame < s.end_frame)
        .ok_or_else(missing)?;
    if e.out_frame > shot.end_frame || e.out_frame <= e.in_frame {
        return Err(missing());
    }
    let offset = e.in_frame - shot.start_frame;
    let stride = lib.stride() as u64;
    if !offset.is_multiple_of(stride) {
        return Err(Error::InvalidInput(format!(
            "EDL in frame {} of shot {} is not on a sampled frame",
            e.in_frame, shot.shot_id
        )));
    }
    let len = window_len(lib, e.timeline_end_s - e.timeline_start_s);
    lib.window_at(idx, (offset / stride) as usize, len).map_err(|_| missing())
}

/// Recomputes all six metrics of an EDL from the archive, in entry order.
/// Each entry is scored against the query of its segment.
pub fn report_edl(
    lib: &FootageLibrary,
    profile: &MusicProfile,
    edl: &EditDecisionList,
    queries: &BTreeMap<String, Vec<f64>>,
    params: &MetricParams,
    weights: &MetricWeights,
) -> Result<MetricReport> {
    if edl.entries.is_empty() {
        return Err(Error::InvalidInput("EDL has no entries".into()));
    }
    edl.check_timeline(profile)?;
    let windows = edl.entries.iter().map(|e| resolve_entry(lib, e)).collect::<Result<Vec<_>>>()?;
    let items = edl
        .entries
        .iter()
        .zip(windows)
        .map(|(e, window)| {
            let query = queries
                .get(&e.segment)
                .ok_or_else(|| Error::InvalidInput(format!("no query vector for segment {}", e.segment)))?;
            Ok(SequenceItem { window, slot: (e.timeline_start_s, e.timeline_end_s), query })
        })
        .collect::<Result<Vec<_>>>()?;
    let [rows, cols] = lib.saliency_grid();
    let solver = FramingSolver::new(rows, cols, params)?;
    evaluate_sequence(lib, profile, &solver, params, weights, &items)
}
