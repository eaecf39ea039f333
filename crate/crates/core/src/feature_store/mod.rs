//! Pre-extracted footage features: archive loading, validation and
//! read-only per-shot / per-window views.
//!
//! An archive is a directory holding `manifest.json` plus three flat
//! little-endian f32 buffers:
//!
//! * `embeddings.f32`: `Σn × D` per-sample semantic embeddings
//! * `flow.f32`: `Σ(n−1) × Hf × Wf × 2` pooled flow, record `i` describes
//!   motion between samples `i` and `i+1`
//! * `saliency.f32`: `Σn × Hs × Ws` raw (unnormalized) saliency mass
//!
//! Samples are taken every `stride` frames starting at the shot's first
//! frame, so a shot spanning `[start, end)` has `n = ⌊(end−start−1)/stride⌋+1`
//! samples.

mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

pub use manifest::{FeatureFiles, Manifest, ShotRecord, SourceInfo, ARCHIVE_VERSION, MANIFEST_FILE};

use crate::error::{Error, Result};

/// Tolerance within which a stored embedding is already considered unit length.
const UNIT_NORM_SLACK: f64 = 1e-6;

/// A shot as held by a loaded library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shot {
    pub shot_id: u32,
    pub source_id: u32,
    pub start_frame: u64,
    pub end_frame: u64,
    pub sample_count: usize,
    sample_offset: usize,
    flow_offset: usize,
}

impl Shot {
    pub fn frame_len(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    /// Index of this shot's first sample in the flat sample buffers.
    pub fn sample_offset(&self) -> usize {
        self.sample_offset
    }

    pub fn flow_offset(&self) -> usize {
        self.flow_offset
    }
}

pub fn sample_count(start_frame: u64, end_frame: u64, stride: u32) -> usize {
    ((end_frame - start_frame - 1) / stride as u64 + 1) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Start,
    End,
}

/// A contiguous run of `len` samples of one shot, starting at sample `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowView {
    pub shot_id: u32,
    pub start: usize,
    pub len: usize,
    shot_index: usize,
}

impl WindowView {
    pub fn shot_index(&self) -> usize {
        self.shot_index
    }
}

/// Borrowed pooled flow field, `height × width` cells of `(dx, dy)`.
#[derive(Debug, Clone, Copy)]
pub struct FlowField<'a> {
    pub height: usize,
    pub width: usize,
    pub data: &'a [f32],
}

impl FlowField<'_> {
    /// Mean per-cell vector magnitude.
    pub fn mean_magnitude(&self) -> f64 {
        let cells = self.data.len() / 2;
        if cells == 0 {
            return 0.0;
        }
        let total: f64 = self
            .data
            .chunks_exact(2)
            .map(|v| (v[0] as f64).hypot(v[1] as f64))
            .sum();
        total / cells as f64
    }
}

/// Everything needed to assemble a library in memory. Used by the loader
/// and by generators that never touch disk.
#[derive(Debug, Clone)]
pub struct LibraryParts {
    pub fps: f64,
    pub stride: u32,
    pub embed_dim: usize,
    pub flow_grid: [usize; 2],
    pub saliency_grid: [usize; 2],
    pub sources: Vec<SourceInfo>,
    pub shots: Vec<ShotRecord>,
    pub embeddings: Vec<f32>,
    pub flow: Vec<f32>,
    pub saliency: Vec<f32>,
    pub named_text_embeddings: BTreeMap<String, Vec<f32>>,
}

/// Immutable footage library. All accessors are pure reads, so a library can
/// be shared freely between threads.
#[derive(Debug, Clone)]
pub struct FootageLibrary {
    fps: f64,
    stride: u32,
    embed_dim: usize,
    flow_grid: [usize; 2],
    saliency_grid: [usize; 2],
    sources: Vec<SourceInfo>,
    shots: Vec<Shot>,
    by_id: HashMap<u32, usize>,
    embeddings: Vec<f32>,
    flow: Vec<f32>,
    saliency: Vec<f32>,
    named_text_embeddings: BTreeMap<String, Vec<f32>>,
}

impl FootageLibrary {
    pub fn from_parts(parts: LibraryParts) -> Result<Self> {
        let LibraryParts {
            fps,
            stride,
            embed_dim,
            flow_grid,
            saliency_grid,
            sources,
            shots: records,
            mut embeddings,
            flow,
            saliency,
            named_text_embeddings,
        } = parts;

        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Archive(format!("fps must be positive, got {fps}")));
        }
        if stride < 1 {
            return Err(Error::Archive("stride must be at least 1".into()));
        }
        if embed_dim == 0 {
            return Err(Error::Archive("embed_dim must be at least 1".into()));
        }
        if flow_grid.contains(&0) || saliency_grid.contains(&0) {
            return Err(Error::Archive("grid dimensions must be non-zero".into()));
        }

        let source_bounds: HashMap<u32, Option<u64>> = sources
            .iter()
            .map(|s| (s.source_id, s.frame_count))
            .collect();
        if source_bounds.len() != sources.len() {
            return Err(Error::Archive("duplicate source_id".into()));
        }

        let mut shots = Vec::with_capacity(records.len());
        let mut by_id = HashMap::with_capacity(records.len());
        let mut last_end: HashMap<u32, u64> = HashMap::new();
        let (mut samples, mut records_total) = (0usize, 0usize);
        for rec in &records {
            if by_id.insert(rec.shot_id, shots.len()).is_some() {
                return Err(Error::Archive(format!("duplicate shot_id {}", rec.shot_id)));
            }
            if rec.end_frame <= rec.start_frame
                || rec.end_frame - rec.start_frame < 2 * stride as u64
            {
                return Err(Error::Archive(format!(
                    "shot {} below minimum length: {} frames, need at least {} (2·stride)",
                    rec.shot_id,
                    rec.end_frame.saturating_sub(rec.start_frame),
                    2 * stride
                )));
            }
            if !sources.is_empty() {
                match source_bounds.get(&rec.source_id) {
                    None => {
                        return Err(Error::Archive(format!(
                            "shot {} references unknown source {}",
                            rec.shot_id, rec.source_id
                        )))
                    }
                    Some(Some(count)) if rec.end_frame > *count => {
                        return Err(Error::Archive(format!(
                            "shot {} ends at frame {} beyond source length {}",
                            rec.shot_id, rec.end_frame, count
                        )))
                    }
                    _ => {}
                }
            }
            if let Some(&prev_end) = last_end.get(&rec.source_id) {
                if rec.start_frame < prev_end {
                    return Err(Error::Archive(format!(
                        "shot {} overlaps or precedes an earlier shot of source {}",
                        rec.shot_id, rec.source_id
                    )));
                }
            }
            last_end.insert(rec.source_id, rec.end_frame);

            let n = sample_count(rec.start_frame, rec.end_frame, stride);
            shots.push(Shot {
                shot_id: rec.shot_id,
                source_id: rec.source_id,
                start_frame: rec.start_frame,
                end_frame: rec.end_frame,
                sample_count: n,
                sample_offset: samples,
                flow_offset: records_total,
            });
            samples += n;
            records_total += n - 1;
        }

        let flow_cells = flow_grid[0] * flow_grid[1];
        let sal_cells = saliency_grid[0] * saliency_grid[1];
        check_len("embedding", embeddings.len(), samples * embed_dim, "Σn·D")?;
        check_len("flow", flow.len(), records_total * flow_cells * 2, "Σ(n−1)·Hf·Wf·2")?;
        check_len("saliency", saliency.len(), samples * sal_cells, "Σn·Hs·Ws")?;

        for (name, buf) in [("embedding", &embeddings), ("flow", &flow), ("saliency", &saliency)] {
            if let Some(pos) = buf.iter().position(|v| !v.is_finite()) {
                return Err(Error::Archive(format!("non-finite {name} value at index {pos}")));
            }
        }

        for shot in &shots {
            for s in 0..shot.sample_count {
                let g = shot.sample_offset + s;
                let e = &mut embeddings[g * embed_dim..(g + 1) * embed_dim];
                if !normalize_in_place(e) {
                    return Err(Error::Archive(format!(
                        "shot {} sample {s} has a zero embedding",
                        shot.shot_id
                    )));
                }
                let frame = &saliency[g * sal_cells..(g + 1) * sal_cells];
                if frame.iter().any(|&v| v < 0.0) {
                    return Err(Error::Archive(format!(
                        "shot {} sample {s} has negative saliency",
                        shot.shot_id
                    )));
                }
                if !frame.iter().any(|&v| v > 0.0) {
                    return Err(Error::Archive(format!(
                        "shot {} sample {s} has empty saliency",
                        shot.shot_id
                    )));
                }
            }
        }

        let mut named = BTreeMap::new();
        for (label, mut v) in named_text_embeddings {
            if v.len() != embed_dim {
                return Err(Error::Archive(format!(
                    "named text embedding '{label}' has dimension {}, expected {embed_dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) || !normalize_in_place(&mut v) {
                return Err(Error::Archive(format!(
                    "named text embedding '{label}' is not a finite non-zero vector"
                )));
            }
            named.insert(label, v);
        }

        Ok(Self {
            fps,
            stride,
            embed_dim,
            flow_grid,
            saliency_grid,
            sources,
            shots,
            by_id,
            embeddings,
            flow,
            saliency,
            named_text_embeddings: named,
        })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn flow_grid(&self) -> [usize; 2] {
        self.flow_grid
    }

    pub fn saliency_grid(&self) -> [usize; 2] {
        self.saliency_grid
    }

    pub fn sources(&self) -> &[SourceInfo] {
        &self.sources
    }

    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }

    pub fn shot_index(&self, shot_id: u32) -> Option<usize> {
        self.by_id.get(&shot_id).copied()
    }

    pub fn shot(&self, shot_id: u32) -> Option<&Shot> {
        self.shot_index(shot_id).map(|i| &self.shots[i])
    }

    pub fn total_samples(&self) -> usize {
        self.embeddings.len() / self.embed_dim
    }

    pub fn named_text_embeddings(&self) -> &BTreeMap<String, Vec<f32>> {
        &self.named_text_embeddings
    }

    pub fn named_text_embedding(&self, label: &str) -> Option<&[f32]> {
        self.named_text_embeddings.get(label).map(Vec::as_slice)
    }

    /// Exclusive upper bound of valid frames for a source: the declared frame
    /// count when known, otherwise the end of its last shot.
    pub fn source_frame_limit(&self, source_id: u32) -> Option<u64> {
        if let Some(count) = self
            .sources
            .iter()
            .find(|s| s.source_id == source_id)
            .and_then(|s| s.frame_count)
        {
            return Some(count);
        }
        self.shots
            .iter()
            .filter(|s| s.source_id == source_id)
            .map(|s| s.end_frame)
            .max()
    }

    pub fn embedding(&self, global_sample: usize) -> &[f32] {
        let d = self.embed_dim;
        &self.embeddings[global_sample * d..(global_sample + 1) * d]
    }

    pub fn saliency_raw(&self, global_sample: usize) -> &[f32] {
        let c = self.saliency_grid[0] * self.saliency_grid[1];
        &self.saliency[global_sample * c..(global_sample + 1) * c]
    }

    pub fn flow_record(&self, global_record: usize) -> FlowField<'_> {
        let c = self.flow_grid[0] * self.flow_grid[1] * 2;
        FlowField {
            height: self.flow_grid[0],
            width: self.flow_grid[1],
            data: &self.flow[global_record * c..(global_record + 1) * c],
        }
    }

    pub fn window(&self, shot_id: u32, start: usize, len: usize) -> Result<WindowView> {
        let idx = self
            .shot_index(shot_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown shot_id {shot_id}")))?;
        self.window_at(idx, start, len)
    }

    pub fn window_at(&self, shot_index: usize, start: usize, len: usize) -> Result<WindowView> {
        let shot = self
            .shots
            .get(shot_index)
            .ok_or_else(|| Error::InvalidInput(format!("shot index {shot_index} out of range")))?;
        if len < 2 || start + len > shot.sample_count {
            return Err(Error::InvalidInput(format!(
                "window (start {start}, len {len}) invalid for shot {} with {} samples",
                shot.shot_id, shot.sample_count
            )));
        }
        Ok(WindowView {
            shot_id: shot.shot_id,
            start,
            len,
            shot_index,
        })
    }

    pub fn full_window(&self, shot_index: usize) -> WindowView {
        let shot = &self.shots[shot_index];
        WindowView {
            shot_id: shot.shot_id,
            start: 0,
            len: shot.sample_count,
            shot_index,
        }
    }

    fn shot_of(&self, w: &WindowView) -> &Shot {
        &self.shots[w.shot_index]
    }

    /// Source frame range `[first, last]` covered by the window's samples.
    pub fn window_frames(&self, w: &WindowView) -> (u64, u64) {
        let shot = self.shot_of(w);
        let s = self.stride as u64;
        (
            shot.start_frame + w.start as u64 * s,
            shot.start_frame + (w.start + w.len - 1) as u64 * s,
        )
    }

    /// Mean of the window's sample embeddings, renormalized to unit length.
    pub fn shot_embedding(&self, w: &WindowView) -> Result<Vec<f64>> {
        let shot = self.shot_of(w);
        let mut acc = vec![0.0f64; self.embed_dim];
        for s in w.start..w.start + w.len {
            for (a, &v) in acc.iter_mut().zip(self.embedding(shot.sample_offset + s)) {
                *a += v as f64;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(Error::DegenerateEmbedding {
                shot_id: shot.shot_id,
            });
        }
        acc.iter_mut().for_each(|v| *v /= norm);
        Ok(acc)
    }

    /// Global index of the flow record at the window's start or end boundary.
    pub fn boundary_flow_index(&self, w: &WindowView, side: Side) -> Result<usize> {
        if w.len < 2 {
            return Err(Error::InvalidInput(format!(
                "window of shot {} has {} samples; boundary flow needs at least 2",
                w.shot_id, w.len
            )));
        }
        let shot = self.shot_of(w);
        let rec = match side {
            Side::Start => w.start,
            Side::End => w.start + w.len - 2,
        };
        Ok(shot.flow_offset + rec)
    }

    pub fn boundary_flow(&self, w: &WindowView, side: Side) -> Result<FlowField<'_>> {
        Ok(self.flow_record(self.boundary_flow_index(w, side)?))
    }

    /// Global index of the saliency frame at the window's boundary.
    pub fn boundary_sample_index(&self, w: &WindowView, side: Side) -> usize {
        let shot = self.shot_of(w);
        match side {
            Side::Start => shot.sample_offset + w.start,
            Side::End => shot.sample_offset + w.start + w.len - 1,
        }
    }

    /// Saliency frame at the boundary, normalized to unit total mass.
    pub fn boundary_saliency(&self, w: &WindowView, side: Side) -> Result<Vec<f64>> {
        let g = self.boundary_sample_index(w, side);
        self.saliency_distribution(g).ok_or(Error::EmptySaliency {
            shot_id: w.shot_id,
            sample: g - self.shot_of(w).sample_offset,
        })
    }

    /// Saliency of a global sample as a probability grid; `None` when its mass is zero.
    pub fn saliency_distribution(&self, global_sample: usize) -> Option<Vec<f64>> {
        let raw = self.saliency_raw(global_sample);
        let total: f64 = raw.iter().map(|&v| v as f64).sum();
        if !(total > 0.0) {
            return None;
        }
        Some(raw.iter().map(|&v| v as f64 / total).collect())
    }

    /// Mean over the window's flow records of their mean cell magnitude.
    pub fn window_flow_magnitude(&self, w: &WindowView) -> f64 {
        let shot = self.shot_of(w);
        let first = shot.flow_offset + w.start;
        let count = w.len - 1;
        let total: f64 = (first..first + count)
            .map(|r| self.flow_record(r).mean_magnitude())
            .sum();
        total / count as f64
    }

    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            version: ARCHIVE_VERSION,
            fps: self.fps,
            stride: self.stride,
            embed_dim: self.embed_dim,
            flow_grid: self.flow_grid,
            saliency_grid: self.saliency_grid,
            sources: self.sources.clone(),
            shots: self
                .shots
                .iter()
                .map(|s| ShotRecord {
                    shot_id: s.shot_id,
                    source_id: s.source_id,
                    start_frame: s.start_frame,
                    end_frame: s.end_frame,
                })
                .collect(),
            files: FeatureFiles::default(),
            named_text_embeddings: self.named_text_embeddings.clone(),
        }
    }
}

fn check_len(what: &str, got: usize, expected: usize, formula: &str) -> Result<()> {
    if got != expected {
        return Err(Error::Archive(format!(
            "{what} length mismatch, expected {formula} = {expected} values, found {got}"
        )));
    }
    Ok(())
}

/// Scales `v` to unit length unless it already is within f32 precision.
/// Returns false for a zero vector.
fn normalize_in_place(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return false;
    }
    if (norm - 1.0).abs() > UNIT_NORM_SLACK {
        v.iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
    }
    true
}

pub fn load_archive(dir: impl AsRef<Path>) -> Result<FootageLibrary> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e))?;
    if manifest.version != ARCHIVE_VERSION {
        return Err(Error::Archive(format!(
            "unsupported archive version {}",
            manifest.version
        )));
    }
    let embeddings = read_f32(&dir.join(&manifest.files.embeddings))?;
    let flow = read_f32(&dir.join(&manifest.files.flow))?;
    let saliency = read_f32(&dir.join(&manifest.files.saliency))?;
    FootageLibrary::from_parts(LibraryParts {
        fps: manifest.fps,
        stride: manifest.stride,
        embed_dim: manifest.embed_dim,
        flow_grid: manifest.flow_grid,
        saliency_grid: manifest.saliency_grid,
        sources: manifest.sources,
        shots: manifest.shots,
        embeddings,
        flow,
        saliency,
        named_text_embeddings: manifest.named_text_embeddings,
    })
}

pub fn save_archive(lib: &FootageLibrary, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = lib.to_manifest();
    write_f32(&dir.join(&manifest.files.embeddings), &lib.embeddings)?;
    write_f32(&dir.join(&manifest.files.flow), &lib.flow)?;
    write_f32(&dir.join(&manifest.files.saliency), &lib.saliency)?;
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Archive(format!(
            "{} size {} is not a multiple of 4 bytes",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
