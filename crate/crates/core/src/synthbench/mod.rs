//! Seeded synthetic archives, music profiles and planted-optimum fixtures.

mod spec;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use spec::{
    CaseSpec, ClusterBlueprint, EnvelopeBlueprint, EnvelopeShape, FootageBlueprint, MusicBlueprint,
    PlantedDirective, SaliencyPattern, SectionBlueprint,
};

use crate::error::{Error, Result};
use crate::feature_store::{save_archive, FootageLibrary, LibraryParts, ShotRecord, SourceInfo};
use crate::music::{save_profile, Intensity, MusicProfile, PacingSpec, RmsCurve, Section};

const BLOB_SIGMA: f64 = 0.15;

/// Accumulates shots and their feature buffers.
struct Builder {
    fps: f64,
    stride: u32,
    dim: usize,
    flow_grid: [usize; 2],
    saliency_grid: [usize; 2],
    sources: Vec<SourceInfo>,
    shots: Vec<ShotRecord>,
    embeddings: Vec<f32>,
    flow: Vec<f32>,
    saliency: Vec<f32>,
    cursor: u64,
}

impl Builder {
    fn new(fps: f64, stride: u32, dim: usize, flow_grid: [usize; 2], saliency_grid: [usize; 2]) -> Self {
        Self {
            fps,
            stride,
            dim,
            flow_grid,
            saliency_grid,
            sources: Vec::new(),
            shots: Vec::new(),
            embeddings: Vec::new(),
            flow: Vec::new(),
            saliency: Vec::new(),
            cursor: 0,
        }
    }

    fn open_source(&mut self) {
        self.close_source();
        let id = self.sources.len() as u32;
        self.sources.push(SourceInfo { source_id: id, name: format!("source-{id}"), frame_count: None });
        self.cursor = 0;
    }

    fn close_source(&mut self) {
        if let Some(s) = self.sources.last_mut() {
            s.frame_count = Some(self.cursor);
        }
    }

    /// Appends a shot of `samples` samples. `embed(i)` is normalized before
    /// storage; `flow(i)` is the uniform vector of record i; `blob(i)` the
    /// saliency centre of sample i on the unit square.
    fn push_shot(
        &mut self,
        shot_id: u32,
        samples: usize,
        mut embed: impl FnMut(usize) -> Vec<f64>,
        mut flow: impl FnMut(usize) -> (f64, f64),
        mut blob: impl FnMut(usize) -> (f64, f64),
    ) {
        let frames = samples as u64 * self.stride as u64;
        let source_id = self.sources.last().expect("open source").source_id;
        self.shots.push(ShotRecord {
            shot_id,
            source_id,
            start_frame: self.cursor,
            end_frame: self.cursor + frames,
        });
        self.cursor += frames;
        for i in 0..samples {
            let e = embed(i);
            debug_assert_eq!(e.len(), self.dim);
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            self.embeddings.extend(e.iter().map(|v| (v / norm) as f32));
            let (cx, cy) = blob(i);
            self.saliency.extend(rasterize_blob(self.saliency_grid, cx, cy, BLOB_SIGMA));
        }
        let cells = self.flow_grid[0] * self.flow_grid[1];
        for i in 0..samples - 1 {
            let (dx, dy) = flow(i);
            for _ in 0..cells {
                self.flow.push(dx as f32);
                self.flow.push(dy as f32);
            }
        }
    }

    fn finish(mut self, named: BTreeMap<String, Vec<f32>>) -> Result<FootageLibrary> {
        self.close_source();
        FootageLibrary::from_parts(LibraryParts {
            fps: self.fps,
            stride: self.stride,
            embed_dim: self.dim,
            flow_grid: self.flow_grid,
            saliency_grid: self.saliency_grid,
            sources: self.sources,
            shots: self.shots,
            embeddings: self.embeddings,
            flow: self.flow,
            saliency: self.saliency,
            named_text_embeddings: named,
        })
    }
}

/// Isotropic Gaussian centred at `(cx, cy)` on cells at `(r/(H−1), c/(W−1))`.
fn rasterize_blob(grid: [usize; 2], cx: f64, cy: f64, sigma: f64) -> impl Iterator<Item = f32> {
    let [h, w] = grid;
    let coord = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    (0..h * w).map(move |k| {
        let (y, x) = (coord(k / w, h), coord(k % w, w));
        let d2 = (x - cx).powi(2) + (y - cy).powi(2);
        // keep a tiny floor so every frame carries mass after f32 rounding
        ((-d2 / (2.0 * sigma * sigma)).exp().max(1e-12)) as f32
    })
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn basis(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

/// Cluster centroids with pairwise cosine `cos(separation)`.
pub fn blueprint_centroids(dim: usize, k: usize, separation_deg: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=90.0).contains(&separation_deg) {
        return Err(Error::InvalidInput(format!(
            "separation {separation_deg}° outside [0, 90]"
        )));
    }
    if dim < k + 1 {
        return Err(Error::InvalidInput(format!(
            "embedding dimension {dim} too small for {k} clusters"
        )));
    }
    let c = separation_deg.to_radians().cos().max(0.0);
    Ok((0..k)
        .map(|i| {
            let mut v = vec![0.0; dim];
            v[0] = c.sqrt();
            v[i + 1] = (1.0 - c).sqrt();
            v
        })
        .collect())
}

/// A generated library plus the blueprint cluster of each shot (by shot id).
#[derive(Debug, Clone)]
pub struct GeneratedFootage {
    pub library: FootageLibrary,
    pub truth: BTreeMap<u32, usize>,
}

pub fn gen_footage(spec: &CaseSpec) -> Result<GeneratedFootage> {
    let fb = &spec.footage;
    let min_frames = 2 * fb.stride as u64;
    if fb.stride == 0 {
        return Err(Error::InvalidInput("stride must be at least 1".into()));
    }
    if fb.shot_frames[0] < min_frames || fb.shot_frames[0] > fb.shot_frames[1] {
        return Err(Error::InvalidInput(format!(
            "shot lengths {:?} must be ordered and at least 2·stride = {min_frames} frames",
            fb.shot_frames
        )));
    }
    if fb.clusters.is_empty() {
        return Err(Error::InvalidInput("no clusters in blueprint".into()));
    }
    let centroids = blueprint_centroids(fb.embed_dim, fb.clusters.len(), fb.separation_deg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder::new(fb.fps, fb.stride, fb.embed_dim, fb.flow_grid, fb.saliency_grid);
    let mut truth = BTreeMap::new();
    let per_source = fb.shots_per_source.max(1);
    let dim = fb.embed_dim;
    let noise_scale = fb.noise / (dim as f64).sqrt();
    let mut next_id = 0u32;
    for (ci, cluster) in fb.clusters.iter().enumerate() {
        for _ in 0..cluster.shots {
            if (next_id as usize).is_multiple_of(per_source) {
                b.open_source();
            }
            let frames = rng.random_range(fb.shot_frames[0]..=fb.shot_frames[1]);
            let samples = frames as usize / fb.stride as usize;
            let base: Vec<f64> = centroids[ci]
                .iter()
                .zip(gaussian_vec(&mut rng, dim, noise_scale))
                .map(|(c, g)| c + g)
                .collect();
            let jitter: Vec<Vec<f64>> =
                (0..samples).map(|_| gaussian_vec(&mut rng, dim, 0.1 * noise_scale)).collect();
            let magnitude = cluster.motion * (1.0 + 0.2 * (rng.random::<f64>() - 0.5));
            let heading = match cluster.direction_deg {
                Some(d) => d.to_radians(),
                None => rng.random::<f64>() * 2.0 * PI,
            };
            let records: Vec<(f64, f64)> = (0..samples - 1)
                .map(|_| {
                    let m = magnitude * (1.0 + 0.1 * (rng.random::<f64>() - 0.5));
                    let a = heading + 0.1 * rng.sample::<f64, _>(StandardNormal);
                    (m * a.cos(), m * a.sin())
                })
                .collect();
            let from = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
            let to = match cluster.saliency {
                SaliencyPattern::Static => from,
                SaliencyPattern::Drift => (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)),
            };
            let span = (samples - 1).max(1) as f64;
            b.push_shot(
                next_id,
                samples,
                |i| base.iter().zip(&jitter[i]).map(|(x, j)| x + j).collect(),
                |i| records[i],
                |i| {
                    let t = i as f64 / span;
                    (from.0 + (to.0 - from.0) * t, from.1 + (to.1 - from.1) * t)
                },
            );
            truth.insert(next_id, ci);
            next_id += 1;
        }
    }
    let named = fb
        .clusters
        .iter()
        .zip(&centroids)
        .filter_map(|(c, v)| c.label.clone().map(|l| (l, v.iter().map(|&x| x as f32).collect())))
        .collect();
    Ok(GeneratedFootage { library: b.finish(named)?, truth })
}

/// Generates the footage archive and writes it to `dir`.
pub fn gen_archive(spec: &CaseSpec, dir: impl AsRef<Path>) -> Result<GeneratedFootage> {
    let out = gen_footage(spec)?;
    save_archive(&out.library, dir)?;
    Ok(out)
}

pub fn gen_music(spec: &CaseSpec) -> Result<MusicProfile> {
    let mb = &spec.music;
    let d = mb.duration_s;
    if !(d > 0.0) {
        return Err(Error::InvalidInput("music duration must be positive".into()));
    }
    let beats = match &mb.beats {
        Some(b) => b.clone(),
        None => {
            if !(mb.tempo_bpm > 0.0) || !mb.tempo_bpm.is_finite() {
                return Err(Error::InvalidInput(format!("invalid tempo {}", mb.tempo_bpm)));
            }
            let period = 60.0 / mb.tempo_bpm;
            (0..)
                .map(|i| i as f64 * period)
                .take_while(|&t| t <= d + 1e-9)
                .map(|t| t.min(d))
                .collect()
        }
    };
    let layout = if mb.sections.is_empty() {
        vec![SectionBlueprint { name: "main".into(), duration_s: d, intensity: Intensity::Medium, level: 0.5 }]
    } else {
        mb.sections.clone()
    };
    let total: f64 = layout.iter().map(|s| s.duration_s).sum();
    if (total - d).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "section durations sum to {total}, expected {d}"
        )));
    }
    let mut sections = Vec::with_capacity(layout.len());
    let mut t = 0.0;
    for (i, s) in layout.iter().enumerate() {
        let end = if i + 1 == layout.len() { d } else { t + s.duration_s };
        sections.push(Section {
            name: s.name.clone(),
            start_s: t,
            end_s: end,
            intensity: s.intensity,
            level: s.level,
        });
        t = end;
    }
    let env = &mb.rms;
    if !(env.hop_s > 0.0) {
        return Err(Error::InvalidInput("rms hop must be positive".into()));
    }
    let n = (d / env.hop_s).ceil() as usize;
    let boundary = if sections.len() > 1 { sections[0].end_s } else { d / 2.0 };
    let values = (0..n)
        .map(|i| {
            let c = (i as f64 + 0.5) * env.hop_s;
            match env.shape {
                EnvelopeShape::Constant => env.high,
                EnvelopeShape::Ramp => env.low + (env.high - env.low) * (c / d).min(1.0),
                EnvelopeShape::Step => {
                    if c < boundary {
                        env.low
                    } else {
                        env.high
                    }
                }
                EnvelopeShape::Sections => {
                    let s = sections.iter().find(|s| c < s.end_s).unwrap_or(sections.last().unwrap());
                    env.low + s.level * (env.high - env.low)
                }
            }
        })
        .collect();
    let profile = MusicProfile { duration_s: d, beats, sections, rms: RmsCurve { hop_s: env.hop_s, values } };
    profile.validate()?;
    Ok(profile)
}

/// Generates the music profile and writes it to `path`.
pub fn gen_profile(spec: &CaseSpec, path: impl AsRef<Path>) -> Result<MusicProfile> {
    let profile = gen_music(spec)?;
    save_profile(&profile, path)?;
    Ok(profile)
}

/// A small pool where one chain of windows is the unique best sequence.
#[derive(Debug, Clone)]
pub struct PlantedCase {
    pub library: FootageLibrary,
    pub profile: MusicProfile,
    pub query: Vec<f64>,
    pub pacing: PacingSpec,
    /// `(shot_id, sample_start)` per slot.
    pub expected: Vec<(u32, usize)>,
    pub window_len: usize,
}

impl PlantedCase {
    pub fn pool(&self) -> Vec<u32> {
        self.library.shots().iter().map(|s| s.shot_id).collect()
    }

    pub fn cuts(&self) -> Result<Vec<(f64, f64)>> {
        self.profile.pacing_to_cuts(&self.pacing)
    }
}

const PLANTED_FPS: f64 = 24.0;
const PLANTED_STRIDE: u32 = 4;
const PLANTED_BEAT_S: f64 = 0.5;

pub fn gen_planted_case(spec: &CaseSpec) -> Result<PlantedCase> {
    let p = spec
        .planted
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("case has no planted directive".into()))?;
    if p.slots == 0 || p.slot_beats == 0 {
        return Err(Error::InvalidInput("planted chain needs at least one slot of one beat".into()));
    }
    if !(p.chain_similarity > 0.0 && p.chain_similarity <= 1.0) {
        return Err(Error::InvalidInput("chain similarity must lie in (0, 1]".into()));
    }
    let slot_s = p.slot_beats as f64 * PLANTED_BEAT_S;
    let len = ((slot_s * PLANTED_FPS / PLANTED_STRIDE as f64).round() as usize).max(2);
    if len < 3 {
        return Err(Error::InvalidInput("planted slots must span at least 3 samples".into()));
    }
    let dim = 8usize;
    if p.decoys + 2 > 64 {
        return Err(Error::InvalidInput("too many decoys for a planted case".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = p.slots + p.decoys;
    let mut ids: Vec<u32> = (0..total as u32).collect();
    ids.shuffle(&mut rng);
    let (chain_ids, decoy_ids) = ids.split_at(p.slots);

    let query = basis(dim, 0);
    let c = p.chain_similarity;
    let chain_emb: Vec<f64> = (0..dim)
        .map(|i| match i {
            0 => c,
            1 => (1.0 - c * c).max(0.0).sqrt(),
            _ => 0.0,
        })
        .collect();
    let matched_blob = (0.3, 0.7);
    let lead_blob = (0.85, 0.15);
    let ramp = |j: usize| 1.0 + j as f64;

    // Shots are laid out in id order on one source.
    let mut order: Vec<(u32, Option<usize>)> = chain_ids
        .iter()
        .enumerate()
        .map(|(j, &id)| (id, Some(j)))
        .chain(decoy_ids.iter().map(|&id| (id, None)))
        .collect();
    order.sort_by_key(|&(id, _)| id);

    let mut b = Builder::new(PLANTED_FPS, PLANTED_STRIDE, dim, [4, 4], [8, 8]);
    b.open_source();
    let mut expected = vec![(0u32, 0usize); p.slots];
    for (id, role) in order {
        match role {
            Some(j) => {
                let lead = if j == 0 { 0 } else { p.mid_shot_offset };
                expected[j] = (id, lead);
                let (r0, r1) = (ramp(j), ramp(j + 1));
                b.push_shot(
                    id,
                    lead + len,
                    |_| chain_emb.clone(),
                    |i| {
                        if i < lead {
                            (-3.0 * r1, 0.5)
                        } else {
                            let k = (i - lead) as f64 / (len - 2) as f64;
                            (r0 + (r1 - r0) * k, 0.0)
                        }
                    },
                    |i| if i < lead { lead_blob } else { matched_blob },
                );
            }
            None => {
                let emb = match p.decoy_similarity {
                    Some(s) => {
                        let mut v = vec![0.0; dim];
                        v[0] = s;
                        v[2 + (id as usize % (dim - 2))] = (1.0 - s * s).max(0.0).sqrt();
                        v
                    }
                    None => {
                        let g = gaussian_vec(&mut rng, dim, 0.5 / (dim as f64).sqrt());
                        query.iter().zip(g).map(|(q, g)| q + g).collect()
                    }
                };
                let n = p.mid_shot_offset + len;
                let records: Vec<(f64, f64)> = (0..n - 1)
                    .map(|_| {
                        let m = rng.random_range(0.5..4.0);
                        let a = rng.random::<f64>() * 2.0 * PI;
                        (m * a.cos(), m * a.sin())
                    })
                    .collect();
                let blobs: Vec<(f64, f64)> = (0..n)
                    .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
                    .collect();
                b.push_shot(id, n, |_| emb.clone(), |i| records[i], |i| blobs[i]);
            }
        }
    }
    let library = b.finish(BTreeMap::new())?;

    let duration = p.slots as f64 * slot_s + 1.0;
    let profile = gen_music(&CaseSpec {
        seed: spec.seed,
        footage: FootageBlueprint::default(),
        music: MusicBlueprint {
            duration_s: duration,
            tempo_bpm: 60.0 / PLANTED_BEAT_S,
            beats: None,
            sections: Vec::new(),
            rms: EnvelopeBlueprint { hop_s: 0.1, shape: EnvelopeShape::Ramp, low: 0.1, high: 0.9 },
        },
        planted: None,
    })?;
    Ok(PlantedCase {
        library,
        profile,
        query,
        pacing: PacingSpec { start_beat: 0, counts: vec![p.slot_beats; p.slots] },
        expected,
        window_len: len,
    })
}

/// Small random instance for exhaustive cross-checks.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub library: FootageLibrary,
    pub profile: MusicProfile,
    pub query: Vec<f64>,
    pub pool: Vec<u32>,
    pub cuts: Vec<(f64, f64)>,
}

/// Pool of `2..=max_pool` shots, `1..=max_slots` slots and at most
/// `max_windows` windows per shot and slot at a one-sample step.
pub fn gen_toy_instance(seed: u64, max_pool: usize, max_slots: usize, max_windows: usize) -> Result<ToyInstance> {
    if max_pool < 1 || max_slots < 1 || max_windows < 1 {
        return Err(Error::InvalidInput("toy bounds must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = rng.random_range(1..=max_slots.min(max_pool));
    let pool_size = rng.random_range(slots.max(2).min(max_pool)..=max_pool);
    let slot_beats = rng.random_range(1..=2u32);
    let len = (slot_beats as f64 * PLANTED_BEAT_S * PLANTED_FPS / PLANTED_STRIDE as f64).round() as usize;
    let dim = 6;
    let query = basis(dim, 0);

    let mut b = Builder::new(PLANTED_FPS, PLANTED_STRIDE, dim, [3, 3], [6, 6]);
    b.open_source();
    for id in 0..pool_size as u32 {
        let n = len + rng.random_range(0..max_windows);
        let base: Vec<f64> = query
            .iter()
            .zip(gaussian_vec(&mut rng, dim, 0.7 / (dim as f64).sqrt()))
            .map(|(q, g)| q + g)
            .collect();
        let embs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                base.iter()
                    .zip(gaussian_vec(&mut rng, dim, 0.3 / (dim as f64).sqrt()))
                    .map(|(x, g)| x + g)
                    .collect()
            })
            .collect();
        let records: Vec<(f64, f64)> = (0..n - 1)
            .map(|_| {
                let m = rng.random_range(0.0..3.0);
                let a = rng.random::<f64>() * 2.0 * PI;
                (m * a.cos(), m * a.sin())
            })
            .collect();
        let blobs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        b.push_shot(id, n, |i| embs[i].clone(), |i| records[i], |i| blobs[i]);
    }
    let library = b.finish(BTreeMap::new())?;

    let duration = slots as f64 * slot_beats as f64 * PLANTED_BEAT_S + 1.0;
    let beats: Vec<f64> = (0..)
        .map(|i| i as f64 * PLANTED_BEAT_S)
        .take_while(|&t| t <= duration + 1e-9)
        .collect();
    let hop = 0.1;
    let rms = RmsCurve {
        hop_s: hop,
        values: (0..(duration / hop).ceil() as usize).map(|_| rng.random_range(0.0..1.0)).collect(),
    };
    let profile = MusicProfile {
        duration_s: duration,
        beats,
        sections: vec![Section {
            name: "main".into(),
            start_s: 0.0,
            end_s: duration,
            intensity: Intensity::Medium,
            level: 0.5,
        }],
        rms,
    };
    profile.validate()?;
    let cuts = profile.pacing_to_cuts(&PacingSpec { start_beat: 0, counts: vec![slot_beats; slots] })?;
    Ok(ToyInstance {
        pool: (0..pool_size as u32).collect(),
        library,
        profile,
        query,
        cuts,
    })
}

/// File names written by [`write_case`].
pub const ARCHIVE_DIR: &str = "archive";
pub const MUSIC_FILE: &str = "music.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const PLANTED_FILE: &str = "planted.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRecord {
    pub query: Vec<f64>,
    pub pacing: PacingSpec,
    pub expected: Vec<(u32, usize)>,
    pub window_len: usize,
}

pub fn load_case_spec(path: impl AsRef<Path>) -> Result<CaseSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Writes the archive, music profile and ground truth of a case under `dir`.
pub fn write_case(spec: &CaseSpec, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if spec.planted.is_some() {
        let case = gen_planted_case(spec)?;
        save_archive(&case.library, dir.join(ARCHIVE_DIR))?;
        save_profile(&case.profile, dir.join(MUSIC_FILE))?;
        write_json(
            &dir.join(PLANTED_FILE),
            &PlantedRecord {
                query: case.query,
                pacing: case.pacing,
                expected: case.expected,
                window_len: case.window_len,
            },
        )
    } else {
        let footage = gen_archive(spec, dir.join(ARCHIVE_DIR))?;
        gen_profile(spec, dir.join(MUSIC_FILE))?;
        write_json(&dir.join(TRUTH_FILE), &footage.truth)
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::{load_archive, Side};
    use crate::music::load_profile;

    fn small_spec(seed: u64) -> CaseSpec {
        CaseSpec {
            seed,
            footage: FootageBlueprint {
                clusters: vec![
                    ClusterBlueprint { shots: 5, motion: 0.0, ..Default::default() },
                    ClusterBlueprint { shots: 5, motion: 2.0, label: Some("fast".into()), ..Default::default() },
                ],
                ..Default::default()
            },
            music: MusicBlueprint::default(),
            planted: None,
        }
    }

    #[test]
    fn footage_counts_and_zero_motion() {
        let g = gen_footage(&small_spec(1)).unwrap();
        assert_eq!(g.library.shots().len(), 10);
        for (i, s) in g.library.shots().iter().enumerate() {
            let w = g.library.full_window(i);
            let m = g.library.window_flow_magnitude(&w);
            if g.truth[&s.shot_id] == 0 {
                assert_eq!(m, 0.0);
            } else {
                assert!(m > 1.0);
            }
        }
        assert!(g.library.named_text_embedding("fast").is_some());
    }

    #[test]
    fn generation_is_deterministic_on_disk() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_case(&small_spec(7), a.path()).unwrap();
        write_case(&small_spec(7), b.path()).unwrap();
        for name in ["archive/embeddings.f32", "archive/flow.f32", "archive/saliency.f32", "archive/manifest.json", MUSIC_FILE, TRUTH_FILE] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
        }
        load_archive(a.path().join(ARCHIVE_DIR)).unwrap();
        load_profile(a.path().join(MUSIC_FILE)).unwrap();
    }

    #[test]
    fn short_shots_rejected() {
        let mut spec = small_spec(1);
        spec.footage.shot_frames = [4, 20];
        assert!(gen_footage(&spec).is_err());
    }

    #[test]
    fn metronome_profile() {
        let mut spec = small_spec(1);
        spec.music = MusicBlueprint { duration_s: 60.0, sections: Vec::new(), ..Default::default() };
        let p = gen_music(&spec).unwrap();
        // beats at 0, 0.5, …, 60.0
        assert_eq!(p.beats.len(), 121);
        assert!(p.beats.windows(2).all(|w| (w[1] - w[0] - 0.5).abs() < 1e-12));
        spec.music.tempo_bpm = 0.0;
        assert!(gen_music(&spec).is_err());
    }

    #[test]
    fn step_envelope_changes_across_boundary() {
        let mut spec = small_spec(1);
        spec.music.rms.shape = EnvelopeShape::Step;
        let p = gen_music(&spec).unwrap();
        let b = p.sections[0].end_s;
        assert!(p.rms_over(b - 1.0, b).unwrap() < p.rms_over(b, b + 1.0).unwrap());
    }

    #[test]
    fn centroid_separation() {
        let c = blueprint_centroids(8, 4, 60.0).unwrap();
        let dot: f64 = c[0].iter().zip(&c[3]).map(|(a, b)| a * b).sum();
        assert!((dot - 0.5).abs() < 1e-12);
        assert!(blueprint_centroids(3, 4, 60.0).is_err());
    }

    #[test]
    fn planted_chain_boundaries_match() {
        let spec = CaseSpec {
            seed: 3,
            footage: FootageBlueprint::default(),
            music: MusicBlueprint::default(),
            planted: Some(PlantedDirective { mid_shot_offset: 2, ..Default::default() }),
        };
        let case = gen_planted_case(&spec).unwrap();
        let lib = &case.library;
        let windows: Vec<_> = case
            .expected
            .iter()
            .map(|&(id, a)| lib.window(id, a, case.window_len).unwrap())
            .collect();
        for pair in windows.windows(2) {
            let end = lib.boundary_flow(&pair[0], Side::End).unwrap();
            let start = lib.boundary_flow(&pair[1], Side::Start).unwrap();
            assert_eq!(end.data, start.data);
            assert_eq!(
                lib.boundary_saliency(&pair[0], Side::End).unwrap(),
                lib.boundary_saliency(&pair[1], Side::Start).unwrap()
            );
        }
        assert_eq!(case.expected[1].1, 2);
        assert_eq!(case.cuts().unwrap().len(), 3);
    }

    #[test]
    fn toy_instances_respect_bounds() {
        for seed in 0..20 {
            let t = gen_toy_instance(seed, 6, 3, 4).unwrap();
            assert!(t.pool.len() <= 6 && t.cuts.len() <= 3 && t.pool.len() >= t.cuts.len());
        }
    }
}
