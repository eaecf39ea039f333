//! Shot-pool retrieval and sequence search over trimmed windows.

mod beam;
mod oracle;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use beam::{beam_search, beam_search_unpruned};
pub use oracle::{brute_force_oracle, oracle_size};

use crate::error::{Error, Result};
use crate::feature_store::{FootageLibrary, Side, WindowView};
use crate::metrics::rank::percentile_rank_sorted;
use crate::metrics::{
    beat_sync_score, cosine, evaluate_sequence, m2_segment_consistency, m3_motion_continuity,
    FramingSolver, MetricParams, MetricReport, MetricWeights, SequenceItem, TransitionScores, METRIC_COUNT,
};
use crate::music::MusicProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub shot_id: u32,
    pub similarity: f64,
}

/// Shots retrieved for one query, most similar first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotPool {
    pub entries: Vec<PoolEntry>,
    pub top_k: usize,
    pub min_similarity: f64,
}

impl ShotPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.shot_id)
    }

    pub fn contains(&self, shot_id: u32) -> bool {
        self.entries.iter().any(|e| e.shot_id == shot_id)
    }

    /// Pool with the given shots removed.
    pub fn without(&self, excluded: &BTreeSet<u32>) -> ShotPool {
        ShotPool {
            entries: self.entries.iter().filter(|e| !excluded.contains(&e.shot_id)).cloned().collect(),
            ..self.clone()
        }
    }

    /// Pool holding exactly `ids`, with similarities to `query`.
    pub fn from_ids(lib: &FootageLibrary, ids: &[u32], query: &[f64]) -> Result<ShotPool> {
        let mut entries = ids
            .iter()
            .map(|&id| {
                let i = lib
                    .shot_index(id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown shot {id}")))?;
                Ok(PoolEntry { shot_id: id, similarity: cosine(&lib.shot_embedding(&lib.full_window(i))?, query)? })
            })
            .collect::<Result<Vec<_>>>()?;
        entries.sort_by(pool_order);
        Ok(ShotPool { top_k: entries.len(), min_similarity: f64::NEG_INFINITY, entries })
    }
}

fn pool_order(a: &PoolEntry, b: &PoolEntry) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then(a.shot_id.cmp(&b.shot_id))
}

/// Full-shot embeddings scored against `query`; the `top_k` best with
/// similarity at least `min_similarity`, ties by ascending shot id.
pub fn build_pool(lib: &FootageLibrary, query: &[f64], top_k: usize, min_similarity: f64) -> Result<ShotPool> {
    let mut entries = Vec::new();
    for (i, shot) in lib.shots().iter().enumerate() {
        let similarity = cosine(&lib.shot_embedding(&lib.full_window(i))?, query)?;
        if similarity >= min_similarity {
            entries.push(PoolEntry { shot_id: shot.shot_id, similarity });
        }
    }
    entries.sort_by(pool_order);
    entries.truncate(top_k);
    if entries.is_empty() {
        return Err(Error::PoolEmpty { min_similarity });
    }
    Ok(ShotPool { entries, top_k, min_similarity })
}

/// Window length in samples for a slot of `duration_s`.
pub fn window_len(lib: &FootageLibrary, duration_s: f64) -> usize {
    ((duration_s * lib.fps() / lib.stride() as f64).round() as usize).max(2)
}

/// Fixed-length windows of a shot at starts `0, step, 2·step, …`. With
/// `trimming` off only the start-aligned window is produced.
pub fn enumerate_windows(
    lib: &FootageLibrary,
    shot_index: usize,
    duration_s: f64,
    window_step: u32,
    trimming: bool,
) -> Vec<WindowView> {
    let len = window_len(lib, duration_s);
    let n = lib.shots()[shot_index].sample_count;
    if len > n {
        return Vec::new();
    }
    let step = (window_step / lib.stride()).max(1) as usize;
    let last = if trimming { n - len } else { 0 };
    (0..=last)
        .step_by(step)
        .map(|a| lib.window_at(shot_index, a, len).expect("window within shot"))
        .collect()
}

fn default_beam_width() -> Option<usize> {
    Some(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Partial sequences kept per step; `None` keeps all of them.
    #[serde(default = "default_beam_width")]
    pub beam_width: Option<usize>,
    /// Distance between window starts, in frames.
    pub window_step: u32,
    /// Slide windows inside shots; off pins every window to the shot start.
    pub trimming: bool,
    /// Largest search space the brute-force oracle accepts.
    pub oracle_cap: u128,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beam_width: default_beam_width(),
            window_step: 4,
            trimming: true,
            oracle_cap: 1_000_000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == Some(0) {
            return Err(Error::InvalidInput("beam width must be at least 1".into()));
        }
        if self.window_step == 0 {
            return Err(Error::InvalidInput("window step must be at least 1 frame".into()));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.beam_width.unwrap_or(usize::MAX)
    }
}

/// Everything a search over one segment reads.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub lib: &'a FootageLibrary,
    pub profile: &'a MusicProfile,
    pub solver: &'a FramingSolver,
    pub params: &'a MetricParams,
    pub weights: &'a MetricWeights,
    pub query: &'a [f64],
    /// Timeline slot `(t0, t1)` per position; the cut of a slot is `t0`.
    pub cuts: &'a [(f64, f64)],
}

impl SearchContext<'_> {
    /// Exact report of a complete sequence placed on this context's slots.
    pub fn evaluate(&self, windows: &[WindowView]) -> Result<MetricReport> {
        let items: Vec<SequenceItem<'_>> = windows
            .iter()
            .zip(self.cuts)
            .map(|(&window, &slot)| SequenceItem { window, slot, query: self.query })
            .collect();
        evaluate_sequence(self.lib, self.profile, self.solver, self.params, self.weights, &items)
    }
}

/// Populations used by the search-time energy proxy.
#[derive(Debug, Clone)]
pub struct EnergyProxy {
    flow_sorted: Vec<f64>,
    rms_sorted: Vec<f64>,
}

impl EnergyProxy {
    /// Flow population: full-shot magnitudes of the pool. RMS population: the
    /// track's samples.
    pub fn new(lib: &FootageLibrary, profile: &MusicProfile, pool: &ShotPool) -> Result<Self> {
        let flow = pool
            .ids()
            .map(|id| {
                let i = lib.shot_index(id).ok_or_else(|| Error::InvalidInput(format!("unknown shot {id}")))?;
                Ok(lib.window_flow_magnitude(&lib.full_window(i)))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self::from_magnitudes(flow, profile))
    }

    pub fn from_magnitudes(mut flow_sorted: Vec<f64>, profile: &MusicProfile) -> Self {
        flow_sorted.sort_by(f64::total_cmp);
        let mut rms_sorted = profile.rms.values.clone();
        rms_sorted.sort_by(f64::total_cmp);
        Self { flow_sorted, rms_sorted }
    }

    pub fn slot_level(&self, profile: &MusicProfile, slot: (f64, f64)) -> Result<f64> {
        Ok(percentile_rank_sorted(profile.rms_over(slot.0, slot.1)?, &self.rms_sorted))
    }

    /// `1 − |z_flow − z_rms|`, clipped to `[0, 1]`.
    pub fn score(&self, flow_magnitude: f64, slot_level: f64) -> f64 {
        (1.0 - (percentile_rank_sorted(flow_magnitude, &self.flow_sorted) - slot_level).abs()).clamp(0.0, 1.0)
    }
}

/// Search-time m5 for a cut: sync score at zero offset.
pub fn cut_sync(profile: &MusicProfile, params: &MetricParams, t: f64) -> Result<f64> {
    Ok(beat_sync_score(profile.nearest_beat(t)?.1, params.sigma))
}

/// Metric increments contributed by appending one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub m1: f64,
    pub m5: f64,
    pub m6_proxy: f64,
    /// Absent at the first position.
    pub transition: Option<TransitionScores>,
}

pub fn transition_gain(
    ctx: &SearchContext<'_>,
    proxy: &EnergyProxy,
    prev: Option<&WindowView>,
    cand: &WindowView,
    position: usize,
) -> Result<Gain> {
    let lib = ctx.lib;
    let slot = *ctx
        .cuts
        .get(position)
        .ok_or_else(|| Error::InvalidInput(format!("position {position} has no slot")))?;
    let emb = lib.shot_embedding(cand)?;
    let transition = match prev {
        None => None,
        Some(p) => Some(TransitionScores {
            m2: m2_segment_consistency(&lib.shot_embedding(p)?, &emb)?,
            m3: m3_motion_continuity(
                &lib.boundary_flow(p, Side::End)?,
                &lib.boundary_flow(cand, Side::Start)?,
                ctx.params,
            )?,
            m4: ctx.solver.framing_consistency(
                &lib.boundary_saliency(p, Side::End)?,
                &lib.boundary_saliency(cand, Side::Start)?,
            )?,
        }),
    };
    Ok(Gain {
        m1: cosine(&emb, ctx.query)?,
        m5: cut_sync(ctx.profile, ctx.params, slot.0)?,
        m6_proxy: proxy.score(lib.window_flow_magnitude(cand), proxy.slot_level(ctx.profile, slot)?),
        transition,
    })
}

/// Per-metric running sums of a partial sequence. Index 5 holds the m6
/// proxy.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningSums {
    pub sums: [f64; METRIC_COUNT],
    pub shots: usize,
}

impl RunningSums {
    pub fn add(&self, g: &Gain) -> RunningSums {
        let mut next = *self;
        next.sums[0] += g.m1;
        if let Some(t) = &g.transition {
            next.sums[1] += t.m2;
            next.sums[2] += t.m3;
            next.sums[3] += t.m4;
        }
        next.sums[4] += g.m5;
        next.sums[5] += g.m6_proxy;
        next.shots += 1;
        next
    }

    /// `Σ w_i · mean_i` over populated metrics.
    pub fn score(&self, weights: &MetricWeights) -> f64 {
        score_parts(&self.sums, self.shots, weights)
    }
}

/// Shared by the beam's bound and exact scoring so both follow the same
/// floating-point evaluation order.
pub(crate) fn score_parts(sums: &[f64; METRIC_COUNT], shots: usize, weights: &MetricWeights) -> f64 {
    let n = shots as f64;
    let t = shots.saturating_sub(1) as f64;
    let mut s = weights.0[0] * (sums[0] / n);
    if shots > 1 {
        s += weights.0[1] * (sums[1] / t);
        s += weights.0[2] * (sums[2] / t);
        s += weights.0[3] * (sums[3] / t);
    }
    s += weights.0[4] * (sums[4] / n);
    s += weights.0[5] * (sums[5] / n);
    s
}

/// Running sums and search score of a sequence, built one gain at a time.
pub fn incremental_score(
    ctx: &SearchContext<'_>,
    proxy: &EnergyProxy,
    windows: &[WindowView],
) -> Result<(RunningSums, f64)> {
    let mut sums = RunningSums::default();
    for (k, w) in windows.iter().enumerate() {
        let g = transition_gain(ctx, proxy, k.checked_sub(1).map(|p| &windows[p]), w, k)?;
        sums = sums.add(&g);
    }
    Ok((sums, sums.score(ctx.weights)))
}

/// A complete sequence with its exact report.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub windows: Vec<WindowView>,
    /// Score the search ranked the sequence by before exact re-ranking.
    pub search_score: f64,
    pub report: MetricReport,
}

impl Candidate {
    pub fn score(&self) -> f64 {
        self.report.ranking_score
    }

    pub fn history(&self) -> Vec<(u32, usize)> {
        history_of(&self.windows)
    }

    pub fn shot_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.windows.iter().map(|w| w.shot_id)
    }
}

pub(crate) fn history_of(windows: &[WindowView]) -> Vec<(u32, usize)> {
    windows.iter().map(|w| (w.shot_id, w.start)).collect()
}

/// Higher score first, then lexicographically smaller `(shot_id, start)` history.
pub(crate) fn rank_order(sa: f64, ha: &[WindowView], sb: f64, hb: &[WindowView]) -> Ordering {
    sb.total_cmp(&sa).then_with(|| {
        ha.iter()
            .map(|w| (w.shot_id, w.start))
            .cmp(hb.iter().map(|w| (w.shot_id, w.start)))
    })
}

pub(crate) fn check_inputs(ctx: &SearchContext<'_>, pool: &ShotPool, config: &SearchConfig) -> Result<()> {
    config.validate()?;
    ctx.params.validate()?;
    ctx.weights.validate()?;
    if pool.is_empty() {
        return Err(Error::PoolEmpty { min_similarity: pool.min_similarity });
    }
    if ctx.cuts.is_empty() {
        return Err(Error::InvalidInput("pacing has no slots".into()));
    }
    if ctx.cuts.iter().any(|&(a, b)| !(b > a)) {
        return Err(Error::InvalidInput("slot with non-positive duration".into()));
    }
    if ctx.query.len() != ctx.lib.embed_dim() {
        return Err(Error::InvalidInput(format!(
            "query dimension {} differs from embedding dimension {}",
            ctx.query.len(),
            ctx.lib.embed_dim()
        )));
    }
    for id in pool.ids() {
        if ctx.lib.shot_index(id).is_none() {
            return Err(Error::InvalidInput(format!("pool references unknown shot {id}")));
        }
    }
    Ok(())
}
