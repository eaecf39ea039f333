//! Rule-based planning: a section-level structural plan, per-segment
//! guidance triples (query, weight template, pacing), candidate validation
//! and query relaxation. An external agent can stand in for the rules
//! through [`agent::PlanningAgent`].

pub mod agent;
mod validate;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use validate::{
    relax_query, validate_candidates, ValidationContext, ValidationVerdict, ISSUE_POOL, ISSUE_RELEVANCE, ISSUE_REPEAT,
    ISSUE_SCORE, RELAX_SIMILARITY, SWITCH_CLUSTER,
};

use crate::error::{Error, Result};
use crate::metrics::{cosine, MetricWeights, METRIC_COUNT};
use crate::music::{Intensity, MusicProfile, PacingSpec};
use crate::summary::{ClusterEntry, FootageSummary};

/// Keyword labels given to each section before user pins are added.
pub const KEYWORDS_PER_SECTION: usize = 3;
/// Upper bound on keywords per section, pins included.
pub const MAX_KEYWORDS: usize = 4;
pub const MIN_SEGMENT_BEATS: usize = 4;
pub const MAX_SEGMENT_BEATS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateName {
    #[serde(rename = "Semantic_Priority")]
    SemanticPriority,
    #[serde(rename = "Motion_Continuity_Priority")]
    MotionContinuityPriority,
    #[serde(rename = "Composition_Similarity_Priority")]
    CompositionSimilarityPriority,
    #[serde(rename = "Hybrid_Visual_Coherent")]
    HybridVisualCoherent,
    #[serde(rename = "Default_Priority")]
    DefaultPriority,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::SemanticPriority,
        TemplateName::MotionContinuityPriority,
        TemplateName::CompositionSimilarityPriority,
        TemplateName::HybridVisualCoherent,
        TemplateName::DefaultPriority,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::SemanticPriority => "Semantic_Priority",
            TemplateName::MotionContinuityPriority => "Motion_Continuity_Priority",
            TemplateName::CompositionSimilarityPriority => "Composition_Similarity_Priority",
            TemplateName::HybridVisualCoherent => "Hybrid_Visual_Coherent",
            TemplateName::DefaultPriority => "Default_Priority",
        }
    }

    /// Zero-based metric indices whose weights must strictly exceed every
    /// other weight. Semantic priority covers m1 with m2 because its
    /// stricter pool is a relevance constraint.
    pub fn prioritized(self) -> &'static [usize] {
        match self {
            TemplateName::SemanticPriority => &[0, 1],
            TemplateName::MotionContinuityPriority => &[2, 5],
            TemplateName::CompositionSimilarityPriority => &[3],
            TemplateName::HybridVisualCoherent => &[2, 3],
            TemplateName::DefaultPriority => &[],
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown heuristic template '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicTemplate {
    pub name: TemplateName,
    pub weights: MetricWeights,
    /// Added to the pool's min_similarity when this template is active.
    #[serde(default)]
    pub min_similarity_delta: f64,
}

impl HeuristicTemplate {
    /// Prioritized weights strictly exceed all others; a template without
    /// priorities must be uniform.
    pub fn respects_priority(&self) -> bool {
        let w = &self.weights.0;
        let pr = self.name.prioritized();
        if pr.is_empty() {
            return w.iter().all(|&x| x == w[0]);
        }
        let low = pr.iter().map(|&i| w[i]).fold(f64::INFINITY, f64::min);
        (0..METRIC_COUNT).filter(|i| !pr.contains(i)).all(|i| w[i] < low)
    }
}

/// The five named weight templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateSet(pub Vec<HeuristicTemplate>);

impl Default for TemplateSet {
    fn default() -> Self {
        let t = |name, w: [f64; METRIC_COUNT], delta| HeuristicTemplate { name, weights: MetricWeights(w), min_similarity_delta: delta };
        TemplateSet(vec![
            t(TemplateName::SemanticPriority, [0.35, 0.35, 0.10, 0.10, 0.05, 0.05], 0.05),
            t(TemplateName::MotionContinuityPriority, [0.10, 0.10, 0.40, 0.10, 0.10, 0.20], 0.0),
            t(TemplateName::CompositionSimilarityPriority, [0.10, 0.10, 0.10, 0.45, 0.15, 0.10], 0.0),
            t(TemplateName::HybridVisualCoherent, [0.10, 0.10, 0.30, 0.30, 0.10, 0.10], 0.0),
            t(TemplateName::DefaultPriority, [1.0 / 6.0; METRIC_COUNT], 0.0),
        ])
    }
}

impl TemplateSet {
    pub fn get(&self, name: TemplateName) -> Result<&HeuristicTemplate> {
        self.0
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("template {name} is not configured")))
    }

    pub fn validate(&self) -> Result<()> {
        for name in TemplateName::ALL {
            let n = self.0.iter().filter(|t| t.name == name).count();
            if n != 1 {
                return Err(Error::InvalidInput(format!("template {name} must be configured exactly once, found {n}")));
            }
        }
        for t in &self.0 {
            t.weights.validate()?;
            if !t.min_similarity_delta.is_finite() {
                return Err(Error::InvalidInput(format!("template {} has a non-finite pool delta", t.name)));
            }
            if !t.respects_priority() {
                return Err(Error::InvalidInput(format!(
                    "template {} weights {:?} do not favor {:?}",
                    t.name,
                    t.weights.0,
                    t.name.prioritized().iter().map(|i| format!("m{}", i + 1)).collect::<Vec<_>>()
                )));
            }
        }
        Ok(())
    }
}

/// Planner thresholds and defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub seed: u64,
    pub top_k: usize,
    pub min_similarity: f64,
    /// Minimum mean m1 of a passing candidate.
    pub theta_rel: f64,
    /// Minimum normalized composite of a passing candidate.
    pub theta_score: f64,
    /// Searches per segment, the first one included.
    pub max_retries: usize,
    /// Earlier segments whose shots may not be reused.
    pub repeat_window: usize,
    pub templates: TemplateSet,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            top_k: 64,
            min_similarity: 0.25,
            theta_rel: 0.20,
            theta_score: 0.55,
            max_retries: 3,
            repeat_window: 2,
            templates: TemplateSet::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        self.templates.validate()?;
        if self.top_k == 0 {
            return Err(Error::InvalidInput("top_k must be at least 1".into()));
        }
        if self.max_retries == 0 {
            return Err(Error::InvalidInput("max_retries must be at least 1".into()));
        }
        for (name, v) in [("min_similarity", self.min_similarity), ("theta_rel", self.theta_rel), ("theta_score", self.theta_score)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// A query vector with the keyword it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTarget {
    pub label: String,
    pub vector: Vec<f64>,
}

/// Resolves keyword labels to query vectors: summary cluster labels first,
/// then named text embeddings from the archive.
#[derive(Debug, Clone, Copy)]
pub struct Lexicon<'a> {
    pub summary: &'a FootageSummary,
    pub named: &'a BTreeMap<String, Vec<f32>>,
}

impl<'a> Lexicon<'a> {
    pub fn new(summary: &'a FootageSummary, named: &'a BTreeMap<String, Vec<f32>>) -> Self {
        Self { summary, named }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.summary.entry(label).is_some() || self.named.contains_key(label)
    }

    pub fn resolve(&self, label: &str) -> Option<QueryTarget> {
        let vector = match self.summary.entry(label) {
            Some(e) => e.centroid.clone(),
            None => self.named.get(label)?.iter().map(|&v| v as f64).collect(),
        };
        Some(QueryTarget { label: label.to_string(), vector })
    }

    pub fn clusters(&self) -> &'a [ClusterEntry] {
        &self.summary.clusters
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionPlan {
    pub section_name: String,
    /// "Low", "Medium" or "High"; anything else selects the default template.
    pub energy_level: String,
    pub keywords: Vec<String>,
    /// User keywords pinned to this section.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned: Vec<String>,
    #[serde(default)]
    pub rationale: String,
}

impl SectionPlan {
    pub fn intensity(&self) -> Option<Intensity> {
        match self.energy_level.to_ascii_lowercase().as_str() {
            "low" => Some(Intensity::Low),
            "medium" => Some(Intensity::Medium),
            "high" => Some(Intensity::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralPlan {
    #[serde(default)]
    pub narrative: String,
    pub sections: Vec<SectionPlan>,
    /// User keywords that matched neither a cluster nor a named embedding.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved_keywords: Vec<String>,
}

impl StructuralPlan {
    /// One entry per profile section, in order, with resolvable keywords.
    pub fn validate(&self, profile: &MusicProfile, lexicon: &Lexicon<'_>) -> Result<()> {
        if self.sections.len() != profile.sections.len() {
            return Err(Error::InvalidInput(format!(
                "plan has {} sections, music profile has {}",
                self.sections.len(),
                profile.sections.len()
            )));
        }
        for (i, (p, s)) in self.sections.iter().zip(&profile.sections).enumerate() {
            if p.section_name != s.name {
                return Err(Error::InvalidInput(format!(
                    "plan section {i} is '{}', music profile has '{}'",
                    p.section_name, s.name
                )));
            }
            if p.keywords.is_empty() {
                return Err(Error::InvalidInput(format!("plan section '{}' has no keywords", p.section_name)));
            }
            if let Some(k) = p.keywords.iter().chain(&p.pinned).find(|k| !lexicon.contains(k)) {
                return Err(Error::InvalidInput(format!(
                    "plan section '{}' keyword '{k}' matches no cluster or named embedding",
                    p.section_name
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

fn intensity_label(i: Intensity) -> &'static str {
    match i {
        Intensity::Low => "Low",
        Intensity::Medium => "Medium",
        Intensity::High => "High",
    }
}

/// Pairs sections with clusters by rank: sections ordered by numeric
/// intensity take clusters ordered by motion energy. Each section gets its
/// matched cluster plus the nearest-energy neighbors; resolvable user
/// keywords are pinned to sections from the most intense down.
pub fn build_plan(lexicon: &Lexicon<'_>, profile: &MusicProfile, user_keywords: &[String]) -> Result<StructuralPlan> {
    let clusters = lexicon.clusters();
    if clusters.is_empty() {
        return Err(Error::InvalidInput("summary empty".into()));
    }
    if profile.sections.is_empty() {
        return Err(Error::InvalidInput("music profile has no sections".into()));
    }
    let s = profile.sections.len();
    let c = clusters.len();
    let mut by_level: Vec<usize> = (0..s).collect();
    by_level.sort_by(|&a, &b| profile.sections[a].level.total_cmp(&profile.sections[b].level).then(a.cmp(&b)));
    let mut by_energy: Vec<usize> = (0..c).collect();
    by_energy.sort_by(|&a, &b| clusters[a].energy.total_cmp(&clusters[b].energy).then(a.cmp(&b)));

    let mut matched = vec![0; s];
    for (rank, &sec) in by_level.iter().enumerate() {
        let pos = if s > 1 { rank as f64 / (s - 1) as f64 } else { profile.sections[sec].level.clamp(0.0, 1.0) };
        matched[sec] = by_energy[(pos * (c - 1) as f64).round() as usize];
    }

    let (resolvable, unresolved): (Vec<&String>, Vec<&String>) = user_keywords.iter().partition(|k| lexicon.contains(k));
    let mut pins: Vec<Vec<String>> = vec![Vec::new(); s];
    let mut dropped = Vec::new();
    for (j, k) in resolvable.into_iter().enumerate() {
        let sec = by_level[s - 1 - j % s];
        if pins[sec].contains(k) {
            continue;
        }
        if pins[sec].len() + 1 < MAX_KEYWORDS {
            pins[sec].push(k.clone());
        } else {
            dropped.push(k.clone());
        }
    }

    let sections = profile
        .sections
        .iter()
        .enumerate()
        .map(|(i, sec)| {
            let m = matched[i];
            let mut near: Vec<usize> = (0..c).collect();
            near.sort_by(|&a, &b| {
                (clusters[a].energy - clusters[m].energy)
                    .abs()
                    .total_cmp(&(clusters[b].energy - clusters[m].energy).abs())
                    .then((a != m).cmp(&(b != m)))
                    .then(a.cmp(&b))
            });
            let mut keywords = pins[i].clone();
            for &n in near.iter().take(KEYWORDS_PER_SECTION) {
                let label = &clusters[n].label;
                if keywords.len() < MAX_KEYWORDS && !keywords.contains(label) {
                    keywords.push(label.clone());
                }
            }
            let energy_rank = by_energy.iter().position(|&x| x == m).expect("cluster ranked") + 1;
            let rationale = format!(
                "{} section (level {:.2}) paired with {} (energy {:.3}, rank {}/{} by energy){}",
                intensity_label(sec.intensity),
                sec.level,
                clusters[m].label,
                clusters[m].energy,
                energy_rank,
                c,
                if pins[i].is_empty() { String::new() } else { format!("; pinned: {}", pins[i].join(", ")) }
            );
            SectionPlan {
                section_name: sec.name.clone(),
                energy_level: intensity_label(sec.intensity).to_string(),
                keywords,
                pinned: pins[i].clone(),
                rationale,
            }
        })
        .collect();
    let mut unresolved_keywords: Vec<String> = unresolved.into_iter().cloned().collect();
    unresolved_keywords.extend(dropped);
    Ok(StructuralPlan {
        narrative: format!(
            "{} sections ordered by intensity follow {} clusters ordered by motion energy",
            s, c
        ),
        sections,
        unresolved_keywords,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolParams {
    pub top_k: usize,
    pub min_similarity: f64,
}

/// Query, weight template and pacing for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGuidance {
    pub id: String,
    pub section: usize,
    pub segment: usize,
    #[serde(default)]
    pub attempt: usize,
    pub query: QueryTarget,
    pub template: TemplateName,
    pub weights: MetricWeights,
    pub pacing: PacingSpec,
    pub pool: PoolParams,
    /// Query labels already used for this segment.
    #[serde(default)]
    pub tried: Vec<String>,
    #[serde(default)]
    pub thought_process: String,
}

impl SegmentGuidance {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.pacing.counts.is_empty() {
            return Err(Error::InvalidInput(format!("guidance {} has empty pacing", self.id)));
        }
        if self.pacing.counts.contains(&0) {
            return Err(Error::InvalidInput(format!("guidance {} has a zero-beat slot", self.id)));
        }
        if self.query.vector.is_empty() || self.query.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("guidance {} has an invalid query vector", self.id)));
        }
        if self.pool.top_k == 0 || !self.pool.min_similarity.is_finite() {
            return Err(Error::InvalidInput(format!("guidance {} has invalid pool parameters", self.id)));
        }
        Ok(())
    }
}

pub fn guidance_id(section: usize, segment: usize) -> String {
    format!("s{section}.g{segment}")
}

/// Beat counts a slot may take at each intensity.
pub fn pacing_band(intensity: Option<Intensity>) -> &'static [u32] {
    match intensity {
        Some(Intensity::High) => &[1, 2],
        Some(Intensity::Medium) | None => &[2, 3, 4],
        Some(Intensity::Low) => &[4, 8],
    }
}

/// Template chosen for a keyword of a section: a pinned user keyword means
/// a narrative request, otherwise the section's intensity decides.
pub fn choose_template(section: &SectionPlan, keyword: &str) -> TemplateName {
    if section.pinned.iter().any(|k| k == keyword) {
        return TemplateName::SemanticPriority;
    }
    match section.intensity() {
        Some(Intensity::High) => TemplateName::MotionContinuityPriority,
        Some(Intensity::Medium) => TemplateName::HybridVisualCoherent,
        Some(Intensity::Low) => TemplateName::CompositionSimilarityPriority,
        None => TemplateName::DefaultPriority,
    }
}

/// Seeded pacing for `remaining` beats. Sections with at most
/// [`MAX_SEGMENT_BEATS`] left are filled completely; otherwise the total is
/// drawn so that at least [`MIN_SEGMENT_BEATS`] stay for a later segment.
/// Slots draw from the band; the last one is clipped to the total.
pub fn draw_pacing(remaining: usize, band: &[u32], rng: &mut impl Rng) -> Vec<u32> {
    let total = if remaining <= MAX_SEGMENT_BEATS {
        remaining
    } else {
        let hi = MAX_SEGMENT_BEATS.min(remaining - MIN_SEGMENT_BEATS);
        rng.random_range(MIN_SEGMENT_BEATS..=hi)
    };
    let mut counts = Vec::new();
    let mut sum = 0usize;
    while sum < total {
        let c = (band[rng.random_range(0..band.len())] as usize).min(total - sum);
        counts.push(c as u32);
        sum += c;
    }
    counts
}

/// Guidance for segment `segment` of section `section`, starting at beat
/// index `cursor`. The keyword cycles through the section's list.
pub fn make_guidance(
    plan: &StructuralPlan,
    section: usize,
    segment: usize,
    lexicon: &Lexicon<'_>,
    profile: &MusicProfile,
    cursor: usize,
    config: &PlannerConfig,
) -> Result<SegmentGuidance> {
    let sp = plan
        .sections
        .get(section)
        .ok_or_else(|| Error::InvalidInput(format!("plan has no section {section}")))?;
    let remaining = section_beats_remaining(profile, section, cursor)?;
    let keyword = &sp.keywords[segment % sp.keywords.len()];
    let query = lexicon
        .resolve(keyword)
        .ok_or_else(|| Error::InvalidInput(format!("keyword '{keyword}' does not resolve")))?;
    let name = choose_template(sp, keyword);
    let template = config.templates.get(name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((section as u64) << 32) | segment as u64);
    let counts = draw_pacing(remaining, pacing_band(sp.intensity()), &mut rng);
    let thought_process = format!(
        "keyword {} of section '{}'; {} section selects {}; {} of {} remaining beats in {} slots",
        keyword,
        sp.section_name,
        sp.energy_level,
        name,
        counts.iter().sum::<u32>(),
        remaining,
        counts.len()
    );
    Ok(SegmentGuidance {
        id: guidance_id(section, segment),
        section,
        segment,
        attempt: 0,
        tried: vec![query.label.clone()],
        query,
        template: name,
        weights: template.weights,
        pacing: PacingSpec { start_beat: cursor, counts },
        pool: PoolParams {
            top_k: config.top_k,
            min_similarity: config.min_similarity + template.min_similarity_delta,
        },
        thought_process,
    })
}

/// Beats between `cursor` and the end of the section's beat range.
pub fn section_beats_remaining(profile: &MusicProfile, section: usize, cursor: usize) -> Result<usize> {
    let ranges = profile.section_beat_ranges();
    let &(first, end) = ranges
        .get(section)
        .ok_or_else(|| Error::InvalidInput(format!("music profile has no section {section}")))?;
    if cursor < first || cursor >= end {
        return Err(Error::InvalidInput(format!(
            "zero beats remaining: cursor {cursor} outside section {section} beats [{first}, {end})"
        )));
    }
    Ok(end - cursor)
}

/// Cosine of a query against a cluster centroid, 0 on a dimension mismatch.
pub(crate) fn query_similarity(q: &QueryTarget, c: &ClusterEntry) -> f64 {
    cosine(&q.vector, &c.centroid).unwrap_or(0.0)
}

/// Sequential planner state: the beat cursor and the shots used by recent
/// segments.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerState {
    pub cursor: usize,
    window: usize,
    recent: VecDeque<BTreeSet<u32>>,
}

impl PlannerState {
    pub fn new(cursor: usize, repeat_window: usize) -> Self {
        Self { cursor, window: repeat_window, recent: VecDeque::new() }
    }

    /// Shots that the next segment may not reuse.
    pub fn recent_shots(&self) -> BTreeSet<u32> {
        self.recent.iter().flatten().copied().collect()
    }

    /// Records an accepted segment and moves the cursor past it.
    pub fn commit(&mut self, shots: impl IntoIterator<Item = u32>, beats: usize) {
        if self.window > 0 {
            self.recent.push_back(shots.into_iter().collect());
            while self.recent.len() > self.window {
                self.recent.pop_front();
            }
        }
        self.cursor += beats;
    }
}
