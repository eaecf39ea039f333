//! End-to-end orchestration: plan, guide, search and validate every segment
//! in order, then assemble and score the edit decision list.

mod edl;
mod render;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use edl::{entry_for, report_edl, resolve_entry, EditDecisionList, EdlEntry, SegmentRecord};
pub use render::{emit_render_commands, MediaMap};

use crate::editor::{beam_search, build_pool, window_len, Candidate, SearchConfig, SearchContext};
use crate::error::{Error, Result};
use crate::feature_store::{load_archive, FootageLibrary, WindowView};
use crate::metrics::{evaluate_sequence, FramingSolver, MetricParams, MetricReport, MetricWeights, SequenceItem};
use crate::music::{load_profile, MusicProfile, PacingSpec};
use crate::planner::agent::{GuidanceRequest, PlanningAgent, ProcessAgent, RuleBased};
use crate::planner::{
    relax_query, Lexicon, PlannerConfig, PlannerState, SegmentGuidance, StructuralPlan, ValidationContext,
    ValidationVerdict, ISSUE_POOL, RELAX_SIMILARITY, SWITCH_CLUSTER,
};
use crate::summary::{build_summary, cluster_shots, default_cluster_count, FootageSummary};

/// External planning program, spoken to over NDJSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

/// Input files a run reads. Command-line arguments take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnginePaths {
    pub archive: Option<PathBuf>,
    pub music: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub captions: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub metrics: MetricParams,
    pub search: SearchConfig,
    pub planner: PlannerConfig,
    /// Cluster count; derived from the shot count when absent.
    pub clusters: Option<usize>,
    pub cluster_seed: u64,
    /// User keywords pinned onto sections.
    pub keywords: Vec<String>,
    /// Weights of the final whole-timeline report.
    pub report_weights: MetricWeights,
    pub agent: Option<AgentCommand>,
    pub paths: EnginePaths,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.metrics.validate()?;
        self.search.validate()?;
        self.planner.validate()?;
        self.report_weights.validate()?;
        if self.clusters == Some(0) {
            return Err(Error::InvalidInput("cluster count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Info,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub level: LogLevel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attempt: Option<usize>,
    pub message: String,
}

/// Ordered record of the decisions a run made. Carries no timestamps so
/// identical runs log identically.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub events: Vec<LogEvent>,
}

impl RunLog {
    fn push(&mut self, level: LogLevel, segment: Option<&str>, attempt: Option<usize>, message: impl Into<String>) {
        self.events.push(LogEvent {
            level,
            segment: segment.map(str::to_string),
            attempt,
            message: message.into(),
        });
    }

    pub fn warnings(&self) -> impl Iterator<Item = &LogEvent> {
        self.events.iter().filter(|e| e.level == LogLevel::Warn)
    }

    /// One JSON object per line.
    pub fn to_ndjson(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub summary: FootageSummary,
    pub plan: StructuralPlan,
    pub guidance: Vec<SegmentGuidance>,
    pub edl: EditDecisionList,
    pub report: MetricReport,
    pub log: RunLog,
}

/// Optional inputs that replace planner steps.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub plan: Option<StructuralPlan>,
    pub captions: Option<BTreeMap<usize, String>>,
    /// Reference written into the EDL's `music` field.
    pub music_ref: Option<String>,
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<BTreeMap<usize, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Clusters the library and summarizes the clusters.
pub fn summarize(lib: &FootageLibrary, config: &EngineConfig, captions: Option<&BTreeMap<usize, String>>) -> Result<FootageSummary> {
    let k = config.clusters.unwrap_or_else(|| default_cluster_count(lib.shots().len()));
    let clusters = cluster_shots(lib, k.min(lib.shots().len()), config.cluster_seed)?;
    build_summary(lib, &clusters, captions)
}

/// Loads the inputs named by the arguments (falling back to the config's
/// paths) and runs the pipeline with the configured agent.
pub fn run_pipeline(
    archive: Option<&Path>,
    music: Option<&Path>,
    config: &EngineConfig,
    plan: Option<&Path>,
    captions: Option<&Path>,
) -> Result<PipelineOutput> {
    let need = |arg: Option<&Path>, fallback: &Option<PathBuf>, what: &str| {
        arg.map(Path::to_path_buf)
            .or_else(|| fallback.clone())
            .ok_or_else(|| Error::InvalidInput(format!("no {what} path given")))
    };
    let archive = need(archive, &config.paths.archive, "archive")?;
    let music = need(music, &config.paths.music, "music profile")?;
    let plan = plan.map(Path::to_path_buf).or_else(|| config.paths.plan.clone());
    let captions = captions.map(Path::to_path_buf).or_else(|| config.paths.captions.clone());

    let lib = load_archive(&archive)?;
    let profile = load_profile(&music)?;
    let overrides = Overrides {
        plan: plan.map(StructuralPlan::load).transpose()?,
        captions: captions.map(load_captions).transpose()?,
        music_ref: Some(music.to_string_lossy().into_owned()),
    };
    match &config.agent {
        Some(cmd) => {
            let mut agent = ProcessAgent::spawn(&cmd.program, &cmd.args)?;
            compose(&lib, &profile, config, overrides, &mut agent)
        }
        None => compose(&lib, &profile, config, overrides, &mut RuleBased),
    }
}

struct Accepted {
    guidance: SegmentGuidance,
    candidate: Candidate,
    cuts: Vec<(f64, f64)>,
    attempts: usize,
    validated: bool,
}

fn failed(verdict: &str) -> ValidationVerdict {
    ValidationVerdict {
        success: false,
        best_candidate: None,
        verdict: verdict.to_string(),
        issues: vec![ISSUE_POOL.to_string()],
        suggestions: vec![RELAX_SIMILARITY.to_string(), SWITCH_CLUSTER.to_string()],
    }
}

/// Runs every section of the track in order on in-memory inputs.
pub fn compose(
    lib: &FootageLibrary,
    profile: &MusicProfile,
    config: &EngineConfig,
    overrides: Overrides,
    agent: &mut dyn PlanningAgent,
) -> Result<PipelineOutput> {
    config.validate()?;
    profile.validate()?;
    let mut log = RunLog::default();
    let summary = summarize(lib, config, overrides.captions.as_ref())?;
    log.push(LogLevel::Info, None, None, summary.theme.clone());
    let lexicon = Lexicon::new(&summary, lib.named_text_embeddings());
    let plan = match overrides.plan {
        Some(p) => {
            p.validate(profile, &lexicon)?;
            log.push(LogLevel::Info, None, None, "structural plan taken from override");
            p
        }
        None => agent.plan(&lexicon, profile, &config.keywords)?,
    };
    for k in &plan.unresolved_keywords {
        log.push(LogLevel::Warn, None, None, format!("keyword '{k}' matches no cluster or named embedding"));
    }

    let [rows, cols] = lib.saliency_grid();
    let solver = FramingSolver::new(rows, cols, &config.metrics)?;
    let ranges = profile.section_beat_ranges();
    let mut state = PlannerState::new(ranges.first().map_or(0, |r| r.0), config.planner.repeat_window);
    let mut accepted: Vec<Accepted> = Vec::new();
    let mut history: Vec<String> = Vec::new();

    for (s, &(first, end)) in ranges.iter().enumerate() {
        if first >= end {
            log.push(LogLevel::Warn, None, None, format!("section {s} '{}' holds no beat slot", plan.sections[s].section_name));
            continue;
        }
        state.cursor = first;
        let mut segment = 0;
        while state.cursor < end {
            let req = GuidanceRequest {
                plan: &plan,
                section: s,
                segment,
                lexicon: &lexicon,
                profile,
                cursor: state.cursor,
                config: &config.planner,
                history: &history,
            };
            let mut g = agent.guidance(&req)?;
            let fitted = fit_pacing(lib, profile, &g.pacing)?;
            if fitted != g.pacing {
                log.push(
                    LogLevel::Info,
                    Some(&g.id),
                    None,
                    format!("slots {:?} split to {:?} to fit the longest shot", g.pacing.counts, fitted.counts),
                );
                g.pacing = fitted;
            }
            let a = settle_segment(lib, profile, config, &solver, &lexicon, &state, g, agent, &mut log, accepted.len())?;
            history.push(a.guidance.query.label.clone());
            state.commit(a.candidate.shot_ids(), a.guidance.pacing.total_beats());
            accepted.push(a);
            segment += 1;
        }
    }

    let guidance: Vec<SegmentGuidance> = accepted.iter().map(|a| a.guidance.clone()).collect();
    let mut entries = Vec::new();
    let mut items: Vec<(WindowView, (f64, f64), usize)> = Vec::new();
    for (i, a) in accepted.iter().enumerate() {
        for (w, &slot) in a.candidate.windows.iter().zip(&a.cuts) {
            entries.push(entry_for(lib, w, slot, &a.guidance.id));
            items.push((*w, slot, i));
        }
    }
    let seq: Vec<SequenceItem<'_>> = items
        .iter()
        .map(|&(window, slot, i)| SequenceItem { window, slot, query: &guidance[i].query.vector })
        .collect();
    let report = evaluate_sequence(lib, profile, &solver, &config.metrics, &config.report_weights, &seq)?;
    let edl = EditDecisionList {
        music: overrides.music_ref.unwrap_or_default(),
        fps: lib.fps(),
        entries,
        segments: accepted
            .iter()
            .map(|a| SegmentRecord {
                id: a.guidance.id.clone(),
                section: plan.sections[a.guidance.section].section_name.clone(),
                query: a.guidance.query.label.clone(),
                query_vector: a.guidance.query.vector.clone(),
                template: a.guidance.template,
                pacing: a.guidance.pacing.clone(),
                attempts: a.attempts,
                validated: a.validated,
            })
            .collect(),
    };
    Ok(PipelineOutput { summary, plan, guidance, edl, report, log })
}

/// Halves every slot longer than the longest shot in the library until it
/// fits or is a single beat. The beat total is unchanged.
pub fn fit_pacing(lib: &FootageLibrary, profile: &MusicProfile, pacing: &PacingSpec) -> Result<PacingSpec> {
    let longest = lib.shots().iter().map(|s| s.sample_count).max().unwrap_or(0);
    let mut counts = Vec::with_capacity(pacing.counts.len());
    let mut beat = pacing.start_beat;
    let mut pending: Vec<u32> = pacing.counts.iter().rev().copied().collect();
    while let Some(c) = pending.pop() {
        let (t0, t1) = match (profile.beats.get(beat), profile.beats.get(beat + c as usize)) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::InvalidInput(format!("pacing runs past the last beat at slot starting {beat}"))),
        };
        if c > 1 && window_len(lib, t1 - t0) > longest {
            pending.push(c / 2);
            pending.push(c - c / 2);
            continue;
        }
        counts.push(c);
        beat += c as usize;
    }
    Ok(PacingSpec { start_beat: pacing.start_beat, counts })
}

/// The guidance/search/validate loop of one segment.
#[allow(clippy::too_many_arguments)]
fn settle_segment(
    lib: &FootageLibrary,
    profile: &MusicProfile,
    config: &EngineConfig,
    solver: &FramingSolver,
    lexicon: &Lexicon<'_>,
    state: &PlannerState,
    mut g: SegmentGuidance,
    agent: &mut dyn PlanningAgent,
    log: &mut RunLog,
    index: usize,
) -> Result<Accepted> {
    let recent = state.recent_shots();
    let vctx = ValidationContext {
        theta_rel: config.planner.theta_rel,
        theta_score: config.planner.theta_score,
        recent: recent.clone(),
        beam_width: config.search.beam_width,
    };
    let cuts = profile.pacing_to_cuts(&g.pacing)?;
    let mut best: Option<(SegmentGuidance, Candidate)> = None;
    let mut verdict = failed("");
    let mut attempts = 0;
    for attempt in 0..config.planner.max_retries {
        let id = g.id.clone();
        let at = Some(attempt);
        if attempt > 0 {
            match relax_query(&g, &verdict, lexicon, attempt) {
                Ok(next) => g = next,
                Err(e @ Error::NoAlternativeCluster { .. }) => {
                    log.push(LogLevel::Info, Some(&id), at, e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        attempts += 1;
        log.push(LogLevel::Info, Some(&id), at, g.thought_process.clone());
        let pool = match build_pool(lib, &g.query.vector, g.pool.top_k, g.pool.min_similarity) {
            Ok(p) => p,
            Err(e @ Error::PoolEmpty { .. }) => {
                log.push(LogLevel::Info, Some(&id), at, e.to_string());
                verdict = failed("empty pool");
                continue;
            }
            Err(e) => return Err(e),
        };
        let fresh = pool.without(&recent);
        let pool = if fresh.is_empty() {
            log.push(LogLevel::Warn, Some(&id), at, "every pool shot was used recently; searching the full pool");
            pool
        } else {
            fresh
        };
        let ctx = SearchContext {
            lib,
            profile,
            solver,
            params: &config.metrics,
            weights: &g.weights,
            query: &g.query.vector,
            cuts: &cuts,
        };
        let cands = match beam_search(&ctx, &pool, &config.search) {
            Ok(c) => c,
            Err(e @ Error::PositionInfeasible { .. }) => {
                log.push(LogLevel::Info, Some(&id), at, e.to_string());
                verdict = failed("no feasible window");
                continue;
            }
            Err(e) => return Err(e),
        };
        log.push(
            LogLevel::Info,
            Some(&id),
            at,
            format!("pool {} shots, {} candidates", pool.len(), cands.len()),
        );
        verdict = agent.validate(&cands, &g, &vctx)?;
        log.push(LogLevel::Info, Some(&id), at, verdict.verdict.clone());
        if let (true, Some(i)) = (verdict.success, verdict.best_candidate) {
            return Ok(Accepted { guidance: g, candidate: cands[i].clone(), cuts, attempts, validated: true });
        }
        for issue in &verdict.issues {
            log.push(LogLevel::Info, Some(&id), at, format!("issue: {issue}"));
        }
        let top = cands
            .into_iter()
            .reduce(|a, b| if b.report.normalized_composite > a.report.normalized_composite { b } else { a });
        if let Some(c) = top {
            if best.as_ref().is_none_or(|(_, b)| c.report.normalized_composite > b.report.normalized_composite) {
                best = Some((g.clone(), c));
            }
        }
    }
    match best {
        Some((guidance, candidate)) => {
            log.push(
                LogLevel::Warn,
                Some(&guidance.id),
                None,
                format!(
                    "no candidate passed validation after {attempts} attempts; keeping the best (composite {:.4})",
                    candidate.report.normalized_composite
                ),
            );
            Ok(Accepted { guidance, candidate, cuts, attempts, validated: false })
        }
        None => Err(Error::Unrecoverable { segment: index, attempts }),
    }
}

#[cfg(test)]
mod tests;
