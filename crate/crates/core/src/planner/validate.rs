use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{query_similarity, Lexicon, SegmentGuidance};
use crate::editor::Candidate;
use crate::error::{Error, Result};

pub const RELAX_SIMILARITY: &str = "relax_similarity";
pub const SWITCH_CLUSTER: &str = "switch_cluster";

pub const ISSUE_RELEVANCE: &str = "insufficient semantic relevance";
pub const ISSUE_POOL: &str = "pool too small";
pub const ISSUE_SCORE: &str = "composite score below threshold";
pub const ISSUE_REPEAT: &str = "shot reused within the recent-use window";

/// Outcome of validating a batch of candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub success: bool,
    pub best_candidate: Option<usize>,
    #[serde(default)]
    pub verdict: String,
    #[serde(default)]
    pub issues: Vec<String>,
    #[serde(default)]
    pub suggestions: Vec<String>,
}

impl ValidationVerdict {
    pub fn validate(&self, candidates: usize) -> Result<()> {
        match (self.success, self.best_candidate) {
            (true, None) => Err(Error::InvalidInput("successful verdict without a best candidate".into())),
            (_, Some(i)) if i >= candidates => Err(Error::InvalidInput(format!(
                "verdict selects candidate {i} of {candidates}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Thresholds and state the validator checks candidates against.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationContext {
    pub theta_rel: f64,
    pub theta_score: f64,
    /// Shots used by the recent segments.
    pub recent: BTreeSet<u32>,
    /// Candidates the search was asked for; fewer returned means the pool
    /// ran short. `None` when unbounded.
    pub beam_width: Option<usize>,
}

/// A candidate passes when its mean raw m1 reaches `theta_rel`, its
/// normalized composite reaches `theta_score` and it reuses no recent shot.
/// The best passer has the highest normalized composite, ties to the lower
/// index.
pub fn validate_candidates(candidates: &[Candidate], guidance: &SegmentGuidance, ctx: &ValidationContext) -> ValidationVerdict {
    let mut best: Option<(usize, f64)> = None;
    let (mut weak, mut low, mut repeat) = (0, 0, 0);
    for (i, c) in candidates.iter().enumerate() {
        let m1 = &c.report.per_shot_m1;
        let relevance = if m1.is_empty() { f64::NEG_INFINITY } else { m1.iter().sum::<f64>() / m1.len() as f64 };
        let score = c.report.normalized_composite;
        let relevant = relevance >= ctx.theta_rel;
        let scoring = score >= ctx.theta_score;
        let fresh = c.shot_ids().all(|id| !ctx.recent.contains(&id));
        weak += usize::from(!relevant);
        low += usize::from(!scoring);
        repeat += usize::from(!fresh);
        if relevant && scoring && fresh && best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    let short = candidates.is_empty() || ctx.beam_width.is_some_and(|b| candidates.len() < b);
    if let Some((i, score)) = best {
        return ValidationVerdict {
            success: true,
            best_candidate: Some(i),
            verdict: format!("candidate {i} accepted for {} (composite {score:.4})", guidance.query.label),
            issues: Vec::new(),
            suggestions: Vec::new(),
        };
    }
    let mut issues = Vec::new();
    let mut suggestions = Vec::new();
    let mut suggest = |s: &str| {
        if !suggestions.iter().any(|x| x == s) {
            suggestions.push(s.to_string());
        }
    };
    if candidates.is_empty() || weak > 0 {
        issues.push(ISSUE_RELEVANCE.to_string());
        suggest(RELAX_SIMILARITY);
        suggest(SWITCH_CLUSTER);
    }
    if short {
        issues.push(ISSUE_POOL.to_string());
        suggest(RELAX_SIMILARITY);
    }
    if low > 0 {
        issues.push(ISSUE_SCORE.to_string());
        suggest(SWITCH_CLUSTER);
    }
    if repeat > 0 {
        issues.push(ISSUE_REPEAT.to_string());
        suggest(RELAX_SIMILARITY);
    }
    ValidationVerdict {
        success: false,
        best_candidate: None,
        verdict: format!("rejected all {} candidates for {}", candidates.len(), guidance.query.label),
        issues,
        suggestions,
    }
}

/// Loosens the guidance after a failed attempt. Every attempt lowers
/// min_similarity by 0.05 and doubles top_k; from attempt 2 on, the query
/// also moves to the untried cluster whose centroid is closest to it.
pub fn relax_query(
    guidance: &SegmentGuidance,
    verdict: &ValidationVerdict,
    lexicon: &Lexicon<'_>,
    attempt: usize,
) -> Result<SegmentGuidance> {
    if verdict.success {
        return Err(Error::InvalidInput("relax_query needs a failed verdict".into()));
    }
    if attempt == 0 {
        return Err(Error::InvalidInput("relaxation attempts start at 1".into()));
    }
    let mut g = guidance.clone();
    g.attempt = attempt;
    g.pool.min_similarity = (g.pool.min_similarity - 0.05).max(-1.0);
    g.pool.top_k = g.pool.top_k.saturating_mul(2);
    let mut note = format!(
        "attempt {attempt}: min_similarity {:.2}, top_k {}",
        g.pool.min_similarity, g.pool.top_k
    );
    if attempt >= 2 {
        let next = lexicon
            .clusters()
            .iter()
            .filter(|c| !g.tried.contains(&c.label))
            .map(|c| (query_similarity(&g.query, c), c))
            .fold(None::<(f64, &crate::summary::ClusterEntry)>, |acc, (s, c)| match acc {
                Some((b, _)) if b >= s => acc,
                _ => Some((s, c)),
            })
            .ok_or(Error::NoAlternativeCluster { tried: g.tried.len() })?;
        note.push_str(&format!("; query {} -> {}", g.query.label, next.1.label));
        g.query = lexicon.resolve(&next.1.label).expect("cluster label resolves");
        g.tried.push(next.1.label.clone());
    }
    g.thought_process = format!("{}; {note}", guidance.thought_process);
    Ok(g)
}
