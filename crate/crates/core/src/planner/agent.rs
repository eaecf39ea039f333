//! Pluggable planning agents. [`RuleBased`] runs the built-in rules;
//! [`ProcessAgent`] exchanges newline-delimited JSON with an external
//! program, one request line and one response line per call.
//!
//! Requests carry a `role` of `screenwriter`, `director` or `validator`.
//! Responses use the field names `section_name`, `energy_level`,
//! `visual_tags`, `rationale` (a JSON array, one object per section);
//! `thought_process`, `retrieval_query`, `weight_profile`, `pacing_control`;
//! and `success`, `best_candidate`, `verdict`, `issues`, `suggestions`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::*;
use crate::editor::Candidate;

/// Everything the director step sees for one segment.
#[derive(Debug, Clone, Copy)]
pub struct GuidanceRequest<'a> {
    pub plan: &'a StructuralPlan,
    pub section: usize,
    pub segment: usize,
    pub lexicon: &'a Lexicon<'a>,
    pub profile: &'a MusicProfile,
    pub cursor: usize,
    pub config: &'a PlannerConfig,
    /// Query labels of earlier segments, oldest first.
    pub history: &'a [String],
}

pub trait PlanningAgent {
    fn plan(&mut self, lexicon: &Lexicon<'_>, profile: &MusicProfile, user_keywords: &[String]) -> Result<StructuralPlan>;

    fn guidance(&mut self, req: &GuidanceRequest<'_>) -> Result<SegmentGuidance>;

    fn validate(
        &mut self,
        candidates: &[Candidate],
        guidance: &SegmentGuidance,
        ctx: &ValidationContext,
    ) -> Result<ValidationVerdict>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBased;

impl PlanningAgent for RuleBased {
    fn plan(&mut self, lexicon: &Lexicon<'_>, profile: &MusicProfile, user_keywords: &[String]) -> Result<StructuralPlan> {
        build_plan(lexicon, profile, user_keywords)
    }

    fn guidance(&mut self, req: &GuidanceRequest<'_>) -> Result<SegmentGuidance> {
        make_guidance(req.plan, req.section, req.segment, req.lexicon, req.profile, req.cursor, req.config)
    }

    fn validate(
        &mut self,
        candidates: &[Candidate],
        guidance: &SegmentGuidance,
        ctx: &ValidationContext,
    ) -> Result<ValidationVerdict> {
        Ok(validate_candidates(candidates, guidance, ctx))
    }
}

/// Agent backed by a child process speaking NDJSON on stdin/stdout.
pub struct ProcessAgent {
    program: String,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

#[derive(Debug, Deserialize)]
struct SectionReply {
    section_name: String,
    energy_level: String,
    visual_tags: Vec<String>,
    #[serde(default)]
    rationale: String,
}

#[derive(Debug, Deserialize)]
struct DirectorReply {
    #[serde(default)]
    thought_process: String,
    retrieval_query: String,
    weight_profile: String,
    pacing_control: Vec<u32>,
}

impl ProcessAgent {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { program: program.to_string(), child, stdin: Some(stdin), stdout })
    }

    fn exchange<T: DeserializeOwned>(&mut self, request: &Value) -> Result<T> {
        let stdin = self.stdin.as_mut().expect("open until drop");
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::io(&self.program, e))?;
        let mut reply = String::new();
        let n = self.stdout.read_line(&mut reply).map_err(|e| Error::io(&self.program, e))?;
        if n == 0 {
            return Err(Error::Agent(format!("{} closed its output", self.program)));
        }
        serde_json::from_str(reply.trim()).map_err(|e| Error::Agent(format!("malformed reply from {}: {e}", self.program)))
    }
}

impl Drop for ProcessAgent {
    fn drop(&mut self) {
        self.stdin.take();
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

fn agent_err(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Agent(m),
        other => other,
    }
}

impl PlanningAgent for ProcessAgent {
    fn plan(&mut self, lexicon: &Lexicon<'_>, profile: &MusicProfile, user_keywords: &[String]) -> Result<StructuralPlan> {
        let request = json!({
            "role": "screenwriter",
            "user_prompt": user_keywords,
            "footage_summary": {
                "theme": lexicon.summary.theme,
                "clusters": lexicon.clusters().iter().map(|c| json!({
                    "label": c.label, "caption": c.caption, "energy": c.energy, "size": c.size,
                })).collect::<Vec<_>>(),
                "named_keywords": lexicon.named.keys().collect::<Vec<_>>(),
            },
            "music_profile": profile.sections.iter().map(|s| json!({
                "name": s.name, "start_s": s.start_s, "end_s": s.end_s,
                "energy_level": intensity_label(s.intensity), "level": s.level,
            })).collect::<Vec<_>>(),
        });
        let reply: Vec<SectionReply> = self.exchange(&request)?;
        let plan = StructuralPlan {
            narrative: format!("plan from {}", self.program),
            sections: reply
                .into_iter()
                .map(|r| SectionPlan {
                    pinned: r.visual_tags.iter().filter(|t| user_keywords.contains(t)).cloned().collect(),
                    section_name: r.section_name,
                    energy_level: r.energy_level,
                    keywords: r.visual_tags,
                    rationale: r.rationale,
                })
                .collect(),
            unresolved_keywords: Vec::new(),
        };
        plan.validate(profile, lexicon).map_err(agent_err)?;
        Ok(plan)
    }

    fn guidance(&mut self, req: &GuidanceRequest<'_>) -> Result<SegmentGuidance> {
        let sp = req
            .plan
            .sections
            .get(req.section)
            .ok_or_else(|| Error::InvalidInput(format!("plan has no section {}", req.section)))?;
        let remaining = section_beats_remaining(req.profile, req.section, req.cursor)?;
        let request = json!({
            "role": "director",
            "section": { "name": sp.section_name, "energy_level": sp.energy_level, "keywords": sp.keywords },
            "segment": req.segment,
            "beats_remaining": remaining,
            "history": req.history,
            "weight_profiles": TemplateName::ALL.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
        });
        let reply: DirectorReply = self.exchange(&request)?;
        let query = req
            .lexicon
            .resolve(&reply.retrieval_query)
            .ok_or_else(|| Error::Agent(format!("retrieval_query '{}' resolves to no keyword", reply.retrieval_query)))?;
        let name: TemplateName = reply.weight_profile.parse().map_err(agent_err)?;
        let template = req.config.templates.get(name)?;
        let total: usize = reply.pacing_control.iter().map(|&c| c as usize).sum();
        if reply.pacing_control.is_empty() || reply.pacing_control.contains(&0) || total > remaining {
            return Err(Error::Agent(format!(
                "pacing_control {:?} must be non-empty positive counts summing to at most {remaining}",
                reply.pacing_control
            )));
        }
        let g = SegmentGuidance {
            id: guidance_id(req.section, req.segment),
            section: req.section,
            segment: req.segment,
            attempt: 0,
            tried: vec![query.label.clone()],
            query,
            template: name,
            weights: template.weights,
            pacing: PacingSpec { start_beat: req.cursor, counts: reply.pacing_control },
            pool: PoolParams {
                top_k: req.config.top_k,
                min_similarity: req.config.min_similarity + template.min_similarity_delta,
            },
            thought_process: reply.thought_process,
        };
        g.validate().map_err(agent_err)?;
        Ok(g)
    }

    fn validate(
        &mut self,
        candidates: &[Candidate],
        guidance: &SegmentGuidance,
        _ctx: &ValidationContext,
    ) -> Result<ValidationVerdict> {
        let request = json!({
            "role": "validator",
            "retrieval_query": guidance.query.label,
            "guidance_profile": guidance.template.as_str(),
            "candidates": candidates.iter().enumerate().map(|(i, c)| json!({
                "index": i,
                "shots": c.windows.iter().map(|w| json!({ "shot_id": w.shot_id, "start": w.start, "len": w.len })).collect::<Vec<_>>(),
                "metrics": c.report.means,
                "composite": c.report.normalized_composite,
            })).collect::<Vec<_>>(),
        });
        let verdict: ValidationVerdict = self.exchange(&request)?;
        verdict.validate(candidates.len()).map_err(agent_err)?;
        Ok(verdict)
    }
}
