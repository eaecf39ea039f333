use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mashup_core::feature_store::load_archive;
use mashup_core::music::load_profile;
use mashup_core::pipeline::{summarize, EditDecisionList, EngineConfig};
use mashup_core::planner::{make_guidance, Lexicon, StructuralPlan};

fn mashup(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mashup")).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path) {
    let spec = r#"{"seed": 3, "footage": {"clusters": [{"shots": 12, "motion": 0.5}, {"shots": 12, "motion": 2.5}], "shots_per_source": 6},
                  "music": {"duration_s": 12.0, "sections": [
                    {"name": "calm", "duration_s": 6.0, "intensity": "low", "level": 0.2},
                    {"name": "drive", "duration_s": 6.0, "intensity": "high", "level": 0.9}]}}"#;
    fs::write(dir.join("case.json"), spec).unwrap();
    ok(&mashup(dir, &["synth", "case.json", "--out", "."]));
}

#[test]
fn end_to_end_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    ok(&mashup(dir, &["validate", "archive", "--music", "music.json"]));

    let clusters: serde_json::Value = serde_json::from_str(&ok(&mashup(dir, &["cluster", "archive", "--clusters", "2"]))).unwrap();
    assert!(clusters.to_string().contains("cluster-1"));

    ok(&mashup(dir, &["plan", "archive", "music.json", "--clusters", "2", "--out", "plan.json"]));
    let plan = StructuralPlan::load(dir.join("plan.json")).unwrap();
    assert_eq!(plan.sections.len(), 2);

    ok(&mashup(dir, &["run", "archive", "music.json", "--clusters", "2", "--plan", "plan.json", "--log", "log.ndjson"]));
    let edl = EditDecisionList::load(dir.join("edl.json")).unwrap();
    assert!(!edl.entries.is_empty());
    assert!(fs::read_to_string(dir.join("log.ndjson")).unwrap().lines().count() > 1);

    let report: serde_json::Value =
        serde_json::from_str(&ok(&mashup(dir, &["report", "edl.json", "--archive", "archive", "--music", "music.json"]))).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["means"], saved["means"]);

    let sources: serde_json::Map<String, serde_json::Value> =
        edl.entries.iter().map(|e| (e.source_id.to_string(), format!("src{}.mp4", e.source_id).into())).collect();
    let media = serde_json::json!({"music": "song.wav", "sources": sources});
    fs::write(dir.join("media.json"), media.to_string()).unwrap();
    let script = ok(&mashup(dir, &["render-cmd", "edl.json", "--media", "media.json"]));
    assert_eq!(script.lines().filter(|l| l.starts_with("ffmpeg")).count(), edl.entries.len() + 2);
}

#[test]
fn edit_searches_one_guidance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    let lib = load_archive(dir.join("archive")).unwrap();
    let profile = load_profile(dir.join("music.json")).unwrap();
    let config = EngineConfig { clusters: Some(2), ..Default::default() };
    let summary = summarize(&lib, &config, None).unwrap();
    let lexicon = Lexicon::new(&summary, lib.named_text_embeddings());
    ok(&mashup(dir, &["plan", "archive", "music.json", "--clusters", "2", "--out", "plan.json"]));
    let plan = StructuralPlan::load(dir.join("plan.json")).unwrap();
    let g = make_guidance(&plan, 1, 0, &lexicon, &profile, profile.section_beat_ranges()[1].0, &config.planner).unwrap();
    fs::write(dir.join("guidance.json"), serde_json::to_string(&g).unwrap()).unwrap();
    let out: serde_json::Value = serde_json::from_str(&ok(&mashup(dir, &["edit", "archive", "music.json", "guidance.json"]))).unwrap();
    let rows = out.as_array().expect("one row per candidate");
    assert!(!rows.is_empty() && rows.len() <= 3);
}

#[test]
fn exit_codes_follow_failure_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(mashup(dir, &["validate", "missing"]).status.code(), Some(4));
    synth(dir);
    assert_eq!(mashup(dir, &["run", "archive", "music.json", "--window-step", "0"]).status.code(), Some(2));
    // a single shot per pool cannot fill a multi-slot segment
    let code = mashup(dir, &["run", "archive", "music.json", "--clusters", "2", "--top-k", "1", "--max-retries", "1"]).status.code();
    assert_eq!(code, Some(3));
}
