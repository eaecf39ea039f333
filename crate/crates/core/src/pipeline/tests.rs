use super::*;
use crate::music::Intensity;
use crate::planner::SectionPlan;
use crate::synthbench::{
    gen_footage, gen_music, CaseSpec, ClusterBlueprint, EnvelopeShape, FootageBlueprint, MusicBlueprint, SaliencyPattern,
    SectionBlueprint,
};

fn three_section_music() -> MusicBlueprint {
    let sec = |name: &str, intensity, level| SectionBlueprint { name: name.into(), duration_s: 8.0, intensity, level };
    MusicBlueprint {
        duration_s: 24.0,
        sections: vec![
            sec("intro", Intensity::Low, 0.2),
            sec("verse", Intensity::Medium, 0.5),
            sec("chorus", Intensity::High, 0.9),
        ],
        ..Default::default()
    }
}

fn case(seed: u64) -> (FootageLibrary, MusicProfile) {
    let spec = CaseSpec { seed, footage: FootageBlueprint::default(), music: three_section_music(), planted: None };
    (gen_footage(&spec).unwrap().library, gen_music(&spec).unwrap())
}

fn config() -> EngineConfig {
    EngineConfig { clusters: Some(4), ..Default::default() }
}

fn run(lib: &FootageLibrary, profile: &MusicProfile, config: &EngineConfig) -> PipelineOutput {
    compose(lib, profile, config, Overrides::default(), &mut RuleBased).unwrap()
}

#[test]
fn pipeline_covers_every_beat_on_beat() {
    let (lib, profile) = case(1);
    let out = run(&lib, &profile, &config());
    let edl = &out.edl;
    edl.check_timeline(&profile).unwrap();
    let (t0, t1) = edl.span().unwrap();
    assert_eq!(t0, profile.beats[0]);
    assert_eq!(t1, *profile.beats.last().unwrap());
    let covered: f64 = edl.entries.iter().map(|e| e.timeline_end_s - e.timeline_start_s).sum();
    assert!((covered - (t1 - t0)).abs() < 1e-9);
    for m in out.report.means.iter().flatten() {
        assert!((0.0..=1.0).contains(m));
    }
    assert!(out.report.means[4].unwrap() >= 0.999);
    for e in &edl.entries {
        assert!(e.out_frame <= lib.source_frame_limit(e.source_id).unwrap());
        assert!(e.in_frame < e.out_frame);
    }
    let sections: Vec<&str> = edl.segments.iter().map(|s| s.section.as_str()).collect();
    assert_eq!(sections.first(), Some(&"intro"));
    assert_eq!(sections.last(), Some(&"chorus"));
}

#[test]
fn report_of_pipeline_edl_matches_its_own_report() {
    let (lib, profile) = case(2);
    let cfg = config();
    let out = run(&lib, &profile, &cfg);
    let again = report_edl(&lib, &profile, &out.edl, &out.edl.queries(), &cfg.metrics, &cfg.report_weights).unwrap();
    for (a, b) in out.report.means.iter().zip(&again.means) {
        assert_eq!(a.is_some(), b.is_some());
        if let (Some(a), Some(b)) = (a, b) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    assert!((out.report.composite - again.composite).abs() < 1e-9);
}

#[test]
fn identical_runs_serialize_identically() {
    let (lib, profile) = case(3);
    let a = run(&lib, &profile, &config());
    let b = run(&lib, &profile, &config());
    assert_eq!(a.edl.to_json(), b.edl.to_json());
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
    assert_eq!(a.log, b.log);
}

#[test]
fn plan_override_replaces_planning() {
    let (lib, profile) = case(4);
    let cfg = config();
    let keep = |name: &str, level: &str| SectionPlan {
        section_name: name.into(),
        energy_level: level.into(),
        keywords: vec!["cluster-3".into()],
        pinned: vec![],
        rationale: "fixed".into(),
    };
    let plan = StructuralPlan {
        narrative: "override".into(),
        sections: vec![keep("intro", "Low"), keep("verse", "Medium"), keep("chorus", "High")],
        unresolved_keywords: vec![],
    };
    let out = compose(&lib, &profile, &cfg, Overrides { plan: Some(plan.clone()), ..Default::default() }, &mut RuleBased).unwrap();
    assert_eq!(out.plan, plan);
    assert!(out.edl.segments.iter().filter(|s| s.attempts < 3).all(|s| s.query == "cluster-3"));
    assert!(out.log.events.iter().any(|e| e.message.contains("override")));

    let mut bad = plan;
    bad.sections[0].keywords = vec!["nowhere".into()];
    assert!(compose(&lib, &profile, &cfg, Overrides { plan: Some(bad), ..Default::default() }, &mut RuleBased).is_err());
}

#[test]
fn one_static_cluster_gives_neutral_energy_and_smooth_motion() {
    let spec = CaseSpec {
        seed: 5,
        footage: FootageBlueprint {
            clusters: vec![ClusterBlueprint { shots: 40, motion: 0.0, saliency: SaliencyPattern::Static, ..Default::default() }],
            ..Default::default()
        },
        music: MusicBlueprint {
            rms: crate::synthbench::EnvelopeBlueprint { shape: EnvelopeShape::Constant, ..Default::default() },
            ..three_section_music()
        },
        planted: None,
    };
    let lib = gen_footage(&spec).unwrap().library;
    let profile = gen_music(&spec).unwrap();
    let cfg = EngineConfig { clusters: Some(1), ..Default::default() };
    let out = run(&lib, &profile, &cfg);
    assert!((out.report.means[2].unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(out.report.means[5], Some(0.5));
}

#[test]
fn reordering_entries_keeps_relevance_only() {
    let (lib, profile) = case(6);
    let q = crate::summary::cluster_label(0);
    let query = vec![1.0 / (lib.embed_dim() as f64).sqrt(); lib.embed_dim()];
    let slots: Vec<(f64, f64)> = (0..4).map(|i| (5.0 + 2.0 * i as f64, 7.0 + 2.0 * i as f64)).collect();
    let windows: Vec<WindowView> = [0u32, 25, 50, 75]
        .iter()
        .map(|&id| lib.window(id, 0, crate::editor::window_len(&lib, 2.0)).unwrap())
        .collect();
    let mut edl = EditDecisionList {
        music: String::new(),
        fps: lib.fps(),
        entries: windows.iter().zip(&slots).map(|(w, &s)| entry_for(&lib, w, s, &q)).collect(),
        segments: vec![],
    };
    let queries: BTreeMap<String, Vec<f64>> = [(q.clone(), query)].into_iter().collect();
    let p = MetricParams::default();
    let w = MetricWeights::uniform();
    let base = report_edl(&lib, &profile, &edl, &queries, &p, &w).unwrap();

    let mut shuffled = edl.clone();
    let order = [2usize, 0, 3, 1];
    for (k, &src) in order.iter().enumerate() {
        let e = &edl.entries[src];
        shuffled.entries[k] = EdlEntry { timeline_start_s: slots[k].0, timeline_end_s: slots[k].1, ..e.clone() };
    }
    let other = report_edl(&lib, &profile, &shuffled, &queries, &p, &w).unwrap();
    assert!((base.means[0].unwrap() - other.means[0].unwrap()).abs() < 1e-12);
    for m in [1, 2, 3, 5] {
        assert_ne!(base.means[m], other.means[m], "metric {}", m + 1);
    }

    edl.entries.truncate(1);
    let single = report_edl(&lib, &profile, &edl, &queries, &p, &w).unwrap();
    assert_eq!(single.means[1..4], [None, None, None]);
    assert_eq!(single.means[5], None);
}

#[test]
fn entries_outside_shots_are_rejected() {
    let (lib, profile) = case(7);
    let w = lib.window(3, 0, crate::editor::window_len(&lib, 1.0)).unwrap();
    let e = entry_for(&lib, &w, (0.0, 1.0), "s0.g0");
    assert_eq!(resolve_entry(&lib, &e).unwrap(), w);
    let shot = lib.shot(3).unwrap();
    let off_grid = EdlEntry { in_frame: e.in_frame + 1, ..e.clone() };
    assert!(resolve_entry(&lib, &off_grid).is_err());
    let past = EdlEntry { in_frame: shot.end_frame + 100_000, out_frame: shot.end_frame + 100_010, ..e.clone() };
    assert!(resolve_entry(&lib, &past).is_err());
    let edl = EditDecisionList { music: String::new(), fps: lib.fps(), entries: vec![past], segments: vec![] };
    let q: BTreeMap<String, Vec<f64>> = [("s0.g0".to_string(), vec![1.0; lib.embed_dim()])].into_iter().collect();
    assert!(report_edl(&lib, &profile, &edl, &q, &MetricParams::default(), &MetricWeights::uniform()).is_err());
}

fn two_entry_edl() -> EditDecisionList {
    let entry = |source_id, in_frame, t0: f64| EdlEntry {
        source_id,
        in_frame,
        out_frame: in_frame + 12,
        timeline_start_s: t0,
        timeline_end_s: t0 + 0.5,
        shot_id: source_id,
        segment: "s0.g0".into(),
    };
    EditDecisionList { music: "track.json".into(), fps: 24.0, entries: vec![entry(0, 8, 0.5), entry(1, 40, 1.0)], segments: vec![] }
}

#[test]
fn render_script_has_cuts_concat_and_mux() {
    let media = MediaMap {
        music: "song's.wav".into(),
        sources: [(0, PathBuf::from("a.mp4")), (1, PathBuf::from("b c.mp4"))].into_iter().collect(),
    };
    let out = Path::new("out.mp4");
    let script = emit_render_commands(&two_entry_edl(), &media, out).unwrap();
    let ff: Vec<&str> = script.lines().filter(|l| l.starts_with("ffmpeg")).collect();
    assert_eq!(ff.len(), 4);
    assert!(ff[0].contains("trim=start_frame=8:end_frame=20"));
    assert!(ff[2].contains("-f concat"));
    assert!(ff[3].contains("-ss 0.500000 -t 1.000000") && ff[3].contains(r"'song'\''s.wav'"));
    assert_eq!(script, emit_render_commands(&two_entry_edl(), &media, out).unwrap());

    let empty = EditDecisionList { entries: vec![], ..two_entry_edl() };
    assert!(emit_render_commands(&empty, &media, out).is_err());
    let partial = MediaMap { sources: [(0, PathBuf::from("a.mp4"))].into_iter().collect(), ..media };
    assert!(emit_render_commands(&two_entry_edl(), &partial, out).is_err());
}

#[test]
fn config_fills_defaults_and_round_trips() {
    let c: EngineConfig = serde_json::from_str(r#"{"search": {"beam_width": null}, "planner": {"seed": 9}}"#).unwrap();
    assert_eq!(c.search.beam_width, None);
    assert_eq!(c.search.window_step, 4);
    assert_eq!(c.planner.seed, 9);
    assert_eq!(c.planner.top_k, 64);
    let back: EngineConfig = serde_json::from_str(&c.to_json()).unwrap();
    assert_eq!(back, c);
    let bad = EngineConfig { clusters: Some(0), ..Default::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn edl_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edl.json");
    let edl = two_entry_edl();
    edl.save(&path).unwrap();
    assert_eq!(EditDecisionList::load(&path).unwrap(), edl);
}

#[test]
fn long_slots_split_to_fit_the_footage() {
    let (lib, profile) = case(8);
    let longest = lib.shots().iter().map(|s| s.sample_count).max().unwrap();
    let pacing = PacingSpec { start_beat: 2, counts: vec![16, 2, 1] };
    let fitted = fit_pacing(&lib, &profile, &pacing).unwrap();
    assert_eq!(fitted.total_beats(), pacing.total_beats());
    assert_eq!(fitted.counts[fitted.counts.len() - 2..], [2, 1]);
    for (t0, t1) in profile.pacing_to_cuts(&fitted).unwrap() {
        assert!(crate::editor::window_len(&lib, t1 - t0) <= longest);
    }
    let short = PacingSpec { start_beat: 0, counts: vec![2, 2] };
    assert_eq!(fit_pacing(&lib, &profile, &short).unwrap(), short);
    assert!(fit_pacing(&lib, &profile, &PacingSpec { start_beat: 40, counts: vec![16] }).is_err());
}
