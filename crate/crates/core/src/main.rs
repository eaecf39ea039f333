use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mashup_core::editor::{beam_search, build_pool, SearchContext};
use mashup_core::feature_store::load_archive;
use mashup_core::metrics::FramingSolver;
use mashup_core::music::load_profile;
use mashup_core::pipeline::{
    emit_render_commands, load_captions, report_edl, run_pipeline, summarize, EditDecisionList, EngineConfig, MediaMap,
};
use mashup_core::planner::{build_plan, Lexicon, SegmentGuidance};
use mashup_core::synthbench::{gen_archive, gen_planted_case, gen_profile, CaseSpec};
use mashup_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mashup", version, about = "Music-synchronized shot sequence composer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Engine configuration flags. Each one overrides the config file value.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Engine configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Planner seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    cluster_seed: Option<u64>,
    /// Beam width; 0 keeps every partial sequence.
    #[arg(long)]
    beam_width: Option<usize>,
    /// Distance between window starts, in frames.
    #[arg(long)]
    window_step: Option<u32>,
    /// Pin every window to its shot start.
    #[arg(long)]
    no_trimming: bool,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    min_similarity: Option<f64>,
    #[arg(long)]
    theta_rel: Option<f64>,
    #[arg(long)]
    theta_score: Option<f64>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    repeat_window: Option<usize>,
    /// Keywords to pin onto sections, comma separated.
    #[arg(long, value_delimiter = ',')]
    keywords: Vec<String>,
    /// External planning agent program.
    #[arg(long)]
    agent: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<EngineConfig> {
        let mut c = match &self.config {
            Some(p) => EngineConfig::load(p)?,
            None => EngineConfig::default(),
        };
        let p = &mut c.planner;
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.top_k {
            p.top_k = v;
        }
        if let Some(v) = self.min_similarity {
            p.min_similarity = v;
        }
        if let Some(v) = self.theta_rel {
            p.theta_rel = v;
        }
        if let Some(v) = self.theta_score {
            p.theta_score = v;
        }
        if let Some(v) = self.max_retries {
            p.max_retries = v;
        }
        if let Some(v) = self.repeat_window {
            p.repeat_window = v;
        }
        if let Some(v) = self.clusters {
            c.clusters = Some(v);
        }
        if let Some(v) = self.cluster_seed {
            c.cluster_seed = v;
        }
        if let Some(v) = self.beam_width {
            c.search.beam_width = (v > 0).then_some(v);
        }
        if let Some(v) = self.window_step {
            c.search.window_step = v;
        }
        if self.no_trimming {
            c.search.trimming = false;
        }
        if !self.keywords.is_empty() {
            c.keywords = self.keywords.clone();
        }
        if let Some(program) = &self.agent {
            c.agent = Some(mashup_core::pipeline::AgentCommand { program: program.clone(), args: Vec::new() });
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and check an archive, and optionally a music profile.
    Validate {
        archive: PathBuf,
        #[arg(long)]
        music: Option<PathBuf>,
    },
    /// Cluster an archive and print the footage summary.
    Cluster {
        archive: PathBuf,
        /// Cluster captions as a JSON map from cluster index to text.
        #[arg(long)]
        captions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Build and print the section-level plan.
    Plan {
        archive: PathBuf,
        music: PathBuf,
        #[arg(long)]
        captions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Search one segment from a guidance file and print its candidates.
    Edit {
        archive: PathBuf,
        music: PathBuf,
        guidance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the whole pipeline and write the EDL, report and run log.
    Run {
        archive: Option<PathBuf>,
        music: Option<PathBuf>,
        /// Structural plan to use instead of planning.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        captions: Option<PathBuf>,
        #[arg(long, default_value = "edl.json")]
        edl: PathBuf,
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Recompute the metric report of an EDL.
    Report {
        edl: PathBuf,
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        music: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print a shell script that renders an EDL with ffmpeg.
    RenderCmd {
        edl: PathBuf,
        /// JSON file with `music` and `sources` (source id to video path).
        #[arg(long)]
        media: PathBuf,
        #[arg(long, default_value = "mashup.mp4")]
        output: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic archive and music profile from a case spec.
    Synth {
        case_spec: PathBuf,
        /// Output directory; receives `archive/`, `music.json` and, for
        /// planted cases, `planted.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io { path: p.to_path_buf(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { archive, music } => {
            let lib = load_archive(&archive)?;
            let samples: usize = lib.shots().iter().map(|s| s.sample_count).sum();
            println!(
                "archive ok: {} shots, {} sources, {samples} samples, D={}, fps={}, stride={}",
                lib.shots().len(),
                lib.sources().len(),
                lib.embed_dim(),
                lib.fps(),
                lib.stride()
            );
            if let Some(m) = music {
                let p = load_profile(&m)?;
                println!("music ok: {:.3} s, {} beats, {} sections", p.duration_s, p.beats.len(), p.sections.len());
            }
            Ok(())
        }
        Command::Cluster { archive, captions, out, config } => {
            let c = config.resolve()?;
            let lib = load_archive(&archive)?;
            let captions = captions.map(load_captions).transpose()?;
            write_or_print(out.as_deref(), &json(&summarize(&lib, &c, captions.as_ref())?))
        }
        Command::Plan { archive, music, captions, out, config } => {
            let c = config.resolve()?;
            let lib = load_archive(&archive)?;
            let profile = load_profile(&music)?;
            let captions = captions.map(load_captions).transpose()?;
            let summary = summarize(&lib, &c, captions.as_ref())?;
            let plan = build_plan(&Lexicon::new(&summary, lib.named_text_embeddings()), &profile, &c.keywords)?;
            write_or_print(out.as_deref(), &json(&plan))
        }
        Command::Edit { archive, music, guidance, out, config } => {
            let c = config.resolve()?;
            let lib = load_archive(&archive)?;
            let profile = load_profile(&music)?;
            let g: SegmentGuidance = read_json(&guidance)?;
            g.validate()?;
            let cuts = profile.pacing_to_cuts(&g.pacing)?;
            let [rows, cols] = lib.saliency_grid();
            let solver = FramingSolver::new(rows, cols, &c.metrics)?;
            let pool = build_pool(&lib, &g.query.vector, g.pool.top_k, g.pool.min_similarity)?;
            let ctx = SearchContext {
                lib: &lib,
                profile: &profile,
                solver: &solver,
                params: &c.metrics,
                weights: &g.weights,
                query: &g.query.vector,
                cuts: &cuts,
            };
            let cands = beam_search(&ctx, &pool, &c.search)?;
            let rows: Vec<serde_json::Value> = cands
                .iter()
                .map(|cand| {
                    serde_json::json!({
                        "shots": cand.windows.iter().zip(&cuts).map(|(w, s)| {
                            let (first, last) = lib.window_frames(w);
                            serde_json::json!({
                                "shot_id": w.shot_id, "sample_start": w.start, "sample_len": w.len,
                                "first_frame": first, "last_frame": last,
                                "timeline_start_s": s.0, "timeline_end_s": s.1,
                            })
                        }).collect::<Vec<_>>(),
                        "search_score": cand.search_score,
                        "report": cand.report,
                    })
                })
                .collect();
            write_or_print(out.as_deref(), &json(&rows))
        }
        Command::Run { archive, music, plan, captions, edl, report, log, config } => {
            let c = config.resolve()?;
            let out = run_pipeline(archive.as_deref(), music.as_deref(), &c, plan.as_deref(), captions.as_deref())?;
            for w in out.log.warnings() {
                eprintln!("warning: {}{}", w.segment.as_deref().map(|s| format!("{s}: ")).unwrap_or_default(), w.message);
            }
            out.edl.save(&edl)?;
            write_or_print(Some(&report), &json(&out.report))?;
            if let Some(l) = log {
                write_or_print(Some(&l), &out.log.to_ndjson())?;
            }
            println!(
                "{} entries in {} segments, composite {:.4}",
                out.edl.entries.len(),
                out.edl.segments.len(),
                out.report.composite
            );
            Ok(())
        }
        Command::Report { edl, archive, music, out, config } => {
            let c = config.resolve()?;
            let lib = load_archive(&archive)?;
            let profile = load_profile(&music)?;
            let edl = EditDecisionList::load(&edl)?;
            let report = report_edl(&lib, &profile, &edl, &edl.queries(), &c.metrics, &c.report_weights)?;
            write_or_print(out.as_deref(), &json(&report))
        }
        Command::RenderCmd { edl, media, output, out } => {
            let edl = EditDecisionList::load(&edl)?;
            let media = MediaMap::load(&media)?;
            write_or_print(out.as_deref(), &emit_render_commands(&edl, &media, &output)?)
        }
        Command::Synth { case_spec, out } => {
            let spec: CaseSpec = read_json(&case_spec)?;
            fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            if spec.planted.is_some() {
                let case = gen_planted_case(&spec)?;
                mashup_core::feature_store::save_archive(&case.library, out.join("archive"))?;
                mashup_core::music::save_profile(&case.profile, out.join("music.json"))?;
                let planted = serde_json::json!({
                    "query": case.query, "pacing": case.pacing, "expected": case.expected, "window_len": case.window_len,
                });
                write_or_print(Some(&out.join("planted.json")), &json(&planted))?;
            } else {
                gen_archive(&spec, out.join("archive"))?;
                gen_profile(&spec, out.join("music.json"))?;
            }
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
