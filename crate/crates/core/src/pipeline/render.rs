use std::collections::BTreeMap;
use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EditDecisionList;
use crate::error::{Error, Result};

/// Media files behind an EDL: the audio track and one video per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaMap {
    pub music: PathBuf,
    pub sources: BTreeMap<u32, PathBuf>,
}

impl MediaMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

fn quote(p: &Path) -> String {
    format!("'{}'", p.to_string_lossy().replace('\'', r"'\''"))
}

/// POSIX shell script that cuts every entry with ffmpeg, concatenates the
/// cuts and lays the music under them. Short cuts are padded by repeating
/// their last frame so each lasts exactly its slot.
pub fn emit_render_commands(edl: &EditDecisionList, media: &MediaMap, output: &Path) -> Result<String> {
    let (t0, t1) = edl.span().ok_or_else(|| Error::InvalidInput("EDL has no entries".into()))?;
    let mut s = String::from("#!/bin/sh\nset -eu\nwork=$(mktemp -d)\ntrap 'rm -rf \"$work\"' EXIT\n");
    for (k, e) in edl.entries.iter().enumerate() {
        let src = media
            .sources
            .get(&e.source_id)
            .ok_or_else(|| Error::InvalidInput(format!("no media file for source {}", e.source_id)))?;
        let dur = e.timeline_end_s - e.timeline_start_s;
        writeln!(
            s,
            "ffmpeg -v error -y -i {} -vf 'trim=start_frame={}:end_frame={},setpts=PTS-STARTPTS,fps={},tpad=stop_mode=clone:stop=-1' -t {dur:.6} -an \"$work/cut{k:05}.mp4\"",
            quote(src),
            e.in_frame,
            e.out_frame,
            edl.fps,
        )
        .unwrap();
    }
    s.push_str("for f in \"$work\"/cut*.mp4; do printf \"file '%s'\\n\" \"$f\"; done > \"$work/list.txt\"\n");
    s.push_str("ffmpeg -v error -y -f concat -safe 0 -i \"$work/list.txt\" -c copy \"$work/video.mp4\"\n");
    writeln!(
        s,
        "ffmpeg -v error -y -i \"$work/video.mp4\" -ss {t0:.6} -t {:.6} -i {} -map 0:v -map 1:a -c:v copy -shortest {}",
        t1 - t0,
        quote(&media.music),
        quote(output)
    )
    .unwrap();
    Ok(s)
}
