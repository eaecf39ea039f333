//! Music track structure: beats, sections with intensity, and an RMS energy
//! curve, plus the conversions from beat-count pacing into cut times.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TILE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub start_s: f64,
    pub end_s: f64,
    pub intensity: Intensity,
    /// Numeric intensity in `[0, 1]`, used to order sections.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsCurve {
    pub hop_s: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicProfile {
    pub duration_s: f64,
    pub beats: Vec<f64>,
    pub sections: Vec<Section>,
    pub rms: RmsCurve,
}

/// Per-slot beat counts starting at beat index `start_beat`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacingSpec {
    pub start_beat: usize,
    pub counts: Vec<u32>,
}

impl PacingSpec {
    pub fn total_beats(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }
}

impl MusicProfile {
    pub fn validate(&self) -> Result<()> {
        let d = self.duration_s;
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Profile(format!("duration_s must be positive, got {d}")));
        }
        for (i, b) in self.beats.iter().enumerate() {
            if !b.is_finite() || *b < 0.0 || *b > d + TILE_EPS {
                return Err(Error::Profile(format!("beat {i} at {b} s outside [0, {d}]")));
            }
        }
        if let Some(i) = self.beats.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Profile(format!(
                "beats not increasing at index {}: {} then {}",
                i + 1,
                self.beats[i],
                self.beats[i + 1]
            )));
        }

        if self.sections.is_empty() {
            return Err(Error::Profile("no sections".into()));
        }
        let mut cursor = 0.0;
        for s in &self.sections {
            if !(s.level.is_finite() && (0.0..=1.0).contains(&s.level)) {
                return Err(Error::Profile(format!("section '{}' level {} outside [0,1]", s.name, s.level)));
            }
            if s.start_s > cursor + TILE_EPS {
                return Err(Error::Profile(format!(
                    "section gap between {cursor} s and {} s before '{}'",
                    s.start_s, s.name
                )));
            }
            if s.start_s < cursor - TILE_EPS {
                return Err(Error::Profile(format!("section overlap at '{}' ({} s)", s.name, s.start_s)));
            }
            if s.end_s <= s.start_s {
                return Err(Error::Profile(format!("section '{}' is empty or reversed", s.name)));
            }
            cursor = s.end_s;
        }
        if (cursor - d).abs() > TILE_EPS {
            return Err(Error::Profile(format!(
                "sections end at {cursor} s but duration is {d} s"
            )));
        }

        let hop = self.rms.hop_s;
        if !(hop.is_finite() && hop > 0.0) {
            return Err(Error::Profile(format!("rms hop_s must be positive, got {hop}")));
        }
        let expected = (d / hop - 1e-9).ceil() as usize;
        if self.rms.values.len() != expected {
            return Err(Error::Profile(format!(
                "rms has {} values, expected ceil(duration/hop) = {expected}",
                self.rms.values.len()
            )));
        }
        if let Some(i) = self.rms.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Profile(format!("negative or non-finite rms value at index {i}")));
        }
        Ok(())
    }

    /// The beat closest to `t`, and the distance to it. Ties go to the earlier beat.
    pub fn nearest_beat(&self, t: f64) -> Result<(f64, f64)> {
        if self.beats.is_empty() {
            return Err(Error::InvalidInput("profile has no beats".into()));
        }
        if !(t >= -TILE_EPS && t <= self.duration_s + TILE_EPS) {
            return Err(Error::InvalidInput(format!(
                "time {t} outside [0, {}]",
                self.duration_s
            )));
        }
        Ok(nearest_in(&self.beats, t))
    }

    /// Converts per-slot beat counts into `(start, end)` times. Slots abut exactly
    /// and every boundary is a beat timestamp.
    pub fn pacing_to_cuts(&self, pacing: &PacingSpec) -> Result<Vec<(f64, f64)>> {
        if pacing.counts.is_empty() || pacing.counts.contains(&0) {
            return Err(Error::InvalidInput("pacing counts must be non-empty and ≥ 1".into()));
        }
        let needed = pacing.start_beat + pacing.total_beats();
        let last = self.beats.len().saturating_sub(1);
        if self.beats.is_empty() || needed > last {
            return Err(Error::InvalidInput(format!(
                "insufficient beats: pacing needs beat index {needed} but the last beat index is {last} (short by {})",
                needed.saturating_sub(last)
            )));
        }
        let mut cuts = Vec::with_capacity(pacing.counts.len());
        let mut c = pacing.start_beat;
        for &n in &pacing.counts {
            let next = c + n as usize;
            cuts.push((self.beats[c], self.beats[next]));
            c = next;
        }
        Ok(cuts)
    }

    /// RMS of the curve samples whose centers fall in `[t0, t1)`; linear
    /// interpolation at the midpoint when no sample center falls inside.
    pub fn rms_over(&self, t0: f64, t1: f64) -> Result<f64> {
        if !(t1 > t0) {
            return Err(Error::InvalidInput(format!("rms interval [{t0}, {t1}) is empty")));
        }
        let (sum_sq, count) = self.rms_moments(t0, t1);
        if count > 0 {
            return Ok((sum_sq / count as f64).sqrt());
        }
        Ok(self.rms_at(0.5 * (t0 + t1)))
    }

    /// Sum of squares and count of curve samples centered in `[t0, t1)`.
    pub fn rms_moments(&self, t0: f64, t1: f64) -> (f64, usize) {
        let hop = self.rms.hop_s;
        let vals = &self.rms.values;
        // centers at (i + 0.5)·hop
        let first = ((t0 / hop - 0.5).ceil().max(0.0)) as usize;
        let mut sum = 0.0;
        let mut count = 0;
        for (i, v) in vals.iter().enumerate().skip(first) {
            let c = (i as f64 + 0.5) * hop;
            if c < t0 {
                continue;
            }
            if c >= t1 {
                break;
            }
            sum += v * v;
            count += 1;
        }
        (sum, count)
    }

    /// Curve value at `t`, linearly interpolated between sample centers.
    pub fn rms_at(&self, t: f64) -> f64 {
        let vals = &self.rms.values;
        if vals.is_empty() {
            return 0.0;
        }
        let x = t / self.rms.hop_s - 0.5;
        if x <= 0.0 {
            return vals[0];
        }
        let i = x.floor() as usize;
        if i + 1 >= vals.len() {
            return vals[vals.len() - 1];
        }
        let f = x - i as f64;
        vals[i] * (1.0 - f) + vals[i + 1] * f
    }

    /// Index of the first beat at or after `t`.
    pub fn first_beat_at_or_after(&self, t: f64) -> usize {
        self.beats.partition_point(|&b| b < t - TILE_EPS)
    }

    /// Beat index range `[first, end)` whose slots belong to each section. The
    /// final section's range ends at the last beat (which closes the last slot).
    pub fn section_beat_ranges(&self) -> Vec<(usize, usize)> {
        let last = self.beats.len().saturating_sub(1);
        let starts: Vec<usize> = self
            .sections
            .iter()
            .map(|s| self.first_beat_at_or_after(s.start_s).min(last))
            .collect();
        (0..starts.len())
            .map(|i| {
                let end = if i + 1 < starts.len() { starts[i + 1] } else { last };
                (starts[i].min(end), end)
            })
            .collect()
    }
}

/// Nearest value in a sorted slice (earlier wins ties) and the distance to it.
pub(crate) fn nearest_in(sorted: &[f64], t: f64) -> (f64, f64) {
    let i = sorted.partition_point(|&b| b < t);
    let mut best = None::<(f64, f64)>;
    for j in [i.checked_sub(1), Some(i)].into_iter().flatten() {
        if let Some(&b) = sorted.get(j) {
            let d = (t - b).abs();
            match best {
                Some((_, bd)) if d >= bd => {}
                _ => best = Some((b, d)),
            }
        }
    }
    best.expect("non-empty slice")
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<MusicProfile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let profile: MusicProfile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    profile.validate()?;
    Ok(profile)
}

pub fn save_profile(profile: &MusicProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(profile).map_err(|e| Error::parse(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn metronome(period: f64, duration: f64) -> MusicProfile {
        let n = (duration / period).round() as usize;
        MusicProfile {
            duration_s: duration,
            beats: (0..=n).map(|i| i as f64 * period).filter(|&b| b <= duration).collect(),
            sections: vec![Section {
                name: "all".into(),
                start_s: 0.0,
                end_s: duration,
                intensity: Intensity::Medium,
                level: 0.5,
            }],
            rms: RmsCurve {
                hop_s: 1.0,
                values: vec![1.0; duration.ceil() as usize],
            },
        }
    }

    #[test]
    fn metronome_is_valid_and_round_trips() {
        let p = metronome(0.5, 10.0);
        p.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("music.json");
        save_profile(&p, &path).unwrap();
        assert_eq!(load_profile(&path).unwrap(), p);
    }

    #[test]
    fn rejects_bad_profiles() {
        let mut p = metronome(0.5, 20.0);
        p.beats = vec![0.5, 0.4];
        assert!(p.validate().unwrap_err().to_string().contains("beats not increasing"));

        let mut p = metronome(0.5, 20.0);
        p.sections = vec![
            Section { name: "a".into(), start_s: 0.0, end_s: 10.0, intensity: Intensity::Low, level: 0.1 },
            Section { name: "b".into(), start_s: 12.0, end_s: 20.0, intensity: Intensity::High, level: 0.9 },
        ];
        assert!(p.validate().unwrap_err().to_string().contains("section gap"));

        let mut p = metronome(0.5, 20.0);
        p.rms.values[3] = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn nearest_beat_cases() {
        let mut p = metronome(0.5, 1.0);
        assert_eq!(p.beats, vec![0.0, 0.5, 1.0]);
        let (b, d) = p.nearest_beat(0.6).unwrap();
        assert_eq!(b, 0.5);
        assert!((d - 0.1).abs() < 1e-12);
        assert_eq!(p.nearest_beat(0.5).unwrap(), (0.5, 0.0));
        p.beats = vec![0.0, 0.5];
        assert_eq!(p.nearest_beat(0.25).unwrap().0, 0.0);
        p.beats.clear();
        assert!(p.nearest_beat(0.2).is_err());
    }

    #[test]
    fn pacing_to_cuts_cases() {
        let p = metronome(0.5, 10.0);
        let cuts = p.pacing_to_cuts(&PacingSpec { start_beat: 0, counts: vec![2, 2] }).unwrap();
        assert_eq!(cuts, vec![(0.0, 1.0), (1.0, 2.0)]);

        let mut q = metronome(0.5, 2.0);
        q.beats = vec![0.0, 0.4, 1.0, 1.5];
        let cuts = q.pacing_to_cuts(&PacingSpec { start_beat: 0, counts: vec![1, 2] }).unwrap();
        assert_eq!(cuts, vec![(0.0, 0.4), (0.4, 1.5)]);

        let err = q.pacing_to_cuts(&PacingSpec { start_beat: 0, counts: vec![8] }).unwrap_err();
        assert!(err.to_string().contains("insufficient beats"));
    }

    #[test]
    fn rms_over_cases() {
        let mut p = metronome(0.5, 4.0);
        p.rms.values = vec![2.0; 4];
        assert!((p.rms_over(0.3, 3.1).unwrap() - 2.0).abs() < 1e-12);
        p.rms.values = vec![0.0, 0.0, 3.0, 3.0];
        assert!((p.rms_over(2.0, 4.0).unwrap() - 3.0).abs() < 1e-12);
        // no center in [1.6, 1.9): interpolate at 1.75 between centers 1.5 (0) and 2.5 (3)
        assert!((p.rms_over(1.6, 1.9).unwrap() - 0.75).abs() < 1e-12);
        assert!(p.rms_over(2.0, 2.0).is_err());
    }

    #[test]
    fn section_ranges_cover_all_slots() {
        let mut p = metronome(0.5, 10.0);
        p.sections = vec![
            Section { name: "a".into(), start_s: 0.0, end_s: 4.0, intensity: Intensity::Low, level: 0.1 },
            Section { name: "b".into(), start_s: 4.0, end_s: 10.0, intensity: Intensity::High, level: 0.9 },
        ];
        assert_eq!(p.section_beat_ranges(), vec![(0, 8), (8, 20)]);
    }
}
