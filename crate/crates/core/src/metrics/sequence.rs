use crate::error::Result;
use crate::feature_store::{FootageLibrary, Side, WindowView};
use crate::music::MusicProfile;

use super::*;

/// One placed sub-clip: its window, timeline slot, and the query it was
/// selected for.
#[derive(Debug, Clone, Copy)]
pub struct SequenceItem<'a> {
    pub window: WindowView,
    pub slot: (f64, f64),
    pub query: &'a [f64],
}

/// Recomputes all six metrics for a complete sequence from the raw features.
/// The cut of each item is the start of its slot.
pub fn evaluate_sequence(
    lib: &FootageLibrary,
    profile: &MusicProfile,
    solver: &FramingSolver,
    params: &MetricParams,
    weights: &MetricWeights,
    items: &[SequenceItem<'_>],
) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty sequence".into()));
    }
    let embeddings = items
        .iter()
        .map(|it| lib.shot_embedding(&it.window))
        .collect::<Result<Vec<_>>>()?;

    let per_shot_m1 = items
        .iter()
        .zip(&embeddings)
        .map(|(it, e)| m1_prompt_relevance(e, it.query))
        .collect::<Result<Vec<_>>>()?;

    let mut per_transition = Vec::with_capacity(items.len().saturating_sub(1));
    for k in 1..items.len() {
        let (prev, cur) = (&items[k - 1].window, &items[k].window);
        let m2 = m2_segment_consistency(&embeddings[k - 1], &embeddings[k])?;
        let m3 = m3_motion_continuity(
            &lib.boundary_flow(prev, Side::End)?,
            &lib.boundary_flow(cur, Side::Start)?,
            params,
        )?;
        let m4 = solver.framing_consistency(
            &lib.boundary_saliency(prev, Side::End)?,
            &lib.boundary_saliency(cur, Side::Start)?,
        )?;
        per_transition.push(TransitionScores { m2, m3, m4 });
    }

    let cuts: Vec<f64> = items.iter().map(|it| it.slot.0).collect();
    let sync = m5_beat_cut_sync(&cuts, &profile.beats, params)?;

    let (m6, m6_rho) = if items.len() >= 2 {
        let x: Vec<f64> = items.iter().map(|it| lib.window_flow_magnitude(&it.window)).collect();
        let y = items
            .iter()
            .map(|it| profile.rms_over(it.slot.0, it.slot.1))
            .collect::<Result<Vec<_>>>()?;
        (Some(m6_energy_correspondence(&x, &y)?), Some(rank::spearman(&x, &y).unwrap_or(0.0)))
    } else {
        (None, None)
    };

    Ok(assemble_report(per_shot_m1, per_transition, sync, m6, m6_rho, weights))
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Population means of the raw signed metric values.
pub fn signed_means(
    per_shot_m1: &[f64],
    per_transition: &[TransitionScores],
    m5: f64,
    m6: Option<f64>,
) -> [Option<f64>; METRIC_COUNT] {
    let tr = per_transition;
    [
        mean(per_shot_m1.iter().copied()),
        mean(tr.iter().map(|t| t.m2)),
        mean(tr.iter().map(|t| t.m3)),
        mean(tr.iter().map(|t| t.m4)),
        Some(m5),
        m6,
    ]
}

/// Builds a report from per-shot, per-transition and sequence-level values.
pub fn assemble_report(
    per_shot_m1: Vec<f64>,
    per_transition: Vec<TransitionScores>,
    sync: BeatSync,
    m6: Option<f64>,
    m6_rho: Option<f64>,
    weights: &MetricWeights,
) -> MetricReport {
    let tr = &per_transition;
    let signed = signed_means(&per_shot_m1, tr, sync.score, m6);
    let means = [
        mean(per_shot_m1.iter().map(|&v| report_value(v))),
        mean(tr.iter().map(|t| report_value(t.m2))),
        mean(tr.iter().map(|t| report_value(t.m3))),
        mean(tr.iter().map(|t| report_value(t.m4))),
        Some(report_value(sync.score)),
        m6.map(report_value),
    ];
    let composite = composite_score(&means, weights);
    let present_weight: f64 = means
        .iter()
        .zip(weights.0.iter())
        .filter_map(|(m, w)| m.map(|_| *w))
        .sum();
    let normalized_composite = if present_weight > 0.0 {
        composite / present_weight
    } else {
        0.0
    };

    MetricReport {
        means,
        scaled: means.map(|m| m.map(|v| v * 100.0)),
        per_shot_m1,
        per_transition,
        per_cut_m5: sync.per_cut,
        m5_offset_s: sync.offset_s,
        m6_rho,
        weights: *weights,
        composite,
        normalized_composite,
        ranking_score: composite_score(&signed, weights),
    }
}
