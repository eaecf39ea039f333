//! Exhaustive search used to verify the beam search on small instances.

use std::collections::HashMap;

use super::*;
use crate::metrics::{composite_score, m5_beat_cut_sync, m6_energy_correspondence, signed_means};

type Key = (u32, usize, usize);

fn key(w: &WindowView) -> Key {
    (w.shot_id, w.start, w.len)
}

/// Windows per slot, pool shots in ascending id order.
fn slot_windows(ctx: &SearchContext<'_>, pool: &ShotPool, config: &SearchConfig) -> Vec<Vec<WindowView>> {
    let mut ids: Vec<u32> = pool.ids().collect();
    ids.sort_unstable();
    ctx.cuts
        .iter()
        .map(|&(t0, t1)| {
            ids.iter()
                .flat_map(|&id| {
                    let i = ctx.lib.shot_index(id).expect("checked");
                    enumerate_windows(ctx.lib, i, t1 - t0, config.window_step, config.trimming)
                })
                .collect()
        })
        .collect()
}

/// Product over slots of the number of (shot, window) choices: an upper
/// bound on the sequences the oracle enumerates.
pub fn oracle_size(ctx: &SearchContext<'_>, pool: &ShotPool, config: &SearchConfig) -> u128 {
    slot_windows(ctx, pool, config)
        .iter()
        .fold(1u128, |acc, w| acc.saturating_mul(w.len() as u128))
}

struct Enumeration<'a> {
    ctx: &'a SearchContext<'a>,
    slots: Vec<Vec<WindowView>>,
    emb: HashMap<Key, Vec<f64>>,
    m1: HashMap<Key, f64>,
    flow: HashMap<Key, f64>,
    pairs: HashMap<(Key, Key), TransitionScores>,
    rms: Vec<f64>,
    sync: crate::metrics::BeatSync,
    best: Option<(f64, Vec<WindowView>)>,
}

/// Exact best sequence over every shot/window assignment that respects the
/// no-repeat rule. Ties go to the lexicographically smallest history.
pub fn brute_force_oracle(ctx: &SearchContext<'_>, pool: &ShotPool, config: &SearchConfig) -> Result<Candidate> {
    check_inputs(ctx, pool, config)?;
    let size = oracle_size(ctx, pool, config);
    if size > config.oracle_cap {
        return Err(Error::OracleCapExceeded { size, cap: config.oracle_cap });
    }
    let slots = slot_windows(ctx, pool, config);
    if let Some(k) = slots.iter().position(|s| s.is_empty()) {
        return Err(Error::PositionInfeasible { position: k });
    }
    let lib = ctx.lib;
    let mut e = Enumeration {
        ctx,
        emb: HashMap::new(),
        m1: HashMap::new(),
        flow: HashMap::new(),
        pairs: HashMap::new(),
        rms: ctx
            .cuts
            .iter()
            .map(|&(a, b)| ctx.profile.rms_over(a, b))
            .collect::<Result<_>>()?,
        sync: m5_beat_cut_sync(&ctx.cuts.iter().map(|c| c.0).collect::<Vec<_>>(), &ctx.profile.beats, ctx.params)?,
        best: None,
        slots,
    };
    for slot in &e.slots {
        for w in slot {
            if e.emb.contains_key(&key(w)) {
                continue;
            }
            let emb = lib.shot_embedding(w)?;
            e.m1.insert(key(w), cosine(&emb, ctx.query)?);
            e.flow.insert(key(w), lib.window_flow_magnitude(w));
            e.emb.insert(key(w), emb);
        }
    }
    let mut chosen = Vec::with_capacity(ctx.cuts.len());
    let mut transitions = Vec::with_capacity(ctx.cuts.len());
    e.descend(0, &mut chosen, &mut transitions)?;
    let (_, windows) = e.best.ok_or(Error::PositionInfeasible { position: 0 })?;
    let report = ctx.evaluate(&windows)?;
    Ok(Candidate { search_score: report.ranking_score, windows, report })
}

impl Enumeration<'_> {
    fn transition(&mut self, prev: &WindowView, cur: &WindowView) -> Result<TransitionScores> {
        let k = (key(prev), key(cur));
        if let Some(t) = self.pairs.get(&k) {
            return Ok(t.clone());
        }
        let lib = self.ctx.lib;
        let t = TransitionScores {
            m2: m2_segment_consistency(&self.emb[&k.0], &self.emb[&k.1])?,
            m3: m3_motion_continuity(
                &lib.boundary_flow(prev, Side::End)?,
                &lib.boundary_flow(cur, Side::Start)?,
                self.ctx.params,
            )?,
            m4: self.ctx.solver.framing_consistency(
                &lib.boundary_saliency(prev, Side::End)?,
                &lib.boundary_saliency(cur, Side::Start)?,
            )?,
        };
        self.pairs.insert(k, t.clone());
        Ok(t)
    }

    fn descend(
        &mut self,
        k: usize,
        chosen: &mut Vec<WindowView>,
        transitions: &mut Vec<TransitionScores>,
    ) -> Result<()> {
        if k == self.slots.len() {
            let m1: Vec<f64> = chosen.iter().map(|w| self.m1[&key(w)]).collect();
            let m6 = if chosen.len() >= 2 {
                let x: Vec<f64> = chosen.iter().map(|w| self.flow[&key(w)]).collect();
                Some(m6_energy_correspondence(&x, &self.rms)?)
            } else {
                None
            };
            let score = composite_score(&signed_means(&m1, transitions, self.sync.score, m6), self.ctx.weights);
            if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
                self.best = Some((score, chosen.clone()));
            }
            return Ok(());
        }
        for i in 0..self.slots[k].len() {
            let w = self.slots[k][i];
            if chosen.iter().any(|c| c.shot_id == w.shot_id) {
                continue;
            }
            if let Some(prev) = chosen.last().copied() {
                let t = self.transition(&prev, &w)?;
                transitions.push(t);
            }
            chosen.push(w);
            self.descend(k + 1, chosen, transitions)?;
            chosen.pop();
            if k > 0 {
                transitions.pop();
            }
        }
        Ok(())
    }
}
