//! Beam search over (shot, window) choices per pacing slot.
//!
//! The framing term needs an entropic transport solve per transition, which
//! dominates the cost of an expansion. Each candidate first gets a cheap upper
//! bound on its score from saliency centroids; exact solves run only for
//! candidates whose bound can still reach the current top-B, so the pruned
//! search keeps the same survivors as the exhaustive one.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rayon::prelude::*;

use super::*;
use crate::metrics::transport::framing_from_distance;
use crate::metrics::{flow_dot, m3_from_parts};

/// Extra slack on the transport lower bound covering solver inexactness.
const BOUND_MARGIN: f64 = 1e-3;

struct WinInfo {
    window: WindowView,
    emb: Arc<Vec<f64>>,
    m1: f64,
    flow_mag: f64,
    start_rec: usize,
    start_rho: f64,
    start_norm: f64,
    end_rec: usize,
    start_sample: usize,
    end_sample: usize,
}

struct Frame {
    dist: Vec<f64>,
    centroid: (f64, f64),
    self_bound: f64,
}

struct Partial {
    windows: Vec<WindowView>,
    used: Vec<u32>,
    sums: RunningSums,
    score: f64,
    last_emb: Arc<Vec<f64>>,
    end_rec: usize,
    end_sample: usize,
}

struct Cand {
    beam: usize,
    win: usize,
    /// Boundary saliency samples of the transition, previous then next.
    pair: (usize, usize),
    sums: RunningSums,
    ub: f64,
}

struct Search<'a> {
    ctx: &'a SearchContext<'a>,
    config: &'a SearchConfig,
    pool_shots: Vec<usize>,
    rho: HashMap<usize, f64>,
    norm: HashMap<usize, f64>,
    proxy: EnergyProxy,
    windows: HashMap<usize, Vec<WinInfo>>,
    frames: HashMap<usize, Arc<Frame>>,
    self_cost: HashMap<usize, f64>,
    cross: HashMap<(usize, usize), f64>,
}

/// Beam search returning up to `beam_width` complete sequences, best first,
/// ranked by their exact reports.
pub fn beam_search(ctx: &SearchContext<'_>, pool: &ShotPool, config: &SearchConfig) -> Result<Vec<Candidate>> {
    run(ctx, pool, config, true)
}

/// Same search with every candidate scored exactly. Slower; used to check
/// that pruning never changes the result.
pub fn beam_search_unpruned(ctx: &SearchContext<'_>, pool: &ShotPool, config: &SearchConfig) -> Result<Vec<Candidate>> {
    run(ctx, pool, config, false)
}

fn run(ctx: &SearchContext<'_>, pool: &ShotPool, config: &SearchConfig, prune: bool) -> Result<Vec<Candidate>> {
    check_inputs(ctx, pool, config)?;
    let mut s = Search::new(ctx, config, pool)?;
    let width = config.width();
    let mut beams: Vec<Partial> = Vec::new();
    for k in 0..ctx.cuts.len() {
        beams = s.step(k, &beams, width, prune)?;
    }
    let mut out = beams
        .into_iter()
        .map(|b| {
            let report = ctx.evaluate(&b.windows)?;
            Ok(Candidate { windows: b.windows, search_score: b.score, report })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| rank_order(a.score(), &a.windows, b.score(), &b.windows));
    Ok(out)
}

impl<'a> Search<'a> {
    fn new(ctx: &'a SearchContext<'a>, config: &'a SearchConfig, pool: &ShotPool) -> Result<Self> {
        let lib = ctx.lib;
        let pool_shots: Vec<usize> = pool.ids().map(|id| lib.shot_index(id).expect("checked")).collect();
        let per_shot: Vec<Vec<(usize, f64, f64)>> = pool_shots
            .par_iter()
            .map(|&i| {
                let shot = &lib.shots()[i];
                (shot.flow_offset()..shot.flow_offset() + shot.sample_count - 1)
                    .map(|r| {
                        let f = lib.flow_record(r);
                        (r, f.mean_magnitude(), flow_dot(&f, &f))
                    })
                    .collect()
            })
            .collect();
        let mut rho = HashMap::new();
        let mut norm = HashMap::new();
        let mut full_mags = Vec::with_capacity(pool_shots.len());
        for recs in &per_shot {
            full_mags.push(recs.iter().map(|r| r.1).sum::<f64>() / recs.len() as f64);
            for &(r, m, n) in recs {
                rho.insert(r, m);
                norm.insert(r, n);
            }
        }
        let proxy = EnergyProxy::from_magnitudes(full_mags, ctx.profile);
        Ok(Self {
            ctx,
            config,
            pool_shots,
            rho,
            norm,
            proxy,
            windows: HashMap::new(),
            frames: HashMap::new(),
            self_cost: HashMap::new(),
            cross: HashMap::new(),
        })
    }

    fn ensure_windows(&mut self, duration: f64) -> Result<usize> {
        let lib = self.ctx.lib;
        let len = window_len(lib, duration);
        if self.windows.contains_key(&len) {
            return Ok(len);
        }
        let views: Vec<WindowView> = self
            .pool_shots
            .iter()
            .flat_map(|&i| enumerate_windows(lib, i, duration, self.config.window_step, self.config.trimming))
            .collect();
        let rho = &self.rho;
        let norm = &self.norm;
        let query = self.ctx.query;
        let infos = views
            .par_iter()
            .map(|w| {
                let emb = lib.shot_embedding(w)?;
                let start_rec = lib.boundary_flow_index(w, Side::Start)?;
                let end_rec = lib.boundary_flow_index(w, Side::End)?;
                let flow_mag = (start_rec..start_rec + w.len - 1).map(|r| rho[&r]).sum::<f64>() / (w.len - 1) as f64;
                Ok(WinInfo {
                    window: *w,
                    m1: cosine(&emb, query)?,
                    emb: Arc::new(emb),
                    flow_mag,
                    start_rec,
                    start_rho: rho[&start_rec],
                    start_norm: norm[&start_rec],
                    end_rec,
                    start_sample: lib.boundary_sample_index(w, Side::Start),
                    end_sample: lib.boundary_sample_index(w, Side::End),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.windows.insert(len, infos);
        Ok(len)
    }

    fn ensure_frames(&mut self, samples: impl IntoIterator<Item = usize>) -> Result<()> {
        let missing: BTreeSet<usize> = samples.into_iter().filter(|g| !self.frames.contains_key(g)).collect();
        let lib = self.ctx.lib;
        let solver = self.ctx.solver;
        let built = missing
            .into_par_iter()
            .map(|g| {
                let dist = lib.saliency_distribution(g).ok_or_else(|| {
                    let shot = lib.shots().iter().find(|s| g < s.sample_offset() + s.sample_count).expect("sample in library");
                    Error::EmptySaliency { shot_id: shot.shot_id, sample: g - shot.sample_offset() }
                })?;
                let frame = Frame { centroid: solver.centroid(&dist), self_bound: solver.self_cost_bound(&dist), dist };
                Ok((g, Arc::new(frame)))
            })
            .collect::<Result<Vec<_>>>()?;
        self.frames.extend(built);
        Ok(())
    }

    /// Solves missing self costs. Results do not depend on batching.
    fn ensure_selfs(&mut self, samples: impl IntoIterator<Item = usize>) -> Result<()> {
        let jobs: Vec<usize> = samples
            .into_iter()
            .filter(|g| !self.self_cost.contains_key(g))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let solver = self.ctx.solver;
        let frames = &self.frames;
        let solved = jobs
            .par_chunks(batch_len(jobs.len()))
            .flat_map_iter(|batch| {
                let dists: Vec<&[f64]> = batch.iter().map(|g| frames[g].dist.as_slice()).collect();
                solver.self_costs(&dists)
            })
            .collect::<Result<Vec<f64>>>()?;
        self.self_cost.extend(jobs.into_iter().zip(solved));
        Ok(())
    }

    /// Solves missing cross costs.
    fn ensure_cross(&mut self, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<()> {
        let jobs: Vec<(usize, usize)> = pairs
            .into_iter()
            .filter(|k| !self.cross.contains_key(k))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let solver = self.ctx.solver;
        let frames = &self.frames;
        let solved = jobs
            .par_chunks(batch_len(jobs.len()))
            .flat_map_iter(|batch| {
                let pairs: Vec<(&[f64], &[f64])> =
                    batch.iter().map(|(p, q)| (frames[p].dist.as_slice(), frames[q].dist.as_slice())).collect();
                solver.plan_costs(&pairs)
            })
            .collect::<Result<Vec<f64>>>()?;
        self.cross.extend(jobs.into_iter().zip(solved));
        Ok(())
    }

    fn step(&mut self, k: usize, beams: &[Partial], width: usize, prune: bool) -> Result<Vec<Partial>> {
        let ctx = self.ctx;
        let slot = ctx.cuts[k];
        let len = self.ensure_windows(slot.1 - slot.0)?;
        let m5 = cut_sync(ctx.profile, ctx.params, slot.0)?;
        let level = self.proxy.slot_level(ctx.profile, slot)?;

        if k == 0 {
            let infos = &self.windows[&len];
            let mut cands: Vec<Cand> = infos
                .iter()
                .enumerate()
                .map(|(wi, w)| {
                    let sums = RunningSums::default().add(&Gain {
                        m1: w.m1,
                        m5,
                        m6_proxy: self.proxy.score(w.flow_mag, level),
                        transition: None,
                    });
                    Cand { beam: 0, win: wi, pair: (0, 0), ub: sums.score(ctx.weights), sums }
                })
                .collect();
            if cands.is_empty() {
                return Err(Error::PositionInfeasible { position: k });
            }
            cands.sort_by(|a, b| self.cand_order(beams, len, a, a.ub, b, b.ub));
            cands.truncate(width);
            return Ok(self.advance(beams, len, cands, None));
        }

        self.ensure_frames(beams.iter().map(|b| b.end_sample))?;
        let starts: Vec<usize> = self.windows[&len].iter().map(|w| w.start_sample).collect();
        self.ensure_frames(starts)?;
        self.ensure_selfs(beams.iter().map(|b| b.end_sample))?;

        let lib = ctx.lib;
        let params = ctx.params;
        let slack = ctx.solver.bound_slack() + BOUND_MARGIN;
        let infos = &self.windows[&len];
        let mut cands: Vec<Cand> = Vec::new();
        for (bi, b) in beams.iter().enumerate() {
            let pf = &self.frames[&b.end_sample];
            let sp = self.self_cost[&b.end_sample];
            let end_flow = lib.flow_record(b.end_rec);
            let (rho_p, norm_p) = (self.rho[&b.end_rec], self.norm[&b.end_rec]);
            let built: Vec<Cand> = infos
                .par_iter()
                .enumerate()
                .filter(|(_, w)| !b.used.contains(&w.window.shot_id))
                .map(|(wi, w)| {
                    let m2 = m2_segment_consistency(&b.last_emb, &w.emb)?;
                    let start_flow = lib.flow_record(w.start_rec);
                    let m3 = m3_from_parts(
                        rho_p,
                        w.start_rho,
                        flow_dot(&end_flow, &start_flow),
                        norm_p,
                        w.start_norm,
                        params,
                    );
                    let sums = b.sums.add(&Gain {
                        m1: w.m1,
                        m5,
                        m6_proxy: self.proxy.score(w.flow_mag, level),
                        transition: Some(TransitionScores { m2, m3, m4: 0.0 }),
                    });
                    let qf = &self.frames[&w.start_sample];
                    let d_low = centroid_gap(pf, qf) - slack - 0.5 * sp - 0.5 * qf.self_bound;
                    let ub = with_m4(&sums, framing_from_distance(d_low)).score(ctx.weights);
                    Ok(Cand { beam: bi, win: wi, pair: (b.end_sample, w.start_sample), sums, ub })
                })
                .collect::<Result<Vec<_>>>()?;
            cands.extend(built);
        }
        if cands.is_empty() {
            return Err(Error::PositionInfeasible { position: k });
        }

        let mut order: Vec<usize> = (0..cands.len()).collect();
        if prune {
            order.sort_by(|&a, &b| cands[b].ub.total_cmp(&cands[a].ub).then(a.cmp(&b)));
        }
        let chunk = if prune { (rayon::current_num_threads() * 8).max(16) } else { usize::MAX };
        // (candidate, exact score) sorted best first, at most `width` long
        let mut top: Vec<(usize, f64)> = Vec::new();
        let mut pos = 0;
        while pos < order.len() {
            let threshold = if prune && top.len() == width { top[width - 1].1 } else { f64::NEG_INFINITY };
            if cands[order[pos]].ub < threshold {
                break;
            }
            let end = pos.saturating_add(chunk).min(order.len());
            let live: Vec<usize> = order[pos..end].iter().copied().filter(|&c| cands[c].ub >= threshold).collect();
            pos = end;
            let keys: Vec<(usize, usize)> = live.iter().map(|&c| cands[c].pair).collect();
            self.ensure_selfs(keys.iter().map(|k| k.1))?;
            // exact self costs tighten the bound before the cross solves
            if prune {
                for (&c, &(p, q)) in live.iter().zip(&keys) {
                    let d_low = self.gap(p, q) - slack - 0.5 * (self.self_cost[&p] + self.self_cost[&q]);
                    cands[c].ub = cands[c].ub.min(with_m4(&cands[c].sums, framing_from_distance(d_low)).score(ctx.weights));
                }
            }
            let live: Vec<usize> = live.into_iter().filter(|&c| cands[c].ub >= threshold).collect();
            self.ensure_cross(live.iter().map(|&c| cands[c].pair))?;
            for c in live {
                let (p, q) = cands[c].pair;
                let d = FramingSolver::debiased_from_parts(self.cross[&(p, q)], self.self_cost[&p], self.self_cost[&q]);
                let exact = with_m4(&cands[c].sums, framing_from_distance(d));
                cands[c].sums = exact;
                let score = exact.score(ctx.weights);
                let at = top.partition_point(|&(o, s)| {
                    self.cand_order(beams, len, &cands[o], s, &cands[c], score) == Ordering::Less
                });
                if at < width {
                    top.insert(at, (c, score));
                    top.truncate(width);
                }
            }
        }
        let chosen: Vec<Cand> = top
            .into_iter()
            .map(|(c, score)| Cand { ub: score, ..cands[c] })
            .collect();
        Ok(self.advance(beams, len, chosen, Some(())))
    }

    fn gap(&self, p: usize, q: usize) -> f64 {
        centroid_gap(&self.frames[&p], &self.frames[&q])
    }

    /// Orders candidates by score (best first), then by history.
    fn cand_order(&self, beams: &[Partial], len: usize, a: &Cand, sa: f64, b: &Cand, sb: f64) -> Ordering {
        let infos = &self.windows[&len];
        sb.total_cmp(&sa).then_with(|| {
            let ha = beams.get(a.beam).map(|p| p.windows.as_slice()).unwrap_or(&[]);
            let hb = beams.get(b.beam).map(|p| p.windows.as_slice()).unwrap_or(&[]);
            let key = |h: &[WindowView], w: &WindowView| {
                h.iter().chain(std::iter::once(w)).map(|v| (v.shot_id, v.start)).collect::<Vec<_>>()
            };
            key(ha, &infos[a.win].window).cmp(&key(hb, &infos[b.win].window))
        })
    }

    /// Turns selected candidates (scores in `ub`) into the next beams.
    fn advance(&self, beams: &[Partial], len: usize, chosen: Vec<Cand>, has_prev: Option<()>) -> Vec<Partial> {
        let infos = &self.windows[&len];
        chosen
            .into_iter()
            .map(|c| {
                let w = &infos[c.win];
                let (mut windows, mut used) = match has_prev {
                    Some(()) => (beams[c.beam].windows.clone(), beams[c.beam].used.clone()),
                    None => (Vec::new(), Vec::new()),
                };
                windows.push(w.window);
                used.push(w.window.shot_id);
                Partial {
                    windows,
                    used,
                    sums: c.sums,
                    score: c.ub,
                    last_emb: w.emb.clone(),
                    end_rec: w.end_rec,
                    end_sample: w.end_sample,
                }
            })
            .collect()
    }
}

fn centroid_gap(p: &Frame, q: &Frame) -> f64 {
    (p.centroid.0 - q.centroid.0).hypot(p.centroid.1 - q.centroid.1)
}

/// Problems per solver call: one batch per worker thread.
fn batch_len(jobs: usize) -> usize {
    jobs.div_ceil(rayon::current_num_threads()).max(1)
}

fn with_m4(sums: &RunningSums, m4: f64) -> RunningSums {
    let mut s = *sums;
    s.sums[3] += m4;
    s
}
