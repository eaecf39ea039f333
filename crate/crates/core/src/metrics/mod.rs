//! The six explicit coherency metrics and the weighted composite objective.
//!
//! | metric | population | meaning |
//! |---|---|---|
//! | m1 | per shot | cosine of shot embedding to the query |
//! | m2 | per transition | cosine between consecutive shot embeddings |
//! | m3 | per transition | magnitude-aware motion continuity of boundary flows |
//! | m4 | per transition | `1 − W/√2` between boundary saliency distributions |
//! | m5 | per cut | beat proximity with a global offset search |
//! | m6 | per sequence | Spearman of motion vs. music energy, mapped to `[0,1]` |
//!
//! Signed values (negative cosines) are kept for ranking; reports clamp each
//! value into `[0, 1]`.

pub mod rank;
mod sequence;
pub mod transport;

use serde::{Deserialize, Serialize};

pub use sequence::{assemble_report, evaluate_sequence, signed_means, SequenceItem};
pub use transport::FramingSolver;

use crate::error::{Error, Result};
use crate::feature_store::FlowField;
use crate::music::nearest_in;

pub const METRIC_COUNT: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    /// Flow-magnitude similarity scale.
    pub tau: f64,
    /// Direction-confidence scale.
    pub gamma: f64,
    /// Beat-sync tolerance in seconds.
    pub sigma: f64,
    /// Global offset search half-range in seconds; 0 disables the search.
    pub offset_range: f64,
    pub offset_step: f64,
    pub ot_epsilon: f64,
    pub ot_max_iter: usize,
    pub ot_tol: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            tau: 1.0,
            gamma: 0.5,
            sigma: 0.1,
            offset_range: 0.5,
            offset_step: 0.01,
            ot_epsilon: 0.05,
            ot_max_iter: 200,
            ot_tol: 1e-6,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
            ("offset_step", self.offset_step),
            ("ot_epsilon", self.ot_epsilon),
            ("ot_tol", self.ot_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("metric param {name} must be positive, got {v}")));
            }
        }
        if !(self.offset_range.is_finite() && self.offset_range >= 0.0) {
            return Err(Error::InvalidInput("offset_range must be ≥ 0".into()));
        }
        if self.offset_range > 0.0 && self.offset_step > self.offset_range {
            return Err(Error::InvalidInput("offset_step must not exceed offset_range".into()));
        }
        if self.ot_max_iter == 0 {
            return Err(Error::InvalidInput("ot_max_iter must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Balancing weights `w1..w6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricWeights(pub [f64; METRIC_COUNT]);

impl MetricWeights {
    pub fn uniform() -> Self {
        Self([1.0 / 6.0; METRIC_COUNT])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        if self.0.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidInput("weights must not all be zero".into()));
        }
        Ok(())
    }

    pub fn get(&self, metric: usize) -> f64 {
        self.0[metric]
    }
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Clamp used for reported values.
pub fn report_value(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// m1: signed cosine between shot and query embeddings.
pub fn m1_prompt_relevance(shot: &[f64], query: &[f64]) -> Result<f64> {
    cosine(shot, query)
}

/// m2: signed cosine between consecutive shot embeddings.
pub fn m2_segment_consistency(prev: &[f64], cur: &[f64]) -> Result<f64> {
    cosine(prev, cur)
}

/// m3: interpolates magnitude similarity and direction similarity, trusting
/// direction only as far as both fields actually move.
pub fn m3_motion_continuity(f1: &FlowField<'_>, f2: &FlowField<'_>, params: &MetricParams) -> Result<f64> {
    if f1.height != f2.height || f1.width != f2.width || f1.data.len() != f2.data.len() {
        return Err(Error::InvalidInput(format!(
            "flow shape mismatch: {}×{} vs {}×{}",
            f1.height, f1.width, f2.height, f2.width
        )));
    }
    if f1.data.iter().chain(f2.data).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite flow value".into()));
    }
    Ok(m3_from_parts(
        f1.mean_magnitude(),
        f2.mean_magnitude(),
        flow_dot(f1, f2),
        flow_dot(f1, f1),
        flow_dot(f2, f2),
        params,
    ))
}

/// Dot product of two flow fields flattened to component vectors.
pub fn flow_dot(f1: &FlowField<'_>, f2: &FlowField<'_>) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let mut a = f1.data.chunks_exact(LANES);
    let mut b = f2.data.chunks_exact(LANES);
    for (x, y) in (&mut a).zip(&mut b) {
        for l in 0..LANES {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let tail: f64 = a.remainder().iter().zip(b.remainder()).map(|(&x, &y)| x as f64 * y as f64).sum();
    acc.iter().sum::<f64>() + tail
}

/// m3 from mean magnitudes `rho`, the component dot product and the squared
/// component norms of the two fields.
pub fn m3_from_parts(rho1: f64, rho2: f64, dot: f64, n1: f64, n2: f64, params: &MetricParams) -> f64 {
    let s_mag = params.tau / ((rho1 - rho2).abs() + params.tau);
    let s_dir = if n1 == 0.0 || n2 == 0.0 {
        0.5
    } else {
        ((dot / (n1.sqrt() * n2.sqrt())).clamp(-1.0, 1.0) + 1.0) / 2.0
    };
    let w_dir = (rho1 / (rho1 + params.gamma)) * (rho2 / (rho2 + params.gamma));
    (1.0 - w_dir) * s_mag + w_dir * s_dir
}

/// m4 for two probability grids of the given shape. Builds a solver per call;
/// hot paths should hold a [`FramingSolver`] instead.
pub fn m4_framing_consistency(p: &[f64], q: &[f64], grid: (usize, usize), params: &MetricParams) -> Result<f64> {
    FramingSolver::new(grid.0, grid.1, params)?.framing_consistency(p, q)
}

/// Per-cut sync score for a distance `dt` to the nearest beat: `exp(−Δt/(2σ²))`.
pub fn beat_sync_score(dt: f64, sigma: f64) -> f64 {
    (-dt / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSync {
    pub score: f64,
    /// Offset applied to all beats at the maximum.
    pub offset_s: f64,
    pub per_cut: Vec<f64>,
}

/// m5: mean per-cut score, maximized over a global beat offset. Zero offset
/// wins ties, then smaller magnitudes, then negative offsets.
pub fn m5_beat_cut_sync(cuts: &[f64], beats: &[f64], params: &MetricParams) -> Result<BeatSync> {
    if cuts.is_empty() {
        return Err(Error::InvalidInput("no cuts".into()));
    }
    if beats.is_empty() {
        return Err(Error::InvalidInput("profile has no beats".into()));
    }
    let steps = if params.offset_range > 0.0 {
        (params.offset_range / params.offset_step + 1e-9).floor() as i64
    } else {
        0
    };
    let eval = |offset: f64| -> Vec<f64> {
        cuts.iter()
            .map(|&t| beat_sync_score(nearest_in(beats, t - offset).1, params.sigma))
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mut best = BeatSync {
        per_cut: eval(0.0),
        score: 0.0,
        offset_s: 0.0,
    };
    best.score = mean(&best.per_cut);
    for k in 1..=steps {
        for signed in [-k, k] {
            let offset = signed as f64 * params.offset_step;
            let per_cut = eval(offset);
            let score = mean(&per_cut);
            if score > best.score {
                best = BeatSync { score, offset_s: offset, per_cut };
            }
        }
    }
    Ok(best)
}

/// m6: `(ρ + 1)/2` with ρ the tie-aware Spearman correlation between motion
/// intensities and music energies; 0.5 when either side is constant.
pub fn m6_energy_correspondence(flow_means: &[f64], rms_values: &[f64]) -> Result<f64> {
    if flow_means.len() != rms_values.len() {
        return Err(Error::InvalidInput("m6 sequences differ in length".into()));
    }
    if flow_means.len() < 2 {
        return Err(Error::InvalidInput("m6 needs at least 2 shots".into()));
    }
    let rho = rank::spearman(flow_means, rms_values).unwrap_or(0.0);
    Ok((rho + 1.0) / 2.0)
}

/// `Σ w_i · M_i` over the metrics that have a population.
pub fn composite_score(means: &[Option<f64>; METRIC_COUNT], weights: &MetricWeights) -> f64 {
    means
        .iter()
        .zip(weights.0.iter())
        .filter_map(|(m, w)| m.map(|m| w * m))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionScores {
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

/// Per-metric averages of a sequence plus the breakdowns they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `M1..M6` in `[0, 1]`; `None` when the population is empty.
    pub means: [Option<f64>; METRIC_COUNT],
    /// `means` × 100.
    pub scaled: [Option<f64>; METRIC_COUNT],
    /// Raw signed m1 per shot.
    pub per_shot_m1: Vec<f64>,
    /// Raw transition scores between consecutive shots.
    pub per_transition: Vec<TransitionScores>,
    /// m5 per cut at the selected offset.
    pub per_cut_m5: Vec<f64>,
    pub m5_offset_s: f64,
    pub m6_rho: Option<f64>,
    pub weights: MetricWeights,
    /// `Σ w_i · M_i` over reported means.
    pub composite: f64,
    /// `composite` divided by the weight mass of the metrics present.
    pub normalized_composite: f64,
    /// Composite over unclamped means, used to rank candidate sequences.
    pub ranking_score: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(data: &[f32]) -> FlowField<'_> {
        FlowField { height: 1, width: data.len() / 2, data }
    }

    #[test]
    fn cosine_cases() {
        assert!((m1_prompt_relevance(&[0.6, 0.8], &[0.6, 0.8]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m1_prompt_relevance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m1_prompt_relevance(&[h, h], &[1.0, 0.0]).unwrap() - h).abs() < 1e-12);
        assert!(m1_prompt_relevance(&[1.0], &[1.0, 0.0]).is_err());
        let (a, b) = ([0.3, 0.9, 0.1], [0.5, -0.2, 0.7]);
        assert_eq!(m2_segment_consistency(&a, &b).unwrap(), m2_segment_consistency(&b, &a).unwrap());
        assert_eq!(report_value(-0.4), 0.0);
    }

    #[test]
    fn m3_cases() {
        let p = MetricParams::default();
        let a = [1.0f32, 2.0, -0.5, 0.3];
        assert!((m3_motion_continuity(&field(&a), &field(&a), &p).unwrap() - 1.0).abs() < 1e-12);
        let z = [0.0f32; 4];
        assert_eq!(m3_motion_continuity(&field(&z), &field(&z), &p).unwrap(), 1.0);
        // uniform opposite fields with ρ = 2γ: w_dir = 4/9, s_mag = 1, s_dir = 0
        let v = (2.0 * p.gamma) as f32;
        let f1 = [v, 0.0, v, 0.0];
        let f2 = [-v, 0.0, -v, 0.0];
        let m = m3_motion_continuity(&field(&f1), &field(&f2), &p).unwrap();
        assert!((m - 5.0 / 9.0).abs() < 1e-9, "{m}");
        assert!(m3_motion_continuity(&field(&f1), &field(&[1.0, 1.0]), &p).is_err());
        assert!(m3_motion_continuity(&field(&[f32::NAN, 0.0]), &field(&[1.0, 1.0]), &p).is_err());
    }

    #[test]
    fn m5_cases() {
        let beats: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let p = MetricParams::default();
        assert_eq!(m5_beat_cut_sync(&[0.5, 1.0, 3.5], &beats, &p).unwrap().score, 1.0);

        let off = MetricParams { offset_range: 0.0, ..p.clone() };
        let dt = 2.0 * p.sigma * p.sigma;
        let s = m5_beat_cut_sync(&[1.0 + dt], &beats, &off).unwrap().score;
        assert!((s - (-1.0f64).exp()).abs() < 1e-9, "{s}");

        assert!(m5_beat_cut_sync(&[], &beats, &p).is_err());
    }

    #[test]
    fn m5_offset_search_recovers_shift() {
        let beats: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let shifted: Vec<f64> = beats.iter().map(|b| b + 0.3).collect();
        let cuts = [1.0, 2.5, 4.0];
        let p = MetricParams::default();
        let base = m5_beat_cut_sync(&cuts, &beats, &p).unwrap().score;
        let moved = m5_beat_cut_sync(&cuts, &shifted, &p).unwrap();
        let one_step = beat_sync_score(p.offset_step, p.sigma);
        assert!(moved.score >= base * one_step - 1e-12);
        // on a 0.5 s grid, a +0.3 s shift is undone by −0.3 s or equivalently +0.2 s
        let phase = (moved.offset_s + 0.3).rem_euclid(0.5);
        assert!(phase.min(0.5 - phase) < p.offset_step, "{}", moved.offset_s);
    }

    #[test]
    fn m6_cases() {
        assert_eq!(m6_energy_correspondence(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]).unwrap(), 1.0);
        assert_eq!(m6_energy_correspondence(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        let m = m6_energy_correspondence(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((m - 0.8).abs() < 1e-12);
        assert_eq!(m6_energy_correspondence(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]).unwrap(), 0.5);
        assert!(m6_energy_correspondence(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn composite_cases() {
        let ones = [Some(1.0); 6];
        assert!((composite_score(&ones, &MetricWeights::uniform()) - 1.0).abs() < 1e-12);
        assert_eq!(composite_score(&ones, &MetricWeights([0.0; 6])), 0.0);
        let means = [Some(0.1), Some(0.2), Some(0.3), Some(0.4), Some(0.5), Some(0.6)];
        let w = MetricWeights([0.6, 0.1, 0.05, 0.05, 0.1, 0.1]);
        let mut pm = means;
        let mut pw = w;
        pm.reverse();
        pw.0.reverse();
        assert!((composite_score(&means, &w) - composite_score(&pm, &pw)).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        MetricParams::default().validate().unwrap();
        assert!(MetricParams { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(MetricParams { offset_step: 1.0, ..Default::default() }.validate().is_err());
        assert!(MetricWeights([0.0; 6]).validate().is_err());
    }
}
