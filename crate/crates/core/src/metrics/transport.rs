//! Entropic optimal transport between saliency grids.
//!
//! Cells sit on the unit square at `(r/(H−1), c/(W−1))`, so the grid's
//! opposite corners are exactly `√2` apart. The Gibbs kernel is precomputed
//! once per grid; each solve runs kernel-domain Sinkhorn scaling and returns
//! the transport cost `⟨P, C⟩` of the resulting plan.

use crate::error::{Error, Result};

use super::MetricParams;

pub const UNIT_SQUARE_DIAGONAL: f64 = std::f64::consts::SQRT_2;

/// Tolerance on the total mass of an input distribution.
const MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FramingSolver {
    rows: usize,
    cols: usize,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
    coords: Vec<(f64, f64)>,
    kernel: Vec<f64>,
    kernel_cost: Vec<f64>,
}

impl FramingSolver {
    pub fn new(rows: usize, cols: usize, params: &MetricParams) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("transport grid must be non-empty".into()));
        }
        let axis = |i: usize, n: usize| if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
        let coords: Vec<(f64, f64)> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (axis(r, rows), axis(c, cols))))
            .collect();
        let n = coords.len();
        let mut kernel = vec![0.0; n * n];
        let mut kernel_cost = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let c = cell_distance(coords[i], coords[j]);
                let k = (-c / params.ot_epsilon).exp();
                if k == 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "ot_epsilon {} underflows the transport kernel; increase it",
                        params.ot_epsilon
                    )));
                }
                kernel[i * n + j] = k;
                kernel_cost[i * n + j] = k * c;
            }
        }
        Ok(Self {
            rows,
            cols,
            epsilon: params.ot_epsilon,
            max_iter: params.ot_max_iter,
            tol: params.ot_tol,
            coords,
            kernel,
            kernel_cost,
        })
    }

    pub fn cells(&self) -> usize {
        self.coords.len()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    /// Ground-metric distance between two cells.
    pub fn ground_cost(&self, i: usize, j: usize) -> f64 {
        cell_distance(self.coords[i], self.coords[j])
    }

    fn check(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.cells() {
            return Err(Error::InvalidInput(format!(
                "distribution has {} cells, grid has {}",
                p.len(),
                self.cells()
            )));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("distribution has negative or non-finite mass".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "distribution mass {total} is not normalized"
            )));
        }
        Ok(())
    }

    /// Transport cost `⟨P, C⟩` of the entropic plan between `p` and `q`.
    pub fn plan_cost(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        self.plan_costs(&[(p, q)]).pop().expect("one result")
    }

    /// Solves several problems at once, sharing each pass over the kernel.
    /// Every result is bit-identical to solving its pair alone.
    pub fn plan_costs(&self, pairs: &[(&[f64], &[f64])]) -> Vec<Result<f64>> {
        let n = self.cells();
        let mut out: Vec<Option<Result<f64>>> = pairs
            .iter()
            .map(|(p, q)| self.check(p).and_then(|_| self.check(q)).err().map(Err))
            .collect();
        // column-major n×m state; column c belongs to pairs[active[c]]
        let mut active: Vec<usize> = (0..pairs.len()).filter(|&i| out[i].is_none()).collect();
        let m = active.len();
        let mut u = vec![1.0; n * m];
        let mut v = vec![1.0; n * m];
        let mut kv = vec![0.0; n * m];
        let mut ktu = vec![0.0; n * m];
        let mut iterations = 0;
        while !active.is_empty() {
            let m = active.len();
            matmul(&self.kernel, &v[..n * m], &mut kv[..n * m]);
            if iterations > 0 {
                let mut keep = Vec::with_capacity(m);
                for (c, &i) in active.iter().enumerate() {
                    let col = c * n..(c + 1) * n;
                    let residual: f64 = pairs[i]
                        .0
                        .iter()
                        .zip(&u[col.clone()])
                        .zip(&kv[col.clone()])
                        .map(|((pi, ui), ki)| (ui * ki - pi).abs())
                        .sum();
                    if residual < self.tol {
                        out[i] = Some(Ok(self.finish(&u[col.clone()], &v[col])));
                    } else if iterations == self.max_iter {
                        out[i] = Some(Err(Error::SolverDidNotConverge { iterations, residual }));
                    } else {
                        keep.push(c);
                    }
                }
                if keep.len() < m {
                    for (to, &from) in keep.iter().enumerate() {
                        if to != from {
                            for buf in [&mut u, &mut v, &mut kv] {
                                buf.copy_within(from * n..(from + 1) * n, to * n);
                            }
                        }
                    }
                    active = keep.iter().map(|&c| active[c]).collect();
                    if active.is_empty() {
                        break;
                    }
                }
            }
            let m = active.len();
            for (c, &i) in active.iter().enumerate() {
                update(&mut u[c * n..(c + 1) * n], pairs[i].0, &kv[c * n..(c + 1) * n]);
            }
            // the kernel is symmetric, so Kᵀu = Ku
            matmul(&self.kernel, &u[..n * m], &mut ktu[..n * m]);
            for (c, &i) in active.iter().enumerate() {
                update(&mut v[c * n..(c + 1) * n], pairs[i].1, &ktu[c * n..(c + 1) * n]);
            }
            iterations += 1;
        }
        out.into_iter().map(|r| r.expect("every problem finishes")).collect()
    }

    fn finish(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut kc = vec![0.0; v.len()];
        matmul(&self.kernel_cost, v, &mut kc);
        u.iter().zip(&kc).map(|(a, b)| a * b).sum()
    }

    /// Entropic plan cost of a distribution against itself.
    pub fn self_cost(&self, p: &[f64]) -> Result<f64> {
        self.self_costs(&[p]).pop().expect("one result")
    }

    /// Self costs via the symmetric fixed point `u ⊙ Ku = p`, damped by a
    /// geometric mean per step. The plan `diag(u) K diag(u)` is the same one
    /// alternating scaling converges to, reached in far fewer passes. Batched
    /// like [`Self::plan_costs`] with identical per-column arithmetic.
    pub fn self_costs(&self, dists: &[&[f64]]) -> Vec<Result<f64>> {
        let n = self.cells();
        let mut out: Vec<Option<Result<f64>>> = dists.iter().map(|p| self.check(p).err().map(Err)).collect();
        let mut active: Vec<usize> = (0..dists.len()).filter(|&i| out[i].is_none()).collect();
        let mut u = vec![1.0; n * active.len()];
        let mut ku = vec![0.0; n * active.len()];
        let mut iterations = 0;
        while !active.is_empty() {
            let m = active.len();
            matmul(&self.kernel, &u[..n * m], &mut ku[..n * m]);
            let mut keep = Vec::with_capacity(m);
            for (c, &i) in active.iter().enumerate() {
                let col = c * n..(c + 1) * n;
                let residual: f64 = dists[i]
                    .iter()
                    .zip(&u[col.clone()])
                    .zip(&ku[col.clone()])
                    .map(|((pi, ui), ki)| (ui * ki - pi).abs())
                    .sum();
                if residual < self.tol {
                    let uc = &u[col];
                    out[i] = Some(Ok(self.finish(uc, uc)));
                } else if iterations == self.max_iter {
                    out[i] = Some(Err(Error::SolverDidNotConverge { iterations, residual }));
                } else {
                    keep.push(c);
                }
            }
            for (to, &from) in keep.iter().enumerate() {
                if to != from {
                    u.copy_within(from * n..(from + 1) * n, to * n);
                    ku.copy_within(from * n..(from + 1) * n, to * n);
                }
            }
            active = keep.iter().map(|&c| active[c]).collect();
            for (c, &i) in active.iter().enumerate() {
                let col = c * n..(c + 1) * n;
                for ((uu, &pi), &ki) in u[col.clone()].iter_mut().zip(dists[i]).zip(&ku[col]) {
                    *uu = if pi > 0.0 { (*uu * pi / ki).sqrt() } else { 0.0 };
                }
            }
            iterations += 1;
        }
        out.into_iter().map(|r| r.expect("every problem finishes")).collect()
    }

    /// Debiased transport distance `C(p,q) − ½C(p,p) − ½C(q,q)` from
    /// precomputed self costs.
    pub fn debiased_from_parts(cross: f64, self_p: f64, self_q: f64) -> f64 {
        cross - 0.5 * self_p - 0.5 * self_q
    }

    pub fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        let cross = self.plan_cost(p, q)?;
        let sp = self.self_cost(p)?;
        let sq = self.self_cost(q)?;
        Ok(Self::debiased_from_parts(cross, sp, sq))
    }

    /// Framing consistency `1 − dist/√2`, clamped to `[0, 1]`.
    pub fn framing_consistency(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        Ok(framing_from_distance(self.distance(p, q)?))
    }

    /// Centroid of a distribution on the unit square.
    pub fn centroid(&self, p: &[f64]) -> (f64, f64) {
        p.iter()
            .zip(&self.coords)
            .fold((0.0, 0.0), |(x, y), (w, (cx, cy))| (x + w * cx, y + w * cy))
    }

    /// Upper bound on the self cost of `p` that needs no solve: the entropic
    /// plan's cost is at most `ε·H(p)`, plus slack for the inexact marginals.
    pub fn self_cost_bound(&self, p: &[f64]) -> f64 {
        let entropy: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
        self.epsilon * entropy + self.bound_slack()
    }

    /// Slack covering marginal residuals up to `tol` in the bounds above.
    pub fn bound_slack(&self) -> f64 {
        4.0 * self.tol + 1e-12
    }
}

pub fn framing_from_distance(d: f64) -> f64 {
    (1.0 - d.max(0.0) / UNIT_SQUARE_DIAGONAL).clamp(0.0, 1.0)
}

fn cell_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// `out = M·X` for column-major `X` with `M` square and row-major. Each
/// column is a plain dot product per row with a fixed summation order, so a
/// column's result does not depend on how many columns share the call or on
/// which instruction set runs it.
fn matmul(k: &[f64], x: &[f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was just detected
        return unsafe { matmul_avx2(k, x, out) };
    }
    matmul_plain(k, x, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn matmul_avx2(k: &[f64], x: &[f64], out: &mut [f64]) {
    matmul_plain(k, x, out)
}

#[inline(always)]
fn matmul_plain(k: &[f64], x: &[f64], out: &mut [f64]) {
    let n = (k.len() as f64).sqrt() as usize;
    let m = x.len() / n;
    for i in 0..n {
        let row = &k[i * n..(i + 1) * n];
        for c in 0..m {
            out[c * n + i] = dot(row, &x[c * n..(c + 1) * n]);
        }
    }
}

const LANES: usize = 16;

#[inline(always)]
fn dot(row: &[f64], x: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let mut rc = row.chunks_exact(LANES);
    let mut xc = x.chunks_exact(LANES);
    for (r, v) in (&mut rc).zip(&mut xc) {
        for l in 0..LANES {
            acc[l] += r[l] * v[l];
        }
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] += acc[l + width];
        }
    }
    let mut s = acc[0];
    for (r, v) in rc.remainder().iter().zip(xc.remainder()) {
        s += r * v;
    }
    s
}

fn update(scale: &mut [f64], marginal: &[f64], k: &[f64]) {
    for ((s, &w), &kk) in scale.iter_mut().zip(marginal).zip(k) {
        *s = if w > 0.0 { w / kk } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver(n: usize) -> FramingSolver {
        FramingSolver::new(n, n, &MetricParams::default()).unwrap()
    }

    fn blob(s: &FramingSolver, cx: f64, cy: f64, sigma: f64) -> Vec<f64> {
        let raw: Vec<f64> = s
            .coords()
            .iter()
            .map(|(x, y)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp())
            .collect();
        let t: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / t).collect()
    }

    #[test]
    fn identical_distributions_score_one() {
        let s = solver(16);
        let p = blob(&s, 0.3, 0.6, 0.1);
        assert_eq!(s.framing_consistency(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn opposite_corners_score_zero() {
        let s = solver(16);
        let mut p = vec![0.0; 256];
        let mut q = vec![0.0; 256];
        p[0] = 1.0;
        q[255] = 1.0;
        let d = s.distance(&p, &q).unwrap();
        assert!((d - UNIT_SQUARE_DIAGONAL).abs() < 1e-12, "{d}");
        assert!(s.framing_consistency(&p, &q).unwrap() < 1e-12);
    }

    #[test]
    fn symmetric_within_tolerance() {
        let s = solver(16);
        let p = blob(&s, 0.2, 0.7, 0.08);
        let q = blob(&s, 0.8, 0.4, 0.15);
        let a = s.framing_consistency(&p, &q).unwrap();
        let b = s.framing_consistency(&q, &p).unwrap();
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }

    #[test]
    fn batched_solves_match_single_solves_exactly() {
        let s = solver(8);
        let d: Vec<Vec<f64>> = (0..5).map(|i| blob(&s, 0.1 + 0.2 * i as f64, 0.8 - 0.15 * i as f64, 0.1 + 0.03 * i as f64)).collect();
        let pairs: Vec<(&[f64], &[f64])> = (0..5).flat_map(|i| (0..5).map(move |j| (i, j))).map(|(i, j)| (d[i].as_slice(), d[j].as_slice())).collect();
        let batched = s.plan_costs(&pairs);
        for ((p, q), b) in pairs.iter().zip(batched) {
            assert_eq!(s.plan_cost(p, q).unwrap().to_bits(), b.unwrap().to_bits());
        }
    }

    #[test]
    fn symmetric_self_cost_matches_alternating_scaling() {
        let s = solver(8);
        let d: Vec<Vec<f64>> = (0..4).map(|i| blob(&s, 0.2 + 0.2 * i as f64, 0.5, 0.12)).collect();
        let refs: Vec<&[f64]> = d.iter().map(|v| v.as_slice()).collect();
        for (p, b) in refs.iter().zip(s.self_costs(&refs)) {
            let b = b.unwrap();
            assert_eq!(s.self_cost(p).unwrap().to_bits(), b.to_bits());
            assert!((s.plan_cost(p, p).unwrap() - b).abs() < 1e-6);
        }
    }

    #[test]
    fn centroid_bound_holds() {
        let s = solver(12);
        let p = blob(&s, 0.1, 0.2, 0.1);
        let q = blob(&s, 0.7, 0.9, 0.2);
        let (a, b) = (s.centroid(&p), s.centroid(&q));
        let cd = (a.0 - b.0).hypot(a.1 - b.1);
        assert!(s.plan_cost(&p, &q).unwrap() >= cd - s.bound_slack());
        assert!(s.self_cost(&q).unwrap() <= s.self_cost_bound(&q));
    }

    #[test]
    fn rejects_unnormalized_and_reports_non_convergence() {
        let s = solver(4);
        let p = vec![0.1; 16];
        assert!(s.plan_cost(&p, &p).is_err());

        let params = MetricParams {
            ot_max_iter: 1,
            ot_tol: 1e-15,
            ..MetricParams::default()
        };
        let s = FramingSolver::new(4, 4, &params).unwrap();
        let p = blob(&s, 0.2, 0.2, 0.3);
        let q = blob(&s, 0.9, 0.6, 0.2);
        match s.plan_cost(&p, &q) {
            Err(Error::SolverDidNotConverge { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
