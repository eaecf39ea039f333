//! Reference implementations and fixtures shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mashup_core::metrics::FramingSolver;

const MASS_EPS: f64 = 1e-14;

/// Exact earth mover's distance between two distributions on the solver's
/// grid, by successive shortest paths on the transportation network.
pub fn exact_transport(solver: &FramingSolver, p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    let cost = |i: usize, j: usize| solver.ground_cost(i, j);
    let mut supply = p.to_vec();
    let mut demand = q.to_vec();
    let mut flow = vec![0.0; n * n];
    // potentials: supplies 0..n, demands n..2n
    let mut pot = vec![0.0; 2 * n];
    let mut total = 0.0;
    loop {
        let left: f64 = supply.iter().filter(|&&s| s > MASS_EPS).sum();
        if left <= MASS_EPS || demand.iter().all(|&d| d <= MASS_EPS) {
            break;
        }
        let mut dist = vec![f64::INFINITY; 2 * n];
        let mut prev = vec![usize::MAX; 2 * n];
        let mut done = vec![false; 2 * n];
        for i in 0..n {
            if supply[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        loop {
            let u = (0..2 * n).filter(|&v| !done[v] && dist[v].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]));
            let Some(u) = u else { break };
            done[u] = true;
            if u < n {
                for j in 0..n {
                    let v = n + j;
                    let rc = (cost(u, j) + pot[u] - pot[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if flow[i * n + j] > MASS_EPS {
                        let rc = (-cost(i, j) + pot[u] - pot[i]).max(0.0);
                        if dist[u] + rc < dist[i] {
                            dist[i] = dist[u] + rc;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        let target = (0..n)
            .filter(|&j| demand[j] > MASS_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
            .expect("a reachable demand");
        for v in 0..2 * n {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }
        // walk back to find the bottleneck
        let mut path = vec![n + target];
        while prev[*path.last().unwrap()] != usize::MAX {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        let mut amount = supply[path[0]].min(demand[target]);
        for w in path.windows(2) {
            if w[0] >= n {
                amount = amount.min(flow[w[1] * n + (w[0] - n)]);
            }
        }
        for w in path.windows(2) {
            if w[0] < n {
                flow[w[0] * n + (w[1] - n)] += amount;
            } else {
                flow[w[1] * n + (w[0] - n)] -= amount;
            }
        }
        supply[path[0]] -= amount;
        demand[target] -= amount;
        total += amount;
        if amount <= 0.0 {
            break;
        }
    }
    let _ = total;
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| flow[i * n + j] * cost(i, j)).sum()
}

/// Average ranks (1-based) by counting smaller and equal values.
pub fn counted_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation of two rank vectors; `None` when either is constant.
pub fn rank_correlation(rx: &[f64], ry: &[f64]) -> Option<f64> {
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Spearman correlation from first principles.
pub fn naive_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    rank_correlation(&counted_ranks(x), &counted_ranks(y))
}

/// True when two labelings split the items identically.
pub fn same_partition(a: &BTreeMap<u32, usize>, b: &BTreeMap<u32, usize>) -> bool {
    let mut map = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.len() == b.len()
        && a.iter().all(|(id, &x)| {
            let Some(&y) = b.get(id) else { return false };
            *map.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
        })
}

/// All lists of length `n` over `alphabet`, in lexicographic order.
pub fn all_lists(n: usize, alphabet: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|l| alphabet.iter().map(move |&a| [l.clone(), vec![a]].concat()))
            .collect();
    }
    out
}
