//! Footage summarization: spherical k-means over full-shot embeddings and a
//! caption-source-agnostic per-cluster summary.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::FootageLibrary;
use crate::metrics::cosine;

pub const MAX_ITERATIONS: usize = 100;
const REPRESENTATIVES: usize = 3;

/// `min(24, ⌈√(N/2)⌉)`, at least 1.
pub fn default_cluster_count(shots: usize) -> usize {
    ((shots as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 24)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub size: usize,
    /// Mean full-shot flow magnitude of the members.
    pub energy: f64,
    /// Members nearest the centroid, best first.
    pub representatives: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub k: usize,
    pub seed: u64,
    pub iterations: usize,
    /// shot_id → cluster index.
    pub assignments: BTreeMap<u32, usize>,
    pub centroids: Vec<Vec<f64>>,
    pub stats: Vec<ClusterStats>,
}

impl ClusterSet {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = u32> + '_ {
        self.assignments
            .iter()
            .filter(move |(_, &c)| c == cluster)
            .map(|(&id, _)| id)
    }
}

/// Spherical k-means with k-means++ seeding. Deterministic for a fixed seed.
pub fn cluster_shots(lib: &FootageLibrary, k: usize, seed: u64) -> Result<ClusterSet> {
    let n = lib.shots().len();
    if k < 1 {
        return Err(Error::InvalidInput("cluster count must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidInput(format!("cluster count {k} exceeds shot count {n}")));
    }
    let points = (0..n)
        .map(|i| lib.shot_embedding(&lib.full_window(i)))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(&points, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    loop {
        let next: Vec<usize> = points
            .par_iter()
            .map(|p| nearest_centroid(p, &centroids).0)
            .collect();
        let changed = next != assignment;
        assignment = next;
        if !changed || iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;
        centroids = update_centroids(&points, &assignment, k, &centroids);
        // re-seed empty clusters from the point farthest from its centroid
        let mut sizes = vec![0usize; k];
        assignment.iter().for_each(|&c| sizes[c] += 1);
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| sizes[assignment[i]] > 1)
                .min_by(|&a, &b| {
                    let sa = dot(&points[a], &centroids[assignment[a]]);
                    let sb = dot(&points[b], &centroids[assignment[b]]);
                    sa.total_cmp(&sb).then(a.cmp(&b))
                });
            if let Some(i) = far {
                sizes[assignment[i]] -= 1;
                sizes[c] = 1;
                assignment[i] = c;
                centroids[c] = points[i].clone();
            }
        }
    }
    let centroids = update_centroids(&points, &assignment, k, &centroids);

    let mut stats = Vec::with_capacity(k);
    for c in 0..k {
        let mut members: Vec<(usize, f64)> = (0..n)
            .filter(|&i| assignment[i] == c)
            .map(|i| (i, dot(&points[i], &centroids[c])))
            .collect();
        let energy = if members.is_empty() {
            0.0
        } else {
            members
                .iter()
                .map(|&(i, _)| lib.window_flow_magnitude(&lib.full_window(i)))
                .sum::<f64>()
                / members.len() as f64
        };
        members.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then(lib.shots()[a.0].shot_id.cmp(&lib.shots()[b.0].shot_id))
        });
        stats.push(ClusterStats {
            size: members.len(),
            energy,
            representatives: members
                .iter()
                .take(REPRESENTATIVES)
                .map(|&(i, _)| lib.shots()[i].shot_id)
                .collect(),
        });
    }

    Ok(ClusterSet {
        k,
        seed,
        iterations,
        assignments: lib
            .shots()
            .iter()
            .zip(&assignment)
            .map(|(s, &c)| (s.shot_id, c))
            .collect(),
        centroids,
        stats,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the most similar centroid (lowest index on ties) and its similarity.
fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let s = dot(p, centroid);
        if s > best.1 {
            best = (c, s);
        }
    }
    best
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    // squared chordal distance between unit vectors: 2 − 2cos
    let dist = |i: usize, c: usize| (2.0 - 2.0 * dot(&points[i], &points[c])).max(0.0);
    let mut d: Vec<f64> = (0..n).map(|i| dist(i, chosen[0])).collect();
    while chosen.len() < k {
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &di) in d.iter().enumerate() {
                if di <= 0.0 {
                    continue;
                }
                acc += di;
                if acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d.iter().rposition(|&v| v > 0.0).unwrap())
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, di) in d.iter_mut().enumerate() {
            *di = di.min(dist(i, next));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn update_centroids(
    points: &[Vec<f64>],
    assignment: &[usize],
    k: usize,
    previous: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    for (p, &c) in points.iter().zip(assignment) {
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .enumerate()
        .map(|(c, mut s)| {
            let norm = dot(&s, &s).sqrt();
            if norm > 1e-12 {
                s.iter_mut().for_each(|v| *v /= norm);
                s
            } else {
                previous[c].clone()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    GeneratedLabels,
    ExternalCaptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub index: usize,
    /// Stable identifier used by plans to reference this cluster.
    pub label: String,
    pub caption: String,
    pub centroid: Vec<f64>,
    pub energy: f64,
    pub size: usize,
    pub representatives: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootageSummary {
    pub theme: String,
    pub clusters: Vec<ClusterEntry>,
    pub provenance: Provenance,
}

impl FootageSummary {
    pub fn entry(&self, label: &str) -> Option<&ClusterEntry> {
        self.clusters.iter().find(|c| c.label == label)
    }
}

pub fn cluster_label(index: usize) -> String {
    format!("cluster-{index}")
}

/// One summary entry per cluster; captions come from `captions` (keyed by
/// cluster index) where given, otherwise an automatic label.
pub fn build_summary(
    lib: &FootageLibrary,
    clusters: &ClusterSet,
    captions: Option<&BTreeMap<usize, String>>,
) -> Result<FootageSummary> {
    if let Some(map) = captions {
        if let Some(bad) = map.keys().find(|&&i| i >= clusters.k) {
            return Err(Error::InvalidInput(format!(
                "caption map references unknown cluster index {bad} (k = {})",
                clusters.k
            )));
        }
    }
    let entries: Vec<ClusterEntry> = (0..clusters.k)
        .map(|i| {
            let stats = &clusters.stats[i];
            let caption = captions
                .and_then(|m| m.get(&i).cloned())
                .unwrap_or_else(|| {
                    format!("{} (n={}, energy={:.3})", cluster_label(i), stats.size, stats.energy)
                });
            ClusterEntry {
                index: i,
                label: cluster_label(i),
                caption,
                centroid: clusters.centroids[i].clone(),
                energy: stats.energy,
                size: stats.size,
                representatives: stats.representatives.clone(),
            }
        })
        .collect();
    let provenance = match captions {
        Some(m) if !m.is_empty() => Provenance::ExternalCaptions,
        _ => Provenance::GeneratedLabels,
    };
    Ok(FootageSummary {
        theme: format!(
            "{} shots in {} visual clusters",
            lib.shots().len(),
            clusters.k
        ),
        clusters: entries,
        provenance,
    })
}

/// Cosine between two summary centroids.
pub fn centroid_similarity(a: &ClusterEntry, b: &ClusterEntry) -> f64 {
    cosine(&a.centroid, &b.centroid).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::{gen_footage, CaseSpec, ClusterBlueprint, FootageBlueprint, SaliencyPattern};

    fn blobs(seed: u64, clusters: usize, shots: usize, separation_deg: f64) -> crate::synthbench::GeneratedFootage {
        gen_footage(&CaseSpec {
            seed,
            footage: FootageBlueprint {
                separation_deg,
                clusters: (0..clusters)
                    .map(|i| ClusterBlueprint { shots, motion: i as f64, ..Default::default() })
                    .collect(),
                ..Default::default()
            },
            music: Default::default(),
            planted: None,
        })
        .unwrap()
    }

    fn same_partition(a: &BTreeMap<u32, usize>, b: &BTreeMap<u32, usize>) -> bool {
        let mut map = BTreeMap::new();
        a.iter().all(|(id, &ca)| *map.entry(ca).or_insert(b[id]) == b[id])
            && map.values().collect::<std::collections::BTreeSet<_>>().len() == map.len()
    }

    #[test]
    fn default_k_grows_slowly() {
        assert_eq!(default_cluster_count(1), 1);
        assert_eq!(default_cluster_count(80), 7);
        assert_eq!(default_cluster_count(100_000), 24);
    }

    #[test]
    fn orthogonal_groups_split_exactly() {
        let g = blobs(2, 2, 6, 90.0);
        let c = cluster_shots(&g.library, 2, 0).unwrap();
        assert!(same_partition(&c.assignments, &g.truth));
        for (i, stats) in c.stats.iter().enumerate() {
            assert!(stats.representatives.iter().all(|id| c.assignments[id] == i));
        }
    }

    #[test]
    fn k_equal_to_shots_is_singletons() {
        let g = blobs(3, 2, 3, 90.0);
        let c = cluster_shots(&g.library, 6, 1).unwrap();
        assert!(c.stats.iter().all(|s| s.size == 1));
        assert!(cluster_shots(&g.library, 7, 1).is_err());
        assert!(cluster_shots(&g.library, 0, 1).is_err());
    }

    #[test]
    fn deterministic_and_centroids_are_member_means() {
        let g = blobs(4, 4, 10, 60.0);
        let a = cluster_shots(&g.library, 4, 9).unwrap();
        let b = cluster_shots(&g.library, 4, 9).unwrap();
        assert_eq!(a, b);
        for c in 0..4 {
            let mut mean = vec![0.0; g.library.embed_dim()];
            for id in a.members(c) {
                let e = g.library.shot_embedding(&g.library.full_window(g.library.shot_index(id).unwrap())).unwrap();
                mean.iter_mut().zip(&e).for_each(|(m, x)| *m += x);
            }
            let norm = dot(&mean, &mean).sqrt();
            for (m, x) in mean.iter().zip(&a.centroids[c]) {
                assert!((m / norm - x).abs() < 1e-6);
            }
            assert!((dot(&a.centroids[c], &a.centroids[c]) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn within_cluster_cosine_exceeds_between() {
        let g = blobs(5, 4, 10, 60.0);
        let c = cluster_shots(&g.library, 4, 5).unwrap();
        let emb: BTreeMap<u32, Vec<f64>> = g
            .library
            .shots()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.shot_id, g.library.shot_embedding(&g.library.full_window(i)).unwrap()))
            .collect();
        let (mut within, mut between) = ((0.0, 0), (0.0, 0));
        for (a, ea) in &emb {
            for (b, eb) in &emb {
                if a < b {
                    let acc = if c.assignments[a] == c.assignments[b] { &mut within } else { &mut between };
                    acc.0 += dot(ea, eb);
                    acc.1 += 1;
                }
            }
        }
        assert!(within.0 / within.1 as f64 >= between.0 / between.1 as f64);
    }

    #[test]
    fn captions_merge_and_static_energy() {
        let g = gen_footage(&CaseSpec {
            seed: 1,
            footage: FootageBlueprint {
                clusters: vec![
                    ClusterBlueprint { shots: 4, motion: 0.0, saliency: SaliencyPattern::Static, ..Default::default() },
                    ClusterBlueprint { shots: 4, motion: 3.0, ..Default::default() },
                ],
                ..Default::default()
            },
            music: Default::default(),
            planted: None,
        })
        .unwrap();
        let c = cluster_shots(&g.library, 2, 0).unwrap();
        let auto = build_summary(&g.library, &c, None).unwrap();
        assert_eq!(auto.provenance, Provenance::GeneratedLabels);
        assert!(auto.clusters.iter().all(|e| e.caption.starts_with(&e.label)));
        assert!(auto.clusters.iter().any(|e| e.energy == 0.0));

        let captions = BTreeMap::from([(0, "vehicle chase".to_string())]);
        let s = build_summary(&g.library, &c, Some(&captions)).unwrap();
        assert_eq!(s.provenance, Provenance::ExternalCaptions);
        assert_eq!(s.clusters[0].caption, "vehicle chase");
        assert!(s.clusters[1].caption.starts_with("cluster-1 (n="));

        let bad = BTreeMap::from([(5, "x".to_string())]);
        assert!(build_summary(&g.library, &c, Some(&bad)).is_err());
    }
}
