//! Tie-aware ranking and Spearman correlation.

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let mean = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = mean;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ over average ranks; `None` when either sequence is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Fraction of `population` below `x`, counting ties as half.
pub fn percentile_rank(x: f64, population: &[f64]) -> f64 {
    if population.is_empty() {
        return 0.5;
    }
    let below = population.iter().filter(|&&v| v < x).count() as f64;
    let equal = population.iter().filter(|&&v| v == x).count() as f64;
    (below + 0.5 * equal) / population.len() as f64
}

/// [`percentile_rank`] against a population sorted ascending.
pub fn percentile_rank_sorted(x: f64, sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.5;
    }
    let below = sorted.partition_point(|&v| v < x) as f64;
    let equal = sorted.partition_point(|&v| v <= x) as f64 - below;
    (below + 0.5 * equal) / sorted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_get_average_rank() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
        assert_eq!(average_ranks(&[2.0, 2.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_hand_value() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn percentile_ranks() {
        let pop = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_rank(0.0, &pop), 0.0);
        assert_eq!(percentile_rank(2.0, &pop), 0.375);
        assert_eq!(percentile_rank(9.0, &pop), 1.0);
        for x in [0.0, 1.0, 2.5, 4.0, 5.0] {
            assert_eq!(percentile_rank(x, &pop), percentile_rank_sorted(x, &pop));
        }
    }
}
