mod common;

use mashup_core::metrics::{FramingSolver, MetricParams};
use proptest::prelude::*;

use common::exact_transport;

fn params() -> MetricParams {
    MetricParams { ot_max_iter: 5000, ..MetricParams::default() }
}

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// On a line the optimal cost is the L1 distance between the CDFs.
#[test]
fn exact_oracle_matches_line_formula() {
    for n in 2..=8 {
        let solver = FramingSolver::new(1, n, &params()).unwrap();
        let h = 1.0 / (n - 1) as f64;
        let p = normalized((0..n).map(|i| (i * 7 % 5 + 1) as f64).collect());
        let q = normalized((0..n).map(|i| (i * 3 % 4) as f64 + 0.5).collect());
        let (mut f, mut g, mut w1) = (0.0, 0.0, 0.0);
        for i in 0..n - 1 {
            f += p[i];
            g += q[i];
            w1 += (f - g).abs() * h;
        }
        let exact = exact_transport(&solver, &p, &q);
        assert!((exact - w1).abs() < 1e-12, "n={n}: {exact} vs {w1}");
    }
}

#[test]
fn exact_oracle_is_zero_on_equal_inputs_and_moves_point_masses() {
    let solver = FramingSolver::new(3, 3, &params()).unwrap();
    let p = normalized(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    assert!(exact_transport(&solver, &p, &p).abs() < 1e-12);
    let mut a = vec![0.0; 9];
    let mut b = vec![0.0; 9];
    a[0] = 1.0;
    b[8] = 1.0;
    assert!((exact_transport(&solver, &a, &b) - 2f64.sqrt()).abs() < 1e-12);
}

fn grid_and_pair() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..=6, 1usize..=6)
        .prop_filter("at least two cells", |(r, c)| r * c >= 2)
        .prop_flat_map(|(r, c)| {
            let n = r * c;
            let dist = prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], n)
                .prop_filter("some mass", |v| v.iter().sum::<f64>() > 0.0)
                .prop_map(normalized);
            (Just(r), Just(c), dist.clone(), dist)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn debiased_distance_stays_within_entropic_bound((r, c, p, q) in grid_and_pair()) {
        let solver = FramingSolver::new(r, c, &params()).unwrap();
        let bound = 2.0 * solver.epsilon() * (solver.cells() as f64).ln().max(1.0);
        let exact = exact_transport(&solver, &p, &q);
        let d = solver.distance(&p, &q).unwrap();
        prop_assert!((d - exact).abs() <= bound, "{}×{}: {} vs {}", r, c, d, exact);
    }

    #[test]
    fn exact_cost_is_symmetric((r, c, p, q) in grid_and_pair()) {
        let solver = FramingSolver::new(r, c, &params()).unwrap();
        let a = exact_transport(&solver, &p, &q);
        let b = exact_transport(&solver, &q, &p);
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a <= 2f64.sqrt() + 1e-12);
    }
}
