use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use symden::decompose::dbscan;
use symden::expr::{random_expression, OperatorSet};
use symden::sr::ParetoFront;
use symden::support::{level_set_support, SupportRegion};
use symden::{seed, Expression, GridSpec};

fn all_ops() -> OperatorSet {
    let mut ops = OperatorSet::standard();
    ops.unary.extend(OperatorSet::trigonometric().unary);
    ops.unary.sort_by_key(|op| op.name());
    ops.unary.dedup();
    ops
}

fn expr_from(seed_value: u64, d: usize, max_size: usize) -> Expression {
    random_expression(d, max_size, &all_ops(), &mut seed::rng(seed_value))
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(10_000))]

    #[test]
    fn print_parse_round_trip(s in any::<u64>(), d in 1usize..5) {
        let e = expr_from(s, d, 30);
        let text = e.to_string();
        let back = Expression::parse(&text, d).unwrap();
        prop_assert_eq!(&back, &e, "{}", text);
        prop_assert_eq!(back.to_string(), text);
    }
}

proptest! {
    #![proptest_config(config(1_000))]

    #[test]
    fn simplify_is_sound_and_never_grows(s in any::<u64>()) {
        // Periodic functions of huge arguments turn rounding into noise, so
        // soundness is checked on the non-periodic operators.
        let e = random_expression(2, 25, &OperatorSet::standard(), &mut seed::rng(s));
        let simple = e.simplify();
        prop_assert!(simple.complexity() <= e.complexity());
        let mut rng = seed::rng(s ^ 0x5eed);
        for _ in 0..100 {
            let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let a = e.evaluate(&p).unwrap();
            let b = simple.evaluate(&p).unwrap();
            if !a.is_finite() {
                continue;
            }
            prop_assert!(b.is_finite(), "{} -> {} at {:?}: {} vs {}", e, simple, p, a, b);
            let tol = 1e-6 * (1.0 + a.abs().max(b.abs()));
            prop_assert!((a - b).abs() <= tol, "{} -> {} at {:?}: {} vs {}", e, simple, p, a, b);
        }
    }

    #[test]
    fn complexity_tracks_subtree_replacement(s in any::<u64>(), t in any::<u64>()) {
        let e = expr_from(s, 2, 20);
        let graft = expr_from(t, 2, 10);
        let idx = (t as usize) % e.complexity();
        let old = e.root().subtree(idx).unwrap().size();
        let grown = e.root().replace_subtree(idx, graft.root().clone());
        prop_assert_eq!(grown.size(), e.complexity() - old + graft.complexity());
        prop_assert!(old <= e.complexity());
    }

    #[test]
    fn batch_matches_pointwise(s in any::<u64>()) {
        let e = expr_from(s, 3, 25);
        let mut rng = seed::rng(s.wrapping_add(1));
        let pts = Array2::from_shape_fn((50, 3), |_| rng.random_range(-4.0..4.0));
        let batch = e.evaluate_batch(pts.view()).unwrap();
        for (row, v) in pts.rows().into_iter().zip(batch) {
            let single = e.evaluate(row.as_slice().unwrap()).unwrap();
            prop_assert!(single.to_bits() == v.to_bits() || (single.is_nan() && v.is_nan()));
        }
    }

    #[test]
    fn pareto_front_stays_monotone(raw in prop::collection::vec((1usize..30, 0.0f64..10.0), 1..200)) {
        let mut front = ParetoFront::new();
        for (k, l) in &raw {
            front.insert(*k, *l, Expression::constant(*l, 1));
        }
        let entries = front.entries();
        for w in entries.windows(2) {
            prop_assert!(w[0].complexity < w[1].complexity);
            prop_assert!(w[0].loss > w[1].loss);
        }
        // Every offered candidate is weakly dominated by some survivor.
        for (k, l) in &raw {
            prop_assert!(entries.iter().any(|e| e.complexity <= *k && e.loss <= *l));
        }
    }
}

fn mask(r: &SupportRegion) -> Vec<bool> {
    match r {
        SupportRegion::GridMask { mask, .. } => mask.clone(),
        other => panic!("expected a grid mask, got {other:?}"),
    }
}

#[test]
fn level_set_shrinks_as_threshold_rises() {
    let grid = GridSpec::uniform(&[-3.0, -3.0], &[3.0, 3.0], 64).unwrap();
    let values: Vec<f64> = grid
        .nodes()
        .rows()
        .into_iter()
        .map(|p| {
            (-(p[0] * p[0] + 2.0 * p[1] * p[1])).exp() + 0.3 * (-(p[0] - 1.5).powi(2) * 4.0).exp()
        })
        .collect();
    let taus = [1e-6, 1e-3, 0.01, 0.1, 0.3, 0.6, 0.9];
    let masks: Vec<Vec<bool>> = taus
        .iter()
        .map(|&t| mask(&level_set_support(&grid, &values, t).unwrap()))
        .collect();
    for pair in masks.windows(2) {
        assert!(pair[1].iter().zip(&pair[0]).all(|(hi, lo)| !hi || *lo));
        assert!(pair[1].iter().filter(|b| **b).count() <= pair[0].iter().filter(|b| **b).count());
    }
}

#[test]
fn dbscan_partition_is_permutation_stable() {
    let mut rng = seed::rng(11);
    let n = 600;
    let pts = Array2::from_shape_fn((n, 2), |(i, _)| {
        let centre = if i % 2 == 0 { -6.0 } else { 6.0 };
        centre + rng.random_range(-1.0..1.0)
    });
    let base = dbscan(pts.view(), 0.6, 5).unwrap();
    for trial in 0..5 {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut seed::rng(100 + trial));
        let shuffled = pts.select(ndarray::Axis(0), &perm);
        let other = dbscan(shuffled.view(), 0.6, 5).unwrap();
        assert_eq!(other.k, base.k);
        // Same partition up to relabeling.
        let mut map = vec![None; base.k];
        for (pos, &orig) in perm.iter().enumerate() {
            match (base.labels[orig], other.labels[pos]) {
                (None, None) => {}
                (Some(a), Some(b)) => match map[a] {
                    None => map[a] = Some(b),
                    Some(m) => assert_eq!(m, b),
                },
                (a, b) => panic!("noise mismatch at {orig}: {a:?} vs {b:?}"),
            }
        }
    }
}
