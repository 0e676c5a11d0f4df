use std::time::{Duration, Instant};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpk_core::dtree::{DecisionTree, LeafKind, Node, FORMAT_VERSION};
use vpk_core::verify::robustness::epsilon_robustness;

const GRID_STEP: f64 = 0.005;

/// Random 2-D tree with `leaves` leaves, thresholds on the 0.01 lattice
/// inside each split leaf's box and labels in `0..3`.
fn random_tree(rng: &mut ChaCha8Rng, leaves: usize) -> DecisionTree {
    let mut nodes = vec![Node::Action { action: rng.gen_range(0..3) }];
    let mut open = vec![(0usize, [0u32, 0], [100u32, 100])];
    while nodes.len() < 2 * leaves - 1 && !open.is_empty() {
        let k = rng.gen_range(0..open.len());
        let (id, lo, hi) = open[k];
        let splittable: Vec<usize> = (0..2).filter(|&f| hi[f] - lo[f] >= 2).collect();
        if splittable.is_empty() {
            open.swap_remove(k);
            continue;
        }
        open.swap_remove(k);
        let f = splittable[rng.gen_range(0..splittable.len())];
        let cut = rng.gen_range(lo[f] + 1..hi[f]);
        let left = nodes.len();
        nodes.push(Node::Action { action: rng.gen_range(0..3) });
        nodes.push(Node::Action { action: rng.gen_range(0..3) });
        nodes[id] = Node::Split {
            feature: f,
            threshold: cut as f64 / 100.0,
            left,
            right: left + 1,
        };
        let mut left_hi = hi;
        left_hi[f] = cut;
        let mut right_lo = lo;
        right_lo[f] = cut;
        open.push((left, lo, left_hi));
        open.push((left + 1, right_lo, hi));
    }
    let tree = DecisionTree {
        version: FORMAT_VERSION,
        dim: 2,
        leaf_kind: LeafKind::Discrete,
        nodes,
    };
    tree.validate().unwrap();
    tree
}

/// Smallest L-infinity distance from `s0` to a grid point of `[0, 1]^2`
/// with a different action.
fn grid_epsilon(tree: &DecisionTree, s0: &[f64]) -> f64 {
    let own = tree.predict_discrete(s0).unwrap();
    let n = (1.0 / GRID_STEP).round() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let p = [i as f64 * GRID_STEP, j as f64 * GRID_STEP];
            let d = (p[0] - s0[0]).abs().max((p[1] - s0[1]).abs());
            if d < best && tree.predict_discrete(&p).unwrap() != own {
                best = d;
            }
        }
    }
    best
}

#[test]
fn closed_form_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut slowest = Duration::ZERO;
    let mut largest = 0;
    for _ in 0..100 {
        let leaves = rng.gen_range(1..=500);
        let tree = random_tree(&mut rng, leaves);
        let s0 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let start = Instant::now();
        let result = epsilon_robustness(&tree, &s0).unwrap();
        slowest = slowest.max(start.elapsed());
        largest = largest.max(tree.node_count());
        let grid = grid_epsilon(&tree, &s0);
        if grid.is_infinite() {
            assert!(result.epsilon.is_infinite(), "{result:?}");
        } else {
            assert!((result.epsilon - grid).abs() <= 0.01, "closed form {} grid {grid}", result.epsilon);
        }
    }
    println!("largest tree {largest} nodes, slowest query {slowest:?}");
    assert!(largest <= 1000);
    assert!(slowest < Duration::from_millis(50));
}

#[test]
fn large_tree_query_is_fast() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tree = random_tree(&mut rng, 500);
    assert_eq!(tree.node_count(), 999);
    for _ in 0..20 {
        let s0 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let start = Instant::now();
        epsilon_robustness(&tree, &s0).unwrap();
        assert!(start.elapsed() < Duration::from_millis(50));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn witness_and_ball_agree_with_epsilon(seed in any::<u64>(), leaves in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, leaves);
        let s0 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let own = tree.predict_discrete(&s0).unwrap();
        let result = epsilon_robustness(&tree, &s0).unwrap();
        if let Some(w) = &result.witness_point {
            prop_assert_ne!(tree.predict_discrete(w).unwrap(), own);
            let d = (w[0] - s0[0]).abs().max((w[1] - s0[1]).abs());
            prop_assert!((d - result.epsilon).abs() <= 1e-6);
        } else {
            prop_assert!(result.epsilon.is_infinite());
        }
        let radius = result.epsilon.min(2.0) * 0.999;
        for _ in 0..200 {
            let p = [s0[0] + rng.gen_range(-radius..=radius), s0[1] + rng.gen_range(-radius..=radius)];
            prop_assert_eq!(tree.predict_discrete(&p).unwrap(), own);
        }
    }
}
