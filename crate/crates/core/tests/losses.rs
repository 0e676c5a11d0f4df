use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpk_core::env::CriticalChain;
use vpk_core::mdp::{dp_evaluate, ell_tilde, qdagger_loss, zero_one_loss, TabularMdp};

fn random_mdp(rng: &mut ChaCha8Rng) -> TabularMdp {
    let horizon = rng.gen_range(1..=15);
    random_mdp_with_horizon(rng, horizon)
}

fn random_mdp_with_horizon(rng: &mut ChaCha8Rng, horizon: usize) -> TabularMdp {
    let n = rng.gen_range(2..=20);
    let na = rng.gen_range(1..=4);
    let mut transitions = Vec::new();
    for s in 0..n {
        for a in 0..na {
            let fanout = rng.gen_range(1..=3.min(n));
            let targets: Vec<usize> = (0..fanout).map(|_| rng.gen_range(0..n)).collect();
            let raw: Vec<f64> = (0..fanout).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for (t, w) in targets.into_iter().zip(raw) {
                transitions.push((s, a, t, w / total));
            }
        }
    }
    let rewards = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TabularMdp::new(n, na, horizon, rng.gen_range(0..n), &transitions, rewards).unwrap()
}

fn random_policy(rng: &mut ChaCha8Rng, mdp: &TabularMdp) -> Vec<usize> {
    (0..mdp.num_states()).map(|_| rng.gen_range(0..mdp.num_actions())).collect()
}

/// Greedy policy of the first step of backward induction.
fn optimal_policy(mdp: &TabularMdp) -> Vec<usize> {
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut policy = vec![0; n];
    for _ in 0..mdp.horizon() {
        let mut next = vec![0.0; n];
        for s in 0..n {
            let (a, q) = (0..mdp.num_actions())
                .map(|a| (a, mdp.row(s, a).iter().map(|&(s2, p)| p * v[s2]).sum::<f64>()))
                .fold((0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });
            next[s] = mdp.reward(s) + q;
            policy[s] = a;
        }
        v = next;
    }
    policy
}

#[test]
fn performance_difference_identity() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let mdp = random_mdp(&mut rng);
        let oracle = random_policy(&mut rng, &mdp);
        let policy = random_policy(&mut rng, &mdp);
        let s0 = mdp.initial_state();
        let j = dp_evaluate(&mdp, &policy).unwrap().cost_to_go(s0);
        let j_star = dp_evaluate(&mdp, &oracle).unwrap().cost_to_go(s0);
        let loss = qdagger_loss(&mdp, &policy, &oracle).unwrap();
        assert!((mdp.horizon() as f64 * loss - (j - j_star)).abs() <= 1e-9);
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn loss_against_optimal_oracle_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        // stationary policies are only guaranteed optimal for a horizon of one
        let mdp = random_mdp_with_horizon(&mut rng, 1);
        let star = optimal_policy(&mdp);
        let policy = random_policy(&mut rng, &mdp);
        assert!(qdagger_loss(&mdp, &policy, &star).unwrap() >= -1e-12);
    }
}

#[test]
fn critical_chain_values() {
    let start = std::time::Instant::now();
    let c = CriticalChain::new(5, 0.5).unwrap();
    let s0 = c.mdp.initial_state();
    let star = c.optimal_policy();
    let left = c.left_policy();
    let right = c.right_policy();
    let j = |p: &[usize]| dp_evaluate(&c.mdp, p).unwrap().cost_to_go(s0);
    assert!((j(&star) + 18.0).abs() <= 1e-12);
    assert!(j(&left).abs() <= 1e-12);
    assert!((j(&right) + 17.5).abs() <= 1e-12);
    assert!((zero_one_loss(&c.mdp, &left, &star).unwrap() - 1.0 / 18.0).abs() <= 1e-12);
    assert!(zero_one_loss(&c.mdp, &star, &star).unwrap().abs() <= 1e-12);
    let g_right = zero_one_loss(&c.mdp, &right, &star).unwrap();
    assert!((g_right - 5.0 / 18.0).abs() <= 1e-12);
    assert!(g_right >= 0.25);
    assert!((qdagger_loss(&c.mdp, &left, &star).unwrap() - 1.0).abs() <= 1e-12);
    assert!((qdagger_loss(&c.mdp, &right, &star).unwrap() - 0.5 / 18.0).abs() <= 1e-12);
    assert!(qdagger_loss(&c.mdp, &star, &star).unwrap().abs() <= 1e-12);
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn critical_state_has_positive_gap() {
    let c = CriticalChain::new(5, 0.5).unwrap();
    let star = c.optimal_policy();
    let tables = dp_evaluate(&c.mdp, &star).unwrap();
    let s = c.critical_state();
    let t = (0..c.mdp.horizon()).find(|&t| tables.d[t][s] > 0.0).expect("optimal policy visits the critical state");
    assert!(ell_tilde(&c.mdp, &star, t, s).unwrap() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pointwise_loss_bounded_by_gap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng);
        let oracle = random_policy(&mut rng, &mdp);
        let policy = random_policy(&mut rng, &mdp);
        let star = dp_evaluate(&mdp, &oracle).unwrap();
        let own = dp_evaluate(&mdp, &policy).unwrap();
        for t in 0..mdp.horizon() {
            let total: f64 = own.d[t].iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for s in 0..mdp.num_states() {
                let gap = ell_tilde(&mdp, &oracle, t, s).unwrap();
                prop_assert!(gap >= 0.0);
                if mdp.is_choice_free(s) {
                    continue;
                }
                let loss = star.v[t][s] - star.q[t][s][policy[s]];
                let bound = if policy[s] != oracle[s] { gap } else { 0.0 };
                prop_assert!(loss <= bound + 1e-12);
            }
        }
        prop_assert!(own.v[mdp.horizon()].iter().all(|&x| x == 0.0));
    }
}
