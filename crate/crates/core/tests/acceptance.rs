//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits successfully either way; pass criterion numbers as arguments
//! to run a subset.

use std::cell::OnceCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpk_core::benchmark::{depth_sweep, threshold_table, SweepConfig, DEFAULT_DEPTHS};
use vpk_core::dtree::{DecisionTree, LeafKind, Node, TreeConfig, FORMAT_VERSION};
use vpk_core::env::toypong::STAY;
use vpk_core::env::{CartPole, CartPoleParams, CriticalChain, DuelPong, ToyPong, ToyPongParams};
use vpk_core::extraction::{viper, ExtractionConfig, Weighting};
use vpk_core::geometry::{PiecewiseAffineSystem, Polytope};
use vpk_core::lp::q_to_f64;
use vpk_core::mdp::{dp_evaluate, mean_reward, qdagger_loss, rng_from_seed, zero_one_loss, TabularMdp};
use vpk_core::oracle::{duelpong_expert, toypong_expert, IlqrConfig, IlqrOracle, LqrOracle, ScriptedOracle};
use vpk_core::verify::correctness::{
    cartpole_bounded_check, contraction_system, encode_smtlib, reach_check, replay_toypong, run_external_solver,
    toypong_closed_loop, toypong_spec, SafetySpec, SolverAnswer, SpecMode,
};
use vpk_core::verify::repair::{check_toypong, guard_for_counterexample, repair_toypong, short_arena, Patch};
use vpk_core::verify::robustness::epsilon_robustness;
use vpk_core::verify::stability::{
    certify_region, enumerative_check, leaf_closed_loop, tree_roa, vdot_polynomial, CertifyOptions,
};

type Outcome = Result<(bool, String), String>;

#[derive(Default)]
struct Shared {
    cartpole_tree: OnceCell<Result<DecisionTree, String>>,
    toypong_tree: OnceCell<Result<(DecisionTree, f64, Duration), String>>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn cartpole_tree(shared: &Shared) -> Result<DecisionTree, String> {
    shared
        .cartpole_tree
        .get_or_init(|| {
            let env = CartPole::default();
            let oracle = LqrOracle::standard(env.params.clone()).map_err(err)?;
            let config = ExtractionConfig {
                iterations: 10,
                rollouts_per_iteration: 10,
                tree: TreeConfig { max_depth: 2, ..TreeConfig::default() },
                seed: 1,
                ..ExtractionConfig::default()
            };
            Ok(viper(&env, &oracle, &config).map_err(err)?.best)
        })
        .clone()
}

fn toypong_tree(shared: &Shared) -> Result<(DecisionTree, f64, Duration), String> {
    shared
        .toypong_tree
        .get_or_init(|| {
            let start = Instant::now();
            let env = ToyPong::default();
            let oracle = ScriptedOracle {
                expert: toypong_expert(env.params.clone(), 1.0),
                num_actions: 3,
                n_rollouts: 1,
                horizon: 60,
                seed: 0,
            };
            let config = ExtractionConfig {
                iterations: 80,
                rollouts_per_iteration: 10,
                tree: TreeConfig { max_depth: 16, ..TreeConfig::default() },
                seed: 1,
                ..ExtractionConfig::default()
            };
            let tree = viper(&env, &oracle, &config).map_err(err)?.best;
            let reward = mean_reward(&env, &tree, 50, 777).map_err(err)?;
            Ok((tree, reward, start.elapsed()))
        })
        .clone()
}

fn random_mdp(rng: &mut ChaCha8Rng) -> Result<TabularMdp, String> {
    let n = rng.gen_range(2..=20);
    let na = rng.gen_range(1..=4);
    let horizon = rng.gen_range(1..=15);
    let mut transitions = Vec::new();
    for s in 0..n {
        for a in 0..na {
            let fanout = rng.gen_range(1..=3.min(n));
            let raw: Vec<f64> = (0..fanout).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for w in raw {
                transitions.push((s, a, rng.gen_range(0..n), w / total));
            }
        }
    }
    let rewards = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TabularMdp::new(n, na, horizon, rng.gen_range(0..n), &transitions, rewards).map_err(err)
}

fn criterion_1(_: &Shared) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mdp = random_mdp(&mut rng)?;
        let oracle: Vec<usize> = (0..mdp.num_states()).map(|_| rng.gen_range(0..mdp.num_actions())).collect();
        let policy: Vec<usize> = (0..mdp.num_states()).map(|_| rng.gen_range(0..mdp.num_actions())).collect();
        let s0 = mdp.initial_state();
        let j = dp_evaluate(&mdp, &policy).map_err(err)?.cost_to_go(s0);
        let j_star = dp_evaluate(&mdp, &oracle).map_err(err)?.cost_to_go(s0);
        let loss = qdagger_loss(&mdp, &policy, &oracle).map_err(err)?;
        worst = worst.max((mdp.horizon() as f64 * loss - (j - j_star)).abs());
    }
    let t = start.elapsed();
    Ok((
        worst <= 1e-9 && t < Duration::from_secs(10),
        format!("max |T l - (J - J*)| = {worst:.2e} over 50 MDPs in {t:.2?}"),
    ))
}

fn criterion_2(_: &Shared) -> Outcome {
    let start = Instant::now();
    let c = CriticalChain::new(5, 0.5).map_err(err)?;
    let s0 = c.mdp.initial_state();
    let (star, left, right) = (c.optimal_policy(), c.left_policy(), c.right_policy());
    let j = |p: &[usize]| dp_evaluate(&c.mdp, p).map(|t| t.cost_to_go(s0)).map_err(err);
    let checks = [
        ("J*", j(&star)?, -18.0),
        ("J_left", j(&left)?, 0.0),
        ("J_right", j(&right)?, -17.5),
        ("g_left", zero_one_loss(&c.mdp, &left, &star).map_err(err)?, 1.0 / 18.0),
        ("l_left", qdagger_loss(&c.mdp, &left, &star).map_err(err)?, 1.0),
        ("l_right", qdagger_loss(&c.mdp, &right, &star).map_err(err)?, 0.5 / 18.0),
    ];
    let g_right = zero_one_loss(&c.mdp, &right, &star).map_err(err)?;
    let exact = checks.iter().all(|(_, got, want)| (got - want).abs() <= 1e-12);
    let t = start.elapsed();
    let listed: Vec<String> = checks.iter().map(|(n, got, _)| format!("{n}={got}")).collect();
    Ok((
        exact && g_right >= 0.25 && t < Duration::from_secs(1),
        format!("{}, g_right={g_right:.4} in {t:.2?}", listed.join(", ")),
    ))
}

fn criterion_3(shared: &Shared) -> Outcome {
    let start = Instant::now();
    let tree = cartpole_tree(shared)?;
    let env = CartPole::default();
    let reward = mean_reward(&env, &tree, 100, 12345).map_err(err)?;
    let t = start.elapsed();
    Ok((
        tree.node_count() <= 7 && reward >= 195.0 && t < Duration::from_secs(300),
        format!("{} nodes, mean reward {reward} over 100 rollouts in {t:.2?}", tree.node_count()),
    ))
}

fn criterion_4(shared: &Shared) -> Outcome {
    let (tree, reward, t) = toypong_tree(shared)?;
    Ok((
        reward == 250.0 && t < Duration::from_secs(300),
        format!("{} nodes, mean reward {reward} over 50 rollouts in {t:.2?}", tree.node_count()),
    ))
}

fn solver_command() -> Option<String> {
    if let Ok(cmd) = std::env::var("VPK_SOLVER_CMD") {
        return Some(cmd);
    }
    let found = std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|d| d.join("z3").is_file()))
        .unwrap_or(false);
    found.then(|| "z3 -smt2 {file}".to_string())
}

fn criterion_5(_: &Shared) -> Outcome {
    let start = Instant::now();
    let stay = DecisionTree::single_action(5, STAY);
    let default = ToyPongParams::default();
    let long_paddle = ToyPongParams {
        paddle_half_length: 4.5,
        ..short_arena()
    };
    let mut instances: Vec<(&str, PiecewiseAffineSystem, SafetySpec, Option<ToyPongParams>)> = Vec::new();
    for (name, params) in [("stay", default.clone()), ("short arena", short_arena()), ("short arena L=9/2", long_paddle.clone())] {
        instances.push((
            name,
            toypong_closed_loop(&params, &stay).map_err(err)?,
            toypong_spec(&params, 40).map_err(err)?,
            Some(params),
        ));
    }
    instances.push((
        "contraction",
        contraction_system(2).map_err(err)?,
        SafetySpec {
            initial: Polytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).map_err(err)?,
            invariant_target: Vec::new(),
            unsafe_sets: vec![Polytope::from_box(&[5.0, f64::NEG_INFINITY], &[f64::INFINITY; 2]).map_err(err)?],
            t_max: 10,
            mode: SpecMode::Unsafe,
        },
        None,
    ));

    let mut verdicts = Vec::new();
    for (_, system, spec, _) in &instances {
        verdicts.push(reach_check(system, spec).map_err(err)?);
    }

    let stay_spec = &instances[0].2;
    let part_a = verdicts[0]
        .counterexample()
        .map(|cex| replay_toypong(&default, &stay, &cex.trace[0], stay_spec))
        .transpose()
        .map_err(err)?
        .unwrap_or(false);

    let mut safe_ok = true;
    let mut safe_count = 0;
    for ((_, _, spec, params), v) in instances.iter().zip(&verdicts) {
        let (Some(params), true) = (params, v.is_safe()) else {
            continue;
        };
        safe_count += 1;
        let mut rng = rng_from_seed(11);
        let (mut steps, mut misses) = (0usize, 0usize);
        while steps < 1_000_000 {
            let mut s = params.sample_initial(&mut rng).to_vec();
            for _ in 0..spec.t_max {
                let (next, missed) = params.step_state(&s, STAY).map_err(err)?;
                steps += 1;
                if missed {
                    misses += 1;
                    break;
                }
                s = next.to_vec();
                if s[3] > 0.0 {
                    break;
                }
            }
        }
        safe_ok &= misses == 0;
    }

    let part_c = match solver_command() {
        None => "no solver configured".to_string(),
        Some(cmd) => {
            let dir = tempfile::tempdir().map_err(err)?;
            let mut agree = 0;
            for (k, ((name, system, spec, params), v)) in instances.iter().zip(&verdicts).enumerate() {
                let path = dir.path().join(format!("q{k}.smt2"));
                std::fs::write(&path, encode_smtlib(system, spec).map_err(err)?).map_err(err)?;
                let ok = match run_external_solver(&cmd, &path, system.dim).map_err(err)? {
                    SolverAnswer::Unsat => v.is_safe(),
                    SolverAnswer::Sat { initial_state } => {
                        v.counterexample().is_some()
                            && match (params, initial_state) {
                                (Some(p), Some(s0)) => {
                                    let s0: Vec<f64> = s0.iter().map(q_to_f64).collect();
                                    replay_toypong(p, &stay, &s0, spec).map_err(err)?
                                }
                                _ => true,
                            }
                    }
                    SolverAnswer::Unknown(_) => false,
                };
                if !ok {
                    return Ok((false, format!("external solver disagrees on `{name}`")));
                }
                agree += 1;
            }
            format!("solver agrees on {agree}/{} instances", instances.len())
        }
    };
    let t = start.elapsed();
    Ok((
        part_a && safe_ok && safe_count > 0 && t < Duration::from_secs(600),
        format!(
            "stay counterexample replays: {part_a}; {safe_count} safe verdicts, 1e6 simulated steps each without a miss: {safe_ok}; {part_c}; {t:.2?}"
        ),
    ))
}

fn criterion_6(shared: &Shared) -> Outcome {
    let tree = cartpole_tree(shared)?;
    let start = Instant::now();
    let v = cartpole_bounded_check(&CartPoleParams::default(), &tree, 0.2094, 10).map_err(err)?;
    let t = start.elapsed();
    Ok((
        v.is_safe() && t < Duration::from_secs(60),
        format!("{}-node tree: {} after {} search nodes in {t:.2?}", tree.node_count(), v.name(), v.nodes()),
    ))
}

fn random_tree_2d(rng: &mut ChaCha8Rng, leaves: usize) -> Result<DecisionTree, String> {
    let mut nodes = vec![Node::Action { action: rng.gen_range(0..3) }];
    let mut open = vec![(0usize, [0u32, 0], [100u32, 100])];
    while nodes.len() < 2 * leaves - 1 && !open.is_empty() {
        let k = rng.gen_range(0..open.len());
        let (id, lo, hi) = open.swap_remove(k);
        let splittable: Vec<usize> = (0..2).filter(|&f| hi[f] - lo[f] >= 2).collect();
        if splittable.is_empty() {
            continue;
        }
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
        let (mut left_hi, mut right_lo) = (hi, lo);
        left_hi[f] = cut;
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
    tree.validate().map_err(err)?;
    Ok(tree)
}

fn criterion_7(_: &Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst, mut slowest, mut largest) = (0.0f64, Duration::ZERO, 0);
    for _ in 0..100 {
        let leaves = rng.gen_range(1..=500);
        let tree = random_tree_2d(&mut rng, leaves)?;
        largest = largest.max(tree.node_count());
        let s0 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let start = Instant::now();
        let eps = epsilon_robustness(&tree, &s0).map_err(err)?.epsilon;
        slowest = slowest.max(start.elapsed());
        let own = tree.predict_discrete(&s0).map_err(err)?;
        let mut grid = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let p = [i as f64 * 0.005, j as f64 * 0.005];
                let d = (p[0] - s0[0]).abs().max((p[1] - s0[1]).abs());
                if d < grid && tree.predict_discrete(&p).map_err(err)? != own {
                    grid = d;
                }
            }
        }
        let gap = if grid.is_infinite() && eps.is_infinite() { 0.0 } else { (eps - grid).abs() };
        worst = worst.max(gap);
    }
    Ok((
        worst <= 0.01 && slowest < Duration::from_millis(50) && largest <= 1000,
        format!("max |eps - eps_grid| = {worst:.4} on trees up to {largest} nodes, slowest query {slowest:.2?}"),
    ))
}

fn criterion_8(_: &Shared) -> Outcome {
    let start = Instant::now();
    let env = DuelPong::default();
    let oracle = ScriptedOracle {
        expert: duelpong_expert(0.5),
        num_actions: 3,
        n_rollouts: 1,
        horizon: 40,
        seed: 0,
    };
    let base = ExtractionConfig {
        iterations: 10,
        rollouts_per_iteration: 5,
        eval_rollouts: 5,
        ..ExtractionConfig::default()
    };
    let sweep = SweepConfig {
        depths: DEFAULT_DEPTHS.to_vec(),
        algos: vec![Weighting::Viper, Weighting::Uniform],
        seeds: vec![1, 2, 3, 4, 5],
        eval_rollouts: 5,
        eval_seed: 99,
    };
    let rows = depth_sweep(&env, &oracle, &base, &sweep).map_err(err)?;
    let thresholds: Vec<f64> = (-21..=21).map(f64::from).collect();
    let table = threshold_table(&rows, &thresholds);
    let common: Vec<_> = table.iter().filter(|r| r.is_common()).collect();
    let worse: Vec<String> = common
        .iter()
        .filter(|r| r.viper_median_nodes > r.dagger_median_nodes)
        .map(|r| format!("R={}: {}>{}", r.threshold, r.viper_median_nodes.unwrap(), r.dagger_median_nodes.unwrap()))
        .collect();
    let t = start.elapsed();
    let top = common.last().map_or(String::from("none"), |r| {
        format!(
            "R={} viper {} vs dagger {}",
            r.threshold,
            r.viper_median_nodes.unwrap(),
            r.dagger_median_nodes.unwrap()
        )
    });
    Ok((
        !common.is_empty() && worse.is_empty() && t < Duration::from_secs(1800),
        format!(
            "{} common thresholds, highest {top}; viper larger at [{}]; {} runs in {t:.2?}",
            common.len(),
            worse.join(", "),
            rows.len()
        ),
    ))
}

fn criterion_9(_: &Shared) -> Outcome {
    let params = CartPoleParams::continuous();
    let env = CartPole::new(params.clone()).map_err(err)?;
    let oracle = IlqrOracle::new(params.clone(), IlqrConfig::default(), 0.05).map_err(err)?;
    let config = ExtractionConfig {
        iterations: 10,
        rollouts_per_iteration: 10,
        tree: TreeConfig {
            max_depth: 1,
            leaf_kind: LeafKind::Linear,
            fit_intercept: false,
            origin_margin: 0.22,
            ..TreeConfig::default()
        },
        eval_rollouts: 10,
        seed: 2,
        ..ExtractionConfig::default()
    };
    let tree = viper(&env, &oracle, &config).map_err(err)?.best;
    let f_env = params.taylor(5).map_err(err)?;
    let (closed, _) = leaf_closed_loop(&tree, &f_env).map_err(err)?;
    let start = Instant::now();
    let cert = tree_roa(&tree, &f_env, &CertifyOptions::default()).map_err(err)?;
    let certify_time = start.elapsed();
    let covers = cert.rho > 0.0 && cert.covers_cube(0.01);

    let vdot = vdot_polynomial(&cert.p_matrix(), &closed).map_err(err)?;
    let bad = cert.sample(1_000_000, 99).map_err(err)?.iter().filter(|s| vdot.eval(s) >= 0.0).count();

    let mut diverged = 0;
    for s0 in cert.sample(1000, 7).map_err(err)? {
        let mut s = s0;
        let mut converged = false;
        for _ in 0..2000 {
            let force = tree.predict(&s).map_err(err)?.value().unwrap_or(f64::NAN);
            s = params.step_state(&s, force).map_err(err)?.to_vec();
            if s.iter().all(|x| x.abs() < 1e-3) {
                converged = true;
                break;
            }
        }
        diverged += usize::from(!converged);
    }

    let p = cert.p_matrix();
    let start = Instant::now();
    let bb_ok = certify_region(&p, &closed, cert.rho, &CertifyOptions::default()).map_err(err)?.is_certified();
    let bb = start.elapsed();
    let step = cert.extents().map_err(err)?.iter().copied().fold(f64::INFINITY, f64::min) / 10.0;
    let start = Instant::now();
    let grid = enumerative_check(&p, &closed, cert.rho, step).map_err(err)?;
    let en = start.elapsed();
    let speedup = en.as_secs_f64() / bb.as_secs_f64().max(1e-9);

    Ok((
        tree.node_count() == 3
            && covers
            && bad == 0
            && diverged == 0
            && certify_time < Duration::from_secs(300)
            && bb_ok
            && grid.violations.is_empty()
            && speedup >= 10.0,
        format!(
            "{}-node tree, rho {:.4e}, covers 0.01 cube: {covers}, V-dot >= 0 in {bad}/1e6 samples, {diverged}/1000 trajectories fail to converge, certified in {certify_time:.2?}, enumerative {en:.2?} over {} grid points vs branch-and-bound {bb:.2?} ({speedup:.0}x)",
            tree.node_count(),
            cert.rho,
            grid.points
        ),
    ))
}

fn criterion_10(shared: &Shared) -> Outcome {
    const BUDGET: usize = 1000;
    let start = Instant::now();
    let params = ToyPongParams::default();
    let t_max = params.bounce_horizon();
    let (extracted, _, _) = toypong_tree(shared)?;
    let mut tree = extracted;
    let mut first = check_toypong(&params, &tree, t_max, BUDGET).map_err(err)?;
    let mut source = "extracted tree";
    if first.verdict.counterexample().is_none() {
        tree = DecisionTree::single_action(5, STAY);
        first = check_toypong(&params, &tree, t_max, BUDGET).map_err(err)?;
        source = "stay policy";
    }
    let Some(cex) = first.verdict.counterexample() else {
        return Ok((false, "no toy Pong counterexample to repair".into()));
    };
    let guard = guard_for_counterexample(&params, cex).map_err(err)?;
    let lengthen = Patch::Param {
        name: "paddle_half_length".into(),
        value: 4.5,
    };
    let steps = repair_toypong(&params, &tree, &[guard, lengthen.clone()], t_max, BUDGET).map_err(err)?;
    let steps_ok = first.replays == Some(true)
        && steps[0].nodes_after == steps[0].nodes_before + 2
        && steps
            .iter()
            .all(|s| s.after.replays != Some(false) && (s.verdict_changed() || s.after.replays == Some(true)));
    let deltas: Vec<String> = steps.iter().map(|s| format!("{}: {}", s.patch.describe(), s.delta())).collect();

    let arena = short_arena();
    let known = repair_toypong(
        &arena,
        &DecisionTree::single_action(5, STAY),
        &[lengthen],
        arena.bounce_horizon(),
        100_000,
    )
    .map_err(err)?;
    let known_safe = known[0].after.verdict.is_safe();
    let t = start.elapsed();
    Ok((
        steps_ok && known_safe,
        format!(
            "{source}: {}; short-arena stay policy with L=9/2: {}; {t:.2?}",
            deltas.join("; "),
            known[0].delta()
        ),
    ))
}

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn(&Shared) -> Outcome); 10] = [
        (1, "performance-difference identity", criterion_1),
        (2, "critical chain values", criterion_2),
        (3, "cart-pole extraction", criterion_3),
        (4, "toy Pong extraction", criterion_4),
        (5, "correctness cross-validation", criterion_5),
        (6, "cart-pole bounded correctness", criterion_6),
        (7, "robustness exactness", criterion_7),
        (8, "VIPER vs DAgger tree size", criterion_8),
        (9, "stability certification", criterion_9),
        (10, "repair workflow", criterion_10),
    ];
    let shared = Shared::default();
    let mut passed = 0;
    let mut run = 0;
    for (k, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&k) {
            continue;
        }
        run += 1;
        let outcome = match catch_unwind(AssertUnwindSafe(|| check(&shared))) {
            Ok(Ok(result)) => result,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        passed += usize::from(outcome.0);
        println!(
            "criterion {k:>2} {}: {name}: {}",
            if outcome.0 { "PASS" } else { "FAIL" },
            outcome.1
        );
    }
    println!("acceptance: {passed}/{run} criteria passed");
}
