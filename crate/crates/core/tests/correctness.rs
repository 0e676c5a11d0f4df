use std::time::Instant;

use rand::Rng;

use vpk_core::dtree::{DecisionTree, LeafKind, Node, FORMAT_VERSION};
use vpk_core::env::toypong::STAY;
use vpk_core::env::{CartPoleParams, ToyPongParams};
use vpk_core::geometry::PiecewiseAffineSystem;
use vpk_core::mdp::rng_from_seed;
use vpk_core::verify::correctness::{
    cartpole_bounded_check, contraction_system, encode_smtlib, reach_check, replay_toypong, run_external_solver,
    toypong_closed_loop, toypong_spec, SafetySpec, SolverAnswer, SpecMode, Violation,
};
use vpk_core::verify::repair::short_arena;

#[test]
fn stay_policy_misses_and_replays() {
    let params = ToyPongParams::default();
    let tree = DecisionTree::single_action(5, STAY);
    let system = toypong_closed_loop(&params, &tree).unwrap();
    let spec = toypong_spec(&params, params.bounce_horizon()).unwrap();
    let start = Instant::now();
    let v = reach_check(&system, &spec).unwrap();
    println!("{} pieces, {:?}, {:?}", system.pieces.len(), v.name(), start.elapsed());
    let cex = v.counterexample().expect("stay policy must miss");
    assert_eq!(cex.violation, Violation::Unsafe { set: 0 });
    let last = cex.trace.last().unwrap();
    assert!(last[1] <= 0.0);
    assert!((last[0] - last[4]).abs() > params.paddle_half_length);
    assert!(replay_toypong(&params, &tree, &cex.trace[0], &spec).unwrap());
}

#[test]
fn cartpole_checks() {
    let params = CartPoleParams::default();
    let tree = DecisionTree::from_json(
        r#"{"version":1,"dim":4,"leaf_kind":"discrete","nodes":[
            {"kind":"split","feature":3,"threshold":0.0,"left":1,"right":2},
            {"kind":"action","action":0},{"kind":"action","action":1}]}"#,
    )
    .unwrap();
    let start = Instant::now();
    let v = cartpole_bounded_check(&params, &tree, 0.2094, 10).unwrap();
    println!("{} {} nodes {:?}", v.name(), v.nodes(), start.elapsed());
    let v0 = cartpole_bounded_check(&params, &tree, 0.0, 10).unwrap();
    assert_eq!(v0.counterexample().unwrap().trace.len(), 1);
    let right = DecisionTree::single_action(4, 1);
    let v = cartpole_bounded_check(&params, &right, 0.001, 10).unwrap();
    assert!(v.counterexample().is_some());
}

fn stay_tree() -> DecisionTree {
    DecisionTree::single_action(5, STAY)
}

fn long_paddle_arena() -> ToyPongParams {
    ToyPongParams {
        paddle_half_length: 4.5,
        ..short_arena()
    }
}

#[test]
fn safe_verdict_survives_a_million_steps() {
    let params = long_paddle_arena();
    let tree = stay_tree();
    let spec = toypong_spec(&params, 40).unwrap();
    let v = reach_check(&toypong_closed_loop(&params, &tree).unwrap(), &spec).unwrap();
    assert!(v.is_safe(), "{}", v.to_json());
    let mut rng = rng_from_seed(11);
    let (mut steps, mut misses) = (0usize, 0usize);
    while steps < 1_000_000 {
        let mut s = params.sample_initial(&mut rng).to_vec();
        assert!(spec.initial.contains_f64(&s));
        for _ in 0..spec.t_max {
            let (next, missed) = params.step_state(&s, STAY).unwrap();
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
    assert_eq!(misses, 0);
}

#[test]
fn short_paddle_in_short_arena_misses() {
    let params = short_arena();
    let tree = stay_tree();
    let spec = toypong_spec(&params, 40).unwrap();
    let v = reach_check(&toypong_closed_loop(&params, &tree).unwrap(), &spec).unwrap();
    let cex = v.counterexample().expect("L = 4 misses");
    assert!(replay_toypong(&params, &tree, &cex.trace[0], &spec).unwrap());
}

#[test]
fn corrupted_trace_does_not_replay() {
    let params = ToyPongParams::default();
    let tree = stay_tree();
    let spec = toypong_spec(&params, 40).unwrap();
    let v = reach_check(&toypong_closed_loop(&params, &tree).unwrap(), &spec).unwrap();
    let mut s0 = v.counterexample().unwrap().trace[0].clone();
    assert!(replay_toypong(&params, &tree, &s0, &spec).unwrap());
    // a ball dropping straight onto the paddle is returned
    s0[2] = 0.0;
    s0[4] = s0[0];
    assert!(!replay_toypong(&params, &tree, &s0, &spec).unwrap());
}

fn random_toypong_tree(seed: u64, leaves: usize) -> DecisionTree {
    let mut rng = rng_from_seed(seed);
    let ranges = [(0.0, 30.0), (0.0, 20.0), (-2.0, 2.0), (-2.0, 2.0), (0.0, 30.0)];
    let mut nodes = vec![Node::Action { action: rng.gen_range(0..3) }];
    let mut frontier = vec![0usize];
    while nodes.len() < 2 * leaves - 1 {
        let id = frontier.swap_remove(rng.gen_range(0..frontier.len()));
        let feature = rng.gen_range(0..5);
        let (lo, hi) = ranges[feature];
        let left = nodes.len();
        nodes[id] = Node::Split {
            feature,
            threshold: (rng.gen_range(lo..hi) * 4.0_f64).round() / 4.0,
            left,
            right: left + 1,
        };
        nodes.push(Node::Action { action: rng.gen_range(0..3) });
        nodes.push(Node::Action { action: rng.gen_range(0..3) });
        frontier.extend([left, left + 1]);
    }
    DecisionTree {
        version: FORMAT_VERSION,
        dim: 5,
        leaf_kind: LeafKind::Discrete,
        nodes,
    }
}

#[test]
fn composed_system_matches_simulator() {
    let params = ToyPongParams::default();
    let tree = random_toypong_tree(4, 40);
    tree.validate().unwrap();
    let system = toypong_closed_loop(&params, &tree).unwrap();
    let mut rng = rng_from_seed(5);
    for _ in 0..100_000 {
        let s = vec![
            rng.gen_range(0.0..=30.0),
            rng.gen_range(0.0..=20.0),
            rng.gen_range(-2.0..=2.0),
            rng.gen_range(-2.0..=2.0),
            rng.gen_range(0.0..=30.0),
        ];
        let a = tree.predict_discrete(&s).unwrap();
        let expected = params.step_state(&s, a).unwrap().0.to_vec();
        assert_eq!(system.step_f64(&s), Some(expected), "state {s:?}");
    }
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

fn solver_instances() -> Vec<(&'static str, PiecewiseAffineSystem, SafetySpec, Option<ToyPongParams>)> {
    let mut out = Vec::new();
    for (name, params) in [
        ("stay", ToyPongParams::default()),
        ("short arena", short_arena()),
        ("short arena, long paddle", long_paddle_arena()),
    ] {
        out.push((
            name,
            toypong_closed_loop(&params, &stay_tree()).unwrap(),
            toypong_spec(&params, 40).unwrap(),
            Some(params),
        ));
    }
    let far = SafetySpec {
        initial: vpk_core::geometry::Polytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(),
        invariant_target: Vec::new(),
        unsafe_sets: vec![vpk_core::geometry::Polytope::from_box(&[5.0, f64::NEG_INFINITY], &[f64::INFINITY; 2]).unwrap()],
        t_max: 10,
        mode: SpecMode::Unsafe,
    };
    out.push(("contraction", contraction_system(2).unwrap(), far, None));
    out
}

#[test]
fn external_solver_agrees_with_internal_checker() {
    let Some(cmd) = solver_command() else {
        println!("no SMT solver configured; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    for (name, system, spec, params) in solver_instances() {
        let internal = reach_check(&system, &spec).unwrap();
        let path = dir.path().join(format!("{}.smt2", name.replace([' ', ','], "_")));
        std::fs::write(&path, encode_smtlib(&system, &spec).unwrap()).unwrap();
        let answer = run_external_solver(&cmd, &path, system.dim).unwrap();
        println!("{name}: internal {}, solver {answer:?}", internal.name());
        match answer {
            SolverAnswer::Unsat => assert!(internal.is_safe(), "{name}"),
            SolverAnswer::Sat { initial_state } => {
                assert!(internal.counterexample().is_some(), "{name}");
                if let Some(params) = params {
                    let s0: Vec<f64> = initial_state.unwrap().iter().map(vpk_core::lp::q_to_f64).collect();
                    assert!(replay_toypong(&params, &stay_tree(), &s0, &spec).unwrap(), "{name}");
                }
            }
            SolverAnswer::Unknown(text) => panic!("{name}: solver answered {text}"),
        }
    }
}
